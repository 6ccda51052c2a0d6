//! Random walks, Green's functions, capacities and free-field percolation on
//! the slab `Z^2 x (Z/hZ)` with killing rate `N^-2`.

pub mod bessel;
pub mod capacity;
pub mod error;
pub mod gff;
pub mod greens;
pub mod lattice;
pub mod linalg;
pub mod predictions;
pub mod quad;
pub mod rng;
pub mod slab;

pub use error::{Error, Result};
pub use slab::{Region, SlabParams, SlabPoint};
