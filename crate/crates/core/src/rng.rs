//! Counter-based randomness: every sample owns a ChaCha stream chosen by
//! `(seed, sample, purpose)`, and per-edge coins are a keyed hash of the edge id.
//! Results therefore do not depend on how samples are spread over workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Field = 0,
    Edges = 1,
    Overhang = 2,
    Walk = 3,
}

/// Independent stream for `(seed, sample, purpose)`.
pub fn stream(seed: u64, sample: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample.wrapping_mul(8).wrapping_add(purpose as u64));
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for the per-edge coins of one sample.
pub fn edge_key(seed: u64, sample: u64) -> u64 {
    mix64(mix64(seed ^ 0x5EED_0F_ED6E) ^ mix64(sample.wrapping_add(0xA5A5_A5A5)))
}

/// Uniform in `[0, 1)` attached to `(key, counter)`.
pub fn hash_uniform(key: u64, counter: u64) -> f64 {
    let v = mix64(mix64(key ^ counter.wrapping_mul(0xD1B5_4A32_D192_ED03)) ^ key.rotate_left(17));
    (v >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Two independent standard normals by Box-Muller.
pub fn box_muller<R: Rng>(rng: &mut R) -> (f64, f64) {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3, Purpose::Field), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 3, Purpose::Field), |r, _| Some(r.random())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(stream(7, 4, Purpose::Field), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn hash_uniform_moments() {
        let k = edge_key(1, 2);
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let u = hash_uniform(k, i);
            assert!((0.0..1.0).contains(&u));
            s += u;
            s2 += u * u;
        }
        let m = s / n as f64;
        let v = s2 / n as f64 - m * m;
        assert!((m - 0.5).abs() < 0.003);
        assert!((v - 1.0 / 12.0).abs() < 0.002);
    }

    #[test]
    fn box_muller_moments() {
        let mut r = stream(11, 0, Purpose::Walk);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n / 2 {
            let (a, b) = box_muller(&mut r);
            s += a + b;
            s2 += a * a + b * b;
        }
        assert!((s / n as f64).abs() < 0.02);
        assert!((s2 / n as f64 - 1.0).abs() < 0.02);
    }
}
