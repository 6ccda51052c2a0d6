use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use slabgff_cli::manifest::RunManifest;

fn slabgff(args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_slabgff"));
    c.args(args).env_remove("SLABGFF_OUT");
    for (k, v) in env {
        c.env(k, v);
    }
    c.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("x");
    assert_eq!(code(&slabgff(&["plateau", "--N", "64", "--out", p(&out)], &[])), 0);
    assert_eq!(code(&slabgff(&["plateau", "--no-such-flag"], &[])), 1);
    assert_eq!(code(&slabgff(&["frobnicate"], &[])), 1);
    assert_eq!(code(&slabgff(&["--help"], &[])), 0);
    assert_eq!(code(&slabgff(&["cap", "--N", "8", "--h", "2", "--out", p(&out)], &[])), 2);
    assert_eq!(code(&slabgff(&["green", "--N", "0", "--h", "2", "--out", p(&out)], &[])), 2);
    assert_eq!(code(&slabgff(&["onearm", "--N", "16", "--h", "2", "--R", "8", "--M", "32", "--out", p(&out)], &[])), 2);
    assert_eq!(slabgff_cli::exit_code(&slabgff_core::Error::Numeric("x".into())), 3);
    assert_eq!(code(&slabgff(&["validate", "bessel", "--out", p(&out)], &[])), 0);
}

#[test]
fn manifest_round_trip_and_csv_header() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("g");
    let o = slabgff(&["green", "--N", "8", "--h", "2", "--probes", "5", "--seed", "3", "--out", p(&out)], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::from_json(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.command, "green");
    assert_eq!(m.master_seed, 3);
    assert_eq!(m.params["N"], "8");
    assert_eq!(m.params["probes"], "5");
    assert_eq!(m.run_id, slabgff_cli::manifest::run_id("green", &m.params, 3));
    assert!(m.finished >= m.started);
    m.verify_outputs().unwrap();
    let again = RunManifest::from_json(&m.to_json()).unwrap();
    assert_eq!(again.to_json(), m.to_json());

    let csv = fs::read_to_string(out.join("green.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), format!("# run_id {}", m.run_id));
    assert!(lines.next().unwrap().starts_with("N,h,y1,y2,z,g3,g2,g,g_oracle,rel_err"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        let rel: f64 = r.rsplit(',').next().unwrap().parse().unwrap();
        assert!(rel < 1e-6, "{r}");
    }
}

#[test]
fn onearm_is_thread_independent() {
    let d = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let out = d.path().join(name);
        let args = ["onearm", "--N", "8", "--h", "2", "--R", "8", "--M", "64", "--samples", "60", "--seed", "5"];
        let o = slabgff(&[&args[..], &["--threads", threads, "--out", p(&out)]].concat(), &[]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(out.join("onearm.json")).unwrap()
    };
    let a = run("1", "t1");
    let b = run("3", "t3");
    assert_eq!(a, b);
    // Both runs appended to the shared ledger next to the run directories.
    let ledger = fs::read_to_string(d.path().join("onearm_ledger.csv")).unwrap();
    assert_eq!(ledger.lines().filter(|l| l.starts_with("# run_id")).count(), 2);
    assert_eq!(ledger.lines().filter(|l| l.starts_with("N,h,R")).count(), 1);
}

#[test]
fn config_file_and_flag_precedence() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.cfg");
    fs::write(&cfg, "# plateau settings\nN = 4096\nhs = 1,16\nseed = 9\n").unwrap();
    let out = d.path().join("a");
    let o = slabgff(&["plateau", "--config", p(&cfg), "--out", p(&out)], &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = RunManifest::from_json(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.params["N"], "4096");
    assert_eq!(m.master_seed, 9);
    let out = d.path().join("b");
    let o = slabgff(&["plateau", "--config", p(&cfg), "--N", "64", "--out", p(&out)], &[]);
    assert_eq!(code(&o), 0);
    let m = RunManifest::from_json(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.params["N"], "64");
    let rows = fs::read_to_string(out.join("plateau.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);

    fs::write(&cfg, "N 64\n").unwrap();
    assert_eq!(code(&slabgff(&["plateau", "--config", p(&cfg)], &[])), 1);
}

#[test]
fn default_output_under_env_root() {
    let d = tempfile::tempdir().unwrap();
    let o = slabgff(&["bands", "--N", "1024", "--h", "1,4", "--R", "16", "--seed", "2"], &[("SLABGFF_OUT", d.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dirs: Vec<_> = fs::read_dir(d.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert_eq!(dirs.len(), 1);
    assert!(dirs[0].starts_with("bands-"));
    let id = &dirs[0]["bands-".len()..];
    assert_eq!(id.len(), 16);
    let bands: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join(&dirs[0]).join("bands.json")).unwrap()).unwrap();
    assert_eq!(bands["run_id"], *id);
    assert_eq!(bands["configurations"].as_array().unwrap().len(), 2);
}

#[test]
fn cap_methods_agree() {
    let d = tempfile::tempdir().unwrap();
    let cap = |method: &str| {
        let out = d.path().join(method);
        let o = slabgff(
            &["cap", "--N", "8", "--h", "2", "--shape", "ball", "--R", "2", "--method", method, "--box-radius", "64", "--measure", "--out", p(&out)],
            &[],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("cap.json")).unwrap()).unwrap();
        assert!(out.join("measure.csv").exists());
        v["capacity"].as_f64().unwrap()
    };
    let g = cap("gram");
    assert!((cap("hitting") - g).abs() < 1e-6 * g);
    assert!((cap("variational") - g).abs() < 1e-5 * g);
}
