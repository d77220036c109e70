use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fenc::manifest::RunManifest;
use serde_json::Value;

fn fenc(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fenc"))
        .args(args)
        .env("FENC_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL_SWEEP: &str = r#"
kind = "bandwidth-sweep"
seed = 11
output_dir = "sweep"

[bandwidth_sweep]
cutoffs = [1e4]
mean_rate = 1e6
duration = 0.01
points = 8
"#;

#[test]
fn run_then_verify_passes_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/sensitivity-table.toml");
    let out = fenc(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dir = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    assert!(dir.starts_with(tmp.path()));
    assert!(dir.join("manifest.json").is_file());

    let ok = fenc(&["verify", dir.to_str().unwrap()], tmp.path());
    assert_eq!(code(&ok), 0);

    let csv = dir.join("sensitivity.csv");
    let mut bytes = fs::read(&csv).unwrap();
    bytes.push(b'\n');
    fs::write(&csv, bytes).unwrap();
    let bad = fenc(&["verify", dir.to_str().unwrap()], tmp.path());
    assert_eq!(code(&bad), 3);
    let report: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["corrupted"][0], "sensitivity.csv");

    fs::remove_file(&csv).unwrap();
    let gone = fenc(&["verify", dir.to_str().unwrap()], tmp.path());
    assert_eq!(code(&gone), 3);
    let report: Value = serde_json::from_slice(&gone.stdout).unwrap();
    assert_eq!(report["missing"][0], "sensitivity.csv");
}

#[test]
fn configuration_errors_exit_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = write_config(tmp.path(), "empty.toml", "");
    let out = fenc(&["run", empty.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    for f in ["kind", "seed", "output_dir"] {
        assert!(err.contains(f), "{err}");
    }
    let usage = fenc(&["frobnicate"], tmp.path());
    assert_eq!(code(&usage), 1);
}

#[test]
fn runtime_errors_exit_with_runtime_code() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(code(&fenc(&["run", missing.to_str().unwrap()], tmp.path())), 2);
    assert_eq!(code(&fenc(&["verify", tmp.path().join("nodir").to_str().unwrap()], tmp.path())), 2);
    let junk = tmp.path().join("junk.nvts");
    fs::write(&junk, b"definitely not a tag file, but at least forty bytes long").unwrap();
    let out = fenc(&["inspect", junk.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}

#[test]
fn inspect_reports_header_of_a_written_stream() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sweep.toml", SMALL_SWEEP);
    assert_eq!(code(&fenc(&["run", cfg.to_str().unwrap()], tmp.path())), 0);
    let tags = tmp.path().join("sweep/stream_curve0.nvts");
    let out = fenc(&["inspect", tags.to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 0);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["complete"], true);
    assert_eq!(v["duration_s"], 0.01);
    let rate = v["mean_rate"].as_f64().unwrap();
    assert!((rate - 1e6).abs() < 5e4, "{rate}");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = write_config(a.path(), "sweep.toml", SMALL_SWEEP);
    for root in [a.path(), b.path()] {
        assert_eq!(code(&fenc(&["run", cfg.to_str().unwrap()], root)), 0);
    }
    let read = |root: &Path| -> RunManifest {
        serde_json::from_slice(&fs::read(root.join("sweep/manifest.json")).unwrap()).unwrap()
    };
    let (ma, mb) = (read(a.path()), read(b.path()));
    assert_eq!(ma.config_digest, mb.config_digest);
    assert_eq!(ma.files, mb.files);
    for f in &ma.files {
        let x = fs::read(a.path().join("sweep").join(&f.path)).unwrap();
        let y = fs::read(b.path().join("sweep").join(&f.path)).unwrap();
        assert!(x == y, "{} differs", f.path);
    }
}

#[test]
fn under_averaged_snr_run_fails_verification_with_the_measured_exponent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "neg.toml",
        r#"
kind = "snr-scaling"
seed = 3
output_dir = "neg"

[snr_scaling]
times = [3.0, 6.0, 12.0, 30.0]
write_stream = false
"#,
    );
    let run = fenc(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(code(&run), 3, "{}", String::from_utf8_lossy(&run.stderr));
    let out = fenc(&["verify", tmp.path().join("neg").to_str().unwrap()], tmp.path());
    assert_eq!(code(&out), 3);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let check = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "SNR exponent b")
        .expect("exponent check present");
    assert_eq!(check["passed"], false);
    let b: f64 = check["measured"].as_str().unwrap().parse().unwrap();
    assert!((b - 0.5).abs() > 0.05);
}

#[test]
fn failed_run_leaves_no_partial_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "refused.toml",
        r#"
kind = "snr-scaling"
seed = 3
output_dir = "refused"

[snr_scaling]
times = [0.5, 1.0, 2.0, 5.0]
write_stream = false
"#,
    );
    assert_eq!(code(&fenc(&["run", cfg.to_str().unwrap()], tmp.path())), 2);
    let left: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "refused.toml")
        .collect();
    assert!(left.is_empty(), "{left:?}");
}

#[test]
fn bench_reports_throughput() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fenc(&["bench", "--duration", "2", "--seed", "5"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["segments"], 2);
    let tags = v["tags"].as_u64().unwrap() as f64;
    assert!((tags - 144e3).abs() < 5.0 * 144e3f64.sqrt());
}
