use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qrng_core::bits::{BitBlock, KeepMask, SampleBitSelector};
use qrng_core::formats::{self, Metadata};

fn qrng(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qrng"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run qrng")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn simulate_extract_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&qrng(&["simulate", "--samples", "700000", "--seed", "3", "--out", "raw.bin"], d));
    assert_eq!(fs::metadata(d.join("raw.bin")).unwrap().len(), 700_000);
    let meta = Metadata::read_sidecar(&d.join("raw.bin")).unwrap();
    assert_eq!(meta.get("count"), Some("700000"));
    assert_eq!(meta.get("config_hash").unwrap().len(), 64);
    assert!(meta.get("config").unwrap().contains("rng_seed = 3"));

    let stdout = ok(&qrng(&["extract", "--in", "raw.bin", "--out", "out.bin", "--workers", "2"], d));
    let blocks = 700_000 * 5 / 1520;
    assert!(stdout.contains(&format!("bits_out: {}", blocks * 1024)), "{stdout}");
    assert_eq!(fs::metadata(d.join("out.bin")).unwrap().len(), blocks * 128);
    let manifest = fs::read_to_string(d.join("out.bin.manifest")).unwrap();
    assert!(manifest.contains("seed_provenance: chacha20"), "{manifest}");
    assert!(manifest.contains("config_echo:"));

    let stdout = ok(&qrng(&["analyze", "--in", "out.bin", "--out", "report", "--sub-block-len", "200000", "--block-len", "10000"], d));
    assert!(stdout.contains("suite: pass"), "{stdout}");
    for f in ["report.txt", "tests.csv", "autocorrelation.csv"] {
        assert!(d.join("report").join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(d.join("report/tests.csv")).unwrap();
    assert!(csv.starts_with("test,sub_block,statistic,p_value,status\n"));

    ok(&qrng(&["analyze", "--in", "raw.bin", "--format", "raw", "--max-lag", "20", "--out", "rawrep"], d));
    let rows = fs::read_to_string(d.join("rawrep/autocorrelation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 21);
}

#[test]
fn seed_file_matches_prng_key_and_bits_input_matches_raw() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&qrng(&["simulate", "--samples", "50000", "--out", "raw.bin"], d));
    ok(&qrng(&["gen-seed", "--key", "99", "--out", "seed.bin"], d));
    assert_eq!(fs::metadata(d.join("seed.bin")).unwrap().len(), 318);
    ok(&qrng(&["extract", "--in", "raw.bin", "--seed-file", "seed.bin", "--out", "a.bin"], d));
    ok(&qrng(&["extract", "--in", "raw.bin", "--prng-key", "99", "--out", "b.bin"], d));
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("b.bin")).unwrap());

    let raw = formats::read_raw_samples(&d.join("raw.bin")).unwrap();
    let mut bits = BitBlock::default();
    SampleBitSelector::new(KeepMask::DEFAULT).append(&raw, &mut bits);
    formats::write_packed_bits(&d.join("sel.bin"), &bits).unwrap();
    ok(&qrng(&["extract", "--in", "sel.bin", "--format", "bits", "--prng-key", "99", "--out", "c.bin"], d));
    assert_eq!(fs::read(d.join("a.bin")).unwrap(), fs::read(d.join("c.bin")).unwrap());
}

#[test]
fn partial_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), "workers = 2\n[sim]\nrng_seed = 11\n[extractor]\nm = 1000\nn = 1520\nk = 80\nepsilon_exponent = 20\nseed = { prng = 5 }\n").unwrap();
    ok(&qrng(&["simulate", "--samples", "10000", "--config", "run.toml", "--out", "raw.bin"], d));
    let meta = Metadata::read_sidecar(&d.join("raw.bin")).unwrap();
    assert!(meta.get("config").unwrap().contains("rng_seed = 11"));
    let stdout = ok(&qrng(&["extract", "--in", "raw.bin", "--config", "run.toml", "--out", "o.bin"], d));
    assert!(stdout.contains("m: 1000"), "{stdout}");
    assert!(stdout.contains("workers: 2"), "{stdout}");
}

#[test]
fn budget_report_and_gate() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(&qrng(&["budget"], d));
    for key in ["gamma: 6.87", "sigma_q:", "h_min_sample:", "kept_bits: 5", "h_min_bit:", "n: 1520", "m: 1024", "epsilon_exponent: 20", "efficiency:"] {
        assert!(stdout.contains(key), "missing {key}\n{stdout}");
    }
    fs::write(d.join("greedy.toml"), "[extractor]\nm = 1100\nn = 1520\nk = 80\nepsilon_exponent = 20\nseed = { prng = 1 }\n").unwrap();
    let out = qrng(&["budget", "--config", "greedy.toml"], d);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("qrng budget:") && err.contains("1100"), "{err}");
    let out = qrng(&["simulate", "--samples", "1000", "--out", "r.bin"], d);
    ok(&out);
    let out = qrng(&["extract", "--in", "r.bin", "--config", "greedy.toml", "--out", "o.bin"], d);
    assert!(!out.status.success());
}

#[test]
fn stabilize_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("dist.csv"), "step,delta\n100,0.3\n").unwrap();
    let stdout = ok(&qrng(&["stabilize", "--steps", "600", "--disturbance", "dist.csv", "--out", "trace.csv"], d));
    assert!(stdout.contains("rms_phase_error:"));
    let trace = fs::read_to_string(d.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("step,measurement,command,phase_error"));
    assert_eq!(lines.count(), 600);
    let last: f64 = trace.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert!(last.abs() < 0.01);
}

#[test]
fn errors_are_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = qrng(&["extract", "--in", "missing.bin", "--out", "o.bin"], d);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("qrng extract: read raw samples:"), "{err}");

    fs::write(d.join("bad.toml"), "bogus = 1\n").unwrap();
    let out = qrng(&["budget", "--config", "bad.toml"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("qrng budget: invalid configuration"));

    let out = qrng(&["analyze", "--in", "missing.bin", "--out", "r"], d);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("qrng analyze:"));
}

#[test]
fn bench_reports_reference_lines() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&qrng(&["bench", "--seconds", "0.3", "--rate-cap", "259.5e6"], dir.path()));
    for key in ["extractor_out_bps:", "end_to_end_in_bps:", "theoretical_ratio: 0.673684", "delivered_bps:", "reference_fpga_output_ceiling_bps: 3.3684e9", "reference_usb_bps: 2.5950e8"] {
        assert!(stdout.contains(key), "missing {key}\n{stdout}");
    }
}
