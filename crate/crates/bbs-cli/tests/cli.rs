//! Black-box tests of the `bbs` binary: flag handling, exit codes, file
//! outputs, and determinism under a fixed seed.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bbs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bbs")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bbs(args);
    assert!(out.status.success(), "bbs {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn gen_model(dir: &Path, sigma: &str, seed: &str) -> PathBuf {
    ok(&[
        "gen-synthetic",
        "--layer",
        "gemm:m=16,k=128,n=64",
        "--layer",
        "conv:cout=32,cin=8,kh=3,kw=3,out=49",
        "--sigma",
        sigma,
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]);
    dir.join("manifest.json")
}

fn parse_csv(text: &str) -> Vec<Vec<String>> {
    // outputs quote only names, and generated names never need quoting
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn same_seed_generates_identical_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    gen_model(&a, "20", "42");
    gen_model(&b, "20", "42");
    for file in ["manifest.json", "gemm0.weights.bin", "gemm0.scales.bin", "conv1.weights.bin"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file} differs between runs"
        );
    }
    let c = dir.path().join("c");
    gen_model(&c, "20", "43");
    assert_ne!(
        std::fs::read(a.join("gemm0.weights.bin")).unwrap(),
        std::fs::read(c.join("gemm0.weights.bin")).unwrap()
    );
}

#[test]
fn zero_sigma_means_zero_weights_and_floor_scales() {
    let dir = tempfile::tempdir().unwrap();
    gen_model(dir.path(), "0", "1");
    let w = std::fs::read(dir.path().join("gemm0.weights.bin")).unwrap();
    assert!(w.iter().all(|&b| b == 0));
    let s = std::fs::read(dir.path().join("gemm0.scales.bin")).unwrap();
    for chunk in s.chunks_exact(4) {
        let scale = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        assert_eq!(scale, 1.0 / 127.0); // max-abs floored at one LSB
    }
}

#[test]
fn scales_track_per_channel_max_abs() {
    let dir = tempfile::tempdir().unwrap();
    gen_model(dir.path(), "20", "3");
    let w: Vec<i8> = std::fs::read(dir.path().join("gemm0.weights.bin"))
        .unwrap()
        .into_iter()
        .map(|b| b as i8)
        .collect();
    let s = std::fs::read(dir.path().join("gemm0.scales.bin")).unwrap();
    let scales: Vec<f32> =
        s.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    assert_eq!(scales.len(), 64);
    for (c, &scale) in scales.iter().enumerate() {
        let maxabs = w[c * 128..(c + 1) * 128].iter().map(|v| (*v as i32).abs()).max().unwrap();
        assert_eq!(scale, maxabs.max(1) as f32 / 127.0, "channel {c}");
    }
}

#[test]
fn analyze_reports_the_expected_sparsity_shape() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "5");
    let csv = ok(&["analyze", manifest.to_str().unwrap()]);
    let rows = parse_csv(&csv);
    assert_eq!(rows.len(), 3); // two layers + model aggregate
    for row in &rows {
        let bbs: f64 = row[7].parse().unwrap();
        assert!(bbs >= 0.5, "group-level sparsity below the guaranteed floor: {csv}");
        let two_c: f64 = row[5].parse().unwrap();
        let sm: f64 = row[6].parse().unwrap();
        assert!(sm > two_c, "sign-magnitude must beat two's complement on gaussians");
    }

    // all-zero model: every weight is zero, value sparsity 1.0
    let zdir = tempfile::tempdir().unwrap();
    let manifest = gen_model(zdir.path(), "0", "5");
    let csv = ok(&["analyze", manifest.to_str().unwrap()]);
    for row in parse_csv(&csv) {
        assert_eq!(row[4], "1.000000");
    }
}

#[test]
fn analyze_writes_csv_file_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "6");
    let out = dir.path().join("sparsity.csv");
    ok(&["analyze", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("layer,kind,"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn compress_level_none_is_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "7");
    let out = dir.path().join("none");
    ok(&[
        "compress",
        manifest.to_str().unwrap(),
        "--level",
        "none",
        "--verify",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["compression_ratio"], 1.0);
    assert_eq!(report["effective_bits"], 8.0);
    for layer in report["layers"].as_array().unwrap() {
        assert_eq!(layer["kl_divergence"], 0.0);
        assert_eq!(layer["mse"], 0.0);
    }
}

#[test]
fn compress_all_normal_hits_exact_effective_bits() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "8");
    let out = dir.path().join("c");
    ok(&[
        "compress",
        manifest.to_str().unwrap(),
        "--strategy",
        "zp",
        "--n-pruned",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    // no exempt channels and K a group multiple: (8 - 4) data bits plus
    // 8/32 metadata bits exactly; the conv layer's ragged tail pads higher
    let layers = report["layers"].as_array().unwrap();
    assert_eq!(layers[0]["layer"], "gemm0");
    assert_eq!(layers[0]["effective_bits"], 4.25);
    assert!(layers[1]["effective_bits"].as_f64().unwrap() > 4.25);
    assert!(report["effective_bits"].as_f64().unwrap() > 4.25);

    // exempting channels can only add bits on top of that floor
    let out2 = dir.path().join("c2");
    ok(&[
        "compress",
        manifest.to_str().unwrap(),
        "--level",
        "mod",
        "--out",
        out2.to_str().unwrap(),
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert!(report["effective_bits"].as_f64().unwrap() > 4.25);
}

#[test]
fn compress_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "9");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&[
            "compress",
            manifest.to_str().unwrap(),
            "--level",
            "cons",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    assert_eq!(
        std::fs::read(a.join("model.bbs")).unwrap(),
        std::fs::read(b.join("model.bbs")).unwrap()
    );
    assert_eq!(
        std::fs::read(a.join("plan.json")).unwrap(),
        std::fs::read(b.join("plan.json")).unwrap()
    );
}

#[test]
fn simulate_stripes_alone_reports_unit_speedup() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "10");
    let out = dir.path().join("s");
    ok(&[
        "simulate",
        manifest.to_str().unwrap(),
        "--models",
        "stripes",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(out.join("cycles.csv")).unwrap();
    for row in parse_csv(&csv) {
        assert_eq!(row[8], "1.0000", "stripes vs stripes must be 1.0: {row:?}");
    }
}

#[test]
fn simulate_bitvert_speedup_follows_group_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "11");
    let cdir = dir.path().join("c");
    // all channels pruned at n = 4, so every group costs 4 of 8 cycles
    ok(&[
        "compress",
        manifest.to_str().unwrap(),
        "--strategy",
        "zp",
        "--n-pruned",
        "4",
        "--out",
        cdir.to_str().unwrap(),
    ]);
    let sdir = dir.path().join("s");
    ok(&[
        "simulate",
        manifest.to_str().unwrap(),
        "--container",
        cdir.join("model.bbs").to_str().unwrap(),
        "--models",
        "stripes,bitvert",
        "--out",
        sdir.to_str().unwrap(),
    ]);
    let csv = std::fs::read_to_string(sdir.join("cycles.csv")).unwrap();
    for row in parse_csv(&csv) {
        if row[0] == "bitvert" {
            assert_eq!(row[8], "2.0000", "8 / mean group cycles: {row:?}");
        }
    }
}

#[test]
fn simulate_pragmatic_speedup_decays_with_column_count() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "12");
    let out = dir.path().join("s");
    ok(&[
        "simulate",
        manifest.to_str().unwrap(),
        "--models",
        "pragmatic",
        "--pe-columns",
        "2,32",
        "--out",
        out.to_str().unwrap(),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let rows = summary["rows"].as_array().unwrap();
    let speedup = |cols: u64| {
        rows.iter().find(|r| r["pe_columns"] == cols).unwrap()["speedup_vs_stripes"]
            .as_f64()
            .unwrap()
    };
    assert!(speedup(32) <= speedup(2));
}

#[test]
fn config_errors_exit_2_and_data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "13");
    let m = manifest.to_str().unwrap();
    let out = dir.path().join("x");
    let o = out.to_str().unwrap();

    for args in [
        vec!["compress", m, "--level", "cons", "--strategy", "avg", "--out", o],
        vec!["compress", m, "--out", o],
        vec!["compress", m, "--level", "none", "--beta", "0.1", "--out", o],
        vec!["simulate", m, "--models", "bitvert", "--out", o],
        vec!["simulate", m, "--models", "warpspeed", "--out", o],
        vec!["gen-synthetic", "--layer", "gemm:m=1,k=1", "--out", o],
    ] {
        let res = bbs(&args);
        assert_eq!(
            res.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&res.stderr)
        );
    }

    let missing = dir.path().join("nope.json");
    let res = bbs(&["analyze", missing.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));

    // manifest pointing at a truncated blob
    std::fs::write(dir.path().join("gemm0.weights.bin"), vec![0u8; 10]).unwrap();
    let res = bbs(&["analyze", m]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn corrupt_container_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_model(dir.path(), "20", "14");
    let cdir = dir.path().join("c");
    ok(&[
        "compress",
        manifest.to_str().unwrap(),
        "--level",
        "mod",
        "--out",
        cdir.to_str().unwrap(),
    ]);
    let path = cdir.join("model.bbs");
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes.truncate(mid);
    std::fs::write(&path, bytes).unwrap();
    let res = bbs(&[
        "simulate",
        manifest.to_str().unwrap(),
        "--container",
        path.to_str().unwrap(),
        "--models",
        "bitvert",
        "--out",
        dir.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}
