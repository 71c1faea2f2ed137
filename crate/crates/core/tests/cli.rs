mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

use common::load_fixture;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resochain"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

/// Data rows of a CSV file, after the header comment and the column header.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# resochain "));
    let body = lines.collect::<Vec<_>>().join("\n");
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn scan_standard_blocks() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "scan.toml",
        "[library]\npreset = \"standard\"\n[scan]\nlambda_max = 4.0\ngrid = 401\n",
    );
    let out = run(&["scan", &cfg], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = csv_rows(&dir.path().join("bands.csv"));
    let bands: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r[2] == "InSpectrum")
        .map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap()))
        .collect();
    let mut edges: Vec<f64> = Vec::new();
    for (lo, hi) in bands {
        if edges.last().is_some_and(|&e| (e - lo).abs() < 1e-12) {
            edges.pop();
        } else {
            edges.push(lo);
        }
        edges.push(hi);
    }
    assert_eq!(edges.len(), 4, "{edges:?}");
    for (e, w) in edges.iter().zip([0.0, 1.0, 2.0, 3.0]) {
        assert!((e - w).abs() <= 1e-10);
    }
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("bands.json")).unwrap()).unwrap();
    assert_eq!(json["meta"]["tool"], "resochain");
    assert_eq!(json["meta"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn minimal_grid_emits_both_verdicts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "scan.toml",
        "[library]\npreset = \"standard\"\n[scan]\ngrid = 2\n",
    );
    assert_eq!(run(&["scan", &cfg], dir.path()).status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("bands.csv"));
    assert!(rows.iter().any(|r| r[2] == "InSpectrum"));
    assert!(rows.iter().any(|r| r[2] == "CertifiedGap"));
}

#[test]
fn config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "[library\npreset = ");
    let out = run(&["scan", &bad], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));

    let missing = dir.path().join("nope.toml");
    assert_eq!(
        run(&["scan", missing.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(2)
    );

    let unknown = write_config(dir.path(), "u.toml", "[library]\npreset = \"trimer\"\n");
    assert_eq!(run(&["scan", &unknown], dir.path()).status.code(), Some(2));

    let invalid = write_config(
        dir.path(),
        "v.toml",
        "[library]\nblocks = [[{ length = -1.0, spacing = 1.0, wave_speed = 1.0 }]]\n",
    );
    assert_eq!(run(&["scan", &invalid], dir.path()).status.code(), Some(2));

    let range = write_config(
        dir.path(),
        "r.toml",
        "[library]\npreset = \"standard\"\n[scan]\nlambda_min = 5.0\nlambda_max = 1.0\n",
    );
    assert_eq!(run(&["scan", &range], dir.path()).status.code(), Some(2));
}

#[test]
fn spectrum_runs_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let text = "[library]\npreset = \"standard\"\n[scan]\ngrid = 401\n[spectrum]\nblocks = 1000\nseeds = [2, 1]\n";
    let cfg = write_config(dir.path(), "s.toml", text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["spectrum", &cfg], &a).status.code(), Some(0));
    assert_eq!(
        run(&["spectrum", &cfg, "--threads", "2"], &b).status.code(),
        Some(0)
    );
    for f in ["spectrum.csv", "spectrum.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let rows = csv_rows(&a.join("spectrum.csv"));
    let seed1 = rows.iter().filter(|r| r[0] == "1").count();
    assert!((1300..1700).contains(&seed1), "{seed1}");
    // ordered by seed
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows.last().unwrap()[0], "2");
    assert!(rows.iter().all(|r| r[1] == "1000" && r[5] == "false"));
}

#[test]
fn empty_spectrum_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        "[library]\npreset = \"standard\"\n[spectrum]\nblocks = 0\n",
    );
    assert_eq!(run(&["spectrum", &cfg], dir.path()).status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(
        text.lines().nth(1).unwrap(),
        "seed,M,index,lambda,distance_to_sigma,flag"
    );
}

#[test]
fn edge_standard_is_empty() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.toml",
        "[library]\npreset = \"standard\"\n[scan]\ngrid = 401\n[edge]\nsequence = { blocks = 200, seed = 3 }\ngrid = 100\nsides = [\"left\", \"right\"]\n",
    );
    let out = run(&["edge", &cfg], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("edge_modes.json")).unwrap()).unwrap();
    assert_eq!(json["modes"].as_array().unwrap().len(), 0);
    assert_eq!(json["gaps"].as_array().unwrap().len(), 2);
}

#[test]
fn edge_fixture_has_a_mode() {
    let dir = TempDir::new().unwrap();
    let fx = load_fixture().candidate;
    fs::write(
        dir.path().join("lib.json"),
        serde_json::to_string(&fx.library).unwrap(),
    )
    .unwrap();
    let indices: Vec<String> = fx.sequence.indices.iter().map(|d| d.to_string()).collect();
    let text = format!(
        "[library]\npath = \"lib.json\"\n[edge]\nsequence = {{ indices = [{}] }}\ngaps = [[{}, {}]]\ngrid = 400\n",
        indices.join(", "),
        fx.gap.0,
        fx.gap.1
    );
    let cfg = write_config(dir.path(), "e.toml", &text);
    let out = run(&["edge", &cfg, "-v"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("edge_modes.json")).unwrap()).unwrap();
    let modes = json["modes"].as_array().unwrap();
    assert!(!modes.is_empty());
    for m in modes {
        assert!(m["eigen_residual"].as_f64().unwrap() <= 1e-6);
        assert!(m["decay_rate"].as_f64().unwrap() < 1.0);
        let rows = csv_rows(&dir.path().join(m["eigenvector_file"].as_str().unwrap()));
        assert!(rows.len() >= 400);
    }
}

#[test]
fn edge_gap_outside_certified_region_exits_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.toml",
        "[library]\npreset = \"standard\"\n[edge]\nsequence = { blocks = 50, seed = 1 }\ngaps = [[0.5, 1.5]]\ngrid = 20\n",
    );
    let out = run(&["edge", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_1() {
    // Next to the edge of the dimer band the stable direction of a pure dimer
    // chain contracts too slowly to settle.
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "e.toml",
        "[library]\npreset = \"standard\"\n[edge]\nsequence = { indices = [1] }\ngaps = [[1.999999998, 2.0]]\ngrid = 1\n",
    );
    let out = run(&["edge", &cfg], dir.path());
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn sample_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.toml",
        "[library]\npreset = \"standard\"\n[sample]\nsequence = { depth = 4 }\n",
    );
    assert_eq!(run(&["sample", &cfg], dir.path()).status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("sequence.csv"));
    assert_eq!(rows.len(), 19);
    let json: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("sample.json")).unwrap()).unwrap();
    assert_eq!(
        json["sequence"]["provenance"]["pseudo_ergodic_word"]["depth"],
        4
    );
    assert_eq!(
        json["transition_matrix"]["rows"].as_array().unwrap().len(),
        3
    );
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            resochain::cli::load_config(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 4);
}
