use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_oodcf");

fn wine() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/wine_like.csv")
}

fn oodcf(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("OODCF_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text
        .lines()
        .rev()
        .find(|l| l.starts_with('{'))
        .unwrap_or_else(|| panic!("no JSON error record in stderr: {text}"));
    serde_json::from_str(line).unwrap()
}

/// Data lines of a CSV output, without the comment header.
fn data_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn run_with_two_variants_writes_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = wine();
    let o = oodcf(&[
        "run",
        "--data",
        data.to_str().unwrap(),
        "--ood-rule",
        "class_equals:2",
        "--variants",
        "sn,sd",
        "--seeds",
        "0",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_lines(&dir.path().join("eval.csv"));
    assert_eq!(rows[0], "approach,non_dis,dis,l1,auroc,n_seeds");
    assert_eq!(rows.len(), 3);
    let text = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(text.starts_with("# oodcf "));
    assert!(text.contains("# config: {"));
}

#[test]
fn missing_label_column_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = wine();
    let o = oodcf(&[
        "run",
        "--data",
        data.to_str().unwrap(),
        "--label-col",
        "nope",
        "--ood-rule",
        "class_equals:2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let rec = stderr_json(&o);
    assert_eq!(rec["exit_code"], 3);
    assert!(rec["message"].as_str().unwrap().contains("nope"));
}

#[test]
fn latent_dim_over_cap_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("wide.csv");
    let mut text = (0..21)
        .map(|j| format!("f{j}"))
        .collect::<Vec<_>>()
        .join(",")
        + ",class\n";
    for i in 0..90 {
        let row: Vec<String> = (0..21)
            .map(|j| {
                format!(
                    "{:.6}",
                    ((i * 21 + j) as f64 * 12.9898).sin() * 43758.5453 % 1.0
                )
            })
            .collect();
        text += &format!("{},{}\n", row.join(","), i % 3);
    }
    std::fs::write(&csv, text).unwrap();
    let o = oodcf(&[
        "partition",
        "--data",
        csv.to_str().unwrap(),
        "--ood-rule",
        "class_equals:2",
        "--k",
        "21",
        "--seeds",
        "0",
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "CapExceeded");
}

#[test]
fn bad_flags_exit_with_config_code() {
    let o = oodcf(&["run", "--alpha", "-1", "--out", "/nonexistent/never"]);
    assert_eq!(o.status.code(), Some(2));
    let o = oodcf(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn partition_and_score_on_toy() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let common = [
        "--seeds",
        "0",
        "--n-per-class",
        "200",
        "--n-ood",
        "100",
        "--out",
        out,
    ];
    let mut args = vec!["partition"];
    args.extend_from_slice(&common);
    let o = oodcf(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("partition.json")).unwrap())
            .unwrap();
    assert!(json.get("config").is_some());

    let mut args = vec!["score"];
    args.extend_from_slice(&common);
    let o = oodcf(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_lines(&dir.path().join("scores.csv"));
    assert!(rows[0].starts_with("row,split,l_n,l_d,l_total"));
    assert_eq!(rows.len(), 1 + 500);
    assert!(dir.path().join("projection.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let o = oodcf(&[
            "toy",
            "--seeds",
            "0,1",
            "--n-per-class",
            "200",
            "--n-ood",
            "100",
            "--emit-trajectories",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files: Vec<(std::ffi::OsString, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let first = run();
    let second = run();
    assert!(first.len() >= 10);
    assert_eq!(first.len(), second.len());
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        assert!(x == y, "{name:?} differs between runs");
    }
}
