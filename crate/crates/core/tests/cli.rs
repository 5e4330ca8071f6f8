use std::path::Path;
use std::process::Command;

fn clr(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_clr"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write_dataset(path: &Path) {
    let mut s = String::from("a,b,y\n");
    for i in 0..30 {
        let a = f64::from(i % 7) - 3.0;
        let b = f64::from((i * 5) % 11) / 4.0;
        let y = 2.0 * a + 1.0 + f64::from(i % 3) * 0.5;
        s += &format!("{a},{b},{y}\n");
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn fit_encode_decode_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_dataset(&d.join("d.csv"));

    let out = clr(&["fit", "d.csv", "--out", "fit.json", "--seed", "4"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("fit.json")).unwrap()).unwrap();
    assert_eq!(report["n_obs"], 30);
    assert_eq!(report["delta_y"], 0.5);

    let out = clr(&["encode", "d.csv", "--model", "fit.json", "--out", "d.clr"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bytes = std::fs::read(d.join("d.clr")).unwrap();
    assert_eq!(summary["bytes"], bytes.len());
    assert_eq!(summary["expected_bytes"], bytes.len());
    assert_eq!(&bytes[..4], b"CLR1");

    let out = clr(
        &[
            "decode",
            "d.clr",
            "--features",
            "d.csv",
            "--target-col",
            "y",
            "--out",
            "back.csv",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let orig = clr::data::load_csv(d.join("d.csv"), None).unwrap();
    let back = clr::data::load_csv(d.join("back.csv"), Some("y")).unwrap();
    assert_eq!(orig.target, back.target);
    assert_eq!(orig.observations, back.observations);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_dataset(&d.join("d.csv"));
    assert_eq!(clr(&["nonsense"], d).status.code(), Some(1));
    assert_eq!(clr(&["fit", "missing.csv"], d).status.code(), Some(2));
    std::fs::write(d.join("bad.json"), r#"{"unknown": 1}"#).unwrap();
    assert_eq!(clr(&["--config", "bad.json", "fit", "d.csv"], d).status.code(), Some(1));
    std::fs::write(d.join("tiny.json"), r#"{"sphere": {"max_cells": 4}}"#).unwrap();
    let out = clr(&["--config", "tiny.json", "encode", "d.csv", "--out", "x.clr"], d);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::write(d.join("const.csv"), "a,y\n1,2\n2,2\n3,2\n").unwrap();
    assert_eq!(clr(&["fit", "const.csv"], d).status.code(), Some(2));
}

#[test]
fn codetables_and_sim_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("grid.json"),
        r#"{"u_max": 50, "sphere_dims": [1, 2, 3], "sphere_steps": 3}"#,
    )
    .unwrap();
    let out = clr(&["codetables", "--grid", "grid.json", "--out", "t"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let u = std::fs::read_to_string(d.join("t/u_lengths.csv")).unwrap();
    assert_eq!(u.lines().count(), 1 + 51);
    assert!(d.join("t/alpha_lengths.csv").exists());
    assert_eq!(
        std::fs::read_to_string(d.join("t/sphere_lengths.csv"))
            .unwrap()
            .lines()
            .count(),
        1 + 9
    );

    let out = clr(
        &[
            "sim",
            "--name",
            "sim3",
            "--replications",
            "3",
            "--seed",
            "2",
            "--out",
            "s",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(d.join("s/table1.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(d.join("s/sim3.json").exists());
}

#[test]
fn generalize_writes_rows_per_method() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_dataset(&d.join("one.csv"));
    let out = clr(&["generalize", "one.csv", "--seed", "1", "--out", "g"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("g/generalize.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
}
