use std::path::Path;
use std::process::{Command, Output};

use temnn::mesh::write_off;
use temnn::synth::{gen_shape, Post, ShapeKind, ShapeSpec};

fn temnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_temnn")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn small_spec(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("spec.json");
    std::fs::write(&p, r#"{"n_shapes": 3, "n_conditions": 2, "held_out_shapes": 1, "val_fraction": 0.25, "resolution": 3}"#).unwrap();
    p
}

fn gen(dir: &Path, name: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = temnn(&["gen-data", "--spec", s(&small_spec(dir)), "--out", s(&out), "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn only_subdir(dir: &Path) -> std::path::PathBuf {
    let mut dirs: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).filter(|p| p.is_dir()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs.pop().unwrap()
}

#[test]
fn bad_spec_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("spec.json");
    std::fs::write(&p, r#"{"n_shapes": 2, "held_out_shapes": 2}"#).unwrap();
    let o = temnn(&["gen-data", "--spec", s(&p), "--out", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    std::fs::write(&p, r#"{"shapes": 2}"#).unwrap();
    let o = temnn(&["gen-data", "--spec", s(&p), "--out", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn preprocess_plate_and_open_mesh() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ShapeSpec {
        shape: ShapeKind::Plate {
            length: 10.0,
            width: 8.0,
            thickness: 1.25,
            post: Some(Post {
                x: 6.0,
                y: 2.0,
                size: 1.5,
                height: 4.0,
            }),
        },
        resolution: 5,
        gate_anchor: [0.0; 3],
        seed: 0,
    };
    let shape = gen_shape(&spec).unwrap();
    let mesh = dir.path().join("plate.off");
    std::fs::write(&mesh, write_off(&shape.mesh)).unwrap();
    let out = dir.path().join("pre");
    let o = temnn(&["preprocess", "--mesh", s(&mesh), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["frame.json", "features.csv", "invariant_coords.csv"] {
        assert!(out.join(f).is_file());
    }
    let pairing = temnn::thickness::ThicknessPairing::from_csv(&read(&out.join("pairing.csv"))).unwrap();
    let walls = shape.oracle.interior_walls(4.0);
    let hits = walls
        .iter()
        .filter(|&&i| (pairing.nodes[i].thickness - shape.oracle.thickness[i].unwrap()).abs() < 1e-9)
        .count();
    assert!(walls.len() > 20 && hits * 100 >= walls.len() * 95, "{hits}/{}", walls.len());
    assert!(walls.iter().any(|&i| shape.oracle.thickness[i] == Some(1.25)));

    let tri = dir.path().join("tri.off");
    std::fs::write(&tri, "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n").unwrap();
    let o = temnn(&["preprocess", "--mesh", s(&tri), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.lines().filter(|l| l.starts_with("boundary edge ")).count(), 3, "{err}");
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (gen(dir.path(), "a"), gen(dir.path(), "b"));
    for e in std::fs::read_dir(&a).unwrap() {
        let name = e.unwrap().file_name();
        if a.join(&name).is_dir() {
            for f in ["targets.csv", "pairing.csv", "mesh.off"] {
                assert_eq!(read(&a.join(&name).join(f)), read(&b.join(&name).join(f)));
            }
        }
    }

    let train = |out: &Path| {
        let o = temnn(&[
            "train", "--data", s(&a), "--out", s(out), "--epochs", "3", "--layers", "1", "--hidden-dim", "8", "--seed", "4",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        only_subdir(out)
    };
    let (r1, r2) = (train(&dir.path().join("o1")), train(&dir.path().join("o2")));
    assert_eq!(r1.file_name(), r2.file_name());
    for f in ["train_log.csv", "summary.csv", "checkpoint.json", "config.json"] {
        assert_eq!(read(&r1.join(f)), read(&r2.join(f)), "{f}");
    }
    assert_eq!(read(&r1.join("train_log.csv")).lines().count(), 4);

    let ck = r1.join("checkpoint.json");
    for out in [&r1, &r2] {
        let o = temnn(&["eval", "--checkpoint", s(&ck), "--data", s(&a), "--mode", "ood_rotated", "--seed", "7", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let report = read(&r1.join("eval_ood_rotated_test_s7.csv"));
    assert_eq!(report, read(&r2.join("eval_ood_rotated_test_s7.csv")));
    assert!(report.starts_with("sample_id,rmse,mae,r2\n"));

    let mesh = a.join("s000_c00").join("mesh.off");
    let pred = dir.path().join("pred");
    let o = temnn(&["predict", "--checkpoint", s(&ck), "--mesh", s(&mesh), "--condition", "0.5,0.5", "--out", s(&pred)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(&pred.join("prediction.csv")).starts_with("node_id,dx,dy,dz,dx_inv,dy_inv,dz_inv\n"));
    let o = temnn(&["predict", "--checkpoint", s(&ck), "--mesh", s(&mesh), "--condition", "0.5", "--out", s(&pred)]);
    assert_eq!(o.status.code(), Some(4));

    let sweep = |out: &Path| {
        let o = temnn(&[
            "tau-sweep", "--data", s(&a), "--out", s(out), "--epochs", "1", "--layers", "1", "--hidden-dim", "4", "--grid", "0,4",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        read(&only_subdir(out).join("tau_sweep.csv"))
    };
    let csv = sweep(&dir.path().join("w1"));
    assert_eq!(csv, sweep(&dir.path().join("w2")));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn inspect_matches_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d");
    let out = dir.path().join("inspect");
    let o = temnn(&["inspect", "--data", s(&data), "--tau", "4", "--out", s(&out)]);
    assert!(o.status.success());
    let ds = temnn::features::Dataset::load(&data).unwrap();
    let t: Vec<f64> = ds
        .indices(temnn::features::Split::Train)
        .into_iter()
        .flat_map(|i| ds.bundles[i].pairing.valid_thickness())
        .collect();
    let h = temnn::thickness::thickness_histogram(&t, 4.0, 24);
    let summary = read(&out.join("thickness_summary.csv"));
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[3].parse::<f64>().unwrap(), h.fraction_above());
    assert_eq!(read(&out.join("thickness_hist.csv")), h.to_csv());
}

#[test]
fn mismatch_and_nan_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d");
    let o = temnn(&["train", "--data", s(&data), "--out", s(&dir.path().join("o")), "--epochs", "1", "--layers", "1", "--hidden-dim", "4"]);
    assert!(o.status.success());
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"model": {"cond_dim": 5}, "train": {"epochs": 1}}"#).unwrap();
    let o = temnn(&["train", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(4));
    let o = temnn(&[
        "train", "--data", s(&data), "--out", s(&dir.path().join("n")), "--epochs", "3", "--layers", "1", "--hidden-dim", "4", "--lr", "1e300",
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(only_subdir(&dir.path().join("n")).join("checkpoint.json").is_file());
}
