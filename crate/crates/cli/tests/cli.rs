//! End-to-end command tests against the compiled binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aircsc::tensor_io::{write_npy, NpyArray};
use ndarray::{Array3, ArrayD, IxDyn};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aircsc"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("aircsc-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_f64(path: &Path, arr: ArrayD<f64>) {
    write_npy(path, &NpyArray::F64(arr)).unwrap();
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn");
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

#[test]
fn dice_perfect_overlap_prints_json() {
    let dir = temp_dir("dice");
    let mask = ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![1.0, 0.0, 1.0, 1.0]).unwrap();
    write_f64(&dir.join("p.npy"), mask.clone());
    write_f64(&dir.join("g.npy"), mask);
    let out = run_ok(bin().args([
        "dice",
        "--pred",
        dir.join("p.npy").to_str().unwrap(),
        "--gt",
        dir.join("g.npy").to_str().unwrap(),
    ]));
    let json = stdout_json(&out);
    assert_eq!(json["dice"], 1.0);
    assert_eq!(json["loss"], 0.0);
    assert_eq!(json["voxels_pred"], 3.0);
    assert_eq!(json["voxels_gt"], 3.0);
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = bin().args(["dice", "--no-such-flag"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert!(out.stdout.is_empty());
}

#[test]
fn shape_mismatch_is_data_error() {
    let dir = temp_dir("dice-bad");
    write_f64(&dir.join("p.npy"), ArrayD::zeros(IxDyn(&[2, 2])));
    write_f64(&dir.join("g.npy"), ArrayD::zeros(IxDyn(&[3, 3])));
    let out = bin()
        .args([
            "dice",
            "--pred",
            dir.join("p.npy").to_str().unwrap(),
            "--gt",
            dir.join("g.npy").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_data_error() {
    let dir = temp_dir("missing");
    let out = bin()
        .args([
            "mip",
            "--volume",
            dir.join("absent.npy").to_str().unwrap(),
            "--axis",
            "axial",
            "--out",
            dir.join("o.npy").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn preprocess_crops_and_writes_manifest() {
    let dir = temp_dir("pre");
    let mut vol = Array3::from_elem((4, 16, 16), -1000.0);
    vol[[1, 8, 8]] = 0.0;
    write_f64(&dir.join("v.npy"), vol.into_dyn());
    let mut mask = Array3::<f64>::zeros((4, 16, 16));
    mask[[1, 8, 8]] = 1.0;
    mask[[2, 9, 9]] = 1.0;
    write_f64(&dir.join("m.npy"), mask.into_dyn());
    let out_dir = dir.join("out");
    let out = run_ok(bin().args([
        "preprocess",
        "--volume",
        dir.join("v.npy").to_str().unwrap(),
        "--clip",
        "-1000,600",
        "--mask",
        dir.join("m.npy").to_str().unwrap(),
        "--margin",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let json = stdout_json(&out);
    assert_eq!(json["crop_box"]["slice"][0], 0);
    assert_eq!(json["crop_box"]["slice"][1], 4);
    assert!(out_dir.join("voi.npy").exists());
    assert!(out_dir.join("voi_mask.npy").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "preprocess");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
}

#[test]
fn extract_patches_writes_stack_and_provenance() {
    let dir = temp_dir("patches");
    let mut paths = Vec::new();
    for i in 0..2 {
        let vol = Array3::from_elem((2, 24, 24), -500.0 + i as f64);
        let p = dir.join(format!("s{i}.npy"));
        write_f64(&p, vol.into_dyn());
        paths.push(p);
        let mask = Array3::from_elem((2, 24, 24), 1.0);
        write_f64(&dir.join(format!("m{i}.npy")), mask.into_dyn());
    }
    let out_dir = dir.join("out");
    let scans = format!("{},{}", paths[0].display(), paths[1].display());
    let masks = format!("{},{}", dir.join("m0.npy").display(), dir.join("m1.npy").display());
    run_ok(bin().args([
        "extract-patches",
        "--scans",
        &scans,
        "--masks",
        &masks,
        "--count",
        "5",
        "--patch-size",
        "8",
        "--min-airway",
        "1",
        "--seed",
        "11",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let stack = aircsc::tensor_io::read_npy(&out_dir.join("patches.npy")).unwrap();
    assert_eq!(stack.shape(), &[5, 8, 8]);
    let prov: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("provenance.json")).unwrap())
            .unwrap();
    assert_eq!(prov["patches"].as_array().unwrap().len(), 5);
    assert_eq!(prov["seed"], 11);
}

#[test]
fn render_writes_grayscale_png() {
    let dir = temp_dir("render");
    let vol = Array3::from_elem((1, 8, 8), -200.0);
    write_f64(&dir.join("v.npy"), vol.into_dyn());
    let png_path = dir.join("slice.png");
    run_ok(bin().args([
        "render",
        "--volume",
        dir.join("v.npy").to_str().unwrap(),
        "--axis",
        "axial",
        "--index",
        "0",
        "--window",
        "-1000,600",
        "--out",
        png_path.to_str().unwrap(),
    ]));
    let bytes = std::fs::read(&png_path).unwrap();
    assert_eq!(&bytes[..8], b"\x89PNG\r\n\x1a\n");
    assert!(dir.join("slice.png.manifest.json").exists());
}

#[test]
fn mip_output_round_trips() {
    let dir = temp_dir("mip");
    let mut vol = Array3::<f64>::zeros((3, 4, 4));
    vol[[1, 2, 2]] = 7.0;
    write_f64(&dir.join("v.npy"), vol.into_dyn());
    let out_path = dir.join("proj.npy");
    run_ok(bin().args([
        "mip",
        "--volume",
        dir.join("v.npy").to_str().unwrap(),
        "--axis",
        "axial",
        "--slab",
        "0,3",
        "--out",
        out_path.to_str().unwrap(),
    ]));
    let proj = aircsc::tensor_io::read_npy(&out_path).unwrap().to_f64();
    assert_eq!(proj.shape(), &[4, 4]);
    assert_eq!(proj[[2, 2]], 7.0);
}

#[test]
fn lambda_flag_respects_explicit_rho0_from_config() {
    let dir = temp_dir("precedence");
    let vol = Array3::from_elem((2, 24, 24), -500.0);
    write_f64(&dir.join("s.npy"), vol.into_dyn());
    write_f64(&dir.join("m.npy"), Array3::from_elem((2, 24, 24), 1.0).into_dyn());
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        r#"{"rho0": 3.0, "patches": 2, "patch_size": 8, "atoms": 2, "atom_size": 3,
            "outer_iters": 1, "max_iter": 40}"#,
    )
    .unwrap();
    let out_dir = dir.join("out");
    run_ok(bin().args([
        "learn-dict",
        "--scans",
        dir.join("s.npy").to_str().unwrap(),
        "--masks",
        dir.join("m.npy").to_str().unwrap(),
        "--config",
        config_path.to_str().unwrap(),
        "--lambda",
        "0.1",
        "--no-prune",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["lambda"], 0.1);
    assert_eq!(manifest["config"]["rho0"], 3.0);
}

#[test]
fn stats_reports_sparsity() {
    let dir = temp_dir("stats");
    let mut maps = Array3::<f64>::zeros((2, 4, 4));
    maps[[0, 1, 1]] = 2.0;
    write_f64(&dir.join("maps.npy"), maps.into_dyn());
    let out = run_ok(bin().args([
        "stats",
        "--maps",
        dir.join("maps.npy").to_str().unwrap(),
    ]));
    let json = stdout_json(&out);
    assert_eq!(json["l1_norm"], 2.0);
    assert_eq!(json["max_abs"], 2.0);
    let zf = json["zero_fraction"].as_f64().unwrap();
    assert!((zf - 31.0 / 32.0).abs() < 1e-12);
}
