mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use common::scalar;
use ndarray::s;
use voxaug::nifti::{read_image, write_image};
use voxaug::{AffineMatrix, Image, ImageKind};

fn voxaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voxaug")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn input_volume(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("in.nii.gz");
    let a = AffineMatrix::from_rows([
        [1.5, 0.0, 0.0, -10.0],
        [0.0, 1.0, 0.0, 3.0],
        [0.0, 0.0, 2.0, 0.5],
        [0.0, 0.0, 0.0, 1.0],
    ])
    .unwrap();
    write_image(&Image::scalar(common::blob([12, 11, 10], 3.0), a), &path).unwrap();
    path
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const RANDOM_PIPELINE: &str = r#"{"type":"compose","children":[
    {"type":"leaf","name":"RandomAffine"},
    {"type":"leaf","name":"RandomNoise"},
    {"type":"leaf","name":"RandomBiasField"}]}"#;

#[test]
fn identity_pipeline_copies_the_voxels() {
    let dir = tempfile::tempdir().unwrap();
    let input = input_volume(dir.path());
    let pipe = write(dir.path(), "p.json", r#"{"type":"leaf","name":"Identity"}"#);
    let out = dir.path().join("out.nii");
    let run = voxaug(&["apply", p(&input), p(&out), "--pipeline", p(&pipe)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stderr).contains("seed: 0"));
    let a = read_image(&input, ImageKind::Scalar).unwrap();
    let b = read_image(&out, ImageKind::Scalar).unwrap();
    assert_eq!(scalar(&a), scalar(&b));
    assert!(a.affine().approx_eq(b.affine(), 1e-6));
}

#[test]
fn same_seed_gives_identical_files_and_history_replays() {
    let dir = tempfile::tempdir().unwrap();
    let input = input_volume(dir.path());
    let pipe = write(dir.path(), "p.json", RANDOM_PIPELINE);
    let (a, b, c) = (dir.path().join("a.nii"), dir.path().join("b.nii"), dir.path().join("c.nii"));
    let hist = dir.path().join("h.json");
    for (out, seed) in [(&a, "7"), (&b, "7")] {
        let run = voxaug(&["apply", p(&input), p(out), "--pipeline", p(&pipe), "--seed", seed, "--history-out", p(&hist)]);
        assert!(run.status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    // The history is itself a pipeline; replaying it with any seed reproduces the output.
    let run = voxaug(&["apply", p(&input), p(&c), "--pipeline", p(&hist), "--seed", "999"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());

    let d = dir.path().join("d.nii");
    assert!(voxaug(&["apply", p(&input), p(&d), "--pipeline", p(&pipe), "--seed", "8"]).status.success());
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&d).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = input_volume(dir.path());
    let out = dir.path().join("o.nii");
    let malformed = write(dir.path(), "bad.json", "{\"type\": \"compose\", ");
    let unknown = write(dir.path(), "unk.json", r#"{"type":"leaf","name":"Sharpen"}"#);
    let too_much = write(dir.path(), "crop.json", r#"{"type":"leaf","name":"Crop","params":{"low":[6,0,0],"high":[6,0,0]}}"#);
    let ok = write(dir.path(), "ok.json", r#"{"type":"leaf","name":"Identity"}"#);

    let code = |args: &[&str]| voxaug(args).status.code().unwrap();
    assert_eq!(code(&["apply", p(&input), p(&out), "--pipeline", p(&malformed)]), 2);
    assert_eq!(code(&["apply", p(&input), p(&out), "--pipeline", p(&unknown)]), 2);
    assert_eq!(code(&["apply", p(&input), p(&out), "--pipeline", p(&too_much)]), 3);
    assert_eq!(code(&["apply", "/no/such.nii", p(&out), "--pipeline", p(&ok)]), 1);
    assert_eq!(code(&["apply", p(&input), p(&out), "--pipeline", "/no/such.json"]), 1);
    assert_eq!(code(&["info", "/no/such.nii"]), 1);
    assert_eq!(code(&["apply", p(&input)]), 2);
}

#[test]
fn info_reports_geometry_and_intensities() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ras.nii");
    let data = ndarray::Array4::from_shape_fn((1, 3, 2, 2), |(_, i, j, k)| (i + 2 * j + 4 * k) as f32);
    write_image(&Image::scalar(data, AffineMatrix::identity()), &path).unwrap();
    let run = voxaug(&["info", p(&path)]);
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.contains("shape: [1, 3, 2, 2]"), "{text}");
    assert!(text.contains("orientation: RAS"), "{text}");
    assert!(text.contains("min: 0\n"), "{text}");
    assert!(text.contains("max: 8\n"), "{text}");
    assert!(text.contains("mean: 4\n"), "{text}");
    assert!(text.contains("memory_footprint: 48\n"), "{text}");
}

#[test]
fn info_on_a_large_sparse_volume() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.nii");
    let f = common::Fixture::new([512, 512, 1069, 1], common::Dt::F32, Vec::new());
    std::fs::write(&path, f.header()).unwrap();
    std::fs::OpenOptions::new()
        .write(true)
        .open(&path)
        .unwrap()
        .set_len(352 + 512 * 512 * 1069 * 4)
        .unwrap();
    let run = voxaug(&["info", p(&path)]);
    assert!(run.status.success());
    let text = String::from_utf8(run.stdout).unwrap();
    assert!(text.contains("memory_footprint: 1120927744"), "{text}");
    assert!(text.contains("shape: [1, 512, 512, 1069]"), "{text}");
}

#[test]
fn sample_writes_exact_crops() {
    let dir = tempfile::tempdir().unwrap();
    let input = input_volume(dir.path());
    let outdir = dir.path().join("patches");
    let run = voxaug(&["sample", p(&input), "--patch", "5,4,3", "-n", "5", "--seed", "3", "--outdir", p(&outdir)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let source = read_image(&input, ImageKind::Scalar).unwrap();
    let lines = String::from_utf8(run.stdout).unwrap();
    assert_eq!(lines.lines().count(), 5);
    for line in lines.lines() {
        let (file, origin) = line.split_once(' ').unwrap();
        let o: Vec<usize> = serde_json::from_str(origin).unwrap();
        let patch = read_image(file, ImageKind::Scalar).unwrap();
        let want = scalar(&source).slice(s![.., o[0]..o[0] + 5, o[1]..o[1] + 4, o[2]..o[2] + 3]).to_owned();
        assert_eq!(scalar(&patch), &want);
        let at = source.affine().index_to_physical([o[0] as f64, o[1] as f64, o[2] as f64]);
        let got = patch.affine().index_to_physical([0.0; 3]);
        for d in 0..3 {
            assert!((at[d] - got[d]).abs() < 1e-4);
        }
    }
}

#[test]
fn sample_whole_volume_and_oversize() {
    let dir = tempfile::tempdir().unwrap();
    let input = input_volume(dir.path());
    let outdir = dir.path().join("whole");
    let run = voxaug(&["sample", p(&input), "--patch", "12,11,10", "-n", "1", "--outdir", p(&outdir)]);
    assert!(run.status.success());
    let patch = read_image(outdir.join("patch_0000.nii.gz"), ImageKind::Scalar).unwrap();
    assert_eq!(scalar(&patch), scalar(&read_image(&input, ImageKind::Scalar).unwrap()));
    let run = voxaug(&["sample", p(&input), "--patch", "13,11,10", "-n", "1", "--outdir", p(&outdir)]);
    assert_eq!(run.status.code(), Some(3));
}

#[test]
fn serve_answers_over_tcp() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_voxaug"))
        .args(["serve", "--port", "0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line.trim().rsplit("http://").next().unwrap().to_string();
    let mut stream = std::net::TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /transforms HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    let _ = child.wait();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("RandomElasticDeformation"));
}
