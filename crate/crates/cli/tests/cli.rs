use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edgeconnect::mask::load_mask;
use edgeconnect::pipeline::{load_image, save_image};
use edgeconnect::Tensor;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeconnect"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scene(dir: &Path, name: &str, size: usize) -> PathBuf {
    let img = Tensor::from_fn([1, 3, size, size], |_, c, y, x| {
        let inside = (size / 4..3 * size / 4).contains(&y) && (size / 3..2 * size / 3).contains(&x);
        if inside {
            0.8 - 0.1 * c as f32
        } else {
            0.15 + 0.1 * c as f32
        }
    });
    let p = dir.join(name);
    save_image(&img, &p).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn canny_writes_binary_edges() {
    let dir = tempfile::tempdir().unwrap();
    let img = scene(dir.path(), "a.png", 48);
    let out = dir.path().join("edges.png");
    let o = run(&["canny", s(&img), s(&out), "--sigma", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let e = load_image(&out).unwrap();
    assert!(e.data().iter().all(|&v| v == 0.0 || v == 1.0));
    assert!(e.data().iter().any(|&v| v == 1.0));
    assert!(stdout(&o).contains("edge pixels"));
}

#[test]
fn mask_with_augmentation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.png");
    let o = run(&[
        "mask",
        s(&out),
        "--height",
        "64",
        "--width",
        "64",
        "--mask_ratio",
        "0.25",
        "--mask_placement",
        "random",
        "--seed",
        "4",
        "--augment",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = load_mask(&out).unwrap();
    assert_eq!(m.count(), 32 * 32);
    for k in 0..8 {
        assert_eq!(load_mask(dir.path().join(format!("m_{k}.png"))).unwrap().count(), 32 * 32);
    }
    assert!(stdout(&o).contains("20-30%"));
}

#[test]
fn infer_preserves_background() {
    let dir = tempfile::tempdir().unwrap();
    let img = scene(dir.path(), "pic.png", 64);
    let outdir = dir.path().join("out");
    let o = run(&["infer", s(&img), "--output_dir", s(&outdir), "--mask_ratio", "0.2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let input = load_image(&img).unwrap();
    let comp = load_image(outdir.join("pic_i_comp.png")).unwrap();
    let mask = load_mask(outdir.join("pic_mask.png")).unwrap();
    for c in 0..3 {
        for y in 0..64 {
            for x in 0..64 {
                if mask.get(y, x) == 0 {
                    assert_eq!(comp.get(0, c, y, x), input.get(0, c, y, x));
                }
            }
        }
    }
}

#[test]
fn eval_reads_config_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    std::fs::create_dir(&imgs).unwrap();
    scene(&imgs, "x0.png", 32);
    scene(&imgs, "x1.png", 32);
    std::fs::write(imgs.join("broken.png"), b"not a png").unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("sigma = 1.5\nmask_ratio = 0.3\noutput_dir = {}\n", s(&dir.path().join("res")))).unwrap();
    let o = run(&["eval", s(&imgs), "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("res/metrics.csv")).unwrap();
    assert!(csv.starts_with("id,bucket,rel_l1,ssim,psnr,precision,recall\n"));
    assert!(csv.contains("\nx0,30-40%,"));
    assert!(csv.contains("\n#agg,all,2,"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipped 1"));
}

#[test]
fn sweep_sorts_sigmas() {
    let dir = tempfile::tempdir().unwrap();
    let img = scene(dir.path(), "a.png", 40);
    let report = dir.path().join("sweep.csv");
    let o = run(&["sweep", s(&img), "--sigmas", "3,0,1.5", "--report", s(&report)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&report).unwrap();
    let sigmas: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sigmas, ["0", "1.5", "3"]);
}

#[test]
fn weights_init_and_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("d1.ecw");
    let o = run(&["weights", "init", "--network", "d1", s(&w)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["weights", "inspect", s(&w)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("conv1.weight"));
    assert!(text.contains("conv5.weight_u"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let img = scene(dir.path(), "a.png", 32);
    let out = dir.path().join("e.png");

    let bad_sigma = run(&["canny", s(&img), s(&out), "--sigma", "-1"]);
    assert_eq!(bad_sigma.status.code(), Some(2));
    let both_sources = run(&["infer", s(&img), "--mask_ratio", "0.2", "--mask_dir", s(dir.path())]);
    assert_eq!(both_sources.status.code(), Some(2));
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(run(&["canny", s(&img), s(&out), "--config", s(&cfg)]).status.code(), Some(2));

    let missing = run(&["canny", s(&dir.path().join("nope.png")), s(&out)]);
    assert_eq!(missing.status.code(), Some(3));
    assert_eq!(
        run(&["canny", s(&img), s(&out), "--config", s(&dir.path().join("none.cfg"))]).status.code(),
        Some(3)
    );

    let d1 = dir.path().join("d1.ecw");
    assert!(run(&["weights", "init", "--network", "d1", s(&d1)]).status.success());
    let wrong = run(&["infer", s(&img), "--g1_weights", s(&d1), "--output_dir", s(dir.path())]);
    assert_eq!(wrong.status.code(), Some(4));
    let odd = scene(dir.path(), "odd.png", 30);
    assert_eq!(run(&["infer", s(&odd), "--output_dir", s(dir.path())]).status.code(), Some(4));
}
