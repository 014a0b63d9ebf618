use std::path::Path;
use std::process::{Command, Output};

use t2t_binformer::data::synth::write_dataset;

fn binformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_binformer")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train(manifest: &Path, out: &Path, steps: &str) -> Output {
    binformer(&[
        "train", "--manifest", s(manifest), "--hold-year", "2011", "--preset", "toy", "--image-size", "64",
        "--batch-size", "2", "--lr", "3e-3", "--steps", steps, "--out-dir", s(out),
    ])
}

#[test]
fn train_infer_eval_compare() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&dir.path().join("data"), &["2009", "2010", "2011"], 1, 80, 5).unwrap();

    let out_a = dir.path().join("a");
    let run = train(&manifest, &out_a, "4");
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stderr).contains("# effective train settings"));
    let log = std::fs::read_to_string(out_a.join("loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(out_a.join("model.ckpt").exists());

    let out_b = dir.path().join("b");
    assert!(train(&manifest, &out_b, "4").status.success());
    assert_eq!(log, std::fs::read_to_string(out_b.join("loss.csv")).unwrap());

    let page = dir.path().join("data/2011/page0.png");
    let ckpt = out_a.join("model.ckpt");
    let infer = |out: &Path| binformer(&["infer", "--checkpoint", s(&ckpt), "--input", s(&page), "--out-dir", s(out)]);
    assert!(infer(&dir.path().join("i1")).status.success());
    assert!(infer(&dir.path().join("i2")).status.success());
    let bin1 = std::fs::read(dir.path().join("i1/page0_binary.png")).unwrap();
    assert_eq!(bin1, std::fs::read(dir.path().join("i2/page0_binary.png")).unwrap());
    let img = image::load_from_memory(&bin1).unwrap().to_luma8();
    assert_eq!(img.dimensions(), (80, 80));
    assert!(img.pixels().all(|p| p.0[0] == 0 || p.0[0] == 255));

    let gt = dir.path().join("data/2011/page0_gt.png");
    let eval = binformer(&["eval", "--pred", s(&dir.path().join("i1/page0_binary.png")), "--gt", s(&gt)]);
    assert!(eval.status.success());
    let text = String::from_utf8(eval.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "psnr,fm,fps,drd");
    assert_eq!(lines[1].split(',').count(), 4);

    let perfect = binformer(&["eval", "--pred", s(&gt), "--gt", s(&gt)]);
    assert_eq!(String::from_utf8(perfect.stdout).unwrap().lines().nth(1), Some("inf,100.0000,100.0000,0.0000"));

    let cmp = binformer(&["compare", "--manifest", s(&manifest), "--year", "2011", "--checkpoint", s(&ckpt), "--format", "md"]);
    assert!(cmp.status.success(), "{}", String::from_utf8_lossy(&cmp.stderr));
    let table = String::from_utf8(cmp.stdout).unwrap();
    assert_eq!(table.lines().count(), 7);
    assert!(table.lines().last().unwrap().starts_with("| T2T-BinFormer"));
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &["2009", "2010"], 1, 32, 1).unwrap();
    let bad_year = binformer(&["train", "--manifest", s(&manifest), "--hold-year", "1999", "--steps", "1"]);
    assert!(!bad_year.status.success());
    assert!(String::from_utf8_lossy(&bad_year.stderr).contains("unknown year"));

    let missing = binformer(&["eval", "--pred", "nope.png", "--gt", "nope.png"]);
    assert!(!missing.status.success());

    let bad_key = dir.path().join("bad.cfg");
    std::fs::write(&bad_key, "colour = red\n").unwrap();
    let out = binformer(&["eval", "--config", s(&bad_key), "--pred", "a.png", "--gt", "b.png"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));

    let cmp = binformer(&["compare", "--manifest", s(&manifest), "--year", "2009"]);
    assert!(cmp.status.success());
    assert_eq!(String::from_utf8(cmp.stdout).unwrap().lines().count(), 5);
}
