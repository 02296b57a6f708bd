mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use flowcut::pipeline::read_frame_masks;
use flowcut::tensor_io::{read_dataset, rle_decode};

use common::count_iou;

fn flowcut(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowcut"))
        .args(args)
        .env("FLOWCUT_LOG", "warn")
        .output()
        .expect("spawn flowcut")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn synth(dir: &Path, videos: &str, frames: &str) {
    let args = ["synth", "--videos", videos, "--frames", frames, "--out", s(dir)];
    let o = flowcut(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn end_to_end_on_synthetic_corpus() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    let masks = tmp.path().join("masks");
    let cur = tmp.path().join("curated");
    synth(&corpus, "3", "8");

    let o = flowcut(&[
        "extract",
        "--features-dir",
        s(&corpus.join("rgb")),
        "--flow-features-dir",
        s(&corpus.join("flow")),
        "--out",
        s(&masks),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    // extracted masks against the generator's ground truth
    let gt = read_dataset(corpus.join("gt.json")).unwrap();
    let (mut sum, mut n) = (0.0, 0usize);
    for ann in &gt.annotations {
        let video = gt.video(ann.video_id).unwrap();
        for (name, seg) in video.file_names.iter().zip(&ann.segmentations) {
            let Some(seg) = seg else { continue };
            let g = rle_decode(seg).unwrap();
            let stem = Path::new(name).with_extension("json");
            let fm = read_frame_masks(&masks.join(stem)).unwrap();
            let best = fm
                .masks
                .iter()
                .map(|m| count_iou(&rle_decode(m).unwrap(), &g))
                .fold(0.0, f64::max);
            sum += best;
            n += 1;
        }
    }
    assert!(sum / n as f64 >= 0.9, "mean best IoU {}", sum / n as f64);

    let o = flowcut(&["curate", "--masks-dir", s(&masks), "--out", s(&cur)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ds = read_dataset(cur.join("dataset.json")).unwrap();
    assert!(!ds.videos.is_empty());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cur.join("report.json")).unwrap()).unwrap();
    assert_eq!(
        report["total_emitted_clips"].as_u64().unwrap() as usize,
        ds.videos.len()
    );

    let gt_path = corpus.join("gt.json");
    let out = tmp.path().join("eval.json");
    let o = flowcut(&["eval", "--gt", s(&gt_path), "--preds", s(&gt_path), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    for key in ["ap", "ap50", "ap75", "ar10", "j_mean", "f_mean", "jf_mean"] {
        assert!((r[key].as_f64().unwrap() - 1.0).abs() < 1e-9, "{key} = {}", r[key]);
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("J&F"));

    let png = tmp.path().join("png");
    let o = flowcut(&["overlay", "--dataset", s(&cur.join("dataset.json")), "--out", s(&png)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = png.join("00001").join("00000.png");
    let img = image::open(&first).unwrap();
    assert_eq!((img.width(), img.height()), (128, 128));

    let png2 = tmp.path().join("png2");
    let o = flowcut(&["overlay", "--masks-dir", s(&masks), "--out", s(&png2)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(png2.join("video_0000").join("00000.png").exists());
}

#[test]
fn flow_requirement_follows_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = tmp.path().join("corpus");
    synth(&corpus, "1", "2");
    let rgb = corpus.join("rgb");

    let o = flowcut(&["extract", "--features-dir", s(&rgb), "--out", s(&tmp.path().join("a"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("flow"));

    let o = flowcut(&[
        "extract",
        "--features-dir",
        s(&rgb),
        "--alpha",
        "1",
        "--out",
        s(&tmp.path().join("b")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("b").join("video_0000").join("00000.json").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = s(tmp.path());
    assert_eq!(
        code(&flowcut(&[
            "extract",
            "--features-dir",
            d,
            "--alpha",
            "1",
            "--tau",
            "1.5",
            "--out",
            d
        ])),
        2
    );
    assert_eq!(
        code(&flowcut(&["curate", "--masks-dir", d, "--gaps", "5", "--out", d])),
        2
    );
    assert_eq!(code(&flowcut(&["synth", "--noise-sigma", "-1", "--out", d])), 2);
    assert_eq!(code(&flowcut(&["synth", "--videos", "0", "--out", d])), 2);
    assert_eq!(code(&flowcut(&["bogus"])), 2);
}

#[test]
fn empty_input_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = flowcut(&[
        "extract",
        "--features-dir",
        s(&empty),
        "--alpha",
        "1",
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&o), 4);
    let o = flowcut(&["curate", "--masks-dir", s(&empty), "--out", s(&tmp.path().join("c"))]);
    assert_eq!(code(&o), 4);
}

#[test]
fn malformed_inputs_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let rgb = tmp.path().join("rgb");
    fs::create_dir_all(rgb.join("v")).unwrap();
    let bad = rgb.join("v").join("00000.fcft");
    fs::write(&bad, b"not a feature file").unwrap();
    let o = flowcut(&[
        "extract",
        "--features-dir",
        s(&rgb),
        "--alpha",
        "1",
        "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("00000.fcft"));

    let gt = tmp.path().join("gt.json");
    fs::write(&gt, "{\"videos\": [], \"annotations\": [{\"id\": 1}]}").unwrap();
    assert_eq!(code(&flowcut(&["eval", "--gt", s(&gt), "--preds", s(&gt)])), 3);
    assert_eq!(
        code(&flowcut(&[
            "eval",
            "--gt",
            s(&tmp.path().join("missing.json")),
            "--preds",
            s(&gt)
        ])),
        3
    );
}
