use std::path::Path;
use std::process::{Command, Output};

fn garmentwarp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_garmentwarp")).current_dir(dir).args(args).output().expect("spawn garmentwarp")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = garmentwarp(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn stages_compose_to_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["fixture", "--kind", "smoke", "--out", "in"]);
    ok(d, &[
        "pipeline", "--model-image", "in/model_image.png", "--model-keypoints", "in/model_keypoints.json",
        "--model-layout", "in/model_layout.png", "--target-keypoints", "in/target_keypoints.json",
        "--target-body", "in/target_body.png", "--target-preserved", "in/target_preserved.png",
        "--truth-image", "in/truth_image.png", "--truth-layout", "in/truth_layout.png", "--identity-mask", "1",
        "--out", "pipe",
    ]);

    ok(d, &["distance-field", "--keypoints", "in/model_keypoints.json", "--out", "pm.cttn"]);
    ok(d, &["distance-field", "--keypoints", "in/target_keypoints.json", "--out", "pt.cttn"]);
    let pair = ["--model-image", "in/model_image.png", "--model-pose", "pm.cttn", "--target-pose", "pt.cttn"];
    ok(d, &[&["correspond"], &pair[..], &["--out", "md.cttn"]].concat());
    ok(d, &[&["correspond"], &pair[..], &["--window", "4,4,0", "--out", "mt.cttn"]].concat());
    ok(d, &["warp-dense", "--matrix", "md.cttn", "--input", "in/model_image.png", "--clothes-of", "in/model_layout.png", "--out", "wc.cttn"]);
    ok(d, &["warp-dense", "--matrix", "md.cttn", "--labels", "in/model_layout.png", "--out", "wl.png", "--logits-out", "logits.cttn"]);
    ok(d, &["tps-fit", "--matrix", "mt.cttn", "--out", "tps.json"]);
    ok(d, &["tps-apply", "--tps", "tps.json", "--input", "in/model_image.png", "--clothes-of", "in/model_layout.png", "--out", "tc.cttn"]);
    ok(d, &["layout-merge", "--pred", "wl.png", "--preserved", "in/target_preserved.png", "--out", "lt.png"]);
    ok(d, &[
        "fuse", "--tps", "tc.cttn", "--body", "in/target_body.png", "--target-layout", "lt.png", "--warped", "wc.cttn",
        "--pred-layout", "wl.png", "--identity-mask", "1", "--out", "fused.cttn",
    ]);
    ok(d, &[
        "metrics", "--warped", "wc.cttn", "--fused", "fused.cttn", "--truth", "in/truth_image.png",
        "--truth-layout", "in/truth_layout.png", "--out", "metrics.json",
    ]);

    let p = d.join("pipe");
    for (stage, piped) in [
        ("pm.cttn", "p_model.cttn"),
        ("pt.cttn", "p_target.cttn"),
        ("md.cttn", "corr_dense.cttn"),
        ("mt.cttn", "corr_tps.cttn"),
        ("wc.cttn", "warped_clothes.cttn"),
        ("wl.png", "warped_layout.png"),
        ("logits.cttn", "layout_logits.cttn"),
        ("tps.json", "tps.json"),
        ("tc.cttn", "tps_clothes.cttn"),
        ("lt.png", "layout_target.png"),
        ("fused.cttn", "fused.cttn"),
    ] {
        assert!(bytes(d, stage) == bytes(&p, piped), "{stage} differs from pipeline {piped}");
    }

    let metrics: serde_json::Value = serde_json::from_slice(&bytes(d, "metrics.json")).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&bytes(&p, "report.json")).unwrap();
    for key in ["warp_ssim", "mask_ssim", "h_ssim"] {
        assert_eq!(metrics[key], report[key], "{key}");
    }
}

#[test]
fn missing_input_names_the_stage_and_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let out = garmentwarp(tmp.path(), &["distance-field", "--keypoints", "absent.json", "--out", "p.cttn"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("absent.json"), "{err}");

    ok(tmp.path(), &["fixture", "--kind", "smoke", "--out", "in"]);
    std::fs::remove_file(tmp.path().join("in/target_body.png")).unwrap();
    let out = garmentwarp(tmp.path(), &[
        "pipeline", "--model-image", "in/model_image.png", "--model-keypoints", "in/model_keypoints.json",
        "--model-layout", "in/model_layout.png", "--target-keypoints", "in/target_keypoints.json",
        "--target-body", "in/target_body.png", "--target-preserved", "in/target_preserved.png", "--out", "pipe",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("load-inputs"));
}

#[test]
fn invalid_values_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("k.json"), r#"{"width": 8, "height": 8, "joints": []}"#).unwrap();
    assert_eq!(garmentwarp(d, &["distance-field", "--keypoints", "k.json", "--out", "p.cttn"]).status.code(), Some(2));

    std::fs::write(d.join("config.json"), r#"{"alpah": 3}"#).unwrap();
    ok(d, &["fixture", "--kind", "smoke", "--out", "in"]);
    let out = garmentwarp(d, &["--config", "config.json", "distance-field", "--keypoints", "in/model_keypoints.json", "--out", "p.cttn"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));
}

#[test]
fn corrupted_tensor_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.cttn"), b"not a tensor").unwrap();
    let out = garmentwarp(d, &["tps-fit", "--matrix", "bad.cttn", "--out", "tps.json"]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}
