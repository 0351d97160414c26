use std::path::Path;

use garmentwarp::fixtures::{identity_fixture, smoke_fixture, write_fixture, FixturePaths};
use garmentwarp::pipeline::{hash_file, PipelineOutcome};
use garmentwarp::{run_pipeline, DType, PipelineConfig, PipelineInputs, Tensor64};

fn run(paths: &FixturePaths, config: &PipelineConfig, out: &Path) -> PipelineOutcome {
    let mut inputs = PipelineInputs::from_fixture(paths);
    inputs.identity_mask = Some(1.0);
    run_pipeline(config, &inputs, out).unwrap()
}

#[test]
fn smoke_run_writes_a_consistent_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&smoke_fixture(), dir.path().join("in")).unwrap();
    let out = dir.path().join("out");
    let outcome = run(&paths, &PipelineConfig::default(), &out);
    let report = &outcome.report;
    for v in [report.warp_ssim, report.mask_ssim, report.h_ssim] {
        assert!(v.is_some_and(f64::is_finite));
    }
    assert!(report.losses.total.is_finite());
    assert_eq!(report.control_points, 25);
    assert_eq!(report.loss_reference, "truth_image");
    for (name, hash) in &outcome.manifest.outputs {
        assert_eq!(&hash_file(&out.join(name)).unwrap(), hash, "{name}");
    }
    assert!(out.join("manifest.json").exists());
    assert!(!outcome.manifest.config.as_object().unwrap().contains_key("workers"));
}

#[test]
fn manifests_do_not_depend_on_workers_or_repetition() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&smoke_fixture(), dir.path().join("in")).unwrap();
    let manifests: Vec<Vec<u8>> = [1, 1, 8, 8]
        .iter()
        .enumerate()
        .map(|(i, &workers)| {
            let out = dir.path().join(format!("out{i}"));
            run(&paths, &PipelineConfig { workers, ..Default::default() }, &out);
            std::fs::read(out.join("manifest.json")).unwrap()
        })
        .collect();
    assert!(manifests.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn single_precision_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&smoke_fixture(), dir.path().join("in")).unwrap();
    let outcome = run(&paths, &PipelineConfig { precision: DType::F32, ..Default::default() }, &dir.path().join("out"));
    assert!(outcome.report.losses.total.is_finite());
}

#[test]
fn identity_mask_returns_the_spline_warp() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&identity_fixture(), dir.path().join("in")).unwrap();
    let out = dir.path().join("out");
    run(&paths, &PipelineConfig::default(), &out);
    let fused: Tensor64 = garmentwarp::io::load_tensor(out.join("fused.cttn")).unwrap();
    let tps: Tensor64 = garmentwarp::io::load_tensor(out.join("tps_clothes.cttn")).unwrap();
    assert_eq!(fused, tps);
}

#[test]
fn missing_input_reports_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&smoke_fixture(), dir.path().join("in")).unwrap();
    let mut inputs = PipelineInputs::from_fixture(&paths);
    inputs.target_body = dir.path().join("in/absent.png");
    let err = run_pipeline(&PipelineConfig::default(), &inputs, &dir.path().join("out")).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("load-inputs") && msg.contains("target_body"), "{msg}");
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn mismatched_inputs_report_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&smoke_fixture(), dir.path().join("in")).unwrap();
    let small = Tensor64::zeros(&[32, 32, 3]);
    garmentwarp::io::save_image(&small, &paths.target_body).unwrap();
    let err = run_pipeline(&PipelineConfig::default(), &PipelineInputs::from_fixture(&paths), &dir.path().join("out"))
        .unwrap_err();
    assert!(err.to_string().contains("stage `"), "{err}");
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(&smoke_fixture(), dir.path().join("in")).unwrap();
    let config = PipelineConfig { alpha: -1.0, ..Default::default() };
    let err = run_pipeline(&config, &PipelineInputs::from_fixture(&paths), &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.path().join("out").exists());
}
