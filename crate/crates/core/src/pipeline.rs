//! End-to-end garment transfer on file inputs.
//!
//! [`run_pipeline`] chains every module in a fixed stage order, writes each
//! intermediate as a PNG and a lossless `.cttn` dump, and records the
//! SHA-256 of every input and output in `manifest.json`. The stage helpers
//! below are shared with the command-line front end so that its
//! subcommands reproduce the pipeline bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::correspondence::{
    aggregate_features, correspondence_matrix, encode_model_features, encode_target_features, CorrespondenceMatrix,
    FeatureMap,
};
use crate::error::{Error, Result};
use crate::fusion::{attention_regularizer, extract_nontarget, fuse_attention, masked_clothes, AttentionMask};
use crate::io;
use crate::layout::{
    cross_entropy_loss, merge_layout, probabilities_to_logits, warp_layout_probabilities, argmax_labels,
    LabelPalette, SegmentationMap, BACKGROUND,
};
use crate::losses::{
    adversarial_loss, contextual_loss, feature_set, l1_loss, perceptual_loss, style_loss, total_loss,
    FeaturePyramid, LossComponents, LossReport, CONTEXTUAL_BANDWIDTH,
};
use crate::metrics::{inception_score, masked_ssim};
use crate::ops::WindowSpec;
use crate::pose::{distance_fields, KeypointSet};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;
use crate::warping::{soft_argmax_control_points, tps_apply, tps_fit, tps_loss, warp_image, TpsTransform};

/// Constant discriminator score used when no scores are supplied.
pub const DEFAULT_DISCRIMINATOR_SCORE: f64 = 0.5;
/// Constant attention mask used when neither a mask file nor an identity
/// mask value is supplied.
pub const DEFAULT_ATTENTION: f64 = 0.5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineInputs {
    pub model_image: PathBuf,
    pub model_keypoints: PathBuf,
    pub model_layout: PathBuf,
    pub target_keypoints: PathBuf,
    pub target_body: PathBuf,
    pub target_preserved: PathBuf,
    /// Predicted clothes/limb layout; defaults to the warped model layout.
    pub layout_prediction: Option<PathBuf>,
    /// Generator output; defaults to non-target body plus masked clothes.
    pub fake_image: Option<PathBuf>,
    pub attention_mask: Option<PathBuf>,
    /// Constant attention mask value, used when no mask file is given.
    pub identity_mask: Option<f64>,
    /// Target person wearing the model's garment.
    pub truth_image: Option<PathBuf>,
    pub truth_layout: Option<PathBuf>,
    /// `N x K` class probabilities for the Inception Score.
    pub class_probs: Option<PathBuf>,
}

impl PipelineInputs {
    /// Inputs laid out by [`crate::fixtures::write_fixture`].
    pub fn from_fixture(p: &crate::fixtures::FixturePaths) -> Self {
        PipelineInputs {
            model_image: p.model_image.clone(),
            model_keypoints: p.model_keypoints.clone(),
            model_layout: p.model_layout.clone(),
            target_keypoints: p.target_keypoints.clone(),
            target_body: p.target_body.clone(),
            target_preserved: p.target_preserved.clone(),
            truth_image: Some(p.truth_image.clone()),
            truth_layout: Some(p.truth_layout.clone()),
            ..Default::default()
        }
    }

    fn files(&self) -> Vec<(&'static str, &Path)> {
        let mut v: Vec<(&'static str, &Path)> = vec![
            ("model_image", &self.model_image),
            ("model_keypoints", &self.model_keypoints),
            ("model_layout", &self.model_layout),
            ("target_keypoints", &self.target_keypoints),
            ("target_body", &self.target_body),
            ("target_preserved", &self.target_preserved),
        ];
        let optional = [
            ("layout_prediction", &self.layout_prediction),
            ("fake_image", &self.fake_image),
            ("attention_mask", &self.attention_mask),
            ("truth_image", &self.truth_image),
            ("truth_layout", &self.truth_layout),
            ("class_probs", &self.class_probs),
        ];
        v.extend(optional.into_iter().filter_map(|(n, p)| p.as_deref().map(|p| (n, p))));
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    #[serde(flatten)]
    pub components: LossComponents,
    pub total: f64,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub warp_ssim: Option<f64>,
    pub mask_ssim: Option<f64>,
    pub h_ssim: Option<f64>,
    pub inception_score: Option<f64>,
    pub losses: LossSummary,
    pub weighted: LossComponents,
    /// Image the reconstruction losses compare against.
    pub loss_reference: String,
    /// Inputs replaced by built-in stand-ins in this run.
    pub stand_ins: Vec<String>,
    pub control_points: usize,
}

/// Contents of `manifest.json`. The worker count is left out so that runs
/// with different thread counts can be compared byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub report: Report,
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

// ---- stage helpers shared with the CLI ----

/// Garment pixels of `image`: everything outside the clothes labels is 0.
pub fn model_clothes<T: Scalar>(image: &Tensor<T>, layout: &SegmentationMap) -> Result<Tensor<T>> {
    masked_clothes(image, &layout.mask(LabelPalette::is_clothes))
}

/// Model-side and target-side features.
pub fn encode_pair<T: Scalar>(
    model_image: &Tensor<T>,
    p_model: &Tensor<T>,
    p_target: &Tensor<T>,
    seed: u64,
) -> Result<(FeatureMap<T>, FeatureMap<T>)> {
    Ok((encode_model_features(model_image, p_model, seed)?, encode_target_features(p_target, seed)?))
}

/// Correspondence with target cells as rows and model cells as columns.
pub fn correspond<T: Scalar>(
    model: &FeatureMap<T>,
    target: &FeatureMap<T>,
    window: WindowSpec,
) -> Result<CorrespondenceMatrix<T>> {
    correspondence_matrix(&aggregate_features(target, window)?, &aggregate_features(model, window)?)
}

/// Mask of labelled (non-background) pixels.
pub fn human_mask<T: Scalar>(layout: &SegmentationMap) -> Tensor<T> {
    layout.mask(|l| l != BACKGROUND)
}

/// Tensors the loss terms are computed from.
pub struct LossInputs<'a, T: Scalar> {
    pub fused: &'a Tensor<T>,
    pub reference: &'a Tensor<T>,
    pub tps_clothes: &'a Tensor<T>,
    pub reference_clothes: &'a Tensor<T>,
    pub tps: &'a TpsTransform,
    pub layout_logits: &'a Tensor<T>,
    pub reference_layout: &'a SegmentationMap,
    pub attention: &'a AttentionMask<T>,
}

pub fn compute_losses<T: Scalar>(x: &LossInputs<'_, T>, config: &PipelineConfig) -> Result<LossReport> {
    let pyramid = |img: &Tensor<T>| -> Result<FeaturePyramid<T>> {
        let p = FeaturePyramid::from_image(img, config.seed)?;
        match &config.level_weights {
            Some(w) => FeaturePyramid::with_weights(p.levels, w.clone()),
            None => Ok(p),
        }
    };
    let pf = pyramid(x.fused)?;
    let pr = pyramid(x.reference)?;
    let last = pf.levels.len() - 1;
    let scores = Tensor::<T>::filled(&[1], T::of(DEFAULT_DISCRIMINATOR_SCORE));
    let components = LossComponents {
        l1: l1_loss(x.fused, x.reference)?,
        tps: tps_loss(x.tps_clothes, x.reference_clothes, &x.tps.control, config.tps_weights())?,
        layout: cross_entropy_loss(x.layout_logits, x.reference_layout)?,
        perceptual: perceptual_loss(&pf, &pr)?,
        style: style_loss(&pf, &pr)?,
        contextual: contextual_loss(
            &feature_set(&pf.levels[last])?,
            &feature_set(&pr.levels[last])?,
            CONTEXTUAL_BANDWIDTH,
        )?,
        adv: adversarial_loss(&scores, &scores)?,
        reg: attention_regularizer(x.attention),
    };
    total_loss(&components, &config.loss_weights)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimScores {
    pub warp_ssim: f64,
    pub mask_ssim: f64,
    pub h_ssim: f64,
}

/// Warp-SSIM over the truth's clothes region (warped clothes against truth
/// clothes), Mask-SSIM over the same region and H-SSIM over all human
/// pixels (fused result against the truth image).
pub fn ssim_scores<T: Scalar>(
    warped_clothes: &Tensor<T>,
    fused: &Tensor<T>,
    truth: &Tensor<T>,
    truth_layout: &SegmentationMap,
) -> Result<SsimScores> {
    let clothes = truth_layout.mask::<T>(LabelPalette::is_clothes);
    let truth_clothes = masked_clothes(truth, &clothes)?;
    Ok(SsimScores {
        warp_ssim: masked_ssim(warped_clothes, &truth_clothes, &clothes)?,
        mask_ssim: masked_ssim(fused, truth, &clothes)?,
        h_ssim: masked_ssim(fused, truth, &human_mask(truth_layout))?,
    })
}

// ---- orchestration ----

struct Loaded<T> {
    model_image: Tensor<T>,
    model_keypoints: KeypointSet,
    model_layout: SegmentationMap,
    target_keypoints: KeypointSet,
    target_body: Tensor<T>,
    target_preserved: SegmentationMap,
    layout_prediction: Option<SegmentationMap>,
    fake_image: Option<Tensor<T>>,
    attention_mask: Option<Tensor<T>>,
    truth_image: Option<Tensor<T>>,
    truth_layout: Option<SegmentationMap>,
    class_probs: Option<Tensor<T>>,
}

struct Run {
    fingerprint: String,
}

impl Run {
    fn stage<R>(&self, stage: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        f().map_err(|e| Error::Stage { stage, fingerprint: self.fingerprint.clone(), source: Box::new(e) })
    }
}

fn check_dims(name: &str, (h, w): (usize, usize), expected: (usize, usize)) -> Result<()> {
    if (h, w) != expected {
        return Err(Error::shape(format!(
            "{name} is {h}x{w} but the model image is {}x{}",
            expected.0, expected.1
        )));
    }
    Ok(())
}

fn load_inputs<T: Scalar>(inputs: &PipelineInputs) -> Result<Loaded<T>> {
    let model_image = io::load_image::<T>(&inputs.model_image)?;
    let (h, w, c) = model_image.hwc()?;
    let hw = (h, w);
    let image = |p: &Path, name: &str| -> Result<Tensor<T>> {
        let t = io::load_image::<T>(p)?;
        let (th, tw, tc) = t.hwc()?;
        check_dims(name, (th, tw), hw)?;
        if tc != c {
            return Err(Error::shape(format!("{name} has {tc} channels, the model image {c}")));
        }
        Ok(t)
    };
    let labels = |p: &Path, name: &str| -> Result<SegmentationMap> {
        let s = io::load_labels(p)?;
        check_dims(name, (s.height(), s.width()), hw)?;
        Ok(s)
    };
    let keypoints = |p: &Path, name: &str| -> Result<KeypointSet> {
        let k = io::load_keypoints(p)?;
        check_dims(name, (k.height(), k.width()), hw)?;
        Ok(k)
    };
    let mask = |p: &Path| -> Result<Tensor<T>> {
        let m = io::load_mask::<T>(p)?;
        check_dims("attention mask", (m.dims()[0], m.dims()[1]), hw)?;
        Ok(m)
    };
    Ok(Loaded {
        model_keypoints: keypoints(&inputs.model_keypoints, "model keypoints")?,
        model_layout: labels(&inputs.model_layout, "model layout")?,
        target_keypoints: keypoints(&inputs.target_keypoints, "target keypoints")?,
        target_body: image(&inputs.target_body, "target body")?,
        target_preserved: labels(&inputs.target_preserved, "target preserved layout")?,
        layout_prediction: inputs.layout_prediction.as_deref().map(|p| labels(p, "layout prediction")).transpose()?,
        fake_image: inputs.fake_image.as_deref().map(|p| image(p, "fake image")).transpose()?,
        attention_mask: inputs.attention_mask.as_deref().map(mask).transpose()?,
        truth_image: inputs.truth_image.as_deref().map(|p| image(p, "truth image")).transpose()?,
        truth_layout: inputs.truth_layout.as_deref().map(|p| labels(p, "truth layout")).transpose()?,
        class_probs: inputs.class_probs.as_deref().map(io::load_tensor::<T>).transpose()?,
        model_image,
    })
}

/// Output writer that remembers every file it produced.
struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn image<T: Scalar>(&mut self, stem: &str, t: &Tensor<T>) -> Result<()> {
        let p = self.path(&format!("{stem}.png"));
        io::save_image(t, p)?;
        self.tensor(stem, t)
    }

    fn tensor<T: Scalar>(&mut self, stem: &str, t: &Tensor<T>) -> Result<()> {
        let p = self.path(&format!("{stem}.cttn"));
        io::save_tensor(t, p)
    }

    fn labels(&mut self, stem: &str, s: &SegmentationMap) -> Result<()> {
        let p = self.path(&format!("{stem}.png"));
        io::save_labels(s, p)?;
        let p = self.path(&format!("{stem}_preview.png"));
        io::save_label_preview(s, p)
    }

    fn matrix<T: Scalar>(&mut self, stem: &str, m: &CorrespondenceMatrix<T>) -> Result<()> {
        let name = format!("{stem}.cttn");
        let p = self.path(&name);
        io::save_matrix(m, &p)?;
        self.files.push(format!("{name}.json"));
        Ok(())
    }

    fn json<V: Serialize>(&mut self, name: &str, v: &V) -> Result<()> {
        let p = self.path(name);
        io::write_json(p, v)
    }
}

fn manifest_config(config: &PipelineConfig) -> Result<Value> {
    let mut v = serde_json::to_value(config).map_err(|e| Error::invalid(e.to_string()))?;
    if let Value::Object(map) = &mut v {
        map.remove("workers");
    }
    Ok(v)
}

/// Runs the full pipeline, writing outputs into `out_dir`.
pub fn run_pipeline(config: &PipelineConfig, inputs: &PipelineInputs, out_dir: &Path) -> Result<PipelineOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {} workers: {e}", config.workers)))?;
    pool.install(|| match config.precision {
        DType::F32 => run_typed::<f32>(config, inputs, out_dir),
        DType::F64 => run_typed::<f64>(config, inputs, out_dir),
    })
}

fn run_typed<T: Scalar>(config: &PipelineConfig, inputs: &PipelineInputs, out_dir: &Path) -> Result<PipelineOutcome> {
    let mut input_hashes = BTreeMap::new();
    let mut fingerprint = Vec::new();
    for (name, path) in inputs.files() {
        let hash = hash_file(path).map_err(|e| Error::Stage {
            stage: "load-inputs",
            fingerprint: format!("{name}={}", path.display()),
            source: Box::new(e),
        })?;
        fingerprint.push(format!("{name}={}", &hash[..12]));
        input_hashes.insert(name.to_string(), hash);
    }
    let run = Run { fingerprint: fingerprint.join(",") };
    let alpha = T::of(config.alpha);
    let mut stand_ins = Vec::new();

    let x: Loaded<T> = run.stage("load-inputs", || load_inputs(inputs))?;

    let (p_model, p_target) = run.stage("distance-fields", || {
        Ok((distance_fields::<T>(&x.model_keypoints).field, distance_fields::<T>(&x.target_keypoints).field))
    })?;

    let (f_model, f_target) =
        run.stage("encode-features", || encode_pair(&x.model_image, &p_model, &p_target, config.seed))?;

    let (m_dense, m_tps) = run.stage("correspond", || {
        Ok((correspond(&f_model, &f_target, config.dense_window)?, correspond(&f_model, &f_target, config.tps_window)?))
    })?;

    let clothes = run.stage("model-clothes", || model_clothes(&x.model_image, &x.model_layout))?;

    let (warped_clothes, layout_probs, warped_layout) = run.stage("dense-warp", || {
        let wc = warp_image(&m_dense, &clothes, alpha)?;
        let probs = warp_layout_probabilities(&m_dense, &x.model_layout, alpha, true)?;
        let wl = argmax_labels(&probs)?;
        Ok((wc, probs, wl))
    })?;

    let tps = run.stage("tps-control", || {
        let control = soft_argmax_control_points(&m_tps, config.grid, config.alpha, None)?;
        tps_fit(&control, config.lambda_k)
    })?;
    let tps_clothes = run.stage("tps-warp", || tps_apply(&tps, &clothes))?;

    let (layout_pred, layout_target) = run.stage("layout", || {
        let pred = match &x.layout_prediction {
            Some(p) => p.clone(),
            None => {
                stand_ins.push("layout_prediction: warped model layout".to_string());
                warped_layout.clone()
            }
        };
        let merged = merge_layout(&pred, &x.target_preserved)?;
        Ok((pred, merged))
    })?;

    let (masked, nontarget, fake, attention, fused) = run.stage("fusion", || {
        let masked = masked_clothes(&warped_clothes, &layout_pred.mask(LabelPalette::is_clothes))?;
        let nontarget = extract_nontarget(&x.target_body, &layout_target)?;
        let fake = match &x.fake_image {
            Some(f) => f.clone(),
            None => {
                stand_ins.push("fake_image: non-target body + masked warped clothes".to_string());
                nontarget.zip_map(&masked, |a, b| a + b)?
            }
        };
        let (h, w, _) = fake.hwc()?;
        let attention = match (&x.attention_mask, inputs.identity_mask) {
            (Some(m), _) => AttentionMask::new(m.clone())?,
            (None, Some(v)) => {
                stand_ins.push(format!("attention_mask: constant {v}"));
                AttentionMask::constant(h, w, T::of(v))?
            }
            (None, None) => {
                stand_ins.push(format!("attention_mask: constant {DEFAULT_ATTENTION}"));
                AttentionMask::constant(h, w, T::of(DEFAULT_ATTENTION))?
            }
        };
        let fused = fuse_attention(&tps_clothes, &fake, &attention)?;
        Ok((masked, nontarget, fake, attention, fused))
    })?;

    let (reference, reference_layout, reference_name) = match (&x.truth_image, &x.truth_layout) {
        (Some(t), Some(l)) => (t.clone(), l.clone(), "truth_image"),
        (Some(t), None) => (t.clone(), layout_target.clone(), "truth_image"),
        (None, _) => {
            stand_ins.push("loss reference: target body image".to_string());
            (x.target_body.clone(), layout_target.clone(), "target_body")
        }
    };
    let layout_logits = probabilities_to_logits(&layout_probs);
    let reference_clothes = run.stage("losses", || model_clothes(&reference, &reference_layout))?;
    let losses = run.stage("losses", || {
        compute_losses(
            &LossInputs {
                fused: &fused,
                reference: &reference,
                tps_clothes: &tps_clothes,
                reference_clothes: &reference_clothes,
                tps: &tps,
                layout_logits: &layout_logits,
                reference_layout: &reference_layout,
                attention: &attention,
            },
            config,
        )
    })?;
    stand_ins.push(format!("adversarial scores: constant {DEFAULT_DISCRIMINATOR_SCORE}"));

    let (scores, is) = run.stage("metrics", || {
        let scores = match &x.truth_image {
            Some(t) => Some(ssim_scores(&warped_clothes, &fused, t, &reference_layout)?),
            None => None,
        };
        let is = x.class_probs.as_ref().map(inception_score).transpose()?;
        Ok((scores, is))
    })?;

    let report = Report {
        warp_ssim: scores.map(|s| s.warp_ssim),
        mask_ssim: scores.map(|s| s.mask_ssim),
        h_ssim: scores.map(|s| s.h_ssim),
        inception_score: is,
        losses: LossSummary { components: losses.components, total: losses.total },
        weighted: losses.weighted,
        loss_reference: reference_name.to_string(),
        stand_ins,
        control_points: tps.control.len(),
    };

    let mut out = Outputs { dir: out_dir, files: Vec::new() };
    run.stage("write-outputs", || {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        out.tensor("p_model", &p_model)?;
        out.tensor("p_target", &p_target)?;
        out.tensor("features_model", &f_model.features)?;
        out.tensor("features_target", &f_target.features)?;
        out.matrix("corr_dense", &m_dense)?;
        out.matrix("corr_tps", &m_tps)?;
        out.image("model_clothes", &clothes)?;
        out.image("warped_clothes", &warped_clothes)?;
        out.labels("warped_layout", &warped_layout)?;
        out.tensor("layout_logits", &layout_logits)?;
        out.json("tps.json", &tps)?;
        out.image("tps_clothes", &tps_clothes)?;
        out.labels("layout_pred", &layout_pred)?;
        out.labels("layout_target", &layout_target)?;
        out.image("masked_clothes", &masked)?;
        out.image("nontarget_body", &nontarget)?;
        out.image("fake_image", &fake)?;
        out.image("attention_mask", attention.tensor())?;
        out.image("fused", &fused)?;
        out.image("reference_clothes", &reference_clothes)?;
        out.json("report.json", &report)?;
        Ok(())
    })?;

    let manifest = run.stage("write-outputs", || {
        let mut outputs = BTreeMap::new();
        for f in &out.files {
            outputs.insert(f.clone(), hash_file(&out_dir.join(f))?);
        }
        let manifest = Manifest { config: manifest_config(config)?, inputs: input_hashes, outputs };
        io::write_json(out_dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    })?;

    Ok(PipelineOutcome { report, manifest, out_dir: out_dir.to_path_buf() })
}
