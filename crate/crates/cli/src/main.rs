//! `garmentwarp` command-line tool. Each subcommand runs one pipeline stage
//! on files; `pipeline` runs them all.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use garmentwarp::fixtures::{identity_fixture, smoke_fixture, write_fixture};
use garmentwarp::fusion::{extract_nontarget, fuse_attention, masked_clothes, AttentionMask};
use garmentwarp::io;
use garmentwarp::layout::{argmax_labels, merge_layout, probabilities_to_logits, warp_layout_probabilities, LabelPalette};
use garmentwarp::pipeline::{compute_losses, correspond, encode_pair, model_clothes, ssim_scores, LossInputs, PipelineInputs};
use garmentwarp::pose::distance_fields;
use garmentwarp::warping::{soft_argmax_control_points, tps_apply, tps_fit, warp_image, TpsTransform};
use garmentwarp::{run_pipeline, DType, Error, PipelineConfig, Result, Scalar, Tensor, WindowSpec};

#[derive(Parser)]
#[command(name = "garmentwarp", version, about = "Pose-guided garment transfer operators")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    precision: Option<Precision>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

#[derive(Subcommand)]
enum Command {
    /// Keypoint distance fields (H x W x 18).
    DistanceField {
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correspondence matrix between target and model features.
    Correspond {
        #[arg(long)]
        model_image: PathBuf,
        #[arg(long)]
        model_pose: PathBuf,
        #[arg(long)]
        target_pose: PathBuf,
        /// Window as `size,stride,padding`; defaults to the dense window.
        #[arg(long, value_parser = parse_window)]
        window: Option<WindowSpec>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dense warp of an image or a label map through a correspondence matrix.
    WarpDense {
        #[arg(long)]
        matrix: PathBuf,
        /// Image (`.png` or `.cttn`) to warp.
        #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
        input: Option<PathBuf>,
        /// Label map to warp instead of an image.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Keep only the clothes pixels of this layout before warping.
        #[arg(long)]
        clothes_of: Option<PathBuf>,
        /// Warped image (`.cttn` or `.png`) or warped label map (`.png`).
        #[arg(long)]
        out: PathBuf,
        /// Layout logits for the cross-entropy term (label mode only).
        #[arg(long, requires = "labels")]
        logits_out: Option<PathBuf>,
    },
    /// Control points from a coarse matrix and the fitted spline.
    TpsFit {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Applies a fitted spline to an image.
    TpsApply {
        #[arg(long)]
        tps: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        clothes_of: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes preserved target labels over a predicted layout.
    LayoutMerge {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        preserved: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attention fusion of the spline-warped clothes with a generated image.
    Fuse {
        #[arg(long)]
        tps: PathBuf,
        /// Generated image; without it one is assembled from the body,
        /// target layout, warped clothes and predicted layout.
        #[arg(long)]
        gen: Option<PathBuf>,
        #[arg(long, required_unless_present = "gen")]
        body: Option<PathBuf>,
        #[arg(long, required_unless_present = "gen")]
        target_layout: Option<PathBuf>,
        #[arg(long, required_unless_present = "gen")]
        warped: Option<PathBuf>,
        #[arg(long, required_unless_present = "gen")]
        pred_layout: Option<PathBuf>,
        #[command(flatten)]
        mask: MaskArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// All training losses and their weighted total, as JSON.
    Losses {
        #[arg(long)]
        fused: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        reference_layout: PathBuf,
        #[arg(long)]
        tps_clothes: PathBuf,
        #[arg(long)]
        tps: PathBuf,
        #[arg(long)]
        layout_logits: PathBuf,
        #[command(flatten)]
        mask: MaskArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Warp-, Mask- and H-SSIM against a ground truth, and optionally the
    /// Inception Score of a probability table.
    Metrics {
        #[arg(long, requires_all = ["fused", "truth", "truth_layout"])]
        warped: Option<PathBuf>,
        #[arg(long)]
        fused: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        truth_layout: Option<PathBuf>,
        #[arg(long)]
        probs: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline.
    Pipeline {
        #[arg(long)]
        model_image: PathBuf,
        #[arg(long)]
        model_keypoints: PathBuf,
        #[arg(long)]
        model_layout: PathBuf,
        #[arg(long)]
        target_keypoints: PathBuf,
        #[arg(long)]
        target_body: PathBuf,
        #[arg(long)]
        target_preserved: PathBuf,
        #[arg(long)]
        layout_prediction: Option<PathBuf>,
        #[arg(long)]
        fake_image: Option<PathBuf>,
        #[arg(long)]
        attention_mask: Option<PathBuf>,
        #[arg(long)]
        identity_mask: Option<f64>,
        #[arg(long)]
        truth_image: Option<PathBuf>,
        #[arg(long)]
        truth_layout: Option<PathBuf>,
        #[arg(long)]
        class_probs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes a bundled synthetic input set.
    Fixture {
        #[arg(long, value_enum)]
        kind: FixtureKind,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct MaskArgs {
    /// Attention mask image (8-bit grey, scaled by 1/255) or tensor.
    #[arg(long, conflicts_with = "identity_mask")]
    mask: Option<PathBuf>,
    /// Constant attention mask value.
    #[arg(long)]
    identity_mask: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Smoke,
    Identity,
}

fn parse_window(s: &str) -> std::result::Result<WindowSpec, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("`{p}` is not a non-negative integer")))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [size, stride, padding] => Ok(WindowSpec::new(size, stride, padding)),
        _ => Err("expected size,stride,padding".into()),
    }
}

fn config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = c.grid {
        cfg.grid = v;
    }
    if let Some(v) = c.workers {
        cfg.workers = v;
    }
    if let Some(p) = c.precision {
        cfg.precision = match p {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn is_tensor_file(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "cttn")
}

fn load_image<T: Scalar>(p: &Path) -> Result<Tensor<T>> {
    if is_tensor_file(p) {
        io::load_tensor(p)
    } else {
        io::load_image(p)
    }
}

fn save_image<T: Scalar>(t: &Tensor<T>, p: &Path) -> Result<()> {
    if is_tensor_file(p) {
        io::save_tensor(t, p)
    } else {
        io::save_image(t, p)
    }
}

fn load_mask<T: Scalar>(m: &MaskArgs, h: usize, w: usize) -> Result<AttentionMask<T>> {
    match (&m.mask, m.identity_mask) {
        (Some(p), _) if is_tensor_file(p) => AttentionMask::new(io::load_tensor(p)?),
        (Some(p), _) => AttentionMask::new(io::load_mask(p)?),
        (None, Some(v)) => AttentionMask::constant(h, w, T::of(v)),
        (None, None) => AttentionMask::constant(h, w, T::of(garmentwarp::pipeline::DEFAULT_ATTENTION)),
    }
}

fn clothes_only<T: Scalar>(img: Tensor<T>, layout: Option<&PathBuf>) -> Result<Tensor<T>> {
    match layout {
        Some(p) => model_clothes(&img, &io::load_labels(p)?),
        None => Ok(img),
    }
}

fn emit_json<V: serde::Serialize>(v: &V, out: Option<&PathBuf>) -> Result<()> {
    if let Some(p) = out {
        io::write_json(p, v)?;
    }
    println!("{}", serde_json::to_string_pretty(v).map_err(|e| Error::invalid(e.to_string()))?);
    Ok(())
}

fn run<T: Scalar>(cmd: Command, cfg: &PipelineConfig) -> Result<()> {
    let alpha = T::of(cfg.alpha);
    match cmd {
        Command::DistanceField { keypoints, out } => {
            let k = io::load_keypoints(&keypoints)?;
            io::save_tensor(&distance_fields::<T>(&k).field, &out)
        }
        Command::Correspond { model_image, model_pose, target_pose, window, out } => {
            let img = load_image::<T>(&model_image)?;
            let (pm, pt) = (io::load_tensor::<T>(&model_pose)?, io::load_tensor::<T>(&target_pose)?);
            let (fm, ft) = encode_pair(&img, &pm, &pt, cfg.seed)?;
            io::save_matrix(&correspond(&fm, &ft, window.unwrap_or(cfg.dense_window))?, &out)
        }
        Command::WarpDense { matrix, input, labels, clothes_of, out, logits_out } => {
            let m = io::load_matrix::<T>(&matrix)?;
            match (input, labels) {
                (Some(input), _) => {
                    let img = clothes_only(load_image::<T>(&input)?, clothes_of.as_ref())?;
                    save_image(&warp_image(&m, &img, alpha)?, &out)
                }
                (None, Some(labels)) => {
                    let probs = warp_layout_probabilities(&m, &io::load_labels(&labels)?, alpha, true)?;
                    if let Some(p) = logits_out {
                        io::save_tensor(&probabilities_to_logits(&probs), p)?;
                    }
                    io::save_labels(&argmax_labels(&probs)?, &out)
                }
                (None, None) => Err(Error::invalid("warp-dense needs --input or --labels")),
            }
        }
        Command::TpsFit { matrix, out } => {
            let m = io::load_matrix::<T>(&matrix)?;
            let control = soft_argmax_control_points(&m, cfg.grid, cfg.alpha, None)?;
            io::write_json(&out, &tps_fit(&control, cfg.lambda_k)?)
        }
        Command::TpsApply { tps, input, clothes_of, out } => {
            let t: TpsTransform = io::read_json(&tps)?;
            let t = tps_fit(&t.control, t.lambda_k)?;
            let img = clothes_only(load_image::<T>(&input)?, clothes_of.as_ref())?;
            save_image(&tps_apply(&t, &img)?, &out)
        }
        Command::LayoutMerge { pred, preserved, out } => {
            let merged = merge_layout(&io::load_labels(&pred)?, &io::load_labels(&preserved)?)?;
            io::save_labels(&merged, &out)
        }
        Command::Fuse { tps, gen, body, target_layout, warped, pred_layout, mask, out } => {
            let tps_img = load_image::<T>(&tps)?;
            let gen = match gen {
                Some(g) => load_image::<T>(&g)?,
                None => {
                    let (body, target_layout, warped, pred_layout) =
                        (body.unwrap(), target_layout.unwrap(), warped.unwrap(), pred_layout.unwrap());
                    let pred = io::load_labels(&pred_layout)?;
                    let masked = masked_clothes(&load_image::<T>(&warped)?, &pred.mask(LabelPalette::is_clothes))?;
                    let nontarget = extract_nontarget(&load_image::<T>(&body)?, &io::load_labels(&target_layout)?)?;
                    nontarget.zip_map(&masked, |a, b| a + b)?
                }
            };
            let (h, w, _) = gen.hwc()?;
            save_image(&fuse_attention(&tps_img, &gen, &load_mask(&mask, h, w)?)?, &out)
        }
        Command::Losses { fused, reference, reference_layout, tps_clothes, tps, layout_logits, mask, out } => {
            let fused = load_image::<T>(&fused)?;
            let reference = load_image::<T>(&reference)?;
            let reference_layout = io::load_labels(&reference_layout)?;
            let reference_clothes = model_clothes(&reference, &reference_layout)?;
            let tps: TpsTransform = io::read_json(&tps)?;
            let (h, w, _) = fused.hwc()?;
            let report = compute_losses(
                &LossInputs {
                    fused: &fused,
                    reference: &reference,
                    tps_clothes: &load_image::<T>(&tps_clothes)?,
                    reference_clothes: &reference_clothes,
                    tps: &tps,
                    layout_logits: &io::load_tensor::<T>(&layout_logits)?,
                    reference_layout: &reference_layout,
                    attention: &load_mask(&mask, h, w)?,
                },
                cfg,
            )?;
            emit_json(&report, out.as_ref())
        }
        Command::Metrics { warped, fused, truth, truth_layout, probs, out } => {
            let mut v = serde_json::Map::new();
            if let (Some(warped), Some(fused), Some(truth), Some(layout)) = (warped, fused, truth, truth_layout) {
                let s = ssim_scores(
                    &load_image::<T>(&warped)?,
                    &load_image::<T>(&fused)?,
                    &load_image::<T>(&truth)?,
                    &io::load_labels(&layout)?,
                )?;
                v.insert("warp_ssim".into(), s.warp_ssim.into());
                v.insert("mask_ssim".into(), s.mask_ssim.into());
                v.insert("h_ssim".into(), s.h_ssim.into());
            }
            if let Some(p) = probs {
                let is = garmentwarp::metrics::inception_score(&io::load_tensor::<T>(&p)?)?;
                v.insert("inception_score".into(), is.into());
            }
            emit_json(&v, out.as_ref())
        }
        Command::Pipeline { .. } | Command::Fixture { .. } => unreachable!("handled before dispatch"),
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    match cli.command {
        Command::Pipeline {
            model_image,
            model_keypoints,
            model_layout,
            target_keypoints,
            target_body,
            target_preserved,
            layout_prediction,
            fake_image,
            attention_mask,
            identity_mask,
            truth_image,
            truth_layout,
            class_probs,
            out,
        } => {
            let inputs = PipelineInputs {
                model_image,
                model_keypoints,
                model_layout,
                target_keypoints,
                target_body,
                target_preserved,
                layout_prediction,
                fake_image,
                attention_mask,
                identity_mask,
                truth_image,
                truth_layout,
                class_probs,
            };
            let outcome = run_pipeline(&cfg, &inputs, &out)?;
            emit_json(&outcome.report, None)
        }
        Command::Fixture { kind, out } => {
            let f = match kind {
                FixtureKind::Smoke => smoke_fixture(),
                FixtureKind::Identity => identity_fixture(),
            };
            write_fixture(&f, &out)?;
            Ok(())
        }
        cmd => match cfg.precision {
            DType::F32 => run::<f32>(cmd, &cfg),
            DType::F64 => run::<f64>(cmd, &cfg),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
