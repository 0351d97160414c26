//! Stand-in feature encoders, window aggregation and the mean-centred
//! normalised correlation between aggregated features.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::JOINT_COUNT;
use crate::ops::{matmul_nt, unfold, WindowSpec};
use crate::reduce::{dot, pairwise_sum_by};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Image pixels per feature cell.
pub const FEATURE_STRIDE: usize = 4;
pub const FEATURE_CHANNELS: usize = 64;
const HIDDEN_CHANNELS: usize = 32;

/// Weight scale of the first stage. Distance fields change by about
/// `1 / diagonal` per pixel, so a large gain is needed for neighbouring
/// cells to decorrelate.
pub const STAGE1_GAIN: f64 = 24.0;
pub const STAGE2_GAIN: f64 = 1.5;

/// Relative gain applied to image channels when they are stacked in front of
/// the pose fields for the model-side encoder.
pub const IMAGE_CHANNEL_GAIN: f64 = 0.02;

/// Denominator guard of the correlation.
pub const CORRELATION_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    pub features: Tensor<T>,
    pub source: String,
    pub seed: u64,
}

/// Deterministic fixed-weight encoder: two `3x3`, stride-2, padding-1
/// convolutions with `sin` activations (random Fourier features).
///
/// Weights come from ChaCha8 seeded with `seed`. Each input channel draws
/// from its own stream keyed by its position counted from the *last*
/// channel, so two inputs ending in the same channel block (the pose fields)
/// share those weights. Weights are uniform with standard deviation
/// `gain / sqrt(fan_in)`, where the first stage counts at most the 18 pose
/// channels in `fan_in`; biases are uniform phases in `[-pi, pi)`.
pub fn encode_features<T: Scalar>(inputs: &Tensor<T>, seed: u64) -> Result<FeatureMap<T>> {
    encode_features_with_source(inputs, seed, "inputs")
}

fn encode_features_with_source<T: Scalar>(
    inputs: &Tensor<T>,
    seed: u64,
    source: &str,
) -> Result<FeatureMap<T>> {
    inputs.require_rank(3, "encode_features")?;
    let (h, w, _) = inputs.hwc()?;
    if h % FEATURE_STRIDE != 0 || w % FEATURE_STRIDE != 0 {
        return Err(Error::shape(format!(
            "encode_features: {h}x{w} is not divisible by {FEATURE_STRIDE}"
        )));
    }
    let [_, features] = encode_stages(inputs, seed)?;
    debug_assert_eq!(features.dims(), &[h / FEATURE_STRIDE, w / FEATURE_STRIDE, FEATURE_CHANNELS]);
    Ok(FeatureMap { features, source: source.to_string(), seed })
}

/// Both encoder stages: `H/2 x W/2 x 32` and `H/4 x W/4 x 64`.
pub fn encode_stages<T: Scalar>(inputs: &Tensor<T>, seed: u64) -> Result<[Tensor<T>; 2]> {
    inputs.require_rank(3, "encode_stages")?;
    let (_, _, k) = inputs.hwc()?;
    let conv = WindowSpec::new(3, 2, 1);
    let w1 = stage_weights(seed, k, k.min(JOINT_COUNT), HIDDEN_CHANNELS, STAGE1_GAIN, 0);
    let hidden = conv_sin(inputs, conv, &w1)?;
    let w2 = stage_weights(seed, HIDDEN_CHANNELS, HIDDEN_CHANNELS, FEATURE_CHANNELS, STAGE2_GAIN, 1 << 32);
    let features = conv_sin(&hidden, conv, &w2)?;
    Ok([hidden, features])
}

/// Model-side encoder over the model image stacked in front of its pose
/// fields.
pub fn encode_model_features<T: Scalar>(image: &Tensor<T>, pose: &Tensor<T>, seed: u64) -> Result<FeatureMap<T>> {
    let (h, w, ci) = image.hwc()?;
    let (ph, pw, cp) = pose.hwc()?;
    if (h, w) != (ph, pw) {
        return Err(Error::shape(format!("model image {h}x{w} vs pose fields {ph}x{pw}")));
    }
    let gain = T::of(IMAGE_CHANNEL_GAIN);
    let k = ci + cp;
    let stacked = Tensor::from_fn(&[h, w, k], |i| {
        let (p, c) = (i / k, i % k);
        if c < ci {
            gain * image.data()[p * ci + c]
        } else {
            pose.data()[p * cp + c - ci]
        }
    });
    encode_features_with_source(&stacked, seed, "model image + model pose")
}

/// Target-side encoder over the target pose fields alone.
pub fn encode_target_features<T: Scalar>(pose: &Tensor<T>, seed: u64) -> Result<FeatureMap<T>> {
    encode_features_with_source(pose, seed, "target pose")
}

struct StageWeights {
    /// `out x (9 * in)` in unfold column order.
    weights: Vec<f64>,
    bias: Vec<f64>,
    cols: usize,
}

fn stage_weights(
    seed: u64,
    inputs: usize,
    fan_channels: usize,
    outputs: usize,
    gain: f64,
    stream_base: u64,
) -> StageWeights {
    let cols = 9 * inputs;
    let bound = gain * (3.0 / (9 * fan_channels) as f64).sqrt();
    let mut weights = vec![0.0; outputs * cols];
    for c in 0..inputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_base + 1 + (inputs - 1 - c) as u64);
        for o in 0..outputs {
            for cell in 0..9 {
                weights[o * cols + cell * inputs + c] = rng.gen_range(-bound..bound);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_base);
    let bias = (0..outputs)
        .map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
        .collect();
    StageWeights { weights, bias, cols }
}

fn conv_sin<T: Scalar>(x: &Tensor<T>, spec: WindowSpec, sw: &StageWeights) -> Result<Tensor<T>> {
    let (h, w, _) = x.hwc()?;
    let (gh, gw) = spec.output_grid(h, w)?;
    let cols = unfold(x, spec)?;
    let outputs = sw.bias.len();
    let weights = Tensor::from_fn(&[outputs, sw.cols], |i| T::of(sw.weights[i]));
    let mut pre = matmul_nt(&cols, &weights)?.into_data();
    pre.par_chunks_mut(outputs).for_each(|row| {
        for (v, b) in row.iter_mut().zip(&sw.bias) {
            *v = (*v + T::of(*b)).sin();
        }
    });
    Ok(Tensor::from_parts(vec![gh, gw, outputs], pre))
}

/// Geometry of one side of a correspondence matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMeta {
    pub feature_h: usize,
    pub feature_w: usize,
    pub window: WindowSpec,
    pub grid_h: usize,
    pub grid_w: usize,
    /// Image pixels per feature cell.
    pub pixel_scale: usize,
}

impl GridMeta {
    pub fn new(feature_h: usize, feature_w: usize, window: WindowSpec, pixel_scale: usize) -> Result<Self> {
        let (grid_h, grid_w) = window.output_grid(feature_h, feature_w)?;
        Ok(GridMeta { feature_h, feature_w, window, grid_h, grid_w, pixel_scale })
    }

    pub fn cells(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Centre of grid cell `(gr, gc)` in image pixels as `(row, col)`.
    pub fn cell_center_px(&self, gr: usize, gc: usize) -> (f64, f64) {
        let s = self.pixel_scale as f64;
        let to_px = |f: f64| s * f + (s - 1.0) / 2.0;
        (to_px(self.window.center(gr)), to_px(self.window.center(gc)))
    }

    /// Grid index along one axis whose centre is nearest to pixel coordinate
    /// `v`, ties rounding up.
    pub fn nearest_cell(&self, v: f64, axis_cells: usize) -> Option<usize> {
        let s = self.pixel_scale as f64;
        let first = self.cell_center_px(0, 0).0;
        let step = s * self.window.stride as f64;
        let k = ((v - first) / step + 0.5).floor();
        (k >= 0.0 && k < axis_cells as f64).then_some(k as usize)
    }

    fn validate(&self) -> Result<()> {
        let (gh, gw) = self.window.output_grid(self.feature_h, self.feature_w)?;
        if (gh, gw) != (self.grid_h, self.grid_w) || self.pixel_scale == 0 {
            return Err(Error::invalid(format!("inconsistent grid metadata {self:?}")));
        }
        Ok(())
    }
}

/// Unfolded feature columns together with the grid they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeatures<T> {
    pub columns: Tensor<T>,
    pub meta: GridMeta,
}

pub fn aggregate_features<T: Scalar>(f: &FeatureMap<T>, window: WindowSpec) -> Result<AggregatedFeatures<T>> {
    let (h, w, _) = f.features.hwc()?;
    let columns = unfold(&f.features, window)?;
    Ok(AggregatedFeatures { columns, meta: GridMeta::new(h, w, window, FEATURE_STRIDE)? })
}

/// Normalised correlation matrix; rows index the first argument's cells,
/// columns the second's.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceMatrix<T> {
    pub scores: Tensor<T>,
    pub rows: GridMeta,
    pub cols: GridMeta,
}

impl<T: Scalar> CorrespondenceMatrix<T> {
    pub fn new(scores: Tensor<T>, rows: GridMeta, cols: GridMeta) -> Result<Self> {
        scores.require_rank(2, "correspondence matrix")?;
        rows.validate()?;
        cols.validate()?;
        if scores.dims() != [rows.cells(), cols.cells()] {
            return Err(Error::shape(format!(
                "matrix {:?} does not match grids {}x{}",
                scores.dims(),
                rows.cells(),
                cols.cells()
            )));
        }
        Ok(CorrespondenceMatrix { scores, rows, cols })
    }

    pub fn metadata(&self) -> MatrixMetadata {
        MatrixMetadata { rows: self.rows, cols: self.cols }
    }
}

/// JSON sidecar stored next to a serialised matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixMetadata {
    pub rows: GridMeta,
    pub cols: GridMeta,
}

pub fn correspondence_matrix<T: Scalar>(
    a: &AggregatedFeatures<T>,
    b: &AggregatedFeatures<T>,
) -> Result<CorrespondenceMatrix<T>> {
    let scores = correlation(&a.columns, &b.columns)?;
    CorrespondenceMatrix::new(scores, a.meta, b.meta)
}

/// `<a_i - u_a, b_j - u_b> / (|a_i - u_a| |b_j - u_b| + eps)` with `u_a`,
/// `u_b` the mean rows of each side.
pub fn correlation<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    a.require_rank(2, "correlation lhs")?;
    b.require_rank(2, "correlation rhs")?;
    if a.dims()[1] != b.dims()[1] {
        return Err(Error::shape(format!(
            "correlation: feature lengths differ {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (ca, na) = center_rows(a);
    let (cb, nb) = center_rows(b);
    let mut m = matmul_nt(&ca, &cb)?.into_data();
    let eps = T::of(CORRELATION_EPS);
    let cols = nb.len();
    m.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = *v / (na[i] * nb[j] + eps);
        }
    });
    Ok(Tensor::from_parts(vec![na.len(), cols], m))
}

fn center_rows<T: Scalar>(x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
    let (n, d) = (x.dims()[0], x.dims()[1]);
    let xd = x.data();
    let inv = T::of(1.0 / n as f64);
    let mean: Vec<T> = (0..d)
        .into_par_iter()
        .map(|c| pairwise_sum_by(n, |i| xd[i * d + c]) * inv)
        .collect();
    let centered = Tensor::from_fn(&[n, d], |k| xd[k] - mean[k % d]);
    let norms = centered
        .data()
        .par_chunks(d)
        .map(|row| dot(row, row).sqrt())
        .collect();
    (centered, norms)
}
