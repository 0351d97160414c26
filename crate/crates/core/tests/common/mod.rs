#![allow(dead_code)]

use std::sync::Arc;

use garmentwarp::autodiff::Differentiable;
use garmentwarp::correspondence::{correlation, CorrespondenceMatrix, GridMeta};
use garmentwarp::fusion::{AttentionRegularizer, FuseAttention};
use garmentwarp::layout::{CrossEntropy, SegmentationMap, LABEL_COUNT};
use garmentwarp::losses::{
    gram_matrix, AdversarialLoss, ContextualLoss, L1Loss, LossWeights, PerceptualLoss, StyleLoss, TotalLoss,
};
use garmentwarp::ops::unfold;
use garmentwarp::pose::{distance_fields, Joint, KeypointSet, JOINT_COUNT};
use garmentwarp::warping::{
    dense_warp, tps_fit, ControlGrid, DenseWarp, Rect, TpsApply, TpsLoss, TpsLossWeights,
};
use garmentwarp::{Tensor64, WindowSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ORACLE_REL_TOL: f64 = 1e-6;
pub const ORACLE_ABS_FLOOR: f64 = 1e-12;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor64 {
    Tensor64::from_fn(dims, |_| r.gen_range(lo..hi))
}

/// Largest relative disagreement, ignoring absolute differences below
/// [`ORACLE_ABS_FLOOR`].
pub fn max_rel_error(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len(), "length mismatch");
    got.iter()
        .zip(want)
        .map(|(&a, &b)| {
            let d = (a - b).abs();
            if d <= ORACLE_ABS_FLOOR {
                0.0
            } else {
                d / a.abs().max(b.abs())
            }
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Scalar-loop oracles
// ---------------------------------------------------------------------------

pub fn unfold_oracle(x: &Tensor64, size: usize, stride: usize, pad: usize) -> (usize, Vec<f64>) {
    let (h, w, c) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let gh = (h + 2 * pad - size) / stride + 1;
    let gw = (w + 2 * pad - size) / stride + 1;
    let mut out = Vec::new();
    for gr in 0..gh {
        for gc in 0..gw {
            for dr in 0..size {
                for dc in 0..size {
                    let r = (gr * stride + dr) as i64 - pad as i64;
                    let col = (gc * stride + dc) as i64 - pad as i64;
                    for ch in 0..c {
                        let inside = r >= 0 && col >= 0 && (r as usize) < h && (col as usize) < w;
                        out.push(if inside { x.at3(r as usize, col as usize, ch) } else { 0.0 });
                    }
                }
            }
        }
    }
    (gh * gw, out)
}

pub fn correlation_oracle(a: &Tensor64, b: &Tensor64) -> Vec<f64> {
    let (na, d) = (a.dims()[0], a.dims()[1]);
    let nb = b.dims()[0];
    let mean = |t: &Tensor64, n: usize| -> Vec<f64> {
        (0..d).map(|k| (0..n).map(|i| t.at2(i, k)).sum::<f64>() / n as f64).collect()
    };
    let (ua, ub) = (mean(a, na), mean(b, nb));
    let mut out = Vec::with_capacity(na * nb);
    for i in 0..na {
        for j in 0..nb {
            let (mut dot, mut sa, mut sb) = (0.0, 0.0, 0.0);
            for k in 0..d {
                let (p, q) = (a.at2(i, k) - ua[k], b.at2(j, k) - ub[k]);
                dot += p * q;
                sa += p * p;
                sb += q * q;
            }
            out.push(dot / (sa.sqrt() * sb.sqrt() + 1e-8));
        }
    }
    out
}

pub fn dense_warp_oracle(scores: &Tensor64, x: &Tensor64, alpha: f64) -> Vec<f64> {
    let (n_out, n_in) = (scores.dims()[0], scores.dims()[1]);
    let c = x.len() / n_in;
    let mut out = vec![0.0; n_out * c];
    for u in 0..n_out {
        let top = (0..n_in).map(|v| scores.at2(u, v)).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..n_in).map(|v| (alpha * (scores.at2(u, v) - top)).exp()).sum();
        for v in 0..n_in {
            let p = (alpha * (scores.at2(u, v) - top)).exp() / z;
            for ch in 0..c {
                out[u * c + ch] += p * x.data()[v * c + ch];
            }
        }
    }
    out
}

pub fn cross_entropy_oracle(logits: &Tensor64, labels: &[u8]) -> f64 {
    let mut total = 0.0;
    for (p, &l) in labels.iter().enumerate() {
        let row = &logits.data()[p * LABEL_COUNT..(p + 1) * LABEL_COUNT];
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + row.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        total += lse - row[l as usize];
    }
    total / labels.len() as f64
}

pub fn gram_oracle(f: &Tensor64) -> Vec<f64> {
    let (h, w, c) = (f.dims()[0], f.dims()[1], f.dims()[2]);
    let mut g = vec![0.0; c * c];
    for a in 0..c {
        for b in 0..c {
            let mut s = 0.0;
            for r in 0..h {
                for col in 0..w {
                    s += f.at3(r, col, a) * f.at3(r, col, b);
                }
            }
            g[a * c + b] = s / (h * w) as f64;
        }
    }
    g
}

/// Intermediate quantities of the contextual loss, straight from its
/// definition.
pub struct ContextualParts {
    pub dist: Vec<Vec<f64>>,
    pub affinity: Vec<Vec<f64>>,
    pub loss: f64,
}

pub fn contextual_oracle(x: &Tensor64, y: &Tensor64, h: f64) -> ContextualParts {
    let (n, d) = (x.dims()[0], x.dims()[1]);
    let m = y.dims()[0];
    let mu: Vec<f64> = (0..d).map(|k| (0..m).map(|j| y.at2(j, k)).sum::<f64>() / m as f64).collect();
    let xc: Vec<Vec<f64>> = (0..n).map(|i| (0..d).map(|k| x.at2(i, k) - mu[k]).collect()).collect();
    let yc: Vec<Vec<f64>> = (0..m).map(|j| (0..d).map(|k| y.at2(j, k) - mu[k]).collect()).collect();
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let dist: Vec<Vec<f64>> = xc
        .iter()
        .map(|a| {
            yc.iter()
                .map(|b| {
                    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
                    1.0 - dot / (norm(a) * norm(b) + 1e-8)
                })
                .collect()
        })
        .collect();
    let affinity: Vec<Vec<f64>> = dist
        .iter()
        .map(|row| {
            let r = row.iter().copied().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = row.iter().map(|v| ((1.0 - v / (r + 1e-5)) / h).exp()).collect();
            let z: f64 = w.iter().sum();
            w.iter().map(|v| v / z).collect()
        })
        .collect();
    let mean_max = (0..m).map(|j| (0..n).map(|i| affinity[i][j]).fold(0.0, f64::max)).sum::<f64>() / m as f64;
    ContextualParts { dist, affinity, loss: -mean_max.ln() }
}

/// Brute-force distance fields: for every pixel, scan every pixel of the
/// joint's one-pixel mask.
pub fn distance_oracle(k: &KeypointSet) -> Vec<f64> {
    let (h, w) = (k.height(), k.width());
    let diag = ((w * w + h * h) as f64).sqrt();
    let mut masks = vec![vec![false; h * w]; JOINT_COUNT];
    for (j, joint) in k.joints().iter().enumerate() {
        if let Some(p) = joint {
            let r = ((p.y + 0.5).floor() as usize).min(h - 1);
            let c = ((p.x + 0.5).floor() as usize).min(w - 1);
            masks[j][r * w + c] = true;
        }
    }
    let mut out = vec![1.0; h * w * JOINT_COUNT];
    for q in 0..h * w {
        for j in 0..JOINT_COUNT {
            let best = (0..h * w)
                .filter(|&p| masks[j][p])
                .map(|p| {
                    let dr = (p / w) as f64 - (q / w) as f64;
                    let dc = (p % w) as f64 - (q % w) as f64;
                    (dr * dr + dc * dc).sqrt() / diag
                })
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                out[q * JOINT_COUNT + j] = best;
            }
        }
    }
    out
}

pub fn random_keypoints(r: &mut ChaCha8Rng, h: usize, w: usize) -> KeypointSet {
    let joints: [Option<Joint>; JOINT_COUNT] = std::array::from_fn(|_| {
        r.gen_bool(0.8).then(|| Joint {
            x: r.gen_range(0.0..w as f64 - 1e-9),
            y: r.gen_range(0.0..h as f64 - 1e-9),
            confidence: r.gen_range(0.0..1.0),
        })
    });
    KeypointSet::new(w, h, joints).expect("joints inside the image")
}

/// Independent bilinear sampler at `(row, col)` with zero exterior.
pub fn bilinear_oracle(img: &Tensor64, row: f64, col: f64, ch: usize) -> f64 {
    let (h, w) = (img.dims()[0] as i64, img.dims()[1] as i64);
    let (r0, c0) = (row.floor(), col.floor());
    let (fr, fc) = (row - r0, col - c0);
    let mut v = 0.0;
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let (r, c) = (r0 as i64 + dr, c0 as i64 + dc);
            if r >= 0 && c >= 0 && r < h && c < w {
                v += wr * wc * img.at3(r as usize, c as usize, ch);
            }
        }
    }
    v
}

// ---------------------------------------------------------------------------
// Oracle trials: each returns the largest disagreement on one random
// instance, or an error message.
// ---------------------------------------------------------------------------

pub type Trial = fn(u64) -> Result<f64, String>;

pub const ORACLE_TRIALS: [(&str, Trial); 7] = [
    ("unfold", unfold_trial),
    ("correspondence_matrix", correspondence_trial),
    ("dense_warp", dense_warp_trial),
    ("cross_entropy_loss", cross_entropy_trial),
    ("gram_matrix", gram_trial),
    ("contextual_loss", contextual_trial),
    ("distance_fields", distance_trial),
];

fn check<T>(r: garmentwarp::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// Exact comparison: returns 0 on equality, infinity otherwise.
fn exact(got: &[f64], want: &[f64]) -> f64 {
    if got == want {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn unfold_trial(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let (h, w, c) = (r.gen_range(1..8), r.gen_range(1..8), r.gen_range(1..4));
    let pad = r.gen_range(0..3);
    let size = r.gen_range(1..=(h.min(w) + 2 * pad).min(5));
    let stride = r.gen_range(1..4);
    let x = uniform(&mut r, &[h, w, c], -1.0, 1.0);
    let got = check(unfold(&x, WindowSpec::new(size, stride, pad)))?;
    let (n, want) = unfold_oracle(&x, size, stride, pad);
    if got.dims() != [n, size * size * c] {
        return Err(format!("shape {:?}, expected [{n}, {}]", got.dims(), size * size * c));
    }
    Ok(exact(got.data(), &want))
}

pub fn correspondence_trial(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let (na, nb, d) = (r.gen_range(2..12), r.gen_range(2..12), r.gen_range(1..10));
    let a = uniform(&mut r, &[na, d], -2.0, 2.0);
    let b = uniform(&mut r, &[nb, d], -2.0, 2.0);
    let got = check(correlation(&a, &b))?;
    Ok(max_rel_error(got.data(), &correlation_oracle(&a, &b)))
}

pub fn dense_warp_trial(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let (h, w, c) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..4));
    let (oh, ow) = (r.gen_range(1..5), r.gen_range(1..5));
    let alpha = [1.0, 10.0, 100.0][r.gen_range(0..3)];
    let scores = uniform(&mut r, &[oh * ow, h * w], -1.0, 1.0);
    let x = uniform(&mut r, &[h, w, c], -1.0, 1.0);
    let rows = check(GridMeta::new(oh, ow, WindowSpec::new(1, 1, 0), 4))?;
    let cols = check(GridMeta::new(h, w, WindowSpec::new(1, 1, 0), 4))?;
    let m = check(CorrespondenceMatrix::new(scores.clone(), rows, cols))?;
    let got = check(dense_warp(&m, &x, alpha))?;
    Ok(max_rel_error(got.data(), &dense_warp_oracle(&scores, &x, alpha)))
}

pub fn cross_entropy_trial(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let (h, w) = (r.gen_range(1..5), r.gen_range(1..5));
    let logits = uniform(&mut r, &[h, w, LABEL_COUNT], -5.0, 5.0);
    let labels: Vec<u8> = (0..h * w).map(|_| r.gen_range(0..LABEL_COUNT as u8)).collect();
    let truth = check(SegmentationMap::new(h, w, labels.clone()))?;
    let got = check(garmentwarp::layout::cross_entropy_loss(&logits, &truth))?;
    Ok(max_rel_error(&[got], &[cross_entropy_oracle(&logits, &labels)]))
}

pub fn gram_trial(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let dims = [r.gen_range(1..6), r.gen_range(1..6), r.gen_range(1..6)];
    let f = uniform(&mut r, &dims, -1.0, 1.0);
    let got = check(gram_matrix(&f))?;
    Ok(max_rel_error(got.data(), &gram_oracle(&f)))
}

pub fn contextual_trial(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let (n, m, d) = (r.gen_range(1..7), r.gen_range(1..7), r.gen_range(2..6));
    let x = uniform(&mut r, &[n, d], -1.0, 1.0);
    let y = uniform(&mut r, &[m, d], -1.0, 1.0);
    let h = [0.5, 0.2, 1.0][r.gen_range(0..3)];
    let got = check(garmentwarp::losses::contextual_loss(&x, &y, h))?;
    Ok(max_rel_error(&[got], &[contextual_oracle(&x, &y, h).loss]))
}

pub fn distance_trial(seed: u64) -> Result<f64, String> {
    let mut r = rng(seed);
    let (h, w) = (r.gen_range(1..33), r.gen_range(1..33));
    let k = random_keypoints(&mut r, h, w);
    let got = distance_fields::<f64>(&k).field;
    Ok(exact(got.data(), &distance_oracle(&k)))
}

// ---------------------------------------------------------------------------
// Gradient-check cases. Each sampler draws a random point away from the
// non-differentiable set of its operator.
// ---------------------------------------------------------------------------

pub struct GradCase {
    pub op: Arc<dyn Differentiable<f64>>,
    pub inputs: Vec<Tensor64>,
    pub cotangent: Tensor64,
}

pub type CaseSampler = fn(u64) -> GradCase;

pub const GRADIENT_CASES: [(&str, CaseSampler); 12] = [
    ("dense_warp", dense_warp_case),
    ("tps_apply", tps_apply_case),
    ("tps_loss", tps_loss_case),
    ("fuse_attention", fuse_attention_case),
    ("attention_regularizer", attention_regularizer_case),
    ("perceptual_loss", perceptual_case),
    ("style_loss", style_case),
    ("contextual_loss", contextual_case),
    ("adversarial_loss", adversarial_case),
    ("l1_loss", l1_case),
    ("total_loss", total_case),
    ("cross_entropy_loss", cross_entropy_case),
];

fn scalar_cotangent(r: &mut ChaCha8Rng) -> Tensor64 {
    Tensor64::scalar(r.gen_range(0.5..1.5))
}

/// Pair of tensors whose elementwise differences stay at least `gap` away
/// from zero.
fn separated_pair(r: &mut ChaCha8Rng, dims: &[usize], gap: f64) -> (Tensor64, Tensor64) {
    let a = uniform(r, dims, -1.0, 1.0);
    let b = Tensor64::from_fn(dims, |i| {
        let s = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        a.data()[i] + s * r.gen_range(gap..0.5)
    });
    (a, b)
}

pub fn dense_warp_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let (h, w, c) = (3, 3, 2);
    let scores = uniform(&mut r, &[h * w, h * w], -1.0, 1.0);
    let x = uniform(&mut r, &[h, w, c], -1.0, 1.0);
    let cot = uniform(&mut r, &[h, w, c], -1.0, 1.0);
    GradCase { op: Arc::new(DenseWarp { alpha: 2.0, out_h: h, out_w: w }), inputs: vec![scores, x], cotangent: cot }
}

pub fn tps_apply_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let n = 8;
    let control = ControlGrid::lattice(3, Rect::new(0.0, 0.0, (n - 1) as f64, (n - 1) as f64)).unwrap();
    // Reject targets that put a sample within the step's reach of a pixel
    // line, where bilinear interpolation has a kink.
    let targets = loop {
        let t: Vec<[f64; 2]> =
            control.sources.iter().map(|s| [s[0] + r.gen_range(-1.0..1.0), s[1] + r.gen_range(-1.0..1.0)]).collect();
        let fit = tps_fit(&control.clone().with_targets(t.clone()).unwrap(), 1e-6).unwrap();
        let clear = (0..n * n).all(|p| {
            let [x, y] = fit.map((p % n) as f64, (p / n) as f64);
            [x, y].iter().all(|v| (v - v.round()).abs() > 4e-3)
        });
        if clear {
            break t;
        }
    };
    let t = Tensor64::from_fn(&[targets.len(), 2], |k| targets[k / 2][k % 2]);
    let img = uniform(&mut r, &[n, n, 2], 0.0, 1.0);
    let cot = uniform(&mut r, &[n, n, 2], -1.0, 1.0);
    GradCase { op: Arc::new(TpsApply { control, lambda_k: 1e-6 }), inputs: vec![t, img], cotangent: cot }
}

/// Smallest kink argument of the second-order constraint over every chain.
fn constraint_margin(pts: &[[f64; 2]], grid: usize) -> f64 {
    let mut margin = f64::INFINITY;
    for gy in 1..grid - 1 {
        for gx in 1..grid - 1 {
            let p = gy * grid + gx;
            for ([a, b, c], vertical) in [([p - 1, p, p + 1], false), ([p - grid, p, p + grid], true)] {
                let u = [pts[b][0] - pts[a][0], pts[b][1] - pts[a][1]];
                let v = [pts[c][0] - pts[b][0], pts[c][1] - pts[b][1]];
                let (num, den) = if vertical { (0, 1) } else { (1, 0) };
                let len = (u[0].hypot(u[1]) - v[0].hypot(v[1])).abs();
                let slope = (u[num] / (u[den] + 1e-5) - v[num] / (v[den] + 1e-5)).abs();
                margin = margin.min(len).min(slope);
            }
        }
    }
    margin
}

pub fn tps_loss_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let grid = 4;
    let lattice = ControlGrid::lattice(grid, Rect::new(0.0, 0.0, 30.0, 30.0)).unwrap();
    let pts = loop {
        let p: Vec<[f64; 2]> =
            lattice.sources.iter().map(|s| [s[0] + r.gen_range(-2.0..2.0), s[1] + r.gen_range(-2.0..2.0)]).collect();
        if constraint_margin(&p, grid) > 0.02 {
            break p;
        }
    };
    let (warped, truth) = separated_pair(&mut r, &[4, 4, 3], 0.05);
    let t = Tensor64::from_fn(&[pts.len(), 2], |k| pts[k / 2][k % 2]);
    let cot = scalar_cotangent(&mut r);
    GradCase {
        op: Arc::new(TpsLoss { grid, weights: TpsLossWeights::default() }),
        inputs: vec![warped, truth, t],
        cotangent: cot,
    }
}

pub fn fuse_attention_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let tps = uniform(&mut r, &[4, 5, 3], 0.0, 1.0);
    let gen = uniform(&mut r, &[4, 5, 3], 0.0, 1.0);
    let m = uniform(&mut r, &[4, 5], 0.0, 1.0);
    let cot = uniform(&mut r, &[4, 5, 3], -1.0, 1.0);
    GradCase { op: Arc::new(FuseAttention), inputs: vec![tps, gen, m], cotangent: cot }
}

pub fn attention_regularizer_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let m = Tensor64::from_fn(&[4, 5], |_| {
        let s = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
        1.0 + s * r.gen_range(0.05..1.0)
    });
    let cot = scalar_cotangent(&mut r);
    GradCase { op: Arc::new(AttentionRegularizer), inputs: vec![m], cotangent: cot }
}

fn pyramid_inputs(r: &mut ChaCha8Rng) -> Vec<Tensor64> {
    let shapes = [[4, 4, 3], [2, 2, 5]];
    let a: Vec<Tensor64> = shapes.iter().map(|s| uniform(r, s, -3.0, 3.0)).collect();
    let b: Vec<Tensor64> = shapes.iter().map(|s| uniform(r, s, -3.0, 3.0)).collect();
    a.into_iter().chain(b).collect()
}

pub fn perceptual_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let inputs = pyramid_inputs(&mut r);
    let cot = scalar_cotangent(&mut r);
    GradCase { op: Arc::new(PerceptualLoss { weights: vec![0.5, 0.5] }), inputs, cotangent: cot }
}

pub fn style_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let inputs = pyramid_inputs(&mut r);
    let cot = scalar_cotangent(&mut r);
    GradCase { op: Arc::new(StyleLoss { weights: vec![1.0, 1.0] }), inputs, cotangent: cot }
}

/// Smallest gap between the two best candidates of every min and max the
/// contextual loss takes.
fn contextual_margin(p: &ContextualParts) -> f64 {
    let gap = |mut v: Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if v.len() < 2 {
            f64::INFINITY
        } else {
            v[1] - v[0]
        }
    };
    let (n, m) = (p.dist.len(), p.dist[0].len());
    let row_gaps = p.dist.iter().map(|row| gap(row.clone())).fold(f64::INFINITY, f64::min);
    let row_min = p.dist.iter().map(|row| row.iter().copied().fold(f64::INFINITY, f64::min)).fold(f64::INFINITY, f64::min);
    let col_gaps = (0..m)
        .map(|j| gap((0..n).map(|i| -p.affinity[i][j]).collect()))
        .fold(f64::INFINITY, f64::min);
    row_gaps.min(col_gaps).min(row_min)
}

pub fn contextual_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let (x, y) = loop {
        let x = uniform(&mut r, &[4, 3], -4.0, 4.0);
        let y = uniform(&mut r, &[5, 3], -4.0, 4.0);
        if contextual_margin(&contextual_oracle(&x, &y, 0.5)) > 0.02 {
            break (x, y);
        }
    };
    let cot = scalar_cotangent(&mut r);
    GradCase { op: Arc::new(ContextualLoss::default()), inputs: vec![x, y], cotangent: cot }
}

pub fn adversarial_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let real = uniform(&mut r, &[6], 0.05, 0.95);
    let fake = uniform(&mut r, &[6], 0.05, 0.95);
    let cot = scalar_cotangent(&mut r);
    GradCase { op: Arc::new(AdversarialLoss), inputs: vec![real, fake], cotangent: cot }
}

pub fn l1_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let (a, b) = separated_pair(&mut r, &[3, 4, 2], 0.05);
    let cot = scalar_cotangent(&mut r);
    GradCase { op: Arc::new(L1Loss), inputs: vec![a, b], cotangent: cot }
}

pub fn total_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let inputs = (0..8).map(|_| Tensor64::scalar(r.gen_range(-2.0..2.0))).collect();
    let cot = scalar_cotangent(&mut r);
    GradCase { op: Arc::new(TotalLoss { weights: LossWeights::default() }), inputs, cotangent: cot }
}

pub fn cross_entropy_case(seed: u64) -> GradCase {
    let mut r = rng(seed);
    let logits = uniform(&mut r, &[3, 3, LABEL_COUNT], -3.0, 3.0);
    let labels = (0..9).map(|_| r.gen_range(0..LABEL_COUNT as u8)).collect();
    let truth = SegmentationMap::new(3, 3, labels).unwrap();
    let cot = scalar_cotangent(&mut r);
    GradCase { op: Arc::new(CrossEntropy { truth }), inputs: vec![logits], cotangent: cot }
}
