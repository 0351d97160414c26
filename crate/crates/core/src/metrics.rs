//! Evaluation metrics: SSIM (whole image and masked) and the Inception
//! Score formula over supplied class probabilities.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reduce::pairwise_sum_by;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SsimResult {
    pub mean: f64,
    /// Per-pixel SSIM, `H x W`.
    #[serde(skip)]
    pub map: Tensor<f64>,
}

/// Converts `H x W`, `H x W x 1` or `H x W x 3` input to an `H x W` luma
/// plane in `f64`.
pub fn to_gray<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<f64>> {
    let (h, w, c) = t.hwc()?;
    let d = t.data();
    match c {
        1 => Ok(Tensor::from_fn(&[h, w], |i| d[i].as_f64())),
        3 => Ok(Tensor::from_fn(&[h, w], |i| {
            0.299 * d[3 * i].as_f64() + 0.587 * d[3 * i + 1].as_f64() + 0.114 * d[3 * i + 2].as_f64()
        })),
        _ => Err(Error::shape(format!("ssim expects 1 or 3 channels, got {c}"))),
    }
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    k
}

/// Separable Gaussian filtering with the window truncated at the border and
/// renormalised over the pixels that remain.
fn gaussian_filter(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let k = gaussian_kernel();
    let r = (SSIM_WINDOW / 2) as isize;
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; h * w];
        out.par_chunks_mut(w).enumerate().for_each(|(i, row)| {
            for (j, o) in row.iter_mut().enumerate() {
                let (mut acc, mut norm) = (0.0, 0.0);
                for t in -r..=r {
                    let (ii, jj) = if along_rows { (i as isize + t, j as isize) } else { (i as isize, j as isize + t) };
                    if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < w {
                        let kv = k[(t + r) as usize];
                        acc += kv * src[ii as usize * w + jj as usize];
                        norm += kv;
                    }
                }
                *o = acc / norm;
            }
        });
        out
    };
    pass(&pass(x, false), true)
}

/// SSIM with an `11 x 11` Gaussian window (`sigma = 1.5`), `K1 = 0.01`,
/// `K2 = 0.03` and dynamic range 1. Colour inputs are converted to luma.
pub fn ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<SsimResult> {
    let (ga, gb) = (to_gray(a)?, to_gray(b)?);
    ga.require_same_shape(&gb, "ssim")?;
    let (h, w) = (ga.dims()[0], ga.dims()[1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::shape(format!("ssim: {h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    let (x, y) = (ga.data(), gb.data());
    let prod = |f: &dyn Fn(usize) -> f64| (0..h * w).map(f).collect::<Vec<f64>>();
    let mu_x = gaussian_filter(x, h, w);
    let mu_y = gaussian_filter(y, h, w);
    let xx = gaussian_filter(&prod(&|i| x[i] * x[i]), h, w);
    let yy = gaussian_filter(&prod(&|i| y[i] * y[i]), h, w);
    let xy = gaussian_filter(&prod(&|i| x[i] * y[i]), h, w);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let map = Tensor::from_fn(&[h, w], |i| {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sx = xx[i] - mx * mx;
        let sy = yy[i] - my * my;
        let sxy = xy[i] - mx * my;
        ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2))
    });
    let mean = pairwise_sum_by(map.len(), |i| map.data()[i]) / map.len() as f64;
    Ok(SsimResult { mean, map })
}

/// Mean of the SSIM map over pixels where `mask` is nonzero.
pub fn masked_ssim<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, mask: &Tensor<T>) -> Result<f64> {
    let s = ssim(a, b)?;
    let m = to_gray(mask)?;
    m.require_same_shape(&s.map, "masked_ssim mask")?;
    let idx: Vec<usize> = (0..m.len()).filter(|&i| m.data()[i] != 0.0).collect();
    if idx.is_empty() {
        return Err(Error::invalid("masked_ssim: mask is empty"));
    }
    Ok(pairwise_sum_by(idx.len(), |k| s.map.data()[idx[k]]) / idx.len() as f64)
}

/// `exp(mean_i KL(p_i || mean_j p_j))` with `0 ln 0 = 0`.
pub fn inception_score<T: Scalar>(probs: &Tensor<T>) -> Result<f64> {
    probs.require_rank(2, "inception_score")?;
    let (n, k) = (probs.dims()[0], probs.dims()[1]);
    if n == 0 || k == 0 {
        return Err(Error::shape("inception_score: empty probability table"));
    }
    let p: Vec<f64> = probs.data().iter().map(|v| v.as_f64()).collect();
    for i in 0..n {
        let row = &p[i * k..(i + 1) * k];
        if let Some(v) = row.iter().find(|v| **v < 0.0) {
            return Err(Error::invalid(format!("inception_score: row {i} has negative entry {v}")));
        }
        let s = pairwise_sum_by(k, |c| row[c]);
        if (s - 1.0).abs() > 1e-5 {
            return Err(Error::invalid(format!("inception_score: row {i} sums to {s}")));
        }
    }
    let marginal: Vec<f64> = (0..k).map(|c| pairwise_sum_by(n, |i| p[i * k + c]) / n as f64).collect();
    let kl = |i: usize| {
        pairwise_sum_by(k, |c| {
            let v = p[i * k + c];
            if v > 0.0 {
                v * (v / marginal[c]).ln()
            } else {
                0.0
            }
        })
    };
    Ok((pairwise_sum_by(n, kl) / n as f64).exp())
}
