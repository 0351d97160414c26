use rayon::prelude::*;

use crate::autodiff::Differentiable;
use crate::correspondence::CorrespondenceMatrix;
use crate::error::{Error, Result};
use crate::ops::{area_downsample, bilinear_upsample, matmul, matmul_nt, softmax_rows, softmax_rows_vjp, transpose2};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Softmax sharpness used for dense warping.
pub const DEFAULT_ALPHA: f64 = 100.0;

/// `out(u) = sum_v softmax_v(alpha * M(u, v)) * x(v)`, with `x` given on the
/// matrix's column grid and the result on its row grid.
pub fn dense_warp<T: Scalar>(m: &CorrespondenceMatrix<T>, x: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    let (h, w, _) = x.hwc()?;
    if (h, w) != (m.cols.grid_h, m.cols.grid_w) {
        return Err(Error::shape(format!(
            "dense_warp: input is {h}x{w} but the matrix source grid is {}x{}",
            m.cols.grid_h, m.cols.grid_w
        )));
    }
    DenseWarp { alpha: alpha.as_f64(), out_h: m.rows.grid_h, out_w: m.rows.grid_w }.apply(&m.scores, x)
}

/// Full-resolution dense warp: area-downsample to the matrix grid, warp,
/// then bilinearly upsample back by the same factor.
pub fn warp_image<T: Scalar>(m: &CorrespondenceMatrix<T>, img: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    let img3;
    let img = if img.rank() == 2 {
        img3 = img.reshape(&[img.dims()[0], img.dims()[1], 1])?;
        &img3
    } else {
        img
    };
    let (h, w, _) = img.hwc()?;
    let (gh, gw) = (m.cols.grid_h, m.cols.grid_w);
    if h % gh != 0 || w % gw != 0 || h / gh != w / gw {
        return Err(Error::shape(format!(
            "warp_image: {h}x{w} is not an integer multiple of the {gh}x{gw} grid"
        )));
    }
    let factor = h / gh;
    let small = area_downsample(img, factor)?;
    let warped = dense_warp(m, &small, alpha)?;
    bilinear_upsample(&warped, factor)
}

/// Differentiable dense warp over `(scores, x)`.
#[derive(Debug, Clone, Copy)]
pub struct DenseWarp {
    pub alpha: f64,
    pub out_h: usize,
    pub out_w: usize,
}

impl DenseWarp {
    fn apply<T: Scalar>(&self, scores: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (h, w, c) = x.hwc()?;
        scores.require_rank(2, "dense_warp scores")?;
        if scores.dims() != [self.out_h * self.out_w, h * w] {
            return Err(Error::shape(format!(
                "dense_warp: scores {:?} vs {}x{} -> {}x{}",
                scores.dims(),
                h,
                w,
                self.out_h,
                self.out_w
            )));
        }
        let p = softmax_rows(scores, T::of(self.alpha))?;
        let flat = x.reshape(&[h * w, c])?;
        matmul(&p, &flat)?.reshape(&[self.out_h, self.out_w, c])
    }
}

impl<T: Scalar> Differentiable<T> for DenseWarp {
    fn name(&self) -> &str {
        "dense_warp"
    }
    fn arity(&self) -> usize {
        2
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        self.apply(inputs[0], inputs[1])
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (scores, x) = (inputs[0], inputs[1]);
        let (h, w, c) = x.hwc()?;
        let alpha = T::of(self.alpha);
        let p = softmax_rows(scores, alpha)?;
        let g2 = g.reshape(&[self.out_h * self.out_w, c])?;
        let x2 = x.reshape(&[h * w, c])?;
        // dL/dx = P^T g ; dL/dP = g x^T
        let gx = matmul(&transpose2(&p)?, &g2)?.reshape(x.dims())?;
        let gp = matmul_nt(&g2, &x2)?;
        let gs = softmax_rows_vjp(&p, &gp, alpha);
        debug_assert!(gs.data().par_iter().all(|v| v.is_finite()));
        Ok(vec![gs, gx])
    }
}
