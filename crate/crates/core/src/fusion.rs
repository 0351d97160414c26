//! Attention-mask compositing and the clothes/body masking that feeds it.

use crate::autodiff::Differentiable;
use crate::error::{Error, Result};
use crate::layout::{LabelPalette, SegmentationMap};
use crate::reduce::pairwise_sum_by;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `H x W` mask with values clamped to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask<T> {
    mask: Tensor<T>,
}

impl<T: Scalar> AttentionMask<T> {
    pub fn new(mask: Tensor<T>) -> Result<Self> {
        let (h, w, c) = mask.hwc()?;
        if c != 1 {
            return Err(Error::shape(format!("attention mask must be single-channel, got {c}")));
        }
        mask.check_finite("attention mask")?;
        let mask = mask.reshape(&[h, w])?.map(|v| v.max(T::zero()).min(T::one()));
        Ok(AttentionMask { mask })
    }

    pub fn constant(h: usize, w: usize, v: T) -> Result<Self> {
        Self::new(Tensor::filled(&[h, w], v))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.mask
    }
}

fn as_hwc<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = t.hwc()?;
    t.reshape(&[h, w, c])
}

fn per_pixel<T: Scalar>(x: &Tensor<T>, mask: &Tensor<T>, what: &str) -> Result<()> {
    let (h, w, _) = x.hwc()?;
    if mask.dims() != [h, w] {
        return Err(Error::shape(format!("{what}: mask {:?} vs image {:?}", mask.dims(), x.dims())));
    }
    Ok(())
}

/// Multiplies every channel of `warped` by a binary `H x W` mask.
pub fn masked_clothes<T: Scalar>(warped: &Tensor<T>, clothing_mask: &Tensor<T>) -> Result<Tensor<T>> {
    per_pixel(warped, clothing_mask, "masked_clothes")?;
    if let Some(v) = clothing_mask.data().iter().find(|&&v| v != T::zero() && v != T::one()) {
        return Err(Error::invalid(format!("masked_clothes: mask value {v} is not 0 or 1")));
    }
    let (_, _, c) = warped.hwc()?;
    let m = clothing_mask.data();
    Ok(Tensor::from_fn(warped.dims(), |i| warped.data()[i] * m[i / c]))
}

/// Keeps body pixels labelled with a preserved or limb label and zeroes the
/// rest.
pub fn extract_nontarget<T: Scalar>(body: &Tensor<T>, layout: &SegmentationMap) -> Result<Tensor<T>> {
    let keep = layout.mask::<T>(|l| LabelPalette::is_preserved(l) || LabelPalette::is_limb(l));
    per_pixel(body, &keep, "extract_nontarget")?;
    let (_, _, c) = body.hwc()?;
    Ok(Tensor::from_fn(body.dims(), |i| body.data()[i] * keep.data()[i / c]))
}

/// `tps * M + gen * (1 - M)` with the mask broadcast over channels.
pub fn fuse_attention<T: Scalar>(tps: &Tensor<T>, gen: &Tensor<T>, m: &AttentionMask<T>) -> Result<Tensor<T>> {
    let out = FuseAttention.forward(&[&as_hwc(tps)?, &as_hwc(gen)?, m.tensor()])?;
    out.reshape(tps.dims())
}

/// Mean of `|1 - M|`.
pub fn attention_regularizer<T: Scalar>(m: &AttentionMask<T>) -> f64 {
    let d = m.tensor().data();
    pairwise_sum_by(d.len(), |i| (T::one() - d[i]).abs().as_f64()) / d.len() as f64
}

/// Differentiable over `(tps, gen, mask)`.
#[derive(Debug, Clone, Copy)]
pub struct FuseAttention;

impl<T: Scalar> Differentiable<T> for FuseAttention {
    fn name(&self) -> &str {
        "fuse_attention"
    }
    fn arity(&self) -> usize {
        3
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (tps, gen, m) = (inputs[0], inputs[1], inputs[2]);
        tps.require_same_shape(gen, "fuse_attention")?;
        per_pixel(tps, m, "fuse_attention")?;
        let (_, _, c) = tps.hwc()?;
        Ok(Tensor::from_fn(tps.dims(), |i| {
            let a = m.data()[i / c];
            tps.data()[i] * a + gen.data()[i] * (T::one() - a)
        }))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (tps, gen, m) = (inputs[0], inputs[1], inputs[2]);
        let (_, _, c) = tps.hwc()?;
        let gd = g.data();
        let g_tps = Tensor::from_fn(tps.dims(), |i| gd[i] * m.data()[i / c]);
        let g_gen = Tensor::from_fn(tps.dims(), |i| gd[i] * (T::one() - m.data()[i / c]));
        let g_m = Tensor::from_fn(m.dims(), |p| {
            pairwise_sum_by(c, |k| {
                let i = p * c + k;
                gd[i] * (tps.data()[i] - gen.data()[i])
            })
        });
        Ok(vec![g_tps, g_gen, g_m])
    }
}

/// Differentiable form of [`attention_regularizer`] over the raw mask.
#[derive(Debug, Clone, Copy)]
pub struct AttentionRegularizer;

impl<T: Scalar> Differentiable<T> for AttentionRegularizer {
    fn name(&self) -> &str {
        "attention_regularizer"
    }
    fn arity(&self) -> usize {
        1
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let d = inputs[0].data();
        let n = T::of(d.len() as f64);
        Ok(Tensor::scalar(pairwise_sum_by(d.len(), |i| (T::one() - d[i]).abs()) / n))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let m = inputs[0];
        let scale = g.item() / T::of(m.len() as f64);
        Ok(vec![m.map(|v| {
            let r = T::one() - v;
            if r > T::zero() {
                -scale
            } else if r < T::zero() {
                scale
            } else {
                T::zero()
            }
        })])
    }
}
