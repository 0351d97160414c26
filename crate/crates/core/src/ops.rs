//! Shared numeric operators: sliding-window unfold, row softmax, bilinear
//! sampling, resampling helpers and dense products.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Differentiable;
use crate::error::{Error, Result};
use crate::reduce::{dot, pairwise_sum, pairwise_sum_by};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Square sliding window with zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub size: usize,
    pub stride: usize,
    pub padding: usize,
}

impl WindowSpec {
    pub const fn new(size: usize, stride: usize, padding: usize) -> Self {
        WindowSpec { size, stride, padding }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.stride == 0 {
            return Err(Error::InvalidWindow(format!(
                "size and stride must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of window positions along an axis of length `n`.
    pub fn output_extent(&self, n: usize) -> Option<usize> {
        let padded = n + 2 * self.padding;
        (padded >= self.size && self.size > 0 && self.stride > 0)
            .then(|| (padded - self.size) / self.stride + 1)
    }

    pub fn output_grid(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        match (self.output_extent(h), self.output_extent(w)) {
            (Some(gh), Some(gw)) => Ok((gh, gw)),
            _ => Err(Error::InvalidWindow(format!(
                "window {self:?} does not fit a {h}x{w} input"
            ))),
        }
    }

    /// Continuous input-grid coordinate of the centre of window `k`.
    pub fn center(&self, k: usize) -> f64 {
        (k * self.stride) as f64 - self.padding as f64 + (self.size as f64 - 1.0) / 2.0
    }
}

/// Extracts every window of `x` (`H x W x C`) as one row of the result,
/// windows scanned row-major and channels innermost within a window cell.
pub fn unfold<T: Scalar>(x: &Tensor<T>, spec: WindowSpec) -> Result<Tensor<T>> {
    x.require_rank(3, "unfold")?;
    let (h, w, c) = x.hwc()?;
    let (gh, gw) = spec.output_grid(h, w)?;
    let k = spec.size;
    let cols = k * k * c;
    let mut out = vec![T::zero(); gh * gw * cols];
    let src = x.data();
    out.par_chunks_mut(cols).enumerate().for_each(|(cell, row)| {
        let (oi, oj) = (cell / gw, cell % gw);
        for di in 0..k {
            let i = (oi * spec.stride + di) as isize - spec.padding as isize;
            if i < 0 || i >= h as isize {
                continue;
            }
            for dj in 0..k {
                let j = (oj * spec.stride + dj) as isize - spec.padding as isize;
                if j < 0 || j >= w as isize {
                    continue;
                }
                let from = (i as usize * w + j as usize) * c;
                let to = (di * k + dj) * c;
                row[to..to + c].copy_from_slice(&src[from..from + c]);
            }
        }
    });
    Ok(Tensor::from_parts(vec![gh * gw, cols], out))
}

/// Adjoint of [`unfold`]: scatters window rows back onto an `H x W x C` grid.
pub fn fold<T: Scalar>(rows: &Tensor<T>, h: usize, w: usize, c: usize, spec: WindowSpec) -> Result<Tensor<T>> {
    let (gh, gw) = spec.output_grid(h, w)?;
    let k = spec.size;
    if rows.dims() != [gh * gw, k * k * c] {
        return Err(Error::shape(format!(
            "fold: expected {}x{}, got {:?}",
            gh * gw,
            k * k * c,
            rows.dims()
        )));
    }
    let mut out = vec![T::zero(); h * w * c];
    for cell in 0..gh * gw {
        let (oi, oj) = (cell / gw, cell % gw);
        let row = &rows.data()[cell * k * k * c..(cell + 1) * k * k * c];
        for di in 0..k {
            let i = (oi * spec.stride + di) as isize - spec.padding as isize;
            if i < 0 || i >= h as isize {
                continue;
            }
            for dj in 0..k {
                let j = (oj * spec.stride + dj) as isize - spec.padding as isize;
                if j < 0 || j >= w as isize {
                    continue;
                }
                let to = (i as usize * w + j as usize) * c;
                let from = (di * k + dj) * c;
                for ch in 0..c {
                    out[to + ch] = out[to + ch] + row[from + ch];
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![h, w, c], out))
}

/// Row-wise `softmax(alpha * s)` with max subtraction.
pub fn softmax_rows<T: Scalar>(s: &Tensor<T>, alpha: T) -> Result<Tensor<T>> {
    s.require_rank(2, "softmax_rows")?;
    if alpha.is_nan() || alpha <= T::zero() {
        return Err(Error::invalid(format!("softmax alpha must be > 0, got {alpha}")));
    }
    let m = s.dims()[1];
    let mut out = s.data().to_vec();
    out.par_chunks_mut(m).for_each(|row| softmax_in_place(row, alpha));
    Ok(Tensor::from_parts(s.dims().to_vec(), out))
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T], alpha: T) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(alpha * v));
    for v in row.iter_mut() {
        *v = (alpha * *v - max).exp();
    }
    let total = pairwise_sum(row);
    for v in row.iter_mut() {
        *v = *v / total;
    }
}

/// Row-softmax VJP: `alpha * p * (g - <p, g>)`.
pub(crate) fn softmax_rows_vjp<T: Scalar>(p: &Tensor<T>, g: &Tensor<T>, alpha: T) -> Tensor<T> {
    let m = p.dims()[1];
    let mut out = vec![T::zero(); p.len()];
    out.par_chunks_mut(m).enumerate().for_each(|(r, row)| {
        let pr = &p.data()[r * m..(r + 1) * m];
        let gr = &g.data()[r * m..(r + 1) * m];
        let inner = dot(pr, gr);
        for ((o, &pv), &gv) in row.iter_mut().zip(pr).zip(gr) {
            *o = alpha * pv * (gv - inner);
        }
    });
    Tensor::from_parts(p.dims().to_vec(), out)
}

#[derive(Debug, Clone, Copy)]
pub struct SoftmaxRows {
    pub alpha: f64,
}

impl<T: Scalar> Differentiable<T> for SoftmaxRows {
    fn name(&self) -> &str {
        "softmax_rows"
    }
    fn arity(&self) -> usize {
        1
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        softmax_rows(inputs[0], T::of(self.alpha))
    }
    fn vjp(&self, _: &[&Tensor<T>], output: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        Ok(vec![softmax_rows_vjp(output, g, T::of(self.alpha))])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Unfold {
    pub spec: WindowSpec,
}

impl<T: Scalar> Differentiable<T> for Unfold {
    fn name(&self) -> &str {
        "unfold"
    }
    fn arity(&self) -> usize {
        1
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        unfold(inputs[0], self.spec)
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (h, w, c) = inputs[0].hwc()?;
        Ok(vec![fold(g, h, w, c, self.spec)?])
    }
}

/// Four-neighbour stencil of a continuous `(row, col)` coordinate.
#[derive(Debug, Clone, Copy)]
struct Stencil {
    r0: i64,
    c0: i64,
    fr: f64,
    fc: f64,
}

impl Stencil {
    fn new(r: f64, c: f64) -> Self {
        let (rf, cf) = (r.floor(), c.floor());
        // Far-away coordinates collapse onto an exterior cell.
        let clamp = |v: f64| v.clamp(-4.0e9, 4.0e9) as i64;
        Stencil { r0: clamp(rf), c0: clamp(cf), fr: r - rf, fc: c - cf }
    }

    /// `(row, col, weight)` for the four neighbours.
    fn taps(&self) -> [(i64, i64, f64); 4] {
        let (fr, fc) = (self.fr, self.fc);
        [
            (self.r0, self.c0, (1.0 - fr) * (1.0 - fc)),
            (self.r0, self.c0 + 1, (1.0 - fr) * fc),
            (self.r0 + 1, self.c0, fr * (1.0 - fc)),
            (self.r0 + 1, self.c0 + 1, fr * fc),
        ]
    }
}

#[inline]
fn pixel_offset(h: usize, w: usize, r: i64, c: i64) -> Option<usize> {
    (r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w).then(|| r as usize * w + c as usize)
}

/// Samples `img` (`H x W x C`) at continuous `(row, col)` coordinates
/// (`H' x W' x 2`, pixel centres on integers). Exterior reads are zero.
pub fn bilinear_sample<T: Scalar>(img: &Tensor<T>, coords: &Tensor<T>) -> Result<Tensor<T>> {
    img.require_rank(3, "bilinear_sample image")?;
    coords.require_rank(3, "bilinear_sample coords")?;
    if coords.dims()[2] != 2 {
        return Err(Error::shape(format!("coords must be H' x W' x 2, got {:?}", coords.dims())));
    }
    let (h, w, c) = img.hwc()?;
    let (oh, ow) = (coords.dims()[0], coords.dims()[1]);
    let mut out = vec![T::zero(); oh * ow * c];
    let src = img.data();
    let cd = coords.data();
    out.par_chunks_mut(c).enumerate().for_each(|(p, px)| {
        let st = Stencil::new(cd[2 * p].as_f64(), cd[2 * p + 1].as_f64());
        for (r, col, wt) in st.taps() {
            if let Some(off) = pixel_offset(h, w, r, col) {
                let wt = T::of(wt);
                for ch in 0..c {
                    px[ch] = px[ch] + wt * src[off * c + ch];
                }
            }
        }
    });
    Ok(Tensor::from_parts(vec![oh, ow, c], out))
}

/// Cotangents of [`bilinear_sample`] with respect to the image and the
/// coordinates.
pub fn bilinear_sample_vjp<T: Scalar>(
    img: &Tensor<T>,
    coords: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (h, w, c) = img.hwc()?;
    let (oh, ow) = (coords.dims()[0], coords.dims()[1]);
    let src = img.data();
    let cd = coords.data();
    let gd = g.data();
    let mut g_img = vec![T::zero(); img.len()];
    let mut g_coords = vec![T::zero(); coords.len()];
    let value = |r: i64, col: i64, ch: usize| -> f64 {
        pixel_offset(h, w, r, col).map_or(0.0, |off| src[off * c + ch].as_f64())
    };
    for p in 0..oh * ow {
        let st = Stencil::new(cd[2 * p].as_f64(), cd[2 * p + 1].as_f64());
        for (r, col, wt) in st.taps() {
            if let Some(off) = pixel_offset(h, w, r, col) {
                for ch in 0..c {
                    g_img[off * c + ch] = g_img[off * c + ch] + T::of(wt) * gd[p * c + ch];
                }
            }
        }
        let (r0, c0, fr, fc) = (st.r0, st.c0, st.fr, st.fc);
        let mut dr = 0.0;
        let mut dc = 0.0;
        for ch in 0..c {
            let gv = gd[p * c + ch].as_f64();
            let (v00, v01) = (value(r0, c0, ch), value(r0, c0 + 1, ch));
            let (v10, v11) = (value(r0 + 1, c0, ch), value(r0 + 1, c0 + 1, ch));
            dr += gv * ((1.0 - fc) * (v10 - v00) + fc * (v11 - v01));
            dc += gv * ((1.0 - fr) * (v01 - v00) + fr * (v11 - v10));
        }
        g_coords[2 * p] = T::of(dr);
        g_coords[2 * p + 1] = T::of(dc);
    }
    Ok((
        Tensor::from_parts(img.dims().to_vec(), g_img),
        Tensor::from_parts(coords.dims().to_vec(), g_coords),
    ))
}

#[derive(Debug, Clone, Copy)]
pub struct BilinearSample;

impl<T: Scalar> Differentiable<T> for BilinearSample {
    fn name(&self) -> &str {
        "bilinear_sample"
    }
    fn arity(&self) -> usize {
        2
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        bilinear_sample(inputs[0], inputs[1])
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (gi, gc) = bilinear_sample_vjp(inputs[0], inputs[1], g)?;
        Ok(vec![gi, gc])
    }
}

/// Box-filter downsampling by an integer factor.
pub fn area_downsample<T: Scalar>(img: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    img.require_rank(3, "area_downsample")?;
    let (h, w, c) = img.hwc()?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::shape(format!(
            "area_downsample: {h}x{w} is not divisible by factor {factor}"
        )));
    }
    let (oh, ow) = (h / factor, w / factor);
    let n = T::of((factor * factor) as f64);
    let src = img.data();
    let mut out = vec![T::zero(); oh * ow * c];
    out.par_chunks_mut(c).enumerate().for_each(|(p, px)| {
        let (oi, oj) = (p / ow, p % ow);
        for (ch, v) in px.iter_mut().enumerate() {
            let s = pairwise_sum_by(factor * factor, |k| {
                let (di, dj) = (k / factor, k % factor);
                src[((oi * factor + di) * w + oj * factor + dj) * c + ch]
            });
            *v = s / n;
        }
    });
    Ok(Tensor::from_parts(vec![oh, ow, c], out))
}

/// Bilinear upsampling by an integer factor, pixel-centre aligned, with the
/// same zero exterior as [`bilinear_sample`].
pub fn bilinear_upsample<T: Scalar>(img: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    img.require_rank(3, "bilinear_upsample")?;
    if factor == 0 {
        return Err(Error::invalid("upsample factor must be >= 1"));
    }
    let (h, w, _) = img.hwc()?;
    let (oh, ow) = (h * factor, w * factor);
    let f = factor as f64;
    let coords = Tensor::from_fn(&[oh, ow, 2], |k| {
        let p = k / 2;
        let v = if k % 2 == 0 { p / ow } else { p % ow };
        T::of((v as f64 + 0.5) / f - 0.5)
    });
    bilinear_sample(img, &coords)
}

pub fn transpose2<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    a.require_rank(2, "transpose")?;
    let (n, m) = (a.dims()[0], a.dims()[1]);
    Ok(Tensor::from_fn(&[m, n], |k| a.data()[(k % n) * m + k / n]))
}

/// `a * bt^T` for row-major `a: N x K` and `bt: M x K`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, bt: &Tensor<T>) -> Result<Tensor<T>> {
    a.require_rank(2, "matmul lhs")?;
    bt.require_rank(2, "matmul rhs")?;
    let (n, k) = (a.dims()[0], a.dims()[1]);
    let m = bt.dims()[0];
    if bt.dims()[1] != k {
        return Err(Error::shape(format!(
            "matmul: inner dims differ {:?} vs {:?}^T",
            a.dims(),
            bt.dims()
        )));
    }
    let mut out = vec![T::zero(); n * m];
    out.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        let ai = &a.data()[i * k..(i + 1) * k];
        for (j, o) in row.iter_mut().enumerate() {
            *o = dot(ai, &bt.data()[j * k..(j + 1) * k]);
        }
    });
    Ok(Tensor::from_parts(vec![n, m], out))
}

/// `a * b` for row-major `a: N x K`, `b: K x M`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    matmul_nt(a, &transpose2(b)?)
}
