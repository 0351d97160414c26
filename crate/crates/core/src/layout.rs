//! Segmentation maps over a fixed ten-label palette: one-hot encoding,
//! warping through a correspondence matrix, merging preserved regions and
//! the pixel-level cross-entropy.

use rayon::prelude::*;

use crate::autodiff::Differentiable;
use crate::correspondence::CorrespondenceMatrix;
use crate::error::{Error, Result};
use crate::reduce::pairwise_sum_by;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::warping::{dense_warp, warp_image};

pub const LABEL_COUNT: usize = 10;

pub const BACKGROUND: u8 = 0;
pub const HEAD: u8 = 1;
pub const UPPER_CLOTHES: u8 = 2;
pub const LOWER_CLOTHES: u8 = 3;
pub const LEFT_ARM: u8 = 4;
pub const RIGHT_ARM: u8 = 5;
pub const LEFT_LEG: u8 = 6;
pub const RIGHT_LEG: u8 = 7;
pub const LEFT_SHOE: u8 = 8;
pub const RIGHT_SHOE: u8 = 9;

/// The label table and its semantic groups.
pub struct LabelPalette;

impl LabelPalette {
    pub const NAMES: [&'static str; LABEL_COUNT] = [
        "background",
        "head",
        "upper-clothes",
        "lower-clothes",
        "left-arm",
        "right-arm",
        "left-leg",
        "right-leg",
        "left-shoe",
        "right-shoe",
    ];
    pub const CLOTHES: [u8; 2] = [UPPER_CLOTHES, LOWER_CLOTHES];
    pub const LIMBS: [u8; 4] = [LEFT_ARM, RIGHT_ARM, LEFT_LEG, RIGHT_LEG];
    pub const PRESERVED: [u8; 3] = [HEAD, LEFT_SHOE, RIGHT_SHOE];

    pub fn contains(label: u8) -> bool {
        (label as usize) < LABEL_COUNT
    }

    pub fn is_clothes(label: u8) -> bool {
        Self::CLOTHES.contains(&label)
    }

    pub fn is_limb(label: u8) -> bool {
        Self::LIMBS.contains(&label)
    }

    pub fn is_preserved(label: u8) -> bool {
        Self::PRESERVED.contains(&label)
    }
}

/// `H x W` map of palette labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl SegmentationMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::shape(format!(
                "segmentation map {height}x{width} needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&l| !LabelPalette::contains(l)) {
            return Err(Error::invalid(format!(
                "label {} at pixel ({}, {}) is outside the palette",
                labels[i],
                i / width,
                i % width
            )));
        }
        Ok(SegmentationMap { height, width, labels })
    }

    pub fn filled(height: usize, width: usize, label: u8) -> Result<Self> {
        Self::new(height, width, vec![label; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn at(&self, r: usize, c: usize) -> u8 {
        self.labels[r * self.width + c]
    }

    /// Binary `H x W` mask of pixels whose label satisfies `keep`.
    pub fn mask<T: Scalar>(&self, keep: impl Fn(u8) -> bool) -> Tensor<T> {
        Tensor::from_fn(&[self.height, self.width], |i| if keep(self.labels[i]) { T::one() } else { T::zero() })
    }

    /// Keeps labels satisfying `keep` and sets the rest to background.
    pub fn select(&self, keep: impl Fn(u8) -> bool) -> Self {
        let labels = self.labels.iter().map(|&l| if keep(l) { l } else { BACKGROUND }).collect();
        SegmentationMap { height: self.height, width: self.width, labels }
    }
}

pub fn one_hot_encode<T: Scalar>(s: &SegmentationMap) -> Tensor<T> {
    Tensor::from_fn(&[s.height, s.width, LABEL_COUNT], |i| {
        if s.labels[i / LABEL_COUNT] as usize == i % LABEL_COUNT {
            T::one()
        } else {
            T::zero()
        }
    })
}

/// Per-pixel argmax over the last axis; ties go to the lowest label.
pub fn argmax_labels<T: Scalar>(t: &Tensor<T>) -> Result<SegmentationMap> {
    let (h, w, c) = t.hwc()?;
    if c != LABEL_COUNT {
        return Err(Error::shape(format!("expected {LABEL_COUNT} label channels, got {c}")));
    }
    let labels = t
        .data()
        .par_chunks(c)
        .map(|px| {
            let mut best = 0;
            for (k, &v) in px.iter().enumerate().skip(1) {
                if v > px[best] {
                    best = k;
                }
            }
            best as u8
        })
        .collect();
    SegmentationMap::new(h, w, labels)
}

fn transferable_one_hot<T: Scalar>(s: &SegmentationMap) -> Tensor<T> {
    one_hot_encode(&s.select(|l| !LabelPalette::is_preserved(l)))
}

/// Warps a label map given on the matrix's source grid onto its row grid.
/// Preserved labels are turned into background before warping.
pub fn warp_layout<T: Scalar>(m: &CorrespondenceMatrix<T>, s: &SegmentationMap, alpha: T) -> Result<SegmentationMap> {
    argmax_labels(&warp_layout_probabilities(m, s, alpha, false)?)
}

/// Full-resolution variant: each label channel goes through
/// [`warp_image`] and the result is argmaxed per pixel.
pub fn warp_layout_image<T: Scalar>(
    m: &CorrespondenceMatrix<T>,
    s: &SegmentationMap,
    alpha: T,
) -> Result<SegmentationMap> {
    argmax_labels(&warp_layout_probabilities(m, s, alpha, true)?)
}

/// Warped one-hot channels before the argmax, at grid or image resolution.
pub fn warp_layout_probabilities<T: Scalar>(
    m: &CorrespondenceMatrix<T>,
    s: &SegmentationMap,
    alpha: T,
    full_resolution: bool,
) -> Result<Tensor<T>> {
    let x = transferable_one_hot::<T>(s);
    if full_resolution {
        warp_image(m, &x, alpha)
    } else {
        dense_warp(m, &x, alpha)
    }
}

/// `pred` with every preserved label of `target_preserved` written over it.
pub fn merge_layout(pred: &SegmentationMap, target_preserved: &SegmentationMap) -> Result<SegmentationMap> {
    if (pred.height, pred.width) != (target_preserved.height, target_preserved.width) {
        return Err(Error::shape(format!(
            "merge_layout: {}x{} vs {}x{}",
            pred.height, pred.width, target_preserved.height, target_preserved.width
        )));
    }
    let labels = pred
        .labels
        .iter()
        .zip(&target_preserved.labels)
        .map(|(&p, &t)| if LabelPalette::is_preserved(t) { t } else { p })
        .collect();
    Ok(SegmentationMap { height: pred.height, width: pred.width, labels })
}

/// Logits whose softmax reproduces `probs` up to a floor of `1e-6`.
pub fn probabilities_to_logits<T: Scalar>(probs: &Tensor<T>) -> Tensor<T> {
    let floor = T::of(1e-6);
    probs.map(|p| p.max(floor).ln())
}

pub fn cross_entropy_loss<T: Scalar>(logits: &Tensor<T>, truth: &SegmentationMap) -> Result<f64> {
    let op = CrossEntropy { truth: truth.clone() };
    Ok(op.forward(&[logits])?.item().as_f64())
}

/// Mean over pixels of `-log softmax(logits)[truth]`.
#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub truth: SegmentationMap,
}

impl CrossEntropy {
    fn check<T: Scalar>(&self, logits: &Tensor<T>) -> Result<()> {
        logits.require_rank(3, "cross_entropy_loss logits")?;
        if logits.dims() != [self.truth.height, self.truth.width, LABEL_COUNT] {
            return Err(Error::shape(format!(
                "cross_entropy_loss: logits {:?} vs labels {}x{}",
                logits.dims(),
                self.truth.height,
                self.truth.width
            )));
        }
        Ok(())
    }
}

fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    m + pairwise_sum_by(row.len(), |k| (row[k] - m).exp()).ln()
}

impl<T: Scalar> Differentiable<T> for CrossEntropy {
    fn name(&self) -> &str {
        "cross_entropy_loss"
    }
    fn arity(&self) -> usize {
        1
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let logits = inputs[0];
        self.check(logits)?;
        let d = logits.data();
        let n = self.truth.labels.len();
        let total = pairwise_sum_by(n, |p| {
            let row = &d[p * LABEL_COUNT..(p + 1) * LABEL_COUNT];
            log_sum_exp(row) - row[self.truth.labels[p] as usize]
        });
        Ok(Tensor::scalar(total / T::of(n as f64)))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let logits = inputs[0];
        self.check(logits)?;
        let scale = g.item() / T::of(self.truth.labels.len() as f64);
        let mut out = logits.data().to_vec();
        out.par_chunks_mut(LABEL_COUNT).zip(self.truth.labels.par_iter()).for_each(|(row, &l)| {
            let lse = log_sum_exp(row);
            for (k, v) in row.iter_mut().enumerate() {
                let target = if k == l as usize { T::one() } else { T::zero() };
                *v = scale * ((*v - lse).exp() - target);
            }
        });
        Ok(vec![Tensor::new(logits.dims().to_vec(), out)?])
    }
}
