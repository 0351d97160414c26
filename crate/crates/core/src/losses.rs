//! Training losses: perceptual, style, contextual, adversarial and L1 terms
//! and their weighted total.
//!
//! Norms follow the mean convention (averaged over elements) so that values
//! do not depend on resolution.

use serde::{Deserialize, Serialize};

use crate::autodiff::Differentiable;
use crate::correspondence::encode_stages;
use crate::error::{Error, Result};
use crate::reduce::{dot, pairwise_sum_by};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CONTEXTUAL_BANDWIDTH: f64 = 0.5;
pub const CONTEXTUAL_EPS: f64 = 1e-5;
/// Guard added to the cosine denominator.
pub const COSINE_EPS: f64 = 1e-8;
pub const ADVERSARIAL_EPS: f64 = 1e-7;

/// Feature levels `phi_1..phi_N`, each `h x w x C`, with per-level weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T> {
    pub levels: Vec<Tensor<T>>,
    pub weights: Vec<f64>,
}

impl<T: Scalar> FeaturePyramid<T> {
    /// Pyramid with the default weights `1/N`.
    pub fn new(levels: Vec<Tensor<T>>) -> Result<Self> {
        let n = levels.len();
        Self::with_weights(levels, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn with_weights(levels: Vec<Tensor<T>>, weights: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("feature pyramid needs at least one level"));
        }
        if weights.len() != levels.len() {
            return Err(Error::invalid(format!(
                "{} pyramid weights for {} levels",
                weights.len(),
                levels.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(Error::invalid(format!("pyramid weight {w} is not a nonnegative number")));
        }
        for l in &levels {
            l.require_rank(3, "pyramid level")?;
        }
        Ok(FeaturePyramid { levels, weights })
    }

    /// Stand-in feature extractor: the image itself followed by the two
    /// stages of the seeded encoder.
    pub fn from_image(img: &Tensor<T>, seed: u64) -> Result<Self> {
        let (h, w, c) = img.hwc()?;
        let img = img.reshape(&[h, w, c])?;
        let [s1, s2] = encode_stages(&img, seed)?;
        Self::new(vec![img, s1, s2])
    }

    fn check_pair(&self, other: &Self, what: &str) -> Result<()> {
        if self.levels.len() != other.levels.len() {
            return Err(Error::shape(format!(
                "{what}: {} levels vs {}",
                self.levels.len(),
                other.levels.len()
            )));
        }
        for (j, (a, b)) in self.levels.iter().zip(&other.levels).enumerate() {
            a.require_same_shape(b, &format!("{what} level {j}"))?;
        }
        Ok(())
    }
}

fn pyramid_inputs<'a, T: Scalar>(a: &'a FeaturePyramid<T>, b: &'a FeaturePyramid<T>) -> Vec<&'a Tensor<T>> {
    a.levels.iter().chain(&b.levels).collect()
}

/// `sum_j lambda_j * sqrt(mean((a_j - b_j)^2))`.
pub fn perceptual_loss<T: Scalar>(a: &FeaturePyramid<T>, b: &FeaturePyramid<T>) -> Result<f64> {
    a.check_pair(b, "perceptual_loss")?;
    let op = PerceptualLoss { weights: a.weights.clone() };
    Ok(op.forward(&pyramid_inputs(a, b))?.item().as_f64())
}

/// Differentiable over `(a_1..a_N, b_1..b_N)`.
#[derive(Debug, Clone)]
pub struct PerceptualLoss {
    pub weights: Vec<f64>,
}

impl PerceptualLoss {
    fn rms<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
        a.require_same_shape(b, "perceptual_loss")?;
        let (ad, bd) = (a.data(), b.data());
        let ss = pairwise_sum_by(ad.len(), |i| (ad[i] - bd[i]) * (ad[i] - bd[i]));
        Ok((ss / T::of(ad.len() as f64)).sqrt())
    }
}

impl<T: Scalar> Differentiable<T> for PerceptualLoss {
    fn name(&self) -> &str {
        "perceptual_loss"
    }
    fn arity(&self) -> usize {
        2 * self.weights.len()
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let n = self.weights.len();
        let mut total = T::zero();
        for j in 0..n {
            total = total + T::of(self.weights[j]) * Self::rms(inputs[j], inputs[n + j])?;
        }
        Ok(Tensor::scalar(total))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let n = self.weights.len();
        let mut ga = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        for j in 0..n {
            let (a, b) = (inputs[j], inputs[n + j]);
            let rms = Self::rms(a, b)?;
            let scale = if rms > T::zero() {
                g.item() * T::of(self.weights[j]) / (rms * T::of(a.len() as f64))
            } else {
                T::zero()
            };
            let d = a.zip_map(b, |x, y| scale * (x - y))?;
            gb.push(d.map(|v| -v));
            ga.push(d);
        }
        ga.extend(gb);
        Ok(ga)
    }
}

/// `G(c, c') = (1 / hw) sum_p f_c(p) f_c'(p)`.
pub fn gram_matrix<T: Scalar>(f: &Tensor<T>) -> Result<Tensor<T>> {
    f.require_rank(3, "gram_matrix")?;
    let (h, w, c) = f.hwc()?;
    let n = h * w;
    let d = f.data();
    let inv = T::of(1.0 / n as f64);
    let mut g = vec![T::zero(); c * c];
    for a in 0..c {
        for b in a..c {
            let v = pairwise_sum_by(n, |p| d[p * c + a] * d[p * c + b]) * inv;
            g[a * c + b] = v;
            g[b * c + a] = v;
        }
    }
    Tensor::new(vec![c, c], g)
}

/// `sum_j ||G(a_j) - G(b_j)||_F` over the pyramid levels.
pub fn style_loss<T: Scalar>(a: &FeaturePyramid<T>, b: &FeaturePyramid<T>) -> Result<f64> {
    a.check_pair(b, "style_loss")?;
    let op = StyleLoss { weights: vec![1.0; a.levels.len()] };
    Ok(op.forward(&pyramid_inputs(a, b))?.item().as_f64())
}

/// Differentiable over `(a_1..a_N, b_1..b_N)`; level `j` is scaled by
/// `weights[j]`.
#[derive(Debug, Clone)]
pub struct StyleLoss {
    pub weights: Vec<f64>,
}

fn gram_grad<T: Scalar>(f: &Tensor<T>, s: &[T]) -> Tensor<T> {
    // d/dF of <S, F^T F / n> for symmetric S is 2 F S / n.
    let (h, w, c) = f.hwc().expect("rank checked");
    let n = h * w;
    let two_over_n = T::of(2.0 / n as f64);
    let d = f.data();
    Tensor::from_fn(f.dims(), |i| {
        let (p, a) = (i / c, i % c);
        two_over_n * pairwise_sum_by(c, |b| d[p * c + b] * s[b * c + a])
    })
}

impl<T: Scalar> Differentiable<T> for StyleLoss {
    fn name(&self) -> &str {
        "style_loss"
    }
    fn arity(&self) -> usize {
        2 * self.weights.len()
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let n = self.weights.len();
        let mut total = T::zero();
        for j in 0..n {
            let ga = gram_matrix(inputs[j])?;
            let gb = gram_matrix(inputs[n + j])?;
            ga.require_same_shape(&gb, "style_loss channels")?;
            let diff = ga.zip_map(&gb, |x, y| x - y)?;
            total = total + T::of(self.weights[j]) * dot(diff.data(), diff.data()).sqrt();
        }
        Ok(Tensor::scalar(total))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let n = self.weights.len();
        let mut ga = Vec::with_capacity(n);
        let mut gb = Vec::with_capacity(n);
        for j in 0..n {
            let (a, b) = (inputs[j], inputs[n + j]);
            let diff = gram_matrix(a)?.zip_map(&gram_matrix(b)?, |x, y| x - y)?;
            let norm = dot(diff.data(), diff.data()).sqrt();
            let s: Vec<T> = if norm > T::zero() {
                let k = g.item() * T::of(self.weights[j]) / norm;
                diff.data().iter().map(|&v| k * v).collect()
            } else {
                vec![T::zero(); diff.len()]
            };
            ga.push(gram_grad(a, &s));
            let neg: Vec<T> = s.iter().map(|&v| -v).collect();
            gb.push(gram_grad(b, &neg));
        }
        ga.extend(gb);
        Ok(ga)
    }
}

/// Contextual loss between feature sets `x: N x D` and `y: M x D`.
pub fn contextual_loss<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>, h: f64) -> Result<f64> {
    Ok(ContextualLoss { bandwidth: h }.forward(&[x, y])?.item().as_f64())
}

/// Differentiable over `(x, y)`.
///
/// Both sets are centred on the mean of `y`; `d_ij = 1 - cos(x_i, y_j)`,
/// `d~_ij = d_ij / (min_k d_ik + eps)` and `A = softmax_j((1 - d~) / h)`.
/// The loss is `-ln(mean_j max_i A_ij)`.
#[derive(Debug, Clone, Copy)]
pub struct ContextualLoss {
    pub bandwidth: f64,
}

impl Default for ContextualLoss {
    fn default() -> Self {
        ContextualLoss { bandwidth: CONTEXTUAL_BANDWIDTH }
    }
}

struct ContextualForward {
    n: usize,
    m: usize,
    d: usize,
    xc: Vec<f64>,
    yc: Vec<f64>,
    xn: Vec<f64>,
    yn: Vec<f64>,
    dots: Vec<f64>,
    dist: Vec<f64>,
    row_min: Vec<(usize, f64)>,
    rel: Vec<f64>,
    affinity: Vec<f64>,
    col_max: Vec<usize>,
    loss: f64,
}

impl ContextualLoss {
    fn run<T: Scalar>(&self, x: &Tensor<T>, y: &Tensor<T>) -> Result<ContextualForward> {
        x.require_rank(2, "contextual_loss x")?;
        y.require_rank(2, "contextual_loss y")?;
        let (n, d) = (x.dims()[0], x.dims()[1]);
        let m = y.dims()[0];
        if n == 0 || m == 0 || d == 0 || y.dims()[1] != d {
            return Err(Error::shape(format!(
                "contextual_loss: feature sets {:?} and {:?}",
                x.dims(),
                y.dims()
            )));
        }
        if self.bandwidth.is_nan() || self.bandwidth <= 0.0 {
            return Err(Error::invalid(format!("contextual bandwidth must be > 0, got {}", self.bandwidth)));
        }
        let (xd, yd) = (x.data(), y.data());
        let mu: Vec<f64> = (0..d).map(|c| pairwise_sum_by(m, |j| yd[j * d + c].as_f64()) / m as f64).collect();
        let xc: Vec<f64> = (0..n * d).map(|i| xd[i].as_f64() - mu[i % d]).collect();
        let yc: Vec<f64> = (0..m * d).map(|i| yd[i].as_f64() - mu[i % d]).collect();
        let norm = |v: &[f64]| dot(v, v).sqrt();
        let xn: Vec<f64> = xc.chunks(d).map(norm).collect();
        let yn: Vec<f64> = yc.chunks(d).map(norm).collect();
        let mut dots = vec![0.0; n * m];
        let mut dist = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                let p = dot(&xc[i * d..(i + 1) * d], &yc[j * d..(j + 1) * d]);
                dots[i * m + j] = p;
                dist[i * m + j] = 1.0 - p / (xn[i] * yn[j] + COSINE_EPS);
            }
        }
        let mut row_min = Vec::with_capacity(n);
        let mut rel = vec![0.0; n * m];
        let mut affinity = vec![0.0; n * m];
        let h = self.bandwidth;
        for i in 0..n {
            let row = &dist[i * m..(i + 1) * m];
            let (k, r) = row
                .iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |best, (k, v)| if v < best.1 { (k, v) } else { best });
            row_min.push((k, r));
            for j in 0..m {
                rel[i * m + j] = row[j] / (r + CONTEXTUAL_EPS);
            }
            let logits: Vec<f64> = (0..m).map(|j| (1.0 - rel[i * m + j]) / h).collect();
            let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z = pairwise_sum_by(m, |j| (logits[j] - top).exp());
            for j in 0..m {
                affinity[i * m + j] = (logits[j] - top).exp() / z;
            }
        }
        let col_max: Vec<usize> = (0..m)
            .map(|j| (1..n).fold(0, |best, i| if affinity[i * m + j] > affinity[best * m + j] { i } else { best }))
            .collect();
        let mean_max = pairwise_sum_by(m, |j| affinity[col_max[j] * m + j]) / m as f64;
        Ok(ContextualForward {
            n,
            m,
            d,
            xc,
            yc,
            xn,
            yn,
            dots,
            dist,
            row_min,
            rel,
            affinity,
            col_max,
            loss: -mean_max.ln(),
        })
    }
}

impl<T: Scalar> Differentiable<T> for ContextualLoss {
    fn name(&self) -> &str {
        "contextual_loss"
    }
    fn arity(&self) -> usize {
        2
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        Ok(Tensor::scalar(T::of(self.run(inputs[0], inputs[1])?.loss)))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let f = self.run(inputs[0], inputs[1])?;
        let (n, m, d) = (f.n, f.m, f.d);
        let h = self.bandwidth;

        // loss = -ln(sum_j B_j / m)
        let sum_b = pairwise_sum_by(m, |j| f.affinity[f.col_max[j] * m + j]);
        let mut g_aff = vec![0.0; n * m];
        for j in 0..m {
            g_aff[f.col_max[j] * m + j] = -g.item().as_f64() / sum_b;
        }

        let mut g_dist = vec![0.0; n * m];
        for i in 0..n {
            let a = &f.affinity[i * m..(i + 1) * m];
            let ga = &g_aff[i * m..(i + 1) * m];
            let inner = dot(a, ga);
            let (kmin, r) = f.row_min[i];
            let denom = r + CONTEXTUAL_EPS;
            let mut g_r = 0.0;
            for j in 0..m {
                let g_logit = a[j] * (ga[j] - inner);
                let g_rel = -g_logit / h;
                g_dist[i * m + j] += g_rel / denom;
                g_r -= g_rel * f.rel[i * m + j] / denom;
            }
            g_dist[i * m + kmin] += g_r;
        }

        let mut gxc = vec![0.0; n * d];
        let mut gyc = vec![0.0; m * d];
        let mut g_xn = vec![0.0; n];
        let mut g_yn = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                let q = f.xn[i] * f.yn[j] + COSINE_EPS;
                let gc = -g_dist[i * m + j];
                let g_dot = gc / q;
                let g_q = -gc * f.dots[i * m + j] / (q * q);
                g_xn[i] += g_q * f.yn[j];
                g_yn[j] += g_q * f.xn[i];
                for c in 0..d {
                    gxc[i * d + c] += g_dot * f.yc[j * d + c];
                    gyc[j * d + c] += g_dot * f.xc[i * d + c];
                }
            }
        }
        for i in 0..n {
            if f.xn[i] > 0.0 {
                for c in 0..d {
                    gxc[i * d + c] += g_xn[i] * f.xc[i * d + c] / f.xn[i];
                }
            }
        }
        for j in 0..m {
            if f.yn[j] > 0.0 {
                for c in 0..d {
                    gyc[j * d + c] += g_yn[j] * f.yc[j * d + c] / f.yn[j];
                }
            }
        }
        // Centring subtracts mean(y) from both sets.
        let g_mu: Vec<f64> = (0..d)
            .map(|c| -pairwise_sum_by(n, |i| gxc[i * d + c]) - pairwise_sum_by(m, |j| gyc[j * d + c]))
            .collect();
        debug_assert!(f.dist.len() == n * m);
        let gx = Tensor::from_fn(&[n, d], |i| T::of(gxc[i]));
        let gy = Tensor::from_fn(&[m, d], |i| T::of(gyc[i] + g_mu[i % d] / m as f64));
        Ok(vec![gx, gy])
    }
}

/// Flattens an `h x w x C` feature map into an `hw x C` feature set.
pub fn feature_set<T: Scalar>(f: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = f.hwc()?;
    f.reshape(&[h * w, c])
}

/// `mean ln(max(real, eps)) + mean ln(max(1 - fake, eps))`.
pub fn adversarial_loss<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<f64> {
    Ok(AdversarialLoss.forward(&[real, fake])?.item().as_f64())
}

#[derive(Debug, Clone, Copy)]
pub struct AdversarialLoss;

impl AdversarialLoss {
    fn check<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<()> {
        if t.is_empty() {
            return Err(Error::shape(format!("adversarial_loss: empty {what} scores")));
        }
        if let Some(v) = t.data().iter().find(|v| **v < T::zero() || **v > T::one()) {
            return Err(Error::invalid(format!("adversarial_loss: {what} score {v} is outside [0, 1]")));
        }
        Ok(())
    }
}

impl<T: Scalar> Differentiable<T> for AdversarialLoss {
    fn name(&self) -> &str {
        "adversarial_loss"
    }
    fn arity(&self) -> usize {
        2
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (real, fake) = (inputs[0], inputs[1]);
        Self::check(real, "real")?;
        Self::check(fake, "fake")?;
        let eps = ADVERSARIAL_EPS;
        let r = pairwise_sum_by(real.len(), |i| real.data()[i].as_f64().max(eps).ln()) / real.len() as f64;
        let f = pairwise_sum_by(fake.len(), |i| (1.0 - fake.data()[i].as_f64()).max(eps).ln()) / fake.len() as f64;
        Ok(Tensor::scalar(T::of(r + f)))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (real, fake) = (inputs[0], inputs[1]);
        let eps = ADVERSARIAL_EPS;
        let gr = g.item().as_f64() / real.len() as f64;
        let gf = g.item().as_f64() / fake.len() as f64;
        let g_real = real.map(|v| {
            let v = v.as_f64();
            T::of(if v > eps { gr / v } else { 0.0 })
        });
        let g_fake = fake.map(|v| {
            let u = 1.0 - v.as_f64();
            T::of(if u > eps { -gf / u } else { 0.0 })
        });
        Ok(vec![g_real, g_fake])
    }
}

/// Mean absolute difference.
pub fn l1_loss<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    Ok(L1Loss.forward(&[a, b])?.item().as_f64())
}

#[derive(Debug, Clone, Copy)]
pub struct L1Loss;

impl<T: Scalar> Differentiable<T> for L1Loss {
    fn name(&self) -> &str {
        "l1_loss"
    }
    fn arity(&self) -> usize {
        2
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (a, b) = (inputs[0], inputs[1]);
        a.require_same_shape(b, "l1_loss")?;
        let s = pairwise_sum_by(a.len(), |i| (a.data()[i] - b.data()[i]).abs());
        Ok(Tensor::scalar(s / T::of(a.len().max(1) as f64)))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let scale = g.item() / T::of(a.len().max(1) as f64);
        let ga = a.zip_map(b, |x, y| {
            if x > y {
                scale
            } else if x < y {
                -scale
            } else {
                T::zero()
            }
        })?;
        let gb = ga.map(|v| -v);
        Ok(vec![ga, gb])
    }
}

/// Weights of the total objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    pub alpha6: f64,
    pub alpha7: f64,
    pub alpha8: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha1: 10.0,
            alpha2: 10.0,
            alpha3: 10.0,
            alpha4: 1.0,
            alpha5: 1.0,
            alpha6: 1.0,
            alpha7: 10.0,
            alpha8: 10.0,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 8] {
        [self.alpha1, self.alpha2, self.alpha3, self.alpha4, self.alpha5, self.alpha6, self.alpha7, self.alpha8]
    }

    pub fn validate(&self) -> Result<()> {
        match self.as_array().iter().position(|w| *w < 0.0 || !w.is_finite()) {
            Some(k) => Err(Error::invalid(format!("loss weight alpha{} must be a nonnegative number", k + 1))),
            None => Ok(()),
        }
    }
}

/// The eight loss terms, in objective order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossComponents {
    pub l1: f64,
    pub tps: f64,
    pub layout: f64,
    pub perceptual: f64,
    pub style: f64,
    pub contextual: f64,
    pub adv: f64,
    pub reg: f64,
}

impl LossComponents {
    pub const NAMES: [&'static str; 8] = ["l1", "tps", "layout", "perceptual", "style", "contextual", "adv", "reg"];

    pub fn as_array(&self) -> [f64; 8] {
        [self.l1, self.tps, self.layout, self.perceptual, self.style, self.contextual, self.adv, self.reg]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        LossComponents {
            l1: v[0],
            tps: v[1],
            layout: v[2],
            perceptual: v[3],
            style: v[4],
            contextual: v[5],
            adv: v[6],
            reg: v[7],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub components: LossComponents,
    /// Each component multiplied by its weight.
    pub weighted: LossComponents,
    pub total: f64,
}

pub fn total_loss(components: &LossComponents, w: &LossWeights) -> Result<LossReport> {
    w.validate()?;
    let c = components.as_array();
    if let Some(k) = c.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("loss component {} is {}", LossComponents::NAMES[k], c[k])));
    }
    let a = w.as_array();
    let weighted: [f64; 8] = std::array::from_fn(|k| a[k] * c[k]);
    Ok(LossReport {
        components: *components,
        weighted: LossComponents::from_array(weighted),
        total: weighted.iter().sum(),
    })
}

/// Differentiable form of [`total_loss`] over eight scalar inputs.
#[derive(Debug, Clone, Copy, Default)]
pub struct TotalLoss {
    pub weights: LossWeights,
}

impl<T: Scalar> Differentiable<T> for TotalLoss {
    fn name(&self) -> &str {
        "total_loss"
    }
    fn arity(&self) -> usize {
        8
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let c: [f64; 8] = std::array::from_fn(|k| inputs[k].item().as_f64());
        Ok(Tensor::scalar(T::of(total_loss(&LossComponents::from_array(c), &self.weights)?.total)))
    }
    fn vjp(&self, _: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        Ok(self.weights.as_array().iter().map(|&a| Tensor::scalar(g.item() * T::of(a))).collect())
    }
}
