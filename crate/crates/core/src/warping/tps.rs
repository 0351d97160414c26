//! Thin-plate-spline fitting and backward warping.
//!
//! A [`ControlGrid`] holds a uniform `G x G` lattice of source points in the
//! output frame and, for each, the point of the input image it should sample.
//! The fitted spline maps output coordinates to input coordinates, so
//! applying it is a single bilinear sampling pass.

use nalgebra::{DMatrix, LU};
use serde::{Deserialize, Serialize};

use crate::autodiff::Differentiable;
use crate::correspondence::CorrespondenceMatrix;
use crate::error::{Error, Result};
use crate::ops::{bilinear_sample, bilinear_sample_vjp, softmax_in_place};
use crate::reduce::{pairwise_sum, pairwise_sum_by};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::constraint::second_order_constraint_grad;

pub const DEFAULT_GRID: usize = 5;
pub const DEFAULT_LAMBDA_K: f64 = 1e-6;

/// Axis-aligned rectangle in pixel coordinates (`x` columns, `y` rows).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlGridRepr {
    grid: usize,
    rect: Rect,
    sources: Vec<[f64; 2]>,
    targets: Vec<[f64; 2]>,
}

/// `G x G` lattice of source points (row-major, `x` fastest) with one target
/// point each. Points are `[x, y]` in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControlGridRepr", into = "ControlGridRepr")]
pub struct ControlGrid {
    pub grid: usize,
    pub rect: Rect,
    pub sources: Vec<[f64; 2]>,
    pub targets: Vec<[f64; 2]>,
}

impl ControlGrid {
    /// Uniform lattice over `rect` with targets equal to sources.
    pub fn lattice(grid: usize, rect: Rect) -> Result<Self> {
        if grid < 2 {
            return Err(Error::invalid(format!("control grid needs G >= 2, got {grid}")));
        }
        let step = |a: f64, b: f64, i: usize| a + (b - a) * i as f64 / (grid - 1) as f64;
        let sources: Vec<[f64; 2]> = (0..grid * grid)
            .map(|k| [step(rect.x0, rect.x1, k % grid), step(rect.y0, rect.y1, k / grid)])
            .collect();
        if sources.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite lattice rectangle {rect:?}")));
        }
        Ok(ControlGrid { grid, rect, targets: sources.clone(), sources })
    }

    pub fn with_targets(mut self, targets: Vec<[f64; 2]>) -> Result<Self> {
        if targets.len() != self.sources.len() {
            return Err(Error::shape(format!(
                "expected {} control targets, got {}",
                self.sources.len(),
                targets.len()
            )));
        }
        if targets.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("control target".into()));
        }
        self.targets = targets;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Targets as a `K x 2` tensor.
    pub fn targets_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_fn(&[self.len(), 2], |k| T::of(self.targets[k / 2][k % 2]))
    }
}

impl TryFrom<ControlGridRepr> for ControlGrid {
    type Error = Error;

    fn try_from(r: ControlGridRepr) -> Result<Self> {
        let lattice = ControlGrid::lattice(r.grid, r.rect)?;
        if lattice.sources != r.sources {
            return Err(Error::invalid("control grid sources are not the lattice of grid/rect"));
        }
        lattice.with_targets(r.targets)
    }
}

impl From<ControlGrid> for ControlGridRepr {
    fn from(c: ControlGrid) -> Self {
        ControlGridRepr { grid: c.grid, rect: c.rect, sources: c.sources, targets: c.targets }
    }
}

/// Fitted spline. The map is `f(p) = p + A [1, x, y]^T + sum_k w_k U(|p - s_k|)`
/// with `U(r) = r^2 ln r^2`; `affine` and `weights` are the displacement part
/// (both zero for the identity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpsTransform {
    pub control: ControlGrid,
    /// Rows are the `x` and `y` output components; columns multiply `[1, x, y]`.
    pub affine: [[f64; 3]; 2],
    pub weights: Vec<[f64; 2]>,
    pub lambda_k: f64,
}

impl TpsTransform {
    /// The full affine part of the map, displacement plus identity.
    pub fn full_affine(&self) -> [[f64; 3]; 2] {
        let mut a = self.affine;
        a[0][1] += 1.0;
        a[1][2] += 1.0;
        a
    }

    pub fn displacement(&self, x: f64, y: f64) -> [f64; 2] {
        displacement(&self.control.sources, &self.affine, &self.weights, x, y)
    }

    /// Input-image position sampled by output pixel `(x, y)`.
    pub fn map(&self, x: f64, y: f64) -> [f64; 2] {
        let d = self.displacement(x, y);
        [x + d[0], y + d[1]]
    }
}

#[inline]
pub(crate) fn kernel(dx: f64, dy: f64) -> f64 {
    let r2 = dx * dx + dy * dy;
    if r2 == 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

fn displacement(sources: &[[f64; 2]], affine: &[[f64; 3]; 2], weights: &[[f64; 2]], x: f64, y: f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    for (d, o) in out.iter_mut().enumerate() {
        let radial = pairwise_sum_by(sources.len(), |k| {
            weights[k][d] * kernel(x - sources[k][0], y - sources[k][1])
        });
        *o = affine[d][0] + affine[d][1] * x + affine[d][2] * y + radial;
    }
    out
}

fn check_geometry(points: &[[f64; 2]]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 control points, got {}", points.len())));
    }
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let (a, b) = (points[i], points[j]);
            if (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-9 {
                return Err(Error::Fit(format!(
                    "control points {i} and {j} coincide at ({}, {})",
                    a[0], a[1]
                )));
            }
        }
    }
    let p0 = points[0];
    let p1 = points[1];
    let (ux, uy) = (p1[0] - p0[0], p1[1] - p0[1]);
    let scale = ux.hypot(uy);
    let collinear = points.iter().all(|p| {
        let cross = ux * (p[1] - p0[1]) - uy * (p[0] - p0[0]);
        cross.abs() <= 1e-9 * scale * scale.max((p[0] - p0[0]).hypot(p[1] - p0[1]))
    });
    if collinear {
        let list: Vec<String> = points.iter().map(|p| format!("({}, {})", p[0], p[1])).collect();
        return Err(Error::Fit(format!("control points are collinear: {}", list.join(", "))));
    }
    Ok(())
}

/// LU factorisation of `[[K + lambda I, P], [P^T, 0]]`.
fn factor_system(sources: &[[f64; 2]], lambda_k: f64) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    check_geometry(sources)?;
    let k = sources.len();
    let mut a = DMatrix::<f64>::zeros(k + 3, k + 3);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = kernel(sources[i][0] - sources[j][0], sources[i][1] - sources[j][1]);
        }
        a[(i, i)] += lambda_k;
        let p = [1.0, sources[i][0], sources[i][1]];
        for (c, v) in p.into_iter().enumerate() {
            a[(i, k + c)] = v;
            a[(k + c, i)] = v;
        }
    }
    let lu = a.lu();
    if !lu.is_invertible() {
        return Err(Error::Fit("singular spline system".into()));
    }
    Ok(lu)
}

fn solve(lu: &LU<f64, nalgebra::Dyn, nalgebra::Dyn>, rhs: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sol = lu.solve(&rhs).ok_or_else(|| Error::Fit("singular spline system".into()))?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("spline solve produced non-finite parameters".into()));
    }
    Ok(sol)
}

type SplineParams = ([[f64; 3]; 2], Vec<[f64; 2]>);

/// Fits the displacement spline through `sources -> targets`.
pub fn tps_fit_points(sources: &[[f64; 2]], targets: &[[f64; 2]], lambda_k: f64) -> Result<SplineParams> {
    if sources.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} sources vs {} targets",
            sources.len(),
            targets.len()
        )));
    }
    if lambda_k.is_nan() || lambda_k < 0.0 {
        return Err(Error::invalid(format!("lambda_k must be >= 0, got {lambda_k}")));
    }
    let lu = factor_system(sources, lambda_k)?;
    let k = sources.len();
    let rhs = DMatrix::from_fn(k + 3, 2, |i, d| if i < k { targets[i][d] - sources[i][d] } else { 0.0 });
    let sol = solve(&lu, rhs)?;
    let weights = (0..k).map(|i| [sol[(i, 0)], sol[(i, 1)]]).collect();
    let mut affine = [[0.0; 3]; 2];
    for (d, row) in affine.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = sol[(k + c, d)];
        }
    }
    Ok((affine, weights))
}

pub fn tps_fit(c: &ControlGrid, lambda_k: f64) -> Result<TpsTransform> {
    let (affine, weights) = tps_fit_points(&c.sources, &c.targets, lambda_k)?;
    Ok(TpsTransform { control: c.clone(), affine, weights, lambda_k })
}

fn sample_coords<T: Scalar>(t: &TpsTransform, h: usize, w: usize) -> Tensor<T> {
    let mut data = Vec::with_capacity(h * w * 2);
    for r in 0..h {
        for c in 0..w {
            let [x, y] = t.map(c as f64, r as f64);
            data.push(T::of(y));
            data.push(T::of(x));
        }
    }
    Tensor::from_parts(vec![h, w, 2], data)
}

/// Backward-warps `img` (`H x W` or `H x W x C`); exterior samples are 0.
pub fn tps_apply<T: Scalar>(t: &TpsTransform, img: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w, c) = img.hwc()?;
    let img3 = img.reshape(&[h, w, c])?;
    let out = bilinear_sample(&img3, &sample_coords(t, h, w))?;
    out.reshape(img.dims())
}

/// Differentiable spline warp over `(targets: K x 2, image: H x W x C)`,
/// with the gradient to the targets taken through the linear solve.
#[derive(Debug, Clone)]
pub struct TpsApply {
    pub control: ControlGrid,
    pub lambda_k: f64,
}

impl TpsApply {
    fn transform<T: Scalar>(&self, targets: &Tensor<T>) -> Result<TpsTransform> {
        if targets.dims() != [self.control.len(), 2] {
            return Err(Error::shape(format!(
                "tps_apply: expected {}x2 targets, got {:?}",
                self.control.len(),
                targets.dims()
            )));
        }
        let pts = targets.data().chunks(2).map(|p| [p[0].as_f64(), p[1].as_f64()]).collect();
        tps_fit(&self.control.clone().with_targets(pts)?, self.lambda_k)
    }
}

impl<T: Scalar> Differentiable<T> for TpsApply {
    fn name(&self) -> &str {
        "tps_apply"
    }
    fn arity(&self) -> usize {
        2
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        inputs[1].require_rank(3, "tps_apply image")?;
        tps_apply(&self.transform(inputs[0])?, inputs[1])
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let img = inputs[1];
        let (h, w, _) = img.hwc()?;
        let t = self.transform(inputs[0])?;
        let coords = sample_coords::<T>(&t, h, w);
        let (g_img, g_coords) = bilinear_sample_vjp(img, &coords, g)?;

        // Coordinates are (row, col) = (y', x'); the displacement is (x, y).
        let gc: Vec<[f64; 2]> = g_coords
            .data()
            .chunks(2)
            .map(|v| [v[1].as_f64(), v[0].as_f64()])
            .collect();
        let src = &self.control.sources;
        let k = src.len();
        let n = h * w;
        let px = |p: usize| ((p % w) as f64, (p / w) as f64);
        let mut rhs = DMatrix::<f64>::zeros(k + 3, 2);
        for d in 0..2 {
            for (i, s) in src.iter().enumerate() {
                rhs[(i, d)] = pairwise_sum_by(n, |p| {
                    let (x, y) = px(p);
                    kernel(x - s[0], y - s[1]) * gc[p][d]
                });
            }
            rhs[(k, d)] = pairwise_sum_by(n, |p| gc[p][d]);
            rhs[(k + 1, d)] = pairwise_sum_by(n, |p| px(p).0 * gc[p][d]);
            rhs[(k + 2, d)] = pairwise_sum_by(n, |p| px(p).1 * gc[p][d]);
        }
        // The system matrix is symmetric, so its transpose solve is a solve.
        let lu = factor_system(src, self.lambda_k)?;
        let z = solve(&lu, rhs)?;
        let g_targets = Tensor::from_fn(&[k, 2], |i| T::of(z[(i / 2, i % 2)]));
        Ok(vec![g_targets, g_img])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpsLossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda_r: f64,
    pub lambda_s: f64,
}

impl Default for TpsLossWeights {
    fn default() -> Self {
        TpsLossWeights { lambda1: 10.0, lambda2: 10.0, lambda_r: 1.0, lambda_s: 1.0 }
    }
}

/// `lambda1 * mean|truth - warped| + lambda2 * second_order_constraint`.
pub fn tps_loss<T: Scalar>(
    warped: &Tensor<T>,
    truth: &Tensor<T>,
    c: &ControlGrid,
    weights: TpsLossWeights,
) -> Result<f64> {
    let op = TpsLoss { grid: c.grid, weights };
    Ok(op.forward(&[warped, truth, &c.targets_tensor()])?.item().as_f64())
}

/// Differentiable form over `(warped, truth, targets: K x 2)`.
#[derive(Debug, Clone, Copy)]
pub struct TpsLoss {
    pub grid: usize,
    pub weights: TpsLossWeights,
}

impl TpsLoss {
    fn points<T: Scalar>(&self, t: &Tensor<T>) -> Result<Vec<[f64; 2]>> {
        if t.dims() != [self.grid * self.grid, 2] {
            return Err(Error::shape(format!("tps_loss: expected {}x2 targets", self.grid * self.grid)));
        }
        Ok(t.data().chunks(2).map(|p| [p[0].as_f64(), p[1].as_f64()]).collect())
    }
}

impl<T: Scalar> Differentiable<T> for TpsLoss {
    fn name(&self) -> &str {
        "tps_loss"
    }
    fn arity(&self) -> usize {
        3
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let (warped, truth) = (inputs[0], inputs[1]);
        warped.require_same_shape(truth, "tps_loss")?;
        let l1 = pairwise_sum_by(warped.len(), |i| (truth.data()[i] - warped.data()[i]).abs().as_f64())
            / warped.len() as f64;
        let pts = self.points(inputs[2])?;
        let w = self.weights;
        let (sc, _) = second_order_constraint_grad(&pts, self.grid, w.lambda_r, w.lambda_s);
        Ok(Tensor::scalar(T::of(w.lambda1 * l1 + w.lambda2 * sc)))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let (warped, truth) = (inputs[0], inputs[1]);
        let w = self.weights;
        let scale = T::of(g.item().as_f64() * w.lambda1 / warped.len() as f64);
        let gw = warped.zip_map(truth, |a, b| scale * sign(a - b))?;
        let gt = gw.map(|v| -v);
        let pts = self.points(inputs[2])?;
        let (_, grad) = second_order_constraint_grad(&pts, self.grid, w.lambda_r, w.lambda_s);
        let s = g.item().as_f64() * w.lambda2;
        let gp = Tensor::from_fn(inputs[2].dims(), |k| T::of(s * grad[k / 2][k % 2]));
        Ok(vec![gw, gt, gp])
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Reads control targets off a coarse correspondence matrix: each lattice
/// point takes the matrix row of the nearest row-grid cell, softmaxes it
/// with `alpha`, and moves to the expected column-grid cell centre.
///
/// `rect` defaults to the full row-side image, `[0, W - 1] x [0, H - 1]`.
pub fn soft_argmax_control_points<T: Scalar>(
    m: &CorrespondenceMatrix<T>,
    grid: usize,
    alpha: f64,
    rect: Option<Rect>,
) -> Result<ControlGrid> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
    }
    let rows = m.rows;
    let cols = m.cols;
    let rect = rect.unwrap_or_else(|| {
        let s = rows.pixel_scale as f64;
        Rect::new(0.0, 0.0, rows.feature_w as f64 * s - 1.0, rows.feature_h as f64 * s - 1.0)
    });
    let lattice = ControlGrid::lattice(grid, rect)?;
    let centers: Vec<(f64, f64)> =
        (0..cols.cells()).map(|v| cols.cell_center_px(v / cols.grid_w, v % cols.grid_w)).collect();
    let n = cols.cells();
    let mut targets = Vec::with_capacity(lattice.len());
    for &[x, y] in &lattice.sources {
        let (Some(r), Some(c)) = (rows.nearest_cell(y, rows.grid_h), rows.nearest_cell(x, rows.grid_w)) else {
            return Err(Error::Bounds(format!(
                "lattice point ({x}, {y}) lies outside the {}x{} matrix grid",
                rows.grid_h, rows.grid_w
            )));
        };
        let u = r * rows.grid_w + c;
        let mut p: Vec<f64> = m.scores.data()[u * n..(u + 1) * n].iter().map(|v| v.as_f64()).collect();
        softmax_in_place(&mut p, alpha);
        let ex = pairwise_sum(&p.iter().zip(&centers).map(|(w, c)| w * c.1).collect::<Vec<_>>());
        let ey = pairwise_sum(&p.iter().zip(&centers).map(|(w, c)| w * c.0).collect::<Vec<_>>());
        targets.push([ex, ey]);
    }
    lattice.with_targets(targets)
}
