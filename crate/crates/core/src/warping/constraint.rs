use crate::autodiff::Differentiable;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::tps::ControlGrid;

/// Guard added to slope denominators.
pub const SLOPE_EPS: f64 = 1e-5;

/// Second-order smoothness penalty on a `G x G` lattice of warped control
/// points (row-major, `x` fastest).
///
/// Every interior point `p` is compared with its left/right neighbours
/// `p0`, `p1` and its upper/lower neighbours `p2`, `p3` through the
/// consecutive segments `p0 -> p -> p1` and `p2 -> p -> p3`:
///
/// `lambda_r * (| |p - p0| - |p1 - p| | + | |p - p2| - |p3 - p| |)
///  + lambda_s * (|S(p0, p) - S(p, p1)| + |S'(p2, p) - S'(p, p3)|)`
///
/// where `S(a, b) = (b.y - a.y) / (b.x - a.x + eps)` is the slope along a
/// row and `S'(a, b) = (b.x - a.x) / (b.y - a.y + eps)` the inverse slope
/// along a column, so that a uniform (or affinely mapped) lattice scores 0.
pub fn second_order_constraint(c: &ControlGrid, lambda_r: f64, lambda_s: f64) -> f64 {
    second_order_constraint_grad(&c.targets, c.grid, lambda_r, lambda_s).0
}

/// Value and gradient with respect to every lattice point.
pub fn second_order_constraint_grad(
    points: &[[f64; 2]],
    grid: usize,
    lambda_r: f64,
    lambda_s: f64,
) -> (f64, Vec<[f64; 2]>) {
    let mut grad = vec![[0.0; 2]; points.len()];
    let mut total = 0.0;
    if grid < 3 {
        return (total, grad);
    }
    for gy in 1..grid - 1 {
        for gx in 1..grid - 1 {
            let p = gy * grid + gx;
            total += triple(points, &mut grad, [p - 1, p, p + 1], false, lambda_r, lambda_s);
            total += triple(points, &mut grad, [p - grid, p, p + grid], true, lambda_r, lambda_s);
        }
    }
    (total, grad)
}

/// Penalty for one chain `a -> b -> c`, accumulating its gradient.
fn triple(
    pts: &[[f64; 2]],
    grad: &mut [[f64; 2]],
    [ia, ib, ic]: [usize; 3],
    vertical: bool,
    lambda_r: f64,
    lambda_s: f64,
) -> f64 {
    let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
    let u = [b[0] - a[0], b[1] - a[1]];
    let v = [c[0] - b[0], c[1] - b[1]];

    let nu = u[0].hypot(u[1]);
    let nv = v[0].hypot(v[1]);
    let dist = nu - nv;
    let sd = lambda_r * sign(dist);
    let du = if nu > 0.0 { [sd * u[0] / nu, sd * u[1] / nu] } else { [0.0; 2] };
    let dv = if nv > 0.0 { [-sd * v[0] / nv, -sd * v[1] / nv] } else { [0.0; 2] };

    // Slope along rows, inverse slope along columns: index `num` is the
    // numerator component, `den` the denominator.
    let (num, den) = if vertical { (0, 1) } else { (1, 0) };
    let su = u[num] / (u[den] + SLOPE_EPS);
    let sv = v[num] / (v[den] + SLOPE_EPS);
    let diff = su - sv;
    let ss = lambda_s * sign(diff);
    let mut gu = du;
    let mut gv = dv;
    gu[num] += ss / (u[den] + SLOPE_EPS);
    gu[den] -= ss * u[num] / (u[den] + SLOPE_EPS).powi(2);
    gv[num] -= ss / (v[den] + SLOPE_EPS);
    gv[den] += ss * v[num] / (v[den] + SLOPE_EPS).powi(2);

    // u = b - a, v = c - b
    for k in 0..2 {
        grad[ia][k] -= gu[k];
        grad[ib][k] += gu[k] - gv[k];
        grad[ic][k] += gv[k];
    }
    lambda_r * dist.abs() + lambda_s * diff.abs()
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Differentiable form over a `K x 2` tensor of `(x, y)` lattice points.
#[derive(Debug, Clone, Copy)]
pub struct SecondOrderConstraint {
    pub grid: usize,
    pub lambda_r: f64,
    pub lambda_s: f64,
}

impl SecondOrderConstraint {
    fn points<T: Scalar>(&self, t: &Tensor<T>) -> Result<Vec<[f64; 2]>> {
        if t.dims() != [self.grid * self.grid, 2] {
            return Err(Error::shape(format!(
                "second_order_constraint: expected {}x2 points, got {:?}",
                self.grid * self.grid,
                t.dims()
            )));
        }
        Ok(t.data().chunks(2).map(|p| [p[0].as_f64(), p[1].as_f64()]).collect())
    }
}

impl<T: Scalar> Differentiable<T> for SecondOrderConstraint {
    fn name(&self) -> &str {
        "second_order_constraint"
    }
    fn arity(&self) -> usize {
        1
    }
    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let pts = self.points(inputs[0])?;
        let (v, _) = second_order_constraint_grad(&pts, self.grid, self.lambda_r, self.lambda_s);
        Ok(Tensor::scalar(T::of(v)))
    }
    fn vjp(&self, inputs: &[&Tensor<T>], _: &Tensor<T>, g: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let pts = self.points(inputs[0])?;
        let (_, grad) = second_order_constraint_grad(&pts, self.grid, self.lambda_r, self.lambda_s);
        let s = g.item().as_f64();
        Ok(vec![Tensor::from_fn(inputs[0].dims(), |k| T::of(s * grad[k / 2][k % 2]))])
    }
}
