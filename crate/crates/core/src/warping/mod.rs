//! The two complementary warps: softmax dense warping driven by a
//! correspondence matrix, and thin-plate-spline warping fitted to control
//! points read off a coarse correspondence matrix.

mod constraint;
mod dense;
mod tps;

pub use constraint::{second_order_constraint, second_order_constraint_grad, SecondOrderConstraint, SLOPE_EPS};
pub use dense::{dense_warp, warp_image, DenseWarp, DEFAULT_ALPHA};
pub use tps::{
    soft_argmax_control_points, tps_apply, tps_fit, tps_fit_points, tps_loss, ControlGrid, Rect, TpsApply,
    TpsLoss, TpsLossWeights, TpsTransform, DEFAULT_GRID, DEFAULT_LAMBDA_K,
};
