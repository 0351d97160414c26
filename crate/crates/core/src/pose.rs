//! 18-joint keypoints, binary confidence maps and normalised keypoint
//! distance fields.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const JOINT_COUNT: usize = 18;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "nose",
    "neck",
    "r-shoulder",
    "r-elbow",
    "r-wrist",
    "l-shoulder",
    "l-elbow",
    "l-wrist",
    "r-hip",
    "r-knee",
    "r-ankle",
    "l-hip",
    "l-knee",
    "l-ankle",
    "r-eye",
    "l-eye",
    "r-ear",
    "l-ear",
];

pub fn joint_index(name: &str) -> Option<usize> {
    JOINT_NAMES.iter().position(|n| *n == name)
}

/// A detected joint in pixel coordinates (`x` is the column, `y` the row).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    width: usize,
    height: usize,
    joints: [Option<Joint>; JOINT_COUNT],
}

impl KeypointSet {
    pub fn new(width: usize, height: usize, joints: [Option<Joint>; JOINT_COUNT]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("image must be non-empty, got {width}x{height}")));
        }
        for (i, j) in joints.iter().enumerate() {
            let Some(j) = j else { continue };
            let name = JOINT_NAMES[i];
            if !(j.x.is_finite() && j.y.is_finite() && j.confidence.is_finite()) {
                return Err(Error::invalid(format!("joint {name}: non-finite value")));
            }
            if !(0.0..width as f64).contains(&j.x) || !(0.0..height as f64).contains(&j.y) {
                return Err(Error::invalid(format!(
                    "joint {name}: ({}, {}) outside {width}x{height}",
                    j.x, j.y
                )));
            }
            if !(0.0..=1.0).contains(&j.confidence) {
                return Err(Error::invalid(format!(
                    "joint {name}: confidence {} outside [0, 1]",
                    j.confidence
                )));
            }
        }
        Ok(KeypointSet { width, height, joints })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn joints(&self) -> &[Option<Joint>; JOINT_COUNT] {
        &self.joints
    }

    /// Rounded `(row, col)` pixel of joint `j`: round half up, then clamp.
    pub fn pixel(&self, j: usize) -> Option<(usize, usize)> {
        let joint = self.joints[j]?;
        let round = |v: f64, n: usize| ((v + 0.5).floor().max(0.0) as usize).min(n - 1);
        Some((round(joint.y, self.height), round(joint.x, self.width)))
    }

    pub fn diagonal(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }
}

/// One-pixel binary joint maps, `H x W x 18`.
pub fn confidence_map<T: Scalar>(k: &KeypointSet) -> Tensor<T> {
    let (h, w) = (k.height, k.width);
    let mut t = Tensor::zeros(&[h, w, JOINT_COUNT]);
    for j in 0..JOINT_COUNT {
        if let Some((r, c)) = k.pixel(j) {
            t.data_mut()[(r * w + c) * JOINT_COUNT + j] = T::one();
        }
    }
    t
}

/// Per-joint Euclidean distance to the joint pixel divided by the image
/// diagonal; missing joints are constant 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField<T> {
    pub field: Tensor<T>,
    pub present: [bool; JOINT_COUNT],
}

pub fn distance_fields<T: Scalar>(k: &KeypointSet) -> DistanceField<T> {
    let (h, w) = (k.height, k.width);
    let diag = k.diagonal();
    let pixels: Vec<Option<(usize, usize)>> = (0..JOINT_COUNT).map(|j| k.pixel(j)).collect();
    let mut data = vec![T::one(); h * w * JOINT_COUNT];
    data.par_chunks_mut(JOINT_COUNT).enumerate().for_each(|(p, px)| {
        let (r, c) = ((p / w) as f64, (p % w) as f64);
        for (v, joint) in px.iter_mut().zip(&pixels) {
            if let Some((jr, jc)) = joint {
                let (dr, dc) = (r - *jr as f64, c - *jc as f64);
                *v = T::of((dr * dr + dc * dc).sqrt() / diag);
            }
        }
    });
    let mut present = [false; JOINT_COUNT];
    for (p, px) in present.iter_mut().zip(&pixels) {
        *p = px.is_some();
    }
    DistanceField { field: Tensor::from_parts(vec![h, w, JOINT_COUNT], data), present }
}
