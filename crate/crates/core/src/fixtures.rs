//! Procedural 64 x 64 test fixtures: stick-figure people with coloured
//! garments, their keypoints and their label maps.

use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::io::{save_image, save_keypoints, save_labels};
use crate::layout::{
    LabelPalette, SegmentationMap, BACKGROUND, HEAD, LEFT_ARM, LEFT_LEG, LEFT_SHOE, LOWER_CLOTHES, RIGHT_ARM,
    RIGHT_LEG, RIGHT_SHOE, UPPER_CLOTHES,
};
use crate::pose::{Joint, KeypointSet, JOINT_COUNT};
use crate::tensor::Tensor;

pub const FIXTURE_SIZE: usize = 64;

/// Joint positions `[x, y]` in the fixed joint order.
pub type Skeleton = [[f64; 2]; JOINT_COUNT];

pub const BASE_SKELETON: Skeleton = [
    [32.0, 10.0], // nose
    [32.0, 17.0], // neck
    [25.0, 18.0], // r-shoulder
    [22.0, 28.0], // r-elbow
    [21.0, 37.0], // r-wrist
    [39.0, 18.0], // l-shoulder
    [42.0, 28.0], // l-elbow
    [43.0, 37.0], // l-wrist
    [28.0, 36.0], // r-hip
    [27.0, 47.0], // r-knee
    [27.0, 56.0], // r-ankle
    [36.0, 36.0], // l-hip
    [37.0, 47.0], // l-knee
    [37.0, 56.0], // l-ankle
    [30.0, 9.0],  // r-eye
    [34.0, 9.0],  // l-eye
    [28.0, 10.0], // r-ear
    [36.0, 10.0], // l-ear
];

/// Garment appearance. `fade` is the distance in pixels over which garment
/// colour ramps up from black at the garment border (0 disables it);
/// `print` is the relative amplitude of a smooth woven pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Garment {
    pub upper: [f64; 3],
    pub lower: [f64; 3],
    pub fade: f64,
    pub print: f64,
}

pub const MODEL_GARMENT: Garment = Garment { upper: [0.85, 0.25, 0.2], lower: [0.2, 0.3, 0.65], fade: 0.0, print: 0.1 };
pub const OTHER_GARMENT: Garment = Garment { upper: [0.2, 0.7, 0.3], lower: [0.55, 0.5, 0.4], fade: 0.0, print: 0.1 };

const SKIN: [f64; 3] = [0.86, 0.68, 0.55];
const FACE: [f64; 3] = [0.8, 0.62, 0.5];
const SHOE: [f64; 3] = [0.18, 0.12, 0.1];

/// One complete input set for the pipeline, held in memory.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub model_image: Tensor<f64>,
    pub model_keypoints: KeypointSet,
    pub model_layout: SegmentationMap,
    pub target_keypoints: KeypointSet,
    pub target_body: Tensor<f64>,
    pub target_preserved: SegmentationMap,
    /// The target person wearing the model's garment.
    pub truth_image: Tensor<f64>,
    pub truth_layout: SegmentationMap,
}

/// File locations written by [`write_fixture`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePaths {
    pub model_image: PathBuf,
    pub model_keypoints: PathBuf,
    pub model_layout: PathBuf,
    pub target_keypoints: PathBuf,
    pub target_body: PathBuf,
    pub target_preserved: PathBuf,
    pub truth_image: PathBuf,
    pub truth_layout: PathBuf,
}

impl FixturePaths {
    pub fn in_dir(dir: &Path) -> Self {
        FixturePaths {
            model_image: dir.join("model_image.png"),
            model_keypoints: dir.join("model_keypoints.json"),
            model_layout: dir.join("model_layout.png"),
            target_keypoints: dir.join("target_keypoints.json"),
            target_body: dir.join("target_body.png"),
            target_preserved: dir.join("target_preserved.png"),
            truth_image: dir.join("truth_image.png"),
            truth_layout: dir.join("truth_layout.png"),
        }
    }
}

pub fn keypoints(s: &Skeleton) -> KeypointSet {
    let joints = std::array::from_fn(|i| Some(Joint { x: s[i][0], y: s[i][1], confidence: 1.0 }));
    KeypointSet::new(FIXTURE_SIZE, FIXTURE_SIZE, joints).expect("fixture joints lie inside the image")
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

fn inside_quad(p: [f64; 2], q: [[f64; 2]; 4]) -> bool {
    let mut sign = 0.0;
    for k in 0..4 {
        let (a, b) = (q[k], q[(k + 1) % 4]);
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross != 0.0 {
            if sign != 0.0 && cross.signum() != sign {
                return false;
            }
            sign = cross.signum();
        }
    }
    true
}

fn label_at(s: &Skeleton, p: [f64; 2]) -> u8 {
    let j = |i: usize| s[i];
    let near = |a: usize, b: usize, r: f64| segment_distance(p, j(a), j(b)) <= r;
    let disc = |c: [f64; 2], r: f64| (p[0] - c[0]).hypot(p[1] - c[1]) <= r;
    let shoe = |ankle: usize| disc([j(ankle)[0], j(ankle)[1] + 2.5], 2.8);

    if shoe(10) {
        return RIGHT_SHOE;
    }
    if shoe(13) {
        return LEFT_SHOE;
    }
    let head_center = [j(0)[0], j(0)[1] - 1.0];
    if disc(head_center, 6.0) || near(0, 1, 2.5) {
        return HEAD;
    }
    if near(2, 3, 2.2) || near(3, 4, 2.2) {
        return RIGHT_ARM;
    }
    if near(5, 6, 2.2) || near(6, 7, 2.2) {
        return LEFT_ARM;
    }
    let torso = [j(2), j(5), j(11), j(8)];
    if inside_quad(p, torso) || (0..4).any(|k| segment_distance(p, torso[k], torso[(k + 1) % 4]) <= 1.5) {
        return UPPER_CLOTHES;
    }
    if near(8, 9, 3.5) || near(11, 12, 3.5) || near(8, 11, 3.5) {
        return LOWER_CLOTHES;
    }
    if near(9, 10, 2.5) {
        return RIGHT_LEG;
    }
    if near(12, 13, 2.5) {
        return LEFT_LEG;
    }
    BACKGROUND
}

/// Distance from each pixel to the nearest pixel with a different label.
fn inner_distance(labels: &SegmentationMap) -> Vec<f64> {
    let (h, w) = (labels.height(), labels.width());
    let l = labels.labels();
    (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            (0..h * w)
                .filter(|&k| l[k] != l[i])
                .map(|k| ((k / w) as f64 - r).hypot((k % w) as f64 - c))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Renders a figure in `garment` at `skeleton`.
pub fn render(skeleton: &Skeleton, garment: Garment) -> (Tensor<f64>, SegmentationMap) {
    let n = FIXTURE_SIZE;
    let labels: Vec<u8> = (0..n * n).map(|i| label_at(skeleton, [(i % n) as f64, (i / n) as f64])).collect();
    let layout = SegmentationMap::new(n, n, labels).expect("palette labels");
    let depth = if garment.fade > 0.0 { Some(inner_distance(&layout)) } else { None };
    let img = Tensor::from_fn(&[n, n, 3], |i| {
        let (p, ch) = (i / 3, i % 3);
        let (x, y) = ((p % n) as f64, (p / n) as f64);
        let label = layout.labels()[p];
        let base = match label {
            BACKGROUND => return 0.0,
            HEAD => FACE,
            UPPER_CLOTHES => garment.upper,
            LOWER_CLOTHES => garment.lower,
            LEFT_SHOE | RIGHT_SHOE => SHOE,
            _ => SKIN,
        };
        let mut v = base[ch];
        if LabelPalette::is_clothes(label) {
            // gentle print so the garment is not flat
            v *= 1.0 - garment.print + garment.print * ((x * 0.35).sin() * (y * 0.3).cos());
            if let Some(d) = &depth {
                v *= smoothstep(d[p] / garment.fade);
            }
        }
        v
    });
    (img, layout)
}

fn assemble(name: &'static str, model: &Skeleton, target: &Skeleton, model_garment: Garment, other: Garment) -> Fixture {
    let (model_image, model_layout) = render(model, model_garment);
    let (target_body, target_layout) = render(target, other);
    let (truth_image, truth_layout) = render(target, model_garment);
    Fixture {
        name,
        model_image,
        model_keypoints: keypoints(model),
        model_layout,
        target_keypoints: keypoints(target),
        target_body,
        target_preserved: target_layout.select(LabelPalette::is_preserved),
        truth_image,
        truth_layout,
    }
}

/// Model and target are different poses of the same build; the target wears
/// a different outfit.
pub fn smoke_fixture() -> Fixture {
    let mut target = BASE_SKELETON;
    for p in target.iter_mut() {
        p[0] += 2.0;
        p[1] += 1.0;
    }
    // raise the forearms outwards
    target[3] = [target[2][0] - 5.0, target[2][1] + 8.0];
    target[4] = [target[3][0] - 6.0, target[3][1] + 4.0];
    target[6] = [target[5][0] + 5.0, target[5][1] + 8.0];
    target[7] = [target[6][0] + 6.0, target[6][1] + 4.0];
    assemble("smoke", &BASE_SKELETON, &target, MODEL_GARMENT, OTHER_GARMENT)
}

/// Self-transfer: the target is the model person in the same pose and
/// outfit. Garment colour fades out towards the garment border.
pub fn identity_fixture() -> Fixture {
    let garment = Garment { fade: 4.0, ..MODEL_GARMENT };
    assemble("identity", &BASE_SKELETON, &BASE_SKELETON, garment, garment)
}

pub fn write_fixture(f: &Fixture, dir: impl AsRef<Path>) -> Result<FixturePaths> {
    let paths = FixturePaths::in_dir(dir.as_ref());
    save_image(&f.model_image, &paths.model_image)?;
    save_keypoints(&f.model_keypoints, &paths.model_keypoints)?;
    save_labels(&f.model_layout, &paths.model_layout)?;
    save_keypoints(&f.target_keypoints, &paths.target_keypoints)?;
    save_image(&f.target_body, &paths.target_body)?;
    save_labels(&f.target_preserved, &paths.target_preserved)?;
    save_image(&f.truth_image, &paths.truth_image)?;
    save_labels(&f.truth_layout, &paths.truth_layout)?;
    Ok(paths)
}
