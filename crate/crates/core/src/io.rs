//! File formats: the `CTTN` binary tensor format, keypoint JSON, 8-bit PNG
//! images, label maps and masks, and correspondence matrices with a JSON
//! sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::Serialize;
use serde_json::{json, Value};

use crate::correspondence::{CorrespondenceMatrix, MatrixMetadata};
use crate::error::{Error, Result};
use crate::layout::SegmentationMap;
use crate::pose::{Joint, KeypointSet, JOINT_COUNT, JOINT_NAMES};
use crate::scalar::{DType, Scalar};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"CTTN";
pub const TENSOR_VERSION: u8 = 1;

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), message: message.into() }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if t.rank() > u8::MAX as usize {
        return Err(Error::shape(format!("rank {} does not fit the header", t.rank())));
    }
    let mut out = Vec::with_capacity(7 + 4 * t.rank() + t.len() * T::DTYPE.size());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(TENSOR_VERSION);
    out.push(T::DTYPE.code());
    out.push(t.rank() as u8);
    for &d in t.dims() {
        let d = u32::try_from(d).map_err(|_| Error::shape(format!("extent {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

/// A decoded tensor in its stored precision.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
}

impl AnyTensor {
    pub fn dtype(&self) -> DType {
        match self {
            AnyTensor::F32(_) => DType::F32,
            AnyTensor::F64(_) => DType::F64,
        }
    }

    /// Converts to `T`; narrowing `f64 -> f32` rounds.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        match self {
            AnyTensor::F32(t) => t.cast(),
            AnyTensor::F64(t) => t.cast(),
        }
    }
}

fn decode_payload<T: Scalar>(path: &Path, dims: Vec<usize>, payload: &[u8]) -> Result<Tensor<T>> {
    let data = payload.chunks_exact(T::DTYPE.size()).map(T::read_le).collect();
    Tensor::new(dims, data).map_err(|e| format_err(path, e.to_string()))
}

pub fn decode_tensor(path: &Path, bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < 7 || &bytes[..4] != TENSOR_MAGIC {
        return Err(format_err(path, "bad magic, expected CTTN"));
    }
    if bytes[4] != TENSOR_VERSION {
        return Err(format_err(path, format!("unsupported version {}", bytes[4])));
    }
    let dtype = DType::from_code(bytes[5]).ok_or_else(|| format_err(path, format!("unknown dtype {}", bytes[5])))?;
    let ndim = bytes[6] as usize;
    let header = 7 + 4 * ndim;
    if bytes.len() < header {
        return Err(format_err(path, "truncated header"));
    }
    let dims: Vec<usize> = bytes[7..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let expected = count.and_then(|n| n.checked_mul(dtype.size()));
    let payload = &bytes[header..];
    if expected != Some(payload.len()) {
        return Err(format_err(
            path,
            format!(
                "payload holds {} bytes but extents {:?} need {}",
                payload.len(),
                dims,
                expected.map_or("overflow".to_string(), |n| n.to_string())
            ),
        ));
    }
    Ok(match dtype {
        DType::F32 => AnyTensor::F32(decode_payload(path, dims, payload)?),
        DType::F64 => AnyTensor::F64(decode_payload(path, dims, payload)?),
    })
}

pub fn save_tensor<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &encode_tensor(t)?)
}

pub fn load_any_tensor(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let path = path.as_ref();
    decode_tensor(path, &read(path)?)
}

/// Loads a tensor and converts it to `T`.
pub fn load_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    Ok(load_any_tensor(path)?.cast())
}

fn parse_err(path: &Path, field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { path: format!("{}:{}", path.display(), field.into()), message: message.into() }
}

fn field<'a>(path: &Path, obj: &'a Value, key: &str, at: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| parse_err(path, format!("{at}{key}"), "missing field"))
}

fn as_number(path: &Path, v: &Value, at: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| parse_err(path, at, format!("expected a number, got {v}")))
}

fn as_extent(path: &Path, v: &Value, at: &str) -> Result<usize> {
    v.as_u64()
        .filter(|&n| n > 0)
        .map(|n| n as usize)
        .ok_or_else(|| parse_err(path, at, format!("expected a positive integer, got {v}")))
}

/// Parses keypoint JSON: `{"width", "height", "joints": [18 x ({"name", "x",
/// "y", "c"} | null)]}` in the fixed joint order.
pub fn parse_keypoints(path: &Path, text: &str) -> Result<KeypointSet> {
    let root: Value = serde_json::from_str(text).map_err(|e| parse_err(path, "$", e.to_string()))?;
    if !root.is_object() {
        return Err(parse_err(path, "$", "expected an object"));
    }
    for key in root.as_object().into_iter().flat_map(|o| o.keys()) {
        if !["width", "height", "joints"].contains(&key.as_str()) {
            return Err(parse_err(path, key.as_str(), "unknown field"));
        }
    }
    let width = as_extent(path, field(path, &root, "width", "")?, "width")?;
    let height = as_extent(path, field(path, &root, "height", "")?, "height")?;
    let joints = field(path, &root, "joints", "")?
        .as_array()
        .ok_or_else(|| parse_err(path, "joints", "expected an array"))?;
    if joints.len() != JOINT_COUNT {
        return Err(parse_err(path, "joints", format!("expected {JOINT_COUNT} entries, got {}", joints.len())));
    }
    let mut out = [None; JOINT_COUNT];
    for (i, entry) in joints.iter().enumerate() {
        let at = format!("joints[{i}]");
        if entry.is_null() {
            continue;
        }
        let obj = entry.as_object().ok_or_else(|| parse_err(path, &at, "expected an object or null"))?;
        if let Some(k) = obj.keys().find(|k| !["name", "x", "y", "c"].contains(&k.as_str())) {
            return Err(parse_err(path, format!("{at}.{k}"), "unknown field"));
        }
        let name = field(path, entry, "name", &format!("{at}."))?
            .as_str()
            .ok_or_else(|| parse_err(path, format!("{at}.name"), "expected a string"))?;
        if name != JOINT_NAMES[i] {
            let msg = if JOINT_NAMES.contains(&name) {
                format!("joint `{name}` is out of order, expected `{}`", JOINT_NAMES[i])
            } else {
                format!("unknown joint name `{name}`")
            };
            return Err(parse_err(path, format!("{at}.name"), msg));
        }
        let x = as_number(path, field(path, entry, "x", &format!("{at}."))?, &format!("{at}.x"))?;
        let y = as_number(path, field(path, entry, "y", &format!("{at}."))?, &format!("{at}.y"))?;
        let c = as_number(path, field(path, entry, "c", &format!("{at}."))?, &format!("{at}.c"))?;
        if !(0.0..width as f64).contains(&x) {
            return Err(parse_err(path, format!("{at}.x"), format!("{x} is outside [0, {width})")));
        }
        if !(0.0..height as f64).contains(&y) {
            return Err(parse_err(path, format!("{at}.y"), format!("{y} is outside [0, {height})")));
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(parse_err(path, format!("{at}.c"), format!("{c} is outside [0, 1]")));
        }
        out[i] = Some(Joint { x, y, confidence: c });
    }
    KeypointSet::new(width, height, out).map_err(|e| parse_err(path, "$", e.to_string()))
}

pub fn load_keypoints(path: impl AsRef<Path>) -> Result<KeypointSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_keypoints(path, &text)
}

pub fn keypoints_to_json(k: &KeypointSet) -> Value {
    let joints: Vec<Value> = k
        .joints()
        .iter()
        .enumerate()
        .map(|(i, j)| match j {
            Some(j) => json!({"name": JOINT_NAMES[i], "x": j.x, "y": j.y, "c": j.confidence}),
            None => Value::Null,
        })
        .collect();
    json!({"width": k.width(), "height": k.height(), "joints": joints})
}

pub fn save_keypoints(k: &KeypointSet, path: impl AsRef<Path>) -> Result<()> {
    write_json(path, &keypoints_to_json(k))
}

pub fn write_json<V: Serialize + ?Sized>(path: impl AsRef<Path>, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    write(path.as_ref(), text.as_bytes())
}

pub fn read_json<V: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<V> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, format!("line {}", e.line()), e.to_string()))
}

fn decode_png(path: &Path) -> Result<image::DynamicImage> {
    let bytes = read(path)?;
    image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| format_err(path, e.to_string()))
}

/// Loads an 8-bit PNG as `H x W x 3` (colour) or `H x W x 1` (grey) with
/// values scaled to `[0, 1]`. Alpha is dropped.
pub fn load_image<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let img = decode_png(path)?;
    let scale = |v: u8| T::of(v as f64 / 255.0);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Tensor::new(vec![h as usize, w as usize, 3], rgb.into_raw().into_iter().map(scale).collect())
    } else {
        let g = img.to_luma8();
        let (w, h) = g.dimensions();
        Tensor::new(vec![h as usize, w as usize, 1], g.into_raw().into_iter().map(scale).collect())
    }
}

/// `[0, 1]` to 8 bits: clamp, scale by 255, round half up.
pub fn quantize<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64();
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn png_bytes(path: &Path, w: usize, h: usize, channels: usize, raw: Vec<u8>) -> Result<Vec<u8>> {
    let (w32, h32) = (w as u32, h as u32);
    let mut out = std::io::Cursor::new(Vec::new());
    let res = match channels {
        1 => GrayImage::from_raw(w32, h32, raw).map(|i| i.write_to(&mut out, image::ImageFormat::Png)),
        3 => RgbImage::from_raw(w32, h32, raw).map(|i| i.write_to(&mut out, image::ImageFormat::Png)),
        c => return Err(Error::shape(format!("cannot save a {c}-channel image as PNG"))),
    };
    match res {
        Some(Ok(())) => Ok(out.into_inner()),
        Some(Err(e)) => Err(format_err(path, e.to_string())),
        None => Err(Error::shape("image buffer size mismatch")),
    }
}

/// Saves `H x W`, `H x W x 1` or `H x W x 3` data as an 8-bit PNG.
pub fn save_image<T: Scalar>(t: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (h, w, c) = t.hwc()?;
    let raw = t.data().iter().map(|&v| quantize(v)).collect();
    write(path, &png_bytes(path, w, h, c, raw)?)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<SegmentationMap> {
    let path = path.as_ref();
    let img = decode_png(path)?;
    if img.color().has_color() {
        return Err(format_err(path, "label maps must be single-channel"));
    }
    let g = img.to_luma8();
    let (w, h) = g.dimensions();
    SegmentationMap::new(h as usize, w as usize, g.into_raw())
        .map_err(|e| parse_err(path, "pixels", e.to_string()))
}

pub fn save_labels(s: &SegmentationMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let img: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(s.width() as u32, s.height() as u32, s.labels().to_vec())
            .ok_or_else(|| Error::shape("label buffer size mismatch"))?;
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| format_err(path, e.to_string()))?;
    write(path, &out.into_inner())
}

/// Loads an 8-bit grey PNG as an `H x W` mask with values `v / 255`.
pub fn load_mask<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let path = path.as_ref();
    let img = load_image::<T>(path)?;
    let (h, w, c) = img.hwc()?;
    if c != 1 {
        return Err(format_err(path, "masks must be single-channel"));
    }
    img.reshape(&[h, w])
}

/// Path of the JSON sidecar holding a matrix's grid metadata.
pub fn matrix_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_matrix<T: Scalar>(m: &CorrespondenceMatrix<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    save_tensor(&m.scores, path)?;
    write_json(matrix_sidecar(path), &m.metadata())
}

pub fn load_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<CorrespondenceMatrix<T>> {
    let path = path.as_ref();
    let meta: MatrixMetadata = read_json(matrix_sidecar(path))?;
    CorrespondenceMatrix::new(load_tensor(path)?, meta.rows, meta.cols)
}

/// Colour used when rendering a label map for inspection.
pub fn label_color(label: u8) -> [u8; 3] {
    const COLORS: [[u8; 3]; 10] = [
        [0, 0, 0],
        [255, 200, 150],
        [220, 40, 40],
        [40, 60, 200],
        [240, 150, 60],
        [200, 120, 40],
        [90, 180, 90],
        [60, 140, 60],
        [120, 80, 160],
        [90, 50, 130],
    ];
    COLORS[label as usize % COLORS.len()]
}

pub fn save_label_preview(s: &SegmentationMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u8> = s.labels().iter().flat_map(|&l| label_color(l)).collect();
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_raw(s.width() as u32, s.height() as u32, raw)
        .ok_or_else(|| Error::shape("label buffer size mismatch"))?;
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| format_err(path, e.to_string()))?;
    write(path, &out.into_inner())
}
