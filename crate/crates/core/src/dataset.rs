//! On-disk session layout:
//!
//! ```text
//! frames/000000.color.png   8-bit RGB
//! frames/000000.depth.png   16-bit gray, millimeters
//! frames/000000.mask.png    8-bit, nonzero = object
//! poses.json                {"cam_pose": Pose, "frames": [{"index": n, "ee_pose": Pose}, ...]}
//! intrinsics.json           {"fx", "fy", "cx", "cy", "width", "height"}
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use image::ImageReader;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{DepthImage, Frame, FrameError, Intrinsics};
use crate::geometry::Pose;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("dataset lists no frames")]
    Empty,
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePose {
    pub index: u32,
    pub ee_pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub cam_pose: Pose,
    pub frames: Vec<FramePose>,
}

pub fn frame_path(dir: &Path, index: u32, kind: &str) -> PathBuf {
    dir.join("frames").join(format!("{index:06}.{kind}.png"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: PathBuf) -> Result<T, DatasetError> {
    let bytes = std::fs::read(&path)?;
    serde_json::from_slice(&bytes).map_err(|source| DatasetError::Json { path, source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|source| DatasetError::Json { path: path.to_path_buf(), source })?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn open(path: PathBuf) -> Result<image::DynamicImage, DatasetError> {
    let img = ImageReader::open(&path)?.decode();
    img.map_err(|source| DatasetError::Image { path, source })
}

/// Writes every frame plus the pose and intrinsics files. Frames must share
/// the camera pose and intrinsics of the first one.
pub fn write_dataset(dir: impl AsRef<Path>, frames: &[Frame]) -> Result<(), DatasetError> {
    let dir = dir.as_ref();
    let first = frames.first().ok_or(DatasetError::Empty)?;
    std::fs::create_dir_all(dir.join("frames"))?;
    let save = |img: &dyn Fn(&Path) -> image::ImageResult<()>, path: PathBuf| {
        img(&path).map_err(|source| DatasetError::Image { path, source })
    };
    for f in frames {
        save(&|p| f.color.save(p), frame_path(dir, f.index, "color"))?;
        save(&|p| f.depth.save(p), frame_path(dir, f.index, "depth"))?;
        save(&|p| f.mask.save(p), frame_path(dir, f.index, "mask"))?;
    }
    let poses = PosesFile {
        cam_pose: first.cam_pose,
        frames: frames.iter().map(|f| FramePose { index: f.index, ee_pose: f.ee_pose }).collect(),
    };
    write_json(&dir.join("poses.json"), &poses)?;
    write_json(&dir.join("intrinsics.json"), &first.intrinsics)
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<Frame>, DatasetError> {
    let dir = dir.as_ref();
    let poses: PosesFile = read_json(dir.join("poses.json"))?;
    let k: Intrinsics = read_json(dir.join("intrinsics.json"))?;
    if poses.frames.is_empty() {
        return Err(DatasetError::Empty);
    }
    poses
        .frames
        .iter()
        .map(|fp| {
            let color = open(frame_path(dir, fp.index, "color"))?.into_rgb8();
            let depth: DepthImage = open(frame_path(dir, fp.index, "depth"))?.into_luma16();
            let mask = open(frame_path(dir, fp.index, "mask"))?.into_luma8();
            Ok(Frame::new(fp.index, color, depth, mask, fp.ee_pose, poses.cam_pose, k)?)
        })
        .collect()
}

/// Blue (low) to red (high) ramp through green.
pub fn colormap(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let (r, g, b) = if t < 0.5 { (0.0, 2.0 * t, 1.0 - 2.0 * t) } else { (2.0 * t - 1.0, 2.0 - 2.0 * t, 0.0) };
    [(r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8]
}

/// ASCII PLY with per-vertex color from `scores`, min-max normalized.
pub fn write_ply(path: impl AsRef<Path>, points: &[Vector3<f64>], scores: &[f64]) -> std::io::Result<()> {
    assert_eq!(points.len(), scores.len(), "one score per point");
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    )?;
    for (p, &s) in points.iter().zip(scores) {
        let [r, g, b] = colormap((s - lo) / span);
        writeln!(out, "{} {} {} {r} {g} {b}", p.x as f32, p.y as f32, p.z as f32)?;
    }
    out.flush()
}
