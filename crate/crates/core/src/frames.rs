//! Static-camera captures of an in-hand object: depth-coverage mask
//! retention and pinhole deprojection into the end-effector frame.

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;

pub type DepthImage = ImageBuffer<Luma<u16>, Vec<u16>>;

/// Default retention threshold on the depth coverage ratio.
pub const DEFAULT_THETA_D: f64 = 0.7;

#[derive(Debug, Error, PartialEq)]
pub enum FrameError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("frame {index}: {what} is {got:?}, intrinsics say {want:?}")]
    SizeMismatch { index: u32, what: &'static str, got: (u32, u32), want: (u32, u32) },
    #[error("frame {0}: mask is empty")]
    EmptyMask(u32),
    #[error("no frames retained out of {0}")]
    NoFramesRetained(usize),
    #[error("empty frame list")]
    NoFrames,
    #[error("frame {0}: camera pose differs from the first frame of the session")]
    CameraMoved(u32),
    #[error("invalid depth range [{0}, {1}] m")]
    InvalidRange(f64, f64),
    #[error("theta_d {0} outside [0, 1]")]
    InvalidThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), FrameError> {
        let bad = |m: &str| Err(FrameError::InvalidIntrinsics(m.to_string()));
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return bad("focal lengths must be positive");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad("cx outside [0, width)");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad("cy outside [0, height)");
        }
        Ok(())
    }

    /// Camera-frame point (meters) for pixel `(u, v)` at depth `z` meters.
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }

    /// Continuous pixel coordinates of a camera-frame point in front of the camera.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// Accepted depth interval in meters, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { min: 0.1, max: 2.0 }
    }
}

impl DepthRange {
    pub fn new(min: f64, max: f64) -> Result<Self, FrameError> {
        if !(min > 0.0 && max > min) {
            return Err(FrameError::InvalidRange(min, max));
        }
        Ok(Self { min, max })
    }

    pub fn contains_mm(&self, depth_mm: u16) -> bool {
        let d = depth_mm as f64 / 1000.0;
        depth_mm != 0 && d >= self.min && d <= self.max
    }
}

/// One RGB-D capture. Depth is in millimeters with 0 meaning "no reading".
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: u32,
    pub color: RgbImage,
    pub depth: DepthImage,
    pub mask: GrayImage,
    /// `W_E T` at capture time.
    pub ee_pose: Pose,
    /// `W_C T`, shared by every frame of a session.
    pub cam_pose: Pose,
    pub intrinsics: Intrinsics,
}

impl Frame {
    pub fn new(
        index: u32,
        color: RgbImage,
        depth: DepthImage,
        mask: GrayImage,
        ee_pose: Pose,
        cam_pose: Pose,
        intrinsics: Intrinsics,
    ) -> Result<Self, FrameError> {
        intrinsics.validate()?;
        let want = (intrinsics.width, intrinsics.height);
        for (what, got) in [
            ("color", color.dimensions()),
            ("depth", depth.dimensions()),
            ("mask", mask.dimensions()),
        ] {
            if got != want {
                return Err(FrameError::SizeMismatch { index, what, got, want });
            }
        }
        Ok(Self { index, color, depth, mask, ee_pose, cam_pose, intrinsics })
    }

    fn in_mask(&self, x: u32, y: u32) -> bool {
        self.mask.get_pixel(x, y)[0] != 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthCoverage {
    /// Mask pixels carrying a valid depth reading.
    pub a_d: u64,
    /// Mask pixels.
    pub a_m: u64,
    pub r_d: f64,
    pub theta_d: f64,
}

pub fn depth_coverage(
    frame: &Frame,
    valid_range: DepthRange,
    theta_d: f64,
) -> Result<DepthCoverage, FrameError> {
    if !(0.0..=1.0).contains(&theta_d) {
        return Err(FrameError::InvalidThreshold(theta_d));
    }
    let (mut a_d, mut a_m) = (0u64, 0u64);
    for (m, d) in frame.mask.pixels().zip(frame.depth.pixels()) {
        if m[0] != 0 {
            a_m += 1;
            if valid_range.contains_mm(d[0]) {
                a_d += 1;
            }
        }
    }
    if a_m == 0 {
        return Err(FrameError::EmptyMask(frame.index));
    }
    Ok(DepthCoverage { a_d, a_m, r_d: a_d as f64 / a_m as f64, theta_d })
}

/// Inclusive: a ratio equal to the threshold is kept.
pub fn retain_mask(cov: &DepthCoverage) -> bool {
    cov.r_d >= cov.theta_d
}

/// Zeroes color and depth outside the mask.
pub fn apply_mask(frame: &Frame) -> Frame {
    let mut out = frame.clone();
    for (x, y, px) in out.color.enumerate_pixels_mut() {
        if !frame.in_mask(x, y) {
            *px = image::Rgb([0, 0, 0]);
        }
    }
    for (x, y, px) in out.depth.enumerate_pixels_mut() {
        if !frame.in_mask(x, y) {
            *px = Luma([0]);
        }
    }
    out
}

/// Keeps frames whose depth coverage passes `theta_d`, masked, in input order.
///
/// A frame with an empty mask is treated as rejected.
pub fn preprocess_session(
    frames: &[Frame],
    theta_d: f64,
    valid_range: DepthRange,
) -> Result<Vec<Frame>, FrameError> {
    let first = frames.first().ok_or(FrameError::NoFrames)?;
    if !(0.0..=1.0).contains(&theta_d) {
        return Err(FrameError::InvalidThreshold(theta_d));
    }
    if let Some(f) = frames.iter().find(|f| f.cam_pose != first.cam_pose) {
        return Err(FrameError::CameraMoved(f.index));
    }
    let kept: Vec<Frame> = frames
        .par_iter()
        .filter_map(|f| match depth_coverage(f, valid_range, theta_d) {
            Ok(cov) if retain_mask(&cov) => Some(apply_mask(f)),
            _ => None,
        })
        .collect();
    if kept.is_empty() {
        return Err(FrameError::NoFramesRetained(frames.len()));
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeprojectedPoint {
    /// End-effector (object-attached) frame, meters.
    pub position: Vector3<f64>,
    pub pixel: (u32, u32),
}

/// Camera-frame points for every mask pixel with a nonzero depth reading.
pub fn deproject_camera(frame: &Frame) -> Vec<DeprojectedPoint> {
    let k = &frame.intrinsics;
    let mut out = Vec::new();
    for (u, v, d) in frame.depth.enumerate_pixels() {
        if d[0] == 0 || !frame.in_mask(u, v) {
            continue;
        }
        let z = d[0] as f64 / 1000.0;
        out.push(DeprojectedPoint { position: k.unproject(u as f64, v as f64, z), pixel: (u, v) });
    }
    out
}

/// Deprojects mask pixels and maps them through `inverse(W_E T) · W_C T`, so
/// points from different frames of a rigidly held object share coordinates.
pub fn deproject(frame: &Frame) -> Vec<DeprojectedPoint> {
    let e_c = frame.ee_pose.inverse().compose(&frame.cam_pose);
    let mut pts = deproject_camera(frame);
    for p in &mut pts {
        p.position = e_c.transform_vector(&p.position);
    }
    pts
}
