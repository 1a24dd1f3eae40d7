use image::{GrayImage, Luma, Rgb, RgbImage};
use rand::{Rng, RngExt, SeedableRng};
use rand_pcg::Pcg64;

use super::{generate_field, SceneSpec, SynthError, SynthScene, RENDER_STREAM};
use crate::frames::{DepthImage, Frame};
use crate::geometry::Pose;

/// A rendered frame plus, per pixel (row-major), the field point that won the
/// z-buffer there.
#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub frame: Frame,
    pub source: Vec<Option<u32>>,
}

fn part_color(label: u16) -> Rgb<u8> {
    const PALETTE: [[u8; 3]; 6] =
        [[230, 180, 30], [60, 160, 60], [40, 120, 40], [150, 100, 60], [120, 120, 120], [90, 60, 160]];
    Rgb(PALETTE[label as usize % PALETTE.len()])
}

/// Point-splat z-buffer render of the object (distractors excluded) held at
/// `ee_pose`, seen from the static camera.
pub fn render_frame<R: Rng + ?Sized>(
    scene: &SynthScene,
    index: usize,
    ee_pose: &Pose,
    rng: &mut R,
) -> Result<RenderedFrame, SynthError> {
    let spec = &scene.spec;
    let k = spec.intrinsics;
    let (w, h) = (k.width as usize, k.height as usize);
    let c_e = spec.cam_pose.inverse().compose(ee_pose);
    let labels = scene.field.labels().expect("synthetic fields carry labels");
    let r = spec.splat_radius as i64;

    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut source: Vec<Option<u32>> = vec![None; w * h];
    let mut projected_any = false;
    for i in scene.object_points() {
        let p = c_e.transform_vector(scene.field.position(i));
        let Some((u, v)) = k.project(&p) else { continue };
        let (cu, cv) = (u.round() as i64, v.round() as i64);
        if cu < 0 || cv < 0 || cu >= w as i64 || cv >= h as i64 {
            continue;
        }
        projected_any = true;
        for dv in -r..=r {
            for du in -r..=r {
                let (x, y) = (cu + du, cv + dv);
                if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
                    continue;
                }
                let at = y as usize * w + x as usize;
                if p.z < zbuf[at] {
                    zbuf[at] = p.z;
                    source[at] = Some(i as u32);
                }
            }
        }
    }
    if !projected_any {
        return Err(SynthError::ObjectOutOfView(index));
    }

    let mut depth = DepthImage::new(k.width, k.height);
    let mut mask = GrayImage::new(k.width, k.height);
    let mut color = RgbImage::from_pixel(k.width, k.height, Rgb([200, 200, 205]));
    for (at, src) in source.iter().enumerate() {
        let Some(i) = src else { continue };
        let (x, y) = ((at % w) as u32, (at / w) as u32);
        mask.put_pixel(x, y, Luma([255]));
        color.put_pixel(x, y, part_color(labels[*i as usize]));
        let keep = spec.depth_dropout == 0.0 || rng.random::<f64>() >= spec.depth_dropout;
        if keep {
            let mm = (zbuf[at] * 1000.0).round().clamp(1.0, u16::MAX as f64) as u16;
            depth.put_pixel(x, y, Luma([mm]));
        }
    }
    let frame = Frame::new(index as u32, color, depth, mask, *ee_pose, spec.cam_pose, k)?;
    Ok(RenderedFrame { frame, source })
}

/// Renders the whole trajectory of an already generated scene.
pub fn render_frames_from(scene: &SynthScene) -> Result<Vec<RenderedFrame>, SynthError> {
    let mut rng = Pcg64::seed_from_u64(scene.spec.rng_seed ^ RENDER_STREAM);
    scene
        .spec
        .trajectory
        .poses()
        .iter()
        .enumerate()
        .map(|(i, pose)| render_frame(scene, i, pose, &mut rng))
        .collect()
}

pub fn render_frames(spec: &SceneSpec) -> Result<Vec<Frame>, SynthError> {
    let scene = generate_field(spec)?;
    Ok(render_frames_from(&scene)?.into_iter().map(|r| r.frame).collect())
}
