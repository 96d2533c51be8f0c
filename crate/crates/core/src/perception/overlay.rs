//! Arrow overlays: candidate directions projected into a camera as 2D draw
//! commands, with an optional PNG rasterization for image-based selectors.

use std::io::Cursor;

use image::{ImageFormat, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::geometry::{project_point, CameraIntrinsics, CameraPose, Vec3};
use crate::scene_sim::SplatImage;

use super::{DirectionCandidateSet, PerceptionError, Result};

const NEAR_Z: f64 = 1e-3;
const HEAD_BACK: f64 = 0.22;
const HEAD_SPREAD: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    Situated,
    Canonical,
}

pub type Point2 = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub label: String,
    /// Shaft from anchor to tip before image-bounds clipping.
    pub shaft: [Point2; 2],
    /// Shaft and head ticks, clipped to the image.
    pub segments: Vec<[Point2; 2]>,
    pub label_anchor: Point2,
}

impl Arrow {
    /// Image-plane direction of the shaft in degrees.
    pub fn image_angle(&self) -> f64 {
        let [a, b] = self.shaft;
        (b[1] - a[1]).atan2(b[0] - a[0]).to_degrees()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrowOverlay {
    pub kind: ViewKind,
    pub intrinsics: CameraIntrinsics,
    pub pose: CameraPose,
    pub candidates: DirectionCandidateSet,
    pub arrow_length: f64,
    pub arrows: Vec<Arrow>,
}

/// Pixel of the anchor, or why it cannot be drawn from.
pub(crate) fn anchor_pixel(anchor: &Vec3, intr: &CameraIntrinsics, pose: &CameraPose) -> Result<Point2> {
    if pose.world_to_camera(anchor).z <= NEAR_Z {
        return Err(PerceptionError::AnchorBehindCamera);
    }
    let (u, v, _) = project_point(anchor, intr, pose).ok_or(PerceptionError::AnchorBehindCamera)?;
    if !intr.contains(u, v) {
        return Err(PerceptionError::AnchorOutOfView);
    }
    Ok([u, v])
}

/// Projects a 3D segment, trimming whatever lies behind the near plane.
fn project_segment(a: &Vec3, b: &Vec3, intr: &CameraIntrinsics, pose: &CameraPose) -> Option<[Point2; 2]> {
    let (mut ca, mut cb) = (pose.world_to_camera(a), pose.world_to_camera(b));
    if ca.z < NEAR_Z && cb.z < NEAR_Z {
        return None;
    }
    if ca.z < NEAR_Z || cb.z < NEAR_Z {
        let t = (NEAR_Z - ca.z) / (cb.z - ca.z);
        let mid = ca + (cb - ca) * t;
        if ca.z < NEAR_Z {
            ca = mid;
        } else {
            cb = mid;
        }
    }
    let px = |c: Vec3| [intr.fx * c.x / c.z + intr.cx, intr.fy * c.y / c.z + intr.cy];
    Some([px(ca), px(cb)])
}

/// Liang-Barsky clip against `[0, w] x [0, h]`.
fn clip(seg: [Point2; 2], w: f64, h: f64) -> Option<[Point2; 2]> {
    let [p, q] = seg;
    let (dx, dy) = (q[0] - p[0], q[1] - p[1]);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (pk, qk) in [(-dx, p[0]), (dx, w - p[0]), (-dy, p[1]), (dy, h - p[1])] {
        if pk == 0.0 {
            if qk < 0.0 {
                return None;
            }
            continue;
        }
        let r = qk / pk;
        if pk < 0.0 {
            t0 = t0.max(r);
        } else {
            t1 = t1.min(r);
        }
        if t0 > t1 {
            return None;
        }
    }
    Some([[p[0] + t0 * dx, p[1] + t0 * dy], [p[0] + t1 * dx, p[1] + t1 * dy]])
}

pub fn sog_overlay(
    candidates: &DirectionCandidateSet,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    arrow_length: f64,
    kind: ViewKind,
) -> Result<ArrowOverlay> {
    let anchor = candidates.anchor_point;
    anchor_pixel(&anchor, intr, pose)?;
    let (w, h) = (intr.width as f64, intr.height as f64);
    let mut arrows = Vec::with_capacity(candidates.vectors.len());
    for (dir, label) in candidates.vectors.iter().zip(&candidates.labels) {
        let tip = anchor + dir * arrow_length;
        let side = candidates.up.cross(dir).try_normalize(1e-12).unwrap_or_else(Vec3::zeros);
        let back = tip - dir * (HEAD_BACK * arrow_length);
        let spread = side * (HEAD_SPREAD * arrow_length);
        // The anchor is in front of the camera, so the shaft always projects.
        let shaft = project_segment(&anchor, &tip, intr, pose).expect("anchor is in front of the camera");
        let mut segments = Vec::new();
        for (a, b) in [(anchor, tip), (tip, back + spread), (tip, back - spread)] {
            if let Some(s) = project_segment(&a, &b, intr, pose).and_then(|s| clip(s, w, h)) {
                segments.push(s);
            }
        }
        let label_anchor = [shaft[1][0].clamp(0.0, w - 1.0), shaft[1][1].clamp(0.0, h - 1.0)];
        arrows.push(Arrow { label: label.clone(), shaft, segments, label_anchor });
    }
    Ok(ArrowOverlay { kind, intrinsics: *intr, pose: *pose, candidates: candidates.clone(), arrow_length, arrows })
}

const PALETTE: [[u8; 3]; 5] = [[230, 25, 75], [60, 180, 75], [0, 130, 200], [245, 130, 48], [145, 30, 180]];

/// 3x5 bitmaps for digits, one row per entry, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 7, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 1, 1, 1],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn draw_line(img: &mut RgbImage, seg: &[Point2; 2], c: Rgb<u8>) {
    let [a, b] = seg;
    let steps = ((b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t);
        for (dx, dy) in [(0, 0), (1, 0), (0, 1)] {
            put(img, x as i64 + dx, y as i64 + dy, c);
        }
    }
}

fn draw_text(img: &mut RgbImage, text: &str, at: Point2, c: Rgb<u8>) {
    let scale = 2i64;
    let (mut x0, y0) = (at[0] as i64 + 3, at[1] as i64 - 5);
    for ch in text.chars() {
        let Some(d) = ch.to_digit(10) else { continue };
        for (row, bits) in DIGITS[d as usize].iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    for sy in 0..scale {
                        for sx in 0..scale {
                            put(img, x0 + col * scale + sx, y0 + row as i64 * scale + sy, c);
                        }
                    }
                }
            }
        }
        x0 += 4 * scale;
    }
}

impl ArrowOverlay {
    /// Smallest angle between any two projected shafts, in degrees.
    pub fn min_pairwise_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.arrows.iter().enumerate() {
            for b in &self.arrows[i + 1..] {
                let d = (a.image_angle() - b.image_angle()).rem_euclid(360.0);
                best = best.min(d.min(360.0 - d));
            }
        }
        best
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("overlay serializes")
    }

    /// Colors each arrow from a fixed palette and stamps its label at the
    /// tip. The backdrop, if given, is shaded by depth.
    pub fn rasterize(&self, backdrop: Option<&SplatImage>) -> RgbImage {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let mut img = RgbImage::from_pixel(w, h, Rgb([24, 24, 24]));
        if let Some(b) = backdrop {
            for v in 0..h.min(b.height) {
                for u in 0..w.min(b.width) {
                    if let Some((_, z)) = b.get(u, v) {
                        let g = (255.0 / (1.0 + 0.25 * z)) as u8;
                        img.put_pixel(u, v, Rgb([g, g, g]));
                    }
                }
            }
        }
        for (i, arrow) in self.arrows.iter().enumerate() {
            let c = Rgb(PALETTE[i % PALETTE.len()]);
            for s in &arrow.segments {
                draw_line(&mut img, s, c);
            }
            draw_text(&mut img, &arrow.label, arrow.label_anchor, c);
        }
        img
    }

    pub fn to_png(&self, backdrop: Option<&SplatImage>) -> Vec<u8> {
        let mut out = Cursor::new(Vec::new());
        self.rasterize(backdrop).write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
        out.into_inner()
    }
}
