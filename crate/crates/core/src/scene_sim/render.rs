use std::sync::Arc;

use crate::geometry::{project_point, CameraIntrinsics, CameraPose, DepthMap, PixelMask, PointCloud, Vec3};

use super::{Result, SceneError, Shape, SyntheticScene};

pub const DEFAULT_SPLAT_RADIUS: f64 = 2.0;

const HIT_EPS: f64 = 1e-9;

/// What a pixel's ray hit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    None,
    Ground,
    Object(usize),
}

/// Depth plus per-pixel surface labels for one camera.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub depth: DepthMap,
    surfaces: Vec<Surface>,
    width: u32,
}

impl RenderedView {
    pub fn surface(&self, u: u32, v: u32) -> Surface {
        self.surfaces[v as usize * self.width as usize + u as usize]
    }

    pub fn mask_where(&self, pred: impl Fn(Surface) -> bool) -> PixelMask {
        let mut mask = PixelMask::new(self.depth.width, self.depth.height);
        for v in 0..self.depth.height {
            for u in 0..self.depth.width {
                if pred(self.surface(u, v)) {
                    mask.set(u, v, true);
                }
            }
        }
        mask
    }

    pub fn object_mask(&self, index: usize) -> PixelMask {
        self.mask_where(|s| s == Surface::Object(index))
    }

    pub fn ground_mask(&self) -> PixelMask {
        self.mask_where(|s| s == Surface::Ground)
    }

    pub fn object_pixel_count(&self, index: usize) -> usize {
        self.surfaces.iter().filter(|s| **s == Surface::Object(index)).count()
    }
}

/// Nearest hit along `origin + t * dir` with `t > 0`.
pub(crate) fn cast_ray(scene: &SyntheticScene, origin: &Vec3, dir: &Vec3) -> Option<(f64, Surface)> {
    let mut best: Option<(f64, Surface)> = None;
    let mut consider = |t: Option<f64>, s: Surface| {
        if let Some(t) = t {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, s));
            }
        }
    };
    consider(ray_plane(origin, dir, &scene.ground.normal, scene.ground.offset), Surface::Ground);
    for (i, obj) in scene.objects.iter().enumerate() {
        let t = match obj.shape {
            Shape::Box { half_extents } => ray_box(origin, dir, &obj.center, &half_extents),
            Shape::Sphere { radius } => ray_sphere(origin, dir, &obj.center, radius),
        };
        consider(t, Surface::Object(i));
    }
    best
}

fn ray_plane(o: &Vec3, d: &Vec3, n: &Vec3, offset: f64) -> Option<f64> {
    let denom = n.dot(d);
    if denom.abs() < 1e-15 {
        return None;
    }
    let t = -(n.dot(o) + offset) / denom;
    (t > HIT_EPS).then_some(t)
}

fn ray_sphere(o: &Vec3, d: &Vec3, c: &Vec3, r: f64) -> Option<f64> {
    let oc = o - c;
    let a = d.dot(d);
    let b = 2.0 * d.dot(&oc);
    let cc = oc.dot(&oc) - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = (-b - sq) / (2.0 * a);
    let t1 = (-b + sq) / (2.0 * a);
    if t0 > HIT_EPS {
        Some(t0)
    } else if t1 > HIT_EPS {
        Some(t1)
    } else {
        None
    }
}

fn ray_box(o: &Vec3, d: &Vec3, c: &Vec3, h: &Vec3) -> Option<f64> {
    let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        let (lo, hi) = (c[k] - h[k], c[k] + h[k]);
        if d[k].abs() < 1e-15 {
            if o[k] < lo || o[k] > hi {
                return None;
            }
            continue;
        }
        let (mut t0, mut t1) = ((lo - o[k]) / d[k], (hi - o[k]) / d[k]);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        tmin = tmin.max(t0);
        tmax = tmax.min(t1);
        if tmin > tmax {
            return None;
        }
    }
    if tmin > HIT_EPS {
        Some(tmin)
    } else if tmax > HIT_EPS {
        Some(tmax)
    } else {
        None
    }
}

pub(crate) fn render_view_uncached(scene: &SyntheticScene, view: usize) -> RenderedView {
    let cam = &scene.cameras[view];
    let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
    let mut depth = DepthMap::new(w, h);
    let mut surfaces = vec![Surface::None; w as usize * h as usize];
    let origin = cam.pose.center();
    for v in 0..h {
        for u in 0..w {
            // Camera-frame ray has unit Z, so the hit parameter is the depth.
            let dir = cam.pose.rotation * cam.intrinsics.ray(u as f64, v as f64);
            if let Some((t, s)) = cast_ray(scene, &origin, &dir) {
                depth.set(u, v, t);
                surfaces[v as usize * w as usize + u as usize] = s;
            }
        }
    }
    RenderedView { depth, surfaces, width: w }
}

pub fn render_view(scene: &SyntheticScene, view: usize) -> Result<Arc<RenderedView>> {
    scene.rendered(view)
}

/// Exact per-pixel depth by ray casting; pixels that hit nothing are invalid.
pub fn render_depth(scene: &SyntheticScene, view: usize) -> Result<DepthMap> {
    Ok(scene.rendered(view)?.depth.clone())
}

/// Z-buffered point splats: nearest point wins per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SplatImage {
    pub width: u32,
    pub height: u32,
    depth: Vec<f64>,
    index: Vec<Option<usize>>,
}

impl SplatImage {
    /// Point index and depth at a pixel, if anything landed there.
    pub fn get(&self, u: u32, v: u32) -> Option<(usize, f64)> {
        let i = v as usize * self.width as usize + u as usize;
        self.index[i].map(|idx| (idx, self.depth[i]))
    }

    pub fn covered(&self) -> usize {
        self.index.iter().filter(|i| i.is_some()).count()
    }
}

pub fn render_point_splat(
    cloud: &PointCloud,
    intr: &CameraIntrinsics,
    pose: &CameraPose,
    radius: f64,
) -> Result<SplatImage> {
    if cloud.is_empty() {
        return Err(SceneError::EmptyCloud);
    }
    let (w, h) = (intr.width, intr.height);
    let mut img = SplatImage {
        width: w,
        height: h,
        depth: vec![f64::INFINITY; w as usize * h as usize],
        index: vec![None; w as usize * h as usize],
    };
    let r = radius.max(0.0);
    let reach = r.ceil() as i64;
    for (idx, p) in cloud.points.iter().enumerate() {
        let Some((u, v, z)) = project_point(p, intr, pose) else { continue };
        let (cu, cv) = (u.round() as i64, v.round() as i64);
        for dv in -reach..=reach {
            for du in -reach..=reach {
                if ((du * du + dv * dv) as f64) > r * r {
                    continue;
                }
                let (pu, pv) = (cu + du, cv + dv);
                if pu < 0 || pv < 0 || pu >= w as i64 || pv >= h as i64 {
                    continue;
                }
                let i = pv as usize * w as usize + pu as usize;
                if z < img.depth[i] {
                    img.depth[i] = z;
                    img.index[i] = Some(idx);
                }
            }
        }
    }
    Ok(img)
}
