//! Scene layout and analytic rendering.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::corrupt::{corrupt_depth, CorruptionModel};
use super::shapes::{Primitive, Shape};
use super::templates::TemplateLibrary;
use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::features::PixelRect;
use crate::grid::{DepthMap, Grid, Mask, NormalMap, RgbImage};
use crate::pose::{Category, Mat3, Pose, Rotation, Scale, Symmetry, Vec3};
use crate::rng::{derive_labeled, derive_seed, rng_from_seed};

/// Instance ids are stored in an 8-bit mask with `0` for background.
pub const MAX_INSTANCES: usize = 8;

/// Camera placement: looking at the table origin from `distance` meters,
/// `pitch` degrees below the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRig {
    pub pitch_deg: [f64; 2],
    pub distance: [f64; 2],
    /// Look-at point jitter on the table, meters.
    pub target_jitter: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig {
            pitch_deg: [40.0, 65.0],
            distance: [0.65, 0.85],
            target_jitter: 0.03,
        }
    }
}

/// An object placed directly in the camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitInstance {
    pub category: Category,
    /// Defaults to the category template's primitive.
    #[serde(default)]
    pub primitive: Option<Primitive>,
    pub pose: Pose,
    pub scale: Scale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub intrinsics: Intrinsics,
    pub templates: TemplateLibrary,
    /// Inclusive range of the number of objects per frame.
    pub instances: [usize; 2],
    /// Render a table plane under the objects.
    pub table: bool,
    /// Objects are placed with centers in `[-x, x] x [-y, y]` on the table.
    pub placement_half_extent: [f64; 2],
    /// Gap kept between object footprints, meters.
    pub clearance: f64,
    /// Yaw range, in degrees either side of facing the camera, for objects
    /// with planar symmetry. Other objects get a uniform yaw.
    pub planar_yaw_deg: f64,
    /// Every object must cover at least this many pixels.
    pub min_visible_pixels: usize,
    pub max_attempts: usize,
    pub camera: CameraRig,
    pub corruption: CorruptionModel,
    /// Fixed objects in the camera frame. When set, the random layout,
    /// camera rig and table are not used.
    pub explicit: Option<Vec<ExplicitInstance>>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            intrinsics: Intrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).expect("valid default intrinsics"),
            templates: TemplateLibrary::default(),
            instances: [2, 5],
            table: true,
            placement_half_extent: [0.22, 0.16],
            clearance: 0.01,
            planar_yaw_deg: 40.0,
            min_visible_pixels: 300,
            max_attempts: 50,
            camera: CameraRig::default(),
            corruption: CorruptionModel::default(),
            explicit: None,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.templates.validate()?;
        self.corruption.validate()?;
        let [lo, hi] = self.instances;
        if lo > hi || hi > MAX_INSTANCES {
            return Err(Error::Invalid(format!(
                "instance range [{lo}, {hi}] must satisfy lo <= hi <= {MAX_INSTANCES}"
            )));
        }
        let ordered = |r: [f64; 2]| r[0] <= r[1] && r[0].is_finite() && r[1].is_finite();
        if !ordered(self.camera.pitch_deg) || !ordered(self.camera.distance) || self.camera.distance[0] <= 0.0 {
            return Err(Error::Invalid(
                "camera ranges must be ordered and distances positive".into(),
            ));
        }
        if self.max_attempts == 0 {
            return Err(Error::Invalid("max_attempts must be >= 1".into()));
        }
        if let Some(ex) = &self.explicit {
            if ex.len() > MAX_INSTANCES {
                return Err(Error::Invalid(format!("at most {MAX_INSTANCES} explicit instances")));
            }
        }
        Ok(())
    }
}

/// Annotation of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    /// Value of this object in the instance mask, starting at 1.
    pub id: u8,
    pub category: Category,
    pub primitive: Primitive,
    pub symmetry: Symmetry,
    /// Object to camera.
    pub pose: Pose,
    pub scale: Scale,
    /// Tight pixel box of the visible object, `None` if fully hidden.
    pub bbox: Option<PixelRect>,
}

/// One rendered frame. Every object is transparent, so the transparency
/// mask is the union of the instance masks.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneFrame {
    pub seed: u64,
    pub intrinsics: Intrinsics,
    pub rgb: RgbImage,
    pub depth_gt: DepthMap,
    pub depth_raw: DepthMap,
    pub normals: NormalMap,
    pub instance_ids: Grid<u8>,
    pub transparency: Mask,
    pub instances: Vec<InstanceAnnotation>,
}

/// Geometry of a render: per-pixel nearest-surface depth, normal and owner.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderLayers {
    pub depth: DepthMap,
    pub normals: NormalMap,
    /// `0` for background or table, otherwise the instance id.
    pub ids: Grid<u8>,
}

/// A renderable object in the camera frame.
#[derive(Debug, Clone)]
pub struct Placed {
    pub id: u8,
    pub primitive: Primitive,
    pub pose: Pose,
    pub scale: Scale,
}

/// Plane `n . p = c` in the camera frame with `n` facing the camera.
#[derive(Debug, Clone, Copy)]
pub struct TablePlane {
    pub normal: Vec3,
    pub offset: f64,
}

/// Casts one ray per pixel through `K^-1 (u, v, 1)`. Because the direction
/// has unit z, the hit parameter is the z-depth.
pub fn render(k: &Intrinsics, objects: &[Placed], table: Option<TablePlane>) -> RenderLayers {
    struct Local {
        id: u8,
        rt: Mat3,
        origin: Vec3,
        rotation: Mat3,
        shape: Shape,
    }
    let locals: Vec<Local> = objects
        .iter()
        .map(|o| {
            let r = *o.pose.rotation.matrix();
            Local {
                id: o.id,
                rt: r.transpose(),
                origin: -(r.transpose() * o.pose.translation),
                rotation: r,
                shape: Shape::new(o.primitive, &o.scale),
            }
        })
        .collect();
    let (w, h) = (k.width(), k.height());
    let mut depth = DepthMap::filled(w, h, 0.0);
    let mut normals = NormalMap::filled(w, h, None);
    let mut ids = Grid::filled(w, h, 0u8);
    for v in 0..h {
        for u in 0..w {
            let d = k.unproject(u as f64, v as f64);
            let mut best: Option<(f64, Vec3, u8)> = None;
            for l in &locals {
                if let Some(hit) = l.shape.intersect(&l.origin, &(l.rt * d)) {
                    if best.is_none_or(|b| hit.t < b.0) {
                        best = Some((hit.t, l.rotation * hit.normal, l.id));
                    }
                }
            }
            if let Some(t) = table {
                let denom = t.normal.dot(&d);
                if denom < 0.0 {
                    let s = t.offset / denom;
                    if s > 0.0 && best.is_none_or(|b| s < b.0) {
                        best = Some((s, t.normal, 0));
                    }
                }
            }
            if let Some((t, n, id)) = best {
                let i = depth.index(u, v);
                let n = if n.dot(&d) > 0.0 { -n } else { n };
                depth.data_mut()[i] = t;
                normals.data_mut()[i] = Some(n.normalize());
                ids.data_mut()[i] = id;
            }
        }
    }
    RenderLayers { depth, normals, ids }
}

/// Re-renders annotated objects alone.
pub fn render_annotations(k: &Intrinsics, instances: &[InstanceAnnotation]) -> RenderLayers {
    let placed: Vec<Placed> = instances
        .iter()
        .map(|a| Placed {
            id: a.id,
            primitive: a.primitive,
            pose: a.pose,
            scale: a.scale,
        })
        .collect();
    render(k, &placed, None)
}

/// World-to-camera pose for a camera at `pitch` below the horizon,
/// `distance` from `target`, looking along world +y.
pub fn look_at(pitch: f64, distance: f64, target: Vec3) -> Pose {
    let f = Vec3::new(0.0, pitch.cos(), -pitch.sin());
    let x = Vec3::x();
    let y = f.cross(&x);
    let center = target - f * distance;
    let r = Mat3::from_rows(&[x.transpose(), y.transpose(), f.transpose()]);
    let rotation = Rotation::from_matrix(r).expect("look-at basis is orthonormal");
    Pose::new(rotation, -(r * center)).expect("finite camera pose")
}

fn background(u: u32, v: u32, w: u32, h: u32) -> [f64; 3] {
    let (s, t) = (u as f64 / w.max(1) as f64, v as f64 / h.max(1) as f64);
    [0.25 + 0.35 * t, 0.3 + 0.2 * s, 0.55 - 0.25 * t]
}

const TABLE_RGB: [f64; 3] = [0.55, 0.5, 0.42];

fn shade(layers: &RenderLayers, table: bool, albedo: &[[f64; 3]]) -> RgbImage {
    let (w, h) = layers.depth.dims();
    RgbImage::from_fn(w, h, |u, v| {
        let behind = if table && *layers.depth.get(u, v) > 0.0 {
            TABLE_RGB
        } else {
            background(u, v, w, h)
        };
        match *layers.ids.get(u, v) {
            0 => behind,
            id => {
                let a = albedo[id as usize - 1];
                std::array::from_fn(|c| 0.55 * behind[c] + 0.45 * a[c])
            }
        }
    })
}

fn assemble(
    k: &Intrinsics,
    seed: u64,
    layers: RenderLayers,
    annotations: Vec<(Category, Primitive, Pose, Scale)>,
    table: bool,
    corruption: &CorruptionModel,
) -> Result<SceneFrame> {
    let mut rng = rng_from_seed(derive_labeled(seed, "albedo"));
    let albedo: Vec<[f64; 3]> = annotations
        .iter()
        .map(|_| std::array::from_fn(|_| rng.random_range(0.6..1.0)))
        .collect();
    let rgb = shade(&layers, table, &albedo);
    let transparency = layers.ids.map(|&id| id > 0);
    let instances = annotations
        .into_iter()
        .enumerate()
        .map(|(i, (category, primitive, pose, scale))| {
            let id = i as u8 + 1;
            InstanceAnnotation {
                id,
                category,
                primitive,
                symmetry: primitive.symmetry(),
                pose,
                scale,
                bbox: PixelRect::around(&layers.ids.map(|&x| x == id)),
            }
        })
        .collect();
    let depth_raw = corrupt_depth(
        &layers.depth,
        &transparency,
        corruption,
        derive_labeled(seed, "corrupt"),
    )?;
    Ok(SceneFrame {
        seed,
        intrinsics: *k,
        rgb,
        depth_gt: layers.depth,
        depth_raw,
        normals: layers.normals,
        instance_ids: layers.ids,
        transparency,
        instances,
    })
}

struct Draft {
    camera: Pose,
    objects: Vec<(Category, Primitive, Pose, Scale)>,
}

fn sample_layout(cfg: &SceneConfig, rng: &mut impl Rng) -> Result<Option<Draft>> {
    let cam = &cfg.camera;
    let uniform = |rng: &mut dyn rand::RngCore, r: [f64; 2]| {
        if r[0] < r[1] {
            rng.random_range(r[0]..=r[1])
        } else {
            r[0]
        }
    };
    let pitch = uniform(rng, cam.pitch_deg).to_radians();
    let distance = uniform(rng, cam.distance);
    let j = cam.target_jitter;
    let target = if j > 0.0 {
        Vec3::new(rng.random_range(-j..=j), rng.random_range(-j..=j), 0.0)
    } else {
        Vec3::zeros()
    };
    let camera = look_at(pitch, distance, target);
    let [lo, hi] = cfg.instances;
    let count = rng.random_range(lo..=hi);
    let cats = cfg.templates.categories();
    let [hx, hy] = cfg.placement_half_extent;
    let mut footprints: Vec<(f64, f64, f64)> = Vec::new();
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let category = cats[rng.random_range(0..cats.len())];
        let template = cfg.templates.get(category)?;
        let scale = template.sample(rng)?;
        let e = scale.extents();
        let radius = 0.5 * e.x.hypot(e.y);
        let spot = (0..100).find_map(|_| {
            let x = if hx > 0.0 { rng.random_range(-hx..=hx) } else { 0.0 };
            let y = if hy > 0.0 { rng.random_range(-hy..=hy) } else { 0.0 };
            let free = footprints
                .iter()
                .all(|&(fx, fy, fr)| (x - fx).hypot(y - fy) > radius + fr + cfg.clearance);
            free.then_some((x, y))
        });
        let Some((x, y)) = spot else {
            return Ok(None);
        };
        footprints.push((x, y, radius));
        let yaw = match template.primitive.symmetry() {
            Symmetry::Planar(_) => {
                let m = cfg.planar_yaw_deg.to_radians();
                if m > 0.0 {
                    rng.random_range(-m..=m)
                } else {
                    0.0
                }
            }
            _ => rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
        };
        let world = Pose::new(Rotation::about_z(yaw), Vec3::new(x, y, e.z / 2.0))?;
        objects.push((category, template.primitive, camera.compose(&world), scale));
    }
    Ok(Some(Draft { camera, objects }))
}

/// Renders one frame. Same `(config, seed)`, same frame, bit for bit.
pub fn generate_scene(cfg: &SceneConfig, seed: u64) -> Result<SceneFrame> {
    cfg.validate()?;
    let k = &cfg.intrinsics;
    if let Some(explicit) = &cfg.explicit {
        let mut objects = Vec::with_capacity(explicit.len());
        for e in explicit {
            let primitive = match e.primitive {
                Some(p) => p,
                None => cfg.templates.get(e.category)?.primitive,
            };
            objects.push((e.category, primitive, e.pose, e.scale));
        }
        let placed = to_placed(&objects);
        let layers = render(k, &placed, None);
        return assemble(k, seed, layers, objects, false, &cfg.corruption);
    }
    let layout_seed = derive_labeled(seed, "layout");
    let mut last_count = 0;
    for attempt in 0..cfg.max_attempts {
        let mut rng = rng_from_seed(derive_seed(layout_seed, attempt as u64));
        let Some(draft) = sample_layout(cfg, &mut rng)? else {
            continue;
        };
        last_count = draft.objects.len();
        let table = cfg.table.then(|| {
            // World up in the camera frame.
            let normal = draft.camera.rotation.apply(&Vec3::z());
            TablePlane {
                normal,
                offset: normal.dot(&draft.camera.translation),
            }
        });
        let layers = render(k, &to_placed(&draft.objects), table);
        let mut counts = vec![0usize; draft.objects.len() + 1];
        for &id in layers.ids.data() {
            counts[id as usize] += 1;
        }
        if counts[1..].iter().all(|&c| c >= cfg.min_visible_pixels) {
            return assemble(k, seed, layers, draft.objects, cfg.table, &cfg.corruption);
        }
    }
    Err(Error::PlacementFailure {
        instances: last_count,
        attempts: cfg.max_attempts,
    })
}

fn to_placed(objects: &[(Category, Primitive, Pose, Scale)]) -> Vec<Placed> {
    objects
        .iter()
        .enumerate()
        .map(|(i, &(_, primitive, pose, scale))| Placed {
            id: i as u8 + 1,
            primitive,
            pose,
            scale,
        })
        .collect()
}
