//! On-disk dataset layout.
//!
//! ```text
//! intrinsics.json  priors.json  manifest.json
//! rgb_000000.png        8-bit RGB
//! depth_000000.png      16-bit millimeters, corrupted sensor depth
//! depth_gt_000000.png   16-bit millimeters, ground truth
//! normal_000000.f32     little-endian f32 xyz (+ normal_000000.f32.json)
//! mask_000000.png       instance id per pixel, 0 = background
//! anno_000000.json      instance annotations
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scene::{InstanceAnnotation, SceneFrame};
use super::templates::TemplateLibrary;
use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::grid::{DepthMap, Grid, Mask, NormalMap, RgbImage};
use crate::io;
use crate::pose::{Category, Scale, Vec3};
use crate::recovery::CategoryPriors;

pub const MANIFEST_FORMAT: &str = "glasspose-synth";
pub const MANIFEST_VERSION: u32 = 1;

/// File names of frame `index`, keyed by layer.
pub fn frame_file_names(index: u64) -> BTreeMap<&'static str, String> {
    BTreeMap::from([
        ("rgb", format!("rgb_{index:06}.png")),
        ("depth", format!("depth_{index:06}.png")),
        ("depth_gt", format!("depth_gt_{index:06}.png")),
        ("normal", format!("normal_{index:06}.f32")),
        ("mask", format!("mask_{index:06}.png")),
        ("anno", format!("anno_{index:06}.json")),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: u64,
    pub seed: u64,
    pub instances: usize,
    pub files: BTreeMap<String, FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub master_seed: u64,
    pub frame_count: usize,
    pub intrinsics: String,
    pub priors: String,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationFile {
    index: u64,
    seed: u64,
    instances: Vec<InstanceAnnotation>,
}

/// Everything a pipeline may read about one frame. Values carry exactly the
/// precision of the files: 8-bit color, millimeter depth, `f32` normals.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub index: u64,
    pub seed: u64,
    pub intrinsics: Intrinsics,
    pub rgb: RgbImage,
    pub depth_raw: DepthMap,
    pub depth_gt: DepthMap,
    pub normals: NormalMap,
    pub instance_ids: Grid<u8>,
    pub instances: Vec<InstanceAnnotation>,
}

fn quantize_rgb(c: f64) -> f64 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8 as f64 / 255.0
}

fn quantize_normal(n: &Option<Vec3>) -> Option<Vec3> {
    let n = n.as_ref()?;
    let v = n.map(|x| x as f32 as f64);
    v.iter().all(|x| x.is_finite()).then_some(v)
}

impl FrameData {
    /// What [`read_frame`] would return after [`write_frame`], without
    /// touching the disk.
    pub fn from_scene(index: u64, frame: &SceneFrame) -> Self {
        FrameData {
            index,
            seed: frame.seed,
            intrinsics: frame.intrinsics,
            rgb: frame.rgb.map(|px| px.map(quantize_rgb)),
            depth_raw: io::quantize_depth(&frame.depth_raw),
            depth_gt: io::quantize_depth(&frame.depth_gt),
            normals: frame.normals.map(quantize_normal),
            instance_ids: frame.instance_ids.clone(),
            instances: frame.instances.clone(),
        }
    }

    /// Union of all instance masks.
    pub fn transparency(&self) -> Mask {
        self.instance_ids.map(|&id| id > 0)
    }

    pub fn instance_mask(&self, id: u8) -> Mask {
        self.instance_ids.map(|&x| x == id)
    }
}

/// Writes the six files of one frame and returns its manifest entry.
pub fn write_frame(dir: &Path, index: u64, frame: &SceneFrame) -> Result<FrameEntry> {
    let names = frame_file_names(index);
    let path = |k: &str| dir.join(&names[k]);
    io::write_rgb_png(&path("rgb"), &frame.rgb)?;
    io::write_depth_png(&path("depth"), &frame.depth_raw)?;
    io::write_depth_png(&path("depth_gt"), &frame.depth_gt)?;
    io::write_normals(&path("normal"), &frame.normals)?;
    io::write_mask_png(&path("mask"), &frame.instance_ids)?;
    io::write_json(
        &path("anno"),
        &AnnotationFile {
            index,
            seed: frame.seed,
            instances: frame.instances.clone(),
        },
    )?;
    let mut files = BTreeMap::new();
    for (kind, name) in &names {
        files.insert(
            kind.to_string(),
            FileRecord {
                path: name.clone(),
                sha256: io::sha256_file(&dir.join(name))?,
            },
        );
    }
    Ok(FrameEntry {
        index,
        seed: frame.seed,
        instances: frame.instances.len(),
        files,
    })
}

/// Mean extents per category over `instances`; categories that never occur
/// fall back to their template's nominal extents.
pub fn compute_priors<'a>(
    instances: impl IntoIterator<Item = &'a InstanceAnnotation>,
    templates: &TemplateLibrary,
) -> Result<CategoryPriors> {
    let mut sums: BTreeMap<Category, (Vec3, usize)> = BTreeMap::new();
    for a in instances {
        let e = sums.entry(a.category).or_insert((Vec3::zeros(), 0));
        e.0 += a.scale.extents();
        e.1 += 1;
    }
    let mut priors = BTreeMap::new();
    for (&c, t) in &templates.0 {
        let s = match sums.get(&c) {
            Some(&(sum, n)) => Scale::new(sum / n as f64)?,
            None => t.nominal()?,
        };
        priors.insert(c, s);
    }
    Ok(CategoryPriors(priors))
}

/// Writes `intrinsics.json`, `priors.json` and `manifest.json`.
pub fn write_dataset_meta(
    dir: &Path,
    intrinsics: &Intrinsics,
    priors: &CategoryPriors,
    master_seed: u64,
    frames: Vec<FrameEntry>,
) -> Result<Manifest> {
    io::write_json(&dir.join("intrinsics.json"), intrinsics)?;
    io::write_json(&dir.join("priors.json"), priors)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        master_seed,
        frame_count: frames.len(),
        intrinsics: "intrinsics.json".into(),
        priors: "priors.json".into(),
        frames,
    };
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Writes a whole dataset of in-memory frames; frame `i` gets index `i`.
pub fn write_dataset(
    frames: &[SceneFrame],
    dir: &Path,
    templates: &TemplateLibrary,
    intrinsics: &Intrinsics,
    master_seed: u64,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries = frames
        .iter()
        .enumerate()
        .map(|(i, f)| write_frame(dir, i as u64, f))
        .collect::<Result<Vec<_>>>()?;
    let priors = compute_priors(frames.iter().flat_map(|f| &f.instances), templates)?;
    write_dataset_meta(dir, intrinsics, &priors, master_seed, entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub manifest: Manifest,
    pub intrinsics: Intrinsics,
    pub priors: CategoryPriors,
}

pub fn read_dataset_meta(dir: &Path) -> Result<DatasetMeta> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let manifest: Manifest = io::read_json(&dir.join("manifest.json"))?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
        return Err(Error::SchemaMismatch(format!(
            "manifest is {} v{}, expected {MANIFEST_FORMAT} v{MANIFEST_VERSION}",
            manifest.format, manifest.version
        )));
    }
    if manifest.frame_count != manifest.frames.len() {
        return Err(Error::SchemaMismatch(
            "manifest frame_count disagrees with its frame list".into(),
        ));
    }
    let intrinsics = io::read_json(&dir.join(&manifest.intrinsics))?;
    let priors = io::read_json(&dir.join(&manifest.priors))?;
    Ok(DatasetMeta {
        manifest,
        intrinsics,
        priors,
    })
}

pub fn read_frame(dir: &Path, meta: &DatasetMeta, entry: &FrameEntry) -> Result<FrameData> {
    let file = |k: &str| -> Result<std::path::PathBuf> {
        entry
            .files
            .get(k)
            .map(|r| dir.join(&r.path))
            .ok_or_else(|| Error::SchemaMismatch(format!("frame {} lists no {k} file", entry.index)))
    };
    let anno: AnnotationFile = io::read_json(&file("anno")?)?;
    let frame = FrameData {
        index: entry.index,
        seed: entry.seed,
        intrinsics: meta.intrinsics,
        rgb: io::read_rgb_png(&file("rgb")?)?,
        depth_raw: io::read_depth_png(&file("depth")?)?,
        depth_gt: io::read_depth_png(&file("depth_gt")?)?,
        normals: io::read_normals(&file("normal")?)?,
        instance_ids: io::read_mask_png(&file("mask")?)?,
        instances: anno.instances,
    };
    let dims = (meta.intrinsics.width(), meta.intrinsics.height());
    let layers = [
        frame.rgb.dims(),
        frame.depth_raw.dims(),
        frame.depth_gt.dims(),
        frame.normals.dims(),
        frame.instance_ids.dims(),
    ];
    if layers.iter().any(|&d| d != dims) {
        return Err(Error::SchemaMismatch(format!(
            "frame {} layers do not match the {}x{} intrinsics",
            entry.index, dims.0, dims.1
        )));
    }
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, SceneConfig};

    #[test]
    fn round_trip_matches_in_memory_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SceneConfig::default();
        let frames: Vec<SceneFrame> = (0..3).map(|s| generate_scene(&cfg, s).unwrap()).collect();
        let m = write_dataset(&frames, dir.path(), &cfg.templates, &cfg.intrinsics, 0).unwrap();
        assert_eq!(m.frame_count, 3);
        let meta = read_dataset_meta(dir.path()).unwrap();
        assert_eq!(meta.manifest, m);
        for (i, f) in frames.iter().enumerate() {
            let back = read_frame(dir.path(), &meta, &meta.manifest.frames[i]).unwrap();
            let mem = FrameData::from_scene(i as u64, f);
            assert!(back.rgb == mem.rgb, "rgb");
            assert!(back.depth_raw == mem.depth_raw, "depth_raw");
            assert!(back.depth_gt == mem.depth_gt, "depth_gt");
            assert!(back.normals == mem.normals, "normals");
            assert!(back.instances == mem.instances, "instances");
            assert!(back == mem);
        }
    }

    #[test]
    fn file_count() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SceneConfig {
            intrinsics: Intrinsics::new(100.0, 100.0, 40.0, 30.0, 80, 60).unwrap(),
            min_visible_pixels: 5,
            ..SceneConfig::default()
        };
        let frames: Vec<SceneFrame> = (0..10).map(|s| generate_scene(&cfg, s).unwrap()).collect();
        write_dataset(&frames, dir.path(), &cfg.templates, &cfg.intrinsics, 0).unwrap();
        let n = std::fs::read_dir(dir.path()).unwrap().count();
        // Six files plus the normal sidecar per frame, three dataset files.
        assert_eq!(n, 10 * 7 + 3);
    }

    #[test]
    fn priors_average_the_run() {
        let cfg = SceneConfig::default();
        let frames: Vec<SceneFrame> = (0..6).map(|s| generate_scene(&cfg, s).unwrap()).collect();
        let priors = compute_priors(frames.iter().flat_map(|f| &f.instances), &cfg.templates).unwrap();
        let bottles: Vec<Vec3> = frames
            .iter()
            .flat_map(|f| &f.instances)
            .filter(|a| a.category == Category::Bottle)
            .map(|a| *a.scale.extents())
            .collect();
        let expected = if bottles.is_empty() {
            Vec3::from(cfg.templates.get(Category::Bottle).unwrap().extents)
        } else {
            bottles.iter().sum::<Vec3>() / bottles.len() as f64
        };
        assert!((priors.get(Category::Bottle).unwrap().extents() - expected).norm() < 1e-15);
    }

    #[test]
    fn missing_directory_is_io() {
        assert!(read_dataset_meta(Path::new("/nonexistent/dataset"))
            .unwrap_err()
            .is_io());
    }
}
