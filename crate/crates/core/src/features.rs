//! Generalized point cloud construction.
//!
//! An instance is cropped to its pixel bounding box and rescaled to a square
//! patch (nearest neighbour, so masks stay binary and every patch pixel keeps
//! the image coordinates of the pixel it came from). The per-pixel layers are
//! concatenated into a 10-channel feature patch
//!
//! | channels | content                 |
//! |----------|-------------------------|
//! | 0..3     | RGB                     |
//! | 3        | completed depth (m)     |
//! | 4..7     | surface normal          |
//! | 7..10    | ray direction           |
//!
//! and `N` rows are drawn from the pixels inside the sampling mask.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{depth_is_valid, DepthMap, Grid, Mask, NormalMap, RayMap, RgbImage};
use crate::pose::{Category, Vec3};
use crate::rng::rng_from_seed;

pub const FEATURE_DIM: usize = 10;
pub const RGB: std::ops::Range<usize> = 0..3;
pub const DEPTH: usize = 3;
pub const NORMAL: std::ops::Range<usize> = 4..7;
pub const RAY: std::ops::Range<usize> = 7..10;

/// Default number of sampled points per instance.
pub const DEFAULT_POINTS: usize = 1024;
/// Default side length of the rescaled instance patch.
pub const DEFAULT_PATCH_SIZE: u32 = 256;

pub type FeatureRow = [f64; FEATURE_DIM];

/// Axis-aligned pixel rectangle `[u0, u0 + width) x [v0, v0 + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub u0: u32,
    pub v0: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    /// Tight box around the set pixels of `mask`, `None` if it is empty.
    pub fn around(mask: &Mask) -> Option<PixelRect> {
        let (mut u_min, mut v_min, mut u_max, mut v_max) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                let (u, v) = mask.coords(i);
                u_min = u_min.min(u);
                v_min = v_min.min(v);
                u_max = u_max.max(u);
                v_max = v_max.max(v);
                any = true;
            }
        }
        any.then(|| PixelRect {
            u0: u_min,
            v0: v_min,
            width: u_max - u_min + 1,
            height: v_max - v_min + 1,
        })
    }
}

/// Full-frame layers an instance patch is cut from.
#[derive(Debug, Clone, Copy)]
pub struct FrameLayers<'a> {
    pub rgb: &'a RgbImage,
    pub raw_depth: &'a DepthMap,
    pub completed_depth: &'a DepthMap,
    pub normals: &'a NormalMap,
    pub rays: &'a RayMap,
    pub instance_mask: &'a Mask,
    pub transparency_mask: &'a Mask,
}

/// Per-instance patches, all of one size.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchBundle {
    pub bbox: PixelRect,
    pub rgb: RgbImage,
    pub raw_depth: DepthMap,
    pub completed_depth: DepthMap,
    pub normals: NormalMap,
    pub rays: RayMap,
    pub instance_mask: Mask,
    pub transparency_mask: Mask,
    pub category: Category,
    /// Image coordinates of the pixel each patch pixel was copied from.
    pub source: Grid<[u32; 2]>,
}

fn crop<T: Clone>(img: &Grid<T>, source: &Grid<[u32; 2]>) -> Grid<T> {
    source.map(|&[u, v]| img.get(u, v).clone())
}

/// Cuts `bbox` out of every layer and rescales it to `size x size`.
pub fn extract_patch(layers: &FrameLayers<'_>, bbox: PixelRect, size: u32, category: Category) -> Result<PatchBundle> {
    let dims = layers.rgb.dims();
    let all_same = [
        layers.raw_depth.dims(),
        layers.completed_depth.dims(),
        layers.normals.dims(),
        layers.rays.dims(),
        layers.instance_mask.dims(),
        layers.transparency_mask.dims(),
    ]
    .iter()
    .all(|&d| d == dims);
    if !all_same {
        return Err(Error::ShapeMismatch("frame layers differ in size".into()));
    }
    if bbox.is_empty() || size == 0 || bbox.u0 + bbox.width > dims.0 || bbox.v0 + bbox.height > dims.1 {
        return Err(Error::ShapeMismatch(format!(
            "bbox {bbox:?} does not fit a {}x{} frame",
            dims.0, dims.1
        )));
    }
    let source = Grid::from_fn(size, size, |i, j| {
        let u = bbox.u0 + ((i as u64 * 2 + 1) * bbox.width as u64 / (2 * size as u64)) as u32;
        let v = bbox.v0 + ((j as u64 * 2 + 1) * bbox.height as u64 / (2 * size as u64)) as u32;
        [u, v]
    });
    Ok(PatchBundle {
        bbox,
        rgb: crop(layers.rgb, &source),
        raw_depth: crop(layers.raw_depth, &source),
        completed_depth: crop(layers.completed_depth, &source),
        normals: crop(layers.normals, &source),
        rays: crop(layers.rays, &source),
        instance_mask: crop(layers.instance_mask, &source),
        transparency_mask: crop(layers.transparency_mask, &source),
        category,
        source,
    })
}

/// `H x W x 10` feature patch with the source pixel of every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePatch {
    pub features: Grid<FeatureRow>,
    pub source: Grid<[u32; 2]>,
}

impl FeaturePatch {
    /// Cells whose depth is valid and whose normal is defined.
    pub fn valid_mask(&self) -> Mask {
        self.features
            .map(|f| depth_is_valid(f[DEPTH]) && f[NORMAL].iter().all(|x| x.is_finite()))
    }
}

/// Channel-wise concatenation `[rgb, depth, normal, ray]`.
///
/// Undefined normals are written as NaN; use [`FeaturePatch::valid_mask`]
/// to exclude them from sampling.
pub fn assemble_features(bundle: &PatchBundle) -> Result<FeaturePatch> {
    let g = &bundle.rgb;
    g.check_dims(&bundle.completed_depth, "completed depth patch")?;
    g.check_dims(&bundle.normals, "normal patch")?;
    g.check_dims(&bundle.rays, "ray patch")?;
    g.check_dims(&bundle.source, "source map")?;
    let features = Grid::from_fn(g.width(), g.height(), |u, v| {
        let mut row = [0.0; FEATURE_DIM];
        row[RGB].copy_from_slice(g.get(u, v));
        row[DEPTH] = *bundle.completed_depth.get(u, v);
        let n = bundle.normals.get(u, v).unwrap_or(Vec3::repeat(f64::NAN));
        row[NORMAL].copy_from_slice(n.as_slice());
        row[RAY].copy_from_slice(bundle.rays.get(u, v).as_slice());
        row
    });
    Ok(FeaturePatch {
        features,
        source: bundle.source.clone(),
    })
}

/// `N x 10` sampled feature rows plus their source pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPointCloud {
    pub rows: Vec<FeatureRow>,
    /// Image coordinates `(u, v)` of each row.
    pub pixels: Vec<[u32; 2]>,
    /// Flat patch index of each row.
    pub patch_indices: Vec<usize>,
}

impl GeneralizedPointCloud {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn depth(&self, i: usize) -> f64 {
        self.rows[i][DEPTH]
    }

    pub fn ray(&self, i: usize) -> Vec3 {
        Vec3::from_column_slice(&self.rows[i][RAY])
    }

    pub fn normal(&self, i: usize) -> Vec3 {
        Vec3::from_column_slice(&self.rows[i][NORMAL])
    }

    /// CSV with header `u,v,r,g,b,depth,nx,ny,nz,rx,ry,rz`. Values use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "u,v,r,g,b,depth,nx,ny,nz,rx,ry,rz")?;
        for (row, px) in self.rows.iter().zip(&self.pixels) {
            write!(w, "{},{}", px[0], px[1])?;
            for x in row {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a cloud written by [`write_csv`](Self::write_csv). Patch indices
    /// are not stored and come back as row numbers.
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.split(',').count() != 2 + FEATURE_DIM {
            return Err(Error::SchemaMismatch(format!("bad cloud header {header:?}")));
        }
        let mut cloud = GeneralizedPointCloud {
            rows: Vec::new(),
            pixels: Vec::new(),
            patch_indices: Vec::new(),
        };
        for (n, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 2 + FEATURE_DIM {
                return Err(Error::SchemaMismatch(format!(
                    "cloud line {} has {} columns",
                    n + 2,
                    cols.len()
                )));
            }
            let bad = |e: &dyn std::fmt::Display| Error::SchemaMismatch(format!("cloud line {}: {e}", n + 2));
            let u = cols[0].parse().map_err(|e| bad(&e))?;
            let v = cols[1].parse().map_err(|e| bad(&e))?;
            let mut row = [0.0; FEATURE_DIM];
            for (dst, src) in row.iter_mut().zip(&cols[2..]) {
                *dst = src.parse().map_err(|e| bad(&e))?;
            }
            cloud.rows.push(row);
            cloud.pixels.push([u, v]);
            cloud.patch_indices.push(n);
        }
        Ok(cloud)
    }
}

/// Draws `n` rows from the cells of `patch` selected by `mask`.
///
/// Without replacement (partial Fisher-Yates over the selected cells in
/// row-major order) when at least `n` cells are selected, with replacement
/// otherwise. The generator is ChaCha8 seeded with `seed`, so the draw is
/// identical on every platform.
pub fn sample_points(patch: &FeaturePatch, mask: &Mask, n: usize, seed: u64) -> Result<GeneralizedPointCloud> {
    use rand::Rng;

    patch.features.check_dims(mask, "sampling mask")?;
    let mut population: Vec<usize> = mask
        .data()
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    if population.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut rng = rng_from_seed(seed);
    let chosen: Vec<usize> = if population.len() >= n {
        for i in 0..n {
            let j = rng.random_range(i..population.len());
            population.swap(i, j);
        }
        population.truncate(n);
        population
    } else {
        (0..n)
            .map(|_| population[rng.random_range(0..population.len())])
            .collect()
    };
    Ok(GeneralizedPointCloud {
        rows: chosen.iter().map(|&i| patch.features.data()[i]).collect(),
        pixels: chosen.iter().map(|&i| patch.source.data()[i]).collect(),
        patch_indices: chosen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn bundle(size: u32) -> PatchBundle {
        let rgb = RgbImage::from_fn(size, size, |u, v| [u as f64 / size as f64, v as f64 / size as f64, 0.5]);
        let depth = DepthMap::from_fn(size, size, |u, _| 1.0 + u as f64 * 1e-3);
        let normals = NormalMap::filled(size, size, Some(Vec3::new(0.0, 0.6, -0.8)));
        let rays = RayMap::filled(size, size, Vec3::z());
        let mask = Mask::filled(size, size, true);
        PatchBundle {
            bbox: PixelRect {
                u0: 0,
                v0: 0,
                width: size,
                height: size,
            },
            rgb,
            raw_depth: depth.clone(),
            completed_depth: depth,
            normals,
            rays,
            instance_mask: mask.clone(),
            transparency_mask: mask,
            category: Category::Bottle,
            source: Grid::from_fn(size, size, |u, v| [u, v]),
        }
    }

    #[test]
    fn patch_has_ten_channels_in_order() {
        let b = bundle(256);
        let p = assemble_features(&b).unwrap();
        assert_eq!(p.features.dims(), (256, 256));
        for (i, row) in p.features.data().iter().enumerate() {
            let (u, v) = p.features.coords(i);
            assert_eq!(&row[NORMAL], b.normals.get(u, v).unwrap().as_slice());
            assert_eq!(row[DEPTH], *b.completed_depth.get(u, v));
            assert_eq!(&row[RGB], b.rgb.get(u, v));
        }
    }

    #[test]
    fn mismatched_normal_patch_is_rejected() {
        let mut b = bundle(256);
        b.normals = NormalMap::filled(256, 128, None);
        assert!(matches!(assemble_features(&b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn extraction_rescales_with_nearest_neighbour() {
        let rgb = RgbImage::from_fn(40, 30, |u, v| [u as f64, v as f64, 0.0]);
        let depth = DepthMap::filled(40, 30, 1.0);
        let normals = NormalMap::filled(40, 30, None);
        let rays = RayMap::filled(40, 30, Vec3::z());
        let mask = Mask::from_fn(40, 30, |u, v| (10..20).contains(&u) && (5..25).contains(&v));
        let layers = FrameLayers {
            rgb: &rgb,
            raw_depth: &depth,
            completed_depth: &depth,
            normals: &normals,
            rays: &rays,
            instance_mask: &mask,
            transparency_mask: &mask,
        };
        let bbox = PixelRect::around(&mask).unwrap();
        assert_eq!(
            bbox,
            PixelRect {
                u0: 10,
                v0: 5,
                width: 10,
                height: 20
            }
        );
        let b = extract_patch(&layers, bbox, 16, Category::Bowl).unwrap();
        assert_eq!(b.rgb.dims(), (16, 16));
        assert!(b.instance_mask.data().iter().all(|&m| m));
        for (i, px) in b.source.data().iter().enumerate() {
            let (u, v) = b.source.coords(i);
            assert_eq!(b.rgb.get(u, v), &[px[0] as f64, px[1] as f64, 0.0]);
        }
        assert_eq!(b.source.get(0, 0), &[10, 5]);
        assert_eq!(b.source.get(15, 15), &[19, 24]);
    }

    #[test]
    fn large_mask_samples_distinct_pixels() {
        let p = assemble_features(&bundle(100)).unwrap();
        let mask = Mask::from_fn(100, 100, |_, v| v < 50);
        assert_eq!(mask.count(), 5000);
        let cloud = sample_points(&p, &mask, 1024, 9).unwrap();
        assert_eq!(cloud.len(), 1024);
        let distinct: HashSet<_> = cloud.patch_indices.iter().collect();
        assert_eq!(distinct.len(), 1024);
        assert!(cloud.patch_indices.iter().all(|&i| mask.data()[i]));
    }

    #[test]
    fn tiny_mask_samples_with_replacement() {
        let p = assemble_features(&bundle(32)).unwrap();
        let mask = Mask::from_fn(32, 32, |u, v| v == 3 && u < 10);
        let cloud = sample_points(&p, &mask, 1024, 1).unwrap();
        assert_eq!(cloud.len(), 1024);
        let mut counts = [0usize; 10];
        for &i in &cloud.patch_indices {
            let (u, v) = p.features.coords(i);
            assert_eq!(v, 3);
            counts[u as usize] += 1;
        }
        // P(some pixel unseen) <= 10 * 0.9^1024, far below 1e-40.
        assert!(counts.iter().all(|&c| c >= 1));
    }

    #[test]
    fn empty_mask_is_an_error() {
        let p = assemble_features(&bundle(8)).unwrap();
        let mask = Mask::filled(8, 8, false);
        assert!(matches!(sample_points(&p, &mask, 4, 0), Err(Error::EmptyMask)));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let p = assemble_features(&bundle(64)).unwrap();
        let mask = Mask::filled(64, 64, true);
        let a = sample_points(&p, &mask, 100, 42).unwrap();
        let b = sample_points(&p, &mask, 100, 42).unwrap();
        let c = sample_points(&p, &mask, 100, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.patch_indices, c.patch_indices);
    }

    #[test]
    fn sampling_histogram_is_uniform() {
        // 20 pixels, 4 draws per seed without replacement, 5000 seeds:
        // each pixel is hit Binomial(5000, 0.2) times.
        let p = assemble_features(&bundle(10)).unwrap();
        let mask = Mask::from_fn(10, 10, |u, v| v == 0 || (v == 1 && u < 10));
        assert_eq!(mask.count(), 20);
        let mut hist = vec![0usize; 100];
        let seeds = 5000;
        for seed in 0..seeds {
            for i in sample_points(&p, &mask, 4, seed).unwrap().patch_indices {
                hist[i] += 1;
            }
        }
        let expect = seeds as f64 * 0.2;
        let sigma = (seeds as f64 * 0.2 * 0.8).sqrt();
        for (i, &h) in hist.iter().enumerate() {
            if mask.data()[i] {
                assert!((h as f64 - expect).abs() < 3.0 * sigma + 1.0, "pixel {i}: {h}");
            } else {
                assert_eq!(h, 0);
            }
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = assemble_features(&bundle(16)).unwrap();
        let cloud = sample_points(&p, &Mask::filled(16, 16, true), 20, 3).unwrap();
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf).unwrap();
        let back = GeneralizedPointCloud::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.rows, cloud.rows);
        assert_eq!(back.pixels, cloud.pixels);
    }
}
