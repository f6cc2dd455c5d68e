//! Reference per-point and global embedding of a generalized point cloud.
//!
//! Each point contributes its 10 feature channels plus its backprojected
//! position relative to the cloud centroid. The global vector is the
//! per-channel mean, max and population variance of those 13 values.

use crate::camera::Intrinsics;
use crate::error::{Error, Result};
use crate::features::GeneralizedPointCloud;
use crate::pose::{Category, NUM_CATEGORIES};
use crate::recovery::translation_prior;

pub const POINT_WIDTH: usize = 13;
pub const GLOBAL_WIDTH: usize = 3 * POINT_WIDTH;
/// Width of one row of `[point, global, one-hot]`.
pub const CONCAT_WIDTH: usize = POINT_WIDTH + GLOBAL_WIDTH + NUM_CATEGORIES;

pub type PointEmbedding = [f64; POINT_WIDTH];

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub points: Vec<PointEmbedding>,
    pub global: [f64; GLOBAL_WIDTH],
    pub category: Category,
}

impl Embedding {
    /// Row `i` of the concatenated per-point matrix.
    pub fn concat_row(&self, i: usize) -> [f64; CONCAT_WIDTH] {
        let mut row = [0.0; CONCAT_WIDTH];
        row[..POINT_WIDTH].copy_from_slice(&self.points[i]);
        row[POINT_WIDTH..POINT_WIDTH + GLOBAL_WIDTH].copy_from_slice(&self.global);
        row[POINT_WIDTH + GLOBAL_WIDTH..].copy_from_slice(&self.category.one_hot());
        row
    }

    pub fn concat(&self) -> Vec<[f64; CONCAT_WIDTH]> {
        (0..self.points.len()).map(|i| self.concat_row(i)).collect()
    }
}

pub fn reference_embedding(cloud: &GeneralizedPointCloud, k: &Intrinsics, category: Category) -> Result<Embedding> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let center = translation_prior(cloud, k)?;
    let points: Vec<PointEmbedding> = cloud
        .rows
        .iter()
        .zip(&cloud.pixels)
        .map(|(row, px)| {
            let p = k.unproject(px[0] as f64, px[1] as f64) * row[crate::features::DEPTH] - center;
            let mut e = [0.0; POINT_WIDTH];
            e[..10].copy_from_slice(row);
            e[10..].copy_from_slice(p.as_slice());
            e
        })
        .collect();
    // Accumulate relative to the first point so identical rows give an
    // exact mean and a variance of exactly zero.
    let n = points.len() as f64;
    let p0 = points[0];
    let mut offset = [0.0; POINT_WIDTH];
    let mut max = [f64::NEG_INFINITY; POINT_WIDTH];
    for p in &points {
        for c in 0..POINT_WIDTH {
            offset[c] += p[c] - p0[c];
            max[c] = max[c].max(p[c]);
        }
    }
    offset.iter_mut().for_each(|m| *m /= n);
    let mean: [f64; POINT_WIDTH] = std::array::from_fn(|c| p0[c] + offset[c]);
    let mut var = [0.0; POINT_WIDTH];
    for p in &points {
        for c in 0..POINT_WIDTH {
            var[c] += (p[c] - p0[c] - offset[c]).powi(2);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    if mean.iter().chain(&max).chain(&var).any(|x| !x.is_finite()) {
        return Err(Error::Invalid("non-finite point features".into()));
    }
    let mut global = [0.0; GLOBAL_WIDTH];
    global[..POINT_WIDTH].copy_from_slice(&mean);
    global[POINT_WIDTH..2 * POINT_WIDTH].copy_from_slice(&max);
    global[2 * POINT_WIDTH..].copy_from_slice(&var);
    Ok(Embedding {
        points,
        global,
        category,
    })
}
