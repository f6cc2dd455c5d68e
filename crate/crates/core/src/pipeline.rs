//! Per-frame second stage: patches, point clouds, embedding, decoding and
//! pose recovery.

use serde::{Deserialize, Serialize};

use crate::camera::{ray_map, RayNormalization};
use crate::error::{Error, Result};
use crate::estimator::{
    reference_embedding, DecoderInput, DepthCompleter, LinearDecoder, NormalEstimator, TrainingSample,
};
use crate::features::{
    assemble_features, extract_patch, sample_points, FrameLayers, GeneralizedPointCloud, DEFAULT_PATCH_SIZE,
    DEFAULT_POINTS,
};
use crate::grid::{DepthMap, NormalMap};
use crate::loss::PoseTarget;
use crate::metrics::PoseInstance;
use crate::pose::{Category, Pose, Scale, Symmetry};
use crate::recovery::{translation_prior, CategoryPriors};
use crate::rng::derive_seed;
use crate::synth::{FrameData, InstanceAnnotation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Points per instance.
    pub points: usize,
    pub patch_size: u32,
    pub rays: RayNormalization,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            points: DEFAULT_POINTS,
            patch_size: DEFAULT_PATCH_SIZE,
            rays: RayNormalization::Unit,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points == 0 || self.patch_size == 0 {
            return Err(Error::Invalid(
                "sampler needs at least one point and a non-empty patch".into(),
            ));
        }
        Ok(())
    }
}

/// Sampling seed of one instance.
pub fn instance_seed(run_seed: u64, frame_index: u64, instance_id: u8) -> u64 {
    derive_seed(derive_seed(run_seed, frame_index), instance_id as u64)
}

/// Everything the decoder needs for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceFeatures {
    pub id: u8,
    pub category: Category,
    pub cloud: GeneralizedPointCloud,
    pub input: DecoderInput,
}

/// Completed depth and normals for a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameEstimates {
    pub depth: DepthMap,
    pub normals: NormalMap,
}

impl FrameEstimates {
    pub fn compute(frame: &FrameData, depth: &dyn DepthCompleter, normals: &dyn NormalEstimator) -> Result<Self> {
        let out = FrameEstimates {
            depth: depth.complete(frame)?,
            normals: normals.estimate(frame)?,
        };
        if !(out.depth.same_dims(&frame.depth_gt) && out.normals.same_dims(&frame.depth_gt)) {
            return Err(Error::ShapeMismatch("estimator output does not match the frame".into()));
        }
        Ok(out)
    }
}

/// Builds the point cloud and decoder input of every annotated instance.
///
/// Instances that are fully hidden or have no cell with valid depth and a
/// defined normal get `None`; they count as missed detections.
pub fn frame_features(
    frame: &FrameData,
    estimates: &FrameEstimates,
    priors: &CategoryPriors,
    sampler: &SamplerConfig,
    run_seed: u64,
) -> Result<Vec<(InstanceAnnotation, Option<InstanceFeatures>)>> {
    sampler.validate()?;
    let rays = ray_map(&frame.intrinsics, sampler.rays);
    let transparency = frame.transparency();
    let mut out = Vec::with_capacity(frame.instances.len());
    for ann in &frame.instances {
        let Some(bbox) = ann.bbox else {
            out.push((ann.clone(), None));
            continue;
        };
        let instance_mask = frame.instance_mask(ann.id);
        let layers = FrameLayers {
            rgb: &frame.rgb,
            raw_depth: &frame.depth_raw,
            completed_depth: &estimates.depth,
            normals: &estimates.normals,
            rays: &rays,
            instance_mask: &instance_mask,
            transparency_mask: &transparency,
        };
        let patch = extract_patch(&layers, bbox, sampler.patch_size, ann.category)?;
        let features = assemble_features(&patch)?;
        let sample_mask = features
            .valid_mask()
            .and(&patch.instance_mask)?
            .and(&patch.transparency_mask)?;
        let seed = instance_seed(run_seed, frame.index, ann.id);
        let cloud = match sample_points(&features, &sample_mask, sampler.points, seed) {
            Ok(c) => c,
            Err(Error::EmptyMask) => {
                out.push((ann.clone(), None));
                continue;
            }
            Err(e) => return Err(e),
        };
        let input = decoder_input(&cloud, frame, ann.category, priors)?;
        out.push((
            ann.clone(),
            Some(InstanceFeatures {
                id: ann.id,
                category: ann.category,
                cloud,
                input,
            }),
        ));
    }
    Ok(out)
}

pub fn decoder_input(
    cloud: &GeneralizedPointCloud,
    frame: &FrameData,
    category: Category,
    priors: &CategoryPriors,
) -> Result<DecoderInput> {
    let emb = reference_embedding(cloud, &frame.intrinsics, category)?;
    let t = translation_prior(cloud, &frame.intrinsics)?;
    Ok(DecoderInput::new(&emb, t, *priors.get(category)?.extents()))
}

/// One predicted instance, as written to prediction files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub frame: u64,
    pub instance: u8,
    pub category: Category,
    pub pose: Pose,
    pub scale: Scale,
    pub confidence_x: f64,
    pub confidence_z: f64,
    /// Wall time spent on this instance, when timing is enabled. Off by
    /// default so prediction files stay byte-identical across runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_us: Option<u64>,
}

impl PredictionRecord {
    pub fn instance(&self) -> PoseInstance {
        PoseInstance {
            category: self.category,
            pose: self.pose,
            scale: self.scale,
        }
    }
}

pub fn predict_instance(
    decoder: &LinearDecoder,
    frame_index: u64,
    f: &InstanceFeatures,
    symmetry: &Symmetry,
) -> Result<PredictionRecord> {
    let out = decoder.decode(&f.input)?;
    let (pose, scale) = out.recover(symmetry)?;
    Ok(PredictionRecord {
        frame: frame_index,
        instance: f.id,
        category: f.category,
        pose,
        scale,
        confidence_x: out.axes.c_x,
        confidence_z: out.axes.c_z,
        elapsed_us: None,
    })
}

pub fn training_sample(ann: &InstanceAnnotation, f: &InstanceFeatures) -> TrainingSample {
    TrainingSample {
        input: f.input.clone(),
        target: PoseTarget {
            pose: ann.pose,
            scale: ann.scale,
        },
        symmetry: ann.symmetry.clone(),
    }
}

pub fn annotation_instance(ann: &InstanceAnnotation) -> PoseInstance {
    PoseInstance {
        category: ann.category,
        pose: ann.pose,
        scale: ann.scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{NoisyDepth, OracleDepth, OracleNormals};
    use crate::features::{DEPTH, NORMAL, RAY, RGB};
    use crate::synth::{compute_priors, generate_scene, SceneConfig};

    fn frame(seed: u64) -> (FrameData, CategoryPriors) {
        let cfg = SceneConfig::default();
        let scene = generate_scene(&cfg, seed).unwrap();
        let priors = compute_priors(&scene.instances, &cfg.templates).unwrap();
        (FrameData::from_scene(seed, &scene), priors)
    }

    #[test]
    fn noisy_depth_changes_only_depth_columns() {
        let (f, priors) = frame(3);
        let sampler = SamplerConfig::default();
        let a = FrameEstimates::compute(&f, &OracleDepth, &OracleNormals).unwrap();
        let b = FrameEstimates::compute(&f, &NoisyDepth::default(), &OracleNormals).unwrap();
        let fa = frame_features(&f, &a, &priors, &sampler, 1).unwrap();
        let fb = frame_features(&f, &b, &priors, &sampler, 1).unwrap();
        let mut compared = 0;
        for ((_, x), (_, y)) in fa.iter().zip(&fb) {
            let (Some(x), Some(y)) = (x, y) else { continue };
            assert_eq!(x.cloud.pixels, y.cloud.pixels);
            for (rx, ry) in x.cloud.rows.iter().zip(&y.cloud.rows) {
                for c in RGB.chain(NORMAL).chain(RAY) {
                    assert_eq!(rx[c].to_bits(), ry[c].to_bits());
                }
                compared += usize::from(rx[DEPTH] != ry[DEPTH]);
            }
        }
        assert!(compared > 1000);
    }

    #[test]
    fn features_are_deterministic_per_seed() {
        let (f, priors) = frame(4);
        let est = FrameEstimates::compute(&f, &OracleDepth, &OracleNormals).unwrap();
        let s = SamplerConfig::default();
        let a = frame_features(&f, &est, &priors, &s, 9).unwrap();
        assert_eq!(a, frame_features(&f, &est, &priors, &s, 9).unwrap());
        assert_ne!(a, frame_features(&f, &est, &priors, &s, 10).unwrap());
        for (ann, x) in &a {
            let x = x.as_ref().unwrap();
            assert_eq!(x.cloud.len(), s.points);
            // Every sampled pixel belongs to the instance.
            for px in &x.cloud.pixels {
                assert_eq!(*f.instance_ids.get(px[0], px[1]), ann.id);
            }
        }
    }
}
