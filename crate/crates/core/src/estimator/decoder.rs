//! Single linear layer from pooled features to the pose heads.
//!
//! The input is `[global statistics (39), category one-hot (6)]`,
//! standardized with a stored per-column shift and scale. The 14 outputs are
//! laid out like [`PosePrediction::to_array`]: translation residual, raw
//! x-axis, x confidence logit, raw z-axis, z confidence logit, scale residual.
//! Axes are renormalized, confidences pass through softplus. That is
//! `14 * 45` weights plus `14` biases, [`PARAM_COUNT`] parameters in total.

use serde::{Deserialize, Serialize};

use super::embedding::{Embedding, GLOBAL_WIDTH};
use crate::error::{Error, Result};
use crate::loss::{PoseGradient, PosePrediction};
#[cfg(test)]
use crate::pose::Category;
use crate::pose::{Pose, Scale, Symmetry, Vec3, NUM_CATEGORIES};
use crate::recovery::{orthogonalize_axes, AxisPrediction};
use crate::rng::rng_from_seed;

pub const INPUT_WIDTH: usize = GLOBAL_WIDTH + NUM_CATEGORIES;
pub const OUTPUT_WIDTH: usize = 14;
pub const PARAM_COUNT: usize = OUTPUT_WIDTH * INPUT_WIDTH + OUTPUT_WIDTH;

const AX: std::ops::Range<usize> = 3..6;
const CX: usize = 6;
const AZ: std::ops::Range<usize> = 7..10;
const CZ: usize = 10;

/// Raw axis outputs shorter than this fall back to the canonical axis.
const MIN_AXIS_NORM: f64 = 1e-12;
/// Smallest box extent a decoded scale is clamped to, meters.
pub const MIN_EXTENT: f64 = 1e-3;

/// Decoder input for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderInput {
    /// `[global, one-hot]`, unstandardized.
    pub features: Vec<f64>,
    pub translation_prior: Vec3,
    pub scale_prior: Vec3,
}

impl DecoderInput {
    pub fn new(emb: &Embedding, translation_prior: Vec3, scale_prior: Vec3) -> Self {
        let mut features = emb.global.to_vec();
        features.extend_from_slice(&emb.category.one_hot());
        DecoderInput {
            features,
            translation_prior,
            scale_prior,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearDecoder {
    /// Row-major `OUTPUT_WIDTH x INPUT_WIDTH`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Decoded heads of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    pub translation_residual: Vec3,
    pub axes: AxisPrediction,
    pub scale_residual: Vec3,
    /// Absolute prediction (priors added) fed to the pose loss.
    pub prediction: PosePrediction,
    raw: [f64; OUTPUT_WIDTH],
    input: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn unit_or(v: Vec3, fallback: Vec3) -> Vec3 {
    let n = v.norm();
    if n < MIN_AXIS_NORM {
        fallback
    } else {
        v / n
    }
}

/// `d(v / |v|)^T g`, zero where the fallback axis was used.
fn unit_backward(v: &Vec3, g: &Vec3) -> Vec3 {
    let n = v.norm();
    if n < MIN_AXIS_NORM {
        return Vec3::zeros();
    }
    let u = v / n;
    (g - u * u.dot(g)) / n
}

impl Default for LinearDecoder {
    /// Zero weights, identity standardization and the canonical axis biases.
    fn default() -> Self {
        let mut bias = vec![0.0; OUTPUT_WIDTH];
        bias[AX.start] = 1.0;
        bias[AZ.end - 1] = 1.0;
        LinearDecoder {
            weights: vec![0.0; OUTPUT_WIDTH * INPUT_WIDTH],
            bias,
            shift: vec![0.0; INPUT_WIDTH],
            scale: vec![1.0; INPUT_WIDTH],
        }
    }
}

impl LinearDecoder {
    /// All-zero weights and biases.
    pub fn zeros() -> Self {
        LinearDecoder {
            bias: vec![0.0; OUTPUT_WIDTH],
            ..Self::default()
        }
    }

    /// Default decoder standardized to the column statistics of `inputs`.
    /// Columns with spread below `1e-9` keep scale 1.
    pub fn standardized_for(inputs: &[&DecoderInput]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::Invalid("no inputs to standardize against".into()));
        }
        let mut d = Self::default();
        let n = inputs.len() as f64;
        for c in 0..INPUT_WIDTH {
            let mean = inputs.iter().map(|x| x.features[c]).sum::<f64>() / n;
            let var = inputs.iter().map(|x| (x.features[c] - mean).powi(2)).sum::<f64>() / n;
            d.shift[c] = mean;
            d.scale[c] = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
        }
        Ok(d)
    }

    /// Adds `N(0, std)` noise to every weight, drawn from `seed`.
    pub fn perturbed(mut self, std: f64, seed: u64) -> Result<Self> {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, std).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut rng = rng_from_seed(seed);
        for w in &mut self.weights {
            *w += normal.sample(&mut rng);
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = [
            (self.weights.len(), OUTPUT_WIDTH * INPUT_WIDTH),
            (self.bias.len(), OUTPUT_WIDTH),
            (self.shift.len(), INPUT_WIDTH),
            (self.scale.len(), INPUT_WIDTH),
        ];
        for (got, expected) in shapes {
            if got != expected {
                return Err(Error::WidthMismatch { expected, got });
            }
        }
        if self.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Invalid("standardization scale must be positive".into()));
        }
        Ok(())
    }

    /// Trainable parameters: weights then biases.
    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != PARAM_COUNT {
            return Err(Error::WidthMismatch {
                expected: PARAM_COUNT,
                got: params.len(),
            });
        }
        let (w, b) = params.split_at(OUTPUT_WIDTH * INPUT_WIDTH);
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
        Ok(())
    }

    pub fn decode(&self, input: &DecoderInput) -> Result<DecoderOutput> {
        let out = self.forward(input)?;
        if out.raw.iter().any(|r| !r.is_finite()) {
            return Err(Error::Invalid("decoder produced a non-finite output".into()));
        }
        Ok(out)
    }

    /// [`decode`](Self::decode) without the finiteness check.
    /// Column `c` of an input after the stored shift and scale.
    pub fn standardize(&self, c: usize, value: f64) -> f64 {
        (value - self.shift[c]) / self.scale[c]
    }

    pub(crate) fn forward(&self, input: &DecoderInput) -> Result<DecoderOutput> {
        if input.features.len() != INPUT_WIDTH {
            return Err(Error::WidthMismatch {
                expected: INPUT_WIDTH,
                got: input.features.len(),
            });
        }
        let x: Vec<f64> = input
            .features
            .iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let mut raw = [0.0; OUTPUT_WIDTH];
        for (o, r) in raw.iter_mut().enumerate() {
            let row = &self.weights[o * INPUT_WIDTH..(o + 1) * INPUT_WIDTH];
            *r = self.bias[o] + row.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>();
        }
        let v3 = |r: std::ops::Range<usize>| Vec3::from_column_slice(&raw[r]);
        let axes = AxisPrediction {
            a_x: unit_or(v3(AX), Vec3::x()),
            c_x: softplus(raw[CX]),
            a_z: unit_or(v3(AZ), Vec3::z()),
            c_z: softplus(raw[CZ]),
        };
        let translation_residual = v3(0..3);
        let scale_residual = v3(11..14);
        let prediction = PosePrediction {
            translation: input.translation_prior + translation_residual,
            a_x: axes.a_x,
            c_x: axes.c_x,
            a_z: axes.a_z,
            c_z: axes.c_z,
            scale: input.scale_prior + scale_residual,
        };
        Ok(DecoderOutput {
            translation_residual,
            axes,
            scale_residual,
            prediction,
            raw,
            input: x,
        })
    }

    /// Accumulates `d loss / d params` into `out` given the loss gradient
    /// with respect to `output.prediction`.
    pub fn backward(&self, output: &DecoderOutput, grad: &PoseGradient, out: &mut [f64]) {
        let raw = &output.raw;
        let v3 = |r: std::ops::Range<usize>| Vec3::from_column_slice(&raw[r]);
        let mut g_raw = [0.0; OUTPUT_WIDTH];
        g_raw[0..3].copy_from_slice(grad.translation.as_slice());
        g_raw[AX].copy_from_slice(unit_backward(&v3(AX), &grad.a_x).as_slice());
        g_raw[CX] = grad.c_x * sigmoid(raw[CX]);
        g_raw[AZ].copy_from_slice(unit_backward(&v3(AZ), &grad.a_z).as_slice());
        g_raw[CZ] = grad.c_z * sigmoid(raw[CZ]);
        g_raw[11..14].copy_from_slice(grad.scale.as_slice());
        let (w, b) = out.split_at_mut(OUTPUT_WIDTH * INPUT_WIDTH);
        for (o, g) in g_raw.iter().enumerate() {
            if *g == 0.0 {
                continue;
            }
            for (dst, x) in w[o * INPUT_WIDTH..(o + 1) * INPUT_WIDTH].iter_mut().zip(&output.input) {
                *dst += g * x;
            }
            b[o] += g;
        }
    }
}

impl DecoderOutput {
    /// Orthogonalized pose and the scale, each extent clamped to at least
    /// [`MIN_EXTENT`].
    ///
    /// For axial symmetry the predicted x-axis carries no information (its
    /// loss is dropped), so the z-axis is kept fixed and only the x-axis
    /// moves. Exactly (anti)parallel axes keep `a_z` and pair it with a fixed
    /// perpendicular x-axis.
    pub fn recover(&self, symmetry: &Symmetry) -> Result<(Pose, Scale)> {
        let mut axes = self.axes;
        if matches!(symmetry, Symmetry::Axial) {
            axes.c_x = 0.0;
            axes.c_z = 1.0;
        }
        let rotation = match orthogonalize_axes(&axes) {
            Ok(o) => o.rotation()?,
            Err(Error::DegenerateAxes) => {
                let z = self.axes.a_z;
                let helper = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
                let x = (helper - z * z.dot(&helper)).normalize();
                crate::pose::rotation_from_axes(&x, &z)?
            }
            Err(e) => return Err(e),
        };
        let pose = Pose::new(rotation, self.prediction.translation)?;
        let scale = Scale::new(self.prediction.scale.map(|s| s.max(MIN_EXTENT)))?;
        Ok((pose, scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_gradient, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(rng: &mut ChaCha8Rng) -> DecoderInput {
        let mut features: Vec<f64> = (0..GLOBAL_WIDTH).map(|_| rng.random_range(-1.0..1.0)).collect();
        features.extend_from_slice(&Category::Container.one_hot());
        DecoderInput {
            features,
            translation_prior: Vec3::new(0.1, -0.05, 0.8),
            scale_prior: Vec3::new(0.1, 0.1, 0.2),
        }
    }

    #[test]
    fn zero_model_decodes_to_priors_and_canonical_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = input(&mut rng);
        let out = LinearDecoder::zeros().decode(&x).unwrap();
        assert_eq!(out.translation_residual, Vec3::zeros());
        assert_eq!(out.scale_residual, Vec3::zeros());
        assert_eq!(out.axes.a_x, Vec3::x());
        assert_eq!(out.axes.a_z, Vec3::z());
        assert_eq!(out.axes.c_x, std::f64::consts::LN_2);
        assert_eq!(out.axes.c_z, std::f64::consts::LN_2);
        assert_eq!(LinearDecoder::default().decode(&x).unwrap().axes, out.axes);
        assert_eq!(LinearDecoder::default().params().len(), 644);
    }

    #[test]
    fn width_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = input(&mut rng);
        x.features.pop();
        assert!(matches!(
            LinearDecoder::default().decode(&x),
            Err(Error::WidthMismatch { expected: 45, got: 44 })
        ));
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(1.0) - (1.0f64.exp().ln_1p())).abs() < 1e-15);
    }

    #[test]
    fn output_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = input(&mut rng);
            let model = LinearDecoder::default().perturbed(0.3, rng.random()).unwrap();
            let probe: [f64; 14] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let f = |p: &[f64]| {
                let mut m = model.clone();
                m.set_params(p).unwrap();
                let a = m.decode(&x).unwrap().prediction.to_array();
                a.iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>()
            };
            let numeric = central_gradient(&f, &model.params(), 1e-6);
            let out = model.decode(&x).unwrap();
            let mut analytic = vec![0.0; PARAM_COUNT];
            model.backward(&out, &PosePrediction::from_array(&probe), &mut analytic);
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-5, "{err}");
        }
    }
}
