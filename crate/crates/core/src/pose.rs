//! Rigid poses, box scales, object categories, symmetry classes and
//! oriented boxes.
//!
//! Conventions used throughout the crate:
//!
//! * The object axes are the **columns** of the rotation matrix: column 0 is
//!   the object x-axis, column 2 the object z-axis (the symmetry axis of
//!   axially symmetric objects).
//! * [`Scale`] holds **full** box extents in meters along the object axes.
//! * Poses map object coordinates into the camera frame:
//!   `p_cam = R p_obj + t`.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Tolerance on orthonormality and determinant of a [`Rotation`].
pub const ROTATION_TOLERANCE: f64 = 1e-9;
const AXIS_TOLERANCE: f64 = 1e-6;

/// An element of SO(3), stored as a 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Mat3);

impl Rotation {
    /// Validates `m` as a proper rotation within [`ROTATION_TOLERANCE`].
    pub fn from_matrix(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("rotation has non-finite entries".into()));
        }
        let gram_err = (m.transpose() * m - Mat3::identity()).abs().max();
        if gram_err > ROTATION_TOLERANCE {
            return Err(Error::Invalid(format!(
                "rotation columns not orthonormal (max |R^T R - I| = {gram_err:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::Invalid(format!("rotation determinant {det} != +1")));
        }
        Ok(Rotation(m))
    }

    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Right-handed rotation by `angle` radians about `axis` (need not be unit).
    pub fn about_axis(axis: &Vec3, angle: f64) -> Self {
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Rotation(r.into_inner())
    }

    pub fn about_x(angle: f64) -> Self {
        Self::about_axis(&Vec3::x(), angle)
    }

    pub fn about_y(angle: f64) -> Self {
        Self::about_axis(&Vec3::y(), angle)
    }

    pub fn about_z(angle: f64) -> Self {
        Self::about_axis(&Vec3::z(), angle)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn x_axis(&self) -> Vec3 {
        self.0.column(0).into_owned()
    }

    pub fn y_axis(&self) -> Vec3 {
        self.0.column(1).into_owned()
    }

    pub fn z_axis(&self) -> Vec3 {
        self.0.column(2).into_owned()
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Geodesic angle to `other` in radians, in `[0, pi]`.
    ///
    /// Uses `atan2(|sin|, cos)` of the relative rotation, which stays
    /// accurate near zero where `acos((tr - 1) / 2)` loses half the digits.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        let rel = self.0 * other.0.transpose();
        let cos = (rel.trace() - 1.0) / 2.0;
        let skew = Vec3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        );
        let sin = skew.norm() / 2.0;
        sin.atan2(cos)
    }
}

/// Builds a rotation whose x column is `a_x` and z column is `a_z`.
///
/// Both inputs must be unit length and mutually orthogonal within `1e-6`.
/// Inside that tolerance the result is re-orthonormalized (Gram-Schmidt,
/// keeping `a_x` fixed), so the returned matrix is orthonormal to machine
/// precision. Column 1 is `a_z x a_x`.
pub fn rotation_from_axes(a_x: &Vec3, a_z: &Vec3) -> Result<Rotation> {
    for a in [a_x, a_z] {
        let norm = a.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > AXIS_TOLERANCE {
            return Err(Error::NonUnitAxis { norm });
        }
    }
    let dot = a_x.dot(a_z);
    if dot.abs() > AXIS_TOLERANCE {
        return Err(Error::NonOrthogonalAxes { dot });
    }
    let x = a_x.normalize();
    let z = (a_z - x * x.dot(a_z)).normalize();
    let y = z.cross(&x);
    Ok(Rotation(Mat3::from_columns(&[x, y, z])))
}

/// Rotation plus translation (meters) in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 4]", into = "[[f64; 4]; 4]")]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Result<Self> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Invalid("translation is not finite".into()));
        }
        Ok(Pose { rotation, translation })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation: t,
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            translation: -rt.apply(&self.translation),
            rotation: rt,
        }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    /// 4x4 row-major homogeneous matrix.
    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let r = self.rotation.matrix();
        let t = &self.translation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)], t[0]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)], t[1]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)], t[2]],
            [0.0, 0.0, 0.0, 1.0],
        ]
    }

    pub fn from_homogeneous(m: &[[f64; 4]; 4]) -> Result<Self> {
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::Invalid("homogeneous pose has bad last row".into()));
        }
        let r = Mat3::from_fn(|i, j| m[i][j]);
        let t = Vec3::new(m[0][3], m[1][3], m[2][3]);
        Pose::new(Rotation::from_matrix(r)?, t)
    }
}

impl TryFrom<[[f64; 4]; 4]> for Pose {
    type Error = Error;
    fn try_from(m: [[f64; 4]; 4]) -> Result<Self> {
        Pose::from_homogeneous(&m)
    }
}

impl From<Pose> for [[f64; 4]; 4] {
    fn from(p: Pose) -> Self {
        p.to_homogeneous()
    }
}

/// Full box extents along the object x/y/z axes, meters, all positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Scale(Vec3);

impl Scale {
    pub fn new(extents: Vec3) -> Result<Self> {
        for (index, &value) in extents.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveScale { index, value });
            }
        }
        Ok(Scale(extents))
    }

    pub fn extents(&self) -> &Vec3 {
        &self.0
    }

    pub fn volume(&self) -> f64 {
        self.0.x * self.0.y * self.0.z
    }
}

impl TryFrom<[f64; 3]> for Scale {
    type Error = Error;
    fn try_from(v: [f64; 3]) -> Result<Self> {
        Scale::new(Vec3::from(v))
    }
}

impl From<Scale> for [f64; 3] {
    fn from(s: Scale) -> Self {
        [s.0.x, s.0.y, s.0.z]
    }
}

/// The six object categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Category {
    Bottle,
    Bowl,
    Container,
    Tableware,
    WaterCup,
    WineCup,
}

pub const NUM_CATEGORIES: usize = 6;

impl Category {
    pub const ALL: [Category; NUM_CATEGORIES] = [
        Category::Bottle,
        Category::Bowl,
        Category::Container,
        Category::Tableware,
        Category::WaterCup,
        Category::WineCup,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Self::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("category id {id} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Bottle => "bottle",
            Category::Bowl => "bowl",
            Category::Container => "container",
            Category::Tableware => "tableware",
            Category::WaterCup => "water cup",
            Category::WineCup => "wine cup",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::Invalid(format!("unknown category {name:?}")))
    }

    pub fn one_hot(self) -> [f64; NUM_CATEGORIES] {
        let mut h = [0.0; NUM_CATEGORIES];
        h[self.id()] = 1.0;
        h
    }

    /// Default symmetry: round objects are axial, containers and tableware
    /// are planar with a half-turn.
    pub fn default_symmetry(self) -> Symmetry {
        match self {
            Category::Bottle | Category::Bowl | Category::WaterCup | Category::WineCup => Symmetry::Axial,
            Category::Container | Category::Tableware => Symmetry::half_turn(),
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<String> for Category {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        Category::from_name(&s)
    }
}

impl From<Category> for String {
    fn from(c: Category) -> Self {
        c.name().to_string()
    }
}

/// How the ground-truth x-axis of an object is constrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SymmetryRepr", into = "SymmetryRepr")]
pub enum Symmetry {
    /// Unique x-axis.
    None,
    /// Any rotation about the object z-axis is equivalent; x is unconstrained.
    Axial,
    /// Finitely many equivalent x-axes, given as rotations about the object
    /// z-axis in radians. Always non-empty and contains `0`.
    Planar(Vec<f64>),
}

impl Symmetry {
    pub fn planar(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() || !angles.contains(&0.0) {
            return Err(Error::Invalid(
                "planar symmetry needs a non-empty angle list containing 0".into(),
            ));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::Invalid("planar symmetry angle not finite".into()));
        }
        Ok(Symmetry::Planar(angles))
    }

    /// `Planar([0, pi])`.
    pub fn half_turn() -> Self {
        Symmetry::Planar(vec![0.0, std::f64::consts::PI])
    }

    /// `Planar` with `k` equally spaced angles.
    pub fn cyclic(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("cyclic symmetry order must be >= 1".into()));
        }
        let step = std::f64::consts::TAU / k as f64;
        Symmetry::planar((0..k).map(|i| i as f64 * step).collect())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SymmetryRepr {
    None,
    Axial,
    Planar(Vec<f64>),
}

impl TryFrom<SymmetryRepr> for Symmetry {
    type Error = Error;
    fn try_from(r: SymmetryRepr) -> Result<Self> {
        match r {
            SymmetryRepr::None => Ok(Symmetry::None),
            SymmetryRepr::Axial => Ok(Symmetry::Axial),
            SymmetryRepr::Planar(a) => Symmetry::planar(a),
        }
    }
}

impl From<Symmetry> for SymmetryRepr {
    fn from(s: Symmetry) -> Self {
        match s {
            Symmetry::None => SymmetryRepr::None,
            Symmetry::Axial => SymmetryRepr::Axial,
            Symmetry::Planar(a) => SymmetryRepr::Planar(a),
        }
    }
}

/// Poses equivalent to a given pose under a [`Symmetry`].
#[derive(Debug, Clone, PartialEq)]
pub enum SymmetryCandidates {
    /// Every listed pose is equivalent; the first one is the input pose
    /// itself for `Symmetry::None`.
    Discrete(Vec<Pose>),
    /// Sentinel for axial symmetry: the z-axis of the carried pose is
    /// meaningful, its x-axis is not.
    AnyAboutZ(Pose),
}

/// Enumerates the equivalent poses of `pose` under `symmetry`.
///
/// Planar candidates rotate the object frame about its own z-axis, so every
/// candidate keeps the input z-axis and translation.
pub fn symmetry_candidates(symmetry: &Symmetry, pose: &Pose) -> SymmetryCandidates {
    match symmetry {
        Symmetry::None => SymmetryCandidates::Discrete(vec![*pose]),
        Symmetry::Axial => SymmetryCandidates::AnyAboutZ(*pose),
        Symmetry::Planar(angles) => SymmetryCandidates::Discrete(
            angles
                .iter()
                .map(|&a| Pose {
                    rotation: pose.rotation.compose(&Rotation::about_z(a)),
                    translation: pose.translation,
                })
                .collect(),
        ),
    }
}

/// Candidate ground-truth x-axes for the given rotation. Empty for axial.
pub(crate) fn candidate_x_axes(symmetry: &Symmetry, rotation: &Rotation) -> Vec<Vec3> {
    match symmetry {
        Symmetry::None => vec![rotation.x_axis()],
        Symmetry::Axial => Vec::new(),
        Symmetry::Planar(angles) => angles
            .iter()
            .map(|&a| rotation.compose(&Rotation::about_z(a)).x_axis())
            .collect(),
    }
}

/// A box of extents `scale` placed by `pose`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub pose: Pose,
    pub scale: Scale,
}

impl OrientedBox {
    pub fn new(pose: Pose, scale: Scale) -> Self {
        OrientedBox { pose, scale }
    }

    /// The eight corners `R diag(s/2) (sx, sy, sz) + t`.
    ///
    /// Corner `k` takes sign `+` on axis `i` when bit `i` of `k` is set and
    /// `-` otherwise, so corner 0 is `(-,-,-)` and corner 7 is `(+,+,+)`.
    pub fn corners(&self) -> [Vec3; 8] {
        let half = self.scale.extents() / 2.0;
        std::array::from_fn(|k| {
            let sign = |bit: usize| if k & (1 << bit) != 0 { 1.0 } else { -1.0 };
            let local = Vec3::new(sign(0) * half.x, sign(1) * half.y, sign(2) * half.z);
            self.pose.transform_point(&local)
        })
    }

    pub fn volume(&self) -> f64 {
        self.scale.volume()
    }
}

/// Free function form of [`OrientedBox::corners`].
pub fn box_corners(b: &OrientedBox) -> [Vec3; 8] {
    b.corners()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_mat_close(a: &Mat3, b: &Mat3, tol: f64) {
        assert!((a - b).abs().max() < tol, "{a} vs {b}");
    }

    #[test]
    fn canonical_axes_give_identity() {
        let r = rotation_from_axes(&Vec3::x(), &Vec3::z()).unwrap();
        assert_mat_close(r.matrix(), &Mat3::identity(), 1e-15);
    }

    #[test]
    fn axes_x_to_y_builds_quarter_turn() {
        // z x x = (0,0,1) x (0,1,0) = (-1,0,0)
        let ax = Vec3::y();
        let az = Vec3::z();
        let expected_y = az.cross(&ax);
        assert_eq!(expected_y, Vec3::new(-1.0, 0.0, 0.0));
        let r = rotation_from_axes(&ax, &az).unwrap();
        let expected = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_mat_close(r.matrix(), &expected, 1e-15);
    }

    #[test]
    fn non_orthogonal_axes_rejected() {
        let err = rotation_from_axes(&Vec3::x(), &Vec3::new(0.1, 0.0, 0.995).normalize()).unwrap_err();
        assert!(matches!(err, Error::NonOrthogonalAxes { .. }));
        let err = rotation_from_axes(&(Vec3::x() * 1.01), &Vec3::z()).unwrap_err();
        assert!(matches!(err, Error::NonUnitAxis { .. }));
    }

    #[test]
    fn unit_cube_corners() {
        let b = OrientedBox::new(Pose::identity(), Scale::new(Vec3::new(2.0, 2.0, 2.0)).unwrap());
        let c = b.corners();
        assert_eq!(c[0], Vec3::new(-1.0, -1.0, -1.0));
        assert_eq!(c[7], Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(c[1], Vec3::new(1.0, -1.0, -1.0));
        for p in &c {
            assert!(p.iter().all(|v| v.abs() == 1.0));
        }

        let shifted = OrientedBox::new(
            Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
            Scale::new(Vec3::new(2.0, 2.0, 2.0)).unwrap(),
        );
        for (p, q) in shifted.corners().iter().zip(c.iter()) {
            assert_eq!(*p, q + Vec3::new(1.0, 0.0, 0.0));
        }
    }

    #[test]
    fn rotated_box_corners_match_matrix_vector_products() {
        let rz = Rotation::about_z(FRAC_PI_2);
        let b = OrientedBox::new(
            Pose::new(rz, Vec3::zeros()).unwrap(),
            Scale::new(Vec3::new(2.0, 4.0, 6.0)).unwrap(),
        );
        // Independent: Rz(90) maps (x, y, z) -> (-y, x, z).
        for (k, c) in b.corners().iter().enumerate() {
            let s = |bit: usize| if k & (1 << bit) != 0 { 1.0 } else { -1.0 };
            let local = (s(0) * 1.0, s(1) * 2.0, s(2) * 3.0);
            let expected = Vec3::new(-local.1, local.0, local.2);
            assert!((c - expected).norm() < 1e-12, "corner {k}: {c} vs {expected}");
        }
    }

    #[test]
    fn candidates_none_and_half_turn() {
        let pose = Pose::identity();
        assert_eq!(
            symmetry_candidates(&Symmetry::None, &pose),
            SymmetryCandidates::Discrete(vec![pose])
        );
        let SymmetryCandidates::Discrete(c) = symmetry_candidates(&Symmetry::half_turn(), &pose) else {
            panic!("expected discrete candidates")
        };
        assert_eq!(c.len(), 2);
        assert_mat_close(c[0].rotation.matrix(), &Mat3::identity(), 1e-15);
        let rz_pi = Mat3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        assert_mat_close(c[1].rotation.matrix(), &rz_pi, 1e-15);
    }

    #[test]
    fn four_fold_candidates_cover_axis_directions() {
        let sym = Symmetry::planar(vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]).unwrap();
        let SymmetryCandidates::Discrete(c) = symmetry_candidates(&sym, &Pose::identity()) else {
            panic!()
        };
        let expected = [Vec3::x(), Vec3::y(), -Vec3::x(), -Vec3::y()];
        for (pose, e) in c.iter().zip(expected.iter()) {
            assert!((pose.rotation.x_axis() - e).norm() < 1e-15);
        }
    }

    #[test]
    fn axial_candidates_are_a_sentinel() {
        let p = Pose::from_translation(Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(
            symmetry_candidates(&Symmetry::Axial, &p),
            SymmetryCandidates::AnyAboutZ(p)
        );
    }

    #[test]
    fn planar_requires_zero() {
        assert!(Symmetry::planar(vec![PI]).is_err());
        assert!(Symmetry::planar(vec![]).is_err());
        assert!(serde_json::from_str::<Symmetry>(r#"{"planar":[1.0]}"#).is_err());
    }

    #[test]
    fn category_one_hot_and_names() {
        for c in Category::ALL {
            let h = c.one_hot();
            assert_eq!(h.iter().sum::<f64>(), 1.0);
            assert_eq!(h[c.id()], 1.0);
            assert_eq!(Category::from_name(c.name()).unwrap(), c);
        }
        assert!(Category::from_name("mug").is_err());
    }

    #[test]
    fn pose_json_is_row_major_homogeneous() {
        let p = Pose::new(Rotation::about_z(FRAC_PI_2), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let m: [[f64; 4]; 4] = serde_json::from_str(&json).unwrap();
        assert_eq!(m[0][3], 1.0);
        assert_eq!(m[3], [0.0, 0.0, 0.0, 1.0]);
        assert!((m[1][0] - 1.0).abs() < 1e-15);
        let back: Pose = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn angle_to_is_accurate_near_zero() {
        let a = Rotation::about_axis(&Vec3::new(1.0, 2.0, 3.0), 0.7);
        let b = a.compose(&Rotation::about_x(1e-7));
        assert!((a.angle_to(&b) - 1e-7).abs() < 1e-15);
        assert_eq!(a.angle_to(&a), 0.0);
    }

    fn unit_vec() -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-3)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z).normalize())
    }

    proptest! {
        #[test]
        fn rotation_from_axes_is_orthonormal(a in unit_vec(), b in unit_vec()) {
            prop_assume!(a.cross(&b).norm() > 1e-3);
            let z = a.cross(&b).normalize();
            let x = a;
            let r = rotation_from_axes(&x, &z).unwrap();
            let m = r.matrix();
            prop_assert!((m.transpose() * m - Mat3::identity()).abs().max() < 1e-9);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-9);
            prop_assert!((r.x_axis() - x).norm() < 1e-12);
            prop_assert!((r.z_axis() - z).norm() < 1e-12);
        }

        #[test]
        fn corner_centroid_is_translation(
            axis in unit_vec(), angle in -PI..PI,
            t in (-5.0..5.0f64, -5.0..5.0f64, 0.1..5.0f64),
            s in (0.01..2.0f64, 0.01..2.0f64, 0.01..2.0f64),
        ) {
            let pose = Pose::new(Rotation::about_axis(&axis, angle), Vec3::new(t.0, t.1, t.2)).unwrap();
            let b = OrientedBox::new(pose, Scale::new(Vec3::new(s.0, s.1, s.2)).unwrap());
            let centroid = b.corners().iter().sum::<Vec3>() / 8.0;
            prop_assert!((centroid - pose.translation).norm() < 1e-12);
        }

        #[test]
        fn candidates_keep_z_axis(axis in unit_vec(), angle in -PI..PI, k in 1usize..7) {
            let pose = Pose::new(Rotation::about_axis(&axis, angle), Vec3::zeros()).unwrap();
            let SymmetryCandidates::Discrete(c) = symmetry_candidates(&Symmetry::cyclic(k).unwrap(), &pose) else {
                panic!()
            };
            for cand in c {
                prop_assert!((cand.rotation.z_axis() - pose.rotation.z_axis()).norm() < 1e-12);
            }
        }
    }
}
