//! Analytic primitives and ray intersection in the object frame.
//!
//! Every primitive is centered on its bounding box with the symmetry axis
//! along object z, so its extents are exactly the annotated [`Scale`].

use serde::{Deserialize, Serialize};

use crate::pose::{Scale, Symmetry, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Primitive {
    /// Closed cylinder.
    Cylinder,
    /// Zero-thickness spherical cap opening up, at most a hemisphere deep.
    Bowl,
    Box,
    /// Cylindrical cup on a thin stem and a base disk.
    Stemmed,
}

impl Primitive {
    pub fn symmetry(self) -> Symmetry {
        match self {
            Primitive::Box => Symmetry::half_turn(),
            _ => Symmetry::Axial,
        }
    }

    /// Whether x and y extents must match.
    pub fn is_round(self) -> bool {
        self != Primitive::Box
    }
}

// Stemmed proportions, as fractions of total height and of the cup radius.
const CUP_HEIGHT: f64 = 0.5;
const BASE_HEIGHT: f64 = 0.05;
const STEM_RADIUS: f64 = 0.12;
const BASE_RADIUS: f64 = 0.85;

/// One surface piece.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Part {
    Cylinder {
        radius: f64,
        z0: f64,
        z1: f64,
    },
    /// Sphere of `radius` about `(0, 0, center_z)`, only below `rim_z`.
    SphereCap {
        radius: f64,
        center_z: f64,
        rim_z: f64,
    },
    Box {
        half: Vec3,
    },
}

/// A primitive sized to concrete extents.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    parts: Vec<Part>,
    bounding_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    /// Outward unit normal in the object frame.
    pub normal: Vec3,
}

const T_MIN: f64 = 1e-9;

impl Shape {
    pub fn new(primitive: Primitive, scale: &Scale) -> Self {
        let e = scale.extents();
        let r = e.x.min(e.y) / 2.0;
        let (h, half) = (e.z, e.z / 2.0);
        let parts = match primitive {
            Primitive::Cylinder => vec![Part::Cylinder {
                radius: r,
                z0: -half,
                z1: half,
            }],
            Primitive::Bowl => {
                // Cap of depth h with rim radius r: R = (r^2 + h^2) / 2h.
                let radius = (r * r + h * h) / (2.0 * h);
                vec![Part::SphereCap {
                    radius,
                    center_z: -half + radius,
                    rim_z: half,
                }]
            }
            Primitive::Box => vec![Part::Box { half: e / 2.0 }],
            Primitive::Stemmed => {
                let base_top = -half + BASE_HEIGHT * h;
                let cup_bottom = half - CUP_HEIGHT * h;
                vec![
                    Part::Cylinder {
                        radius: r,
                        z0: cup_bottom,
                        z1: half,
                    },
                    Part::Cylinder {
                        radius: STEM_RADIUS * r,
                        z0: base_top,
                        z1: cup_bottom,
                    },
                    Part::Cylinder {
                        radius: BASE_RADIUS * r,
                        z0: -half,
                        z1: base_top,
                    },
                ]
            }
        };
        Shape {
            parts,
            bounding_radius: (e / 2.0).norm(),
        }
    }

    /// Nearest intersection with `t > 0` of the ray `o + t d`.
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<Hit> {
        // Bounding sphere rejection.
        let b = o.dot(d);
        let a = d.norm_squared();
        let c = o.norm_squared() - self.bounding_radius * self.bounding_radius * (1.0 + 1e-9);
        if b * b - a * c < 0.0 {
            return None;
        }
        self.parts
            .iter()
            .filter_map(|p| p.intersect(o, d))
            .min_by(|x, y| x.t.total_cmp(&y.t))
    }
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    // a t^2 + 2 b t + c = 0
    if a <= 0.0 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // Numerically stable pair.
    let q = if b > 0.0 { -(b + s) } else { -b + s };
    if q == 0.0 {
        return Some((0.0, 0.0));
    }
    let (t1, t2) = (q / a, c / q);
    Some((t1.min(t2), t1.max(t2)))
}

impl Part {
    fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<Hit> {
        match *self {
            Part::Cylinder { radius, z0, z1 } => {
                let mut best: Option<Hit> = None;
                let mut keep = |h: Hit| {
                    if h.t > T_MIN && best.is_none_or(|b| h.t < b.t) {
                        best = Some(h);
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                let b = o.x * d.x + o.y * d.y;
                let c = o.x * o.x + o.y * o.y - radius * radius;
                if let Some((t1, t2)) = quadratic_roots(a, b, c) {
                    for t in [t1, t2] {
                        let p = o + d * t;
                        if p.z >= z0 && p.z <= z1 {
                            keep(Hit {
                                t,
                                normal: Vec3::new(p.x, p.y, 0.0) / radius,
                            });
                        }
                    }
                }
                if d.z != 0.0 {
                    for (zc, nz) in [(z0, -1.0), (z1, 1.0)] {
                        let t = (zc - o.z) / d.z;
                        let p = o + d * t;
                        if p.x * p.x + p.y * p.y <= radius * radius {
                            keep(Hit {
                                t,
                                normal: Vec3::new(0.0, 0.0, nz),
                            });
                        }
                    }
                }
                best
            }
            Part::SphereCap {
                radius,
                center_z,
                rim_z,
            } => {
                let c = Vec3::new(0.0, 0.0, center_z);
                let oc = o - c;
                let (t1, t2) = quadratic_roots(d.norm_squared(), oc.dot(d), oc.norm_squared() - radius * radius)?;
                [t1, t2].into_iter().find_map(|t| {
                    let p = oc + d * t;
                    (t > T_MIN && p.z + center_z <= rim_z).then(|| Hit { t, normal: p / radius })
                })
            }
            Part::Box { half } => {
                let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut axis = 0;
                for i in 0..3 {
                    if d[i] == 0.0 {
                        if o[i].abs() > half[i] {
                            return None;
                        }
                        continue;
                    }
                    let (mut a, mut b) = ((-half[i] - o[i]) / d[i], (half[i] - o[i]) / d[i]);
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                    }
                    if a > t_near {
                        t_near = a;
                        axis = i;
                    }
                    t_far = t_far.min(b);
                }
                if t_near > t_far || t_near <= T_MIN {
                    return None;
                }
                let mut normal = Vec3::zeros();
                normal[axis] = -d[axis].signum();
                Some(Hit { t: t_near, normal })
            }
        }
    }
}
