//! Per-category object templates.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::shapes::Primitive;
use crate::error::{Error, Result};
use crate::pose::{Category, Scale, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectTemplate {
    pub primitive: Primitive,
    /// Nominal full extents in meters.
    pub extents: [f64; 3],
    /// Relative jitter: each extent is scaled by a factor in
    /// `[1 - jitter, 1 + jitter]`. Round primitives share the x/y factor.
    pub jitter: f64,
}

impl ObjectTemplate {
    pub fn nominal(&self) -> Result<Scale> {
        Scale::new(Vec3::from(self.extents))
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.nominal()?;
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Invalid(format!(
                "template jitter {} outside [0, 1)",
                self.jitter
            )));
        }
        let e = s.extents();
        if self.primitive.is_round() && e.x != e.y {
            return Err(Error::Invalid("round primitives need equal x and y extents".into()));
        }
        if self.primitive == Primitive::Bowl && e.z * (1.0 + self.jitter) > e.x / 2.0 * (1.0 - self.jitter) {
            return Err(Error::Invalid("bowl depth may exceed its rim radius".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<Scale> {
        let j = self.jitter;
        let mut f = || {
            if j > 0.0 {
                rng.random_range(1.0 - j..=1.0 + j)
            } else {
                1.0
            }
        };
        let fx = f();
        let fy = if self.primitive.is_round() { fx } else { f() };
        let fz = f();
        let [x, y, z] = self.extents;
        Scale::new(Vec3::new(x * fx, y * fy, z * fz))
    }
}

/// Template per category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateLibrary(pub BTreeMap<Category, ObjectTemplate>);

impl Default for TemplateLibrary {
    fn default() -> Self {
        let t = |primitive, extents, jitter| ObjectTemplate {
            primitive,
            extents,
            jitter,
        };
        TemplateLibrary(BTreeMap::from([
            (Category::Bottle, t(Primitive::Cylinder, [0.07, 0.07, 0.22], 0.15)),
            (Category::Bowl, t(Primitive::Bowl, [0.16, 0.16, 0.06], 0.12)),
            (Category::Container, t(Primitive::Box, [0.16, 0.11, 0.09], 0.15)),
            (Category::Tableware, t(Primitive::Box, [0.20, 0.07, 0.04], 0.15)),
            (Category::WaterCup, t(Primitive::Cylinder, [0.08, 0.08, 0.11], 0.15)),
            (Category::WineCup, t(Primitive::Stemmed, [0.08, 0.08, 0.19], 0.12)),
        ]))
    }
}

impl TemplateLibrary {
    pub fn get(&self, c: Category) -> Result<&ObjectTemplate> {
        self.0
            .get(&c)
            .ok_or_else(|| Error::Invalid(format!("no template for category {c}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Invalid("template library is empty".into()));
        }
        self.0.values().try_for_each(ObjectTemplate::validate)
    }

    pub fn categories(&self) -> Vec<Category> {
        self.0.keys().copied().collect()
    }
}
