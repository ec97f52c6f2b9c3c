use serde::{Deserialize, Serialize};

use super::Coalition;
use crate::nn::{HeterogeneousInput, Point3, PointCloud, TabularVector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Absent points move to the origin.
    Zero,
    /// Absent points move to their index-matched point on a dataset hull.
    Hull,
}

impl BaselineKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineKind::Zero => "zero",
            BaselineKind::Hull => "hull",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(BaselineKind::Zero),
            "hull" => Ok(BaselineKind::Hull),
            other => Err(Error::Config(format!("unknown baseline `{other}`"))),
        }
    }
}

/// The "feature absent" reference `z^bl`. Tabular columns always fall back
/// to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSpec {
    kind: BaselineKind,
    template: Option<PointCloud>,
}

impl BaselineSpec {
    pub fn zero() -> Self {
        Self {
            kind: BaselineKind::Zero,
            template: None,
        }
    }

    pub fn hull(template: PointCloud) -> Self {
        Self {
            kind: BaselineKind::Hull,
            template: Some(template),
        }
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn template(&self) -> Option<&PointCloud> {
        self.template.as_ref()
    }

    /// Checks the template against a cloud of `k` points.
    pub fn validate(&self, k: usize) -> Result<()> {
        match (self.kind, &self.template) {
            (BaselineKind::Zero, _) => Ok(()),
            (BaselineKind::Hull, None) => Err(Error::Baseline("hull baseline requested without a template".into())),
            (BaselineKind::Hull, Some(t)) if t.len() != k => Err(Error::Baseline(format!(
                "hull template has {} points, input has {k}",
                t.len()
            ))),
            (BaselineKind::Hull, Some(_)) => Ok(()),
        }
    }

    /// Replacement for point `j`. Call [`BaselineSpec::validate`] first.
    #[inline]
    pub fn point(&self, j: usize) -> Point3 {
        match &self.template {
            Some(t) if self.kind == BaselineKind::Hull => t.points()[j],
            _ => [0.0; 3],
        }
    }

    /// `z^bl`: every feature replaced.
    pub fn baseline_input(&self, z: &HeterogeneousInput) -> Result<HeterogeneousInput> {
        masked_input(z, &Coalition::empty(z.num_points() + z.num_tabular()), self)
    }
}

/// Keeps the features in `s` and replaces the rest by the baseline.
pub fn masked_input(z: &HeterogeneousInput, s: &Coalition, baseline: &BaselineSpec) -> Result<HeterogeneousInput> {
    let k = z.num_points();
    if s.universe() != k + z.num_tabular() {
        return Err(Error::Shape(format!(
            "coalition over {} features, input has {}",
            s.universe(),
            k + z.num_tabular()
        )));
    }
    baseline.validate(k)?;
    let points = z
        .cloud
        .points()
        .iter()
        .enumerate()
        .map(|(j, p)| if s.contains(j) { *p } else { baseline.point(j) })
        .collect();
    let tabular = z
        .tabular
        .values()
        .iter()
        .enumerate()
        .map(|(t, &v)| if s.contains(k + t) { v } else { 0.0 })
        .collect();
    Ok(HeterogeneousInput::new(PointCloud::new(points)?, TabularVector::new(tabular)?))
}
