use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point3 = [f64; 3];

/// An ordered set of 3-D points. Order is only meaningful for index-matched
/// baselines; the network itself is permutation invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point3>", into = "Vec<Point3>")]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Domain("point cloud has non-finite coordinates".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TabularVector {
    values: Vec<f64>,
}

impl TabularVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("tabular vector has non-finite values".into()));
        }
        Ok(Self { values })
    }

    pub fn empty() -> Self {
        Self { values: Vec::new() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl TryFrom<Vec<Point3>> for PointCloud {
    type Error = Error;

    fn try_from(points: Vec<Point3>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<PointCloud> for Vec<Point3> {
    fn from(cloud: PointCloud) -> Self {
        cloud.points
    }
}

impl TryFrom<Vec<f64>> for TabularVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<TabularVector> for Vec<f64> {
    fn from(x: TabularVector) -> Self {
        x.values
    }
}

/// One example `z = (P, x)`: the unit of explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneousInput {
    #[serde(rename = "points")]
    pub cloud: PointCloud,
    pub tabular: TabularVector,
}

impl HeterogeneousInput {
    pub fn new(cloud: PointCloud, tabular: TabularVector) -> Self {
        Self { cloud, tabular }
    }

    pub fn from_parts(points: Vec<Point3>, tabular: Vec<f64>) -> Result<Self> {
        Ok(Self {
            cloud: PointCloud::new(points)?,
            tabular: TabularVector::new(tabular)?,
        })
    }

    pub fn num_points(&self) -> usize {
        self.cloud.len()
    }

    pub fn num_tabular(&self) -> usize {
        self.tabular.len()
    }
}
