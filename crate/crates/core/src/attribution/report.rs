use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Attribution, FeatureKind, FeatureSpace};
use crate::nn::{sigmoid, HeterogeneousInput, Point3, WdpnModel};
use crate::prob::VarianceMode;
use crate::{Error, Result, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub feature_id: usize,
    /// `"point"` or `"tabular"`.
    pub kind: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_coords: Option<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column_name: Option<String>,
}

/// Serialized explanation of one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub model_checksum: String,
    pub estimator: String,
    pub baseline: String,
    pub variance_mode: Option<VarianceMode>,
    pub evaluations: u64,
    pub f_z: f64,
    pub f_baseline: f64,
    pub predicted_probability: f64,
    pub attribution_sum: f64,
    pub features: Vec<FeatureRecord>,
    pub diagnostics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl AttributionReport {
    /// `column_names`, when given, must have one entry per tabular column.
    pub fn new(
        attribution: &Attribution,
        z: &HeterogeneousInput,
        model: &WdpnModel,
        config: serde_json::Value,
        column_names: Option<&[String]>,
    ) -> Result<Self> {
        let space = FeatureSpace::new(z.num_points(), z.num_tabular())?;
        if attribution.len() != space.total() {
            return Err(Error::Shape(format!(
                "attribution has {} values for {} features",
                attribution.len(),
                space.total()
            )));
        }
        if let Some(names) = column_names {
            if names.len() != space.tabular {
                return Err(Error::Shape(format!(
                    "{} column names for {} tabular columns",
                    names.len(),
                    space.tabular
                )));
            }
        }
        let features = attribution
            .values
            .iter()
            .enumerate()
            .map(|(id, &value)| {
                Ok(match space.kind(id)? {
                    FeatureKind::Point(j) => FeatureRecord {
                        feature_id: id,
                        kind: "point".into(),
                        value,
                        point_coords: Some(z.cloud.points()[j]),
                        column_name: None,
                    },
                    FeatureKind::Tabular(t) => FeatureRecord {
                        feature_id: id,
                        kind: "tabular".into(),
                        value,
                        point_coords: None,
                        column_name: Some(
                            column_names.map_or_else(|| format!("x{t}"), |n| n[t].clone()),
                        ),
                    },
                })
            })
            .collect::<Result<_>>()?;
        let mut notes = vec!["values are in logit units and sum approximately to f_z - f_baseline".to_string()];
        if attribution.estimator == super::EstimatorKind::Exact {
            notes.push("evaluations count 2^|F| coalitions plus the f(z) and f(z_bl) passes".into());
        }
        Ok(Self {
            tool_version: TOOL_VERSION.to_string(),
            seed: attribution.seed,
            config,
            model_checksum: model.checksum(),
            estimator: attribution.estimator.as_str().into(),
            baseline: attribution.baseline.as_str().into(),
            variance_mode: attribution.variance_mode,
            evaluations: attribution.evaluations,
            f_z: attribution.f_z,
            f_baseline: attribution.f_baseline,
            predicted_probability: sigmoid(attribution.f_z),
            attribution_sum: attribution.sum(),
            features,
            diagnostics: attribution.diagnostics.clone(),
            notes,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
