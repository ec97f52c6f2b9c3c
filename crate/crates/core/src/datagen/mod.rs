//! Synthetic datasets and their on-disk format.

mod io;

pub use io::{read_dataset, read_dataset_from, write_dataset, write_dataset_to};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{HeterogeneousInput, Point3, PointCloud, TabularVector};
use crate::{rng, Error, Result};

pub const XI_POINTS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub input: HeterogeneousInput,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default)]
    pub tool_version: String,
    pub n_examples: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub seed: u64,
    pub generator: String,
    /// `[#label 0, #label 1]`.
    pub class_balance: [usize; 2],
    #[serde(default)]
    pub column_names: Vec<String>,
    /// Ground-truth informativeness of each tabular column.
    #[serde(default)]
    pub informative: Vec<bool>,
    /// Generator parameters, echoed verbatim.
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    /// Builds the manifest from the examples themselves.
    pub fn new(
        examples: Vec<LabeledExample>,
        seed: u64,
        generator: &str,
        column_names: Vec<String>,
        informative: Vec<bool>,
        params: serde_json::Value,
    ) -> Result<Self> {
        let first = examples
            .first()
            .ok_or_else(|| Error::Config("dataset must contain at least one example".into()))?;
        let (k, d) = (first.input.num_points(), first.input.num_tabular());
        let manifest = DatasetManifest {
            tool_version: crate::TOOL_VERSION.to_string(),
            n_examples: examples.len(),
            k,
            d,
            seed,
            generator: generator.to_string(),
            class_balance: class_balance(&examples),
            column_names,
            informative,
            params,
        };
        let ds = Self { manifest, examples };
        ds.check_integrity()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &HeterogeneousInput> {
        self.examples.iter().map(|e| &e.input)
    }

    pub fn clouds(&self) -> Vec<PointCloud> {
        self.examples.iter().map(|e| e.input.cloud.clone()).collect()
    }

    /// Verifies that the manifest agrees with the stored records.
    pub fn check_integrity(&self) -> Result<()> {
        let m = &self.manifest;
        if m.n_examples == 0 || self.examples.is_empty() {
            return Err(Error::Integrity("dataset has no examples".into()));
        }
        if m.n_examples != self.examples.len() {
            return Err(Error::Integrity(format!(
                "manifest declares {} examples, found {}",
                m.n_examples,
                self.examples.len()
            )));
        }
        for (i, e) in self.examples.iter().enumerate() {
            if e.input.num_points() != m.k || e.input.num_tabular() != m.d {
                return Err(Error::Integrity(format!(
                    "example {i} has K={} D={}, manifest says K={} D={}",
                    e.input.num_points(),
                    e.input.num_tabular(),
                    m.k,
                    m.d
                )));
            }
            if e.label > 1 {
                return Err(Error::Integrity(format!("example {i} has label {}", e.label)));
            }
        }
        if class_balance(&self.examples) != m.class_balance {
            return Err(Error::Integrity("class balance does not match the records".into()));
        }
        if !m.column_names.is_empty() && m.column_names.len() != m.d {
            return Err(Error::Integrity("column_names length differs from D".into()));
        }
        if !m.informative.is_empty() && m.informative.len() != m.d {
            return Err(Error::Integrity("informative flags length differs from D".into()));
        }
        Ok(())
    }
}

fn class_balance(examples: &[LabeledExample]) -> [usize; 2] {
    let ones = examples.iter().filter(|e| e.label == 1).count();
    [examples.len() - ones, ones]
}

/// Canonical, jitter-free X (label 1) and I (label 0) shapes in stroke-major order.
pub fn xi_template(label: u8) -> Vec<Point3> {
    if label == 1 {
        let t: Vec<f64> = (0..8).map(|s| (2 * s - 7) as f64 / 7.0).collect();
        t.iter()
            .map(|&t| [t, t, 0.0])
            .chain(t.iter().map(|&t| [t, -t, 0.0]))
            .collect()
    } else {
        (0..XI_POINTS as i32)
            .map(|s| [0.0, (2 * s - 15) as f64 / 15.0, 0.0])
            .collect()
    }
}

/// X-vs-I clouds of 16 points. Even indices are X (label 1), so the classes
/// hold `⌈n/2⌉` and `⌊n/2⌋` examples. Every coordinate, including `z`,
/// receives independent `N(0, jitter²)` noise.
pub fn generate_xi(n: usize, seed: u64, jitter: f64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Config(format!("X/I dataset needs n >= 2, got {n}")));
    }
    if !(jitter >= 0.0 && jitter.is_finite()) {
        return Err(Error::Config(format!("jitter must be finite and >= 0, got {jitter}")));
    }
    let noise = Normal::new(0.0, jitter).map_err(|e| Error::Config(e.to_string()))?;
    let mut r = rng::root(seed);
    let examples = (0..n)
        .map(|i| {
            let label = u8::from(i % 2 == 0);
            let points: Vec<Point3> = xi_template(label)
                .into_iter()
                .map(|p| p.map(|c| if jitter > 0.0 { c + noise.sample(&mut r) } else { c }))
                .collect();
            Ok(LabeledExample {
                input: HeterogeneousInput::new(PointCloud::new(points)?, TabularVector::empty()),
                label,
            })
        })
        .collect::<Result<_>>()?;
    Dataset::new(
        examples,
        seed,
        "xi",
        Vec::new(),
        Vec::new(),
        serde_json::json!({ "n": n, "jitter": jitter }),
    )
}

/// Ellipsoid semi-axes of the label-1 shape family; label 0 is the unit sphere.
pub const ELLIPSOID_AXES: Point3 = [1.4, 1.0, 0.6];
/// Class shift of informative tabular columns.
pub const INFORMATIVE_SHIFT: f64 = 1.0;
const SURFACE_NOISE: f64 = 0.02;

/// Clouds sampled on a sphere (label 0) or ellipsoid (label 1) surface, plus
/// `d` standard-normal columns of which the first `informative` are shifted
/// by [`INFORMATIVE_SHIFT`] for label 1.
pub fn generate_hetero(n: usize, k: usize, d: usize, informative: usize, seed: u64) -> Result<Dataset> {
    if n < 2 || k < 4 || d < 1 || informative > d {
        return Err(Error::Config(format!(
            "heterogeneous dataset needs n >= 2, K >= 4, D >= 1, informative <= D (got n={n} K={k} D={d} informative={informative})"
        )));
    }
    let mut r = rng::root(seed);
    let examples = (0..n)
        .map(|i| {
            let label = u8::from(i % 2 == 0);
            let axes = if label == 1 { ELLIPSOID_AXES } else { [1.0; 3] };
            let points: Vec<Point3> = (0..k)
                .map(|_| {
                    let v: Point3 = [0, 1, 2].map(|_| StandardNormal.sample(&mut r));
                    let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-300);
                    [0, 1, 2].map(|a| axes[a] * v[a] / len + SURFACE_NOISE * r.sample::<f64, _>(StandardNormal))
                })
                .collect();
            let tabular: Vec<f64> = (0..d)
                .map(|t| {
                    let x: f64 = r.sample(StandardNormal);
                    if t < informative && label == 1 {
                        x + INFORMATIVE_SHIFT
                    } else {
                        x
                    }
                })
                .collect();
            Ok(LabeledExample {
                input: HeterogeneousInput::from_parts(points, tabular)?,
                label,
            })
        })
        .collect::<Result<_>>()?;
    let names = (0..d)
        .map(|t| if t < informative { format!("info{t}") } else { format!("noise{t}") })
        .collect();
    let flags = (0..d).map(|t| t < informative).collect();
    Dataset::new(
        examples,
        seed,
        "hetero",
        names,
        flags,
        serde_json::json!({ "n": n, "K": k, "D": d, "informative": informative }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xi_is_balanced_and_deterministic() {
        for n in [2, 3, 10, 101] {
            let ds = generate_xi(n, 5, 0.05).unwrap();
            let [a, b] = ds.manifest.class_balance;
            assert!(a.abs_diff(b) <= 1);
            assert_eq!(b, n.div_ceil(2));
            assert_eq!(ds, generate_xi(n, 5, 0.05).unwrap());
        }
        assert_ne!(generate_xi(4, 1, 0.05).unwrap(), generate_xi(4, 2, 0.05).unwrap());
    }

    #[test]
    fn jitter_free_shapes() {
        let ds = generate_xi(4, 0, 0.0).unwrap();
        for e in &ds.examples {
            assert_eq!(e.input.num_points(), 16);
            assert!(e.input.cloud.points().iter().all(|p| p[2] == 0.0));
            if e.label == 0 {
                assert!(e.input.cloud.points().iter().all(|p| p[0] == 0.0));
            } else {
                let mut pts: Vec<Point3> = e.input.cloud.points().to_vec();
                let mut mirrored: Vec<Point3> = pts.iter().map(|p| [-p[0], p[1], p[2]]).collect();
                let key = |a: &Point3, b: &Point3| a.partial_cmp(b).unwrap();
                pts.sort_by(key);
                mirrored.sort_by(key);
                assert_eq!(pts, mirrored);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(generate_xi(1, 0, 0.1).is_err());
        assert!(generate_xi(4, 0, -0.1).is_err());
        assert!(generate_hetero(4, 3, 2, 1, 0).is_err());
        assert!(generate_hetero(4, 8, 0, 0, 0).is_err());
        assert!(generate_hetero(4, 8, 2, 3, 0).is_err());
    }

    #[test]
    fn hetero_flags_and_determinism() {
        let ds = generate_hetero(20, 8, 3, 0, 11).unwrap();
        assert_eq!(ds.manifest.informative, vec![false; 3]);
        assert_eq!(ds, generate_hetero(20, 8, 3, 0, 11).unwrap());
        let ds = generate_hetero(20, 8, 5, 2, 11).unwrap();
        assert_eq!(ds.manifest.informative, vec![true, true, false, false, false]);
        assert_eq!((ds.manifest.k, ds.manifest.d), (8, 5));
    }

    #[test]
    fn hetero_surfaces_follow_their_family() {
        let ds = generate_hetero(2, 200, 1, 1, 3).unwrap();
        let max_abs = |e: &LabeledExample, a: usize| {
            e.input.cloud.points().iter().map(|p| p[a].abs()).fold(0.0, f64::max)
        };
        let ellipsoid = &ds.examples[0];
        let sphere = &ds.examples[1];
        assert!(max_abs(ellipsoid, 0) > 1.2 && max_abs(ellipsoid, 2) < 0.75);
        assert!(max_abs(sphere, 0) < 1.1 && max_abs(sphere, 2) > 0.85);
    }
}
