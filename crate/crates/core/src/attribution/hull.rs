//! Convex hull of pooled dataset points and the index-matched hull template.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::nn::{Point3, PointCloud};
use crate::{Error, Result};

fn sub(a: &Point3, b: &Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &Point3, b: &Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: &Point3, b: &Point3) -> Point3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: &Point3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: Point3,
    offset: f64,
}

/// Triangulated 3-D convex hull with outward unit normals.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    points: Vec<Point3>,
    faces: Vec<Face>,
    tol: f64,
}

impl ConvexHull {
    /// Incremental hull. Returns `None` when the points are coplanar,
    /// collinear or coincident (relative tolerance `1e-9` of the extent).
    pub fn build(points: &[Point3]) -> Option<Self> {
        if points.len() < 4 {
            return None;
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
        let tol = 1e-9 * extent.max(f64::MIN_POSITIVE);

        let argmax = |score: &dyn Fn(&Point3) -> f64| {
            let mut best = (0, f64::NEG_INFINITY);
            for (i, p) in points.iter().enumerate() {
                let s = score(p);
                if s > best.1 {
                    best = (i, s);
                }
            }
            best
        };
        let (i0, _) = argmax(&|p| -p[0]);
        let (i1, d1) = argmax(&|p| norm(&sub(p, &points[i0])));
        if d1 <= tol {
            return None;
        }
        let axis = sub(&points[i1], &points[i0]);
        let (i2, d2) = argmax(&|p| norm(&cross(&axis, &sub(p, &points[i0]))) / norm(&axis));
        if d2 <= tol {
            return None;
        }
        let plane_n = cross(&axis, &sub(&points[i2], &points[i0]));
        let plane_len = norm(&plane_n);
        let (i3, d3) = argmax(&|p| dot(&plane_n, &sub(p, &points[i0])).abs() / plane_len);
        if d3 <= tol {
            return None;
        }

        let interior = {
            let q = [i0, i1, i2, i3].map(|i| points[i]);
            [0, 1, 2].map(|d| q.iter().map(|p| p[d]).sum::<f64>() / 4.0)
        };
        let mut hull = Self {
            points: points.to_vec(),
            faces: Vec::new(),
            tol,
        };
        for v in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
            hull.faces.push(hull.make_face(v, &interior));
        }

        let seed = [i0, i1, i2, i3];
        for (pi, p) in points.iter().enumerate() {
            if seed.contains(&pi) {
                continue;
            }
            let visible: Vec<usize> = (0..hull.faces.len())
                .filter(|&f| dot(&hull.faces[f].normal, p) - hull.faces[f].offset > tol)
                .collect();
            if visible.is_empty() {
                continue;
            }
            let edges: HashSet<(usize, usize)> = visible
                .iter()
                .flat_map(|&f| {
                    let [a, b, c] = hull.faces[f].v;
                    [(a, b), (b, c), (c, a)]
                })
                .collect();
            let mut horizon: Vec<(usize, usize)> =
                edges.iter().copied().filter(|&(a, b)| !edges.contains(&(b, a))).collect();
            horizon.sort_unstable();
            let keep: Vec<Face> = hull
                .faces
                .iter()
                .enumerate()
                .filter(|(f, _)| !visible.contains(f))
                .map(|(_, face)| face.clone())
                .collect();
            hull.faces = keep;
            for (a, b) in horizon {
                let face = hull.make_face([a, b, pi], &interior);
                hull.faces.push(face);
            }
        }
        Some(hull)
    }

    fn make_face(&self, v: [usize; 3], interior: &Point3) -> Face {
        let [a, b, c] = v.map(|i| self.points[i]);
        let mut n = cross(&sub(&b, &a), &sub(&c, &a));
        let len = norm(&n);
        n = n.map(|x| x / len);
        let mut v = v;
        if dot(&n, &sub(interior, &a)) > 0.0 {
            n = n.map(|x| -x);
            v.swap(1, 2);
        }
        Face {
            v,
            normal: n,
            offset: dot(&n, &a),
        }
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Indices (into the input points) of hull vertices, ascending.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.faces.iter().flat_map(|f| f.v).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Whether `p` lies inside or on the hull, up to `slack` plus the build
    /// tolerance.
    pub fn contains(&self, p: &Point3, slack: f64) -> bool {
        self.faces
            .iter()
            .all(|f| dot(&f.normal, p) - f.offset <= self.tol + slack)
    }

    /// Largest signed distance of `p` outside any face plane (≤ 0 inside).
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.faces
            .iter()
            .map(|f| dot(&f.normal, p) - f.offset)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Parameter `t > 0` where `origin + t·dir` leaves the hull, for an
    /// interior `origin`.
    pub fn ray_exit(&self, origin: &Point3, dir: &Point3) -> Option<f64> {
        self.faces
            .iter()
            .filter_map(|f| {
                let rate = dot(&f.normal, dir);
                (rate > 0.0).then(|| (f.offset - dot(&f.normal, origin)) / rate)
            })
            .filter(|t| t.is_finite())
            .min_by(f64::total_cmp)
            .map(|t| t.max(0.0))
    }
}

/// Index-matched baseline points on the pooled-dataset hull.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullTemplate {
    pub template: PointCloud,
    /// True when the pooled points span less than three dimensions and the
    /// bounding-box surface was used instead of the hull.
    pub degenerate: bool,
    pub centroid: Point3,
    pub diagnostics: BTreeMap<String, f64>,
}

/// For each point index `j`, intersects the ray from the pooled centroid
/// through the per-index mean point with the hull boundary. A mean that
/// coincides with the centroid maps to the hull vertex nearest the centroid
/// (lowest index on ties).
pub fn hull_template(dataset: &[PointCloud]) -> Result<HullTemplate> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::Baseline("hull template needs at least one point cloud".into()))?;
    let k = first.len();
    if k == 0 {
        return Err(Error::Baseline("hull template needs non-empty clouds".into()));
    }
    if let Some(bad) = dataset.iter().find(|c| c.len() != k) {
        return Err(Error::Baseline(format!(
            "clouds must share one cardinality for index matching ({} vs {k})",
            bad.len()
        )));
    }
    let pooled: Vec<Point3> = dataset.iter().flat_map(|c| c.points().iter().copied()).collect();
    let count = pooled.len() as f64;
    let centroid = [0, 1, 2].map(|d| pooled.iter().map(|p| p[d]).sum::<f64>() / count);
    let n_clouds = dataset.len() as f64;
    let means: Vec<Point3> = (0..k)
        .map(|j| [0, 1, 2].map(|d| dataset.iter().map(|c| c.points()[j][d]).sum::<f64>() / n_clouds))
        .collect();

    let mut lo = pooled[0];
    let mut hi = pooled[0];
    for p in &pooled {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
    let hull = ConvexHull::build(&pooled);
    let nearest = |candidates: &mut dyn Iterator<Item = usize>| {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in candidates {
            let d = norm(&sub(&pooled[i], &centroid));
            if d < best.1 {
                best = (i, d);
            }
        }
        pooled[best.0]
    };

    let mut at_centroid = 0usize;
    let template = means
        .iter()
        .map(|m| {
            let u = sub(m, &centroid);
            if norm(&u) <= 1e-12 * extent.max(f64::MIN_POSITIVE) {
                at_centroid += 1;
                return match &hull {
                    Some(h) => nearest(&mut h.vertices().into_iter()),
                    None => nearest(&mut (0..pooled.len())),
                };
            }
            let t = match &hull {
                Some(h) => h.ray_exit(&centroid, &u).unwrap_or(0.0),
                None => box_exit(&centroid, &u, &lo, &hi),
            };
            [0, 1, 2].map(|d| centroid[d] + t * u[d])
        })
        .collect();

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("pooled_points".into(), count);
    diagnostics.insert("means_at_centroid".into(), at_centroid as f64);
    if let Some(h) = &hull {
        diagnostics.insert("hull_faces".into(), h.num_faces() as f64);
        diagnostics.insert("hull_vertices".into(), h.vertices().len() as f64);
    }
    Ok(HullTemplate {
        template: PointCloud::new(template)?,
        degenerate: hull.is_none(),
        centroid,
        diagnostics,
    })
}

/// Exit parameter of the ray through the axis-aligned box `[lo, hi]`.
fn box_exit(origin: &Point3, dir: &Point3, lo: &Point3, hi: &Point3) -> f64 {
    (0..3)
        .filter(|&d| dir[d] != 0.0)
        .map(|d| {
            let bound = if dir[d] > 0.0 { hi[d] } else { lo[d] };
            (bound - origin[d]) / dir[d]
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cube() -> Vec<Point3> {
        let mut v = Vec::new();
        for x in [-1.0, 1.0] {
            for y in [-1.0, 1.0] {
                for z in [-1.0, 1.0] {
                    v.push([x, y, z]);
                }
            }
        }
        v
    }

    #[test]
    fn cube_hull_has_twelve_triangles() {
        let mut pts = cube();
        pts.push([0.1, -0.2, 0.3]);
        let h = ConvexHull::build(&pts).unwrap();
        assert_eq!(h.num_faces(), 12);
        assert_eq!(h.vertices(), (0..8).collect::<Vec<_>>());
        assert!(h.contains(&[0.99, 0.0, -0.99], 0.0));
        assert!(!h.contains(&[1.01, 0.0, 0.0], 0.0));
        let t = h.ray_exit(&[0.0; 3], &[2.0, 1.0, 0.0]).unwrap();
        assert!((t - 0.5).abs() < 1e-12);
    }

    #[test]
    fn random_points_are_inside_their_hull() {
        let mut r = rng::root(4);
        let pts: Vec<Point3> = (0..300)
            .map(|_| [r.random_range(-1.0..1.0), r.random_range(-2.0..2.0), r.random_range(-0.5..0.5)])
            .collect();
        let h = ConvexHull::build(&pts).unwrap();
        for p in &pts {
            assert!(h.contains(p, 1e-9));
        }
        // every vertex lies on some face plane
        for v in h.vertices() {
            assert!(h.signed_distance(&pts[v]).abs() < 1e-9);
        }
    }

    #[test]
    fn coplanar_points_are_degenerate() {
        let pts: Vec<Point3> = (0..20).map(|i| [i as f64, (i * i % 7) as f64, 0.0]).collect();
        assert!(ConvexHull::build(&pts).is_none());
    }

    #[test]
    fn points_on_their_hull_map_to_themselves() {
        let cloud = PointCloud::new(cube()).unwrap();
        let tpl = hull_template(&vec![cloud.clone(); 5]).unwrap();
        assert!(!tpl.degenerate);
        for (a, b) in tpl.template.points().iter().zip(cloud.points()) {
            assert!(norm(&sub(a, b)) < 1e-9, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn sphere_samples_give_unit_radius_template() {
        let mut r = rng::root(21);
        let mut sample = || {
            let v: Point3 = [0, 1, 2].map(|_| StandardNormal.sample(&mut r));
            let n = norm(&v);
            v.map(|x| x / n)
        };
        let clouds: Vec<PointCloud> = (0..60)
            .map(|_| PointCloud::new((0..16).map(|_| sample()).collect()).unwrap())
            .collect();
        let tpl = hull_template(&clouds).unwrap();
        for p in tpl.template.points() {
            let radius = norm(p);
            assert!((radius - 1.0).abs() <= 0.05, "radius {radius}");
        }
    }

    #[test]
    fn duplicated_cube_corners_land_on_cube_surface() {
        let mut pts = cube();
        pts.extend(cube());
        let tpl = hull_template(&[PointCloud::new(pts).unwrap()]).unwrap();
        for p in tpl.template.points() {
            let inf = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
            assert!((inf - 1.0).abs() < 1e-9, "{p:?}");
        }
    }

    #[test]
    fn mean_at_centroid_uses_nearest_hull_vertex() {
        // points 0 and 7 swap corners between the two clouds, so their means
        // sit on the centroid
        let a = cube();
        let mut b = cube();
        b.swap(0, 7);
        let tpl = hull_template(&[PointCloud::new(a).unwrap(), PointCloud::new(b).unwrap()]).unwrap();
        assert_eq!(tpl.diagnostics["means_at_centroid"], 2.0);
        // all corners are equidistant from the centroid; lowest pooled index wins
        assert_eq!(tpl.template.points()[0], [-1.0, -1.0, -1.0]);
        assert_eq!(tpl.template.points()[7], [-1.0, -1.0, -1.0]);
    }

    #[test]
    fn planar_dataset_falls_back_to_bounding_box() {
        let cloud = PointCloud::new(vec![[-1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [0.5, -1.0, 0.0], [-1.0, 0.2, 0.0]]).unwrap();
        let tpl = hull_template(&[cloud]).unwrap();
        assert!(tpl.degenerate);
        for p in tpl.template.points() {
            let on_edge = (p[0].abs() - 1.0).abs() < 1e-12 || (p[1].abs() - 1.0).abs() < 1e-12;
            assert!(on_edge && p[2] == 0.0, "{p:?}");
        }
    }

    #[test]
    fn rejects_ragged_datasets() {
        let a = PointCloud::new(vec![[0.0; 3]; 3]).unwrap();
        let b = PointCloud::new(vec![[0.0; 3]; 4]).unwrap();
        assert!(hull_template(&[a, b]).is_err());
        assert!(hull_template(&[]).is_err());
    }
}
