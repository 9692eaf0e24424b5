//! Closed convex domains the iterations live on, with membership tests,
//! metric projections and diameters.
//!
//! Four kinds cover every scenario in the toolkit: Euclidean balls, boxes,
//! the standard probability simplex, and a norm-bounded region of the sparse
//! sequence space. The sparse kind exists so unbounded-support sequences have
//! a home; it supports membership and diameter but no projection.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::space::{combine, Point};

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexDomain {
    Ball { center: Point, radius: f64 },
    Box { lower: Point, upper: Point, dim: usize },
    Simplex { dim: usize },
    Sparse { radius_bound: f64 },
}

impl ConvexDomain {
    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::validation("radius", format!("must be finite and positive, got {radius}")));
        }
        Ok(ConvexDomain::Ball { center, radius })
    }

    pub fn boxed(lower: Point, upper: Point, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("dim", "box dimension must be at least 1"));
        }
        for i in 0..dim as u64 {
            if lower.get(i) >= upper.get(i) {
                return Err(Error::validation(
                    "lower",
                    format!("lower bound must be strictly below upper at index {i}"),
                ));
            }
        }
        let lower = lower.with_dim(dim)?;
        let upper = upper.with_dim(dim)?;
        Ok(ConvexDomain::Box { lower, upper, dim })
    }

    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::validation("dim", "simplex dimension must be at least 1"));
        }
        Ok(ConvexDomain::Simplex { dim })
    }

    pub fn sparse(radius_bound: f64) -> Result<Self> {
        if !(radius_bound.is_finite() && radius_bound > 0.0) {
            return Err(Error::validation(
                "radius_bound",
                format!("must be finite and positive, got {radius_bound}"),
            ));
        }
        Ok(ConvexDomain::Sparse { radius_bound })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ConvexDomain::Ball { .. } => "ball",
            ConvexDomain::Box { .. } => "box",
            ConvexDomain::Simplex { .. } => "simplex",
            ConvexDomain::Sparse { .. } => "sparse",
        }
    }

    /// Exact diameter of the set.
    pub fn diameter(&self) -> f64 {
        match self {
            ConvexDomain::Ball { radius, .. } => 2.0 * radius,
            ConvexDomain::Box { lower, upper, .. } => upper.distance(lower),
            // Largest chord runs between two vertices: |e_i - e_j| = sqrt(2).
            ConvexDomain::Simplex { dim } => {
                if *dim == 1 {
                    0.0
                } else {
                    2.0_f64.sqrt()
                }
            }
            ConvexDomain::Sparse { radius_bound } => 2.0 * radius_bound,
        }
    }

    /// Distance from `x` to the set; zero inside. Well defined for every
    /// kind, including the sparse one.
    pub fn distance_to(&self, x: &Point) -> f64 {
        match self {
            ConvexDomain::Ball { center, radius } => (x.distance(center) - radius).max(0.0),
            ConvexDomain::Sparse { radius_bound } => (x.norm() - radius_bound).max(0.0),
            ConvexDomain::Box { .. } | ConvexDomain::Simplex { .. } => {
                x.distance(&self.project(x).expect("box/simplex projection is total"))
            }
        }
    }

    pub fn contains(&self, x: &Point, tol: f64) -> bool {
        debug_assert!(tol >= 0.0);
        self.distance_to(x) <= tol
    }

    /// Metric projection onto the set. Unsupported for the sparse kind.
    pub fn project(&self, x: &Point) -> Result<Point> {
        match self {
            ConvexDomain::Ball { center, radius } => {
                let dist = x.distance(center);
                if dist <= *radius {
                    Ok(x.clone())
                } else {
                    let t = radius / dist;
                    combine(1.0 - t, center, t, x)
                }
            }
            ConvexDomain::Box { lower, upper, dim } => {
                let mut coords = BTreeMap::new();
                for i in 0..*dim as u64 {
                    let v = x.get(i).clamp(lower.get(i), upper.get(i));
                    if v != 0.0 {
                        coords.insert(i, v);
                    }
                }
                Point::from_coords(coords, Some(*dim))
            }
            ConvexDomain::Simplex { dim } => {
                let v = (0..*dim as u64).map(|i| x.get(i)).collect::<Vec<_>>();
                let p = project_simplex(&v);
                Point::from_coords(
                    p.iter().enumerate().map(|(i, &c)| (i as u64, c)),
                    Some(*dim),
                )
            }
            ConvexDomain::Sparse { .. } => {
                Err(Error::UnsupportedProjection { kind: self.kind_name() })
            }
        }
    }

    /// A distinguished interior point: ball center, box midpoint, simplex
    /// barycenter, origin for the sparse kind. Default anchor for the
    /// regularized iteration.
    pub fn center(&self) -> Point {
        match self {
            ConvexDomain::Ball { center, .. } => center.clone(),
            ConvexDomain::Box { lower, upper, .. } => {
                combine(0.5, lower, 0.5, upper).expect("box bounds share a dimension")
            }
            ConvexDomain::Simplex { dim } => {
                let c = 1.0 / *dim as f64;
                Point::from_coords((0..*dim as u64).map(|i| (i, c)), Some(*dim))
                    .expect("barycenter coefficients are finite")
            }
            ConvexDomain::Sparse { .. } => Point::zero(),
        }
    }

    /// Ambient dimension when the domain fixes one.
    pub fn ambient_dim(&self) -> Option<usize> {
        match self {
            ConvexDomain::Ball { center, .. } => center.dim(),
            ConvexDomain::Box { dim, .. } | ConvexDomain::Simplex { dim } => Some(*dim),
            ConvexDomain::Sparse { .. } => None,
        }
    }

    /// Draws a uniform sample. Needs a fixed ambient dimension, so the
    /// sparse kind (and balls with a sparse center) refuse.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<Point> {
        match self {
            ConvexDomain::Ball { center, radius } => {
                let dim = center.dim().ok_or_else(|| {
                    Error::validation("center", "sampling a ball needs a dense center")
                })?;
                let mut dir = vec![0.0; dim];
                let mut nsq = 0.0;
                for d in dir.iter_mut() {
                    let g: f64 = StandardNormal.sample(rng);
                    *d = g;
                    nsq += g * g;
                }
                if nsq == 0.0 {
                    return Ok(center.clone());
                }
                let u: f64 = rng.random();
                let r = radius * u.powf(1.0 / dim as f64) / nsq.sqrt();
                let offset = Point::dense(&dir).scale(r);
                combine(1.0, center, 1.0, &offset)
            }
            ConvexDomain::Box { lower, upper, dim } => {
                let values = (0..*dim as u64)
                    .map(|i| rng.random_range(lower.get(i)..upper.get(i)))
                    .collect::<Vec<_>>();
                Ok(Point::dense(&values))
            }
            ConvexDomain::Simplex { dim } => {
                // Normalized exponentials are Dirichlet(1, ..., 1).
                let mut values = vec![0.0; *dim];
                let mut total = 0.0;
                for v in values.iter_mut() {
                    let u: f64 = rng.random();
                    *v = -(1.0 - u).ln();
                    total += *v;
                }
                for v in values.iter_mut() {
                    *v /= total;
                }
                Ok(Point::dense(&values))
            }
            ConvexDomain::Sparse { .. } => Err(Error::validation(
                "domain",
                "sampling is not available for the sparse kind",
            )),
        }
    }
}

/// Euclidean projection onto the standard simplex (sort and threshold).
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

impl<'de> Deserialize<'de> for ConvexDomain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
        enum Repr {
            Ball { center: Point, radius: f64 },
            Box { lower: Point, upper: Point, dim: usize },
            Simplex { dim: usize },
            Sparse { radius_bound: f64 },
        }
        let validated = match Repr::deserialize(deserializer)? {
            Repr::Ball { center, radius } => ConvexDomain::ball(center, radius),
            Repr::Box { lower, upper, dim } => ConvexDomain::boxed(lower, upper, dim),
            Repr::Simplex { dim } => ConvexDomain::simplex(dim),
            Repr::Sparse { radius_bound } => ConvexDomain::sparse(radius_bound),
        };
        validated.map_err(serde::de::Error::custom)
    }
}
