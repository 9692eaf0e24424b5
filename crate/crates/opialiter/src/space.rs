//! Vector algebra over a sparse coefficient representation.
//!
//! A [`Point`] keeps only nonzero coefficients in a sorted map, so the same
//! type serves both ambient modes of the toolkit: dense vectors in R^d carry
//! `dim = Some(d)`, finite-support sequence-space elements carry `dim = None`.
//! Everything downstream (domains, operators, engines, diagnostics) is built
//! on three kernels defined here: [`combine`], [`inner_product`] and
//! [`norm`]. The inner product is the plain Euclidean/l2 one; summation
//! always walks indices in increasing order, which keeps results bitwise
//! reproducible from run to run.
//!
//! Canonical form invariant: an index is stored iff its coefficient is
//! nonzero, and in dense mode every stored index is `< dim`. All constructors
//! and operations preserve this, so point equality is plain map equality.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct Point {
    coords: BTreeMap<u64, f64>,
    dim: Option<usize>,
}

/// Equality is equality of canonical coefficient maps. Two zero points are
/// equal regardless of how they were built.
impl PartialEq for Point {
    fn eq(&self, other: &Self) -> bool {
        self.coords == other.coords
    }
}

impl Point {
    /// Zero element of the sparse mode.
    pub fn zero() -> Self {
        Point::default()
    }

    /// Zero vector of R^dim.
    pub fn zero_dense(dim: usize) -> Self {
        Point { coords: BTreeMap::new(), dim: Some(dim) }
    }

    /// Canonical basis element `e_index` (sparse mode).
    pub fn basis(index: u64) -> Self {
        let mut coords = BTreeMap::new();
        coords.insert(index, 1.0);
        Point { coords, dim: None }
    }

    /// Dense vector from a slice; `dim` is the slice length.
    pub fn dense(values: &[f64]) -> Self {
        let coords = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u64, *v))
            .collect();
        Point { coords, dim: Some(values.len()) }
    }

    /// Builds a point from raw coefficients, dropping zeros and validating
    /// that every value is finite and every index fits the dense dimension.
    pub fn from_coords(
        coords: impl IntoIterator<Item = (u64, f64)>,
        dim: Option<usize>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, v) in coords {
            if !v.is_finite() {
                return Err(Error::validation("coords", format!("coefficient at {i} is not finite")));
            }
            if let Some(d) = dim {
                if i >= d as u64 {
                    return Err(Error::validation(
                        "coords",
                        format!("index {i} out of range for dense dimension {d}"),
                    ));
                }
            }
            if v != 0.0 {
                map.insert(i, v);
            }
        }
        Ok(Point { coords: map, dim })
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// Returns the same point with the dense dimension set, checking bounds.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        if let Some((&max, _)) = self.coords.iter().next_back() {
            if max >= dim as u64 {
                return Err(Error::validation(
                    "dim",
                    format!("index {max} out of range for dense dimension {dim}"),
                ));
            }
        }
        Ok(Point { coords: self.coords.clone(), dim: Some(dim) })
    }

    pub fn coords(&self) -> &BTreeMap<u64, f64> {
        &self.coords
    }

    /// Coefficient at `index`; absent means zero.
    pub fn get(&self, index: u64) -> f64 {
        self.coords.get(&index).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.coords.len()
    }

    pub fn max_index(&self) -> Option<u64> {
        self.coords.keys().next_back().copied()
    }

    /// Scalar multiple; keeps the dimension hint.
    pub fn scale(&self, a: f64) -> Point {
        let coords = self
            .coords
            .iter()
            .map(|(&i, &v)| (i, a * v))
            .filter(|(_, v)| *v != 0.0)
            .collect();
        Point { coords, dim: self.dim }
    }

    pub fn norm_sq(&self) -> f64 {
        self.coords.values().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// l2 distance, well defined in either mode: both coefficient maps embed
    /// in the same sequence space, so no dimension bookkeeping is needed.
    pub fn distance(&self, other: &Point) -> f64 {
        let mut sum = 0.0;
        let mut a = self.coords.iter().peekable();
        let mut b = other.coords.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (Some((&i, &x)), Some((&j, &y))) => {
                    if i < j {
                        sum += x * x;
                        a.next();
                    } else if j < i {
                        sum += y * y;
                        b.next();
                    } else {
                        let d = x - y;
                        sum += d * d;
                        a.next();
                        b.next();
                    }
                }
                (Some((_, &x)), None) => {
                    sum += x * x;
                    a.next();
                }
                (None, Some((&_, &y))) => {
                    sum += y * y;
                    b.next();
                }
                (None, None) => break,
            }
        }
        sum.sqrt()
    }

    /// Dense coefficient vector of length `dim`.
    pub fn to_dense(&self, dim: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; dim];
        for (&i, &v) in &self.coords {
            if i >= dim as u64 {
                return Err(Error::validation(
                    "dim",
                    format!("index {i} out of range for dense dimension {dim}"),
                ));
            }
            out[i as usize] = v;
        }
        Ok(out)
    }
}

/// `a*x + b*y`. The result is canonical: exact cancellations disappear from
/// the map. Dense dimensions must agree; combining a dense point with a
/// sparse one keeps the dense dimension provided the sparse support fits.
pub fn combine(a: f64, x: &Point, b: f64, y: &Point) -> Result<Point> {
    for (name, v) in [("a", a), ("b", b)] {
        if !v.is_finite() {
            return Err(Error::validation(name, format!("coefficient {v} is not finite")));
        }
    }
    let dim = merged_dim(x, y)?;
    let mut coords: BTreeMap<u64, f64> = BTreeMap::new();
    for (&i, &v) in &x.coords {
        coords.insert(i, a * v);
    }
    for (&i, &v) in &y.coords {
        *coords.entry(i).or_insert(0.0) += b * v;
    }
    coords.retain(|_, v| *v != 0.0);
    Ok(Point { coords, dim })
}

/// Euclidean inner product over the shared support.
pub fn inner_product(x: &Point, y: &Point) -> f64 {
    let (small, large) = if x.coords.len() <= y.coords.len() { (x, y) } else { (y, x) };
    small
        .coords
        .iter()
        .filter_map(|(i, v)| large.coords.get(i).map(|w| v * w))
        .sum()
}

/// l2 norm, `sqrt(inner_product(x, x))`.
pub fn norm(x: &Point) -> f64 {
    x.norm()
}

fn merged_dim(x: &Point, y: &Point) -> Result<Option<usize>> {
    match (x.dim, y.dim) {
        (None, None) => Ok(None),
        (Some(a), Some(b)) => {
            if a == b {
                Ok(Some(a))
            } else {
                Err(Error::DimensionMismatch { left: a, right: b })
            }
        }
        (Some(d), None) => {
            check_support_fits(y, d)?;
            Ok(Some(d))
        }
        (None, Some(d)) => {
            check_support_fits(x, d)?;
            Ok(Some(d))
        }
    }
}

fn check_support_fits(p: &Point, dim: usize) -> Result<()> {
    if let Some(max) = p.max_index() {
        if max >= dim as u64 {
            return Err(Error::validation(
                "point",
                format!("sparse index {max} out of range for dense dimension {dim}"),
            ));
        }
    }
    Ok(())
}

// --- serialization ---
//
// Output form is always the object `{"coords": {"<index>": coeff}, "dim": d}`
// with `"dim": null` in sparse mode. Input additionally accepts a bare array
// `[x0, x1, ...]`, shorthand for a dense vector.

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            coords: &'a BTreeMap<u64, f64>,
            dim: Option<usize>,
        }
        Repr { coords: &self.coords, dim: self.dim }.serialize(serializer)
    }
}

// Untagged enums buffer their input with string map keys, so the coords map
// deserializes string-keyed and the indices are parsed here.
#[derive(Deserialize)]
#[serde(untagged)]
enum PointRepr {
    Array(Vec<f64>),
    Object {
        coords: BTreeMap<String, f64>,
        #[serde(default)]
        dim: Option<usize>,
    },
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = PointRepr::deserialize(deserializer)?;
        let point = match repr {
            PointRepr::Array(values) => {
                for v in &values {
                    if !v.is_finite() {
                        return Err(D::Error::custom("point coefficients must be finite"));
                    }
                }
                Point::dense(&values)
            }
            PointRepr::Object { coords, dim } => {
                let mut parsed = BTreeMap::new();
                for (k, v) in coords {
                    let index: u64 = k.parse().map_err(|_| {
                        D::Error::custom(format!("coordinate index `{k}` is not an unsigned integer"))
                    })?;
                    parsed.insert(index, v);
                }
                Point::from_coords(parsed, dim).map_err(D::Error::custom)?
            }
        };
        Ok(point)
    }
}
