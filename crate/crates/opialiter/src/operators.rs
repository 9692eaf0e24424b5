//! The operator catalog: self-maps of a convex domain, built from a small
//! JSON-friendly spec language, each carrying whatever metadata is known
//! about it (Lipschitz bound, fixed points).
//!
//! The catalog deliberately mixes well-behaved maps (contractions,
//! isometries, projections, averaged maps) with two troublemakers: `scaling`
//! with factor above one expands, and `half_radial` is discontinuous at the
//! origin yet keeps the asymptotic image-distance inequality the diagnostics
//! probe for. Both are needed to exercise the negative sides of the checks.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{Status, Verdict, Witness};
use crate::domains::ConvexDomain;
use crate::error::{Error, Result};
use crate::space::{combine, Point};

#[derive(Debug, Clone)]
enum Kind {
    Identity,
    AffineScale { kappa: f64, shift: Point },
    AffineMatrix { rows: Vec<Vec<f64>>, shift: Point },
    Rotation { theta: f64 },
    Projection { domain: ConvexDomain },
    Averaged { inner: Box<Operator>, alpha: f64 },
    HalfRadial,
    Scaling { factor: f64 },
    Composed { stages: Vec<Operator> },
}

#[derive(Debug, Clone)]
pub struct Operator {
    kind: Kind,
    lipschitz: Option<f64>,
    fixed_points: Vec<Point>,
}

impl Operator {
    pub fn identity() -> Self {
        Operator { kind: Kind::Identity, lipschitz: Some(1.0), fixed_points: vec![Point::zero()] }
    }

    /// `x -> kappa*x + shift` with `kappa` in (0,1). The unique fixed point
    /// `shift/(1-kappa)` goes straight into the metadata.
    pub fn affine_scale(kappa: f64, shift: Point) -> Result<Self> {
        if !(kappa.is_finite() && 0.0 < kappa && kappa < 1.0) {
            return Err(Error::validation("scale", format!("must lie in (0,1), got {kappa}")));
        }
        let fp = shift.scale(1.0 / (1.0 - kappa));
        Ok(Operator {
            kind: Kind::AffineScale { kappa, shift },
            lipschitz: Some(kappa),
            fixed_points: vec![fp],
        })
    }

    /// `x -> A*x + shift` for a square matrix with spectral norm below one.
    pub fn affine_matrix(rows: Vec<Vec<f64>>, shift: Point) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::validation("matrix", "must be a nonempty square matrix"));
        }
        for row in &rows {
            if row.len() != d {
                return Err(Error::validation("matrix", format!("expected {d}x{d}, found a row of length {}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation("matrix", "entries must be finite"));
            }
        }
        if let Some(max) = shift.max_index() {
            if max >= d as u64 {
                return Err(Error::validation("shift", format!("index {max} out of range for a {d}x{d} matrix")));
            }
        }
        let kappa = spectral_norm(&rows);
        if !(kappa < 1.0) {
            return Err(Error::validation("matrix", format!("spectral norm ~{kappa:.6} is not below 1")));
        }
        // (I - A) is invertible here, so the fixed point solve cannot fail.
        let b = shift.to_dense(d)?;
        let mut system = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                system[i][j] = if i == j { 1.0 - rows[i][j] } else { -rows[i][j] };
            }
        }
        let fixed_points = solve_linear(system, b)
            .map(|sol| vec![Point::dense(&sol)])
            .unwrap_or_default();
        Ok(Operator { kind: Kind::AffineMatrix { rows, shift }, lipschitz: Some(kappa), fixed_points })
    }

    /// Plane rotation acting on coordinates 0 and 1; all others pass through.
    pub fn rotation(theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::validation("theta", "must be finite"));
        }
        Ok(Operator {
            kind: Kind::Rotation { theta },
            lipschitz: Some(1.0),
            fixed_points: vec![Point::zero()],
        })
    }

    pub fn projection(domain: ConvexDomain) -> Result<Self> {
        if matches!(domain, ConvexDomain::Sparse { .. }) {
            return Err(Error::validation("domain", "projection onto the sparse kind is not available"));
        }
        let mut fixed_points = vec![domain.center()];
        if let ConvexDomain::Ball { center, radius } = &domain {
            if center.dim().is_some() {
                // A boundary point, to have a second known fixed point.
                if let Ok(p) = combine(1.0, center, *radius, &Point::basis(0)) {
                    fixed_points.push(p);
                }
            }
        }
        Ok(Operator { kind: Kind::Projection { domain }, lipschitz: Some(1.0), fixed_points })
    }

    /// `x -> alpha*x + (1-alpha)*inner(x)`, the averaged relaxation of
    /// `inner`. Shares its fixed point set with `inner`.
    pub fn averaged(inner: Operator, alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
            return Err(Error::validation("alpha", format!("must lie in (0,1), got {alpha}")));
        }
        let lipschitz = inner.lipschitz.map(|l| alpha + (1.0 - alpha) * l);
        let fixed_points = inner.fixed_points.clone();
        Ok(Operator { kind: Kind::Averaged { inner: Box::new(inner), alpha }, lipschitz, fixed_points })
    }

    /// `0 -> 0`, `x -> x / (2|x|)` otherwise. Discontinuous at the origin;
    /// every nonzero image has norm one half. No global Lipschitz bound.
    pub fn half_radial() -> Self {
        Operator { kind: Kind::HalfRadial, lipschitz: None, fixed_points: vec![Point::zero()] }
    }

    pub fn scaling(factor: f64) -> Result<Self> {
        if !factor.is_finite() {
            return Err(Error::validation("factor", "must be finite"));
        }
        Ok(Operator {
            kind: Kind::Scaling { factor },
            lipschitz: Some(factor.abs()),
            fixed_points: vec![Point::zero()],
        })
    }

    /// Stages applied left to right: `composed([f, g])` is `x -> g(f(x))`.
    pub fn composed(stages: Vec<Operator>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::validation("stages", "need at least one stage"));
        }
        let lipschitz = stages.iter().try_fold(1.0, |acc, s| s.lipschitz.map(|l| acc * l));
        Ok(Operator { kind: Kind::Composed { stages }, lipschitz, fixed_points: Vec::new() })
    }

    pub fn evaluate(&self, x: &Point) -> Result<Point> {
        match &self.kind {
            Kind::Identity => Ok(x.clone()),
            Kind::AffineScale { kappa, shift } => combine(*kappa, x, 1.0, shift),
            Kind::AffineMatrix { rows, shift } => {
                let ax = apply_matrix(rows, x)?;
                combine(1.0, &ax, 1.0, shift)
            }
            Kind::Rotation { theta } => {
                let (sin, cos) = theta.sin_cos();
                let c0 = x.get(0);
                let c1 = x.get(1);
                let mut coords: BTreeMap<u64, f64> = x.coords().clone();
                coords.remove(&0);
                coords.remove(&1);
                coords.insert(0, cos * c0 - sin * c1);
                coords.insert(1, sin * c0 + cos * c1);
                Point::from_coords(coords, x.dim())
            }
            Kind::Projection { domain } => domain.project(x),
            Kind::Averaged { inner, alpha } => {
                let fx = inner.evaluate(x)?;
                combine(*alpha, x, 1.0 - alpha, &fx)
            }
            Kind::HalfRadial => {
                if x.is_zero() {
                    Ok(x.clone())
                } else {
                    Ok(x.scale(1.0 / (2.0 * x.norm())))
                }
            }
            Kind::Scaling { factor } => Ok(x.scale(*factor)),
            Kind::Composed { stages } => {
                let mut cur = x.clone();
                for s in stages {
                    cur = s.evaluate(&cur)?;
                }
                Ok(cur)
            }
        }
    }

    /// Known Lipschitz bound, if any.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn is_nonexpansive(&self) -> bool {
        self.lipschitz.is_some_and(|l| l <= 1.0)
    }

    /// Fixed points known from the construction; not necessarily exhaustive.
    pub fn known_fixed_points(&self) -> &[Point] {
        &self.fixed_points
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            Kind::Identity => "identity",
            Kind::AffineScale { .. } | Kind::AffineMatrix { .. } => "affine_contraction",
            Kind::Rotation { .. } => "rotation",
            Kind::Projection { .. } => "projection",
            Kind::Averaged { .. } => "averaged",
            Kind::HalfRadial => "half_radial",
            Kind::Scaling { .. } => "scaling",
            Kind::Composed { .. } => "composed",
        }
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            Kind::Identity => "identity".into(),
            Kind::AffineScale { kappa, .. } => format!("affine contraction, scale {kappa}"),
            Kind::AffineMatrix { rows, .. } => {
                format!("affine contraction, {0}x{0} matrix", rows.len())
            }
            Kind::Rotation { theta } => format!("plane rotation by {theta} rad"),
            Kind::Projection { domain } => format!("metric projection onto a {}", domain.kind_name()),
            Kind::Averaged { inner, alpha } => {
                format!("averaged map, alpha {alpha}, inner: {}", inner.describe())
            }
            Kind::HalfRadial => "half-radial map x -> x/(2|x|), discontinuous at 0".into(),
            Kind::Scaling { factor } => format!("scaling by {factor}"),
            Kind::Composed { stages } => format!("composition of {} stages", stages.len()),
        }
    }
}

/// JSON-facing operator description. Mirrors the constructors one to one and
/// round-trips through serde, so scenario files can be echoed back verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Identity,
    AffineContraction {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shift: Option<Point>,
    },
    Rotation { theta: f64 },
    Projection { domain: ConvexDomain },
    Averaged { alpha: f64, inner: Box<OperatorSpec> },
    HalfRadial,
    Scaling { factor: f64 },
    Composed { stages: Vec<OperatorSpec> },
}

pub fn make_operator(spec: &OperatorSpec) -> Result<Operator> {
    match spec {
        OperatorSpec::Identity => Ok(Operator::identity()),
        OperatorSpec::AffineContraction { scale, matrix, shift } => {
            let shift = shift.clone().unwrap_or_else(Point::zero);
            match (scale, matrix) {
                (Some(k), None) => Operator::affine_scale(*k, shift),
                (None, Some(rows)) => Operator::affine_matrix(rows.clone(), shift),
                _ => Err(Error::validation("scale", "give exactly one of `scale` or `matrix`")),
            }
        }
        OperatorSpec::Rotation { theta } => Operator::rotation(*theta),
        OperatorSpec::Projection { domain } => Operator::projection(domain.clone()),
        OperatorSpec::Averaged { alpha, inner } => {
            let inner = make_operator(inner)?;
            Operator::averaged(inner, *alpha)
        }
        OperatorSpec::HalfRadial => Ok(Operator::half_radial()),
        OperatorSpec::Scaling { factor } => Operator::scaling(*factor),
        OperatorSpec::Composed { stages } => {
            let stages = stages.iter().map(make_operator).collect::<Result<Vec<_>>>()?;
            Operator::composed(stages)
        }
    }
}

/// Acceptance band for the locality constraint of the probe: candidate pairs
/// `(x, y)` qualify when `|y - f(x)| <= epsilon`.
#[derive(Debug, Clone, Copy)]
pub struct EpsilonBand {
    epsilon: f64,
}

impl EpsilonBand {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::validation("epsilon", format!("must be finite and positive, got {epsilon}")));
        }
        Ok(EpsilonBand { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

const PROBE_SLACK: f64 = 1e-12;

/// Samples pairs `(x, y)` from `domain` that sit inside the band around the
/// graph of `f` and checks `|f(x) - f(y)| <= |x - y| + 1e-12` on each.
///
/// Rejection sampling is capped at `100 * samples` draws; if no pair ever
/// qualifies the verdict is `not_triggered` rather than a silent pass.
pub fn local_nonexpansiveness_probe(
    f: &Operator,
    domain: &ConvexDomain,
    band: EpsilonBand,
    samples: usize,
    seed: u64,
) -> Result<Verdict> {
    if samples == 0 {
        return Err(Error::validation("samples", "need at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = samples.saturating_mul(100);
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    let mut max_ratio: f64 = 0.0;
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    while attempts < max_attempts && accepted < samples {
        attempts += 1;
        let x = domain.sample(&mut rng)?;
        let y = domain.sample(&mut rng)?;
        let fx = f.evaluate(&x)?;
        if y.distance(&fx) > band.epsilon() {
            continue;
        }
        accepted += 1;
        let fy = f.evaluate(&y)?;
        let image_gap = fx.distance(&fy);
        let gap = x.distance(&y);
        worst_excess = worst_excess.max(image_gap - gap);
        if gap > 0.0 {
            max_ratio = max_ratio.max(image_gap / gap);
        }
    }
    let mut witnesses = vec![
        Witness::new("accepted_pairs", accepted as f64),
        Witness::new("attempts", attempts as f64),
    ];
    if accepted == 0 {
        return Ok(Verdict::new(Status::NotTriggered, PROBE_SLACK, witnesses));
    }
    witnesses.push(Witness::new("max_ratio", max_ratio));
    let status = if worst_excess <= PROBE_SLACK {
        Status::Holds
    } else {
        witnesses.push(Witness::new("worst_excess", worst_excess));
        Status::Fails
    };
    Ok(Verdict::new(status, PROBE_SLACK, witnesses))
}

/// Demo instances of every operator kind, each with a domain it maps into
/// itself; the `zoo` subcommand lists these and the test batteries sweep the
/// nonexpansive subset.
pub struct ZooEntry {
    pub name: &'static str,
    pub operator: Operator,
    pub domain: ConvexDomain,
}

pub fn zoo() -> Vec<ZooEntry> {
    let zero2 = Point::zero_dense(2);
    let unit_ball = ConvexDomain::ball(zero2.clone(), 1.0).expect("unit ball");
    let wide_ball = ConvexDomain::ball(zero2.clone(), 2.0).expect("radius-2 ball");
    vec![
        ZooEntry {
            name: "identity",
            operator: Operator::identity(),
            domain: unit_ball.clone(),
        },
        ZooEntry {
            name: "rotation-quarter",
            operator: Operator::rotation(std::f64::consts::FRAC_PI_2).expect("finite angle"),
            domain: unit_ball.clone(),
        },
        ZooEntry {
            name: "projection-unit-ball",
            operator: Operator::projection(unit_ball.clone()).expect("projectable domain"),
            domain: wide_ball.clone(),
        },
        ZooEntry {
            name: "averaged-rotation",
            operator: Operator::averaged(
                Operator::rotation(std::f64::consts::FRAC_PI_2).expect("finite angle"),
                0.5,
            )
            .expect("alpha in range"),
            domain: unit_ball.clone(),
        },
        ZooEntry {
            name: "affine-pull",
            operator: Operator::affine_scale(0.5, Point::dense(&[0.5, 0.0])).expect("scale in range"),
            domain: ConvexDomain::ball(Point::dense(&[1.0, 0.0]), 2.0).expect("ball"),
        },
        ZooEntry {
            name: "scaling-double",
            operator: Operator::scaling(2.0).expect("finite factor"),
            domain: unit_ball.clone(),
        },
        ZooEntry {
            name: "half-radial",
            operator: Operator::half_radial(),
            domain: unit_ball,
        },
    ]
}

pub fn nonexpansive_zoo() -> Vec<ZooEntry> {
    zoo().into_iter().filter(|e| e.operator.is_nonexpansive()).collect()
}

fn apply_matrix(rows: &[Vec<f64>], x: &Point) -> Result<Point> {
    let d = rows.len();
    if let Some(dim) = x.dim() {
        if dim != d {
            return Err(Error::DimensionMismatch { left: dim, right: d });
        }
    }
    let xv = x.to_dense(d)?;
    let mut out = vec![0.0; d];
    for (o, row) in out.iter_mut().zip(rows) {
        *o = row.iter().zip(&xv).map(|(a, b)| a * b).sum();
    }
    Point::from_coords(out.iter().enumerate().map(|(i, &v)| (i as u64, v)), x.dim())
}

/// Largest singular value via power iteration on `A^T A`. Deterministic
/// start; 200 rounds are far more than needed for the small matrices the
/// spec language admits.
fn spectral_norm(rows: &[Vec<f64>]) -> f64 {
    let d = rows.len();
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    for _ in 0..200 {
        let w: Vec<f64> = rows.iter().map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let mut u = vec![0.0; d];
        for (i, wi) in w.iter().enumerate() {
            for (j, uj) in u.iter_mut().enumerate() {
                *uj += rows[i][j] * wi;
            }
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return 0.0;
        }
        for (vj, uj) in v.iter_mut().zip(&u) {
            *vj = uj / n;
        }
    }
    rows.iter()
        .map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Gaussian elimination with partial pivoting; `None` on a vanishing pivot.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let acc: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - acc) / a[row][row];
    }
    Some(x)
}
