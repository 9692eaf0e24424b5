//! Iteration engines and the trace container they fill.
//!
//! Three schemes are provided. Plain successive application
//! (`x_{n+1} = f(x_n)`, [`picard_run`]), the relaxed variant
//! (`x_{n+1} = tau*x_n + (1-tau)*f(x_n)`, [`mann_run`]), and a stagewise
//! anchored scheme ([`regularized_solve`]) that contracts toward an anchor
//! `z` with a vanishing weight and records how small the fixed-point
//! residual gets at each stage.
//!
//! Engines enforce that the iteration never leaves its domain (beyond a
//! 1e-9 slack) and report precisely why they stopped. A [`Trace`] always
//! stores the image `f(x_n)` next to every point, so diagnostics downstream
//! never need the operator again.

use serde::Serialize;

use crate::diagnostics::{Status, Verdict, Witness};
use crate::domains::ConvexDomain;
use crate::error::{Error, Result};
use crate::operators::Operator;
use crate::space::{combine, Point};

/// Maximum distance an iterate may stand outside its domain.
pub const DOMAIN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// A step norm fell to or below the stop tolerance.
    Tolerance,
    /// The iteration budget ran out first.
    MaxIter,
    /// The trace was assembled from points produced elsewhere.
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scheme {
    Picard,
    Mann { tau: f64 },
    Regularized { eps0: f64, rho: f64, count: usize },
    External,
}

#[derive(Debug, Clone)]
pub struct Trace {
    points: Vec<Point>,
    images: Vec<Point>,
    scheme: Scheme,
    domain: ConvexDomain,
    declared_weak_limit: Option<Point>,
    stop_reason: StopReason,
}

impl Trace {
    /// Full-control constructor; lengths must match and be nonzero.
    pub fn assemble(
        points: Vec<Point>,
        images: Vec<Point>,
        scheme: Scheme,
        domain: ConvexDomain,
        declared_weak_limit: Option<Point>,
        stop_reason: StopReason,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        if points.len() != images.len() {
            return Err(Error::TraceFormat(format!(
                "points and images differ in length: {} vs {}",
                points.len(),
                images.len()
            )));
        }
        Ok(Trace { points, images, scheme, domain, declared_weak_limit, stop_reason })
    }

    /// A trace built from externally produced points and images (loaded from
    /// a file, or synthesized in tests).
    pub fn external(
        points: Vec<Point>,
        images: Vec<Point>,
        domain: ConvexDomain,
        declared_weak_limit: Option<Point>,
    ) -> Result<Self> {
        Trace::assemble(points, images, Scheme::External, domain, declared_weak_limit, StopReason::External)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn images(&self) -> &[Point] {
        &self.images
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn domain(&self) -> &ConvexDomain {
        &self.domain
    }

    pub fn declared_weak_limit(&self) -> Option<&Point> {
        self.declared_weak_limit.as_ref()
    }

    pub fn set_declared_weak_limit(&mut self, limit: Option<Point>) {
        self.declared_weak_limit = limit;
    }

    pub fn stop_reason(&self) -> StopReason {
        self.stop_reason
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn final_point(&self) -> &Point {
        self.points.last().expect("traces are nonempty")
    }

    pub fn final_residual(&self) -> f64 {
        let x = self.final_point();
        self.images.last().expect("traces are nonempty").distance(x)
    }
}

fn validate_budget(max_iter: usize, stop_tol: f64) -> Result<()> {
    if max_iter == 0 {
        return Err(Error::validation("max_iter", "need at least one iteration"));
    }
    if !(stop_tol.is_finite() && stop_tol >= 0.0) {
        return Err(Error::validation("stop_tol", format!("must be finite and nonnegative, got {stop_tol}")));
    }
    Ok(())
}

fn check_inside(domain: &ConvexDomain, x: &Point, step: usize) -> Result<()> {
    let distance = domain.distance_to(x);
    if distance > DOMAIN_TOL {
        return Err(Error::DomainEscape { step, distance, tol: DOMAIN_TOL });
    }
    Ok(())
}

fn iterate(
    f: &Operator,
    x0: &Point,
    domain: &ConvexDomain,
    max_iter: usize,
    stop_tol: f64,
    scheme: Scheme,
) -> Result<Trace> {
    validate_budget(max_iter, stop_tol)?;
    check_inside(domain, x0, 0)?;
    let mut points = Vec::with_capacity(max_iter + 1);
    let mut images = Vec::with_capacity(max_iter + 1);
    points.push(x0.clone());
    let mut stop_reason = StopReason::MaxIter;
    for n in 0..max_iter {
        let x = points.last().expect("points start nonempty");
        let fx = f.evaluate(x)?;
        let next = match &scheme {
            Scheme::Picard => fx.clone(),
            Scheme::Mann { tau } => combine(*tau, x, 1.0 - tau, &fx)?,
            _ => unreachable!("iterate only runs picard/mann schemes"),
        };
        check_inside(domain, &next, n + 1)?;
        let step = next.distance(x);
        images.push(fx);
        points.push(next);
        // A stop tolerance of zero disables the trigger: the run is then a
        // pure fixed-budget iteration.
        if stop_tol > 0.0 && step <= stop_tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }
    let last_image = f.evaluate(points.last().expect("nonempty"))?;
    images.push(last_image);
    Trace::assemble(points, images, scheme, domain.clone(), None, stop_reason)
}

/// Successive application of `f` starting at `x0`.
pub fn picard_run(
    f: &Operator,
    x0: &Point,
    domain: &ConvexDomain,
    max_iter: usize,
    stop_tol: f64,
) -> Result<Trace> {
    iterate(f, x0, domain, max_iter, stop_tol, Scheme::Picard)
}

/// Relaxed iteration `x_{n+1} = tau*x_n + (1-tau)*f(x_n)`, `tau` in (0,1).
/// Note the stored images stay `f(x_n)`, not the relaxed update.
pub fn mann_run(
    f: &Operator,
    tau: f64,
    x0: &Point,
    domain: &ConvexDomain,
    max_iter: usize,
    stop_tol: f64,
) -> Result<Trace> {
    if !(tau.is_finite() && 0.0 < tau && tau < 1.0) {
        return Err(Error::validation("tau", format!("must lie in (0,1), got {tau}")));
    }
    iterate(f, x0, domain, max_iter, stop_tol, Scheme::Mann { tau })
}

/// Geometric weight schedule `eps_n = eps0 * rho^n` for `n < count`, all
/// values inside (0,1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsSchedule {
    pub eps0: f64,
    pub rho: f64,
    pub count: usize,
}

impl EpsSchedule {
    pub fn geometric(eps0: f64, rho: f64, count: usize) -> Result<Self> {
        if !(eps0.is_finite() && 0.0 < eps0 && eps0 < 1.0) {
            return Err(Error::validation("eps0", format!("must lie in (0,1), got {eps0}")));
        }
        if !(rho.is_finite() && 0.0 < rho && rho <= 1.0) {
            return Err(Error::validation("rho", format!("must lie in (0,1], got {rho}")));
        }
        if count == 0 {
            return Err(Error::validation("count", "need at least one stage"));
        }
        Ok(EpsSchedule { eps0, rho, count })
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|n| self.eps0 * self.rho.powi(n as i32)).collect()
    }
}

/// Stagewise anchored iteration. For each weight `eps_n` the map
/// `x -> (1-eps_n)*f(x) + eps_n*z` is a contraction; its fixed point `xi_n`
/// is found by inner successive application, warm-started from the previous
/// stage (from `z` initially). Returns each `(xi_n, |f(xi_n) - xi_n|)` pair
/// and a verdict on whether every residual met the stage bound
/// `eps_n * diameter + 10 * inner_tol`.
pub fn regularized_solve(
    f: &Operator,
    z: &Point,
    domain: &ConvexDomain,
    schedule: EpsSchedule,
    inner_max: usize,
    inner_tol: f64,
) -> Result<(Vec<(Point, f64)>, Verdict)> {
    if inner_max == 0 {
        return Err(Error::validation("inner_max", "need at least one inner iteration"));
    }
    if !(inner_tol.is_finite() && inner_tol > 0.0) {
        return Err(Error::validation("inner_tol", format!("must be finite and positive, got {inner_tol}")));
    }
    check_inside(domain, z, 0)?;
    let d_m = domain.diameter();
    let slack = 10.0 * inner_tol;
    let mut xi = z.clone();
    let mut stages = Vec::with_capacity(schedule.count);
    let mut witnesses = Vec::new();
    let mut all_within = true;
    for (stage, eps) in schedule.values().into_iter().enumerate() {
        let mut x = xi.clone();
        let mut converged = false;
        let mut last_step = f64::INFINITY;
        for k in 0..inner_max {
            let fx = f.evaluate(&x)?;
            let next = combine(1.0 - eps, &fx, eps, z)?;
            check_inside(domain, &next, k + 1)?;
            last_step = next.distance(&x);
            x = next;
            if last_step <= inner_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence { stage, max_iter: inner_max, tol: inner_tol, last_step });
        }
        xi = x;
        let residual = f.evaluate(&xi)?.distance(&xi);
        let bound = eps * d_m + slack;
        if residual > bound {
            all_within = false;
        }
        witnesses.push(Witness::new(format!("stage{stage}_eps"), eps));
        witnesses.push(Witness::new(format!("stage{stage}_residual"), residual));
        witnesses.push(Witness::new(format!("stage{stage}_bound"), bound));
        stages.push((xi.clone(), residual));
    }
    let status = if all_within { Status::Holds } else { Status::Fails };
    Ok((stages, Verdict::new(status, slack, witnesses)))
}
