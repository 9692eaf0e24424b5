//! Tail-window convergence diagnostics.
//!
//! Everything here reads a finite prefix of an iteration and estimates
//! asymptotic quantities (liminf/limsup of distance sequences) from a tail
//! window: after `burn_in` entries are discarded as transient, the extreme
//! values over the final `window` entries stand in for the limit inferior
//! and superior. The estimates are surrogates, so every check reports an
//! explicit [`Verdict`] with the measured witnesses instead of a bare bool,
//! and a comparison that lands within the tolerance of a tie is reported as
//! `inconclusive`, never silently resolved either way.
//!
//! Checks offered, in rough order of appearance downstream:
//!
//! * [`ar_check`]: step norms vanish (asymptotic regularity).
//! * [`lambda_membership`] / [`psi_estimate`]: does `lim |x_n - z|` exist for
//!   a probe `z`, and what is it? The set of such `z` is called Lambda; the
//!   limit function is psi.
//! * [`opial_probe`]: the limit point is strictly the closest point among
//!   probes, in the liminf sense; psi attains its strict minimum there.
//! * [`sharp_check`]: image distances do not exceed point distances along a
//!   sequence, in the liminf sense (weak sequential nonexpansiveness).
//! * [`flat_check`]: if image steps asymptotically dominate point steps, the
//!   cross gap `|x_{n+1} - f(x_n)|` must exceed a fraction of the diameter.
//! * [`fejer_monitor`]: per-step distance monotonicity toward an anchor, up
//!   to a summable slack.

use serde::Serialize;

use crate::engines::Trace;
use crate::error::{Error, Result};
use crate::operators::Operator;
use crate::space::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Holds,
    Fails,
    NotTriggered,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub name: String,
    pub value: f64,
}

impl Witness {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        let name = name.into();
        assert!(value.is_finite(), "witness `{name}` must be finite, got {value}");
        Witness { name, value }
    }
}

/// Outcome of one check: a four-valued status, the scalar threshold the
/// comparison ran against, and the measured quantities backing it.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub status: Status,
    pub threshold: f64,
    pub witnesses: Vec<Witness>,
}

impl Verdict {
    pub fn new(status: Status, threshold: f64, witnesses: Vec<Witness>) -> Self {
        assert!(threshold.is_finite());
        Verdict { status, threshold, witnesses }
    }

    pub fn witness(&self, name: &str) -> Option<f64> {
        self.witnesses.iter().find(|w| w.name == name).map(|w| w.value)
    }
}

/// Tail selection: skip at least `burn_in` entries, estimate over the final
/// `window` ones. Valid for a sequence of length `len` when
/// `burn_in + window <= len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TailWindow {
    pub burn_in: usize,
    pub window: usize,
}

impl TailWindow {
    pub fn new(burn_in: usize, window: usize) -> Result<Self> {
        if window < 2 {
            return Err(Error::validation("window", format!("need at least 2 entries, got {window}")));
        }
        Ok(TailWindow { burn_in, window })
    }

    /// Half the data as burn-in, a quarter (capped at 100) as the window.
    pub fn default_for(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::InsufficientData { needed: 2, got: len });
        }
        let window = (len / 4).clamp(2, 100);
        let burn_in = (len / 2).min(len - window);
        Ok(TailWindow { burn_in, window })
    }

    pub fn check(&self, len: usize) -> Result<()> {
        if self.burn_in + self.window > len {
            return Err(Error::InsufficientData { needed: self.burn_in + self.window, got: len });
        }
        Ok(())
    }
}

impl<'de> serde::Deserialize<'de> for TailWindow {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            #[serde(default)]
            burn_in: usize,
            window: usize,
        }
        let raw = Raw::deserialize(de)?;
        TailWindow::new(raw.burn_in, raw.window).map_err(serde::de::Error::custom)
    }
}

/// (liminf, limsup) surrogates: min and max over the tail window.
pub fn tail_bounds(seq: &[f64], w: TailWindow) -> Result<(f64, f64)> {
    w.check(seq.len())?;
    let tail = &seq[seq.len() - w.window..];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in tail {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Mean over the tail window; the scalar estimate behind [`psi_estimate`].
fn tail_mean(seq: &[f64], w: TailWindow) -> Result<f64> {
    w.check(seq.len())?;
    let tail = &seq[seq.len() - w.window..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Step norms `|x_{n+1} - x_n|`.
pub fn ar_profile(points: &[Point]) -> Result<Vec<f64>> {
    if points.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: points.len() });
    }
    Ok(points.windows(2).map(|p| p[1].distance(&p[0])).collect())
}

/// Residual norms `|f(x_n) - x_n|` along a trace.
pub fn residual_profile(trace: &Trace) -> Vec<f64> {
    trace
        .points()
        .iter()
        .zip(trace.images())
        .map(|(x, fx)| fx.distance(x))
        .collect()
}

/// Does the tail of `seq` sit below `tol`? Shared by the asymptotic
/// regularity check and the residual check.
pub fn tail_decay_check(seq: &[f64], w: TailWindow, tol: f64) -> Result<Verdict> {
    let (lo, hi) = tail_bounds(seq, w)?;
    let status = if hi <= tol { Status::Holds } else { Status::Fails };
    Ok(Verdict::new(
        status,
        tol,
        vec![
            Witness::new("tail_lo", lo),
            Witness::new("tail_hi", hi),
            Witness::new("last", *seq.last().expect("nonempty by tail_bounds")),
        ],
    ))
}

/// Asymptotic regularity: step norms vanish along the tail.
pub fn ar_check(points: &[Point], w: TailWindow, tol: f64) -> Result<Verdict> {
    tail_decay_check(&ar_profile(points)?, w, tol)
}

/// Membership of `z` in Lambda: `|x_n - z|` settles, i.e. the tail variation
/// (limsup minus liminf of the distance sequence) stays within `tol`.
pub fn lambda_membership(points: &[Point], z: &Point, w: TailWindow, tol: f64) -> Result<Verdict> {
    let dists: Vec<f64> = points.iter().map(|p| p.distance(z)).collect();
    let (lo, hi) = tail_bounds(&dists, w)?;
    let variation = hi - lo;
    let status = if variation <= tol { Status::Holds } else { Status::Fails };
    Ok(Verdict::new(
        status,
        tol,
        vec![
            Witness::new("tail_lo", lo),
            Witness::new("tail_hi", hi),
            Witness::new("variation", variation),
        ],
    ))
}

/// Estimate of `psi(z) = lim |x_n - z|`. Refuses (with a dedicated error)
/// when the tail variation says `z` is not in Lambda at `lambda_tol`.
pub fn psi_estimate(points: &[Point], z: &Point, w: TailWindow, lambda_tol: f64) -> Result<f64> {
    let dists: Vec<f64> = points.iter().map(|p| p.distance(z)).collect();
    let (lo, hi) = tail_bounds(&dists, w)?;
    if hi - lo > lambda_tol {
        return Err(Error::NotInLambda { variation: hi - lo, tol: lambda_tol });
    }
    tail_mean(&dists, w)
}

/// Classify `gap` against a symmetric tie band of width `margin`:
/// clearly positive, clearly negative, or too close to call.
fn classify_gap(gap: f64, margin: f64) -> Status {
    if gap >= margin {
        Status::Holds
    } else if gap <= -margin {
        Status::Fails
    } else {
        Status::Inconclusive
    }
}

/// Combines statuses of subchecks: any failure wins, then any tie.
pub fn fold_status(acc: Status, next: Status) -> Status {
    use Status::*;
    match (acc, next) {
        (Fails, _) | (_, Fails) => Fails,
        (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
        (NotTriggered, other) | (other, NotTriggered) => other,
        _ => Holds,
    }
}

/// The characteristic inequality of a weak limit: among the probes, none may
/// come asymptotically closer to the iterates than `w_limit` itself.
///
/// Per probe `z` distinct from the limit, requires
/// `liminf |x_n - w_limit| < liminf |x_n - z|` with a strict margin. Probes
/// whose distance sequence settles (members of Lambda) additionally have
/// their psi value compared to psi at the limit, which must stay minimal.
pub fn opial_probe(
    points: &[Point],
    w_limit: &Point,
    probes: &[Point],
    w: TailWindow,
    margin: f64,
    lambda_tol: f64,
) -> Result<Verdict> {
    let base: Vec<f64> = points.iter().map(|p| p.distance(w_limit)).collect();
    let (base_lo, base_hi) = tail_bounds(&base, w)?;
    let mut witnesses = vec![Witness::new("limit_liminf", base_lo)];
    let base_settles = base_hi - base_lo <= lambda_tol;
    let base_psi = if base_settles { Some(tail_mean(&base, w)?) } else { None };

    let mut status: Option<Status> = None;
    for (k, z) in probes.iter().enumerate() {
        if z.distance(w_limit) == 0.0 {
            witnesses.push(Witness::new(format!("probe{k}_skipped"), 1.0));
            continue;
        }
        let dz: Vec<f64> = points.iter().map(|p| p.distance(z)).collect();
        let (z_lo, z_hi) = tail_bounds(&dz, w)?;
        witnesses.push(Witness::new(format!("probe{k}_liminf"), z_lo));
        let mut verdict = classify_gap(z_lo - base_lo, margin);
        if z_hi - z_lo <= lambda_tol {
            if let Some(psi_w) = base_psi {
                let psi_z = tail_mean(&dz, w)?;
                witnesses.push(Witness::new(format!("probe{k}_psi"), psi_z));
                verdict = fold_status(verdict, classify_gap(psi_z - psi_w, margin));
            }
        }
        status = Some(match status {
            Some(acc) => fold_status(acc, verdict),
            None => verdict,
        });
    }
    let status = status.unwrap_or(Status::NotTriggered);
    Ok(Verdict::new(status, margin, witnesses))
}

/// Weak sequential nonexpansiveness along a concrete sequence: the images
/// may not drift further apart than the points, in the liminf sense. This is
/// the inequality the half-radial map satisfies despite its discontinuity.
pub fn sharp_check(
    f: &Operator,
    y_seq: &[Point],
    y: &Point,
    w: TailWindow,
    tol: f64,
) -> Result<Verdict> {
    let fy = f.evaluate(y)?;
    let mut image_d = Vec::with_capacity(y_seq.len());
    let mut base_d = Vec::with_capacity(y_seq.len());
    for p in y_seq {
        image_d.push(f.evaluate(p)?.distance(&fy));
        base_d.push(p.distance(y));
    }
    let (image_lo, _) = tail_bounds(&image_d, w)?;
    let (base_lo, _) = tail_bounds(&base_d, w)?;
    let status = if image_lo <= base_lo + tol { Status::Holds } else { Status::Fails };
    Ok(Verdict::new(
        status,
        tol,
        vec![
            Witness::new("image_liminf", image_lo),
            Witness::new("point_liminf", base_lo),
        ],
    ))
}

/// Premise-guarded divergence check. Along a trace, let
///
/// * `A = limsup |x_{n+1} - x_n|`
/// * `B = limsup |f(x_{n+1}) - f(x_n)|`
/// * `C = limsup |x_{n+1} - f(x_n)|`
///
/// (all tail estimates). When the premise `0 < A < B` is met beyond the tie
/// tolerance, the map under test must push the cross gap `C` above
/// `delta * d_m`; otherwise the verdict is `not_triggered`. Nonexpansive
/// maps can never meet the premise, since they force `B <= A`.
pub fn flat_check(trace: &Trace, delta: f64, d_m: f64, w: TailWindow, tol: f64) -> Result<Verdict> {
    if !(delta.is_finite() && 0.0 < delta && delta < 1.0) {
        return Err(Error::validation("delta", format!("must lie in (0,1), got {delta}")));
    }
    if !(d_m.is_finite() && d_m > 0.0) {
        return Err(Error::validation("d_m", format!("must be finite and positive, got {d_m}")));
    }
    let points = trace.points();
    let images = trace.images();
    if points.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: points.len() });
    }
    let mut a = Vec::with_capacity(points.len() - 1);
    let mut b = Vec::with_capacity(points.len() - 1);
    let mut c = Vec::with_capacity(points.len() - 1);
    for n in 0..points.len() - 1 {
        a.push(points[n + 1].distance(&points[n]));
        b.push(images[n + 1].distance(&images[n]));
        c.push(points[n + 1].distance(&images[n]));
    }
    let (_, a_hi) = tail_bounds(&a, w)?;
    let (_, b_hi) = tail_bounds(&b, w)?;
    let (_, c_hi) = tail_bounds(&c, w)?;
    let threshold = delta * d_m;
    let witnesses = vec![
        Witness::new("step_limsup", a_hi),
        Witness::new("image_step_limsup", b_hi),
        Witness::new("cross_limsup", c_hi),
    ];
    let premise = a_hi > tol && b_hi > a_hi + tol;
    let status = if premise { classify_gap(c_hi - threshold, tol) } else { Status::NotTriggered };
    Ok(Verdict::new(status, threshold, witnesses))
}

/// Quasi-Fejer monotonicity toward `y`: every step may increase the distance
/// to `y` by at most `eta_n` plus the tie tolerance. `eta` entries beyond the
/// given list count as zero.
pub fn fejer_monitor(points: &[Point], y: &Point, eta: &[f64], tol: f64) -> Result<Verdict> {
    if points.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: points.len() });
    }
    for (n, e) in eta.iter().enumerate() {
        if !(e.is_finite() && *e >= 0.0) {
            return Err(Error::validation("eta", format!("entry {n} must be finite and nonnegative, got {e}")));
        }
    }
    let dists: Vec<f64> = points.iter().map(|p| p.distance(y)).collect();
    let mut max_excess = f64::NEG_INFINITY;
    let mut first_violation: Option<usize> = None;
    for n in 0..dists.len() - 1 {
        let slack = eta.get(n).copied().unwrap_or(0.0);
        let excess = dists[n + 1] - dists[n] - slack;
        max_excess = max_excess.max(excess);
        if excess > tol && first_violation.is_none() {
            first_violation = Some(n);
        }
    }
    let mut witnesses = vec![
        Witness::new("sum_eta", eta.iter().sum()),
        Witness::new("max_excess", max_excess),
    ];
    let status = match first_violation {
        Some(n) => {
            witnesses.push(Witness::new("first_violation_step", n as f64));
            Status::Fails
        }
        None => Status::Holds,
    };
    Ok(Verdict::new(status, tol, witnesses))
}

/// Sanity screen for a declared limit before the probes trust it: iterate
/// norms must stay bounded and, on every coordinate in `coords`, the
/// iterates must approach the declared value along the tail.
pub fn weak_limit_plausibility(
    points: &[Point],
    limit: &Point,
    coords: &[u64],
    w: TailWindow,
    coord_tol: f64,
) -> Result<Verdict> {
    let max_norm = points.iter().map(Point::norm).fold(0.0, f64::max);
    let mut witnesses = vec![Witness::new("max_norm", max_norm)];
    let mut status = Status::Holds;
    if !max_norm.is_finite() {
        status = Status::Fails;
    }
    for &i in coords {
        let devs: Vec<f64> = points.iter().map(|p| (p.get(i) - limit.get(i)).abs()).collect();
        let (_, hi) = tail_bounds(&devs, w)?;
        witnesses.push(Witness::new(format!("coord{i}_tail_dev"), hi));
        if hi > coord_tol {
            status = Status::Fails;
        }
    }
    Ok(Verdict::new(status, coord_tol, witnesses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::ConvexDomain;
    use crate::engines::Trace;
    use approx::assert_abs_diff_eq;

    fn w(burn_in: usize, window: usize) -> TailWindow {
        TailWindow::new(burn_in, window).unwrap()
    }

    #[test]
    fn tail_bounds_of_an_oscillation() {
        let seq: Vec<f64> = (0..100).map(|n| if n % 2 == 0 { 0.5 } else { 1.5 }).collect();
        let (lo, hi) = tail_bounds(&seq, w(50, 25)).unwrap();
        assert_eq!((lo, hi), (0.5, 1.5));
    }

    #[test]
    fn tail_bounds_of_constant_and_decaying_sequences() {
        let constant = vec![1.0; 40];
        assert_eq!(tail_bounds(&constant, w(10, 10)).unwrap(), (1.0, 1.0));

        let decay: Vec<f64> = (0..100).map(|n| 2.0_f64.powi(-n)).collect();
        let (lo, hi) = tail_bounds(&decay, w(50, 20)).unwrap();
        assert_eq!(hi, 2.0_f64.powi(-80));
        assert_eq!(lo, 2.0_f64.powi(-99));
    }

    #[test]
    fn tail_bounds_demand_enough_data() {
        let seq = vec![1.0; 10];
        match tail_bounds(&seq, w(8, 4)) {
            Err(Error::InsufficientData { needed: 12, got: 10 }) => {}
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn default_window_profiles() {
        let w = TailWindow::default_for(200).unwrap();
        assert_eq!((w.burn_in, w.window), (100, 50));
        let w = TailWindow::default_for(10_001).unwrap();
        assert_eq!((w.burn_in, w.window), (5000, 100));
        let w = TailWindow::default_for(3).unwrap();
        assert_eq!((w.burn_in, w.window), (1, 2));
        assert!(TailWindow::default_for(1).is_err());
    }

    fn geometric_points(n: usize) -> Vec<Point> {
        (0..n).map(|k| Point::dense(&[2.0_f64.powi(-(k as i32)), 0.0])).collect()
    }

    #[test]
    fn ar_check_on_converging_and_stalling_sequences() {
        let pts = geometric_points(120);
        let v = ar_check(&pts, TailWindow::default_for(119).unwrap(), 1e-8).unwrap();
        assert_eq!(v.status, Status::Holds);

        // Unit-norm jumps forever: e_1, e_2, e_1, e_2, ...
        let jumps: Vec<Point> =
            (0..60).map(|n| Point::basis(if n % 2 == 0 { 1 } else { 2 })).collect();
        let v = ar_check(&jumps, TailWindow::default_for(59).unwrap(), 1e-8).unwrap();
        assert_eq!(v.status, Status::Fails);
        assert_abs_diff_eq!(v.witness("tail_hi").unwrap(), 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    /// Norm oscillation without any convergent distance sequence: x_n is e_n
    /// doubled on odd indices. No probe settles, not even the origin.
    fn alternating_basis_walk(n: usize) -> Vec<Point> {
        (1..=n as u64)
            .map(|k| if k % 2 == 0 { Point::basis(k) } else { Point::basis(k).scale(2.0) })
            .collect()
    }

    #[test]
    fn lambda_is_empty_for_the_alternating_basis_walk() {
        let pts = alternating_basis_walk(200);
        let w = TailWindow::default_for(200).unwrap();
        for z in [Point::zero(), Point::basis(1), combine_basis(1, 2)] {
            let v = lambda_membership(&pts, &z, w, 1e-9).unwrap();
            assert_eq!(v.status, Status::Fails, "probe {z:?} should not settle");
        }
        // The witnesses for the origin show the 1 <-> 2 norm oscillation.
        let v = lambda_membership(&pts, &Point::zero(), w, 1e-9).unwrap();
        assert_eq!(v.witness("tail_lo"), Some(1.0));
        assert_eq!(v.witness("tail_hi"), Some(2.0));
    }

    fn combine_basis(i: u64, j: u64) -> Point {
        crate::space::combine(1.0, &Point::basis(i), 1.0, &Point::basis(j)).unwrap()
    }

    #[test]
    fn lambda_membership_for_a_convergent_sequence() {
        let pts = geometric_points(200);
        let w = TailWindow::default_for(200).unwrap();
        let v = lambda_membership(&pts, &Point::dense(&[5.0, 0.0]), w, 1e-9).unwrap();
        assert_eq!(v.status, Status::Holds);
        let psi = psi_estimate(&pts, &Point::dense(&[5.0, 0.0]), w, 1e-9).unwrap();
        assert_abs_diff_eq!(psi, 5.0, epsilon = 1e-6);
    }

    #[test]
    fn psi_refuses_outside_lambda() {
        let pts = alternating_basis_walk(200);
        let w = TailWindow::default_for(200).unwrap();
        match psi_estimate(&pts, &Point::zero(), w, 1e-9) {
            Err(Error::NotInLambda { variation, .. }) => {
                assert_abs_diff_eq!(variation, 1.0, epsilon = 1e-12)
            }
            other => panic!("expected NotInLambda, got {other:?}"),
        }
    }

    /// Two accumulation points: e_n on even indices, e_1 on odd ones. The
    /// origin keeps distance one forever (it is in Lambda); e_1 sees the
    /// distances jump between 0 and sqrt(2) (it is not).
    #[test]
    fn two_accumulation_points_split_lambda() {
        let pts: Vec<Point> = (1..=200u64)
            .map(|n| if n % 2 == 0 { Point::basis(n) } else { Point::basis(1) })
            .collect();
        let w = TailWindow::default_for(200).unwrap();

        let at_origin = lambda_membership(&pts, &Point::zero(), w, 1e-9).unwrap();
        assert_eq!(at_origin.status, Status::Holds);
        assert_eq!(at_origin.witness("variation"), Some(0.0));

        let at_e1 = lambda_membership(&pts, &Point::basis(1), w, 1e-9).unwrap();
        assert_eq!(at_e1.status, Status::Fails);
        assert_eq!(at_e1.witness("tail_lo"), Some(0.0));
        assert_abs_diff_eq!(at_e1.witness("tail_hi").unwrap(), 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn opial_probe_prefers_the_true_limit() {
        let pts = geometric_points(200);
        let w = TailWindow::default_for(200).unwrap();
        let limit = Point::zero_dense(2);
        let probes = vec![Point::dense(&[5.0, 0.0]), Point::dense(&[0.0, 0.5])];
        let v = opial_probe(&pts, &limit, &probes, w, 1e-9, 1e-9).unwrap();
        assert_eq!(v.status, Status::Holds);
        assert_abs_diff_eq!(v.witness("probe0_liminf").unwrap(), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn opial_probe_on_the_weakly_vanishing_basis_walk() {
        // x_n = e_n converges weakly to 0: distances to 0 are all one,
        // distances to e_1 settle at sqrt(2). The origin wins.
        let pts: Vec<Point> = (1..=200u64).map(Point::basis).collect();
        let w = TailWindow::default_for(200).unwrap();
        let v = opial_probe(&pts, &Point::zero(), &[Point::basis(1)], w, 1e-9, 1e-9).unwrap();
        assert_eq!(v.status, Status::Holds);
        assert_eq!(v.witness("limit_liminf"), Some(1.0));
        assert_abs_diff_eq!(v.witness("probe0_liminf").unwrap(), 2.0_f64.sqrt(), epsilon = 1e-12);
        // e_1 is in Lambda here, so its psi value was compared too.
        assert!(v.witness("probe0_psi").is_some());
    }

    #[test]
    fn opial_probe_skips_probes_equal_to_the_limit() {
        let pts = geometric_points(100);
        let w = TailWindow::default_for(100).unwrap();
        let limit = Point::zero_dense(2);
        let v = opial_probe(&pts, &limit, &[Point::zero()], w, 1e-9, 1e-9).unwrap();
        assert_eq!(v.status, Status::NotTriggered);
        assert_eq!(v.witness("probe0_skipped"), Some(1.0));
    }

    #[test]
    fn sharp_check_accepts_the_half_radial_map() {
        let f = Operator::half_radial();
        let seq: Vec<Point> = (1..=200u64).map(Point::basis).collect();
        let w = TailWindow::default_for(200).unwrap();
        let v = sharp_check(&f, &seq, &Point::zero(), w, 1e-9).unwrap();
        assert_eq!(v.status, Status::Holds);
        assert_eq!(v.witness("image_liminf"), Some(0.5));
        assert_eq!(v.witness("point_liminf"), Some(1.0));
    }

    #[test]
    fn sharp_check_rejects_doubling() {
        let f = Operator::scaling(2.0).unwrap();
        let seq: Vec<Point> = (1..=200u64).map(Point::basis).collect();
        let w = TailWindow::default_for(200).unwrap();
        let v = sharp_check(&f, &seq, &Point::zero(), w, 1e-9).unwrap();
        assert_eq!(v.status, Status::Fails);
        assert_eq!(v.witness("image_liminf"), Some(2.0));
    }

    fn synthetic_trace(points: Vec<Point>, f: &Operator) -> Trace {
        let images = points.iter().map(|p| f.evaluate(p).unwrap()).collect();
        let domain = ConvexDomain::ball(Point::zero_dense(2), 1e6).unwrap();
        Trace::external(points, images, domain, None).unwrap()
    }

    #[test]
    fn flat_check_triggers_on_an_expanding_oscillation() {
        // x_n alternates +/- e_1 / 2 under doubling. By direct enumeration
        // the three tail estimates are A = 1, B = 2, C = 1.5.
        let f = Operator::scaling(2.0).unwrap();
        let pts: Vec<Point> = (0..100)
            .map(|n| Point::dense(&[if n % 2 == 0 { 0.5 } else { -0.5 }, 0.0]))
            .collect();
        let t = synthetic_trace(pts, &f);
        let w = TailWindow::default_for(99).unwrap();

        let v = flat_check(&t, 0.5, 2.0, w, 1e-12).unwrap();
        assert_eq!(v.status, Status::Holds);
        assert_eq!(v.witness("step_limsup"), Some(1.0));
        assert_eq!(v.witness("image_step_limsup"), Some(2.0));
        assert_eq!(v.witness("cross_limsup"), Some(1.5));

        // With delta = 0.9 the required gap is 1.8 > 1.5: same premise, but
        // the conclusion now fails.
        let v = flat_check(&t, 0.9, 2.0, w, 1e-12).unwrap();
        assert_eq!(v.status, Status::Fails);
    }

    #[test]
    fn flat_check_stays_untriggered_for_isometries_and_constants() {
        let rot = Operator::rotation(std::f64::consts::FRAC_PI_2).unwrap();
        let pts: Vec<Point> = (0..100)
            .map(|n| {
                let phi = n as f64 * std::f64::consts::FRAC_PI_2;
                Point::dense(&[phi.cos(), phi.sin()])
            })
            .collect();
        let t = synthetic_trace(pts, &rot);
        let w = TailWindow::default_for(99).unwrap();
        let v = flat_check(&t, 0.5, 2.0, w, 1e-12).unwrap();
        assert_eq!(v.status, Status::NotTriggered);

        let ident = Operator::identity();
        let constant: Vec<Point> = (0..50).map(|_| Point::dense(&[0.25, 0.0])).collect();
        let t = synthetic_trace(constant, &ident);
        let v = flat_check(&t, 0.5, 2.0, TailWindow::default_for(49).unwrap(), 1e-12).unwrap();
        assert_eq!(v.status, Status::NotTriggered);
        assert_eq!(v.witness("step_limsup"), Some(0.0));
    }

    #[test]
    fn fejer_monitor_judges_distance_monotonicity() {
        let toward: Vec<Point> = geometric_points(100);
        let v = fejer_monitor(&toward, &Point::zero_dense(2), &[], 1e-12).unwrap();
        assert_eq!(v.status, Status::Holds);

        let away: Vec<Point> = (0..10).map(|n| Point::dense(&[n as f64, 0.0])).collect();
        let v = fejer_monitor(&away, &Point::zero_dense(2), &[], 1e-12).unwrap();
        assert_eq!(v.status, Status::Fails);
        assert_eq!(v.witness("first_violation_step"), Some(0.0));

        // A generous summable slack turns the same drift into a pass.
        let eta = vec![1.5; 9];
        let v = fejer_monitor(&away, &Point::zero_dense(2), &eta, 1e-12).unwrap();
        assert_eq!(v.status, Status::Holds);

        assert!(fejer_monitor(&away, &Point::zero(), &[-0.1], 1e-12).is_err());
    }

    #[test]
    fn plausibility_screen_for_declared_limits() {
        let pts = geometric_points(200);
        let w = TailWindow::default_for(200).unwrap();
        let good = weak_limit_plausibility(&pts, &Point::zero_dense(2), &[0, 1], w, 1e-6).unwrap();
        assert_eq!(good.status, Status::Holds);

        // Declaring e_1 as the limit of e_n contradicts coordinate 1.
        let walk: Vec<Point> = (1..=200u64).map(Point::basis).collect();
        let bad = weak_limit_plausibility(&walk, &Point::basis(1), &[1], w, 1e-6).unwrap();
        assert_eq!(bad.status, Status::Fails);

        // The same walk against the zero limit is coordinatewise fine.
        let ok = weak_limit_plausibility(&walk, &Point::zero(), &[1, 2, 3], w, 1e-6).unwrap();
        assert_eq!(ok.status, Status::Holds);
    }
}
