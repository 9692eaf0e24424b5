//! Scenario files and run orchestration.
//!
//! A scenario is a JSON document that fixes everything a run needs: the
//! ambient mode (dense `R^d` or the sparse sequence space), a domain, an
//! operator, an iteration scheme with its budget, and the checks to run on
//! the resulting trace. Runs are deterministic: the same scenario with the
//! same seed produces byte-identical trace and report files.
//!
//! The `OPIALITER_SEED` environment variable, when set, overrides the seed
//! recorded in the scenario file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    ar_check, ar_profile, fejer_monitor, flat_check, fold_status, lambda_membership, opial_probe,
    residual_profile, sharp_check, tail_decay_check, weak_limit_plausibility, Status, TailWindow,
    Verdict, Witness,
};
use crate::domains::ConvexDomain;
use crate::engines::{
    mann_run, picard_run, regularized_solve, EpsSchedule, Scheme, StopReason, Trace, DOMAIN_TOL,
};
use crate::error::{Error, Result};
use crate::operators::{
    local_nonexpansiveness_probe, make_operator, EpsilonBand, Operator, OperatorSpec,
};
use crate::space::Point;

pub const SEED_ENV: &str = "OPIALITER_SEED";

/// Seed precedence: environment variable over scenario file.
pub fn effective_seed(fallback: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(text) => text
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::validation(SEED_ENV, format!("expected an unsigned integer, got `{text}`"))),
        Err(std::env::VarError::NotPresent) => Ok(fallback),
        Err(e) => Err(Error::validation(SEED_ENV, e.to_string())),
    }
}

/// Ambient mode: `dense` fixes a coordinate dimension and exports traces as
/// CSV; `sparse` works with arbitrary basis indices and exports JSONL.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Dense(usize),
    Sparse,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeSpec {
    Picard,
    Mann {
        tau: f64,
    },
    /// Stagewise anchored iteration. `max_iter` bounds the inner loop per
    /// stage and `stop_tol` is the inner step tolerance (must be positive).
    /// The anchor defaults to the domain center.
    Regularized {
        eps0: f64,
        rho: f64,
        count: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<Point>,
    },
}

/// Check tolerances. `ar` bounds tail step and residual norms, `lambda`
/// bounds the tail variation of distance sequences, `opial` and `margin` are
/// the tie bandwidths of the strict-inequality comparisons.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ar: f64,
    pub lambda: f64,
    pub opial: f64,
    pub margin: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { ar: 1e-8, lambda: 1e-9, opial: 1e-9, margin: 1e-9 }
    }
}

impl Tolerances {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tolerances.ar", self.ar),
            ("tolerances.lambda", self.lambda),
            ("tolerances.opial", self.opial),
            ("tolerances.margin", self.margin),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(name, format!("must be finite and positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A check request: either a bare name (`"ar"`) or an object with knobs
/// (`{"check": "flat", "delta": 0.25}`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckSpec {
    Name(String),
    Detailed(DetailedCheck),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetailedCheck {
    /// Tail step norms fall below the `ar` tolerance.
    Ar,
    /// Tail residual norms `|f(x_n) - x_n|` fall below the `ar` tolerance.
    Residual,
    /// Every probe's distance sequence settles (tail variation within the
    /// `lambda` tolerance).
    Lambda,
    /// No probe comes asymptotically closer to the iterates than the limit.
    Opial,
    /// Distances to the anchor(s) never increase by more than `eta_n`.
    /// Anchors default to the operator's known fixed points.
    Fejer {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y: Option<Point>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta0: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta_rho: Option<f64>,
    },
    /// When image steps strictly dominate point steps, the cross gap
    /// `|x_{n+1} - f(x_n)|` must exceed `delta` times the domain diameter.
    Flat {
        #[serde(default = "default_delta")]
        delta: f64,
    },
    /// Images may not drift farther from the limit's image than the points
    /// are from the limit, in the liminf sense.
    Sharp,
    /// Sampled nonexpansiveness near the graph of the operator.
    LocalNe {
        #[serde(default = "default_probe_epsilon")]
        epsilon: f64,
        #[serde(default = "default_probe_samples")]
        samples: usize,
    },
}

fn default_delta() -> f64 {
    0.5
}

fn default_probe_epsilon() -> f64 {
    0.05
}

fn default_probe_samples() -> usize {
    200
}

pub const CHECK_NAMES: [&str; 8] =
    ["ar", "residual", "lambda", "opial", "fejer", "flat", "sharp", "local_ne"];

impl DetailedCheck {
    pub fn name(&self) -> &'static str {
        match self {
            DetailedCheck::Ar => "ar",
            DetailedCheck::Residual => "residual",
            DetailedCheck::Lambda => "lambda",
            DetailedCheck::Opial => "opial",
            DetailedCheck::Fejer { .. } => "fejer",
            DetailedCheck::Flat { .. } => "flat",
            DetailedCheck::Sharp => "sharp",
            DetailedCheck::LocalNe { .. } => "local_ne",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "ar" => DetailedCheck::Ar,
            "residual" => DetailedCheck::Residual,
            "lambda" => DetailedCheck::Lambda,
            "opial" => DetailedCheck::Opial,
            "fejer" => DetailedCheck::Fejer { y: None, eta0: None, eta_rho: None },
            "flat" => DetailedCheck::Flat { delta: default_delta() },
            "sharp" => DetailedCheck::Sharp,
            "local_ne" => DetailedCheck::LocalNe {
                epsilon: default_probe_epsilon(),
                samples: default_probe_samples(),
            },
            other => {
                return Err(Error::validation(
                    "check",
                    format!("unknown check `{other}`; valid names: {}", CHECK_NAMES.join(", ")),
                ))
            }
        })
    }
}

impl CheckSpec {
    pub fn resolve(&self) -> Result<DetailedCheck> {
        match self {
            CheckSpec::Name(name) => DetailedCheck::from_name(name),
            CheckSpec::Detailed(d) => Ok(d.clone()),
        }
    }
}

pub fn default_checks() -> Vec<DetailedCheck> {
    vec![DetailedCheck::Ar, DetailedCheck::Residual, DetailedCheck::Lambda, DetailedCheck::Opial]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mode: Mode,
    pub domain: ConvexDomain,
    pub operator: OperatorSpec,
    pub scheme: SchemeSpec,
    pub x0: Point,
    pub max_iter: usize,
    #[serde(default)]
    pub stop_tol: f64,
    #[serde(default)]
    pub probes: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_weak_limit: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<TailWindow>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<CheckSpec>>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut sc: Scenario =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("scenario: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("scenarios serialize");
        out.push('\n');
        out
    }

    /// Cross-field validation and normalization. Dense mode stamps its
    /// dimension onto every point so bound errors surface here, with field
    /// names, rather than deep inside a run.
    pub fn validate(&mut self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::validation("max_iter", "must be at least 1"));
        }
        if !(self.stop_tol.is_finite() && self.stop_tol >= 0.0) {
            return Err(Error::validation(
                "stop_tol",
                format!("must be finite and nonnegative, got {}", self.stop_tol),
            ));
        }
        self.tolerances.validate()?;
        if let Some(w) = &self.window {
            // Reject windows that cannot fit even the full trace.
            if w.burn_in + w.window > self.max_iter + 1 {
                return Err(Error::validation(
                    "window",
                    format!(
                        "burn_in {} + window {} exceeds the longest possible trace ({})",
                        w.burn_in,
                        w.window,
                        self.max_iter + 1
                    ),
                ));
            }
        }

        match self.mode {
            Mode::Dense(dim) => {
                if dim == 0 {
                    return Err(Error::validation("mode", "dense dimension must be at least 1"));
                }
                if let Some(ad) = self.domain.ambient_dim() {
                    if ad != dim {
                        return Err(Error::validation(
                            "domain",
                            format!("domain dimension {ad} does not match dense mode dimension {dim}"),
                        ));
                    }
                }
                let stamp = |field: &str, p: &Point| -> Result<Point> {
                    p.with_dim(dim).map_err(|e| Error::validation(field, e.to_string()))
                };
                self.x0 = stamp("x0", &self.x0)?;
                for k in 0..self.probes.len() {
                    self.probes[k] = stamp(&format!("probes[{k}]"), &self.probes[k])?;
                }
                if let Some(l) = &self.declared_weak_limit {
                    self.declared_weak_limit = Some(stamp("declared_weak_limit", l)?);
                }
                if let SchemeSpec::Regularized { anchor: Some(a), .. } = &self.scheme {
                    let stamped = stamp("anchor", a)?;
                    if let SchemeSpec::Regularized { anchor, .. } = &mut self.scheme {
                        *anchor = Some(stamped);
                    }
                }
            }
            Mode::Sparse => {
                if self.domain.ambient_dim().is_some() {
                    return Err(Error::validation(
                        "domain",
                        "sparse mode needs a domain without a fixed ambient dimension",
                    ));
                }
            }
        }

        match &self.scheme {
            SchemeSpec::Picard => {}
            SchemeSpec::Mann { tau } => {
                if !(tau.is_finite() && 0.0 < *tau && *tau < 1.0) {
                    return Err(Error::validation("tau", format!("must lie in (0,1), got {tau}")));
                }
            }
            SchemeSpec::Regularized { eps0, rho, count, anchor } => {
                EpsSchedule::geometric(*eps0, *rho, *count)?;
                if *count < 2 {
                    return Err(Error::validation(
                        "count",
                        "need at least two stages to form a checkable trace",
                    ));
                }
                if self.stop_tol <= 0.0 {
                    return Err(Error::validation(
                        "stop_tol",
                        "anchored runs use stop_tol as the inner step tolerance; it must be positive",
                    ));
                }
                if let Some(z) = anchor {
                    if !self.domain.contains(z, DOMAIN_TOL) {
                        return Err(Error::validation(
                            "anchor",
                            format!("lies outside the domain by {:.3e}", self.domain.distance_to(z)),
                        ));
                    }
                }
            }
        }

        if !self.domain.contains(&self.x0, DOMAIN_TOL) {
            return Err(Error::validation(
                "x0",
                format!("lies outside the domain by {:.3e}", self.domain.distance_to(&self.x0)),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub status: Status,
    pub threshold: f64,
    pub window: TailWindow,
    pub witnesses: Vec<Witness>,
}

impl CheckReport {
    fn from_verdict(check: &str, w: TailWindow, v: Verdict) -> Self {
        CheckReport {
            check: check.to_string(),
            status: v.status,
            threshold: v.threshold,
            window: w,
            witnesses: v.witnesses,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceSummary {
    pub length: usize,
    pub stop_reason: StopReason,
    pub final_residual: f64,
}

impl TraceSummary {
    fn of(trace: &Trace) -> Self {
        TraceSummary {
            length: trace.len(),
            stop_reason: trace.stop_reason(),
            final_residual: trace.final_residual(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Artifacts {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub trace: TraceSummary,
    pub verdicts: Vec<CheckReport>,
    pub artifacts: Artifacts,
}

/// Exit code 1 when any check failed or tied; 0 when everything holds or
/// stayed untriggered.
pub fn report_exit_code(report: &RunReport) -> u8 {
    let bad = report
        .verdicts
        .iter()
        .any(|v| matches!(v.status, Status::Fails | Status::Inconclusive));
    u8::from(bad)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub plot_data: bool,
}

/// Runs a validated scenario: engine, checks, artifacts.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport> {
    let mut sc = scenario.clone();
    sc.validate()?;
    let f = make_operator(&sc.operator)?;
    let seed = effective_seed(sc.seed)?;

    let mut anchored_report = None;
    let mut trace = match &sc.scheme {
        SchemeSpec::Picard => picard_run(&f, &sc.x0, &sc.domain, sc.max_iter, sc.stop_tol)?,
        SchemeSpec::Mann { tau } => {
            mann_run(&f, *tau, &sc.x0, &sc.domain, sc.max_iter, sc.stop_tol)?
        }
        SchemeSpec::Regularized { eps0, rho, count, anchor } => {
            let z = anchor.clone().unwrap_or_else(|| sc.domain.center());
            let schedule = EpsSchedule::geometric(*eps0, *rho, *count)?;
            let (stages, verdict) =
                regularized_solve(&f, &z, &sc.domain, schedule, sc.max_iter, sc.stop_tol)?;
            let points: Vec<Point> = stages.into_iter().map(|(p, _)| p).collect();
            let images = points.iter().map(|p| f.evaluate(p)).collect::<Result<Vec<_>>>()?;
            let stage_window = TailWindow { burn_in: 0, window: points.len() };
            anchored_report =
                Some(CheckReport::from_verdict("anchored_bound", stage_window, verdict));
            Trace::assemble(
                points,
                images,
                Scheme::Regularized { eps0: *eps0, rho: *rho, count: *count },
                sc.domain.clone(),
                None,
                StopReason::Tolerance,
            )?
        }
    };
    trace.set_declared_weak_limit(sc.declared_weak_limit.clone());

    let checks = match &sc.checks {
        Some(list) => list.iter().map(CheckSpec::resolve).collect::<Result<Vec<_>>>()?,
        None => default_checks(),
    };

    let ctx = CheckContext {
        trace: &trace,
        operator: Some(&f),
        probes: &sc.probes,
        tol: sc.tolerances,
        window: sc.window,
        d_m: sc.domain.diameter(),
        seed,
    };
    let mut verdicts = Vec::new();
    if let Some(r) = anchored_report {
        verdicts.push(r);
    }
    let (limit, limit_report) = resolve_limit(&ctx)?;
    if let Some(r) = limit_report {
        verdicts.push(r);
    }
    for check in &checks {
        verdicts.push(run_check(check, &ctx, limit.as_ref())?);
    }

    fs::create_dir_all(&opts.out_dir)?;
    let trace_name = match sc.mode {
        Mode::Dense(dim) => {
            write_trace_csv(&trace, dim, &opts.out_dir.join("trace.csv"))?;
            "trace.csv"
        }
        Mode::Sparse => {
            write_trace_jsonl(&trace, &opts.out_dir.join("trace.jsonl"))?;
            "trace.jsonl"
        }
    };
    let plot_dir = if opts.plot_data {
        let dir = opts.out_dir.join("plot");
        fs::create_dir_all(&dir)?;
        write_plot_data(&checks, &ctx, limit.as_ref(), &dir.join("series.csv"))?;
        Some("plot".to_string())
    } else {
        None
    };

    let report = RunReport {
        scenario: Some(sc),
        trace: TraceSummary::of(&trace),
        verdicts,
        artifacts: Artifacts {
            trace: Some(trace_name.to_string()),
            report: Some("report.json".to_string()),
            plot_dir,
        },
    };
    write_report(&report, &opts.out_dir.join("report.json"))?;
    Ok(report)
}

fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(report).expect("reports serialize");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

struct CheckContext<'a> {
    trace: &'a Trace,
    operator: Option<&'a Operator>,
    probes: &'a [Point],
    tol: Tolerances,
    window: Option<TailWindow>,
    d_m: f64,
    seed: u64,
}

impl CheckContext<'_> {
    /// The configured window if one was pinned, else the length-derived
    /// default for this profile.
    fn window_for(&self, len: usize) -> Result<TailWindow> {
        match self.window {
            Some(w) => {
                w.check(len)?;
                Ok(w)
            }
            None => TailWindow::default_for(len),
        }
    }
}

enum LimitSource {
    Declared,
    Detected,
}

/// Picks the reference point that `opial` and `sharp` compare against:
/// the declared weak limit when present and plausible, else the final
/// iterate when the trace has settled to within the `ar` tolerance.
fn resolve_limit(ctx: &CheckContext) -> Result<(Option<(Point, LimitSource)>, Option<CheckReport>)> {
    let points = ctx.trace.points();
    if let Some(decl) = ctx.trace.declared_weak_limit() {
        let w = ctx.window_for(points.len())?;
        let mut coords: Vec<u64> = decl.coords().keys().copied().collect();
        for k in points[0].coords().keys() {
            if !coords.contains(k) {
                coords.push(*k);
            }
        }
        coords.sort_unstable();
        coords.truncate(64);
        let v = weak_limit_plausibility(points, decl, &coords, w, 1e-6)?;
        let report = CheckReport::from_verdict("weak_limit", w, v);
        let usable = report.status == Status::Holds;
        let limit = usable.then(|| (decl.clone(), LimitSource::Declared));
        return Ok((limit, Some(report)));
    }
    if points.len() >= 2 {
        let last_step = points[points.len() - 1].distance(&points[points.len() - 2]);
        if last_step <= ctx.tol.ar {
            return Ok((Some((ctx.trace.final_point().clone(), LimitSource::Detected)), None));
        }
    }
    Ok((None, None))
}

fn run_check(
    check: &DetailedCheck,
    ctx: &CheckContext,
    limit: Option<&(Point, LimitSource)>,
) -> Result<CheckReport> {
    let points = ctx.trace.points();
    match check {
        DetailedCheck::Ar => {
            let w = ctx.window_for(points.len() - 1)?;
            Ok(CheckReport::from_verdict("ar", w, ar_check(points, w, ctx.tol.ar)?))
        }
        DetailedCheck::Residual => {
            let profile = residual_profile(ctx.trace);
            let w = ctx.window_for(profile.len())?;
            Ok(CheckReport::from_verdict("residual", w, tail_decay_check(&profile, w, ctx.tol.ar)?))
        }
        DetailedCheck::Lambda => {
            let w = ctx.window_for(points.len())?;
            let mut witnesses = vec![Witness::new("probe_count", ctx.probes.len() as f64)];
            if ctx.probes.is_empty() {
                return Ok(CheckReport {
                    check: "lambda".into(),
                    status: Status::NotTriggered,
                    threshold: ctx.tol.lambda,
                    window: w,
                    witnesses,
                });
            }
            let mut status = Status::Holds;
            for (k, z) in ctx.probes.iter().enumerate() {
                let v = lambda_membership(points, z, w, ctx.tol.lambda)?;
                status = fold_status(status, v.status);
                for wit in v.witnesses {
                    witnesses.push(Witness::new(format!("probe{k}_{}", wit.name), wit.value));
                }
            }
            Ok(CheckReport {
                check: "lambda".into(),
                status,
                threshold: ctx.tol.lambda,
                window: w,
                witnesses,
            })
        }
        DetailedCheck::Opial => {
            let w = ctx.window_for(points.len())?;
            match limit {
                None => Ok(CheckReport {
                    check: "opial".into(),
                    status: Status::NotTriggered,
                    threshold: ctx.tol.opial,
                    window: w,
                    witnesses: vec![Witness::new("limit_detected", 0.0)],
                }),
                Some((l, source)) => {
                    let v = opial_probe(points, l, ctx.probes, w, ctx.tol.opial, ctx.tol.lambda)?;
                    let mut report = CheckReport::from_verdict("opial", w, v);
                    report.witnesses.push(Witness::new(
                        "limit_declared",
                        match source {
                            LimitSource::Declared => 1.0,
                            LimitSource::Detected => 0.0,
                        },
                    ));
                    Ok(report)
                }
            }
        }
        DetailedCheck::Fejer { y, eta0, eta_rho } => {
            let w = ctx.window_for(points.len())?;
            let anchors: Vec<Point> = match y {
                Some(p) => vec![p.clone()],
                None => ctx
                    .operator
                    .map(|f| f.known_fixed_points().to_vec())
                    .unwrap_or_default(),
            };
            let mut witnesses = vec![Witness::new("anchor_count", anchors.len() as f64)];
            if anchors.is_empty() {
                return Ok(CheckReport {
                    check: "fejer".into(),
                    status: Status::NotTriggered,
                    threshold: 0.0,
                    window: w,
                    witnesses,
                });
            }
            let eta: Vec<f64> = match eta0 {
                Some(e0) => {
                    let rho = eta_rho.unwrap_or(1.0);
                    (0..points.len() - 1).map(|n| e0 * rho.powi(n as i32)).collect()
                }
                None => Vec::new(),
            };
            let mut status = Status::Holds;
            let mut threshold = 0.0;
            for (k, anchor) in anchors.iter().enumerate() {
                let v = fejer_monitor(points, anchor, &eta, FEJER_TOL)?;
                status = fold_status(status, v.status);
                threshold = v.threshold;
                for wit in v.witnesses {
                    witnesses.push(Witness::new(format!("anchor{k}_{}", wit.name), wit.value));
                }
            }
            Ok(CheckReport { check: "fejer".into(), status, threshold, window: w, witnesses })
        }
        DetailedCheck::Flat { delta } => {
            let w = ctx.window_for(points.len() - 1)?;
            let v = flat_check(ctx.trace, *delta, ctx.d_m, w, FEJER_TOL)?;
            Ok(CheckReport::from_verdict("flat", w, v))
        }
        DetailedCheck::Sharp => {
            let f = ctx.operator.ok_or_else(|| {
                Error::validation("operator", "the sharp comparison needs an operator")
            })?;
            let w = ctx.window_for(points.len())?;
            match limit {
                None => Ok(CheckReport {
                    check: "sharp".into(),
                    status: Status::NotTriggered,
                    threshold: ctx.tol.margin,
                    window: w,
                    witnesses: vec![Witness::new("limit_detected", 0.0)],
                }),
                Some((l, _)) => {
                    let v = sharp_check(f, points, l, w, ctx.tol.margin)?;
                    Ok(CheckReport::from_verdict("sharp", w, v))
                }
            }
        }
        DetailedCheck::LocalNe { epsilon, samples } => {
            let f = ctx.operator.ok_or_else(|| {
                Error::validation("operator", "the nonexpansiveness probe needs an operator")
            })?;
            let band = EpsilonBand::new(*epsilon)?;
            let v =
                local_nonexpansiveness_probe(f, ctx.trace.domain(), band, *samples, ctx.seed)?;
            let w = TailWindow { burn_in: 0, window: *samples };
            let mut report = CheckReport::from_verdict("local_ne", w, v);
            // Recorded so reruns can tell which seed actually applied
            // (environment override included).
            report.witnesses.push(Witness::new("seed", ctx.seed as f64));
            Ok(report)
        }
    }
}

/// Tie tolerance for pointwise comparisons that should be exact up to
/// floating-point noise (quasi-Fejer steps, the flat premise).
const FEJER_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Checking a stored trace.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFileFormat {
    Csv,
    Jsonl,
}

impl TraceFileFormat {
    pub fn infer(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(TraceFileFormat::Csv),
            Some("jsonl") | Some("ndjson") => Ok(TraceFileFormat::Jsonl),
            other => Err(Error::TraceFormat(format!(
                "cannot infer trace format from extension {other:?}; pass --format"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckTraceOptions {
    pub trace_path: PathBuf,
    pub format: Option<TraceFileFormat>,
    pub checks: Vec<DetailedCheck>,
    pub probes: Vec<Point>,
    pub limit: Option<Point>,
    pub operator: Option<OperatorSpec>,
    pub d_m: Option<f64>,
    pub window: Option<TailWindow>,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

/// Reruns diagnostics over a stored trace. The trace carries no domain, so a
/// loose norm bound is synthesized around it; pass `d_m` to checks that need
/// a real diameter.
pub fn check_trace(opts: &CheckTraceOptions) -> Result<RunReport> {
    let format = match opts.format {
        Some(f) => f,
        None => TraceFileFormat::infer(&opts.trace_path)?,
    };
    let (points, images) = match format {
        TraceFileFormat::Csv => load_trace_csv(&opts.trace_path)?,
        TraceFileFormat::Jsonl => load_trace_jsonl(&opts.trace_path)?,
    };
    let bound = points
        .iter()
        .chain(images.iter())
        .map(Point::norm)
        .fold(0.0, f64::max);
    let domain = ConvexDomain::sparse(bound + 1.0)?;
    let mut trace = Trace::external(points, images, domain, None)?;
    trace.set_declared_weak_limit(opts.limit.clone());

    let operator = opts.operator.as_ref().map(make_operator).transpose()?;
    let seed = effective_seed(opts.seed)?;
    let d_m = opts.d_m.unwrap_or_else(|| trace.domain().diameter());
    let ctx = CheckContext {
        trace: &trace,
        operator: operator.as_ref(),
        probes: &opts.probes,
        tol: opts.tolerances,
        window: opts.window,
        d_m,
        seed,
    };

    let mut verdicts = Vec::new();
    let (limit, limit_report) = resolve_limit(&ctx)?;
    if let Some(r) = limit_report {
        verdicts.push(r);
    }
    for check in &opts.checks {
        verdicts.push(run_check(check, &ctx, limit.as_ref())?);
    }

    let mut report = RunReport {
        scenario: None,
        trace: TraceSummary::of(&trace),
        verdicts,
        artifacts: Artifacts {
            trace: Some(opts.trace_path.display().to_string()),
            report: None,
            plot_dir: None,
        },
    };
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        report.artifacts.report = Some("report.json".to_string());
        write_report(&report, &dir.join("report.json"))?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Trace files.
//
// Dense CSV: step, x0..x{d-1}, fx0..fx{d-1}, step_norm, residual_norm.
// Sparse JSONL: one row object per line with sparse point payloads.
// Floats print in shortest round-trip form, so loads are exact.

pub fn write_trace_csv(trace: &Trace, dim: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend((0..dim).map(|i| format!("x{i}")));
    header.extend((0..dim).map(|i| format!("fx{i}")));
    header.push("step_norm".to_string());
    header.push("residual_norm".to_string());
    w.write_record(&header).map_err(|e| Error::TraceFormat(e.to_string()))?;

    let points = trace.points();
    let images = trace.images();
    for n in 0..points.len() {
        let mut row = vec![n.to_string()];
        for v in points[n].to_dense(dim)? {
            row.push(format!("{v}"));
        }
        for v in images[n].to_dense(dim)? {
            row.push(format!("{v}"));
        }
        row.push(if n == 0 {
            String::new()
        } else {
            format!("{}", points[n].distance(&points[n - 1]))
        });
        row.push(format!("{}", images[n].distance(&points[n])));
        w.write_record(&row).map_err(|e| Error::TraceFormat(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::TraceFormat(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn load_trace_csv(path: &Path) -> Result<(Vec<Point>, Vec<Point>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::TraceFormat(e.to_string()))?;
    let headers = r.headers().map_err(|e| Error::TraceFormat(e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.first() != Some(&"step") {
        return Err(Error::TraceFormat("first column must be `step`".into()));
    }
    let dim = cols.iter().skip(1).take_while(|c| c.starts_with('x')).count();
    if dim == 0 {
        return Err(Error::TraceFormat("no coordinate columns (x0, x1, ...)".into()));
    }
    let expected: Vec<String> = std::iter::once("step".to_string())
        .chain((0..dim).map(|i| format!("x{i}")))
        .chain((0..dim).map(|i| format!("fx{i}")))
        .chain(["step_norm".to_string(), "residual_norm".to_string()])
        .collect();
    if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::TraceFormat(format!(
            "unexpected header; want step,x0..x{0},fx0..fx{0},step_norm,residual_norm",
            dim - 1
        )));
    }

    let parse = |field: &str, row: usize, col: &str| -> Result<f64> {
        let v: f64 = field
            .parse()
            .map_err(|_| Error::TraceFormat(format!("row {row}, column {col}: bad float `{field}`")))?;
        if !v.is_finite() {
            return Err(Error::TraceFormat(format!("row {row}, column {col}: nonfinite value")));
        }
        Ok(v)
    };
    let mut points = Vec::new();
    let mut images = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::TraceFormat(e.to_string()))?;
        if rec.len() != 2 * dim + 3 {
            return Err(Error::TraceFormat(format!("row {idx}: wrong field count")));
        }
        let mut x = vec![0.0; dim];
        let mut fx = vec![0.0; dim];
        for i in 0..dim {
            x[i] = parse(&rec[1 + i], idx, &format!("x{i}"))?;
            fx[i] = parse(&rec[1 + dim + i], idx, &format!("fx{i}"))?;
        }
        points.push(Point::dense(&x));
        images.push(Point::dense(&fx));
    }
    if points.is_empty() {
        return Err(Error::TraceFormat("trace has no rows".into()));
    }
    Ok((points, images))
}

#[derive(Serialize, Deserialize)]
struct TraceRow {
    step: usize,
    point: Point,
    image: Point,
    step_norm: Option<f64>,
    residual_norm: f64,
}

pub fn write_trace_jsonl(trace: &Trace, path: &Path) -> Result<()> {
    let points = trace.points();
    let images = trace.images();
    let mut out = Vec::new();
    for n in 0..points.len() {
        let row = TraceRow {
            step: n,
            point: points[n].clone(),
            image: images[n].clone(),
            step_norm: (n > 0).then(|| points[n].distance(&points[n - 1])),
            residual_norm: images[n].distance(&points[n]),
        };
        let line = serde_json::to_string(&row).expect("trace rows serialize");
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

pub fn load_trace_jsonl(path: &Path) -> Result<(Vec<Point>, Vec<Point>)> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut images = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TraceRow = serde_json::from_str(line)
            .map_err(|e| Error::TraceFormat(format!("line {}: {e}", idx + 1)))?;
        points.push(row.point);
        images.push(row.image);
    }
    if points.is_empty() {
        return Err(Error::TraceFormat("trace has no rows".into()));
    }
    Ok((points, images))
}

/// Tidy series for external plotting: one file, columns
/// `check,series,step,value`.
fn write_plot_data(
    checks: &[DetailedCheck],
    ctx: &CheckContext,
    limit: Option<&(Point, LimitSource)>,
    path: &Path,
) -> Result<()> {
    let points = ctx.trace.points();
    let images = ctx.trace.images();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check", "series", "step", "value"])
        .map_err(|e| Error::TraceFormat(e.to_string()))?;
    let push = |w: &mut csv::Writer<Vec<u8>>, check: &str, series: &str, step: usize, value: f64| {
        w.write_record([check, series, &step.to_string(), &format!("{value}")])
            .map_err(|e| Error::TraceFormat(e.to_string()))
    };

    for check in checks {
        match check {
            DetailedCheck::Ar => {
                for (n, v) in ar_profile(points)?.iter().enumerate() {
                    push(&mut w, "ar", "step_norm", n + 1, *v)?;
                }
            }
            DetailedCheck::Residual => {
                for (n, v) in residual_profile(ctx.trace).iter().enumerate() {
                    push(&mut w, "residual", "residual_norm", n, *v)?;
                }
            }
            DetailedCheck::Lambda => {
                for (k, z) in ctx.probes.iter().enumerate() {
                    for (n, p) in points.iter().enumerate() {
                        push(&mut w, "lambda", &format!("probe{k}"), n, p.distance(z))?;
                    }
                }
            }
            DetailedCheck::Opial => {
                if let Some((l, _)) = limit {
                    for (n, p) in points.iter().enumerate() {
                        push(&mut w, "opial", "limit", n, p.distance(l))?;
                    }
                    for (k, z) in ctx.probes.iter().enumerate() {
                        for (n, p) in points.iter().enumerate() {
                            push(&mut w, "opial", &format!("probe{k}"), n, p.distance(z))?;
                        }
                    }
                }
            }
            DetailedCheck::Fejer { y, .. } => {
                let anchors: Vec<Point> = match y {
                    Some(p) => vec![p.clone()],
                    None => ctx
                        .operator
                        .map(|f| f.known_fixed_points().to_vec())
                        .unwrap_or_default(),
                };
                for (k, anchor) in anchors.iter().enumerate() {
                    for (n, p) in points.iter().enumerate() {
                        push(&mut w, "fejer", &format!("anchor{k}"), n, p.distance(anchor))?;
                    }
                }
            }
            DetailedCheck::Flat { .. } => {
                for (n, v) in ar_profile(points)?.iter().enumerate() {
                    push(&mut w, "flat", "step_norm", n + 1, *v)?;
                }
                for (n, v) in ar_profile(images)?.iter().enumerate() {
                    push(&mut w, "flat", "image_step_norm", n + 1, *v)?;
                }
                for n in 0..points.len() - 1 {
                    push(&mut w, "flat", "cross_gap", n + 1, images[n + 1].distance(&points[n]))?;
                }
            }
            DetailedCheck::Sharp => {
                if let (Some(f), Some((l, _))) = (ctx.operator, limit) {
                    let fl = f.evaluate(l)?;
                    for (n, p) in points.iter().enumerate() {
                        push(&mut w, "sharp", "point_distance", n, p.distance(l))?;
                        push(&mut w, "sharp", "image_distance", n, f.evaluate(p)?.distance(&fl))?;
                    }
                }
            }
            DetailedCheck::LocalNe { .. } => {}
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::TraceFormat(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Write-then-rename so partially written artifacts never land under the
/// final name.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engines::picard_run;
    use crate::operators::Operator;
    use std::f64::consts::FRAC_PI_2;

    fn mann_rotation_json() -> String {
        r#"{
            "name": "quarter rotation, relaxed",
            "mode": {"dense": 2},
            "domain": {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
            "operator": {"kind": "rotation", "theta": 1.5707963267948966},
            "scheme": {"kind": "mann", "tau": 0.5},
            "x0": [1.0, 0.0],
            "max_iter": 200,
            "probes": [[0.25, 0.25], [0.5, -0.3]],
            "seed": 7
        }"#
        .to_string()
    }

    #[test]
    fn scenarios_parse_and_normalize() {
        let sc = Scenario::from_json(&mann_rotation_json()).unwrap();
        assert_eq!(sc.mode, Mode::Dense(2));
        assert_eq!(sc.x0.dim(), Some(2));
        assert_eq!(sc.probes.len(), 2);
        assert_eq!(sc.probes[1].dim(), Some(2));
        assert_eq!(sc.stop_tol, 0.0);
        assert_eq!(sc.seed, 7);
        assert!(sc.checks.is_none());
    }

    #[test]
    fn missing_required_fields_name_the_field() {
        let text = r#"{
            "mode": {"dense": 2},
            "domain": {"kind": "ball", "center": [0.0, 0.0], "radius": 1.0},
            "operator": {"kind": "identity"},
            "scheme": {"kind": "picard"},
            "max_iter": 10
        }"#;
        let err = Scenario::from_json(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("x0"), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = mann_rotation_json().replace("\"seed\": 7", "\"seed\": 7, \"extra\": 1");
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn starting_point_must_lie_in_the_domain() {
        let text = mann_rotation_json().replace("\"x0\": [1.0, 0.0]", "\"x0\": [5.0, 0.0]");
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("x0"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn dense_domains_are_rejected_in_sparse_mode() {
        let text = mann_rotation_json().replace("{\"dense\": 2}", "\"sparse\"");
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("domain"), "{err}");
    }

    #[test]
    fn anchored_scheme_requires_a_positive_inner_tolerance() {
        let text = mann_rotation_json().replace(
            r#"{"kind": "mann", "tau": 0.5}"#,
            r#"{"kind": "regularized", "eps0": 0.1, "rho": 0.5, "count": 4}"#,
        );
        let err = Scenario::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("stop_tol"), "{err}");
    }

    #[test]
    fn serialization_echo_is_a_fixed_point() {
        let sc = Scenario::from_json(&mann_rotation_json()).unwrap();
        let once = sc.to_json();
        let again = Scenario::from_json(&once).unwrap().to_json();
        assert_eq!(once, again);
    }

    #[test]
    fn check_names_resolve_and_unknown_ones_list_the_valid_set() {
        for name in CHECK_NAMES {
            assert_eq!(DetailedCheck::from_name(name).unwrap().name(), name);
        }
        let err = DetailedCheck::from_name("wibble").unwrap_err();
        assert!(err.to_string().contains("wibble"));
        assert!(err.to_string().contains("fejer"));
    }

    #[test]
    fn check_specs_accept_bare_names_and_objects() {
        let list: Vec<CheckSpec> =
            serde_json::from_str(r#"["ar", {"check": "flat", "delta": 0.25}]"#).unwrap();
        assert!(matches!(list[0].resolve().unwrap(), DetailedCheck::Ar));
        match list[1].resolve().unwrap() {
            DetailedCheck::Flat { delta } => assert_eq!(delta, 0.25),
            other => panic!("wrong resolve: {other:?}"),
        }
    }

    #[test]
    fn running_the_relaxed_rotation_holds_everywhere() {
        let sc = Scenario::from_json(&mann_rotation_json()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = RunOptions { out_dir: dir.path().to_path_buf(), plot_data: false };
        let report = run_scenario(&sc, &opts).unwrap();

        let names: Vec<&str> = report.verdicts.iter().map(|v| v.check.as_str()).collect();
        assert_eq!(names, ["ar", "residual", "lambda", "opial"]);
        for v in &report.verdicts {
            assert_eq!(v.status, Status::Holds, "{}: {:?}", v.check, v);
        }
        assert_eq!(report_exit_code(&report), 0);
        assert!(dir.path().join("trace.csv").exists());
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn reruns_are_byte_identical() {
        let sc = Scenario::from_json(&mann_rotation_json()).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_scenario(&sc, &RunOptions { out_dir: d1.path().into(), plot_data: true }).unwrap();
        run_scenario(&sc, &RunOptions { out_dir: d2.path().into(), plot_data: true }).unwrap();
        for name in ["trace.csv", "report.json", "plot/series.csv"] {
            let a = fs::read(d1.path().join(name)).unwrap();
            let b = fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "artifact {name} differs between identical runs");
        }
    }

    #[test]
    fn anchored_runs_prepend_the_stage_bound_report() {
        let text = mann_rotation_json()
            .replace(
                r#"{"kind": "mann", "tau": 0.5}"#,
                r#"{"kind": "regularized", "eps0": 0.1, "rho": 0.5, "count": 4, "anchor": [0.5, 0.0]}"#,
            )
            .replace("\"max_iter\": 200", "\"max_iter\": 100000, \"stop_tol\": 1e-12");
        let sc = Scenario::from_json(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report =
            run_scenario(&sc, &RunOptions { out_dir: dir.path().into(), plot_data: false })
                .unwrap();
        assert_eq!(report.verdicts[0].check, "anchored_bound");
        assert_eq!(report.verdicts[0].status, Status::Holds);
        assert_eq!(report.trace.length, 4);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let f = Operator::rotation(FRAC_PI_2).unwrap();
        let ball = ConvexDomain::ball(Point::zero_dense(2), 1.0).unwrap();
        let trace = picard_run(&f, &Point::dense(&[0.3, -0.4]), &ball, 17, 0.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trace_csv(&trace, 2, &path).unwrap();
        let (points, images) = load_trace_csv(&path).unwrap();
        assert_eq!(points.len(), trace.len());
        for (a, b) in points.iter().zip(trace.points()) {
            assert_eq!(a.coords(), b.coords());
        }
        for (a, b) in images.iter().zip(trace.images()) {
            assert_eq!(a.coords(), b.coords());
        }
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let points: Vec<Point> = (1..=6u64).map(Point::basis).collect();
        let f = Operator::half_radial();
        let images: Vec<Point> =
            points.iter().map(|p| f.evaluate(p).unwrap()).collect();
        let domain = ConvexDomain::sparse(2.0).unwrap();
        let trace = Trace::external(points.clone(), images.clone(), domain, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_trace_jsonl(&trace, &path).unwrap();
        let (p2, i2) = load_trace_jsonl(&path).unwrap();
        assert_eq!(p2, points);
        assert_eq!(i2, images);
    }

    #[test]
    fn stored_traces_can_be_rechecked() {
        let sc = Scenario::from_json(&mann_rotation_json()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run_scenario(&sc, &RunOptions { out_dir: dir.path().into(), plot_data: false }).unwrap();

        let opts = CheckTraceOptions {
            trace_path: dir.path().join("trace.csv"),
            format: None,
            checks: vec![DetailedCheck::Ar, DetailedCheck::Lambda],
            probes: vec![Point::zero()],
            limit: None,
            operator: None,
            d_m: None,
            window: None,
            tolerances: Tolerances::default(),
            seed: 0,
            out_dir: None,
        };
        let report = check_trace(&opts).unwrap();
        assert_eq!(report.verdicts.len(), 2);
        for v in &report.verdicts {
            assert_eq!(v.status, Status::Holds, "{}: {v:?}", v.check);
        }
        assert_eq!(report_exit_code(&report), 0);
    }

    #[test]
    fn bad_csv_headers_are_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "time,a,b\n0,1,2\n").unwrap();
        let err = load_trace_csv(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("step"), "{err}");
    }

    #[test]
    fn declared_limits_are_screened_before_use() {
        let mut text = mann_rotation_json();
        text = text.replace(
            "\"probes\": [[0.25, 0.25], [0.5, -0.3]]",
            "\"probes\": [[0.25, 0.25]], \"declared_weak_limit\": [0.9, 0.0]",
        );
        let sc = Scenario::from_json(&text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let report =
            run_scenario(&sc, &RunOptions { out_dir: dir.path().into(), plot_data: false })
                .unwrap();
        // The iterates head to the origin, so the declared limit (0.9, 0) is
        // implausible: the screen fails and opial falls back to untriggered.
        let weak = report.verdicts.iter().find(|v| v.check == "weak_limit").unwrap();
        assert_eq!(weak.status, Status::Fails);
        let opial = report.verdicts.iter().find(|v| v.check == "opial").unwrap();
        assert_eq!(opial.status, Status::NotTriggered);
        assert_eq!(report_exit_code(&report), 1);
    }
}
