//! Protocol design: maximize `C_norm` over `(q, r) ∈ [ε, 1-ε]²` subject to
//! `D_crit <= η`, plus parameter sweeps around it.
//!
//! The unconstrained search evaluates a coarse grid (step 0.01), then refines
//! twice around the incumbent with a ten times finer step each pass. When the
//! constraint binds, every column of constant `r` is scanned for crossings of
//! the `D_crit = η` contour, which are located in `q` by bisection; the same
//! two refinement passes are then applied in `r`. `D_crit` is not monotone in
//! `q` near `r = ε`, so the feasible set there can be a thin sliver that only
//! the crossings reveal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis;
use crate::error::{Error, Result};
use crate::protocol::ProtocolParams;

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const COARSE_STEP: f64 = 0.01;
pub const REFINEMENT_PASSES: usize = 2;
/// Values within this distance of the best objective count as ties.
pub const TIE_TOLERANCE: f64 = 1e-9;
const BISECTION_STEPS: usize = 40;
const CONTOUR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignProblem {
    pub n_users: usize,
    pub theta: f64,
    /// Delay threshold; `f64::INFINITY` means unconstrained.
    pub eta: f64,
    pub epsilon: f64,
}

impl DesignProblem {
    pub fn unconstrained(n_users: usize, theta: f64) -> Self {
        Self {
            n_users,
            theta,
            eta: f64::INFINITY,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users < 2 {
            return Err(Error::BadParams(format!(
                "design needs at least 2 users, got {}",
                self.n_users
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::BadParams(format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if self.eta.is_nan() || self.eta <= 0.0 {
            return Err(Error::BadParams(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::BadParams(format!(
                "epsilon must lie in (0, 0.5), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    fn params(&self, q: f64, r: f64) -> Result<ProtocolParams> {
        ProtocolParams::new(self.n_users, self.theta, q, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolutionStatus {
    /// The unconstrained optimum satisfies the delay constraint.
    SlackInterior,
    /// The constraint binds at an interior point of the restricted square.
    BindingInterior,
    /// The constraint binds with `r = ε`.
    BindingCorner,
    /// Not even `(ε, ε)` meets the delay constraint.
    Infeasible,
}

impl SolutionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolutionStatus::SlackInterior => "slack-interior",
            SolutionStatus::BindingInterior => "binding-interior",
            SolutionStatus::BindingCorner => "binding-corner",
            SolutionStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub q_opt: f64,
    pub r_opt: f64,
    pub c_norm: f64,
    pub d_crit: f64,
    pub status: SolutionStatus,
    /// `D_crit` at the unconstrained optimum; the constraint is slack for `η >= η*`.
    pub eta_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Point {
    q: f64,
    r: f64,
    c: f64,
    d: f64,
}

fn evaluate_point(prob: &DesignProblem, q: f64, r: f64) -> Option<Point> {
    let params = prob.params(q, r).ok()?;
    let m = analysis::evaluate(&params).ok()?;
    Some(Point {
        q,
        r,
        c: m.c_norm,
        d: m.d_crit,
    })
}

/// Points `lo, lo + step, ...` up to `hi`, always ending exactly at `hi`.
fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut i = 0u32;
    loop {
        let x = lo + f64::from(i) * step;
        if x > hi - 1e-12 {
            break;
        }
        v.push(x);
        i += 1;
    }
    v.push(hi);
    v
}

/// Points `center + i*step`, `|i| <= 10`, clipped to `[lo, hi]` with the
/// bound itself added when the window crosses it.
fn window(center: f64, step: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::with_capacity(21);
    if center - 10.0 * step < lo {
        v.push(lo);
    }
    for i in -10i32..=10 {
        let x = center + f64::from(i) * step;
        if x > lo + 1e-15 && x < hi - 1e-15 {
            v.push(x);
        }
    }
    if center + 10.0 * step > hi {
        v.push(hi);
    }
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    v
}

fn evaluate_grid(prob: &DesignProblem, qs: &[f64], rs: &[f64]) -> Vec<Option<Point>> {
    qs.par_iter()
        .flat_map_iter(|&q| rs.iter().map(move |&r| evaluate_point(prob, q, r)))
        .collect()
}

/// Best point; values within [`TIE_TOLERANCE`] of the maximum tie and go to
/// the smallest `q`, then the smallest `r`, whatever the input order.
fn pick(points: impl IntoIterator<Item = Point>) -> Option<Point> {
    let points: Vec<Point> = points.into_iter().filter(|p| p.c.is_finite()).collect();
    let best = points.iter().map(|p| p.c).fold(f64::NEG_INFINITY, f64::max);
    points
        .into_iter()
        .filter(|p| p.c >= best - TIE_TOLERANCE)
        .min_by(|a, b| a.q.total_cmp(&b.q).then(a.r.total_cmp(&b.r)))
}

fn argmax(points: &[Option<Point>], eta: f64) -> Option<Point> {
    pick(points.iter().flatten().filter(|p| p.d <= eta).copied())
}

/// Coarse-grid metrics for one `(N, θ, ε)`, reusable across thresholds.
#[derive(Debug, Clone)]
pub struct MetricGrid {
    problem: DesignProblem,
    points: Vec<Option<Point>>,
}

impl MetricGrid {
    pub fn compute(prob: &DesignProblem) -> Result<Self> {
        prob.validate()?;
        let ax = axis(prob.epsilon, 1.0 - prob.epsilon, COARSE_STEP);
        Ok(Self {
            problem: *prob,
            points: evaluate_grid(prob, &ax, &ax),
        })
    }

    fn matches(&self, prob: &DesignProblem) -> bool {
        self.problem.n_users == prob.n_users
            && self.problem.theta == prob.theta
            && self.problem.epsilon == prob.epsilon
    }
}

fn refine(prob: &DesignProblem, mut best: Point, eta: f64) -> Point {
    let (lo, hi) = (prob.epsilon, 1.0 - prob.epsilon);
    let mut step = COARSE_STEP;
    for _ in 0..REFINEMENT_PASSES {
        step /= 10.0;
        let qs = window(best.q, step, lo, hi);
        let rs = window(best.r, step, lo, hi);
        let pts = evaluate_grid(prob, &qs, &rs);
        best = argmax(&pts, eta)
            .into_iter()
            .chain([best])
            .fold(best, |acc, p| pick([acc, p]).unwrap_or(acc));
    }
    best
}

fn unconstrained_on(prob: &DesignProblem, grid: &MetricGrid) -> Result<Point> {
    let coarse = argmax(&grid.points, f64::INFINITY)
        .ok_or_else(|| Error::BadParams("no grid point could be evaluated".into()))?;
    Ok(refine(prob, coarse, f64::INFINITY))
}

/// Global maximizer of `C_norm` over the restricted square.
pub fn maximize_utilization(prob: &DesignProblem) -> Result<DesignSolution> {
    let grid = MetricGrid::compute(prob)?;
    let best = unconstrained_on(prob, &grid)?;
    Ok(slack_solution(best))
}

fn slack_solution(p: Point) -> DesignSolution {
    DesignSolution {
        q_opt: p.q,
        r_opt: p.r,
        c_norm: p.c,
        d_crit: p.d,
        status: SolutionStatus::SlackInterior,
        eta_star: p.d,
    }
}

/// `D_crit` at the unconstrained optimum.
pub fn critical_eta(prob: &DesignProblem) -> Result<f64> {
    Ok(maximize_utilization(prob)?.d_crit)
}

/// Point on the `D_crit = η` contour between a feasible and an infeasible
/// `q` at fixed `r`, approached from the feasible side.
fn bisect_q(
    prob: &DesignProblem,
    r: f64,
    mut feasible: f64,
    mut infeasible: f64,
    eta: f64,
) -> Option<Point> {
    let mut found = None;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (feasible + infeasible);
        match evaluate_point(prob, mid, r) {
            Some(p) if p.d <= eta => {
                feasible = mid;
                found = Some(p);
            }
            _ => infeasible = mid,
        }
    }
    found
}

/// Feasible samples of one `r` column plus the contour points between
/// adjacent samples whose feasibility differs.
fn column_candidates(
    prob: &DesignProblem,
    qs: &[f64],
    column: &[Option<Point>],
    r: f64,
    eta: f64,
) -> Vec<Point> {
    let feasible = |p: &Option<Point>| p.map(|p| p.d <= eta);
    let mut out: Vec<Point> = column
        .iter()
        .flatten()
        .filter(|p| p.d <= eta)
        .copied()
        .collect();
    for i in 0..qs.len().saturating_sub(1) {
        let crossing = match (feasible(&column[i]), feasible(&column[i + 1])) {
            (Some(true), Some(false)) => bisect_q(prob, r, qs[i], qs[i + 1], eta),
            (Some(false), Some(true)) => bisect_q(prob, r, qs[i + 1], qs[i], eta),
            _ => None,
        };
        out.extend(crossing);
    }
    out
}

/// Solves the delay-constrained design problem.
pub fn solve_design_problem(prob: &DesignProblem) -> Result<DesignSolution> {
    let grid = MetricGrid::compute(prob)?;
    solve_on_grid(prob, &grid)
}

/// As [`solve_design_problem`] but reuses precomputed coarse-grid metrics.
pub fn solve_on_grid(prob: &DesignProblem, grid: &MetricGrid) -> Result<DesignSolution> {
    prob.validate()?;
    if !grid.matches(prob) {
        return Err(Error::BadParams(
            "metric grid was computed for a different problem".into(),
        ));
    }
    let unconstrained = unconstrained_on(prob, grid)?;
    if unconstrained.d <= prob.eta {
        return Ok(slack_solution(unconstrained));
    }
    let eta_star = unconstrained.d;
    let eta = prob.eta;
    let (lo, hi) = (prob.epsilon, 1.0 - prob.epsilon);
    let qs = axis(lo, hi, COARSE_STEP);
    let width = qs.len();

    // the optimum lies on the contour or on the box edge, so scan columns
    // of constant r and locate every contour crossing in q
    let coarse: Vec<Point> = (0..width)
        .into_par_iter()
        .flat_map_iter(|j| {
            let column: Vec<Option<Point>> =
                (0..width).map(|i| grid.points[i * width + j]).collect();
            column_candidates(prob, &qs, &column, qs[j], eta)
        })
        .collect();
    let Some(mut best) = pick(coarse) else {
        let corner = evaluate_point(prob, lo, lo)
            .ok_or_else(|| Error::BadParams("corner (ε, ε) could not be evaluated".into()))?;
        return Ok(DesignSolution {
            q_opt: corner.q,
            r_opt: corner.r,
            c_norm: corner.c,
            d_crit: corner.d,
            status: SolutionStatus::Infeasible,
            eta_star,
        });
    };

    let mut step = COARSE_STEP;
    for _ in 0..REFINEMENT_PASSES {
        step /= 10.0;
        let rs = window(best.r, step, lo, hi);
        let finer: Vec<Point> = rs
            .par_iter()
            .flat_map_iter(|&r| {
                let column = evaluate_grid(prob, &qs, &[r]);
                column_candidates(prob, &qs, &column, r, eta)
            })
            .collect();
        best = pick(finer.into_iter().chain([best])).unwrap_or(best);
    }
    if eta - best.d > CONTOUR_TOLERANCE {
        // optimum on a box edge away from the contour
        best = refine(prob, best, eta);
    }

    let status = if best.r <= lo + 1e-12 {
        SolutionStatus::BindingCorner
    } else {
        SolutionStatus::BindingInterior
    };
    Ok(DesignSolution {
        q_opt: best.q,
        r_opt: best.r,
        c_norm: best.c,
        d_crit: best.d,
        status,
        eta_star,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Raw metrics over the `(q, r)` grid.
    QrGrid,
    NRange,
    ThetaRange,
    EtaRange,
    /// Protocols designed for an estimate `N̂`, evaluated with the true `N`.
    NhatRange,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::QrGrid => "qr",
            SweepAxis::NRange => "n",
            SweepAxis::ThetaRange => "theta",
            SweepAxis::EtaRange => "eta",
            SweepAxis::NhatRange => "nhat",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    /// Fixed values for everything not being swept.
    pub template: DesignProblem,
    pub from: f64,
    pub to: f64,
    pub step: f64,
}

/// One sweep result. For optimization axes `q`/`r` are the optimal protocol;
/// for the `(q, r)` grid they are the evaluated point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_users: usize,
    pub n_hat: Option<usize>,
    pub theta: f64,
    pub eta: f64,
    pub q: f64,
    pub r: f64,
    pub c_norm: Option<f64>,
    pub d_crit: Option<f64>,
    pub status: Option<SolutionStatus>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(prob: &DesignProblem, n_hat: Option<usize>, q: f64, r: f64, err: &Error) -> Self {
        Self {
            n_users: prob.n_users,
            n_hat,
            theta: prob.theta,
            eta: prob.eta,
            q,
            r,
            c_norm: None,
            d_crit: None,
            status: None,
            error: Some(err.to_string()),
        }
    }

    fn solved(prob: &DesignProblem, n_hat: Option<usize>, s: &DesignSolution) -> Self {
        Self {
            n_users: prob.n_users,
            n_hat,
            theta: prob.theta,
            eta: prob.eta,
            q: s.q_opt,
            r: s.r_opt,
            c_norm: Some(s.c_norm),
            d_crit: Some(s.d_crit),
            status: Some(s.status),
            error: None,
        }
    }
}

fn float_range(from: f64, to: f64, step: f64) -> Vec<f64> {
    let mut v = Vec::new();
    let mut i = 0u32;
    loop {
        let x = from + f64::from(i) * step;
        if x > to + step * 1e-9 {
            break;
        }
        v.push(x);
        i += 1;
    }
    v
}

fn int_range(from: f64, to: f64, step: f64) -> Result<Vec<usize>> {
    let is_int = |x: f64| x >= 0.0 && x.fract() == 0.0;
    if !(is_int(from) && is_int(to) && is_int(step) && step >= 1.0) {
        return Err(Error::BadParams(format!(
            "integer range expected, got {from}..{to} step {step}"
        )));
    }
    Ok((from as usize..=to as usize)
        .step_by(step as usize)
        .collect())
}

/// Deterministic table with one row per grid point.
pub fn sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let t = spec.template;
    if spec.step.is_nan() || spec.step <= 0.0 {
        return Err(Error::BadParams(format!(
            "sweep step must be positive, got {}",
            spec.step
        )));
    }
    if spec.axis != SweepAxis::QrGrid && spec.from > spec.to {
        return Err(Error::BadParams(format!(
            "empty sweep range {}..{}",
            spec.from, spec.to
        )));
    }
    let solve = |prob: &DesignProblem| {
        if prob.eta.is_infinite() {
            maximize_utilization(prob)
        } else {
            solve_design_problem(prob)
        }
    };

    let rows = match spec.axis {
        SweepAxis::QrGrid => {
            t.validate()?;
            let ax = axis(t.epsilon, 1.0 - t.epsilon, spec.step);
            ax.iter()
                .flat_map(|&q| ax.iter().map(move |&r| (q, r)))
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(
                    |(q, r)| match t.params(q, r).and_then(|p| analysis::evaluate(&p)) {
                        Ok(m) => SweepRow {
                            n_users: t.n_users,
                            n_hat: None,
                            theta: t.theta,
                            eta: t.eta,
                            q,
                            r,
                            c_norm: Some(m.c_norm),
                            d_crit: Some(m.d_crit),
                            status: None,
                            error: None,
                        },
                        Err(e) => SweepRow::failed(&t, None, q, r, &e),
                    },
                )
                .collect()
        }
        SweepAxis::NRange => int_range(spec.from, spec.to, spec.step)?
            .into_iter()
            .map(|n| {
                let prob = DesignProblem { n_users: n, ..t };
                match solve(&prob) {
                    Ok(s) => SweepRow::solved(&prob, None, &s),
                    Err(e) => SweepRow::failed(&prob, None, f64::NAN, f64::NAN, &e),
                }
            })
            .collect(),
        SweepAxis::ThetaRange => float_range(spec.from, spec.to, spec.step)
            .into_iter()
            .map(|theta| {
                let prob = DesignProblem { theta, ..t };
                match solve(&prob) {
                    Ok(s) => SweepRow::solved(&prob, None, &s),
                    Err(e) => SweepRow::failed(&prob, None, f64::NAN, f64::NAN, &e),
                }
            })
            .collect(),
        SweepAxis::EtaRange => {
            let grid = MetricGrid::compute(&t)?;
            float_range(spec.from, spec.to, spec.step)
                .into_iter()
                .map(|eta| {
                    let prob = DesignProblem { eta, ..t };
                    match solve_on_grid(&prob, &grid) {
                        Ok(s) => SweepRow::solved(&prob, None, &s),
                        Err(e) => SweepRow::failed(&prob, None, f64::NAN, f64::NAN, &e),
                    }
                })
                .collect()
        }
        SweepAxis::NhatRange => int_range(spec.from, spec.to, spec.step)?
            .into_iter()
            .map(|n_hat| {
                let designed = DesignProblem {
                    n_users: n_hat,
                    ..t
                };
                let outcome = solve(&designed).and_then(|s| {
                    let m = analysis::evaluate(&t.params(s.q_opt, s.r_opt)?)?;
                    Ok((s, m))
                });
                match outcome {
                    Ok((s, m)) => SweepRow {
                        n_users: t.n_users,
                        n_hat: Some(n_hat),
                        theta: t.theta,
                        eta: t.eta,
                        q: s.q_opt,
                        r: s.r_opt,
                        c_norm: Some(m.c_norm),
                        d_crit: Some(m.d_crit),
                        status: Some(s.status),
                        error: None,
                    },
                    Err(e) => SweepRow::failed(&t, Some(n_hat), f64::NAN, f64::NAN, &e),
                }
            })
            .collect(),
    };
    Ok(rows)
}
