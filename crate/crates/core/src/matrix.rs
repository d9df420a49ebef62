//! One-shot zero-sum matrix games: exact LP solutions and regularized
//! (smoothed) saddle points.
//!
//! The exact path is a self-contained dense simplex on the classic
//! transformation: shift `M` entrywise positive, then solve
//! `max 1ᵀy  s.t.  M′y ≤ 1, y ≥ 0` — the slack basis is immediately feasible
//! (no phase 1), the optimum is `1/value′`, the normalized `y` is the column
//! strategy and the normalized duals are the row strategy. Bland's rule keeps
//! the pivoting finite even on degenerate tableaus.
//!
//! The regularized path finds the unique saddle of
//! `uᵀMθ − τ₁Ω₁(u) + τ₂Ω₂(θ)` (both Ω convex, penalizing concentration for
//! their owners). Alternating smoothed best responses only contract when the
//! temperatures dominate the payoff spread, so the driver anneals the
//! temperatures down to their targets and runs Newton on the best-response
//! fixed point at each level.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{keyed_unit_f64, RngSpec};

/// Pivot cap factor: a solve of an m×n game may use at most `50(m+n)²` pivots.
const PIVOT_CAP_FACTOR: u64 = 50;
/// Total iteration budget for one regularized solve (all anneal levels).
/// Sized so that even a solve forced into dozens of bisected retries and
/// cold restarts near a sharp solution-path transition can still finish.
const REG_SWEEP_CAP: u64 = 300_000;
/// Cap on annealing-level attempts (halvings plus bisected retries) for one
/// regularized solve.
const REG_LEVEL_ATTEMPTS: u32 = 2_000;
/// Sweep budget for a single annealing-level attempt. A healthy warm-started
/// Newton converges in well under a hundred sweeps; a level that exhausts
/// this is stuck (typically cycling at a sharp temperature) and reports
/// failure so the annealing driver can bisect the temperature step instead
/// of silently burning the whole solve budget.
const LEVEL_SWEEP_BUDGET: u64 = 2_000;
/// Max damping escalations per Levenberg–Marquardt step before the level
/// declares itself stuck at its numerical floor.
const LM_TRIALS: u32 = 36;
/// Total cold restarts (deterministic alternative starting points) allowed
/// across one regularized solve when warm-started tracking gets stuck.
const COLD_STARTS_MAX: u32 = 8;
/// Entering/pivot eligibility threshold for the simplex.
const SIMPLEX_EPS: f64 = 1e-11;

/// A mixed-strategy solution of a matrix game, with its certificate.
///
/// `duality_gap = max_i eᵢᵀMθ − min_j uᵀMeⱼ` measured on the *unregularized*
/// payoff matrix; it is ≥ 0 up to round-off and equals 0 exactly at a Nash
/// equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixGameSolution {
    /// Row (max player) strategy.
    pub u: Vec<f64>,
    /// Column (min player) strategy.
    pub theta: Vec<f64>,
    pub value: f64,
    pub duality_gap: f64,
}

/// Which concentration penalty the smoothed solver uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerKind {
    /// Negative Shannon entropy; smoothed best responses are softmax.
    NegEntropy,
    /// Negative Tsallis entropy with index `q ∈ (0,1)`; smoothed best
    /// responses solve a one-dimensional dual root-finding problem.
    Tsallis { q: f64 },
}

/// Regularizer choice plus the two temperatures (τ₁ for the max player,
/// τ₂ for the min player).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    #[serde(flatten)]
    pub kind: RegularizerKind,
    pub tau_max: f64,
    pub tau_min: f64,
}

impl RegularizerSpec {
    pub fn neg_entropy(tau_max: f64, tau_min: f64) -> Self {
        RegularizerSpec {
            kind: RegularizerKind::NegEntropy,
            tau_max,
            tau_min,
        }
    }

    pub fn tsallis(q: f64, tau_max: f64, tau_min: f64) -> Self {
        RegularizerSpec {
            kind: RegularizerKind::Tsallis { q },
            tau_max,
            tau_min,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return Err(Error::invalid("tau_max", format!("must be > 0, got {}", self.tau_max)));
        }
        if !(self.tau_min > 0.0 && self.tau_min.is_finite()) {
            return Err(Error::invalid("tau_min", format!("must be > 0, got {}", self.tau_min)));
        }
        if let RegularizerKind::Tsallis { q } = self.kind {
            if !(0.0 < q && q < 1.0) {
                return Err(Error::invalid("q", format!("Tsallis index must be in (0,1), got {q}")));
            }
        }
        Ok(())
    }
}

fn check_matrix(m: &[Vec<f64>]) -> Result<(usize, usize)> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension("empty payoff matrix".into()));
    }
    for (i, row) in m.iter().enumerate() {
        if row.len() != cols {
            return Err(Error::Dimension(format!(
                "ragged payoff matrix: row {i} has {} entries, expected {cols}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("M[{i}][{j}]"), format!("non-finite entry {v}")));
            }
        }
    }
    Ok((rows, cols))
}

/// `max_i eᵢᵀMθ − min_j uᵀMeⱼ` for an arbitrary strategy pair.
fn pair_gap(m: &[Vec<f64>], u: &[f64], theta: &[f64]) -> f64 {
    let rows = m.len();
    let cols = m[0].len();
    let mut best_row = f64::NEG_INFINITY;
    for row in m.iter().take(rows) {
        let mut payoff = 0.0;
        for j in 0..cols {
            payoff += row[j] * theta[j];
        }
        best_row = best_row.max(payoff);
    }
    let mut best_col = f64::INFINITY;
    for j in 0..cols {
        let mut payoff = 0.0;
        for (i, row) in m.iter().enumerate() {
            payoff += u[i] * row[j];
        }
        best_col = best_col.min(payoff);
    }
    best_row - best_col
}

fn normalize_clamped(v: &mut [f64]) {
    let mut sum = 0.0;
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
        sum += *x;
    }
    if sum > 0.0 {
        for x in v.iter_mut() {
            *x /= sum;
        }
    }
}

/// Exact matrix-game solve via the dual-form simplex.
///
/// Returns strategies with `duality_gap ≤ tol`; a larger gap (or an exceeded
/// pivot cap) is reported as an error because this LP is always feasible and
/// bounded — it can only mean a solver defect.
pub fn solve_exact(m: &[Vec<f64>], tol: f64) -> Result<MatrixGameSolution> {
    let (rows, cols) = check_matrix(m)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }

    // Shift entrywise positive so the game value is strictly positive: the
    // minimum entry of M' is exactly 1.
    let min_entry = m
        .iter()
        .flatten()
        .fold(f64::INFINITY, |acc, &v| acc.min(v));
    let shift = 1.0 - min_entry;
    let mp: Vec<Vec<f64>> = m
        .iter()
        .map(|row| row.iter().map(|&v| v + shift).collect())
        .collect();

    // Tableau: rows constraints (M'y + s = 1), last row objective (max Σy).
    let n_cols = cols + rows + 1; // structural + slack + rhs
    let rhs = cols + rows;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(rows + 1);
    for i in 0..rows {
        let mut row = vec![0.0; n_cols];
        row[..cols].copy_from_slice(&mp[i]);
        row[cols + i] = 1.0;
        row[rhs] = 1.0;
        t.push(row);
    }
    let mut obj = vec![0.0; n_cols];
    for j in 0..cols {
        obj[j] = -1.0;
    }
    t.push(obj);
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    let cap = PIVOT_CAP_FACTOR * ((rows + cols) as u64).pow(2);
    let mut pivots = 0u64;
    loop {
        // Bland: entering = lowest-index column with negative reduced cost.
        let mut entering = None;
        for (j, &c) in t[rows].iter().enumerate().take(cols + rows) {
            if c < -SIMPLEX_EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(je) = entering else { break };

        // Ratio test; ties break toward the smallest basic variable index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows {
            let a = t[i][je];
            if a > SIMPLEX_EPS {
                let ratio = t[i][rhs] / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 * (1.0 + lr.abs())
                            || (ratio <= lr + 1e-12 * (1.0 + lr.abs()) && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((li, _)) = leave else {
            return Err(Error::Internal {
                context: "matrix-game simplex",
                message: "unbounded direction in a bounded LP".into(),
            });
        };

        // Pivot.
        let piv = t[li][je];
        for x in t[li].iter_mut() {
            *x /= piv;
        }
        for i in 0..=rows {
            if i != li {
                let f = t[i][je];
                if f != 0.0 {
                    for j in 0..n_cols {
                        t[i][j] -= f * t[li][j];
                    }
                    t[i][je] = 0.0;
                }
            }
        }
        basis[li] = je;
        pivots += 1;
        if pivots > cap {
            return Err(Error::IterationCap {
                context: "matrix-game simplex",
                cap,
                achieved: t[rows][rhs],
            });
        }
    }

    // Column strategy from the basis, row strategy from the slack duals.
    let mut y = vec![0.0; cols];
    for (i, &bv) in basis.iter().enumerate() {
        if bv < cols {
            y[bv] = t[i][rhs];
        }
    }
    let mut x = vec![0.0; rows];
    for i in 0..rows {
        x[i] = t[rows][cols + i];
    }
    let sum_y: f64 = y.iter().filter(|v| **v > 0.0).sum();
    if !(sum_y > 0.0) {
        return Err(Error::Internal {
            context: "matrix-game simplex",
            message: format!("degenerate optimum Σy = {sum_y}"),
        });
    }
    let value = 1.0 / sum_y - shift;
    normalize_clamped(&mut y);
    normalize_clamped(&mut x);

    let gap = pair_gap(m, &x, &y);
    if gap > tol {
        return Err(Error::Internal {
            context: "matrix-game simplex",
            message: format!("duality gap {gap:.3e} exceeds tolerance {tol:.3e}"),
        });
    }
    Ok(MatrixGameSolution {
        u: x,
        theta: y,
        value,
        duality_gap: gap,
    })
}

/// `(max_i min_j m_ij, min_j max_i m_ij)`. The game value always lies between
/// them, with equality exactly when a pure saddle point exists.
pub fn value_bounds(m: &[Vec<f64>]) -> Result<(f64, f64)> {
    let (rows, cols) = check_matrix(m)?;
    let maximin = (0..rows)
        .map(|i| m[i].iter().fold(f64::INFINITY, |acc, &v| acc.min(v)))
        .fold(f64::NEG_INFINITY, f64::max);
    let minimax = (0..cols)
        .map(|j| (0..rows).map(|i| m[i][j]).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    Ok((maximin, minimax))
}

/// Check that swapping sides between an exact and an ε-approximate solution
/// still yields near-equilibria: both cross pairs must have duality gap
/// ≤ `2·eps + 1e-8`.
pub fn check_interchange(
    m: &[Vec<f64>],
    sol_exact: &MatrixGameSolution,
    sol_approx: &MatrixGameSolution,
    eps: f64,
) -> Result<bool> {
    let (rows, cols) = check_matrix(m)?;
    for sol in [sol_exact, sol_approx] {
        if sol.u.len() != rows || sol.theta.len() != cols {
            return Err(Error::Dimension(format!(
                "solution shape ({}, {}) does not match matrix ({rows}, {cols})",
                sol.u.len(),
                sol.theta.len()
            )));
        }
    }
    let bound = 2.0 * eps + 1e-8;
    let cross1 = pair_gap(m, &sol_exact.u, &sol_approx.theta);
    let cross2 = pair_gap(m, &sol_approx.u, &sol_exact.theta);
    Ok(cross1 <= bound && cross2 <= bound)
}

// ---------------------------------------------------------------------------
// Smoothed best responses.
// ---------------------------------------------------------------------------

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// argmax_u uᵀg − τ·Ω(u) for the configured regularizer (interior, unique).
fn smoothed_br_max(g: &[f64], tau: f64, kind: RegularizerKind) -> Vec<f64> {
    match kind {
        RegularizerKind::NegEntropy => {
            // Difference the scores *before* dividing by the temperature:
            // the response only depends on score gaps, and subtracting the
            // max first keeps the rounding error of a large common offset
            // from being amplified by 1/τ.
            let gmax = g.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let scaled: Vec<f64> = g.iter().map(|&v| (v - gmax) / tau).collect();
            softmax(&scaled)
        }
        RegularizerKind::Tsallis { q } => tsallis_br(g, tau, q),
    }
}

/// argmin_θ θᵀg + τ·Ω(θ) — same kernel with the payoff sign flipped.
fn smoothed_br_min(g: &[f64], tau: f64, kind: RegularizerKind) -> Vec<f64> {
    let neg: Vec<f64> = g.iter().map(|&v| -v).collect();
    smoothed_br_max(&neg, tau, kind)
}

/// Tsallis smoothed best response by bisection on the dual variable λ:
/// `u_i(λ) = [τq/((1−q)(λ−g_i))]^{1/(1−q)}`, with λ bracketed analytically.
fn tsallis_br(g: &[f64], tau: f64, q: f64) -> Vec<f64> {
    let n = g.len();
    let gmax = g.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    // Shift the largest score to zero: the response depends on score gaps
    // only, and differencing before any further arithmetic keeps a large
    // common offset from polluting the dual bracket.
    let gs: Vec<f64> = g.iter().map(|&v| v - gmax).collect();
    let c = tau * q / (1.0 - q);
    let comp = |lambda: f64| -> Vec<f64> {
        gs.iter()
            .map(|&gi| (c / (lambda - gi)).powf(1.0 / (1.0 - q)))
            .collect()
    };
    // At λ = c the largest (shifted) component is exactly 1 (sum ≥ 1);
    // at λ = c·n^{1−q} + c every component is ≤ 1/n (sum ≤ 1).
    let mut lo = 0.5 * c;
    let mut hi = c * (n as f64).powf(1.0 - q) + c;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let s: f64 = comp(mid).iter().sum();
        if s > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * (1.0 + hi.abs()) {
            break;
        }
    }
    let mut u = comp(0.5 * (lo + hi));
    normalize_clamped(&mut u);
    u
}

fn mat_vec(m: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(theta).map(|(a, b)| a * b).sum())
        .collect()
}

fn vec_mat(u: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let cols = m[0].len();
    let mut out = vec![0.0; cols];
    for (i, row) in m.iter().enumerate() {
        if u[i] != 0.0 {
            for j in 0..cols {
                out[j] += u[i] * row[j];
            }
        }
    }
    out
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Unique saddle point of the regularized game
/// `max_u min_θ uᵀMθ − τ₁Ω₁(u) + τ₂Ω₂(θ)`.
///
/// The saddle point is tracked down an annealing schedule (temperatures
/// halved from a level where the damped best-response alternation contracts,
/// with the step bisected whenever a level fails to converge from the
/// current warm start), with Newton acceleration on the fixed point at each
/// level. Convergence is declared when the returned pair reproduces itself
/// under one more best-response exchange to within `max(tol, 1e-9)` in max
/// norm; a pair that cannot be certified to that precision is reported as
/// [`Error::NonConvergence`] rather than returned.
///
/// The attainable residual is limited by the floating-point grid: the
/// exchange map's Lipschitz constant grows like `spread²/(τ₁τ₂)`, and once
/// it passes ~1e7 the true fixed point can fall *between* adjacent
/// representable policies, leaving every representable pair with a residual
/// of several 1e-9. Callers using temperatures sharper than about `1e-3`
/// times the payoff spread should request a correspondingly looser `tol`.
/// The reported `duality_gap` is measured on the unregularized payoff, so
/// for large temperatures it is genuinely large.
pub fn solve_regularized(m: &[Vec<f64>], reg: &RegularizerSpec, tol: f64) -> Result<MatrixGameSolution> {
    let (rows, cols) = check_matrix(m)?;
    reg.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }

    let max_e = m.iter().flatten().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let min_e = m.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    let spread = (max_e - min_e).max(1e-30);
    let tau_floor = reg.tau_max.min(reg.tau_min);
    let levels = if spread > tau_floor {
        (spread / tau_floor).log2().ceil() as i32
    } else {
        0
    };

    let mut theta = vec![1.0 / cols as f64; cols];
    let mut sweeps = 0u64;
    // Anneal the temperature multiplier from 2^levels down to 1. At the top
    // level the damped alternation contracts; at lower levels Newton does the
    // work and the warm start keeps it in its basin. After each converged
    // level the multiplier is halved; when a level fails from the current
    // warm start (small temperatures sharpen the smoothed responses, so a
    // full halving can overshoot the Newton basin), the step is bisected
    // geometrically toward the last good multiplier instead of giving up.
    let mut factor = (2.0f64).powi(levels);
    let mut good: Option<f64> = None;
    let mut ratio: f64 = 2.0;
    let mut attempts = 0u32;
    let mut cold_restarts = 0u32;
    let accept = tol.max(1e-9);
    loop {
        attempts += 1;
        if attempts > REG_LEVEL_ATTEMPTS {
            return Err(Error::NonConvergence {
                last_gap: pair_gap(m, &smoothed_br_max(&mat_vec(m, &theta), reg.tau_max, reg.kind), &theta),
                sweeps,
            });
        }
        let t1 = reg.tau_max * factor;
        let t2 = reg.tau_min * factor;
        // The Tsallis level may run two coordinate phases (see
        // `newton_tsallis_level`), so its attempt gets a two-phase budget.
        let phases: u64 = match reg.kind {
            RegularizerKind::NegEntropy => 1,
            RegularizerKind::Tsallis { .. } => 2,
        };
        let budget = (sweeps + phases * LEVEL_SWEEP_BUDGET).min(REG_SWEEP_CAP);
        // Intermediate levels track the annealing path as tightly as the
        // arithmetic allows — a loose warm start shrinks the Newton basin of
        // every later level, so relaxing them to the caller's tolerance
        // makes sharp-temperature solves *fail more*, not less. (Levels that
        // cannot reach the tight target stall gracefully and hand back their
        // best iterate.) Only the final level stops at the caller's
        // threshold, which is also exactly what the acceptance check below
        // applies.
        let stop = if factor <= 1.0 { accept } else { 0.5e-9 };
        let outcome = match reg.kind {
            RegularizerKind::NegEntropy => {
                newton_entropy_level(m, rows, cols, t1, t2, theta.clone(), stop, &mut sweeps, budget)
            }
            RegularizerKind::Tsallis { q } => {
                newton_tsallis_level(m, cols, t1, t2, q, theta.clone(), stop, &mut sweeps, budget)
            }
        };
        if outcome.res <= accept {
            // The level either hit its target or stalled at a floor that
            // already meets the certified residual; either way the iterate
            // is good enough to carry forward.
            theta = outcome.theta;
            if factor <= 1.0 {
                break;
            }
            good = Some(factor);
            // Keep the step size that just worked and re-grow it gently.
            // Resetting straight to halving would leap back across any
            // fast-moving stretch of the solution path that forced the
            // step down in the first place.
            ratio = (ratio * 1.2).min(2.0);
            factor = (factor / ratio).max(1.0);
        } else {
            let fail = Error::NonConvergence {
                last_gap: outcome.res,
                sweeps,
            };
            if sweeps > REG_SWEEP_CAP {
                return Err(fail);
            }
            match good {
                None => {
                    // Either the contracting top level itself failed (no
                    // restart can help) or a cold start below did. Cold
                    // starts get several deterministic tries: the saddle
                    // point is unique, so any start inside its attraction
                    // basin suffices.
                    if cold_restarts == 0 || cold_restarts >= COLD_STARTS_MAX {
                        return Err(fail);
                    }
                    cold_restarts += 1;
                    theta = cold_start(cols, cold_restarts);
                }
                Some(g) => {
                    let mid = (g * factor).sqrt();
                    if mid < g * 0.999 {
                        ratio = g / mid;
                        factor = mid;
                    } else if cold_restarts < COLD_STARTS_MAX {
                        // Even sub-percent temperature steps fail from this
                        // warm start: the solution path moves almost
                        // vertically in τ here, so tracking it locally is
                        // hopeless. Jump past the stretch instead — restart
                        // the next halved level cold, with no commitment to
                        // the wrong side of the transition.
                        cold_restarts += 1;
                        factor = (0.5 * g).max(1.0);
                        theta = cold_start(cols, cold_restarts);
                        good = None;
                        ratio = 2.0;
                    } else {
                        return Err(fail);
                    }
                }
            }
        }
    }

    // Return the converged iterate θ itself together with the exact smoothed
    // best response u to it. (Taking one more exchange and returning the
    // image instead would *discard* the converged point: at sharp
    // temperatures the exchange map amplifies the residual by its Lipschitz
    // constant, which grows like 1/τ².)
    let u = smoothed_br_max(&mat_vec(m, &theta), reg.tau_max, reg.kind);
    let theta_back = smoothed_br_min(&vec_mat(&u, m), reg.tau_min, reg.kind);
    let residual = linf(&theta_back, &theta);
    let gap = pair_gap(m, &u, &theta);
    if residual > accept {
        return Err(Error::NonConvergence {
            last_gap: gap,
            sweeps,
        });
    }
    let mut value = 0.0;
    for (i, row) in m.iter().enumerate() {
        for (j, &mv) in row.iter().enumerate() {
            value += u[i] * mv * theta[j];
        }
    }
    Ok(MatrixGameSolution {
        u,
        theta,
        value,
        duality_gap: gap,
    })
}

/// What one annealing level handed back: the best iterate it reached and
/// that iterate's round-trip residual. The caller decides whether the
/// residual is good enough to carry forward.
struct LevelOutcome {
    theta: Vec<f64>,
    res: f64,
}

/// Deterministic interior starting point number `k` for cold restarts:
/// the uniform policy first, then fixed pseudo-random points kept well away
/// from the simplex boundary.
fn cold_start(cols: usize, k: u32) -> Vec<f64> {
    if k <= 1 {
        return vec![1.0 / cols as f64; cols];
    }
    let rng = RngSpec::new(0x5ADD1E, u64::from(k));
    let mut v: Vec<f64> = (0..cols)
        .map(|j| 0.2 + keyed_unit_f64(rng, &[j as u64]))
        .collect();
    normalize_clamped(&mut v);
    v
}

/// One annealing level for the entropy regularizer: Levenberg–Marquardt in
/// log-policy coordinates `z` with `θ = softmax(z)`, which keeps every
/// iterate feasible and stays well-conditioned even when the solution
/// concentrates.
#[allow(clippy::too_many_arguments)]
fn newton_entropy_level(
    m: &[Vec<f64>],
    rows: usize,
    cols: usize,
    t1: f64,
    t2: f64,
    theta0: Vec<f64>,
    stop: f64,
    sweeps: &mut u64,
    budget: u64,
) -> LevelOutcome {
    // z = −Mᵀu/τ₂ at the fixed point; softmax(z) = θ. The optimizer drives
    // the z-space residual F = z + Mᵀu/τ₂, but convergence is judged on the
    // probability-space round trip ‖θ − BR_min(Mᵀ BR_max(Mθ))‖∞ — the same
    // quantity the caller's final acceptance check measures — because the
    // z-residual scales with 1/τ₂ and has no uniform attainable floor.
    let eval = |z: &DVector<f64>| -> (Vec<f64>, Vec<f64>, DVector<f64>, f64) {
        let theta = softmax(z.as_slice());
        let u = smoothed_br_max(&mat_vec(m, &theta), t1, RegularizerKind::NegEntropy);
        let w = vec_mat(&u, m);
        let wm = w.iter().sum::<f64>() / cols as f64;
        // softmax ignores constant shifts, so the residual is posed in the
        // mean-free quotient: z is kept centered and the payoff pull is
        // centered *before* the division by τ₂. Otherwise the fixed point
        // pins z to the representative −w/τ₂, whose large common offset
        // turns one ulp of z into an f-space error of order ‖w‖/τ₂ · ulp —
        // an artificial convergence floor.
        let f = DVector::from_fn(cols, |j, _| z[j] + (w[j] - wm) / t2);
        let back = smoothed_br_min(&w, t2, RegularizerKind::NegEntropy);
        let res = linf(&back, &theta);
        (theta, u, f, res)
    };

    let mut z = DVector::from_fn(cols, |j, _| theta0[j].max(1e-290).ln());
    let zm = z.mean();
    for j in 0..cols {
        z[j] -= zm;
    }
    let (_, _, mut f, mut res) = eval(&z);
    let mut lambda: f64 = 1e-6;
    while res > stop {
        let (theta, u, _, _) = eval(&z);
        // J = I + Mᵀ S_u M S_θ / (τ₁τ₂); it is nonsingular (identity plus a
        // product of positive-semidefinite factors), so the only stationary
        // point of ‖F‖² is the fixed point itself and damped descent cannot
        // get trapped elsewhere.
        let s_u = DMatrix::from_fn(rows, rows, |i, j| {
            let d = if i == j { u[i] } else { 0.0 };
            d - u[i] * u[j]
        });
        let s_t = DMatrix::from_fn(cols, cols, |i, j| {
            let d = if i == j { theta[i] } else { 0.0 };
            d - theta[i] * theta[j]
        });
        let mmat = DMatrix::from_fn(rows, cols, |i, j| m[i][j]);
        let mut prod = (mmat.transpose() * s_u * mmat * s_t) / (t1 * t2);
        // Column-center the product to match the centered residual. The
        // centered Jacobian maps the all-ones direction to itself (the
        // product annihilates it), so the system stays nonsingular and the
        // solved steps are automatically mean-free.
        for j in 0..cols {
            let cm = (0..cols).map(|i| prod[(i, j)]).sum::<f64>() / cols as f64;
            for i in 0..cols {
                prod[(i, j)] -= cm;
            }
        }
        let jac = DMatrix::identity(cols, cols) + prod;
        let fsq = f.norm_squared();
        // Try the undamped Newton step first. Near the fixed point it
        // converges quadratically, and solving against J directly matters:
        // for interior solutions J's entries grow like 1/τ², so the Gram
        // system below squares an already large condition number and its
        // noise floor can stall the iteration several orders above what the
        // plain Newton system still resolves cleanly.
        if let Ok(step) = linalg::solve_dense(jac.clone(), -&f, "regularized newton") {
            let z_try = &z + step;
            let (_, _, f_try, r_try) = eval(&z_try);
            *sweeps += 1;
            if *sweeps > budget {
                return LevelOutcome {
                    theta: softmax(z.as_slice()),
                    res,
                };
            }
            if f_try.norm_squared() < fsq {
                z = z_try;
                f = f_try;
                res = r_try;
                lambda = (lambda * 0.25).clamp(1e-12, 1e3);
                continue;
            }
        }
        let jt = jac.transpose();
        let gram = &jt * &jac;
        let grad = &jt * &f;
        let zscale = 1e-16 * (1.0 + z.amax());
        let mut lam = lambda;
        let mut accepted = false;
        for _ in 0..LM_TRIALS {
            let mut damped = gram.clone();
            for i in 0..cols {
                damped[(i, i)] += lam * gram[(i, i)].max(1e-30);
            }
            if let Ok(step) = linalg::solve_dense(damped, -&grad, "regularized LM") {
                if step.amax() <= zscale && lam <= 1.0 {
                    // A barely-damped descent step already falls below one
                    // ulp of the iterate: ‖F‖ is at its representable floor.
                    return LevelOutcome {
                        theta: softmax(z.as_slice()),
                        res,
                    };
                }
                let z_try = &z + step;
                let (_, _, f_try, r_try) = eval(&z_try);
                *sweeps += 1;
                if *sweeps > budget {
                    return LevelOutcome {
                        theta: softmax(z.as_slice()),
                        res,
                    };
                }
                if f_try.norm_squared() < fsq {
                    z = z_try;
                    f = f_try;
                    res = r_try;
                    // Carry a clamped damping over to the next iteration so
                    // one rough stretch cannot poison the rest of the level.
                    lambda = (lam * 0.25).clamp(1e-12, 1e3);
                    accepted = true;
                    break;
                }
            }
            lam *= 8.0;
        }
        if !accepted {
            // Damping was escalated through the whole trial ladder without
            // any decrease: ‖F‖ is at the numerical floor for this level.
            return LevelOutcome {
                theta: softmax(z.as_slice()),
                res,
            };
        }
    }
    LevelOutcome {
        theta: softmax(z.as_slice()),
        res,
    }
}

/// Log-coordinate phase of the Tsallis level: Levenberg–Marquardt on the
/// fixed-point map in log-policy coordinates (θ = softmax z), with an
/// analytic Jacobian.  This phase is exact near tiny power-law tails — see
/// `newton_tsallis_level` for how the two phases divide the territory.
#[allow(clippy::too_many_arguments)]
fn tsallis_level_log(
    m: &[Vec<f64>],
    cols: usize,
    t1: f64,
    t2: f64,
    q: f64,
    theta0: Vec<f64>,
    stop: f64,
    sweeps: &mut u64,
    budget: u64,
) -> LevelOutcome {
    let kind = RegularizerKind::Tsallis { q };
    // Residual of the probability-space round trip, as a function of the
    // log-policy vector z (θ = softmax z).  Working in z keeps every iterate
    // strictly inside the simplex with no clamping: at sharp temperatures
    // the power-law solution carries tail components of order (τ/Δ)^{1/(1−q)},
    // and additive θ-space steps near that boundary get mangled by the
    // clamp-and-renormalize projection — the realized step stops matching
    // the modeled one and the optimizer stalls.  Log-space steps move tail
    // components multiplicatively and need no projection at all.
    let eval = |z: &DVector<f64>| -> (Vec<f64>, Vec<f64>, Vec<f64>, DVector<f64>, f64) {
        let theta = softmax(z.as_slice());
        let u = smoothed_br_max(&mat_vec(m, &theta), t1, kind);
        let back = smoothed_br_min(&vec_mat(&u, m), t2, kind);
        let f = DVector::from_fn(cols, |j, _| theta[j] - back[j]);
        let res = f.amax();
        (theta, u, back, f, res)
    };
    // Derivative of the power-law response with respect to its scores,
    // computable from the response probabilities alone: the dual variable
    // satisfies λ − g_i = c·u_i^{−(1−q)}, so the sensitivity weights are
    // ŝ_i = u_i/(λ−g_i) = u_i^{2−q}/c and
    //     du/dg = (diag ŝ − ŝŝᵀ/Σŝ) / (τq),
    // whose q → 1 limit is the softmax Jacobian (diag u − uuᵀ)/τ.
    let sens = |p: &[f64], tau: f64| -> DMatrix<f64> {
        let n = p.len();
        let sh: Vec<f64> = p.iter().map(|&v| v.powf(2.0 - q)).collect();
        let tot: f64 = sh.iter().sum();
        let scale = 1.0 / (tau * q);
        DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { sh[i] } else { 0.0 };
            (d - sh[i] * sh[j] / tot) * scale
        })
    };
    let rows = m.len();
    let md = DMatrix::from_fn(rows, cols, |i, j| m[i][j]);
    let mut z = DVector::from_fn(cols, |j, _| theta0[j].max(1e-290).ln());
    let z_mean = z.mean();
    for v in z.iter_mut() {
        *v -= z_mean;
    }
    let (mut theta, mut u, mut back, mut f, mut res) = eval(&z);
    let mut lambda: f64 = 1e-6;
    while res > stop {
        // Chain rule through both responses and the parametrization:
        //   f(z) = θ − BRmin(BRmax(M θ)ᵀ M),  θ = softmax z,
        //   J = (I + A₂ Mᵀ A₁ M) S_θ,
        // where A₁, A₂ are the response derivatives on the max and min side
        // (the min side composes through a negated score, and f subtracts
        // it, so the two signs cancel) and S_θ = diag θ − θθᵀ.
        let a1 = sens(&u, t1);
        let a2 = sens(&back, t2);
        let s_theta = DMatrix::from_fn(cols, cols, |i, j| {
            let d = if i == j { theta[i] } else { 0.0 };
            d - theta[i] * theta[j]
        });
        let mut jac =
            (DMatrix::identity(cols, cols) + &a2 * md.transpose() * &a1 * &md) * &s_theta;
        // softmax is shift-invariant, so z ↦ f annihilates the all-ones
        // direction on both sides (f and every Jacobian column sum to
        // zero).  Sweep out the floating-point dirt in the column sums,
        // then pin the null space: the extended system maps 1 → 1, and
        // because 1ᵀf = 0 the computed step is automatically mean-free,
        // keeping z centered without any explicit renormalization.
        let pin = 1.0 / cols as f64;
        for j in 0..cols {
            let mean: f64 = (0..cols).map(|i| jac[(i, j)]).sum::<f64>() * pin;
            for i in 0..cols {
                jac[(i, j)] += pin - mean;
            }
        }
        let fsq = f.norm_squared();
        // Undamped Newton trial first — same rationale as the entropy level:
        // it sidesteps the squared conditioning of the Gram system, which
        // otherwise caps the attainable residual for interior solutions.
        if let Ok(step) = linalg::solve_dense(jac.clone(), -&f, "tsallis newton") {
            let z_try = &z + &step;
            let (th_try, u_try, b_try, f_try, r_try) = eval(&z_try);
            *sweeps += 1;
            if *sweeps > budget {
                return LevelOutcome { theta, res };
            }
            if f_try.norm_squared() < fsq {
                z = z_try;
                theta = th_try;
                u = u_try;
                back = b_try;
                f = f_try;
                res = r_try;
                lambda = (lambda * 0.25).clamp(1e-12, 1e3);
                continue;
            }
        }
        let jt = jac.transpose();
        let gram = &jt * &jac;
        let grad = &jt * &f;
        let zscale = 1e-12 * (1.0 + z.amax());
        let mut lam = lambda;
        let mut accepted = false;
        for _ in 0..LM_TRIALS {
            let mut damped = gram.clone();
            for i in 0..cols {
                damped[(i, i)] += lam * gram[(i, i)].max(1e-30);
            }
            if let Ok(step) = linalg::solve_dense(damped, -&grad, "tsallis LM") {
                if step.amax() <= zscale && lam <= 1.0 {
                    // A barely-damped descent step already falls below one
                    // ulp of the iterate: ‖f‖ is at its representable floor.
                    return LevelOutcome { theta, res };
                }
                let z_try = &z + &step;
                let (th_try, u_try, b_try, f_try, r_try) = eval(&z_try);
                *sweeps += 1;
                if *sweeps > budget {
                    return LevelOutcome { theta, res };
                }
                if f_try.norm_squared() < fsq {
                    z = z_try;
                    theta = th_try;
                    u = u_try;
                    back = b_try;
                    f = f_try;
                    res = r_try;
                    // Carry a clamped damping over to the next iteration so
                    // one rough stretch cannot poison the rest of the level.
                    lambda = (lam * 0.25).clamp(1e-12, 1e3);
                    accepted = true;
                    break;
                }
            }
            lam *= 8.0;
        }
        if !accepted {
            // The least-squares model found no descent.  Fall back to damped
            // best-response alternation, which needs no derivatives: the
            // step direction −f points at the exchanged pair itself.  The
            // candidate is re-expressed in z so the next iteration stays in
            // log coordinates.
            let mut beta = 1.0;
            let mut rescued = false;
            for _ in 0..12 {
                let mut cand: Vec<f64> = theta
                    .iter()
                    .zip(f.iter())
                    .map(|(&t, &fv)| (t - beta * fv).max(1e-290))
                    .collect();
                normalize_clamped(&mut cand);
                let mut z_try = DVector::from_fn(cols, |j, _| cand[j].max(1e-290).ln());
                let zt_mean = z_try.mean();
                for v in z_try.iter_mut() {
                    *v -= zt_mean;
                }
                let (th_try, u_try, b_try, f_try, r_try) = eval(&z_try);
                *sweeps += 1;
                if *sweeps > budget {
                    return LevelOutcome { theta, res };
                }
                if f_try.norm_squared() < fsq {
                    z = z_try;
                    theta = th_try;
                    u = u_try;
                    back = b_try;
                    f = f_try;
                    res = r_try;
                    rescued = true;
                    break;
                }
                beta *= 0.5;
            }
            if !rescued {
                // Neither curvature-guided nor plain alternation steps can
                // decrease ‖f‖: the iterate is at this level's floor.
                return LevelOutcome { theta, res };
            }
        }
    }
    LevelOutcome { theta, res }
}

/// Direct-coordinate phase of the Tsallis level: Levenberg–Marquardt on the
/// reduced fixed-point map in plain simplex coordinates with a forward-
/// difference Jacobian.  Steps here are additive in θ, which tracks support
/// collapses well — see `newton_tsallis_level` for the division of labor.
#[allow(clippy::too_many_arguments)]
fn tsallis_level_direct(
    m: &[Vec<f64>],
    cols: usize,
    t1: f64,
    t2: f64,
    q: f64,
    theta0: Vec<f64>,
    stop: f64,
    sweeps: &mut u64,
    budget: u64,
) -> LevelOutcome {
    let kind = RegularizerKind::Tsallis { q };
    let h_map = |theta: &[f64]| -> Vec<f64> {
        let u = smoothed_br_max(&mat_vec(m, theta), t1, kind);
        let back = smoothed_br_min(&vec_mat(&u, m), t2, kind);
        theta.iter().zip(&back).map(|(a, b)| a - b).collect()
    };
    let sq = |h: &[f64]| -> f64 { h.iter().map(|&v| v * v).sum() };

    let mut theta = theta0;
    let mut h = h_map(&theta);
    // h is already the probability-space round-trip residual, the same
    // quantity the caller's final acceptance check measures.
    // Reduced coordinates: last component eliminated by the simplex
    // constraint (the residual components always sum to zero).
    let r = cols - 1;
    let mut lambda: f64 = 1e-6;
    while h.iter().fold(0.0f64, |a, &b| a.max(b.abs())) > stop {
        if r == 0 {
            break; // single column: θ = [1] is the whole simplex
        }
        // Probe step for the finite-difference Jacobian: small enough to
        // stay on one smooth piece of the best-response map (whose curvature
        // scale shrinks with the temperature), large enough to stand clear
        // of the bisection noise in the responses.
        let fd = (t1.min(t2) * 1e-3).max(1e-9);
        let mut jac = DMatrix::zeros(r, r);
        for j in 0..r {
            let mut pert = theta.clone();
            pert[j] += fd;
            pert[cols - 1] -= fd;
            let hp = h_map(&pert);
            for i in 0..r {
                jac[(i, j)] = (hp[i] - h[i]) / fd;
            }
        }
        let hr = DVector::from_fn(r, |i, _| h[i]);
        let hsq = sq(&h);
        let make_cand = |step: &DVector<f64>| -> Vec<f64> {
            let mut cand = theta.clone();
            let mut head = 0.0;
            for j in 0..r {
                cand[j] = (theta[j] + step[j]).max(1e-12);
                head += cand[j];
            }
            cand[cols - 1] = (1.0 - head).max(1e-12);
            normalize_clamped(&mut cand);
            cand
        };
        // Undamped Newton trial first — same rationale as the entropy level:
        // it sidesteps the squared conditioning of the Gram system, which
        // otherwise caps the attainable residual for interior solutions.
        if let Ok(step) = linalg::solve_dense(jac.clone(), -&hr, "tsallis newton") {
            let cand = make_cand(&step);
            let hc = h_map(&cand);
            *sweeps += 1;
            if *sweeps > budget {
                let res = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                return LevelOutcome { theta, res };
            }
            if sq(&hc) < hsq {
                theta = cand;
                h = hc;
                lambda = (lambda * 0.25).clamp(1e-12, 1e3);
                continue;
            }
        }
        let jt = jac.transpose();
        let gram = &jt * &jac;
        let grad = &jt * &hr;
        let mut lam = lambda;
        let mut accepted = false;
        for _ in 0..LM_TRIALS {
            let mut damped = gram.clone();
            for i in 0..r {
                damped[(i, i)] += lam * gram[(i, i)].max(1e-30);
            }
            if let Ok(step) = linalg::solve_dense(damped, -&grad, "tsallis LM") {
                if step.amax() <= 1e-16 && lam <= 1.0 {
                    // A barely-damped descent step already falls below one
                    // ulp of the iterate: ‖h‖ is at its representable floor.
                    let res = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                    return LevelOutcome { theta, res };
                }
                let cand = make_cand(&step);
                let hc = h_map(&cand);
                *sweeps += 1;
                if *sweeps > budget {
                    let res = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                    return LevelOutcome { theta, res };
                }
                if sq(&hc) < hsq {
                    theta = cand;
                    h = hc;
                    // Carry a clamped damping over to the next iteration so
                    // one rough stretch cannot poison the rest of the level.
                    lambda = (lam * 0.25).clamp(1e-12, 1e3);
                    accepted = true;
                    break;
                }
            }
            lam *= 8.0;
        }
        if !accepted {
            // The least-squares model found no descent.  Fall back to damped
            // best-response alternation, which needs no derivatives: the
            // step direction −h points at the exchanged pair itself.
            let mut beta = 1.0;
            let mut rescued = false;
            for _ in 0..12 {
                let mut cand: Vec<f64> = theta
                    .iter()
                    .zip(&h)
                    .map(|(&t, &hv)| (t - beta * hv).max(1e-12))
                    .collect();
                normalize_clamped(&mut cand);
                let hc = h_map(&cand);
                *sweeps += 1;
                if *sweeps > budget {
                    let res = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                    return LevelOutcome { theta, res };
                }
                if sq(&hc) < hsq {
                    theta = cand;
                    h = hc;
                    rescued = true;
                    break;
                }
                beta *= 0.5;
            }
            if !rescued {
                // Neither curvature-guided nor plain alternation steps can
                // decrease ‖h‖: the iterate is at this level's floor.
                let res = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
                return LevelOutcome { theta, res };
            }
        }
    }
    let res = h.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    LevelOutcome { theta, res }
}

/// One annealing level for the Tsallis regularizer, run as a cascade of two
/// coordinate systems with complementary failure modes.
///
/// Direct simplex coordinates take additive steps, which cross support
/// collapses cleanly (a component driven toward zero and back is a short
/// path in θ), but stall when the solution's power-law tails are tiny: near
/// the boundary the clamp-and-renormalize projection mangles every proposed
/// step, so the realized move stops matching the least-squares model.
///
/// Log coordinates (θ = softmax z) take multiplicative steps, which resolve
/// tails of any size without projection, but a component that must collapse
/// and return is an arbitrarily long path in z — the optimizer can chase a
/// descent valley toward the boundary at infinity, burning its budget on
/// crumb-sized decreases.
///
/// Each phase therefore rescues exactly the instances that defeat the
/// other.  Both start from the same warm start; the direct phase runs
/// first (it is the cheaper one on the typical well-conditioned level), and
/// the log phase only spends budget when the direct phase has stalled.
#[allow(clippy::too_many_arguments)]
fn newton_tsallis_level(
    m: &[Vec<f64>],
    cols: usize,
    t1: f64,
    t2: f64,
    q: f64,
    theta0: Vec<f64>,
    stop: f64,
    sweeps: &mut u64,
    budget: u64,
) -> LevelOutcome {
    let direct_cap = (*sweeps + LEVEL_SWEEP_BUDGET).min(budget);
    let direct = tsallis_level_direct(
        m,
        cols,
        t1,
        t2,
        q,
        theta0.clone(),
        stop,
        sweeps,
        direct_cap,
    );
    if direct.res <= stop {
        return direct;
    }
    let log = tsallis_level_log(m, cols, t1, t2, q, theta0, stop, sweeps, budget);
    if log.res <= direct.res {
        log
    } else {
        direct
    }
}

/// Empirically measure the smoothness constant of the regularized solution
/// map at the given temperatures: the largest observed ratio between the
/// total-variation displacement of the solution and a max-norm perturbation
/// `delta` of the payoff matrix, over `probes` random perturbations.
pub fn measure_smoothness(
    m: &[Vec<f64>],
    reg: &RegularizerSpec,
    probes: usize,
    delta: f64,
    rng: RngSpec,
) -> Result<f64> {
    let (rows, cols) = check_matrix(m)?;
    let tight = 1e-10;
    let base = solve_regularized(m, reg, tight)?;
    let mut c_max: f64 = 0.0;
    for p in 0..probes {
        let mut pert = m.to_vec();
        for (i, row) in pert.iter_mut().enumerate().take(rows) {
            for (j, v) in row.iter_mut().enumerate().take(cols) {
                let coin = keyed_unit_f64(rng, &[p as u64, i as u64, j as u64]);
                *v += if coin < 0.5 { -delta } else { delta };
            }
        }
        let sol = solve_regularized(&pert, reg, tight)?;
        let tv_u = 0.5
            * sol
                .u
                .iter()
                .zip(&base.u)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        let tv_t = 0.5
            * sol
                .theta
                .iter()
                .zip(&base.theta)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        c_max = c_max.max(tv_u.max(tv_t) / delta);
    }
    Ok(c_max)
}
