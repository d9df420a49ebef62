//! Equilibrium planning on a known game: Shapley value iteration with
//! per-state matrix-game backups, policy extraction through an exact or
//! smoothed matrix-game oracle, and a certified optimality measurement.
//!
//! The iteration stops once the contraction bound guarantees the Q-iterate is
//! within a quarter of the requested tolerance of the fixed point; the
//! returned tolerance is then *measured*, not assumed: both one-sided exact
//! best responses are computed against the extracted pair and compared to the
//! value estimate. If the measurement misses the request (possible when a
//! smoothed oracle extracts off-vertex policies), the iteration resumes at a
//! tighter internal target before giving up.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{best_response, MarkovGame, Owner, QTable, StationaryPolicy, VTable};
use crate::matrix::{solve_exact, solve_regularized, RegularizerSpec};

/// Per-state matrix-solve tolerance used for value backups and exact
/// extraction.
const STATE_SOLVE_TOL: f64 = 1e-9;
/// Fixed-point tolerance for smoothed per-state solves.
const SMOOTH_SOLVE_TOL: f64 = 1e-10;
/// How many times certification may tighten the internal target and resume.
const CERTIFY_RETRY_CAP: u32 = 12;

/// How the planner turns a Q-table into per-state strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleKind {
    /// Exact per-state LP solves; extracted policies sit on equilibrium
    /// vertices.
    ExactLp,
    /// Smoothed per-state saddle solves; extracted policies are interior and
    /// vary smoothly with the Q-table.
    SmoothRegularized { regularizer: RegularizerSpec },
}

/// Planner request: target optimality `eps_opt`, extraction oracle, and a
/// sweep budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub eps_opt: f64,
    pub oracle_kind: OracleKind,
    pub max_iters: u64,
}

impl PlanConfig {
    /// Exact-oracle configuration with a generous default sweep budget.
    pub fn exact(eps_opt: f64) -> Self {
        PlanConfig {
            eps_opt,
            oracle_kind: OracleKind::ExactLp,
            max_iters: 1_000_000,
        }
    }

    pub fn smooth(eps_opt: f64, regularizer: RegularizerSpec) -> Self {
        PlanConfig {
            eps_opt,
            oracle_kind: OracleKind::SmoothRegularized { regularizer },
            max_iters: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_opt > 0.0 && self.eps_opt.is_finite()) {
            return Err(Error::invalid(
                "eps_opt",
                format!("must be > 0, got {}", self.eps_opt),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters", "must be >= 1".to_string()));
        }
        if let OracleKind::SmoothRegularized { regularizer } = &self.oracle_kind {
            regularizer.validate()?;
        }
        Ok(())
    }
}

/// Output of a planning run, with the measured optimality certificate.
///
/// `certified_eps_opt` upper-bounds both `‖V^{μ̂,*} − V*‖∞` and
/// `‖V^{*,ν̂} − V*‖∞` on the planned game: the best-response values are
/// measured exactly and the distance from the value estimate to the true
/// fixed point is covered by the contraction bound at the stopping sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub q_star_hat: QTable,
    pub v_star_hat: VTable,
    pub mu_hat: StationaryPolicy,
    pub nu_hat: StationaryPolicy,
    pub certified_eps_opt: f64,
    pub iterations: u64,
}

/// One matrix-game backup sweep: returns `val(Q(s,·,·))` for every state.
fn state_values(q: &QTable) -> Result<Vec<f64>> {
    q.0.iter()
        .map(|m| Ok(solve_exact(m, STATE_SOLVE_TOL)?.value))
        .collect()
}

fn apply_backup(game: &MarkovGame, vals: &[f64]) -> QTable {
    let gamma = game.discount;
    QTable(
        (0..game.num_states)
            .map(|s| {
                (0..game.num_actions_max)
                    .map(|a| {
                        (0..game.num_actions_min)
                            .map(|b| {
                                let mut future = 0.0;
                                for (sp, &p) in game.transition[s][a][b].iter().enumerate() {
                                    if p != 0.0 {
                                        future += p * vals[sp];
                                    }
                                }
                                game.reward[s][a][b] + gamma * future
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Extract per-state strategies from a Q-table with the configured oracle.
fn extract(q: &QTable, oracle: &OracleKind) -> Result<(StationaryPolicy, StationaryPolicy)> {
    match oracle {
        OracleKind::ExactLp => one_step_ne_extract(q),
        OracleKind::SmoothRegularized { regularizer } => smooth_extract(q, regularizer),
    }
}

/// Plan a game to a certified optimality tolerance.
///
/// Iterates `Q ← r + γ P·val(Q)` until the contraction bound
/// `γ‖ΔQ‖∞/(1−γ)` falls below a quarter of `eps_opt`, extracts `(μ̂, ν̂)`
/// from the final table via the configured oracle, and certifies by exact
/// best responses. Certification shortfalls tighten the internal target
/// fourfold and resume the iteration (warm-started) before erroring out.
pub fn shapley_value_iteration(game: &MarkovGame, config: &PlanConfig) -> Result<PlanResult> {
    game.validate_relaxed()?;
    config.validate()?;
    let gamma = game.discount;

    let mut q = QTable(vec![
        vec![
            vec![0.0; game.num_actions_min];
            game.num_actions_max
        ];
        game.num_states
    ]);
    let mut sweeps = 0u64;
    let mut target = config.eps_opt / 4.0;

    for attempt in 0..=CERTIFY_RETRY_CAP {
        // Iterate until the contraction bound meets the current target.
        let mut delta_bound;
        loop {
            let vals = state_values(&q)?;
            let next = apply_backup(game, &vals);
            let diff = next.linf_distance(&q);
            q = next;
            sweeps += 1;
            delta_bound = if gamma == 0.0 {
                0.0
            } else {
                gamma * diff / (1.0 - gamma)
            };
            if delta_bound <= target {
                break;
            }
            if sweeps >= config.max_iters {
                return Err(Error::IterationCap {
                    context: "shapley value iteration",
                    cap: config.max_iters,
                    achieved: delta_bound,
                });
            }
        }

        // Value estimate and extraction from the settled table.
        let vals = state_values(&q)?;
        let v_hat = VTable(vals);
        let (mu_hat, nu_hat) = extract(&q, &config.oracle_kind)?;

        // Measured certificate: exact one-sided best responses vs. the value
        // estimate, plus the contraction slack covering ‖v̂ − V*‖∞.
        let (_, v_mu_star, _) = best_response(game, &mu_hat)?;
        let (_, v_star_nu, _) = best_response(game, &nu_hat)?;
        let measured = v_mu_star
            .linf_distance(&v_hat)
            .max(v_star_nu.linf_distance(&v_hat));
        let certified = measured + delta_bound;

        if certified <= config.eps_opt {
            return Ok(PlanResult {
                q_star_hat: q,
                v_star_hat: v_hat,
                mu_hat,
                nu_hat,
                certified_eps_opt: certified,
                iterations: sweeps,
            });
        }
        if attempt == CERTIFY_RETRY_CAP {
            return Err(Error::Certification {
                achieved: certified,
                requested: config.eps_opt,
            });
        }
        target /= 4.0;
    }
    unreachable!("certification loop exits by return");
}

/// Per-state exact equilibrium strategies of a Q-table: the max player's
/// strategy of `solve_exact(Q(s,·,·))` for each state, and likewise for the
/// min player.
pub fn one_step_ne_extract(q: &QTable) -> Result<(StationaryPolicy, StationaryPolicy)> {
    let mut mu = Vec::with_capacity(q.0.len());
    let mut nu = Vec::with_capacity(q.0.len());
    for m in &q.0 {
        let sol = solve_exact(m, STATE_SOLVE_TOL)?;
        mu.push(sol.u);
        nu.push(sol.theta);
    }
    Ok((
        StationaryPolicy {
            owner: Owner::MaxPlayer,
            dist: mu,
        },
        StationaryPolicy {
            owner: Owner::MinPlayer,
            dist: nu,
        },
    ))
}

/// Per-state smoothed equilibrium strategies of a Q-table; the extraction map
/// varies smoothly with `q`, at the cost of a temperature-dependent offset
/// from the exact equilibrium.
pub fn smooth_extract(
    q: &QTable,
    reg: &RegularizerSpec,
) -> Result<(StationaryPolicy, StationaryPolicy)> {
    reg.validate()?;
    let mut mu = Vec::with_capacity(q.0.len());
    let mut nu = Vec::with_capacity(q.0.len());
    for m in &q.0 {
        let sol = solve_regularized(m, reg, SMOOTH_SOLVE_TOL)?;
        mu.push(sol.u);
        nu.push(sol.theta);
    }
    Ok((
        StationaryPolicy {
            owner: Owner::MaxPlayer,
            dist: mu,
        },
        StationaryPolicy {
            owner: Owner::MinPlayer,
            dist: nu,
        },
    ))
}
