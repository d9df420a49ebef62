//! Shared oracles for the integration suites.
//!
//! Everything here is deliberately independent of the library's solvers:
//! plain fixed-point iteration, brute-force enumeration, and closed forms,
//! so agreement is evidence rather than tautology.
#![allow(dead_code)]

use zsmg::game::{MarkovGame, Owner, StationaryPolicy};
use zsmg::rng::{keyed_unit_f64, RngSpec};

/// Fixed-point iteration for `V = r^{μν} + γ P^{μν} V`, run long enough that
/// the truncation error is far below the comparison tolerances.
pub fn iterative_eval(
    game: &MarkovGame,
    mu: &StationaryPolicy,
    nu: &StationaryPolicy,
    sweeps: usize,
) -> Vec<f64> {
    let s_n = game.num_states;
    let mut r_pair = vec![0.0; s_n];
    let mut p_pair = vec![vec![0.0; s_n]; s_n];
    for s in 0..s_n {
        for (a, &wa) in mu.dist[s].iter().enumerate() {
            for (b, &wb) in nu.dist[s].iter().enumerate() {
                let w = wa * wb;
                if w == 0.0 {
                    continue;
                }
                r_pair[s] += w * game.reward[s][a][b];
                for (sp, &p) in game.transition[s][a][b].iter().enumerate() {
                    p_pair[s][sp] += w * p;
                }
            }
        }
    }
    let mut v = vec![0.0; s_n];
    for _ in 0..sweeps {
        let mut next = vec![0.0; s_n];
        for s in 0..s_n {
            let mut future = 0.0;
            for sp in 0..s_n {
                future += p_pair[s][sp] * v[sp];
            }
            next[s] = r_pair[s] + game.discount * future;
        }
        v = next;
    }
    v
}

/// Brute-force best-response values: enumerate every pure responder policy
/// (`n_resp^|S|` of them), evaluate each pair by fixed-point iteration, and
/// take the per-state best. Exponential, so callers keep `|S|` tiny.
pub fn brute_force_br_values(
    game: &MarkovGame,
    fixed: &StationaryPolicy,
    sweeps: usize,
) -> Vec<f64> {
    let s_n = game.num_states;
    let responder_is_min = fixed.owner == Owner::MaxPlayer;
    let n_resp = if responder_is_min {
        game.num_actions_min
    } else {
        game.num_actions_max
    };
    let total = n_resp.pow(s_n as u32);
    let mut best = vec![
        if responder_is_min {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        s_n
    ];
    for code in 0..total {
        let mut c = code;
        let actions: Vec<usize> = (0..s_n)
            .map(|_| {
                let a = c % n_resp;
                c /= n_resp;
                a
            })
            .collect();
        let resp = StationaryPolicy::pure(
            if responder_is_min {
                Owner::MinPlayer
            } else {
                Owner::MaxPlayer
            },
            &actions,
            n_resp,
        );
        let v = if responder_is_min {
            iterative_eval(game, fixed, &resp, sweeps)
        } else {
            iterative_eval(game, &resp, fixed, sweeps)
        };
        for s in 0..s_n {
            best[s] = if responder_is_min {
                best[s].min(v[s])
            } else {
                best[s].max(v[s])
            };
        }
    }
    best
}

/// Plain value iteration for a single-agent (maximizing) MDP.
pub fn mdp_value_iteration(
    transition: &[Vec<Vec<f64>>],
    reward: &[Vec<f64>],
    gamma: f64,
    sweeps: usize,
) -> Vec<f64> {
    let s_n = transition.len();
    let a_n = transition[0].len();
    let mut v = vec![0.0; s_n];
    for _ in 0..sweeps {
        let mut next = vec![0.0; s_n];
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..a_n {
                let mut future = 0.0;
                for sp in 0..s_n {
                    future += transition[s][a][sp] * v[sp];
                }
                best = best.max(reward[s][a] + gamma * future);
            }
            next[s] = best;
        }
        v = next;
    }
    v
}

/// Exact 2×2 matrix-game solution by support enumeration: check the four
/// pure saddle points first, otherwise use the closed-form interior mix.
pub fn solve_2x2_oracle(m: &[Vec<f64>]) -> (f64, Vec<f64>, Vec<f64>) {
    assert_eq!(m.len(), 2);
    assert_eq!(m[0].len(), 2);
    for i in 0..2 {
        for j in 0..2 {
            let col_max = m[0][j].max(m[1][j]);
            let row_min = m[i][0].min(m[i][1]);
            if m[i][j] >= col_max - 0.0 && m[i][j] <= row_min + 0.0 {
                let mut u = vec![0.0; 2];
                let mut t = vec![0.0; 2];
                u[i] = 1.0;
                t[j] = 1.0;
                return (m[i][j], u, t);
            }
        }
    }
    let denom = m[0][0] - m[0][1] - m[1][0] + m[1][1];
    let p = (m[1][1] - m[1][0]) / denom;
    let q = (m[1][1] - m[0][1]) / denom;
    let value = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / denom;
    (value, vec![p, 1.0 - p], vec![q, 1.0 - q])
}

/// Keyed random matrix with entries in `[lo, hi]`.
pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: RngSpec) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| lo + (hi - lo) * keyed_unit_f64(rng, &[i as u64, j as u64]))
                .collect()
        })
        .collect()
}

/// Keyed random mixed policy (normalized positive weights).
pub fn random_policy(
    owner: Owner,
    num_states: usize,
    num_actions: usize,
    rng: RngSpec,
) -> StationaryPolicy {
    let dist = (0..num_states)
        .map(|s| {
            let mut row: Vec<f64> = (0..num_actions)
                .map(|a| 0.05 + keyed_unit_f64(rng, &[s as u64, a as u64]))
                .collect();
            let total: f64 = row.iter().sum();
            for w in &mut row {
                *w /= total;
            }
            row
        })
        .collect();
    StationaryPolicy { owner, dist }
}

/// Keyed random pure policy.
pub fn random_pure_policy(
    owner: Owner,
    num_states: usize,
    num_actions: usize,
    rng: RngSpec,
) -> StationaryPolicy {
    let actions: Vec<usize> = (0..num_states)
        .map(|s| {
            let u = keyed_unit_f64(rng, &[s as u64]);
            ((u * num_actions as f64) as usize).min(num_actions - 1)
        })
        .collect();
    StationaryPolicy::pure(owner, &actions, num_actions)
}

/// One Monte-Carlo rollout of the discounted return from `(s, a, b)` under a
/// pure policy pair, truncated at `horizon`.
fn rollout_return(
    game: &MarkovGame,
    mu: &StationaryPolicy,
    nu: &StationaryPolicy,
    s0: usize,
    a0: usize,
    b0: usize,
    horizon: usize,
    rng: RngSpec,
    path: u64,
) -> f64 {
    let mut total = 0.0;
    let mut disc = 1.0;
    let mut s = s0;
    let mut a = a0;
    let mut b = b0;
    for t in 0..horizon {
        total += disc * game.reward[s][a][b];
        disc *= game.discount;
        let u = keyed_unit_f64(rng, &[path, t as u64]);
        let row = &game.transition[s][a][b];
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (sp, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = sp;
                break;
            }
        }
        s = next;
        a = mu.dist[s].iter().position(|&w| w == 1.0).expect("pure policy");
        b = nu.dist[s].iter().position(|&w| w == 1.0).expect("pure policy");
    }
    total
}

/// Monte-Carlo estimate of `Var[return | s,a,b]` under a pure pair, together
/// with the standard error of that variance estimate (fourth-moment based).
pub fn mc_return_variance(
    game: &MarkovGame,
    mu: &StationaryPolicy,
    nu: &StationaryPolicy,
    s: usize,
    a: usize,
    b: usize,
    paths: u64,
    rng: RngSpec,
) -> (f64, f64) {
    let horizon = ((1e-12f64.ln() / game.discount.ln()).ceil() as usize).clamp(50, 2000);
    let returns: Vec<f64> = (0..paths)
        .map(|p| rollout_return(game, mu, nu, s, a, b, horizon, rng, p))
        .collect();
    let n = paths as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let m2 = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let m4 = returns.iter().map(|r| (r - mean).powi(4)).sum::<f64>() / n;
    let sample_var = m2 * n / (n - 1.0);
    // Var(s²) ≈ (m4 − m2²·(n−3)/(n−1)) / n for i.i.d. samples.
    let var_of_var = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0);
    (sample_var, var_of_var.sqrt())
}
