//! Tabular zero-sum Markov game representation and Bellman machinery.
//!
//! A game is `(S, A, B, P, r, γ)`: the max player picks `a`, the min player
//! picks `b`, the stage reward `r(s,a,b) ∈ [0,1]` is paid to the max player,
//! and play moves to `s' ~ P(·|s,a,b)`. Values are discounted sums, so every
//! value function of a valid game lives in `[0, 1/(1−γ)]`.
//!
//! All operations here are pure functions over immutable inputs and safe to
//! call concurrently on shared games.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Which agent a policy belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    /// Row player; maximizes the discounted return.
    MaxPlayer,
    /// Column player; minimizes the discounted return.
    MinPlayer,
}

/// A full tabular zero-sum Markov game.
///
/// `transition[s][a][b]` is a probability vector over successor states;
/// `reward[s][a][b]` is the max player's stage reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovGame {
    #[serde(rename = "gamma")]
    pub discount: f64,
    pub num_states: usize,
    pub num_actions_max: usize,
    pub num_actions_min: usize,
    pub transition: Vec<Vec<Vec<Vec<f64>>>>,
    pub reward: Vec<Vec<Vec<f64>>>,
}

/// Tolerance for "sums to one" checks on stored probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-9;

impl MarkovGame {
    /// Build and fully validate a game.
    pub fn new(
        discount: f64,
        transition: Vec<Vec<Vec<Vec<f64>>>>,
        reward: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let num_states = transition.len();
        let num_actions_max = transition.first().map_or(0, |x| x.len());
        let num_actions_min = transition
            .first()
            .and_then(|x| x.first())
            .map_or(0, |x| x.len());
        let game = MarkovGame {
            discount,
            num_states,
            num_actions_max,
            num_actions_min,
            transition,
            reward,
        };
        game.validate()?;
        Ok(game)
    }

    /// Build with the relaxed reward check (finite, not necessarily in
    /// `[0,1]`). Empirical and absorbing-transformed games come through here.
    pub fn new_relaxed(
        discount: f64,
        transition: Vec<Vec<Vec<Vec<f64>>>>,
        reward: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let num_states = transition.len();
        let num_actions_max = transition.first().map_or(0, |x| x.len());
        let num_actions_min = transition
            .first()
            .and_then(|x| x.first())
            .map_or(0, |x| x.len());
        let game = MarkovGame {
            discount,
            num_states,
            num_actions_max,
            num_actions_min,
            transition,
            reward,
        };
        game.validate_relaxed()?;
        Ok(game)
    }

    /// Check every invariant, including rewards in `[0,1]`.
    pub fn validate(&self) -> Result<()> {
        self.validate_inner(true)
    }

    /// Like [`validate`](Self::validate) but only requires rewards to be
    /// finite. Used for absorbing-transform outputs, whose synthetic reward
    /// `(1−γ)u` may leave `[0,1]` when `u` is outside the value range.
    pub fn validate_relaxed(&self) -> Result<()> {
        self.validate_inner(false)
    }

    fn validate_inner(&self, strict_rewards: bool) -> Result<()> {
        let (s_n, a_n, b_n) = (self.num_states, self.num_actions_max, self.num_actions_min);
        if s_n == 0 || a_n == 0 || b_n == 0 {
            return Err(Error::Dimension(format!(
                "empty game: |S|={s_n}, |A|={a_n}, |B|={b_n}"
            )));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid(
                "gamma",
                format!("discount must be in [0,1), got {}", self.discount),
            ));
        }
        if self.transition.len() != s_n {
            return Err(Error::Dimension(format!(
                "transition has {} states, expected {s_n}",
                self.transition.len()
            )));
        }
        if self.reward.len() != s_n {
            return Err(Error::Dimension(format!(
                "reward has {} states, expected {s_n}",
                self.reward.len()
            )));
        }
        for s in 0..s_n {
            if self.transition[s].len() != a_n || self.reward[s].len() != a_n {
                return Err(Error::Dimension(format!(
                    "state {s}: expected {a_n} max-player actions"
                )));
            }
            for a in 0..a_n {
                if self.transition[s][a].len() != b_n || self.reward[s][a].len() != b_n {
                    return Err(Error::Dimension(format!(
                        "state {s}, action {a}: expected {b_n} min-player actions"
                    )));
                }
                for b in 0..b_n {
                    let row = &self.transition[s][a][b];
                    if row.len() != s_n {
                        return Err(Error::Dimension(format!(
                            "transition[{s}][{a}][{b}] has {} entries, expected {s_n}",
                            row.len()
                        )));
                    }
                    let mut sum = 0.0;
                    for (sp, &p) in row.iter().enumerate() {
                        if !p.is_finite() || p < 0.0 {
                            return Err(Error::invalid(
                                format!("transition[{s}][{a}][{b}][{sp}]"),
                                format!("probability must be finite and >= 0, got {p}"),
                            ));
                        }
                        sum += p;
                    }
                    if (sum - 1.0).abs() > PROB_SUM_TOL {
                        return Err(Error::invalid(
                            format!("transition[{s}][{a}][{b}]"),
                            format!("row sums to {sum}, expected 1 within {PROB_SUM_TOL:e}"),
                        ));
                    }
                    let r = self.reward[s][a][b];
                    if !r.is_finite() {
                        return Err(Error::invalid(
                            format!("reward[{s}][{a}][{b}]"),
                            format!("reward must be finite, got {r}"),
                        ));
                    }
                    if strict_rewards && !(0.0..=1.0).contains(&r) {
                        return Err(Error::invalid(
                            format!("reward[{s}][{a}][{b}]"),
                            format!("reward must be in [0,1], got {r}"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Upper end of the value range `[0, 1/(1−γ)]`.
    pub fn value_ceiling(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    /// Parse a game from its JSON document and validate it.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let game: MarkovGame = serde_json::from_str(text)?;
        // Files use the relaxed reward check: shifted or transformed games
        // (rewards outside [0,1]) are valid on disk as long as they are
        // finite.
        game.validate_relaxed()?;
        Ok(game)
    }

    /// Load a game file (see crate docs for the schema).
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Serialize to the canonical JSON document.
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// A per-state mixed strategy for one of the two agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPolicy {
    pub owner: Owner,
    /// `dist[s]` is a probability vector over the owner's actions.
    pub dist: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    /// Uniform policy over `num_actions` actions in each of `num_states`.
    pub fn uniform(owner: Owner, num_states: usize, num_actions: usize) -> Self {
        let w = 1.0 / num_actions as f64;
        StationaryPolicy {
            owner,
            dist: vec![vec![w; num_actions]; num_states],
        }
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn pure(owner: Owner, actions: &[usize], num_actions: usize) -> Self {
        let dist = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; num_actions];
                row[a] = 1.0;
                row
            })
            .collect();
        StationaryPolicy { owner, dist }
    }

    /// Number of actions this policy mixes over.
    pub fn num_actions(&self) -> usize {
        self.dist.first().map_or(0, |row| row.len())
    }

    /// Validate shape and simplex membership against a game.
    pub fn validate_for(&self, game: &MarkovGame) -> Result<()> {
        let expected = match self.owner {
            Owner::MaxPlayer => game.num_actions_max,
            Owner::MinPlayer => game.num_actions_min,
        };
        if self.dist.len() != game.num_states {
            return Err(Error::Dimension(format!(
                "policy has {} states, game has {}",
                self.dist.len(),
                game.num_states
            )));
        }
        for (s, row) in self.dist.iter().enumerate() {
            if row.len() != expected {
                return Err(Error::Dimension(format!(
                    "policy state {s} has {} actions, expected {expected}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for (i, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::invalid(
                        format!("policy[{s}][{i}]"),
                        format!("probability must be finite and >= 0, got {p}"),
                    ));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::invalid(
                    format!("policy[{s}]"),
                    format!("distribution sums to {sum}, expected 1 within {PROB_SUM_TOL:e}"),
                ));
            }
        }
        Ok(())
    }
}

/// State values, indexed by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VTable(pub Vec<f64>);

impl VTable {
    pub fn linf_distance(&self, other: &VTable) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }
}

/// State-joint-action values, indexed `[s][a][b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable(pub Vec<Vec<Vec<f64>>>);

impl QTable {
    pub fn linf_distance(&self, other: &QTable) -> f64 {
        let mut m = 0.0f64;
        for (xs, ys) in self.0.iter().zip(&other.0) {
            for (xa, ya) in xs.iter().zip(ys) {
                for (x, y) in xa.iter().zip(ya) {
                    m = m.max((x - y).abs());
                }
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Per-`(s,a,b)` variance of the discounted return under a fixed policy pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    pub sigma: Vec<Vec<Vec<f64>>>,
}

impl VarianceTable {
    pub fn max_entry(&self) -> f64 {
        self.sigma
            .iter()
            .flatten()
            .flatten()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

/// Expected stage reward and transition kernel under a fixed policy pair.
fn pair_dynamics(
    game: &MarkovGame,
    mu: &StationaryPolicy,
    nu: &StationaryPolicy,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let s_n = game.num_states;
    let mut r_pair = vec![0.0; s_n];
    let mut p_pair = vec![vec![0.0; s_n]; s_n];
    for s in 0..s_n {
        for (a, &wa) in mu.dist[s].iter().enumerate() {
            if wa == 0.0 {
                continue;
            }
            for (b, &wb) in nu.dist[s].iter().enumerate() {
                let w = wa * wb;
                if w == 0.0 {
                    continue;
                }
                r_pair[s] += w * game.reward[s][a][b];
                for (sp, &p) in game.transition[s][a][b].iter().enumerate() {
                    if p != 0.0 {
                        p_pair[s][sp] += w * p;
                    }
                }
            }
        }
    }
    (r_pair, p_pair)
}

fn check_pair(game: &MarkovGame, mu: &StationaryPolicy, nu: &StationaryPolicy) -> Result<()> {
    if mu.owner != Owner::MaxPlayer || nu.owner != Owner::MinPlayer {
        return Err(Error::Dimension(
            "policy_evaluate expects (max-player policy, min-player policy)".into(),
        ));
    }
    mu.validate_for(game)?;
    nu.validate_for(game)?;
    Ok(())
}

/// Exact policy evaluation for a fixed pair `(μ, ν)`.
///
/// Solves `V = r^{μν} + γ P^{μν} V` over states (dense LU, with an iterative
/// fallback for very large games), then fills `Q(s,a,b) = r(s,a,b) +
/// γ Σ_{s'} P(s'|s,a,b) V(s')`. The returned tables satisfy the coupled
/// Bellman equations to solver precision (≤ 1e-10 in max norm).
pub fn policy_evaluate(
    game: &MarkovGame,
    mu: &StationaryPolicy,
    nu: &StationaryPolicy,
) -> Result<(QTable, VTable)> {
    check_pair(game, mu, nu)?;
    let (r_pair, p_pair) = pair_dynamics(game, mu, nu);
    let v = linalg::solve_discounted(&p_pair, game.discount, &r_pair, "policy_evaluate")?;
    let gamma = game.discount;
    let q = (0..game.num_states)
        .map(|s| {
            (0..game.num_actions_max)
                .map(|a| {
                    (0..game.num_actions_min)
                        .map(|b| {
                            let mut future = 0.0;
                            for (sp, &p) in game.transition[s][a][b].iter().enumerate() {
                                if p != 0.0 {
                                    future += p * v[sp];
                                }
                            }
                            game.reward[s][a][b] + gamma * future
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok((QTable(q), VTable(v)))
}

/// Value-iteration tolerance scale for best responses; the fixed-point error
/// after stopping is then at most ~1e-10.
const BR_VI_TOL: f64 = 1e-10;
const BR_VI_CAP: u64 = 2_000_000;
const BR_PI_CAP: u64 = 10_000;
/// Bellman-residual acceptance for the policy-iteration polish. When the
/// greedy one-step improvement over the current exact values is below this,
/// the current policy's value is within `tol/(1−γ)` of the best response and
/// further rounds would only chase round-off (two exactly-indifferent actions
/// can otherwise alternate forever).
const BR_POLISH_TOL: f64 = 1e-10;

/// Exact best response against a fixed policy of the other agent.
///
/// The fixed policy induces a single-agent MDP for its opponent; we run value
/// iteration to tolerance `1e-10·(1−γ)/γ`, extract the greedy policy (ties
/// break toward the lowest action index), evaluate it exactly, and then polish
/// with policy-iteration rounds (greedy against the exact values) until the
/// greedy policy is stable. The returned `VTable`/`QTable` are the exact
/// evaluation of the returned pair, so re-evaluating reproduces them to solver
/// precision.
pub fn best_response(
    game: &MarkovGame,
    policy: &StationaryPolicy,
) -> Result<(StationaryPolicy, VTable, QTable)> {
    policy.validate_for(game)?;
    let responder_is_min = policy.owner == Owner::MaxPlayer;
    let s_n = game.num_states;
    let n_resp = if responder_is_min {
        game.num_actions_min
    } else {
        game.num_actions_max
    };
    let gamma = game.discount;

    // Induced MDP: reward and kernel per (state, responder action).
    let mut r_ind = vec![vec![0.0; n_resp]; s_n];
    let mut p_ind = vec![vec![vec![0.0; s_n]; n_resp]; s_n];
    for s in 0..s_n {
        for (fixed_a, &w) in policy.dist[s].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for resp in 0..n_resp {
                let (a, b) = if responder_is_min {
                    (fixed_a, resp)
                } else {
                    (resp, fixed_a)
                };
                r_ind[s][resp] += w * game.reward[s][a][b];
                for (sp, &p) in game.transition[s][a][b].iter().enumerate() {
                    if p != 0.0 {
                        p_ind[s][resp][sp] += w * p;
                    }
                }
            }
        }
    }

    let backup = |v: &[f64], s: usize, resp: usize| -> f64 {
        let mut future = 0.0;
        for (sp, &p) in p_ind[s][resp].iter().enumerate() {
            if p != 0.0 {
                future += p * v[sp];
            }
        }
        r_ind[s][resp] + gamma * future
    };
    let greedy_from = |v: &[f64]| -> Vec<usize> {
        (0..s_n)
            .map(|s| {
                let mut best = 0usize;
                let mut best_val = backup(v, s, 0);
                for resp in 1..n_resp {
                    let val = backup(v, s, resp);
                    let better = if responder_is_min {
                        val < best_val
                    } else {
                        val > best_val
                    };
                    if better {
                        best = resp;
                        best_val = val;
                    }
                }
                best
            })
            .collect()
    };

    // Value iteration on the induced MDP.
    let mut v = vec![0.0; s_n];
    if gamma > 0.0 {
        let tol = BR_VI_TOL * (1.0 - gamma) / gamma;
        let mut sweeps = 0u64;
        loop {
            let mut diff = 0.0f64;
            let mut next = vec![0.0; s_n];
            for s in 0..s_n {
                let mut best = backup(&v, s, 0);
                for resp in 1..n_resp {
                    let val = backup(&v, s, resp);
                    best = if responder_is_min {
                        best.min(val)
                    } else {
                        best.max(val)
                    };
                }
                next[s] = best;
                diff = diff.max((next[s] - v[s]).abs());
            }
            v = next;
            sweeps += 1;
            if diff <= tol {
                break;
            }
            if sweeps >= BR_VI_CAP {
                return Err(Error::IterationCap {
                    context: "best_response value iteration",
                    cap: BR_VI_CAP,
                    achieved: diff,
                });
            }
        }
    } else {
        let next: Vec<f64> = (0..s_n)
            .map(|s| {
                (0..n_resp)
                    .map(|resp| r_ind[s][resp])
                    .fold(if responder_is_min { f64::INFINITY } else { f64::NEG_INFINITY }, |acc, x| {
                        if responder_is_min {
                            acc.min(x)
                        } else {
                            acc.max(x)
                        }
                    })
            })
            .collect();
        v = next;
    }

    // Greedy extraction + exact evaluation, then policy-iteration polish.
    let mut greedy = greedy_from(&v);
    let mut rounds = 0u64;
    loop {
        let resp_policy = StationaryPolicy::pure(
            if responder_is_min {
                Owner::MinPlayer
            } else {
                Owner::MaxPlayer
            },
            &greedy,
            n_resp,
        );
        let (q_pair, v_pair) = if responder_is_min {
            policy_evaluate(game, policy, &resp_policy)?
        } else {
            policy_evaluate(game, &resp_policy, policy)?
        };
        let improved = greedy_from(&v_pair.0);
        let mut residual = 0.0f64;
        for s in 0..s_n {
            residual = residual.max((backup(&v_pair.0, s, improved[s]) - v_pair.0[s]).abs());
        }
        if improved == greedy || residual <= BR_POLISH_TOL {
            return Ok((resp_policy, v_pair, q_pair));
        }
        greedy = improved;
        rounds += 1;
        if rounds >= BR_PI_CAP {
            return Err(Error::IterationCap {
                context: "best_response policy iteration",
                cap: BR_PI_CAP,
                achieved: residual,
            });
        }
    }
}

/// Exploitability of a policy pair: the per-state worst of the two one-sided
/// improvements, maximized over states.
///
/// `nash_gap(μ,ν) = max_s max( V^{*,ν}(s) − V^{μ,ν}(s), V^{μ,ν}(s) − V^{μ,*}(s) )`.
/// The pair is an ε-equilibrium exactly when the gap is ≤ ε. The result is
/// ≥ −1e-8 (tiny negatives are solver noise).
pub fn nash_gap(game: &MarkovGame, mu: &StationaryPolicy, nu: &StationaryPolicy) -> Result<f64> {
    check_pair(game, mu, nu)?;
    let (_, v_pair) = policy_evaluate(game, mu, nu)?;
    let (_, v_mu_star, _) = best_response(game, mu)?;
    let (_, v_star_nu, _) = best_response(game, nu)?;
    let mut gap = f64::NEG_INFINITY;
    for s in 0..game.num_states {
        gap = gap.max(v_star_nu.0[s] - v_pair.0[s]);
        gap = gap.max(v_pair.0[s] - v_mu_star.0[s]);
    }
    Ok(gap)
}

/// Entrywise variance of `V` under each stored transition row:
/// `Var_{s'∼P(·|s,a,b)}[V(s')]`. Negative round-off is clamped to zero.
pub fn variance_under(transition: &[Vec<Vec<Vec<f64>>>], v: &[f64]) -> Result<Vec<Vec<Vec<f64>>>> {
    let mut out = Vec::with_capacity(transition.len());
    for (s, per_a) in transition.iter().enumerate() {
        let mut out_a = Vec::with_capacity(per_a.len());
        for per_b in per_a {
            let mut out_b = Vec::with_capacity(per_b.len());
            for row in per_b {
                if row.len() != v.len() {
                    return Err(Error::Dimension(format!(
                        "variance_under: row at state {s} has {} entries, V has {}",
                        row.len(),
                        v.len()
                    )));
                }
                let mut mean = 0.0;
                let mut second = 0.0;
                for (sp, &p) in row.iter().enumerate() {
                    if p != 0.0 {
                        mean += p * v[sp];
                        second += p * v[sp] * v[sp];
                    }
                }
                let var = second - mean * mean;
                out_b.push(if var < 0.0 { 0.0 } else { var });
            }
            out_a.push(out_b);
        }
        out.push(out_a);
    }
    Ok(out)
}

/// Variance of the discounted return for every `(s,a,b)` under a fixed pair.
///
/// Solves the variance Bellman equation
/// `Σ(s,a,b) = γ²·Var_{P(·|s,a,b)}(V^{μν}) + γ²·Σ_{s'} P(s'|s,a,b)·W(s')`
/// with `W(s) = E_{a∼μ,b∼ν}[Σ(s,a,b)]`, by reducing to the `S`-dimensional
/// system in `W` (discount γ²) and expanding. Entries are bounded by
/// `γ²/(1−γ)²`.
pub fn return_variance(
    game: &MarkovGame,
    mu: &StationaryPolicy,
    nu: &StationaryPolicy,
) -> Result<VarianceTable> {
    check_pair(game, mu, nu)?;
    let (_, v) = policy_evaluate(game, mu, nu)?;
    let var_next = variance_under(&game.transition, &v.0)?;
    let gamma2 = game.discount * game.discount;
    let s_n = game.num_states;

    let (_, p_pair) = pair_dynamics(game, mu, nu);
    let mut rhs = vec![0.0; s_n];
    for s in 0..s_n {
        for (a, &wa) in mu.dist[s].iter().enumerate() {
            for (b, &wb) in nu.dist[s].iter().enumerate() {
                let w = wa * wb;
                if w != 0.0 {
                    rhs[s] += w * var_next[s][a][b];
                }
            }
        }
        rhs[s] *= gamma2;
    }
    let w = linalg::solve_discounted(&p_pair, gamma2, &rhs, "return_variance")?;

    let sigma = (0..s_n)
        .map(|s| {
            (0..game.num_actions_max)
                .map(|a| {
                    (0..game.num_actions_min)
                        .map(|b| {
                            let mut future = 0.0;
                            for (sp, &p) in game.transition[s][a][b].iter().enumerate() {
                                if p != 0.0 {
                                    future += p * w[sp];
                                }
                            }
                            let val = gamma2 * var_next[s][a][b] + gamma2 * future;
                            if val < 0.0 {
                                0.0
                            } else {
                                val
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(VarianceTable { sigma })
}

/// The absorbing transform `G_{s,u}`: state `s` becomes absorbing with stage
/// reward `(1−γ)u`, so its value is exactly `u` under every policy pair; all
/// other entries are untouched.
///
/// When `u` is outside `[0, 1/(1−γ)]` the synthetic reward leaves `[0,1]`;
/// the output is therefore validated in relaxed (finite-reward) mode.
pub fn make_absorbing(game: &MarkovGame, s: usize, u: f64) -> Result<MarkovGame> {
    if s >= game.num_states {
        return Err(Error::Dimension(format!(
            "make_absorbing: state {s} out of range (|S|={})",
            game.num_states
        )));
    }
    if !u.is_finite() {
        return Err(Error::invalid("u", format!("must be finite, got {u}")));
    }
    let mut out = game.clone();
    let stage = (1.0 - game.discount) * u;
    for a in 0..game.num_actions_max {
        for b in 0..game.num_actions_min {
            let mut row = vec![0.0; game.num_states];
            row[s] = 1.0;
            out.transition[s][a][b] = row;
            out.reward[s][a][b] = stage;
        }
    }
    out.validate_relaxed()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1-state game, both players dummy-1-action, reward 1, self-loop.
    fn trivial_game(gamma: f64) -> MarkovGame {
        MarkovGame::new(gamma, vec![vec![vec![vec![1.0]]]], vec![vec![vec![1.0]]]).unwrap()
    }

    #[test]
    fn geometric_value() {
        let g = trivial_game(0.5);
        let mu = StationaryPolicy::uniform(Owner::MaxPlayer, 1, 1);
        let nu = StationaryPolicy::uniform(Owner::MinPlayer, 1, 1);
        let (_, v) = policy_evaluate(&g, &mu, &nu).unwrap();
        assert!((v.0[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_row_sum() {
        let err = MarkovGame::new(
            0.5,
            vec![vec![vec![vec![0.9, 0.2]], vec![vec![1.0, 0.0]]], vec![
                vec![vec![0.5, 0.5]],
                vec![vec![0.5, 0.5]],
            ]],
            vec![vec![vec![0.0]; 2]; 2],
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("transition[0][0][0]"), "{msg}");
    }

    #[test]
    fn absorbing_value_is_u() {
        let g = MarkovGame::new(
            0.8,
            vec![
                vec![vec![vec![0.5, 0.5], vec![1.0, 0.0]], vec![vec![0.0, 1.0], vec![0.3, 0.7]]],
                vec![vec![vec![1.0, 0.0], vec![0.2, 0.8]], vec![vec![0.6, 0.4], vec![0.0, 1.0]]],
            ],
            vec![vec![vec![0.1, 0.9], vec![0.5, 0.2]], vec![vec![1.0, 0.3], vec![0.4, 0.7]]],
        )
        .unwrap();
        let abs = make_absorbing(&g, 1, 3.25).unwrap();
        let mu = StationaryPolicy::pure(Owner::MaxPlayer, &[1, 0], 2);
        let nu = StationaryPolicy::uniform(Owner::MinPlayer, 2, 2);
        let (_, v) = policy_evaluate(&abs, &mu, &nu).unwrap();
        assert!((v.0[1] - 3.25).abs() < 1e-10, "V(s)={}", v.0[1]);
    }
}
