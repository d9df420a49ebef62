//! Test-game generators.
//!
//! Three families live here:
//!
//! * a parametric "hard" family of chain games whose equilibrium Q-values
//!   have closed forms, built so that competing hypotheses about a single
//!   transition probability are separated by calibrated Q-value gaps — the
//!   worst case for sample-based planning, and a sharp correctness oracle
//!   for everything upstream (the solver must reproduce the closed forms and
//!   the claimed equilibria exactly);
//! * a single-controller embedding turning any MDP into a game where the
//!   minimizing agent is a dummy, so single-agent solvers can cross-check
//!   the game machinery;
//! * seeded random games for soak testing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{MarkovGame, QTable};
use crate::matrix::value_bounds;
use crate::plan::{shapley_value_iteration, PlanConfig};
use crate::rng::{keyed_unit_f64, RngSpec};

/// Which transition hypothesis the instance realizes. Indices are 1-based;
/// `l2 = 1` is excluded because the first min-action column is reserved for
/// the baseline structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    Null,
    Alt { k: usize, l1: usize, l2: usize },
}

/// Which member of the reward family the instance carries (same index
/// conventions as [`Hypothesis`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardId {
    R1,
    Alt { k: usize, l1: usize, l2: usize },
}

impl Hypothesis {
    fn label(&self) -> String {
        match self {
            Hypothesis::Null => "null".into(),
            Hypothesis::Alt { k, l1, l2 } => format!("alt{k}.{l1}.{l2}"),
        }
    }
}

impl RewardId {
    fn label(&self) -> String {
        match self {
            RewardId::R1 => "r1".into(),
            RewardId::Alt { k, l1, l2 } => format!("r{k}.{l1}.{l2}"),
        }
    }
}

/// The calibration constants found by [`select_constants`], in both raw
/// (α) and grid-unit (c) form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedConstants {
    pub c_prime: u32,
    pub c: u32,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Full parameterization of one hard instance.
///
/// `k`, `l1`, `l2` are the family dimensions (number of decision states, max
/// actions, min actions); `p0` always equals `gamma`; `alpha1`/`alpha2` are
/// the two transition perturbation magnitudes, normally produced by
/// [`select_constants`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceSpec {
    pub k: usize,
    pub l1: usize,
    pub l2: usize,
    pub gamma: f64,
    pub eps: f64,
    pub p0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub hypothesis: Hypothesis,
    pub reward_id: RewardId,
}

/// The family's pairwise Q-gaps, computed from one set of constants.
/// All comparisons the feasibility search and the verifier make are
/// derived from these numbers.
#[derive(Debug, Clone, Copy)]
struct FamilyGaps {
    /// Baseline saddle margins at a decision state: deviation cost for the
    /// max player (`q(α₁) − q(2α₁)`) and the min player (`q(0) − q(α₁)`).
    null_margin_row: f64,
    null_margin_col: f64,
    /// Perturbed-cell margins: against the same column (`q(α₂) − q(2α₂)`),
    /// the free columns (`q(0) − q(α₂)`), and the baseline column
    /// (`q(2α₁) − q(α₂)` and `q(α₁) − q(α₂)`).
    alt_gaps: [f64; 4],
    beta: f64,
}

/// `γ·ι/(1 − γ(p₀ − α))` with ι = 1: the closed-form Q of a cell whose
/// self-loop probability is lowered by `alpha`.
fn q_of(gamma: f64, p0: f64, alpha: f64) -> f64 {
    gamma / (1.0 - gamma * p0 + gamma * alpha)
}

fn family_gaps(gamma: f64, p0: f64, eps: f64, alpha1: f64, alpha2: f64) -> FamilyGaps {
    let q = |a: f64| q_of(gamma, p0, a);
    let (q0, qa1, q2a1, qa2, q2a2) = (q(0.0), q(alpha1), q(2.0 * alpha1), q(alpha2), q(2.0 * alpha2));
    FamilyGaps {
        null_margin_row: q0 - qa1,
        null_margin_col: qa1 - q2a1,
        alt_gaps: [qa2 - q2a2, q0 - qa2, q2a1 - qa2, qa1 - qa2],
        beta: (qa1 - q2a2 + eps) / (q0 - q2a2),
    }
}

/// Upper bound on the mixed-output probability threshold β.
pub const BETA_BOUND: f64 = 1.0 - 19.0 / 96.0;

const GAP_LO_FACTOR: f64 = 20.0;
const GAP_HI_FACTOR: f64 = 48.0;

impl HardInstanceSpec {
    /// Build a spec with explicit α constants and validate every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        k: usize,
        l1: usize,
        l2: usize,
        gamma: f64,
        eps: f64,
        alpha1: f64,
        alpha2: f64,
        hypothesis: Hypothesis,
        reward_id: RewardId,
    ) -> Result<Self> {
        let spec = HardInstanceSpec {
            k,
            l1,
            l2,
            gamma,
            eps,
            p0: gamma,
            alpha1,
            alpha2,
            hypothesis,
            reward_id,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Build a spec with constants chosen by [`select_constants`].
    pub fn with_selected(
        k: usize,
        l1: usize,
        l2: usize,
        gamma: f64,
        eps: f64,
        hypothesis: Hypothesis,
        reward_id: RewardId,
    ) -> Result<Self> {
        let sel = select_constants(gamma, eps)?;
        Self::new(k, l1, l2, gamma, eps, sel.alpha1, sel.alpha2, hypothesis, reward_id)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("k", "need at least one decision state".to_string()));
        }
        if self.l1 < 2 || self.l2 < 2 {
            return Err(Error::invalid(
                "l1/l2",
                format!("need at least 2 actions per side, got ({}, {})", self.l1, self.l2),
            ));
        }
        if !(self.gamma > 0.5 && self.gamma < 1.0) {
            return Err(Error::invalid(
                "gamma",
                format!("must lie in (1/2, 1), got {}", self.gamma),
            ));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("eps", format!("must be > 0, got {}", self.eps)));
        }
        if self.p0 != self.gamma {
            return Err(Error::invalid(
                "p0",
                format!("must equal gamma ({}), got {}", self.gamma, self.p0),
            ));
        }
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0) {
            return Err(Error::invalid(
                "alpha1/alpha2",
                format!("must be > 0, got ({}, {})", self.alpha1, self.alpha2),
            ));
        }
        if self.alpha2 < 2.0 * self.alpha1 {
            return Err(Error::invalid(
                "alpha2",
                format!("need alpha2 >= 2*alpha1, got {} < {}", self.alpha2, 2.0 * self.alpha1),
            ));
        }
        if let Some(name) = first_violated_constraint(
            self.gamma,
            self.p0,
            self.eps,
            self.alpha1,
            self.alpha2,
        ) {
            return Err(Error::invalid("constants", format!("constraint failed: {name}")));
        }
        self.check_indices(self.hypothesis_indices(), "hypothesis")?;
        self.check_indices(self.reward_indices(), "reward_id")?;
        Ok(())
    }

    fn hypothesis_indices(&self) -> Option<(usize, usize, usize)> {
        match self.hypothesis {
            Hypothesis::Null => None,
            Hypothesis::Alt { k, l1, l2 } => Some((k, l1, l2)),
        }
    }

    fn reward_indices(&self) -> Option<(usize, usize, usize)> {
        match self.reward_id {
            RewardId::R1 => None,
            RewardId::Alt { k, l1, l2 } => Some((k, l1, l2)),
        }
    }

    fn check_indices(&self, idx: Option<(usize, usize, usize)>, what: &str) -> Result<()> {
        if let Some((k, l1, l2)) = idx {
            if k < 1 || k > self.k || l1 < 1 || l1 > self.l1 || l2 < 2 || l2 > self.l2 {
                return Err(Error::invalid(
                    what.to_string(),
                    format!(
                        "indices ({k}, {l1}, {l2}) out of range for dims ({}, {}, {}) with l2 >= 2",
                        self.k, self.l1, self.l2
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Number of states of the built game: K decision states plus the
    /// loop/sink pair behind every decision-state joint action.
    pub fn num_states(&self) -> usize {
        self.k + 2 * self.k * self.l1 * self.l2
    }

    /// Self-loop probability at the loop state behind `(x_k, a, b)`
    /// (0-based indices).
    fn p_entry(&self, k: usize, a: usize, b: usize) -> f64 {
        let mut p = if b == 0 {
            if a == 0 {
                self.p0 - self.alpha1
            } else {
                self.p0 - 2.0 * self.alpha1
            }
        } else {
            self.p0
        };
        if let Hypothesis::Alt { k: kh, l1, l2 } = self.hypothesis {
            if k == kh - 1 && a == l1 - 1 && b == l2 - 1 {
                p = self.p0 - self.alpha2;
            }
        }
        p
    }

    /// Per-step reward ι at the loop state behind `(x_k, a, b)`. Depends only
    /// on the reward id — the reward function is known to the planner and
    /// identical across transition hypotheses.
    fn iota_entry(&self, k: usize, a: usize, b: usize) -> f64 {
        if let RewardId::Alt { k: kr, l1, l2 } = self.reward_id {
            if k == kr - 1 && b == l2 - 1 && a != l1 - 1 {
                let d = 1.0 - self.gamma * self.p0;
                return d / (d + 2.0 * self.gamma * self.alpha2);
            }
        }
        1.0
    }

    /// Closed-form equilibrium Q-values at the decision states.
    pub fn closed_form_q(&self) -> QTable {
        QTable(
            (0..self.k)
                .map(|k| {
                    (0..self.l1)
                        .map(|a| {
                            (0..self.l2)
                                .map(|b| {
                                    let p = self.p_entry(k, a, b);
                                    self.gamma * self.iota_entry(k, a, b) / (1.0 - self.gamma * p)
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        )
    }

    /// The pure equilibrium cell per decision state, when the
    /// hypothesis/reward combination supports one everywhere: the baseline
    /// pair under (null, r1), and the perturbed cell at the flagged state
    /// when the reward matches the alternative hypothesis. Mixed combinations
    /// return `None`.
    pub fn claimed_ne(&self) -> Option<BTreeMap<usize, [usize; 2]>> {
        let alt = match (self.hypothesis, self.reward_id) {
            (Hypothesis::Null, RewardId::R1) => None,
            (
                Hypothesis::Alt { k, l1, l2 },
                RewardId::Alt { k: kr, l1: l1r, l2: l2r },
            ) if k == kr && l1 == l1r && l2 == l2r => Some((k - 1, l1 - 1, l2 - 1)),
            _ => return None,
        };
        let mut map = BTreeMap::new();
        for k in 0..self.k {
            map.insert(k, [0usize, 0usize]);
        }
        if let Some((k, a, b)) = alt {
            map.insert(k, [a, b]);
        }
        Some(map)
    }

    fn instance_id(&self) -> String {
        format!(
            "hard-K{}L{}x{}-g{}-e{:e}-{}-{}",
            self.k,
            self.l1,
            self.l2,
            self.gamma,
            self.eps,
            self.hypothesis.label(),
            self.reward_id.label()
        )
    }
}

/// Evaluate the feasibility constraints in a fixed order; `None` means all
/// hold, otherwise the name of the first violated one.
fn first_violated_constraint(
    gamma: f64,
    p0: f64,
    eps: f64,
    alpha1: f64,
    alpha2: f64,
) -> Option<&'static str> {
    if !(p0 > 0.5 + 2.0 * (alpha1 + alpha2)) {
        return Some("p0_window: p0 > 1/2 + 2(alpha1+alpha2)");
    }
    if !(alpha2 / (1.0 - p0) < 0.5) {
        return Some("sink_ratio: alpha2/(1-p0) < 1/2");
    }
    let exit = p0 - 2.0 * alpha1 - 2.0 * alpha2;
    if !(exit > 0.0 && alpha2 / exit < 0.5) {
        return Some("exit_ratio: alpha2/(p0-2a1-2a2) < 1/2");
    }
    let gaps = family_gaps(gamma, p0, eps, alpha1, alpha2);
    let lo = GAP_LO_FACTOR * eps;
    let hi = GAP_HI_FACTOR * eps;
    if !(gaps.null_margin_row >= lo && gaps.null_margin_col >= lo) {
        return Some("null_gap_min: baseline saddle margins >= 20*eps");
    }
    let alt_min = gaps.alt_gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(alt_min >= lo) {
        return Some("alt_gap_min: perturbed-cell margins >= 20*eps");
    }
    if !(alt_min <= hi) {
        return Some("alt_gap_window: smallest perturbed-cell margin <= 48*eps");
    }
    if !(gaps.beta <= BETA_BOUND) {
        return Some("beta_bound: beta <= 77/96");
    }
    None
}

/// Find perturbation magnitudes `α₁ = c′(1−γp₀)²ε/γ`, `α₂ = c(1−γp₀)²ε/γ`
/// satisfying every family constraint, by grid search over
/// `c′ ∈ [1, 200]`, `c ∈ [2c′, 400]`, preferring the smallest feasible `c`.
///
/// Infeasibility is a legitimate outcome (ε too large for this γ) and is
/// reported with the first violated constraint at the cell that got
/// furthest through the checks.
pub fn select_constants(gamma: f64, eps: f64) -> Result<SelectedConstants> {
    if !(gamma > 0.5 && gamma < 1.0) {
        return Err(Error::invalid("gamma", format!("must lie in (1/2, 1), got {gamma}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", format!("must be > 0, got {eps}")));
    }
    let p0 = gamma;
    let d = 1.0 - gamma * p0;
    let unit = d * d * eps / gamma;

    let mut best_progress: i32 = -1;
    let mut report: Option<(&'static str, u32, u32)> = None;
    for c in 2u32..=400 {
        for c_prime in 1..=(c / 2).min(200) {
            let alpha1 = c_prime as f64 * unit;
            let alpha2 = c as f64 * unit;
            match first_violated_constraint(gamma, p0, eps, alpha1, alpha2) {
                None => {
                    return Ok(SelectedConstants {
                        c_prime,
                        c,
                        alpha1,
                        alpha2,
                    })
                }
                Some(name) => {
                    let progress = constraint_rank(name);
                    if progress > best_progress {
                        best_progress = progress;
                        report = Some((name, c_prime, c));
                    }
                }
            }
        }
    }
    let (first_violation, c_prime, c) =
        report.expect("grid is nonempty, so some violation was recorded");
    Err(Error::Infeasible {
        first_violation: first_violation.to_string(),
        c_prime: c_prime as u64,
        c: c as u64,
    })
}

fn constraint_rank(name: &str) -> i32 {
    const ORDER: [&str; 7] = [
        "p0_window",
        "sink_ratio",
        "exit_ratio",
        "null_gap_min",
        "alt_gap_min",
        "alt_gap_window",
        "beta_bound",
    ];
    ORDER
        .iter()
        .position(|p| name.starts_with(p))
        .map(|i| i as i32)
        .unwrap_or(-1)
}

/// A built hard instance: the playable game plus its analytic certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstance {
    pub spec: HardInstanceSpec,
    pub game: MarkovGame,
    /// Closed-form equilibrium Q over the decision states' joint actions.
    pub q_closed_form: QTable,
}

#[derive(Serialize, Deserialize)]
struct SidecarWire {
    spec: HardInstanceSpec,
    q_closed_form: Vec<Vec<Vec<f64>>>,
    claimed_ne: Option<BTreeMap<usize, [usize; 2]>>,
}

impl HardInstance {
    /// Index of the loop state behind decision state `k`'s joint action
    /// `(a, b)` (0-based).
    pub fn y1_index(&self, k: usize, a: usize, b: usize) -> usize {
        let s = &self.spec;
        s.k + (k * s.l1 + a) * s.l2 + b
    }

    /// Index of the sink behind the corresponding loop state.
    pub fn y2_index(&self, k: usize, a: usize, b: usize) -> usize {
        self.y1_index(k, a, b) + self.spec.k * self.spec.l1 * self.spec.l2
    }

    pub fn instance_id(&self) -> String {
        self.spec.instance_id()
    }

    /// Companion JSON carrying the spec, the closed-form Q, and (when the
    /// combination has one) the claimed pure equilibrium per decision state.
    pub fn sidecar_json(&self) -> Result<String> {
        let wire = SidecarWire {
            spec: self.spec.clone(),
            q_closed_form: self.q_closed_form.0.clone(),
            claimed_ne: self.spec.claimed_ne(),
        };
        Ok(serde_json::to_string_pretty(&wire)?)
    }

    pub fn save_sidecar(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.sidecar_json()?)?;
        Ok(())
    }
}

/// Materialize the game for a validated spec.
///
/// Layout: decision states `0..K`, then one loop state per decision-state
/// joint action, then one absorbing sink per loop state. Decision states
/// move deterministically to their joint action's loop state (reward 0);
/// loop states self-loop with the hypothesis probability and exit to their
/// sink otherwise, paying the reward-id's ι on every step (action-
/// independent); sinks absorb at reward 0.
pub fn build_hard_instance(spec: &HardInstanceSpec) -> Result<HardInstance> {
    spec.validate()?;
    let (kk, l1, l2) = (spec.k, spec.l1, spec.l2);
    let block = kk * l1 * l2;
    let s_n = kk + 2 * block;
    let y1 = |k: usize, a: usize, b: usize| kk + (k * l1 + a) * l2 + b;

    let mut transition = vec![vec![vec![vec![0.0; s_n]; l2]; l1]; s_n];
    let mut reward = vec![vec![vec![0.0; l2]; l1]; s_n];

    for k in 0..kk {
        for a in 0..l1 {
            for b in 0..l2 {
                // Decision state: deterministic hop into the (a,b) branch.
                transition[k][a][b][y1(k, a, b)] = 1.0;
                let loop_state = y1(k, a, b);
                let sink = loop_state + block;
                let p = spec.p_entry(k, a, b);
                let iota = spec.iota_entry(k, a, b);
                for aa in 0..l1 {
                    for bb in 0..l2 {
                        transition[loop_state][aa][bb][loop_state] = p;
                        transition[loop_state][aa][bb][sink] = 1.0 - p;
                        reward[loop_state][aa][bb] = iota;
                        transition[sink][aa][bb][sink] = 1.0;
                    }
                }
            }
        }
    }

    let game = MarkovGame::new(spec.gamma, transition, reward)?;
    Ok(HardInstance {
        q_closed_form: spec.closed_form_q(),
        spec: spec.clone(),
        game,
    })
}

/// One named verification check with its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// The full check list produced by [`verify_instance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<InstanceCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_names(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.clone())
            .collect()
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(InstanceCheck {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

const VERIFY_PLAN_EPS: f64 = 1e-8;
const VERIFY_Q_TOL: f64 = 1e-6;
const VERIFY_MARGIN_SLACK: f64 = 1e-9;

/// Re-derive every claim the construction makes about a built instance and
/// report check-by-check. All checks passing returns the report; any failure
/// returns it inside an error (a failed check means a construction bug, not
/// a property of the inputs).
pub fn verify_instance(inst: &HardInstance) -> Result<VerifyReport> {
    let spec = &inst.spec;
    let game = &inst.game;
    let (kk, l1, l2) = (spec.k, spec.l1, spec.l2);
    let block = kk * l1 * l2;
    let mut report = VerifyReport { checks: Vec::new() };

    // -- census: state count and effective state-joint-action pairs.
    {
        let expect_states = kk + 2 * block;
        let mut invariant_pairs = 0usize;
        let mut all_invariant = true;
        for s in kk..expect_states.min(game.num_states) {
            let row0 = &game.transition[s][0][0];
            let r0 = game.reward[s][0][0];
            let invariant = game.transition[s]
                .iter()
                .flatten()
                .all(|row| row == row0)
                && game.reward[s].iter().flatten().all(|&r| r == r0);
            if invariant {
                invariant_pairs += 1;
            } else {
                all_invariant = false;
            }
        }
        let effective = kk * l1 * l2 + invariant_pairs;
        let passed = game.num_states == expect_states && all_invariant && effective == 3 * block;
        report.push(
            "state_census",
            passed,
            format!(
                "{} states (expected {expect_states}); {effective} effective state-joint-action pairs (expected {})",
                game.num_states,
                3 * block
            ),
        );
    }

    // -- chain structure and reward placement.
    {
        let mut ok = true;
        let mut detail = String::from("decision->loop->sink wiring intact");
        'outer: for k in 0..kk {
            for a in 0..l1 {
                for b in 0..l2 {
                    let loop_state = inst.y1_index(k, a, b);
                    let sink = inst.y2_index(k, a, b);
                    let p = spec.p_entry(k, a, b);
                    let iota = spec.iota_entry(k, a, b);
                    let x_row = &game.transition[k][a][b];
                    if x_row[loop_state] != 1.0
                        || x_row.iter().sum::<f64>() != 1.0
                        || game.reward[k][a][b] != 0.0
                    {
                        ok = false;
                        detail = format!("decision state {k} joint action ({a},{b}) is not a pure hop");
                        break 'outer;
                    }
                    let y_row = &game.transition[loop_state][0][0];
                    if (y_row[loop_state] - p).abs() > 1e-15
                        || (y_row[sink] - (1.0 - p)).abs() > 1e-15
                        || (game.reward[loop_state][0][0] - iota).abs() > 1e-15
                    {
                        ok = false;
                        detail = format!("loop state {loop_state} deviates from (p, iota) = ({p}, {iota})");
                        break 'outer;
                    }
                    if game.transition[sink][0][0][sink] != 1.0 || game.reward[sink][0][0] != 0.0 {
                        ok = false;
                        detail = format!("sink {sink} is not absorbing at reward 0");
                        break 'outer;
                    }
                }
            }
        }
        report.push("chain_structure", ok, detail);
    }

    // -- the hypothesis changes exactly one loop probability vs. baseline.
    {
        let (passed, detail) = match spec.hypothesis {
            Hypothesis::Null => (true, "baseline hypothesis".to_string()),
            Hypothesis::Alt { .. } => {
                let mut null_spec = spec.clone();
                null_spec.hypothesis = Hypothesis::Null;
                let mut diffs = 0usize;
                for k in 0..kk {
                    for a in 0..l1 {
                        for b in 0..l2 {
                            if spec.p_entry(k, a, b) != null_spec.p_entry(k, a, b) {
                                diffs += 1;
                            }
                        }
                    }
                }
                (
                    diffs == 1,
                    format!("{diffs} loop probabilities differ from the baseline (expected 1)"),
                )
            }
        };
        report.push("single_entry_difference", passed, detail);
    }

    // -- planner agreement with the closed form on decision states.
    let plan = shapley_value_iteration(game, &PlanConfig::exact(VERIFY_PLAN_EPS))?;
    {
        let mut worst = 0.0f64;
        for k in 0..kk {
            for a in 0..l1 {
                for b in 0..l2 {
                    let diff = (plan.q_star_hat.0[k][a][b] - inst.q_closed_form.0[k][a][b]).abs();
                    worst = worst.max(diff);
                }
            }
        }
        report.push(
            "closed_form_q",
            worst <= VERIFY_Q_TOL,
            format!("max |planned - closed form| = {worst:.3e} (tol {VERIFY_Q_TOL:.0e})"),
        );
    }

    // -- calibration window and mixing threshold.
    {
        let gaps = family_gaps(spec.gamma, spec.p0, spec.eps, spec.alpha1, spec.alpha2);
        let lo = GAP_LO_FACTOR * spec.eps - VERIFY_MARGIN_SLACK;
        let hi = GAP_HI_FACTOR * spec.eps + VERIFY_MARGIN_SLACK;
        let alt_min = gaps.alt_gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        let window_ok = gaps.null_margin_row >= lo
            && gaps.null_margin_col >= lo
            && alt_min >= lo
            && alt_min <= hi;
        report.push(
            "gap_window",
            window_ok,
            format!(
                "null margins ({:.3e}, {:.3e}), perturbed margins min {:.3e} vs window [{:.3e}, {:.3e}]",
                gaps.null_margin_row,
                gaps.null_margin_col,
                alt_min,
                GAP_LO_FACTOR * spec.eps,
                GAP_HI_FACTOR * spec.eps
            ),
        );
        report.push(
            "beta_bound",
            gaps.beta <= BETA_BOUND + VERIFY_MARGIN_SLACK,
            format!("beta = {:.6} vs bound {:.6}", gaps.beta, BETA_BOUND),
        );
    }

    // -- equilibrium structure at each decision state.
    {
        let margin_floor = GAP_LO_FACTOR * spec.eps - VERIFY_MARGIN_SLACK;
        match spec.claimed_ne() {
            Some(claims) => {
                let mut ok = true;
                let mut detail = format!("strict pure saddle with margin >= {margin_floor:.3e} at every decision state");
                for (&k, &[a_star, b_star]) in &claims {
                    let m = &inst.q_closed_form.0[k];
                    let center = m[a_star][b_star];
                    // Max player must lose by the margin on any row deviation,
                    // min player on any column deviation.
                    for a in 0..l1 {
                        if a != a_star && !(center - m[a][b_star] >= margin_floor) {
                            ok = false;
                        }
                    }
                    for b in 0..l2 {
                        if b != b_star && !(m[a_star][b] - center >= margin_floor) {
                            ok = false;
                        }
                    }
                    let (maximin, minimax) = value_bounds(m)?;
                    if (maximin - minimax).abs() > 1e-12
                        || (plan.v_star_hat.0[k] - center).abs() > VERIFY_Q_TOL
                    {
                        ok = false;
                    }
                    if !ok {
                        detail = format!("claimed cell ({a_star}, {b_star}) at decision state {k} is not a strict saddle");
                        break;
                    }
                }
                report.push("equilibrium_structure", ok, detail);
            }
            None => {
                // Mixed combination: no pure claim; the planned value must sit
                // inside the pure-strategy bounds (strictly mixed somewhere).
                let mut ok = true;
                let mut mixed_states = 0usize;
                for k in 0..kk {
                    let (maximin, minimax) = value_bounds(&inst.q_closed_form.0[k])?;
                    let v = plan.v_star_hat.0[k];
                    if !(v >= maximin - VERIFY_Q_TOL && v <= minimax + VERIFY_Q_TOL) {
                        ok = false;
                    }
                    if minimax - maximin > 1e-12 {
                        mixed_states += 1;
                    }
                }
                report.push(
                    "equilibrium_structure",
                    ok && mixed_states > 0,
                    format!("{mixed_states} decision states with a strictly mixed equilibrium; planned values within pure-strategy bounds"),
                );
            }
        }
    }

    if report.all_passed() {
        Ok(report)
    } else {
        Err(Error::Verification { report })
    }
}

/// A plain MDP in the canonical JSON layout, used by the single-controller
/// embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSpec {
    pub gamma: f64,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
}

impl MdpSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// Embed an MDP as a game whose min player is a dummy: transitions and
/// rewards ignore the second agent entirely, so the game's equilibrium value
/// is the MDP's optimal value and any equilibrium max-policy is MDP-optimal.
pub fn embed_mdp(
    transition: &[Vec<Vec<f64>>],
    reward: &[Vec<f64>],
    gamma: f64,
    num_dummy_actions: usize,
) -> Result<MarkovGame> {
    let s_n = transition.len();
    if s_n == 0 {
        return Err(Error::Dimension("empty MDP".into()));
    }
    let a_n = transition[0].len();
    if num_dummy_actions == 0 {
        return Err(Error::invalid(
            "num_dummy_actions",
            "need at least one dummy action".to_string(),
        ));
    }
    if reward.len() != s_n {
        return Err(Error::Dimension(format!(
            "reward has {} states, transition has {s_n}",
            reward.len()
        )));
    }
    for (s, (t_row, r_row)) in transition.iter().zip(reward).enumerate() {
        if t_row.len() != a_n || r_row.len() != a_n {
            return Err(Error::Dimension(format!(
                "state {s}: expected {a_n} actions in transition and reward"
            )));
        }
        for (a, succ) in t_row.iter().enumerate() {
            if succ.len() != s_n {
                return Err(Error::Dimension(format!(
                    "transition[{s}][{a}] has {} successors, expected {s_n}",
                    succ.len()
                )));
            }
        }
    }
    let g_transition = (0..s_n)
        .map(|s| {
            (0..a_n)
                .map(|a| vec![transition[s][a].clone(); num_dummy_actions])
                .collect()
        })
        .collect();
    let g_reward = (0..s_n)
        .map(|s| {
            (0..a_n)
                .map(|a| vec![reward[s][a]; num_dummy_actions])
                .collect()
        })
        .collect();
    MarkovGame::new_relaxed(gamma, g_transition, g_reward)
}

/// Seeded random game: every transition row is a positive vector supported
/// on `branching` uniformly chosen successors; rewards uniform on [0, 1].
pub fn random_game(
    num_states: usize,
    num_actions_max: usize,
    num_actions_min: usize,
    gamma: f64,
    branching: usize,
    rng: RngSpec,
) -> Result<MarkovGame> {
    if num_states == 0 || num_actions_max == 0 || num_actions_min == 0 {
        return Err(Error::Dimension(format!(
            "empty dims: ({num_states}, {num_actions_max}, {num_actions_min})"
        )));
    }
    if branching == 0 || branching > num_states {
        return Err(Error::invalid(
            "branching",
            format!("must lie in [1, {num_states}], got {branching}"),
        ));
    }
    const TAG_SUPPORT: u64 = 0;
    const TAG_WEIGHT: u64 = 1;
    const TAG_REWARD: u64 = 2;

    let mut transition = vec![
        vec![vec![vec![0.0; num_states]; num_actions_min]; num_actions_max];
        num_states
    ];
    let mut reward = vec![vec![vec![0.0; num_actions_min]; num_actions_max]; num_states];
    for s in 0..num_states {
        for a in 0..num_actions_max {
            for b in 0..num_actions_min {
                // Partial Fisher-Yates keyed by the triple: the first
                // `branching` entries are a uniform random subset.
                let mut pool: Vec<usize> = (0..num_states).collect();
                for i in 0..branching {
                    let u = keyed_unit_f64(rng, &[TAG_SUPPORT, s as u64, a as u64, b as u64, i as u64]);
                    let j = i + ((num_states - i) as f64 * u) as usize;
                    pool.swap(i, j.min(num_states - 1));
                }
                let mut total = 0.0;
                let mut weights = Vec::with_capacity(branching);
                for i in 0..branching {
                    let w = 0.05
                        + keyed_unit_f64(rng, &[TAG_WEIGHT, s as u64, a as u64, b as u64, i as u64]);
                    total += w;
                    weights.push(w);
                }
                for i in 0..branching {
                    transition[s][a][b][pool[i]] = weights[i] / total;
                }
                reward[s][a][b] = keyed_unit_f64(rng, &[TAG_REWARD, s as u64, a as u64, b as u64]);
            }
        }
    }
    MarkovGame::new(gamma, transition, reward)
}

/// Stable display name for experiment outputs.
pub fn hard_instance_id(spec: &HardInstanceSpec) -> String {
    spec.instance_id()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_feasible_at_moderate_eps() {
        let sel = select_constants(0.7, 1e-3).unwrap();
        assert!(sel.c >= 2 * sel.c_prime);
        assert!(sel.alpha1 > 0.0 && sel.alpha2 >= 2.0 * sel.alpha1);
        // The selected constants must round-trip through spec validation.
        HardInstanceSpec::new(
            1,
            2,
            2,
            0.7,
            1e-3,
            sel.alpha1,
            sel.alpha2,
            Hypothesis::Null,
            RewardId::R1,
        )
        .unwrap();
    }

    #[test]
    fn constants_infeasible_at_large_eps() {
        let err = select_constants(0.7, 0.15).unwrap_err();
        match err {
            Error::Infeasible { first_violation, .. } => {
                assert!(first_violation.starts_with("p0_window"), "{first_violation}");
            }
            other => panic!("expected infeasible, got {other}"),
        }
    }

    #[test]
    fn halving_eps_halves_alphas() {
        // The perturbations are linear in eps for fixed grid constants:
        // alpha = c * (1 - gamma*p0)^2 * eps / gamma.
        let (gamma, eps) = (0.7, 1e-3);
        let sel = select_constants(gamma, eps).unwrap();
        let d = 1.0 - gamma * gamma;
        let unit = d * d * eps / gamma;
        assert!((sel.alpha1 - sel.c_prime as f64 * unit).abs() < 1e-15);
        assert!((sel.alpha2 - sel.c as f64 * unit).abs() < 1e-15);
        let halved_unit = d * d * (eps / 2.0) / gamma;
        assert!((sel.c as f64 * halved_unit - sel.alpha2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn closed_form_baseline_value() {
        // Unperturbed cells at gamma = 0.9: q = 0.9/(1-0.81).
        let sel = select_constants(0.9, 1e-4).unwrap();
        let spec = HardInstanceSpec::new(
            1, 2, 2, 0.9, 1e-4, sel.alpha1, sel.alpha2, Hypothesis::Null, RewardId::R1,
        )
        .unwrap();
        let q = spec.closed_form_q();
        // Column 1 (second min action) is untouched by the baseline tilts.
        let expect = 0.9 / (1.0 - 0.81);
        assert!((q.0[0][0][1] - expect).abs() < 1e-12, "{}", q.0[0][0][1]);
        assert!((expect - 4.736842).abs() < 1e-6);
    }

    #[test]
    fn build_and_verify_null() {
        let spec = HardInstanceSpec::with_selected(
            1, 2, 2, 0.7, 1e-3, Hypothesis::Null, RewardId::R1,
        )
        .unwrap();
        let inst = build_hard_instance(&spec).unwrap();
        assert_eq!(inst.game.num_states, 9);
        let report = verify_instance(&inst).unwrap();
        assert!(report.all_passed());
    }

    #[test]
    fn embed_mdp_is_min_invariant() {
        let t = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0]; 2]];
        let r = vec![vec![0.2, 0.9], vec![0.0, 0.0]];
        let game = embed_mdp(&t, &r, 0.5, 3).unwrap();
        assert_eq!(game.num_actions_min, 3);
        for b in 0..3 {
            assert_eq!(game.transition[0][1][b], vec![0.0, 1.0]);
            assert_eq!(game.reward[0][1][b], 0.9);
        }
    }

    #[test]
    fn random_game_rows_normalized_and_deterministic() {
        let g1 = random_game(5, 3, 2, 0.8, 3, RngSpec::new(11, 0)).unwrap();
        let g2 = random_game(5, 3, 2, 0.8, 3, RngSpec::new(11, 0)).unwrap();
        assert_eq!(g1, g2);
        for s in 0..5 {
            for a in 0..3 {
                for b in 0..2 {
                    let sum: f64 = g1.transition[s][a][b].iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                    let support = g1.transition[s][a][b].iter().filter(|&&p| p > 0.0).count();
                    assert_eq!(support, 3);
                }
            }
        }
    }
}
