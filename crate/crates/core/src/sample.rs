//! Generative-model access and count-based empirical models.
//!
//! A sampler answers "draw one successor from `P(·|s,a,b)`" and nothing else
//! — in particular it never reads rewards, which is what makes the
//! multi-reward pipeline at the bottom of this file reward-agnostic by
//! construction rather than by discipline. Every draw is keyed by
//! `(s, a, b, draw index)` so results are independent of the order (or
//! parallel schedule) in which triples are visited.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::MarkovGame;
use crate::plan::{shapley_value_iteration, PlanConfig, PlanResult};
use crate::rng::{keyed_unit_f64, RngSpec};

/// Count-based transition estimate: `N` i.i.d. successor draws per
/// state-joint-action triple, tabulated.
///
/// `p_hat` is derived as `counts / N` — exact in rational arithmetic, ≤ 1 ulp
/// off per entry as a float.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalModel {
    /// `counts[s][a][b][s']` — how many of the N draws at (s,a,b) landed on s'.
    pub counts: Vec<Vec<Vec<Vec<u64>>>>,
    /// Draws per (s,a,b) triple.
    pub samples_per_pair: u64,
    /// `counts / N`, rows summing to 1.
    pub p_hat: Vec<Vec<Vec<Vec<f64>>>>,
    /// (|S|, |A|, |B|) of the sampled game.
    pub source_dims: (usize, usize, usize),
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    #[serde(rename = "N")]
    n: u64,
    counts: Vec<Vec<Vec<Vec<u64>>>>,
}

impl EmpiricalModel {
    /// Build from raw counts, validating shape and per-row totals.
    pub fn from_counts(counts: Vec<Vec<Vec<Vec<u64>>>>, samples_per_pair: u64) -> Result<Self> {
        if samples_per_pair == 0 {
            return Err(Error::invalid("N", "samples per pair must be >= 1".to_string()));
        }
        let s_n = counts.len();
        if s_n == 0 {
            return Err(Error::Dimension("empty count table".into()));
        }
        let a_n = counts[0].len();
        let b_n = counts[0].first().map_or(0, |x| x.len());
        if a_n == 0 || b_n == 0 {
            return Err(Error::Dimension("count table has an empty action axis".into()));
        }
        for (s, per_a) in counts.iter().enumerate() {
            if per_a.len() != a_n {
                return Err(Error::Dimension(format!(
                    "counts[{s}] has {} rows, expected {a_n}",
                    per_a.len()
                )));
            }
            for (a, per_b) in per_a.iter().enumerate() {
                if per_b.len() != b_n {
                    return Err(Error::Dimension(format!(
                        "counts[{s}][{a}] has {} rows, expected {b_n}",
                        per_b.len()
                    )));
                }
                for (b, row) in per_b.iter().enumerate() {
                    if row.len() != s_n {
                        return Err(Error::Dimension(format!(
                            "counts[{s}][{a}][{b}] has {} successors, expected {s_n}",
                            row.len()
                        )));
                    }
                    let total: u64 = row.iter().sum();
                    if total != samples_per_pair {
                        return Err(Error::invalid(
                            format!("counts[{s}][{a}][{b}]"),
                            format!("row sums to {total}, expected N = {samples_per_pair}"),
                        ));
                    }
                }
            }
        }
        let n_f = samples_per_pair as f64;
        let p_hat = counts
            .iter()
            .map(|per_a| {
                per_a
                    .iter()
                    .map(|per_b| {
                        per_b
                            .iter()
                            .map(|row| row.iter().map(|&c| c as f64 / n_f).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(EmpiricalModel {
            counts,
            samples_per_pair,
            p_hat,
            source_dims: (s_n, a_n, b_n),
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let wire: ModelWire = serde_json::from_str(text)?;
        Self::from_counts(wire.counts, wire.n)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let wire = ModelWire {
            n: self.samples_per_pair,
            counts: self.counts.clone(),
        };
        Ok(serde_json::to_string(&wire)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    /// Largest |p_hat − p| over all entries against a reference kernel.
    pub fn linf_to(&self, transition: &[Vec<Vec<Vec<f64>>>]) -> f64 {
        let mut worst = 0.0f64;
        for (ps, ts) in self.p_hat.iter().zip(transition) {
            for (pa, ta) in ps.iter().zip(ts) {
                for (pb, tb) in pa.iter().zip(ta) {
                    for (p, t) in pb.iter().zip(tb) {
                        worst = worst.max((p - t).abs());
                    }
                }
            }
        }
        worst
    }
}

/// Generative access to a game's transition kernel with draw accounting.
///
/// The per-triple counters make the draw sequence at each `(s,a,b)` a pure
/// function of the key, and `total_calls` exposes exactly how many samples
/// any pipeline consumed.
#[derive(Debug, Clone)]
pub struct GenerativeSampler {
    rng: RngSpec,
    draws: Vec<Vec<Vec<u64>>>,
    total_calls: u64,
}

impl GenerativeSampler {
    pub fn new(game: &MarkovGame, rng: RngSpec) -> Self {
        GenerativeSampler {
            rng,
            draws: vec![
                vec![vec![0u64; game.num_actions_min]; game.num_actions_max];
                game.num_states
            ],
            total_calls: 0,
        }
    }

    /// Total generative calls made through this sampler.
    pub fn total_calls(&self) -> u64 {
        self.total_calls
    }

    /// Draws made at one triple.
    pub fn calls_at(&self, s: usize, a: usize, b: usize) -> u64 {
        self.draws[s][a][b]
    }

    /// One successor draw `s' ~ P(·|s,a,b)` by inverse-CDF over the stored
    /// row; advances this triple's counter.
    pub fn draw(&mut self, game: &MarkovGame, s: usize, a: usize, b: usize) -> Result<usize> {
        if s >= game.num_states || a >= game.num_actions_max || b >= game.num_actions_min {
            return Err(Error::Dimension(format!(
                "draw index ({s},{a},{b}) out of range for ({}, {}, {})",
                game.num_states, game.num_actions_max, game.num_actions_min
            )));
        }
        let k = self.draws[s][a][b];
        self.draws[s][a][b] += 1;
        self.total_calls += 1;
        let u = keyed_unit_f64(self.rng, &[s as u64, a as u64, b as u64, k]);
        Ok(inverse_cdf(&game.transition[s][a][b], u))
    }
}

/// Index of the successor whose CDF bracket contains `u`; round-off that
/// leaks past the final cumulative sum falls back to the last support point.
fn inverse_cdf(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_support = 0;
    for (sp, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_support = sp;
            if u < acc {
                return sp;
            }
        }
    }
    last_support
}

/// Draw `N` successors at every `(s,a,b)` through the given sampler and
/// tabulate the counts. Consumes exactly `N·|S||A||B|` generative calls.
pub fn estimate_model_with(
    sampler: &mut GenerativeSampler,
    game: &MarkovGame,
    n: u64,
) -> Result<EmpiricalModel> {
    if n == 0 {
        return Err(Error::invalid("N", "samples per pair must be >= 1".to_string()));
    }
    game.validate_relaxed()?;
    let mut counts =
        vec![
            vec![vec![vec![0u64; game.num_states]; game.num_actions_min]; game.num_actions_max];
            game.num_states
        ];
    for s in 0..game.num_states {
        for a in 0..game.num_actions_max {
            for b in 0..game.num_actions_min {
                for _ in 0..n {
                    let sp = sampler.draw(game, s, a, b)?;
                    counts[s][a][b][sp] += 1;
                }
            }
        }
    }
    EmpiricalModel::from_counts(counts, n)
}

/// Convenience wrapper over [`estimate_model_with`] with a fresh sampler.
pub fn estimate_model(game: &MarkovGame, n: u64, rng: RngSpec) -> Result<EmpiricalModel> {
    let mut sampler = GenerativeSampler::new(game, rng);
    estimate_model_with(&mut sampler, game, n)
}

/// Assemble a game from estimated transitions and a known reward array.
/// The reward is passed through untouched — it is never estimated.
pub fn empirical_game(
    model: &EmpiricalModel,
    reward: &[Vec<Vec<f64>>],
    gamma: f64,
) -> Result<MarkovGame> {
    let (s_n, a_n, b_n) = model.source_dims;
    if reward.len() != s_n
        || reward.iter().any(|per_a| {
            per_a.len() != a_n || per_a.iter().any(|per_b| per_b.len() != b_n)
        })
    {
        return Err(Error::Dimension(format!(
            "reward shape does not match sampled dims ({s_n}, {a_n}, {b_n})"
        )));
    }
    MarkovGame::new_relaxed(gamma, model.p_hat.clone(), reward.to_vec())
}

/// Sample the transitions once, then plan once per reward on the shared
/// empirical model.
///
/// The sampler has no access to any reward, so the sample set is identical
/// whatever rewards follow; per-reward results depend only on the shared
/// model and that reward, making the output list permutation-equivariant.
pub fn reward_agnostic_pipeline_with(
    sampler: &mut GenerativeSampler,
    game: &MarkovGame,
    n: u64,
    rewards: &[Vec<Vec<Vec<f64>>>],
    config: &PlanConfig,
) -> Result<Vec<PlanResult>> {
    if rewards.is_empty() {
        return Err(Error::invalid("rewards", "need at least one reward array".to_string()));
    }
    let model = estimate_model_with(sampler, game, n)?;
    rewards
        .iter()
        .map(|r| {
            let hat = empirical_game(&model, r, game.discount)?;
            shapley_value_iteration(&hat, config)
        })
        .collect()
}

/// Convenience wrapper over [`reward_agnostic_pipeline_with`] with a fresh
/// sampler.
pub fn reward_agnostic_pipeline(
    game: &MarkovGame,
    n: u64,
    rewards: &[Vec<Vec<Vec<f64>>>],
    config: &PlanConfig,
    rng: RngSpec,
) -> Result<Vec<PlanResult>> {
    let mut sampler = GenerativeSampler::new(game, rng);
    reward_agnostic_pipeline_with(&mut sampler, game, n, rewards, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_game() -> MarkovGame {
        MarkovGame::new(
            0.5,
            vec![
                vec![vec![vec![0.3, 0.7]]],
                vec![vec![vec![0.0, 1.0]]],
            ],
            vec![vec![vec![0.25]], vec![vec![1.0]]],
        )
        .unwrap()
    }

    #[test]
    fn point_mass_always_hits() {
        let game = two_state_game();
        let mut sampler = GenerativeSampler::new(&game, RngSpec::new(7, 0));
        for _ in 0..50 {
            assert_eq!(sampler.draw(&game, 1, 0, 0).unwrap(), 1);
        }
    }

    #[test]
    fn draws_are_deterministic_and_counted() {
        let game = two_state_game();
        let mut s1 = GenerativeSampler::new(&game, RngSpec::new(123, 4));
        let mut s2 = GenerativeSampler::new(&game, RngSpec::new(123, 4));
        let a: Vec<usize> = (0..100).map(|_| s1.draw(&game, 0, 0, 0).unwrap()).collect();
        let b: Vec<usize> = (0..100).map(|_| s2.draw(&game, 0, 0, 0).unwrap()).collect();
        assert_eq!(a, b);
        assert_eq!(s1.total_calls(), 100);
        assert_eq!(s1.calls_at(0, 0, 0), 100);
    }

    #[test]
    fn estimate_model_counts_sum_and_exact_call_count() {
        let game = two_state_game();
        let mut sampler = GenerativeSampler::new(&game, RngSpec::new(5, 5));
        let model = estimate_model_with(&mut sampler, &game, 64).unwrap();
        assert_eq!(sampler.total_calls(), 64 * 2 * 1 * 1);
        for s in 0..2 {
            let total: u64 = model.counts[s][0][0].iter().sum();
            assert_eq!(total, 64);
        }
        // Deterministic row is recovered exactly.
        assert_eq!(model.p_hat[1][0][0], vec![0.0, 1.0]);
    }

    #[test]
    fn model_json_roundtrip() {
        let game = two_state_game();
        let model = estimate_model(&game, 16, RngSpec::new(9, 1)).unwrap();
        let text = model.to_json_string().unwrap();
        assert!(text.contains("\"N\":16"));
        let back = EmpiricalModel::from_json_str(&text).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn bad_counts_rejected() {
        let counts = vec![vec![vec![vec![3u64, 2]]], vec![vec![vec![1, 1]]]];
        let err = EmpiricalModel::from_counts(counts, 5).unwrap_err();
        assert!(err.to_string().contains("counts[1][0][0]"), "{err}");
    }
}
