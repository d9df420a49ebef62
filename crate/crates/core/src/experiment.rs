//! Sweep harness: sample-budget × seed grids over one instance, error
//! metrics against a high-precision reference solution, log-log rate fits,
//! and canonical CSV output.
//!
//! Everything is deterministic: cells run on a work-stealing pool but each
//! cell's result depends only on (config, seed), and the CSV rows are sorted
//! canonically before writing, so identical configs produce identical bytes.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{nash_gap, policy_evaluate, MarkovGame, QTable};
use crate::instances::{
    build_hard_instance, embed_mdp, hard_instance_id, random_game, HardInstanceSpec, Hypothesis,
    MdpSpec, RewardId,
};
use crate::plan::{one_step_ne_extract, shapley_value_iteration, OracleKind, PlanConfig};
use crate::rng::RngSpec;
use crate::sample::{empirical_game, estimate_model_with, GenerativeSampler};

/// Largest `|S|·|A|·|B|` a sweep instance may have; the reference solution
/// is computed exactly, so this stays desk-scale.
pub const MAX_SWEEP_CELLS: usize = 20_000;

/// Where the sweep's game comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    File {
        path: String,
    },
    Hard {
        k: usize,
        l1: usize,
        l2: usize,
        gamma: f64,
        eps: f64,
        hypothesis: Hypothesis,
        reward_id: RewardId,
    },
    Random {
        num_states: usize,
        num_actions_max: usize,
        num_actions_min: usize,
        gamma: f64,
        branching: usize,
        seed: RngSpec,
    },
    EmbedMdp {
        path: String,
        num_dummy_actions: usize,
    },
}

/// Whether rewards guide anything at sampling time (they never do; the
/// distinction is how many rewards are planned against one sample set).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    /// Plan against the instance's own reward.
    RewardAware,
    /// Plan once per reward file against the shared empirical model.
    RewardAgnostic { reward_files: Vec<String> },
}

/// Full sweep request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance_source: InstanceSource,
    /// Sample budgets, strictly increasing, at least 3 for rate fitting.
    pub n_grid: Vec<u64>,
    /// At least 5 seeds so the per-budget medians are meaningful.
    pub seeds: Vec<RngSpec>,
    pub eps_opt: f64,
    pub oracle_kind: OracleKind,
    pub protocol: Protocol,
    pub output_path: String,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 3 {
            return Err(Error::invalid(
                "n_grid",
                format!("need at least 3 sample budgets, got {}", self.n_grid.len()),
            ));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid(
                "n_grid",
                "sample budgets must be strictly increasing".to_string(),
            ));
        }
        if self.n_grid[0] == 0 {
            return Err(Error::invalid("n_grid", "sample budgets must be >= 1".to_string()));
        }
        if self.seeds.len() < 5 {
            return Err(Error::invalid(
                "seeds",
                format!("need at least 5 seeds, got {}", self.seeds.len()),
            ));
        }
        if !(self.eps_opt > 0.0 && self.eps_opt.is_finite()) {
            return Err(Error::invalid("eps_opt", format!("must be > 0, got {}", self.eps_opt)));
        }
        if let Protocol::RewardAgnostic { reward_files } = &self.protocol {
            if reward_files.is_empty() {
                return Err(Error::invalid(
                    "protocol",
                    "reward_agnostic needs at least one reward file".to_string(),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One sweep cell's measurements. All four error metrics compare against the
/// reference equilibrium of the true game (computed at `eps_opt/100`):
///
/// * `q_error_inf` — the planned pair evaluated on the *empirical* game;
/// * `q_true_error_inf` — the same pair evaluated on the *true* game;
/// * `nash_gap_direct` — exploitability of the planned pair on the true game;
/// * `nash_gap_onestep` — exploitability of the pair re-extracted from the
///   empirical pair-evaluation Q-table.
///
/// `runtime_ms` is a deterministic work proxy (planner sweep count), not
/// wall-clock time; see the README.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub instance_id: String,
    pub n: u64,
    pub seed: RngSpec,
    pub q_error_inf: f64,
    pub q_true_error_inf: f64,
    pub nash_gap_direct: f64,
    pub nash_gap_onestep: f64,
    pub eps_opt_certified: f64,
    pub runtime_ms: u64,
}

/// Which record field a rate fit targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricField {
    QErrorInf,
    QTrueErrorInf,
    NashGapDirect,
    NashGapOnestep,
}

impl MetricField {
    pub const ALL: [MetricField; 4] = [
        MetricField::QErrorInf,
        MetricField::QTrueErrorInf,
        MetricField::NashGapDirect,
        MetricField::NashGapOnestep,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricField::QErrorInf => "q_error_inf",
            MetricField::QTrueErrorInf => "q_true_error_inf",
            MetricField::NashGapDirect => "nash_gap_direct",
            MetricField::NashGapOnestep => "nash_gap_onestep",
        }
    }

    pub fn value(&self, record: &ExperimentRecord) -> f64 {
        match self {
            MetricField::QErrorInf => record.q_error_inf,
            MetricField::QTrueErrorInf => record.q_true_error_inf,
            MetricField::NashGapDirect => record.nash_gap_direct,
            MetricField::NashGapOnestep => record.nash_gap_onestep,
        }
    }
}

impl std::fmt::Display for MetricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Least-squares fit of `log(median metric)` against `log N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_grid: Vec<u64>,
    pub metric: MetricField,
}

/// Build the instance a config points at, along with a stable display id.
pub fn materialize_instance(source: &InstanceSource) -> Result<(MarkovGame, String)> {
    match source {
        InstanceSource::File { path } => {
            let game = MarkovGame::load(path)?;
            let stem = Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "game".into());
            Ok((game, format!("file-{stem}")))
        }
        InstanceSource::Hard {
            k,
            l1,
            l2,
            gamma,
            eps,
            hypothesis,
            reward_id,
        } => {
            let spec =
                HardInstanceSpec::with_selected(*k, *l1, *l2, *gamma, *eps, *hypothesis, *reward_id)?;
            let id = hard_instance_id(&spec);
            let inst = build_hard_instance(&spec)?;
            Ok((inst.game, id))
        }
        InstanceSource::Random {
            num_states,
            num_actions_max,
            num_actions_min,
            gamma,
            branching,
            seed,
        } => {
            let game = random_game(
                *num_states,
                *num_actions_max,
                *num_actions_min,
                *gamma,
                *branching,
                *seed,
            )?;
            let id = format!(
                "random-S{num_states}A{num_actions_max}B{num_actions_min}-g{gamma}-br{branching}-s{}.{}",
                seed.seed, seed.stream_id
            );
            Ok((game, id))
        }
        InstanceSource::EmbedMdp {
            path,
            num_dummy_actions,
        } => {
            let mdp = MdpSpec::load(path)?;
            let game = embed_mdp(&mdp.transition, &mdp.reward, mdp.gamma, *num_dummy_actions)?;
            let stem = Path::new(path)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "mdp".into());
            Ok((game, format!("embed-{stem}-B{num_dummy_actions}")))
        }
    }
}

struct RewardCase {
    /// Suffix appended to the instance id ("" for the instance's own reward).
    suffix: String,
    true_game: MarkovGame,
    q_ref: QTable,
}

/// Run the full (N × seed) grid for a config: estimate a model per cell,
/// plan per reward, measure all four error metrics against the reference
/// solution, write the CSV atomically, and return the records in canonical
/// order (sorted by N, then seed).
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    config.validate()?;
    let (game, base_id) = materialize_instance(&config.instance_source)?;
    let cells = game.num_states * game.num_actions_max * game.num_actions_min;
    if cells > MAX_SWEEP_CELLS {
        return Err(Error::invalid(
            "instance_source",
            format!(
                "instance has {cells} state-joint-action cells; sweeps cap at {MAX_SWEEP_CELLS} so the reference stays exact"
            ),
        ));
    }

    // Resolve the reward set and the per-reward reference solutions.
    let rewards: Vec<(String, Vec<Vec<Vec<f64>>>)> = match &config.protocol {
        Protocol::RewardAware => vec![(String::new(), game.reward.clone())],
        Protocol::RewardAgnostic { reward_files } => {
            let mut out = Vec::with_capacity(reward_files.len());
            for (i, file) in reward_files.iter().enumerate() {
                let text = std::fs::read_to_string(file)?;
                let reward: Vec<Vec<Vec<f64>>> = serde_json::from_str(&text)?;
                out.push((format!("#r{i}"), reward));
            }
            out
        }
    };
    let reference_cfg = PlanConfig::exact(config.eps_opt / 100.0);
    let cases: Vec<RewardCase> = rewards
        .into_iter()
        .map(|(suffix, reward)| {
            let true_game =
                MarkovGame::new_relaxed(game.discount, game.transition.clone(), reward)?;
            let reference = shapley_value_iteration(&true_game, &reference_cfg)?;
            Ok(RewardCase {
                suffix,
                true_game,
                q_ref: reference.q_star_hat,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let plan_cfg = PlanConfig {
        eps_opt: config.eps_opt,
        oracle_kind: config.oracle_kind.clone(),
        max_iters: 1_000_000,
    };

    let grid: Vec<(u64, RngSpec)> = config
        .n_grid
        .iter()
        .flat_map(|&n| config.seeds.iter().map(move |&seed| (n, seed)))
        .collect();

    let mut records: Vec<ExperimentRecord> = grid
        .par_iter()
        .map(|&(n, seed)| run_cell(&game, &base_id, &cases, &plan_cfg, n, seed))
        .collect::<Result<Vec<Vec<ExperimentRecord>>>>()?
        .into_iter()
        .flatten()
        .collect();
    // Canonical order; the sort is stable, so per-reward rows keep their
    // within-cell order.
    records.sort_by_key(|r| (r.n, r.seed.seed, r.seed.stream_id));

    // Note (not a filter): the square-root convergence regime is only
    // expected while errors stay below (1−γ)^{-1/2}.
    let range_cap = 1.0 / (1.0 - game.discount).sqrt();
    let inside = records.iter().filter(|r| r.q_error_inf <= range_cap).count();
    eprintln!(
        "sweep {base_id}: {inside}/{} records inside the q-error range (0, {range_cap:.3}] where the N^(-1/2) rate applies",
        records.len()
    );

    write_records_csv(&records, Path::new(&config.output_path))?;
    Ok(records)
}

fn run_cell(
    game: &MarkovGame,
    base_id: &str,
    cases: &[RewardCase],
    plan_cfg: &PlanConfig,
    n: u64,
    seed: RngSpec,
) -> Result<Vec<ExperimentRecord>> {
    let mut sampler = GenerativeSampler::new(game, seed);
    let model = estimate_model_with(&mut sampler, game, n)?;
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let hat_game = empirical_game(&model, &case.true_game.reward, game.discount)?;
        let plan = shapley_value_iteration(&hat_game, plan_cfg)?;
        let (q_hat_pair, _) = policy_evaluate(&hat_game, &plan.mu_hat, &plan.nu_hat)?;
        let q_error_inf = q_hat_pair.linf_distance(&case.q_ref);
        let (q_true_pair, _) = policy_evaluate(&case.true_game, &plan.mu_hat, &plan.nu_hat)?;
        let q_true_error_inf = q_true_pair.linf_distance(&case.q_ref);
        let nash_gap_direct = nash_gap(&case.true_game, &plan.mu_hat, &plan.nu_hat)?;
        let (mu_re, nu_re) = one_step_ne_extract(&q_hat_pair)?;
        let nash_gap_onestep = nash_gap(&case.true_game, &mu_re, &nu_re)?;
        debug_assert!(
            q_error_inf >= -1e-8
                && q_true_error_inf >= -1e-8
                && nash_gap_direct >= -1e-8
                && nash_gap_onestep >= -1e-8
        );
        out.push(ExperimentRecord {
            instance_id: format!("{base_id}{}", case.suffix),
            n,
            seed,
            q_error_inf,
            q_true_error_inf,
            nash_gap_direct,
            nash_gap_onestep,
            eps_opt_certified: plan.certified_eps_opt,
            runtime_ms: plan.iterations,
        });
    }
    Ok(out)
}

pub const CSV_HEADER: [&str; 9] = [
    "instance_id",
    "N",
    "seed",
    "q_error_inf",
    "q_true_error_inf",
    "nash_gap_direct",
    "nash_gap_onestep",
    "eps_opt_certified",
    "runtime_ms",
];

/// Serialize records to the fixed CSV schema (LF endings, RFC-4180 quoting)
/// and write atomically (temp file + rename, same directory).
pub fn write_records_csv(records: &[ExperimentRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(CSV_HEADER)
        .map_err(Error::from)?;
    for r in records {
        writer
            .write_record([
                r.instance_id.as_str(),
                &r.n.to_string(),
                &format!("{}/{}", r.seed.seed, r.seed.stream_id),
                &r.q_error_inf.to_string(),
                &r.q_true_error_inf.to_string(),
                &r.nash_gap_direct.to_string(),
                &r.nash_gap_onestep.to_string(),
                &r.eps_opt_certified.to_string(),
                &r.runtime_ms.to_string(),
            ])
            .map_err(Error::from)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::invalid("csv", e.to_string()))?;
    atomic_write(path, &bytes)
}

/// Write via a temp file in the destination directory, then rename into
/// place, so readers never observe a partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Numerical floor below which a per-budget median is treated as "converged
/// to solver precision" and excluded from the log-log fit.
const FIT_FLOOR: f64 = 1e-12;

/// Ordinary least squares of `log(median-over-seeds metric)` against
/// `log N`. Budgets whose median sits at the numerical floor are excluded;
/// fewer than 3 surviving budgets is reported as a degenerate grid rather
/// than fitted.
pub fn fit_rate(records: &[ExperimentRecord], metric: MetricField) -> Result<RateFit> {
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(r.n).or_default().push(metric.value(r).max(0.0));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n_grid = Vec::new();
    for (n, mut vals) in groups {
        let med = median(&mut vals);
        if med > FIT_FLOOR {
            xs.push((n as f64).ln());
            ys.push(med.ln());
            n_grid.push(n);
        }
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateGrid(format!(
            "{} budgets with median {} above {FIT_FLOOR:e}; need >= 3 for a rate fit",
            xs.len(),
            metric.name()
        )));
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let r_squared = if ss_tot < 1e-300 {
        if ss_res < 1e-300 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        n_grid,
        metric,
    })
}
