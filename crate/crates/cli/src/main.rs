//! `zsmg` — plan, sample, generate, sweep, and verify zero-sum Markov games
//! from the command line. Thin argument-parsing shell over the `zsmg`
//! library; all behavior lives there.
//!
//! Exit codes: 0 success, 1 domain error (a JSON error object is printed to
//! stderr), 2 usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use zsmg::experiment::{atomic_write, fit_rate, run_sweep, ExperimentConfig, MetricField};
use zsmg::instances::{
    build_hard_instance, embed_mdp, random_game, verify_instance, HardInstanceSpec, Hypothesis,
    MdpSpec, RewardId,
};
use zsmg::matrix::RegularizerSpec;
use zsmg::plan::{shapley_value_iteration, OracleKind, PlanConfig};
use zsmg::rng::RngSpec;
use zsmg::sample::estimate_model;
use zsmg::{Error, MarkovGame};

#[derive(Parser)]
#[command(name = "zsmg", version = zsmg::VERSION, about = "Zero-sum Markov game planner and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a game file to a certified tolerance; print the solution as JSON.
    Solve {
        /// Game JSON file.
        game: PathBuf,
        /// Target planning tolerance.
        #[arg(long, default_value_t = 1e-6)]
        eps_opt: f64,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Sample an empirical transition model from a game file.
    Estimate {
        /// Game JSON file.
        game: PathBuf,
        /// Samples per state-joint-action triple.
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        /// Where to write the model JSON.
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Generate game files.
    #[command(subcommand)]
    Instance(InstanceCommand),
    /// Run a sweep config: write the records CSV and a rate-fit summary JSON.
    Sweep {
        /// Sweep configuration JSON file.
        config: PathBuf,
    },
    /// Rebuild a hard instance from its spec (or sidecar) and re-check every
    /// structural claim.
    Verify {
        /// Spec JSON, or a sidecar JSON with a "spec" field.
        spec: PathBuf,
    },
}

#[derive(Subcommand)]
enum InstanceCommand {
    /// Calibrated hard instance; writes the game plus a sidecar JSON with the
    /// spec, closed-form Q, and claimed equilibrium.
    Hard {
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        l1: usize,
        #[arg(long, default_value_t = 2)]
        l2: usize,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        eps: f64,
        /// Alternative transition hypothesis as "k,l1,l2" (default: null).
        #[arg(long)]
        alt: Option<String>,
        /// Alternative reward id as "k,l1,l2" (default: the all-ones reward).
        #[arg(long)]
        reward_alt: Option<String>,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Seeded random game.
    Random {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions_max: usize,
        #[arg(long)]
        actions_min: usize,
        #[arg(long)]
        gamma: f64,
        /// Successors per transition row.
        #[arg(long)]
        branching: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        stream: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Single-controller embedding of an MDP JSON file.
    Embed {
        /// MDP JSON file ({"gamma", "transition": [S][A][S], "reward": [S][A]}).
        mdp: PathBuf,
        /// Number of (inert) actions for the dummy minimizing agent.
        #[arg(long, default_value_t = 1)]
        dummy_actions: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct OracleArgs {
    /// Policy-extraction oracle: exact | entropy | tsallis.
    #[arg(long, default_value = "exact")]
    oracle: String,
    #[arg(long, default_value_t = 0.01)]
    tau_max: f64,
    #[arg(long, default_value_t = 0.01)]
    tau_min: f64,
    /// Tsallis index, only with --oracle tsallis.
    #[arg(long, default_value_t = 0.5)]
    tsallis_q: f64,
}

impl OracleArgs {
    fn to_kind(&self) -> Result<OracleKind, Error> {
        match self.oracle.as_str() {
            "exact" => Ok(OracleKind::ExactLp),
            "entropy" => Ok(OracleKind::SmoothRegularized {
                regularizer: RegularizerSpec::neg_entropy(self.tau_max, self.tau_min),
            }),
            "tsallis" => Ok(OracleKind::SmoothRegularized {
                regularizer: RegularizerSpec::tsallis(self.tsallis_q, self.tau_max, self.tau_min),
            }),
            other => Err(Error::Invalid {
                path: "--oracle".into(),
                message: format!("expected exact|entropy|tsallis, got {other}"),
            }),
        }
    }
}

fn parse_triple(text: &str, what: &str) -> Result<(usize, usize, usize), Error> {
    let parts: Vec<&str> = text.split(',').collect();
    let parsed: Option<Vec<usize>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match parsed.as_deref() {
        Some([k, l1, l2]) => Ok((*k, *l1, *l2)),
        _ => Err(Error::Invalid {
            path: what.into(),
            message: format!("expected three comma-separated indices like 1,2,2 — got {text:?}"),
        }),
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Dimension(_) => "dimension",
        Error::Invalid { .. } => "invalid",
        Error::Singular(_) => "singular",
        Error::IterationCap { .. } => "iteration_cap",
        Error::NonConvergence { .. } => "non_convergence",
        Error::Internal { .. } => "internal",
        Error::Certification { .. } => "certification",
        Error::Infeasible { .. } => "infeasible",
        Error::Verification { .. } => "verification",
        Error::DegenerateGrid(_) => "degenerate_grid",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let payload = serde_json::json!({
                "error": err.to_string(),
                "kind": error_kind(&err),
            });
            eprintln!("{payload}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve {
            game,
            eps_opt,
            oracle,
        } => {
            let game = MarkovGame::load(&game)?;
            let config = PlanConfig {
                eps_opt,
                oracle_kind: oracle.to_kind()?,
                max_iters: 1_000_000,
            };
            let result = shapley_value_iteration(&game, &config)?;
            let payload = serde_json::json!({
                "value": result.v_star_hat.0,
                "mu": result.mu_hat.dist,
                "nu": result.nu_hat.dist,
                "certified_eps_opt": result.certified_eps_opt,
                "iterations": result.iterations,
            });
            println!("{}", serde_json::to_string_pretty(&payload)?);
            Ok(())
        }
        Command::Estimate {
            game,
            n,
            seed,
            stream,
            output,
        } => {
            let game = MarkovGame::load(&game)?;
            let model = estimate_model(&game, n, RngSpec::new(seed, stream))?;
            atomic_write(&output, model.to_json_string()?.as_bytes())?;
            println!(
                "wrote empirical model ({} samples per triple, {} triples) to {}",
                n,
                game.num_states * game.num_actions_max * game.num_actions_min,
                output.display()
            );
            Ok(())
        }
        Command::Instance(instance) => run_instance(instance),
        Command::Sweep { config } => {
            let config = ExperimentConfig::load(&config)?;
            let records = run_sweep(&config)?;
            let mut fits = Vec::new();
            for metric in MetricField::ALL {
                match fit_rate(&records, metric) {
                    Ok(fit) => {
                        println!(
                            "{}: slope {:+.4}, r^2 {:.4} over {} budgets",
                            metric,
                            fit.slope,
                            fit.r_squared,
                            fit.n_grid.len()
                        );
                        fits.push(fit);
                    }
                    Err(Error::DegenerateGrid(why)) => {
                        eprintln!("{metric}: not fitted ({why})");
                    }
                    Err(other) => return Err(other),
                }
            }
            let summary_path = Path::new(&config.output_path).with_extension("summary.json");
            atomic_write(&summary_path, serde_json::to_string_pretty(&fits)?.as_bytes())?;
            println!(
                "{} records -> {} ; rate summary -> {}",
                records.len(),
                config.output_path,
                summary_path.display()
            );
            Ok(())
        }
        Command::Verify { spec } => {
            let text = std::fs::read_to_string(&spec)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            let spec_value = value.get("spec").cloned().unwrap_or(value);
            let spec: HardInstanceSpec = serde_json::from_value(spec_value)?;
            spec.validate()?;
            let inst = build_hard_instance(&spec)?;
            let report = verify_instance(&inst)?;
            for check in &report.checks {
                println!("ok   {}: {}", check.name, check.detail);
            }
            println!("all {} checks passed", report.checks.len());
            Ok(())
        }
    }
}

fn run_instance(cmd: InstanceCommand) -> Result<(), Error> {
    match cmd {
        InstanceCommand::Hard {
            k,
            l1,
            l2,
            gamma,
            eps,
            alt,
            reward_alt,
            output,
        } => {
            let hypothesis = match alt {
                None => Hypothesis::Null,
                Some(text) => {
                    let (k, l1, l2) = parse_triple(&text, "--alt")?;
                    Hypothesis::Alt { k, l1, l2 }
                }
            };
            let reward_id = match reward_alt {
                None => RewardId::R1,
                Some(text) => {
                    let (k, l1, l2) = parse_triple(&text, "--reward-alt")?;
                    RewardId::Alt { k, l1, l2 }
                }
            };
            let spec = HardInstanceSpec::with_selected(k, l1, l2, gamma, eps, hypothesis, reward_id)?;
            let inst = build_hard_instance(&spec)?;
            atomic_write(&output, inst.game.to_json_string()?.as_bytes())?;
            let sidecar = output.with_extension("sidecar.json");
            atomic_write(&sidecar, inst.sidecar_json()?.as_bytes())?;
            println!(
                "wrote {} ({} states) and sidecar {}",
                output.display(),
                inst.game.num_states,
                sidecar.display()
            );
            Ok(())
        }
        InstanceCommand::Random {
            states,
            actions_max,
            actions_min,
            gamma,
            branching,
            seed,
            stream,
            output,
        } => {
            let game = random_game(
                states,
                actions_max,
                actions_min,
                gamma,
                branching,
                RngSpec::new(seed, stream),
            )?;
            atomic_write(&output, game.to_json_string()?.as_bytes())?;
            println!("wrote {}", output.display());
            Ok(())
        }
        InstanceCommand::Embed {
            mdp,
            dummy_actions,
            output,
        } => {
            let mdp = MdpSpec::load(&mdp)?;
            let game = embed_mdp(&mdp.transition, &mdp.reward, mdp.gamma, dummy_actions)?;
            atomic_write(&output, game.to_json_string()?.as_bytes())?;
            println!("wrote {}", output.display());
            Ok(())
        }
    }
}
