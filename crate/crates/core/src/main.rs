use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use adac::dataset::{load_batch_with, save_batch, Batch, LoadOptions};
use adac::derive::{build_mdp, DeriveParams, DerivedMdp, PenaltyMode};
use adac::env::{EnvState, IntersectionEnvConfig};
use adac::eval::{self, EvalSettings, SweepParams};
use adac::neighbors::{DiameterMode, MetricConfig, NeighborIndex, Norm};
use adac::planner::{value_iteration, DerivedController, Solution};
use adac::policy::{self, Policy};
use adac::theory;
use adac::{Error, Result};

/// Offline traffic-signal control with nearest-neighbor derived MDPs.
///
/// Tabular output is CSV on stdout; reports are JSON on stdout.
/// Exit codes: 0 success, 1 validation error, 2 value iteration did not converge.
#[derive(Parser)]
#[command(name = "adac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Manhattan,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiameterArg {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Cyclic,
    Random,
    Proportional,
    Greedy,
}

#[derive(clap::Args, Clone)]
struct MetricOpts {
    #[arg(long, value_enum, default_value = "euclidean")]
    metric: MetricArg,
    #[arg(long, value_enum, default_value = "exact")]
    diameter_mode: DiameterArg,
    /// Probe count for the sampled diameter.
    #[arg(long, default_value_t = 32)]
    probes: usize,
}

#[derive(clap::Args, Clone)]
struct DeriveOpts {
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Normalized distance threshold; `inf` disables it.
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[command(flatten)]
    metric: MetricOpts,
}

#[derive(clap::Args, Clone)]
struct EnvOpts {
    /// `two-flow`, `multi-flow`, `multi-flow-day` or a JSON config path.
    #[arg(long, default_value = "two-flow")]
    env: String,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Initial queues, comma separated.
    #[arg(long, value_delimiter = ',')]
    start: Option<Vec<u64>>,
    #[arg(long, env = "ADAC_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(clap::Args, Clone)]
struct PolicyOpts {
    #[arg(long, value_enum, default_value = "cyclic")]
    policy: PolicyArg,
    /// Probability of replacing the chosen action by a uniform one.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Cycle length for the proportional policy.
    #[arg(long, default_value_t = 4)]
    cycle: usize,
    /// Training batch, derived MDP and solution for the greedy policy.
    #[arg(long)]
    model_batch: Option<PathBuf>,
    #[arg(long)]
    mdp: Option<PathBuf>,
    #[arg(long)]
    solution: Option<PathBuf>,
}

#[derive(clap::Args, Clone)]
struct SweepOpts {
    #[arg(long)]
    batch: PathBuf,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iters: usize,
    /// Directory receiving one derived-MDP snapshot per row.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[command(flatten)]
    env: EnvOpts,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a behavior policy and write the batch as JSON Lines.
    Collect {
        #[command(flatten)]
        env: EnvOpts,
        #[command(flatten)]
        policy: PolicyOpts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive the pessimistic MDP from a batch and write it as JSON.
    Derive {
        #[arg(long)]
        batch: PathBuf,
        #[command(flatten)]
        opts: DeriveOpts,
        /// none | fixed:C | adaptive
        #[arg(long, default_value = "adaptive")]
        penalty: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a derived MDP by value iteration.
    Solve {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        max_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a policy; prints an evaluation report as JSON.
    Eval {
        #[command(flatten)]
        env: EnvOpts,
        #[command(flatten)]
        policy: PolicyOpts,
        #[arg(long, default_value_t = 0.99)]
        gamma: f64,
    },
    /// Sweep the fixed penalty cost. CSV columns: label,k,mean_return,mean_discounted.
    SweepC {
        #[command(flatten)]
        sweep: SweepOpts,
        #[command(flatten)]
        opts: DeriveOpts,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4,8")]
        c_values: Vec<f64>,
    },
    /// Sweep the neighbor count. CSV columns: label,k,mean_return,mean_discounted.
    SweepK {
        #[command(flatten)]
        sweep: SweepOpts,
        #[command(flatten)]
        opts: DeriveOpts,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6,7,8,9,10")]
        k_values: Vec<usize>,
        #[arg(long, default_value = "adaptive")]
        penalty: String,
    },
    /// Value-gap bound inputs for a solved derivation, as JSON.
    Bounds {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        /// Covering radius; defaults to the derivation threshold.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Greedy covering number of a batch's state-action pairs, as JSON.
    Cover {
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        metric: MetricOpts,
    },
    /// Canonical-neighborhood reward curves. CSV columns: r_max,mode,shaped_reward.
    ShapingSweep {
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        d_near: f64,
        #[arg(long, default_value_t = 0.5)]
        d_far: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
        r_max: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,4")]
        c_values: Vec<f64>,
    },
    /// Shaped rewards of the six-transition example next to the published values.
    /// CSV columns: state,action,column,computed,printed,match.
    ReproduceTable2,
    /// Cyclic vs derived policies on the two-flow intersection.
    TwoFlowDemo {
        #[arg(long, default_value_t = policy::TWO_FLOW_DEMO_HORIZON)]
        trajectory_len: usize,
    },
}

fn metric_config(m: &MetricOpts, seed: u64) -> MetricConfig {
    MetricConfig {
        norm: match m.metric {
            MetricArg::Euclidean => Norm::Euclidean,
            MetricArg::Manhattan => Norm::Manhattan,
        },
        diameter_mode: match m.diameter_mode {
            DiameterArg::Exact => DiameterMode::Exact,
            DiameterArg::Sampled => DiameterMode::Sampled {
                probes: m.probes,
                seed,
            },
        },
    }
}

fn eval_settings(opts: &EnvOpts, gamma: f64) -> Result<EvalSettings> {
    let mut settings = match opts.env.as_str() {
        "two-flow" => EvalSettings::two_flow(100),
        "multi-flow-day" => EvalSettings::multi_flow_day(opts.seed, 360),
        "multi-flow" => {
            let config = IntersectionEnvConfig::multi_flow(opts.seed);
            EvalSettings {
                start: EnvState::new(vec![0; config.flow_count()]),
                horizon: config.horizon,
                config,
                episodes: 5,
                gamma,
                seeds: Vec::new(),
            }
        }
        path => {
            let config = IntersectionEnvConfig::load(path)?;
            EvalSettings {
                start: EnvState::new(vec![0; config.flow_count()]),
                horizon: config.horizon,
                config,
                episodes: 1,
                gamma,
                seeds: Vec::new(),
            }
        }
    };
    settings.gamma = gamma;
    if let Some(e) = opts.episodes {
        settings.episodes = e;
    }
    if let Some(h) = opts.horizon {
        settings.horizon = h;
    }
    if let Some(q) = &opts.start {
        settings.start = EnvState::new(q.clone());
    }
    if settings.seeds.len() != settings.episodes {
        settings.seeds = (0..settings.episodes as u64)
            .map(|i| opts.seed.wrapping_add(i))
            .collect();
    }
    Ok(settings)
}

fn load_batch(path: &PathBuf) -> Result<Batch> {
    load_batch_with(path, LoadOptions::default())
}

fn build_policy(opts: &PolicyOpts, config: &IntersectionEnvConfig, seed: u64) -> Result<Policy> {
    let actions = config.action_count();
    let base = match opts.policy {
        PolicyArg::Cyclic => Policy::cyclic(actions),
        PolicyArg::Random => Policy::random(actions, seed),
        PolicyArg::Proportional => {
            // one rate per phase: the sum of the rates of the flows it serves
            let rates: Vec<f64> = config
                .phases
                .iter()
                .map(|p| p.iter().map(|&f| config.flows[f].rate).sum())
                .collect();
            Policy::proportional(&rates, opts.cycle)?
        }
        PolicyArg::Greedy => {
            let missing = || Error::InvalidParameter("greedy policy needs --model-batch, --mdp and --solution".into());
            let batch = load_batch(opts.model_batch.as_ref().ok_or_else(missing)?)?;
            let mdp = DerivedMdp::load(opts.mdp.as_ref().ok_or_else(missing)?)?;
            let solution = Solution::load(opts.solution.as_ref().ok_or_else(missing)?)?;
            Policy::greedy(Arc::new(DerivedController::new(mdp, solution, &batch)))
        }
    };
    Ok(if opts.epsilon > 0.0 {
        Policy::epsilon_noisy(base, opts.epsilon, actions, seed.wrapping_add(1))
    } else {
        base
    })
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn sweep_params(opts: &DeriveOpts, sweep: &SweepOpts) -> SweepParams {
    SweepParams {
        k: opts.k,
        alpha: opts.alpha,
        gamma: opts.gamma,
        metric: metric_config(&opts.metric, sweep.env.seed),
        tol: sweep.tol,
        max_iters: sweep.max_iters,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect { env, policy, out } => {
            let settings = eval_settings(&env, 1.0)?;
            let mut pol = build_policy(&policy, &settings.config, env.seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(env.seed);
            let batch = policy::collect(
                &settings.config,
                &mut pol,
                settings.episodes,
                settings.horizon,
                &settings.start,
                &mut rng,
            )?;
            save_batch(&batch, &out)?;
            eprintln!("wrote {} transitions to {}", batch.len(), out.display());
        }
        Command::Derive {
            batch,
            opts,
            penalty,
            out,
        } => {
            let batch = load_batch(&batch)?;
            let params = DeriveParams {
                k: opts.k,
                alpha: opts.alpha,
                gamma: opts.gamma,
                mode: penalty.parse()?,
                metric: metric_config(&opts.metric, 0),
            };
            let mdp = build_mdp(&batch, &params)?;
            if mdp.diameter.degenerate {
                eprintln!("warning: core states do not span a positive diameter; distances are unnormalized");
            }
            mdp.save(&out)?;
            eprintln!(
                "{} core states, {} actions, {} empty pairs",
                mdp.state_count(),
                mdp.action_count,
                mdp.empty_pairs.len()
            );
        }
        Command::Solve {
            mdp,
            tol,
            max_iters,
            out,
        } => {
            let mdp = DerivedMdp::load(&mdp)?;
            let sol = value_iteration(&mdp, tol, max_iters)?;
            sol.save(&out)?;
            eprintln!("converged in {} sweeps (residual {:e})", sol.iterations, sol.residual);
        }
        Command::Eval { env, policy, gamma } => {
            let settings = eval_settings(&env, gamma)?;
            let pol = build_policy(&policy, &settings.config, env.seed)?;
            print_json(&eval::evaluate(&pol, &settings)?)?;
        }
        Command::SweepC {
            sweep,
            opts,
            c_values,
        } => {
            let batch = load_batch(&sweep.batch)?;
            let settings = eval_settings(&sweep.env, opts.gamma)?;
            let rows = eval::sweep_c(
                &batch,
                &c_values,
                &sweep_params(&opts, &sweep),
                &settings,
                sweep.snapshots.as_deref(),
            )?;
            print!("{}", eval::sweep_csv(&rows));
        }
        Command::SweepK {
            sweep,
            opts,
            k_values,
            penalty,
        } => {
            let batch = load_batch(&sweep.batch)?;
            let settings = eval_settings(&sweep.env, opts.gamma)?;
            let rows = eval::sweep_k(
                &batch,
                &k_values,
                penalty.parse::<PenaltyMode>()?,
                &sweep_params(&opts, &sweep),
                &settings,
                sweep.snapshots.as_deref(),
            )?;
            print!("{}", eval::sweep_csv(&rows));
        }
        Command::Bounds {
            batch,
            mdp,
            solution,
            delta,
            alpha,
        } => {
            let batch = load_batch(&batch)?;
            let mdp = DerivedMdp::load(&mdp)?;
            let solution = Solution::load(&solution)?;
            if !(delta > 0.0 && delta < 1.0) {
                return Err(Error::InvalidParameter(format!("delta {delta} outside (0, 1)")));
            }
            let index = mdp.index_for(&batch);
            let alpha = alpha.unwrap_or(mdp.alpha);
            print_json(&theory::pac_bound(&batch, &mdp, &solution, &index, delta, alpha))?;
        }
        Command::Cover {
            batch,
            alpha,
            metric,
        } => {
            let batch = load_batch(&batch)?;
            let metric = metric_config(&metric, 0);
            let index = NeighborIndex::build(&batch, metric);
            let centers = theory::greedy_cover(&batch, alpha, metric.norm, index.diameter());
            print_json(&serde_json::json!({
                "alpha": alpha,
                "covering_number": centers.len(),
                "centers": centers,
            }))?;
        }
        Command::ShapingSweep {
            k,
            d_near,
            d_far,
            r_max,
            c_values,
        } => {
            if k < 2 {
                return Err(Error::InvalidParameter("k must be >= 2".into()));
            }
            let mut modes = vec![PenaltyMode::Averagers];
            modes.extend(c_values.iter().map(|&c| PenaltyMode::Fixed { c }));
            modes.push(PenaltyMode::Adaptive);
            println!("r_max,mode,shaped_reward");
            for row in theory::shaping_sweep(k, d_near, d_far, &r_max, &modes) {
                println!("{},{},{}", row.r_max, row.mode, row.shaped_reward);
            }
        }
        Command::ReproduceTable2 => {
            print!("{}", eval::table2_csv(&eval::reproduce_table2()));
        }
        Command::TwoFlowDemo { trajectory_len } => {
            let batch = policy::two_flow_cyclic_batch(trajectory_len)?;
            let settings = EvalSettings::two_flow(100);
            let cyclic = eval::evaluate(&Policy::cyclic(2), &settings)?;
            println!("batch: 2 cyclic trajectories x {trajectory_len} steps from (1,3)");
            println!("cyclic          cumulative {}", cyclic.mean_return);
            let optimal = eval::evaluate(&Policy::FixedCycle(vec![1, 1, 0, 1]), &settings)?;
            println!("[EW,EW,NS,EW]   cumulative {}", optimal.mean_return);
            for mode in [
                PenaltyMode::Averagers,
                PenaltyMode::Fixed { c: 2.0 },
                PenaltyMode::Adaptive,
            ] {
                let params = DeriveParams {
                    k: 3,
                    alpha: f64::INFINITY,
                    gamma: 0.99,
                    mode,
                    metric: MetricConfig::default(),
                };
                let c = DerivedController::train(&batch, &params, 1e-9, 1_000_000)?;
                let r = eval::evaluate(&Policy::greedy(Arc::new(c)), &settings)?;
                println!(
                    "{:<15} cumulative {} ({:.2}x cyclic)",
                    format!("greedy {mode}"),
                    r.mean_return,
                    r.mean_return / cyclic.mean_return
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
