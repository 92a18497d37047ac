use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use dictrl::config::{ExperimentConfig, UqTarget};
use dictrl::distill::{compare_policies, distill_policy, median, sample_states, write_comparison_csv, DictionaryPolicy};
use dictrl::dyna::{collect_offline, read_transitions_csv, refit_models, write_transitions_csv, DataStore, Dyna};
use dictrl::ensemble::{r_squared, EnsembleModel};
use dictrl::envs::Environment;
use dictrl::error::Error;
use dictrl::library::FeatureLibrary;
use dictrl::rl::{evaluate, Controller, GaussianPolicy, POLICY_FORMAT};
use dictrl::rundir::RunDir;
use dictrl::seeding::sub_seed;
use dictrl::sweep::{run_sweep, summarize, write_cells_csv, write_rows_csv};
use dictrl::uq::variance_landscape;

#[derive(Parser)]
#[command(name = "dictrl", version, about = "Sparse-dictionary model-based RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Omitted fields take per-environment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Collect offline data (or load it) and fit the dynamics/reward models.
    FitDynamics {
        #[command(flatten)]
        common: Common,
        /// Transition CSV as written by this command, instead of collecting.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the model-based training loop.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue an interrupted run directory in place.
        #[arg(long, conflicts_with = "config")]
        resume: Option<PathBuf>,
    },
    /// Distill a trained run's best policy into a sparse polynomial.
    Distill {
        #[command(flatten)]
        common: Common,
        /// Training run directory.
        #[arg(long)]
        run: PathBuf,
    },
    /// Evaluate a saved policy (neural or dictionary) on the real environment.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Variance landscape of a model over a 2-D slice.
    UqMap {
        #[command(flatten)]
        common: Common,
        /// Model checkpoint; alternatively `--run` picks the final model.
        #[arg(long, required_unless_present = "run")]
        model: Option<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Interactions-to-target over an (n_batch, n_collect) grid.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

type CliResult<T> = Result<T, Error>;

fn config_error(path: &str, message: impl ToString) -> Error {
    Error::Config { path: path.into(), message: message.to_string() }
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let path = common.config.as_ref().ok_or_else(|| config_error("--config", "a config file is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| config_error("--config", format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    apply_overrides(&mut cfg, common)?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ExperimentConfig, common: &Common) -> CliResult<()> {
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.validate()
}

/// `--output`, then the config's `output_dir`, then `$DICTRL_OUTPUT_ROOT`
/// (default `runs`) joined with `<command>-seed<seed>`.
fn output_dir(common: &Common, cfg: &ExperimentConfig, command: &str) -> PathBuf {
    if let Some(p) = &common.output {
        return p.clone();
    }
    if let Some(p) = &cfg.output_dir {
        return p.clone();
    }
    let root = std::env::var_os("DICTRL_OUTPUT_ROOT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(format!("{command}-seed{}", cfg.seed))
}

fn fresh_dir(path: &Path, cfg: &ExperimentConfig) -> CliResult<()> {
    if path.exists() && std::fs::read_dir(path)?.next().is_some() {
        return Err(config_error("output_dir", format!("{} already exists and is not empty", path.display())));
    }
    std::fs::create_dir_all(path)?;
    std::fs::write(path.join("config.json"), cfg.to_json()?)?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn fit_dynamics(common: &Common, data: Option<&Path>) -> CliResult<PathBuf> {
    let cfg = load_config(common)?;
    let out = output_dir(common, &cfg, "fit-dynamics");
    let mut env = cfg.env.build()?;
    let transitions = match data {
        Some(p) => read_transitions_csv(p, env.obs_dim(), env.act_dim())?,
        None => collect_offline(&mut env, &cfg.dyna.offline_policy, cfg.dyna.n_off, cfg.seed)?,
    };
    fresh_dir(&out, &cfg)?;
    let names = cfg.env.observation_names();
    write_transitions_csv(&out.join("offline.csv"), &names, &transitions)?;
    let store = DataStore::new(transitions, 0);
    let (dynamics, reward) = refit_models(&store, &cfg.dyna.dynamics, cfg.dyna.reward.as_ref(), sub_seed(cfg.seed, "refit", 0))?;
    dynamics.save_json(&out.join("dynamics.json"))?;
    let mut report = json!({
        "samples": store.len(),
        "dynamics": model_report(&dynamics, &store.dynamics_dataset()?, &names)?,
    });
    write_coefficients(&out.join("dynamics_coefficients.csv"), &dynamics, &names)?;
    if let Some(r) = &reward {
        r.save_json(&out.join("reward.json"))?;
        report["reward"] = model_report(r, &store.reward_dataset()?, &["reward".to_string()])?;
        write_coefficients(&out.join("reward_coefficients.csv"), r, &["reward".to_string()])?;
    }
    write_json(&out.join("fit_report.json"), &report)?;
    Ok(out)
}

fn model_report(model: &EnsembleModel, data: &dictrl::ensemble::Dataset, outputs: &[String]) -> CliResult<serde_json::Value> {
    let r2 = r_squared(model, data)?;
    let c = model.coefficients();
    let rows: Vec<_> = outputs
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let active = (0..c.n_terms()).filter(|&i| c.values()[(i, j)] != 0.0).count();
            json!({"output": name, "r2": r2[j], "active_terms": active})
        })
        .collect();
    Ok(json!({"outputs": rows, "nnz": c.nnz(), "members": model.members().len()}))
}

/// One row per library term, one column per output (heatmap input).
fn write_coefficients(path: &Path, model: &EnsembleModel, outputs: &[String]) -> CliResult<()> {
    let lib = model.library();
    let terms = lib.term_names(&lib.input_names());
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["term".to_string()];
    header.extend(outputs.iter().cloned());
    w.write_record(&header)?;
    for (i, t) in terms.iter().enumerate() {
        let mut rec = vec![t.clone()];
        rec.extend((0..outputs.len()).map(|j| model.coefficients().values()[(i, j)].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn train(common: &Common, resume: Option<&Path>) -> CliResult<PathBuf> {
    let (run, mut dyna) = match resume {
        Some(dir) => {
            let run = RunDir::open(dir)?;
            let mut cfg = run.config()?;
            if common.seed.is_some() {
                return Err(config_error("--seed", "cannot change the seed of a resumed run"));
            }
            apply_overrides(&mut cfg, common)?;
            let dyna = match run.load_state() {
                Ok(state) => Dyna::from_state(cfg.env.clone(), cfg.dyna.clone(), state)?,
                // interrupted before the first refit finished
                Err(Error::Io(_)) => Dyna::new(cfg.env.clone(), cfg.dyna.clone(), cfg.seed)?,
                Err(e) => return Err(e),
            };
            (run, dyna)
        }
        None => {
            let cfg = load_config(common)?;
            let run = RunDir::create(&output_dir(common, &cfg, "train"), &cfg)?;
            let dyna = Dyna::new(cfg.env.clone(), cfg.dyna.clone(), cfg.seed)?;
            (run, dyna)
        }
    };
    dyna.run(|d, m| {
        eprintln!(
            "refit {:>3}  interactions {:>7}  eval {:>8.2}  best {:>8.2}",
            m.refit, m.interactions, m.eval_mean, m.best_return
        );
        run.record(d)
    })?;
    Ok(run.path().to_path_buf())
}

fn distill(common: &Common, run_dir: &Path) -> CliResult<PathBuf> {
    let run = RunDir::open(run_dir)?;
    let mut cfg = match &common.config {
        Some(_) => load_config(common)?,
        None => run.config()?,
    };
    apply_overrides(&mut cfg, common)?;
    let out = output_dir(common, &cfg, "distill");
    let teacher = GaussianPolicy::load_json(&run.best_policy_path())?;
    let dyna = Dyna::from_state(cfg.env.clone(), cfg.dyna.clone(), run.load_state()?)?;
    let mut surrogate = dyna.surrogate()?;
    let replay: Vec<Vec<f64>> = dyna.state().store.iter().map(|t| t.obs.clone()).collect();
    let mean = |x: &[f64]| {
        let mut a = vec![0.0; teacher.act_dim()];
        teacher.mean_action(x, &mut a);
        a
    };
    let dc = &cfg.distill;
    let states = sample_states(&dc.strategy, Some(&mut surrogate), &mean, Some(&replay), cfg.seed)?;
    let lib = FeatureLibrary::new(dc.library.clone())?;
    let mut env = cfg.env.build()?;
    let result = distill_policy(&mean, &states, &lib, &dc.sweep, env.action_bounds(), cfg.seed)?;
    let rows = compare_policies(&mut env, &teacher, &result.policy, dc.compare_episodes, sub_seed(cfg.seed, "compare", 0))?;

    fresh_dir(&out, &cfg)?;
    result.policy.save_json(&out.join("student.json"))?;
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    for c in &result.cells {
        w.serialize(c)?;
    }
    w.flush()?;
    write_comparison_csv(&rows, &out.join("comparison.csv"))?;
    let t: Vec<f64> = rows.iter().map(|r| r.teacher_return).collect();
    let s: Vec<f64> = rows.iter().map(|r| r.student_return).collect();
    let (tm, sm) = (median(&t), median(&s));
    write_json(
        &out.join("summary.json"),
        &json!({
            "states": states.len(),
            "teacher_median": tm,
            "student_median": sm,
            "relative_gap": (tm - sm) / tm.abs(),
            "student_coefficients": result.policy.n_coefficients(),
            "selected": result.cells[result.selected],
        }),
    )?;
    eprintln!("teacher {tm:.2}  student {sm:.2}  coefficients {}", result.policy.n_coefficients());
    Ok(out)
}

fn policy_format(path: &Path) -> CliResult<String> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(v.get("format").and_then(|f| f.as_str()).unwrap_or_default().to_string())
}

fn eval(common: &Common, policy: &Path, episodes: Option<usize>) -> CliResult<PathBuf> {
    let cfg = load_config(common)?;
    let out = output_dir(common, &cfg, "eval");
    let mut env = cfg.env.build()?;
    let controller: Box<dyn Controller> = if policy_format(policy)? == POLICY_FORMAT {
        Box::new(GaussianPolicy::load_json(policy)?)
    } else {
        Box::new(DictionaryPolicy { model: EnsembleModel::load_json(policy)?, action_bounds: env.action_bounds() })
    };
    let n = episodes.unwrap_or(cfg.eval_episodes);
    if n == 0 {
        return Err(config_error("--episodes", "must be >= 1"));
    }
    let returns = evaluate(&mut env, controller.as_ref(), n, sub_seed(cfg.seed, "evaluation", 0))?;
    fresh_dir(&out, &cfg)?;
    let mut w = csv::Writer::from_path(out.join("returns.csv"))?;
    w.write_record(["episode", "return"])?;
    for (i, r) in returns.iter().enumerate() {
        w.write_record([i.to_string(), r.to_string()])?;
    }
    w.flush()?;
    eprintln!("median return {:.2} over {n} episodes", median(&returns));
    Ok(out)
}

fn uq_map(common: &Common, model: Option<&Path>, run_dir: Option<&Path>) -> CliResult<PathBuf> {
    let cfg = match (&common.config, run_dir) {
        (None, Some(d)) => {
            let mut c = RunDir::open(d)?.config()?;
            apply_overrides(&mut c, common)?;
            c
        }
        _ => load_config(common)?,
    };
    let model = match (model, run_dir) {
        (Some(p), _) => EnsembleModel::load_json(p)?,
        (None, Some(d)) => {
            let state = RunDir::open(d)?.load_state()?;
            let ckpt = match cfg.uq.target {
                UqTarget::Dynamics => state.dynamics,
                UqTarget::Reward => state.reward.ok_or_else(|| config_error("uq.target", "run has no reward model"))?,
            };
            EnsembleModel::from_checkpoint(ckpt)?
        }
        (None, None) => unreachable!("clap requires one of --model/--run"),
    };
    let out = output_dir(common, &cfg, "uq-map");
    let landscape = variance_landscape(&model, &cfg.uq.landscape).map_err(|e| config_error("uq.landscape", e))?;
    fresh_dir(&out, &cfg)?;
    landscape.write_csv(&out.join("landscape.csv"))?;
    landscape.write_header(&out.join("landscape.json"))?;
    Ok(out)
}

fn sweep(common: &Common) -> CliResult<PathBuf> {
    let cfg = load_config(common)?;
    let target = cfg.sweep.target_return.ok_or_else(|| config_error("sweep.target_return", "required for a sweep"))?;
    let grid = cfg.sweep.grid();
    if grid.is_empty() {
        return Err(config_error("sweep", "empty grid"));
    }
    let out = output_dir(common, &cfg, "sweep");
    fresh_dir(&out, &cfg)?;
    let mut base = cfg.dyna.clone();
    base.target_return = Some(target);
    let rows = run_sweep(&cfg.env, &base, &grid, cfg.workers)?;
    write_rows_csv(&rows, &out.join("runs.csv"))?;
    write_cells_csv(&summarize(&rows), &out.join("cells.csv"))?;
    Ok(out)
}

fn run(cli: Cli) -> CliResult<PathBuf> {
    match &cli.command {
        Command::FitDynamics { common, data } => fit_dynamics(common, data.as_deref()),
        Command::Train { common, resume } => train(common, resume.as_deref()),
        Command::Distill { common, run } => distill(common, run),
        Command::Eval { common, policy, episodes } => eval(common, policy, *episodes),
        Command::UqMap { common, model, run } => uq_map(common, model.as_deref(), run.as_deref()),
        Command::Sweep { common } => sweep(common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            println!("{}", out.display());
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
