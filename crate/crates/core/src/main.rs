use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use veegan_core::bound::{proposition1_check, sweep_grid, BoundPoint, LinearGaussianFamily};
use veegan_core::exp::{
    default_out_dir, eval_seed, DatasetKind, export_density_grid, run_experiment, run_seed, run_suite, train_run, Bounds,
    ExperimentConfig, RunOptions,
};
use veegan_core::metrics::evaluate_model;
use veegan_core::ndtape::Rng;
use veegan_core::train::{Method, TrainedModel};
use veegan_core::Error;

const BOUND_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "veegan", version, about = "Adversarial training on synthetic Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Experiment file (TOML: `key = value` lines under `[section]` headers).
    #[arg(long, short)]
    config: PathBuf,
    /// Use the 700 -> 1200 dimensional variant of the high-dimensional mixture.
    #[arg(long)]
    long: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run of one method and save the model and loss trace.
    Train {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_parser = Method::parse)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        run: usize,
        /// Output directory (default: the experiment directory under the output root).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a saved model and print its metrics as JSON; 1D normal data adds the fixed-point check.
    Eval {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long, value_parser = Method::parse)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long)]
        model: PathBuf,
    },
    /// Train and evaluate every method and run; write results.csv and manifest.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Put measured wall-clock times in results.csv (otherwise NA).
        #[arg(long)]
        timings: bool,
        /// Runs trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check the entropy bound on the linear-Gaussian grid, or at one point.
    CheckBound {
        #[arg(long, requires_all = ["b", "s"])]
        a: Option<f64>,
        #[arg(long, requires_all = ["a", "s"])]
        b: Option<f64>,
        #[arg(long, requires_all = ["a", "b"])]
        s: Option<f64>,
        /// Swap the two sides of the inequality (negative control).
        #[arg(long, hide = true)]
        swap_sides: bool,
    },
    /// Write a normalized 2D histogram of model or data samples.
    ExportDensity {
        #[command(flatten)]
        cfg: ConfigArg,
        /// Saved model; without it, samples come from the dataset itself.
        #[arg(long, requires = "method")]
        model: Option<PathBuf>,
        #[arg(long, value_parser = Method::parse)]
        method: Option<Method>,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
        /// xmin xmax ymin ymax
        #[arg(long, num_args = 4, allow_negative_numbers = true, default_values_t = [-5.0, 5.0, -5.0, 5.0])]
        bounds: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every tape primitive and two network losses.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    /// Divergence or a violated check.
    Check(String),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn load(cfg: &ConfigArg) -> Result<ExperimentConfig, Failure> {
    Ok(ExperimentConfig::load(&cfg.config)?)
}

fn load_model(cfg: &ExperimentConfig, method: Method, run: usize, path: &PathBuf) -> Result<TrainedModel, Failure> {
    let blob = std::fs::read(path).map_err(Error::from)?;
    let tc = cfg.trainer_config(method, run_seed(cfg.experiment.master_seed, run))?;
    Ok(TrainedModel::from_bytes(&blob, tc)?)
}

fn print_point(p: &BoundPoint) {
    let f = p.fam;
    println!(
        "a={} b={} s={}  lhs={:.12} rhs={:.12} margin={:.3e}",
        f.a,
        f.b,
        f.s,
        p.lhs,
        p.rhs,
        p.margin()
    );
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { cfg, method, run, out } => {
            let exp = load(&cfg)?;
            let spec = exp.dataset.build(cfg.long)?;
            let out = out.unwrap_or_else(|| default_out_dir(&exp));
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let model = match train_run(&exp, &spec, method, run) {
                Err(Error::Diverged { step, reason, .. }) => {
                    return Err(Failure::Check(format!("diverged at step {step}: {reason}")))
                }
                other => other?,
            };
            let stem = format!("{}_run{run}", method.name().to_lowercase());
            let model_path = out.join(format!("{stem}.bin"));
            std::fs::write(&model_path, model.to_bytes()).map_err(Error::from)?;
            std::fs::write(out.join(format!("{stem}_trace.csv")), model.trace.to_csv()).map_err(Error::from)?;
            println!("{}", model_path.display());
        }
        Command::Eval { cfg, method, run, model } => {
            let exp = load(&cfg)?;
            let spec = exp.dataset.build(cfg.long)?;
            let m = load_model(&exp, method, run, &model)?;
            let seed = eval_seed(run_seed(exp.experiment.master_seed, run));
            let metrics = evaluate_model(&m, &spec, &exp.eval, seed)?;
            let mut out = serde_json::to_value(&metrics).expect("metrics serialize");
            if exp.dataset.kind == DatasetKind::Normal && spec.dim() == 1 {
                let p1 = proposition1_check(&m, exp.eval.n_samples, seed, &exp.prop1)?;
                out["prop1"] = serde_json::to_value(&p1).expect("report serializes");
            }
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
        }
        Command::Run { cfg, out, timings, jobs } => {
            let exp = load(&cfg)?;
            let opts = RunOptions {
                out_dir: out.unwrap_or_else(|| default_out_dir(&exp)),
                long: cfg.long,
                timings,
                jobs,
            };
            let outcome = run_experiment(&exp, &opts)?;
            print!("{}", std::fs::read_to_string(outcome.out_dir.join("results.csv")).map_err(Error::from)?);
            if outcome.any_failed() {
                return Err(Failure::Check("one or more runs diverged".into()));
            }
        }
        Command::CheckBound { a, b, s, swap_sides } => {
            if let (Some(a), Some(b), Some(s)) = (a, b, s) {
                let mut p = BoundPoint::evaluate(LinearGaussianFamily::new(a, b, s)?)?;
                if swap_sides {
                    std::mem::swap(&mut p.lhs, &mut p.rhs);
                }
                print_point(&p);
                if p.margin().abs() <= BOUND_TOL {
                    println!("equality within {BOUND_TOL:e}");
                }
                if p.lhs > p.rhs + BOUND_TOL {
                    return Err(Failure::Check("bound violated".into()));
                }
            } else {
                let r = sweep_grid(BOUND_TOL, swap_sides)?;
                for v in &r.violations {
                    print!("VIOLATION ");
                    print_point(v);
                }
                println!("{} points, min margin {:.3e}", r.points, r.min_margin);
                if !r.passed() {
                    return Err(Failure::Check(format!("{} violations", r.violations.len())));
                }
                println!("bound holds on the grid");
            }
        }
        Command::ExportDensity {
            cfg,
            model,
            method,
            run,
            n,
            resolution,
            bounds,
            seed,
            out,
        } => {
            let exp = load(&cfg)?;
            let spec = exp.dataset.build(cfg.long)?;
            let mut rng = Rng::new(seed);
            let samples = match (model, method) {
                (Some(path), Some(m)) => load_model(&exp, m, run, &path)?.sample(&mut rng, n)?,
                _ => spec.sample(&mut rng, n),
            };
            let b = Bounds::new(bounds[0], bounds[1], bounds[2], bounds[3])?;
            let grid = export_density_grid(&samples, b, resolution)?;
            std::fs::write(&out, grid.to_text()).map_err(Error::from)?;
        }
        Command::GradCheck { seed } => {
            let results = run_suite(seed)?;
            let mut bad = 0;
            for r in &results {
                let ok = r.rel_err < GRAD_TOL;
                bad += usize::from(!ok);
                println!("{:<28} {:.3e} {}", r.name, r.rel_err, if ok { "ok" } else { "FAIL" });
            }
            if bad > 0 {
                return Err(Failure::Check(format!("{bad} gradient checks above {GRAD_TOL:e}")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
