use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use super::config::{run_seed, ExperimentConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_model, MetricsReport, RunMetrics};
use crate::ndtape::Rng;
use crate::synth::MixtureSpec;
use crate::train::{train, Method, TrainedModel};

pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: &str = "method,run,seed,modes,hq_fraction,ivom,wallclock_s";

/// Environment variable naming the root for relative output directories.
pub const OUT_ENV: &str = "VEEGAN_OUT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// `experiment.output_dir`, or the experiment name, under the output root.
/// Absolute paths are used as given.
pub fn default_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    let rel = cfg.experiment.output_dir.clone().unwrap_or_else(|| cfg.experiment.name.clone());
    let p = PathBuf::from(rel);
    if p.is_absolute() {
        p
    } else {
        output_root().join(p)
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Use the long (700 -> 1200) dimensions for the high-dimensional mixture.
    pub long: bool,
    /// Write measured wall-clock times into `results.csv`.
    pub timings: bool,
    /// Worker threads; each run stays single-threaded.
    pub jobs: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub method: Method,
    pub run: usize,
    pub seed: u64,
    pub eval_seed: u64,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
    pub wallclock_s: f64,
    pub artifacts: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub records: Vec<RunRecord>,
    /// Per-method aggregates over the runs that finished.
    pub reports: Vec<(Method, Option<MetricsReport>)>,
}

impl ExperimentOutcome {
    pub fn any_failed(&self) -> bool {
        self.records.iter().any(|r| r.error.is_some())
    }

    pub fn report(&self, method: Method) -> Option<&MetricsReport> {
        self.reports.iter().find(|(m, _)| *m == method).and_then(|(_, r)| r.as_ref())
    }
}

pub fn eval_seed(run_seed: u64) -> u64 {
    Rng::new(run_seed).split_named("eval").seed()
}

/// Trains one run of `method`.
pub fn train_run(cfg: &ExperimentConfig, spec: &MixtureSpec, method: Method, run: usize) -> Result<TrainedModel> {
    let seed = run_seed(cfg.experiment.master_seed, run);
    train(spec, &cfg.trainer_config(method, seed)?)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn execute(cfg: &ExperimentConfig, spec: &MixtureSpec, out: &Path, method: Method, run: usize) -> Result<RunRecord> {
    let seed = run_seed(cfg.experiment.master_seed, run);
    let stem = format!("{}_run{run}", method.name().to_lowercase());
    let start = Instant::now();
    let mut rec = RunRecord {
        method,
        run,
        seed,
        eval_seed: eval_seed(seed),
        metrics: None,
        error: None,
        wallclock_s: 0.0,
        artifacts: Vec::new(),
    };
    match train(spec, &cfg.trainer_config(method, seed)?) {
        Ok(model) => {
            let trace = format!("traces/{stem}.csv");
            write(&out.join(&trace), model.trace.to_csv())?;
            rec.artifacts.push(trace);
            if cfg.experiment.save_models {
                let path = format!("models/{stem}.bin");
                write(&out.join(&path), model.to_bytes())?;
                rec.artifacts.push(path);
            }
            rec.metrics = Some(evaluate_model(&model, spec, &cfg.eval, rec.eval_seed)?);
        }
        Err(Error::Diverged { step, reason, last_good }) => {
            rec.error = Some(format!("diverged at step {step}: {reason}"));
            if let Some(blob) = last_good {
                let path = format!("models/{stem}.last_good.bin");
                write(&out.join(&path), blob)?;
                rec.artifacts.push(path);
            }
        }
        Err(e) => return Err(e),
    }
    rec.wallclock_s = start.elapsed().as_secs_f64();
    Ok(rec)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

/// Renders `results.csv`: one row per run, then `mean` and `std` rows per
/// method over the runs that finished.
pub fn results_csv(outcome: &ExperimentOutcome, timings: bool) -> String {
    let mut s = format!("# veegan results schema {CSV_SCHEMA_VERSION}\n{CSV_HEADER}\n");
    for r in &outcome.records {
        let wall = if timings { format!("{:.3}", r.wallclock_s) } else { "NA".into() };
        let name = r.method.name();
        match &r.metrics {
            Some(m) => {
                let _ = writeln!(s, "{name},{},{},{},{},{},{wall}", r.run, r.seed, m.modes, m.hq_fraction, fmt_opt(m.ivom));
            }
            None => {
                let _ = writeln!(s, "{name},{},{},failed,failed,failed,{wall}", r.run, r.seed);
            }
        }
    }
    for (method, report) in &outcome.reports {
        let name = method.name();
        match report {
            Some(rep) => {
                let ivm = rep.ivom.map(|v| v.mean);
                let ivs = rep.ivom.map(|v| v.std);
                let _ = writeln!(s, "{name},mean,,{},{},{},NA", rep.modes.mean, rep.hq_fraction.mean, fmt_opt(ivm));
                let _ = writeln!(s, "{name},std,,{},{},{},NA", rep.modes.std, rep.hq_fraction.std, fmt_opt(ivs));
            }
            None => {
                let _ = writeln!(s, "{name},mean,,NA,NA,NA,NA\n{name},std,,NA,NA,NA,NA");
            }
        }
    }
    s
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    code_version: String,
    long: bool,
    /// Fully resolved configuration, TOML text.
    config: String,
    dataset: serde_json::Value,
    notes: Vec<&'static str>,
    runs: &'a [RunRecord],
    artifacts: Vec<String>,
}

const NOTES: [&str; 3] = [
    "reconstruction loss is the squared error summed over the batch and divided by batch size times latent dimension",
    "results.csv wallclock_s is NA unless --timings is given; measured times are in runs[].wallclock_s",
    "seeds: run r uses mix64(master_seed ^ mix64(r)); evaluation uses a named sub-stream of the run seed",
];

/// Trains and evaluates every (method, run) pair and writes `results.csv`,
/// `manifest.json`, per-run traces and models under `opts.out_dir`.
///
/// A diverged run is recorded as failed; check
/// [`ExperimentOutcome::any_failed`] for the exit status.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutcome> {
    let spec = cfg.dataset.build(opts.long)?;
    let out = &opts.out_dir;
    for sub in ["traces", "models"] {
        std::fs::create_dir_all(out.join(sub))?;
    }
    let jobs: Vec<(Method, usize)> = cfg
        .experiment
        .methods
        .iter()
        .flat_map(|&m| (0..cfg.experiment.n_runs).map(move |r| (m, r)))
        .collect();

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RunRecord>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..opts.jobs.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(m, r)) = jobs.get(i) else { break };
                let res = execute(cfg, &spec, out, m, r);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(res);
            });
        }
    });
    let records = slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|s| s.expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;

    let reports = cfg
        .experiment
        .methods
        .iter()
        .map(|&m| {
            let ok: Vec<RunMetrics> = records.iter().filter(|r| r.method == m).filter_map(|r| r.metrics.clone()).collect();
            (m, MetricsReport::from_runs(cfg.eval.n_samples, ok).ok())
        })
        .collect();
    let outcome = ExperimentOutcome {
        out_dir: out.clone(),
        records,
        reports,
    };

    write(&out.join("results.csv"), results_csv(&outcome, opts.timings))?;
    let mut artifacts = vec!["results.csv".to_string(), "manifest.json".to_string()];
    artifacts.extend(outcome.records.iter().flat_map(|r| r.artifacts.iter().cloned()));
    let manifest = Manifest {
        schema: CSV_SCHEMA_VERSION,
        code_version: format!("veegan-core {}", env!("CARGO_PKG_VERSION")),
        long: opts.long,
        config: cfg.resolved_toml()?,
        dataset: serde_json::from_str(&spec.to_json()).map_err(|e| Error::Config(e.to_string()))?,
        notes: NOTES.to_vec(),
        runs: &outcome.records,
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    write(&out.join("manifest.json"), json)?;
    Ok(outcome)
}
