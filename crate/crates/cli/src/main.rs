use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tmlc_core::baselines::MethodSpec;
use tmlc_core::dynamics::FeatureMode;
use tmlc_core::evalharness::{
    gradcheck_suite, prepare_data, report_text, run_experiment, run_meta_test, transfer_grid, write_report,
    ExperimentConfig, ExperimentSummary,
};
use tmlc_core::metaloop::{MetaSupervision, SnapshotSet};
use tmlc_core::{Error, Result};

const GRADCHECK_SEEDS: u64 = 20;
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "tmlc", version, about = "Meta-learned label correction under noisy labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct Overrides {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for transfer grids.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long = "meta-supervision", global = true, value_enum)]
    meta_supervision: Option<SupervisionArg>,
    /// Use the one-step lookahead meta-gradient.
    #[arg(long, global = true)]
    lookahead: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Standard,
    Agnostic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum SupervisionArg {
    SoftenedNoisy,
    CleanMeta,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Meta-train the corrector with its base model and save snapshots.
    MetaTrain,
    /// Train fresh models with labels corrected by frozen snapshots.
    MetaTest {
        /// Directory of snapshot files written by meta-train.
        #[arg(long)]
        snapshots: PathBuf,
    },
    /// Run a reference method (ce, label_smoothing, forward_correction, bootstrap).
    Baseline {
        /// Method name; the configured method when absent.
        #[arg(long)]
        method: Option<String>,
    },
    /// Run the three corrector ablations side by side.
    Ablate,
    /// Meta-train on every source task and meta-test on every target task.
    Transfer,
    /// Finite-difference check of every gradient.
    Gradcheck,
    /// Write the configured training and test data as JSON lines.
    GenData,
    /// Summarise every run log below a directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load_config(o: &Overrides) -> Result<ExperimentConfig> {
    let path = o
        .config
        .as_ref()
        .ok_or_else(|| Error::config("--config PATH is required"))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = o.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = o.mode {
        cfg.meta.corrector.mode = match mode {
            ModeArg::Standard => FeatureMode::Standard,
            ModeArg::Agnostic => FeatureMode::Agnostic,
        };
    }
    if let Some(s) = o.meta_supervision {
        cfg.meta.meta_supervision = match s {
            SupervisionArg::SoftenedNoisy => MetaSupervision::SoftenedNoisy,
            SupervisionArg::CleanMeta => MetaSupervision::CleanMeta,
        };
    }
    if o.lookahead {
        cfg.meta.lookahead = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(s: &ExperimentSummary) {
    println!(
        "{} ({} seeds, {:.1} s)",
        s.experiment_id,
        s.metrics.per_seed.len(),
        s.wallclock_s
    );
    for (name, stat) in &s.metrics.summary {
        println!("  {name:<26} {:.4} ± {:.4}", stat.mean, stat.std);
    }
}

fn meta_train(o: &Overrides) -> Result<()> {
    let mut cfg = load_config(o)?;
    if cfg.method.variant().is_none() {
        cfg.method = MethodSpec::Tmlc;
    }
    print_summary(&run_experiment(&cfg)?);
    Ok(())
}

fn meta_test(o: &Overrides, snapshots: &Path) -> Result<()> {
    let cfg = load_config(o)?;
    let set = SnapshotSet::load_dir(snapshots)?;
    print_summary(&run_meta_test(&cfg, &set)?);
    Ok(())
}

fn baseline(o: &Overrides, method: Option<&str>) -> Result<()> {
    let mut cfg = load_config(o)?;
    if let Some(name) = method {
        cfg.method = MethodSpec::parse_name(name)?;
    }
    if cfg.method.variant().is_some() {
        return Err(Error::config(format!(
            "'{}' is not a baseline; use meta-train or ablate",
            cfg.method.name()
        )));
    }
    print_summary(&run_experiment(&cfg)?);
    Ok(())
}

fn ablate(o: &Overrides) -> Result<()> {
    let base = load_config(o)?;
    let mut rows = Vec::new();
    for method in [MethodSpec::TmlcWoNnp, MethodSpec::TmlcWoTse, MethodSpec::TmlcWoSd] {
        let mut cfg = base.clone();
        cfg.experiment_id = format!("{}/{}", base.experiment_id, method.name());
        cfg.method = method;
        rows.push((cfg.method.name(), run_experiment(&cfg)?));
    }
    println!(
        "{:<14} {:>16} {:>16} {:>16}",
        "variant", "accuracy", "macro_f1", "corrected_acc"
    );
    for (name, s) in &rows {
        let cell = |m: &str| match s.metrics.summary.get(m) {
            Some(st) => format!("{:.4}±{:.4}", st.mean, st.std),
            None => "-".to_string(),
        };
        println!(
            "{name:<14} {:>16} {:>16} {:>16}",
            cell("accuracy"),
            cell("macro_f1"),
            cell("corrected_label_accuracy")
        );
    }
    Ok(())
}

fn transfer(o: &Overrides) -> Result<()> {
    let cfg = load_config(o)?;
    let grid = transfer_grid(&cfg, o.jobs)?;
    let dir = cfg.output_dir.join(&cfg.experiment_id);
    grid.write(&dir)?;
    print!("{}", grid.to_csv_string()?);
    Ok(())
}

fn gradcheck() -> Result<bool> {
    let report = gradcheck_suite(GRADCHECK_SEEDS)?;
    for c in &report.cases {
        println!("{:<40} {:.3e}", c.name, c.max_rel_err);
    }
    println!("max rel. err {:.3e} over {GRADCHECK_SEEDS} seeds", report.max_rel_err);
    Ok(report.passes(GRADCHECK_TOLERANCE))
}

fn gen_data(o: &Overrides) -> Result<()> {
    let cfg = load_config(o)?;
    for &seed in &cfg.seeds {
        let (train, test) = prepare_data(&cfg.dataset, &cfg.noise, seed)?;
        let dir = cfg.output_dir.join(&cfg.experiment_id).join(format!("seed{seed}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        train.write_jsonl(&dir.join("train.jsonl"))?;
        if let Some(t) = test {
            t.write_jsonl(&dir.join("test.jsonl"))?;
        }
        println!("{}", dir.display());
    }
    Ok(())
}

fn report(dir: &Path) -> Result<()> {
    let groups = write_report(dir)?;
    print!("{}", report_text(&groups));
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let o = &cli.overrides;
    match &cli.command {
        Command::MetaTrain => meta_train(o)?,
        Command::MetaTest { snapshots } => meta_test(o, snapshots)?,
        Command::Baseline { method } => baseline(o, method.as_deref())?,
        Command::Ablate => ablate(o)?,
        Command::Transfer => transfer(o)?,
        Command::Gradcheck => return gradcheck(),
        Command::GenData => gen_data(o)?,
        Command::Report { dir } => report(dir)?,
    }
    Ok(true)
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
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: gradient check exceeded {GRADCHECK_TOLERANCE:e}");
            ExitCode::from(2)
        }
        Err(e) if e.is_config() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
