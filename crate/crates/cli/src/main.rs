use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mrtrack::bounds::verify_record;
use mrtrack::coordination::{CoordinationMethod, MethodTag};
use mrtrack::harness::{
    read_records, replay_subproblems, run_experiment, run_sweep, write_outputs, write_replay_csv, Dataset,
    ExperimentConfig, SweepConfig,
};
use mrtrack::objective::CAPACITY_SAMPLES;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mrtrack", version, about = "Multi-robot target tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all trials of one configuration.
    Run(RunArgs),
    /// Run a grid of team sizes and methods from a config file.
    Sweep(SweepArgs),
    /// Check bound inequalities on logged subproblems.
    Verify(VerifyArgs),
    /// Solve logged subproblems with several methods and normalize.
    Replay(ReplayArgs),
}

/// Flags override values from `--config`.
#[derive(Args, Default)]
struct Overrides {
    #[arg(long)]
    n_robots: Option<usize>,
    #[arg(long)]
    n_targets: Option<usize>,
    #[arg(long)]
    method: Option<CoordinationMethod>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    mcts_iterations: Option<u64>,
    #[arg(long)]
    mcts_millis: Option<u64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Keep one round assignment per trial instead of redrawing each epoch.
    #[arg(long)]
    fixed_rounds: bool,
    #[arg(long)]
    record_every: Option<usize>,
    #[arg(long)]
    reference_samples: Option<usize>,
    #[arg(long)]
    redundancy_every: Option<usize>,
    #[arg(long)]
    capacity_samples: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    epoch_output: Option<PathBuf>,
    #[arg(long)]
    records_dir: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, c: &mut ExperimentConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = &self.$f { c.$f = v.clone(); })* };
        }
        set!(
            n_robots,
            horizon,
            steps,
            burn_in,
            trials,
            mcts_iterations,
            samples,
            seed
        );
        set!(record_every, reference_samples, redundancy_every, capacity_samples);
        if self.n_targets.is_some() {
            c.n_targets = self.n_targets;
        }
        if let Some(m) = self.method {
            c.method = MethodTag(m);
        }
        if self.mcts_millis.is_some() {
            c.mcts_millis = self.mcts_millis;
        }
        if self.fixed_rounds {
            c.redraw_rounds = false;
        }
        for (dst, src) in [
            (&mut c.output, &self.output),
            (&mut c.epoch_output, &self.epoch_output),
            (&mut c.records_dir, &self.records_dir),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SweepArgs {
    /// Key-value sweep file with `n_robots_list` and `methods`.
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct VerifyArgs {
    /// Directory of subproblem record files.
    #[arg(long)]
    records: PathBuf,
    #[arg(long, default_value_t = CAPACITY_SAMPLES)]
    capacity_samples: usize,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    records: PathBuf,
    /// Comma-separated methods.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "sequential,rsp:2,rsp:4,rsp:8,myopic,random"
    )]
    methods: Vec<CoordinationMethod>,
    #[arg(long, default_value_t = 1000)]
    mcts_iterations: u64,
    #[arg(long, default_value_t = mrtrack::objective::DEFAULT_SAMPLES)]
    samples: usize,
    /// CSV output for the table.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn summarize(data: &Dataset) {
    println!(
        "{:<16} {:>5} {:>6} {:>13} {:>14} {:>10} {:>9} {:>8}",
        "method", "n_r", "trial", "mean_entropy", "redund/robot", "seq_steps", "msgs", "status"
    );
    for r in &data.rows {
        println!(
            "{:<16} {:>5} {:>6} {:>13.4} {:>14.4} {:>10} {:>9.1} {:>8}",
            r.method,
            r.n_r,
            r.trial,
            r.mean_entropy,
            r.redundancy_per_robot,
            r.sequential_steps,
            r.messages_per_epoch,
            r.status
        );
    }
}

fn run(args: RunArgs) -> Result<bool> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    args.overrides.apply(&mut cfg);
    cfg.validate()?;
    let data = run_experiment(&cfg)?;
    write_outputs(&cfg, &data)?;
    summarize(&data);
    Ok(data.rows.iter().all(|r| r.is_ok()))
}

fn sweep(args: SweepArgs) -> Result<bool> {
    let mut s = SweepConfig::load(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    args.overrides.apply(&mut s.base);
    s.validate()?;
    let data = run_sweep(&s)?;
    write_outputs(&s.base, &data)?;
    summarize(&data);
    Ok(data.rows.iter().all(|r| r.is_ok()))
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let records = read_records(&args.records)?;
    if records.is_empty() {
        bail!("no records in {}", args.records.display());
    }
    let mut ok = true;
    println!(
        "{:>18} {:>6} {:>12} {:>12} {:>12} {:>6}",
        "trial_seed", "epoch", "dist", "ignored_W", "min_plan", "holds"
    );
    for rec in &records {
        match verify_record(rec, args.capacity_samples) {
            Ok(v) => {
                let min_plan = v.costs.robots.iter().map(|r| r.plan.mean).fold(f64::INFINITY, f64::min);
                println!(
                    "{:>18x} {:>6} {:>12.5} {:>12.5} {:>12.5} {:>6}",
                    rec.trial_seed,
                    rec.epoch,
                    v.costs.total_dist,
                    v.redundancy.ignored,
                    min_plan,
                    v.holds()
                );
                ok &= v.holds();
            }
            Err(e) => {
                println!("{:>18x} {:>6} error: {e}", rec.trial_seed, rec.epoch);
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn replay(args: ReplayArgs) -> Result<bool> {
    let records = read_records(&args.records)?;
    let cfg = ExperimentConfig {
        mcts_iterations: args.mcts_iterations,
        samples: args.samples,
        ..ExperimentConfig::default()
    };
    let table = replay_subproblems(&records, &args.methods, &cfg.planner())?;
    if let Some(p) = &args.output {
        write_replay_csv(p, &table)?;
    }
    let flagged = table.rows.iter().filter(|r| r.error.is_some()).count();
    println!("{} subproblems, {} flagged", table.rows.len(), flagged);
    for ((m, mean), se) in table
        .methods
        .iter()
        .zip(table.mean_normalized())
        .zip(table.standard_errors())
    {
        println!("{m:<16} {mean:.4} ± {se:.4}");
    }
    Ok(flagged == 0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => verify(a),
        Command::Replay(a) => replay(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
