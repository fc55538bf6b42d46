use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use bsr_core::config::{AgentKind, OffsetMode, Profile, RunConfig};
use bsr_core::harness;
use bsr_core::oracle;

#[derive(Parser)]
#[command(name = "bsr", version, about = "Bayesian successor representation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one agent on one experiment for one or more seeds.
    Run(RunArgs),
    /// Grid search over exploration rate and map learning rate.
    Sweep(SweepArgs),
    /// Summarise saved runs below a directory.
    Analyze {
        /// Directory searched recursively for artifacts.json files.
        dir: PathBuf,
        /// Where to write the report (defaults to `dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check learning rules against analytic and Monte-Carlo references.
    Oracle,
    /// Print the fully resolved configuration.
    Config(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value = "exp1")]
    profile: Profile,
    #[arg(long, default_value = "bsr")]
    agent: AgentKind,
    #[arg(long)]
    offset: Option<OffsetMode>,
    /// TOML file overriding configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single override such as `k=8` or `episodes=100` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    base: ConfigArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value = "exp1")]
    profile: Profile,
    /// Agents, each optionally followed by `:offset`, e.g. `bsr:constant_cr`.
    #[arg(long, value_delimiter = ',', default_value = "bsr,ssr,gpi")]
    agents: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.0,0.05,0.1,0.2")]
    epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.3,0.5")]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, default_value = "sweep")]
    out: PathBuf,
}

fn parse_overrides(set: &[String]) -> Result<toml::Table> {
    let mut table = toml::Table::new();
    for item in set {
        let (key, value) = item
            .split_once('=')
            .with_context(|| format!("override '{item}' is not KEY=VALUE"))?;
        let key = key.trim();
        let value = value.trim();
        // Bare words are taken as strings.
        let v = match format!("v = {value}").parse::<toml::Table>() {
            Ok(mut t) => t.remove("v").context("empty override")?,
            Err(_) => toml::Value::String(value.to_owned()),
        };
        table.insert(key.to_owned(), v);
    }
    Ok(table)
}

fn resolve(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match args.offset {
        Some(o) => RunConfig::with_offset(args.profile, args.agent, o),
        None => RunConfig::new(args.profile, args.agent),
    };
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let table: toml::Table = text.parse()?;
        cfg = cfg.merged(table)?;
    }
    Ok(cfg.merged(parse_overrides(&args.set)?)?)
}

fn label_dir(label: &str) -> String {
    label.replace('/', "_")
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = resolve(&args.base)?;
    let dir = args.out.join(label_dir(&cfg.label()));
    for seed in args.seed..args.seed + args.runs {
        let mut c = cfg.clone();
        c.seed = seed;
        let art = harness::run_experiment(&c)?;
        let run_dir = dir.join(format!("seed-{seed}"));
        harness::write_artifacts(&run_dir, &art)?;
        println!(
            "{} seed {seed}: {} episodes, {} steps, reward {:.1} -> {}",
            c.label(),
            art.episodes.len(),
            art.total_steps,
            art.total_reward,
            run_dir.display()
        );
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let overrides = parse_overrides(&args.set)?;
    let mut templates = Vec::new();
    for spec in &args.agents {
        let (agent, offset) = match spec.split_once(':') {
            Some((a, o)) => (a.parse::<AgentKind>()?, Some(o.parse::<OffsetMode>()?)),
            None => (spec.parse::<AgentKind>()?, None),
        };
        let cfg = match offset {
            Some(o) => RunConfig::with_offset(args.profile, agent, o),
            None => RunConfig::new(args.profile, agent),
        };
        templates.push(cfg.merged(overrides.clone())?);
    }
    info!(
        "sweeping {} agents over {} x {} settings, {} seeds each",
        templates.len(),
        args.epsilons.len(),
        args.alphas.len(),
        args.seeds
    );
    let summary = harness::sweep(&templates, &args.epsilons, &args.alphas, args.seeds, args.base_seed);
    harness::write_sweep(&args.out, &summary)?;
    for (label, &idx) in &summary.best {
        let cell = &summary.cells[idx];
        match &cell.summary {
            Some(s) => println!(
                "{label}: best eps {} alpha {} -> {} {:.1} +/- {:.1}",
                cell.epsilon, cell.alpha_sr, summary.metric, s.mean, s.sem
            ),
            None => println!("{label}: no successful runs"),
        }
    }
    Ok(())
}

fn analyze(dir: &Path, out: &Path) -> Result<()> {
    let arts = harness::read_artifacts(dir)?;
    if arts.is_empty() {
        bail!("no artifacts.json found below {}", dir.display());
    }
    let report = harness::summarize(&arts);
    harness::write_report(out, &report)?;
    for g in &report.groups {
        println!(
            "{:<28} runs {:>3}  steps {:>10.1} +/- {:<8.1} reward {:>9.1} +/- {:.1}",
            g.label, g.runs, g.total_steps.mean, g.total_steps.sem, g.total_reward.mean, g.total_reward.sem
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Analyze { dir, out } => analyze(dir, out.as_deref().unwrap_or(dir)),
        Command::Config(args) => resolve(args).map(|c| print!("{}", c.to_toml_string())),
        Command::Oracle => match oracle::run_all() {
            Ok(checks) => {
                let mut ok = true;
                for c in &checks {
                    println!(
                        "{} {:<40} {:.3e} (tol {:.1e})",
                        if c.pass { "PASS" } else { "FAIL" },
                        c.name,
                        c.value,
                        c.tolerance
                    );
                    ok &= c.pass;
                }
                if !ok {
                    return ExitCode::FAILURE;
                }
                Ok(())
            }
            Err(e) => Err(e.into()),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
