use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aitf::harness::{self, builtin, builtin_names, load_scenario, oracle_provisioning, HarnessError, MetricsReport, RunOptions};
use aitf::types::Millis;
use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "aitf",
    version,
    about = "Run filter-propagation scenarios and evaluate provisioning formulas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a built-in scenario or a scenario file and print its report.
    Run(RunArgs),
    /// Print the filter and cache sizes a contract calls for.
    Formulas(FormulaArgs),
    /// List the built-in scenarios.
    ListScenarios,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Built-in scenario name or path to a JSON scenario.
    #[arg(long)]
    scenario: String,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed sweep, e.g. `1..8` (inclusive); runs in parallel.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<RangeInclusive<u64>>,
    #[arg(long)]
    duration_ms: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write the report here instead of stdout. With `--seeds`, one file per
    /// seed named `<stem>.seed<N>.<ext>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also emit the line-oriented event trace (to `<out>.trace`, or stderr).
    #[arg(long)]
    trace: bool,
}

#[derive(clap::Args, Debug)]
struct FormulaArgs {
    /// Client-to-provider request rate, per second.
    #[arg(long)]
    r1: f64,
    /// Provider-to-client request rate, per second.
    #[arg(long)]
    r2: f64,
    #[arg(long)]
    t_ms: u64,
    #[arg(long)]
    t_tmp_ms: u64,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected a..b")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|e| format!("{b:?}: {e}"))?;
    if a > b {
        return Err(format!("empty range {a}..{b}"));
    }
    Ok(a..=b)
}

enum Failure {
    Config(anyhow::Error),
    Invariant(String),
}

fn render(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
        Format::Text => report.to_text(),
    }
}

fn per_seed_path(out: &Path, seed: u64) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.seed{seed}.{ext}"),
        None => format!("{stem}.seed{seed}"),
    };
    out.with_file_name(name)
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let cfg = load_scenario(&args.scenario)
        .with_context(|| format!("loading scenario {}", args.scenario))
        .map_err(Failure::Config)?;
    let seeds: Vec<Option<u64>> = match &args.seeds {
        Some(r) => r.clone().map(Some).collect(),
        None => vec![args.seed],
    };
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|seed| {
                let cfg = &cfg;
                let opts = RunOptions {
                    seed: *seed,
                    duration_ms: args.duration_ms,
                    trace: args.trace,
                };
                s.spawn(move || harness::run_scenario(cfg, &opts))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });

    let mut violations = Vec::new();
    let mut stdout = std::io::stdout().lock();
    for (seed, res) in seeds.iter().zip(results) {
        let run = match res {
            Ok(r) => r,
            Err(HarnessError::Config(e)) => return Err(Failure::Config(e.into())),
            Err(HarnessError::Sim(e)) => return Err(Failure::Invariant(e.to_string())),
        };
        let text = render(&run.report, args.format);
        let out = args.out.as_ref().map(|o| match (seed, &args.seeds) {
            (Some(s), Some(_)) => per_seed_path(o, *s),
            _ => o.clone(),
        });
        match &out {
            Some(path) => fs::write(path, &text)
                .with_context(|| format!("writing {}", path.display()))
                .map_err(Failure::Config)?,
            None => stdout
                .write_all(text.as_bytes())
                .context("writing report")
                .map_err(Failure::Config)?,
        }
        if let Some(trace) = &run.trace {
            match &out {
                Some(path) => {
                    let mut p = path.clone().into_os_string();
                    p.push(".trace");
                    fs::write(&p, trace)
                        .with_context(|| format!("writing {}", Path::new(&p).display()))
                        .map_err(Failure::Config)?;
                }
                None => eprint!("{trace}"),
            }
        }
        for v in &run.report.violations {
            violations.push(format!("seed {}: {v}", run.report.seed));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(violations.join("\n")))
    }
}

fn cmd_formulas(args: &FormulaArgs) -> anyhow::Result<()> {
    for (name, v) in [("r1", args.r1), ("r2", args.r2)] {
        if !(v.is_finite() && v > 0.0) {
            bail!("--{name} must be positive, got {v}");
        }
    }
    if args.t_ms == 0 || args.t_tmp_ms == 0 {
        bail!("--t-ms and --t-tmp-ms must be positive");
    }
    let p = oracle_provisioning(args.r1, args.r2, Millis(args.t_ms), Millis(args.t_tmp_ms));
    let out = match args.format {
        Format::Json => {
            let v = serde_json::json!({
                "inputs": {"r1": args.r1, "r2": args.r2, "t_ms": args.t_ms, "t_tmp_ms": args.t_tmp_ms},
                "N_v": p.n_v_flows, "n_v": p.n_v, "m_v": p.m_v, "n_a": p.n_a,
            });
            format!("{}\n", serde_json::to_string_pretty(&v)?)
        }
        Format::Csv => format!(
            "r1,r2,t_ms,t_tmp_ms,N_v,n_v,m_v,n_a\n{},{},{},{},{},{},{},{}\n",
            args.r1, args.r2, args.t_ms, args.t_tmp_ms, p.n_v_flows, p.n_v, p.m_v, p.n_a
        ),
        Format::Text => format!(
            "R1 {}/s  R2 {}/s  T {} ms  T_tmp {} ms\n\
             N_v  {:>10}  undesired flows a victim is protected against\n\
             n_v  {:>10}  filters at the victim's gateway\n\
             m_v  {:>10}  shadow entries at the victim's gateway\n\
             n_a  {:>10}  filters per client at an attacker's gateway\n",
            args.r1, args.r2, args.t_ms, args.t_tmp_ms, p.n_v_flows, p.n_v, p.m_v, p.n_a
        ),
    };
    print!("{out}");
    Ok(())
}

fn cmd_list() -> anyhow::Result<()> {
    for name in builtin_names() {
        let c = builtin(name)?;
        println!("{name:<20} {}", c.description.unwrap_or_default());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Formulas(a) => cmd_formulas(a).map_err(Failure::Config),
        Command::ListScenarios => cmd_list().map_err(Failure::Config),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("invariant violated:\n{msg}");
            ExitCode::from(2)
        }
    }
}
