use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use regularity_lab::harness::{emit, preset_config, run_experiment, ExperimentConfig, Format, RunReport, PRESETS};
use regularity_lab::report::Num;
use regularity_lab::rough::explicit_constants;

#[derive(Parser)]
#[command(
    name = "lab",
    version,
    about = "Rough parabolic and cross-diffusion estimate laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its reports.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Rerun at `h/2^k` for `k = 1..=K` and tabulate residual orders.
        #[arg(long)]
        refine: Option<usize>,
        /// Report formats (overrides `output.formats`).
        #[arg(long, value_enum)]
        format: Vec<Format>,
    },
    /// List presets, or print one preset's default config.
    Presets {
        /// Preset whose full default config is printed as JSON.
        name: Option<String>,
    },
    /// Print the explicit constants bundle.
    Constants {
        #[arg(long)]
        d: usize,
        #[arg(long, value_parser = parse_exponent)]
        p: f64,
        #[arg(long, value_parser = parse_exponent)]
        q: f64,
        #[arg(long)]
        a0: f64,
        #[arg(long)]
        c0: f64,
    },
    /// Randomized rough-coefficient runs with the oscillation, supremum and Hölder checks.
    Rough {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 4.0, value_parser = parse_exponent)]
        p: f64,
        #[arg(long, default_value_t = 4.0, value_parser = parse_exponent)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        a0: f64,
        #[arg(long, default_value_t = 2.0)]
        c0: f64,
        /// Cylinder radius.
        #[arg(long = "R", default_value_t = 0.5)]
        r: f64,
        /// Horizon; defaults to the cylinder height `βR²`.
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long, default_value_t = 64)]
        grid_n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Runs per forcing mode.
        #[arg(long, default_value_t = 5)]
        cases: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_exponent(s: &str) -> Result<f64, String> {
    match s {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => s.parse().map_err(|e| format!("{e}")),
    }
}

fn summarize(report: &RunReport) {
    for rep in report.flat_reports() {
        let failed: Vec<_> = rep.failures().collect();
        println!(
            "{:<44} {:>4} rows  {}",
            rep.name,
            rep.rows.len(),
            if failed.is_empty() {
                "ok".to_string()
            } else {
                format!("{} FAILED", failed.len())
            }
        );
        for row in failed {
            println!("    {}: lhs {:e} rhs {:e}", row.check, row.lhs.0, row.rhs.0);
        }
    }
    for c in &report.convergence {
        let orders: Vec<String> = c.orders.iter().map(|o| format!("{:.3}", o.0)).collect();
        println!(
            "order {}/{} over n = {:?}: [{}]",
            c.report,
            c.check,
            c.n,
            orders.join(", ")
        );
    }
}

fn execute(cfg: &ExperimentConfig, formats: &[Format]) -> regularity_lab::Result<bool> {
    let start = Instant::now();
    let report = run_experiment(cfg)?;
    summarize(&report);
    for &f in formats {
        let path = emit(&report, f, &cfg.output.dir)?;
        println!("wrote {}", path.display());
    }
    eprintln!("wall time {:.2}s", start.elapsed().as_secs_f64());
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            refine,
            format,
        } => ExperimentConfig::load(&config).and_then(|mut cfg| {
            if let Some(dir) = out {
                cfg.output.dir = dir;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(k) = refine {
                cfg.refine = k;
            }
            let formats = if format.is_empty() {
                cfg.output.formats.clone()
            } else {
                format
            };
            execute(&cfg, &formats)
        }),
        Command::Presets { name: None } => {
            for (name, about) in PRESETS {
                println!("{name:<12} {about}");
            }
            Ok(true)
        }
        Command::Presets { name: Some(name) } => preset_config(&name).and_then(|cfg| {
            println!("{}", serde_json::to_string_pretty(&cfg)?);
            Ok(true)
        }),
        Command::Constants { d, p, q, a0, c0 } => explicit_constants(d, p, q, a0, c0).and_then(|c| {
            println!("{}", serde_json::to_string_pretty(&c)?);
            Ok(true)
        }),
        Command::Rough {
            d,
            p,
            q,
            a0,
            c0,
            r,
            t,
            grid_n,
            seed,
            cases,
            out,
        } => preset_config("oscdecay").and_then(|mut cfg| {
            cfg.grid.dim = d;
            cfg.grid.n = grid_n;
            cfg.estimate.p = p;
            cfg.estimate.q = Some(Num(q));
            cfg.estimate.a0 = a0;
            cfg.estimate.c0 = c0;
            cfg.estimate.r = r;
            cfg.time.t_end = t;
            cfg.seed = seed;
            cfg.sampling.cases = cases;
            cfg.sampling.calibration = cases.div_ceil(2);
            cfg.sampling.pairs = cases;
            let formats = if let Some(dir) = out {
                cfg.output.dir = dir;
                cfg.output.formats.clone()
            } else {
                Vec::new()
            };
            cfg.validate()?;
            execute(&cfg, &formats)
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
