use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use arbmg::harness::{
    describe_presets, ingest_intraday, intervals_csv, run_ensemble, run_preset, summary_fields, sweep, sweep_csv,
    PresetError, PresetOptions, SweepError, SweepSpec, SUMMARY_COLUMNS, SYNTHETIC_LADDER_CSV,
};
use arbmg::oracle::nash_variance;
use arbmg::price::{default_step, derivative_check};
use arbmg::{ConfigError, Game, GameConfig, MeritLadder, RunResult, WeightVector};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_EXHAUSTED: u8 = 4;

/// Minority-game simulator for reserve-power arbitrage.
#[derive(Parser)]
#[command(name = "arbmg", version)]
struct Cli {
    /// Worker threads for ensembles, sweeps and presets (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one game until convergence.
    Run {
        #[command(flatten)]
        game: GameArgs,
        /// Write the per-step series as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run independent samples of one configuration.
    Ensemble {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a parameter sweep described by a spec file.
    Sweep {
        spec: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Reproduce one figure's dataset (`arbmg preset list` for names).
    Preset {
        name: String,
        /// Shrink N by this factor and steps and samples by its square.
        #[arg(long, conflicts_with = "full")]
        scale: Option<f64>,
        /// Full-size experiment (scale 1).
        #[arg(long)]
        full: bool,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory (default: the preset name).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Equilibrium prediction next to the measured ensemble.
    Nash {
        #[command(flatten)]
        game: GameArgs,
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
    /// Merit-order price analysis.
    Price {
        #[command(subcommand)]
        cmd: PriceCmd,
    },
    /// Market-data ingestion.
    Ingest {
        #[command(subcommand)]
        cmd: IngestCmd,
    },
}

#[derive(Subcommand)]
enum PriceCmd {
    /// Derivative conditions along a merit ladder.
    Analyze {
        /// Ladder CSV (`sign,capacity_mw,marginal_price`); defaults to the bundled synthetic ladder.
        #[arg(long)]
        ladder: Option<PathBuf>,
        /// Grid points per side.
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Subcommand)]
enum IngestCmd {
    /// Per-interval averages, closing prices and histograms from trade data.
    Intraday {
        input: PathBuf,
        /// Output directory; without it a JSON summary goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GameArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config overrides, e.g. `alpha=0.5`.
    #[arg(value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl GameArgs {
    fn load(&self) -> Result<GameConfig> {
        let (mut text, dir) = match &self.config {
            Some(p) => (
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                p.parent().map(Path::to_path_buf),
            ),
            None => (String::new(), None),
        };
        for kv in &self.set {
            if !kv.contains('=') {
                bail!(ConfigError::Invalid { key: kv.clone(), reason: "expected KEY=VALUE".into() });
            }
            text.push('\n');
            text.push_str(kv);
        }
        if let Some(s) = self.seed {
            text.push_str(&format!("\nseed = {s}"));
        }
        let c = GameConfig::from_text(&text, dir.as_deref())?;
        c.validate()?;
        Ok(c)
    }
}

impl OutArgs {
    fn emit(&self, body: &str) -> Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
            None => {
                std::io::stdout().write_all(body.as_bytes())?;
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_config_error(&e) { EXIT_CONFIG } else { 1 })
        }
    }
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<ConfigError>()
            || c.is::<SweepError>()
            || matches!(c.downcast_ref::<PresetError>(), Some(PresetError::Config(_) | PresetError::Unknown { .. } | PresetError::Scale(_)))
    })
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let workers = cli.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match cli.cmd {
        Cmd::Run { game, trace, out } => {
            let c = game.load()?;
            let mut g = Game::new(&c)?;
            let r = match trace {
                Some(p) => {
                    let mut w = BufWriter::new(File::create(&p).with_context(|| format!("creating {}", p.display()))?);
                    let r = g.run(Some(&mut w))?;
                    w.flush()?;
                    r
                }
                None => g.run(None)?,
            };
            out.emit(&match out.format {
                Format::Json => serde_json::to_string_pretty(&r)? + "\n",
                Format::Csv => run_csv(&r),
            })?;
            Ok(run_exit(&r))
        }
        Cmd::Ensemble { game, samples, out } => {
            let c = game.load()?;
            let e = run_ensemble(&c, samples, c.seed, workers)?;
            out.emit(&match out.format {
                Format::Json => serde_json::to_string_pretty(&e)? + "\n",
                Format::Csv => format!("{}\n{}\n", SUMMARY_COLUMNS.join(","), summary_fields(&c, &e).join(",")),
            })?;
            Ok(if e.exhausted > 0 {
                ExitCode::from(EXIT_EXHAUSTED)
            } else if e.converged < e.samples {
                ExitCode::from(EXIT_NOT_CONVERGED)
            } else {
                ExitCode::SUCCESS
            })
        }
        Cmd::Sweep { spec, out } => {
            let s = SweepSpec::from_path(&spec)?;
            let rows = sweep(&s, workers)?;
            out.emit(&match out.format {
                Format::Csv => sweep_csv(&s, &rows),
                Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Preset { name, scale, full, seed, out } => {
            if name == "list" {
                print!("{}", describe_presets());
                return Ok(ExitCode::SUCCESS);
            }
            let scale = if full { Some(1.0) } else { scale };
            let out = out.unwrap_or_else(|| PathBuf::from(&name));
            let o = run_preset(&name, &PresetOptions { scale, seed, workers })?;
            o.write_to(&out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("{}: {} files in {} ({:.1}s)", name, o.files.len() + 1, out.display(), o.manifest.runtime_seconds);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Nash { game, samples } => {
            let c = game.load()?;
            let g = Game::new(&c)?;
            let report = nash_variance(&WeightVector::new(g.weights().to_vec())?, g.a_star());
            let e = run_ensemble(&c, samples, c.seed, workers)?;
            let doc = json!({
                "config_hash": e.config_hash,
                "predicted": report,
                "measured": {
                    "samples": e.samples,
                    "exhausted": e.exhausted,
                    "mean_a": e.mean_a,
                    "sigma_a": e.sigma_a,
                    "sigma_over_mean": (e.mean_a.mean != 0.0).then(|| e.sigma_a.mean / e.mean_a.mean.abs()),
                },
                "sigma_ratio_measured_over_predicted":
                    (report.sigma_a_pred > 0.0).then(|| e.sigma_a.mean / report.sigma_a_pred),
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Price { cmd: PriceCmd::Analyze { ladder, points, out } } => {
            let l = match &ladder {
                Some(p) => MeritLadder::from_csv_path(p)?,
                None => MeritLadder::from_csv_reader(SYNTHETIC_LADDER_CSV.as_bytes())?,
            };
            if points < 2 {
                bail!(ConfigError::Invalid { key: "points".into(), reason: "need at least 2".into() });
            }
            let h = default_step(&l);
            let mut rows = Vec::new();
            for (lo, hi) in [(-l.negative_capacity(), 0.0), (0.0, l.positive_capacity())] {
                for k in 1..points {
                    let x = lo + (hi - lo) * k as f64 / points as f64;
                    if let Ok(r) = derivative_check(&l, x, h) {
                        rows.push(r);
                    }
                }
            }
            out.emit(&match out.format {
                Format::Json => serde_json::to_string_pretty(&rows)? + "\n",
                Format::Csv => {
                    let mut s = String::from("x,price,d_price,d2_price,marginal,d_marginal,condition_holds\n");
                    for r in &rows {
                        s.push_str(&format!(
                            "{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
                            r.x, r.price, r.d_price, r.d2_price, r.marginal, r.d_marginal, r.convexity_condition_holds
                        ));
                    }
                    s
                }
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Ingest { cmd: IngestCmd::Intraday { input, out } } => {
            let f = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let r = ingest_intraday(f)?;
            let summary = json!({
                "intervals": r.intervals.len(),
                "skipped_rows": r.skipped_rows,
                "empty_intervals": r.empty_intervals,
                "i_avg": r.i_avg_stats,
                "positive_excess_count": r.excess.len(),
            });
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("intervals.csv"), intervals_csv(&r))?;
                    std::fs::write(dir.join("i_avg_histogram.csv"), r.i_avg_histogram.to_csv())?;
                    std::fs::write(dir.join("excess_histogram.csv"), r.excess_histogram.to_csv())?;
                    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
                }
                None => println!("{}", serde_json::to_string_pretty(&summary)?),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_csv(r: &RunResult) -> String {
    let exhausted = r.exhausted.as_ref().map_or(String::new(), |e| e.step.to_string());
    format!(
        "seed,config_hash,steps_run,converged,mean_a,sigma_a,sigma_total,mean_total,excess_kurtosis,\
         mean_active_fraction,non_monotone_steps,exhausted_at\n\
         {},{},{},{},{:?},{:?},{:?},{:?},{:?},{:?},{},{}\n",
        r.seed,
        r.config_hash,
        r.steps_run,
        r.converged,
        r.mean_a,
        r.sigma_a,
        r.sigma_total,
        r.mean_total,
        r.excess_kurtosis,
        r.mean_active_fraction,
        r.non_monotone_steps,
        exhausted
    )
}

fn run_exit(r: &RunResult) -> ExitCode {
    if r.exhausted.is_some() {
        ExitCode::from(EXIT_EXHAUSTED)
    } else if !r.converged {
        ExitCode::from(EXIT_NOT_CONVERGED)
    } else {
        ExitCode::SUCCESS
    }
}
