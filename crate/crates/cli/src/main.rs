//! `lpembed`: fixtures, hyperbolicity and structure checks, embeddings into
//! sparse `ℓ^p` coordinates, and distortion reports.
//!
//! Exit codes: 0 when every requested check passes, 2 when some check
//! fails, 1 on errors.

mod config;
mod jsonout;
mod pipeline;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{parse_config, Settings};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lpembed", version, about = "Coarse lp-embedding toolkit over finite graph fixtures")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Default, Clone)]
struct Shared {
    /// Fixture: free(2,8), abelian(2,6), cyclic(8,4), zxz(10), z2xz(8),
    /// product(...,R), path(9), cycle(8), file:PATH
    #[arg(long)]
    fixture: Option<String>,
    /// Compression function: sqrt, power:A, paperlog:EPS, table:PATH
    #[arg(long)]
    f: Option<String>,
    /// Embedding exponent (> 1)
    #[arg(long)]
    p: Option<f64>,
    /// Structure constant K for the relative machinery
    #[arg(long)]
    k: Option<u32>,
    /// Piece source: cosets, lines, file:PATH
    #[arg(long)]
    pieces: Option<String>,
    /// Peripheral factor indices, comma separated
    #[arg(long)]
    peripherals: Option<String>,
    /// Neighborhood constant for coset/ball pieces
    #[arg(long)]
    piece_k: Option<u32>,
    /// Key the small embedding into one shared coordinate block
    #[arg(long)]
    shared_small: bool,
    /// Seed for the sampled checks
    #[arg(long)]
    seed: Option<u64>,
    /// Hyperbolicity constant override ("auto" or a number)
    #[arg(long)]
    delta: Option<String>,
    /// Output directory for report.json / embedding.csv / curve.csv
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Include wall-clock timings in the report (breaks byte stability)
    #[arg(long)]
    timings: bool,
}

impl Shared {
    fn to_settings(&self) -> Result<Settings> {
        let peripherals = match &self.peripherals {
            None => None,
            Some(t) => Some(
                t.split(',')
                    .map(|x| x.trim().parse::<usize>().context("bad factor index"))
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(Settings {
            fixture: self.fixture.clone(),
            f: self.f.clone(),
            p: self.p,
            k: self.k,
            pieces: self.pieces.clone(),
            peripherals,
            piece_k: self.piece_k,
            shared_small: self.shared_small,
            seed: self.seed,
            delta: self.delta.clone(),
            out_dir: self.out_dir.as_ref().map(|p| p.display().to_string()),
            timings: self.timings,
            ..Default::default()
        })
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a fixture graph file (optionally with its piece system)
    Gen {
        #[command(flatten)]
        shared: Shared,
        /// Graph file to write
        #[arg(long)]
        out: PathBuf,
        /// Also write the piece system here
        #[arg(long)]
        pieces_out: Option<PathBuf>,
    },
    /// Hyperbolicity constants (exhaustive below 200 vertices, else sampled)
    Delta {
        #[command(flatten)]
        shared: Shared,
    },
    /// Run one family of checks
    Check {
        /// function | lemmas | tg | spqr | stability | trumpets | nxi | delta
        what: String,
        #[command(flatten)]
        shared: Shared,
        /// Random instance count for the summation lemmas
        #[arg(long)]
        instances: Option<usize>,
        /// Largest element in random instances
        #[arg(long)]
        max_m: Option<u64>,
        /// Stability scale n
        #[arg(long)]
        n: Option<u32>,
        /// Sampled pair count for stability (default exhaustive)
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Compute an embedding over the safe ball and write its coordinates
    Embed {
        /// hyp | tg | relhyp
        kind: String,
        #[command(flatten)]
        shared: Shared,
    },
    /// Embedding plus exhaustive distortion measurement
    Distortion {
        /// hyp | tg | relhyp
        embed: String,
        #[command(flatten)]
        shared: Shared,
    },
    /// Run a full pipeline from a config document
    Report {
        /// Config file (key = value with optional `[sections]`)
        #[arg(long)]
        config: PathBuf,
        /// Let the config override command-line flags
        #[arg(long)]
        config_priority: bool,
        #[command(flatten)]
        shared: Shared,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(all_pass) => {
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Gen { shared, out, pieces_out } => {
            let s = shared.to_settings()?;
            let fixture = pipeline::build_fixture(
                s.fixture.as_deref().context("gen requires --fixture")?,
            )?;
            std::fs::write(&out, fixture.graph.to_graph_file())?;
            println!("wrote {} ({} vertices)", out.display(), fixture.graph.vertex_count());
            if let Some(path) = pieces_out {
                let ps = pipeline::build_pieces(&fixture.graph, &s)?;
                std::fs::write(&path, ps.to_pieces_file(&fixture.graph))?;
                println!("wrote {} ({} pieces)", path.display(), ps.piece_count());
            }
            Ok(true)
        }
        Cmd::Delta { shared } => {
            let mut s = shared.to_settings()?;
            s.checks = vec!["delta".into()];
            finish(&s)
        }
        Cmd::Check { what, shared, instances, max_m, n, trials } => {
            let mut s = shared.to_settings()?;
            s.checks = vec![what];
            s.instances = instances;
            s.max_m = max_m;
            s.stability_n = n;
            s.trials = trials;
            finish(&s)
        }
        Cmd::Embed { kind, shared } => {
            let mut s = shared.to_settings()?;
            s.embed = Some(kind);
            s.checks = vec![];
            finish(&s)
        }
        Cmd::Distortion { embed, shared } => {
            let mut s = shared.to_settings()?;
            s.embed = Some(embed);
            finish(&s)
        }
        Cmd::Report { config, config_priority, shared } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let from_file = parse_config(&text)?;
            let from_flags = shared.to_settings()?;
            let s = if config_priority {
                from_flags.overlaid_with(from_file)
            } else {
                from_file.overlaid_with(from_flags)
            };
            finish(&s)
        }
    }
}

fn finish(s: &Settings) -> Result<bool> {
    let out_dir = s.out_dir.clone().map(PathBuf::from);
    let outcome = pipeline::run_pipeline(s, out_dir.as_deref())?;
    println!("{}", jsonout::render(&outcome.report).trim_end());
    Ok(outcome.checks_passed)
}
