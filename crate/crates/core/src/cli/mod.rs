//! The `mvec` command-line front end.
//!
//! Exit codes: 0 on success, 1 for invalid input (usage, format or validation
//! errors), 2 for I/O failures. Diagnostics go to stderr.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::store::{DType, Strategy};

#[derive(Debug, Parser)]
#[command(name = "mvec", version, about = "Compressed multi-vector page retrieval")]
#[command(args_override_self = true)]
pub struct RunConfig {
    /// Worker threads (0 = one per core). Never changes any emitted number.
    #[arg(long, global = true, env = "MVEC_THREADS", default_value_t = 0)]
    pub threads: usize,

    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,

    /// Flat key=value file of default flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DTypeArg {
    F32,
    F16,
}

impl From<DTypeArg> for DType {
    fn from(d: DTypeArg) -> Self {
        match d {
            DTypeArg::F32 => DType::F32,
            DTypeArg::F16 => DType::F16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PruneArg {
    Random,
    Score,
    Attention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MergeArg {
    Pool1d,
    Pool2d,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Random,
    Score,
    Attention,
    Pool1d,
    Pool2d,
    Cluster,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Score => Strategy::Score,
            StrategyArg::Attention => Strategy::Attention,
            StrategyArg::Pool1d => Strategy::Pool1d,
            StrategyArg::Pool2d => Strategy::Pool2d,
            StrategyArg::Cluster => Strategy::Cluster,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecordKind {
    Corpus,
    Queries,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load and validate a corpus, print a summary, optionally re-encode it.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Storage type for --output (defaults to the input's).
        #[arg(long, value_enum)]
        dtype: Option<DTypeArg>,
    },
    /// Check an MVEC file against every format and data invariant.
    Validate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "corpus")]
        kind: RecordKind,
    },
    /// Drop vectors from every page.
    Prune {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        strategy: PruneArg,
        /// Fraction of vectors removed, in [0, 1).
        #[arg(long)]
        ratio: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Synthesized queries (score) or attention vectors (attention).
        #[arg(long)]
        aux: Option<PathBuf>,
    },
    /// Replace groups of vectors by their mean.
    Merge {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        approach: MergeArg,
        /// Target N_p / N_p', at least 1.
        #[arg(long)]
        factor: f64,
        #[arg(long)]
        no_renormalize: bool,
    },
    /// Validate a corpus and write it sorted by page id with a manifest.
    Index {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Exhaustive MaxSim top-k; writes query_id, rank, page_id, score as TSV.
    Search {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// NDCG@k of a corpus, optionally relative to a baseline report.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate one strategy at several parameter points.
    Sweep(SweepArgs),
    /// Response-potential diagnostics.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Vector payload size of a corpus.
    Mem {
        #[arg(long)]
        input: PathBuf,
        /// Report the footprint relative to this corpus as well.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus, queries, qrels and side data.
    GenSynthetic(GenArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// Pruning ratio or merging factor; repeat for more points.
    #[arg(long = "point", required = true)]
    pub points: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub aux: Option<PathBuf>,
    #[arg(long)]
    pub no_renormalize: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Activated-patch overlap between query pairs of the same page.
    Overlap {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        synth_queries: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.3,0.5,0.7,0.9")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Counts of patches near the page maximum of normalized response potential.
    Redundancy {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        synth_queries: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.9,0.95")]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub pages: usize,
    /// Patch grid as ROWSxCOLS.
    #[arg(long, default_value = "16x24", value_parser = parse_grid)]
    pub grid: (usize, usize),
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 24)]
    pub topic_pool: usize,
    #[arg(long, default_value_t = 4)]
    pub topics_per_page: usize,
    #[arg(long, default_value_t = 6)]
    pub details_per_page: usize,
    #[arg(long, default_value_t = 0.35)]
    pub noise: f32,
    #[arg(long, default_value_t = 3)]
    pub synth_per_page: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "f32")]
    pub dtype: DTypeArg,
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("grid {s:?} is not ROWSxCOLS"))?;
    let r: usize = r.trim().parse().map_err(|_| format!("bad grid rows in {s:?}"))?;
    let c: usize = c.trim().parse().map_err(|_| format!("bad grid cols in {s:?}"))?;
    if r == 0 || c == 0 {
        return Err("grid sides must be positive".into());
    }
    Ok((r, c))
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match config::expand_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("mvec: {e}");
            return e.exit_code();
        }
    };
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cfg.log_level)
        .format_timestamp(None)
        .try_init();
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("mvec: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed configuration inside a thread pool of the requested size.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::validation(format!("cannot start thread pool: {e}")))?;
    pool.install(|| commands::dispatch(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        RunConfig::command().debug_assert();
    }

    #[test]
    fn grid_parser() {
        assert_eq!(parse_grid("24x32").unwrap(), (24, 32));
        assert!(parse_grid("24").is_err());
        assert!(parse_grid("0x3").is_err());
    }

    #[test]
    fn later_flags_override_earlier_ones() {
        let cfg = RunConfig::try_parse_from([
            "mvec", "search", "--corpus", "c", "--queries", "q", "--k", "3", "--k", "7",
        ])
        .unwrap();
        match cfg.command {
            Command::Search { k, .. } => assert_eq!(k, 7),
            other => panic!("{other:?}"),
        }
    }
}
