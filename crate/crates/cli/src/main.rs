//! `clustervote`: the command-line front end.
//!
//! Every subcommand reads a JSON pipeline config (`--config`), applies flag
//! overrides on top, and writes its artifacts under the output directory.
//! Inputs default to the artifacts an earlier subcommand would have written
//! there, so `blobs`, `reduce`, `cluster`, `vote`, `annotate` chain without
//! extra flags. `run` does all of them at once.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use clustervote::consensus::Alignment;
use clustervote::dataio::DataError;
use clustervote::pipeline::{PipelineConfig, PipelineError};
use clustervote::Method;

#[derive(Debug, Parser)]
#[command(name = "clustervote", version, about = "Reduce, over-cluster, vote and label feature matrices")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides applied on top of the config file.
#[derive(Debug, Args)]
struct Common {
    /// JSON pipeline config; flags below win over it.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat with seeds seed, seed+1, ... and report mean ± std.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of clusters each method produces.
    #[arg(long, global = true, value_name = "N")]
    k_over: Option<usize>,
    /// UMAP output dimension.
    #[arg(long, global = true, value_name = "N")]
    dims: Option<usize>,
    #[arg(long, global = true)]
    no_pca: bool,
    #[arg(long, global = true, value_name = "METHOD")]
    reference: Option<Method>,
    #[arg(long, global = true, value_enum)]
    alignment: Option<AlignmentArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlignmentArg {
    Optimal,
    Greedy,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    /// 4 classes of 250 points, 5% noise.
    Standard,
    /// Same with 10% noise.
    Noisy,
}

#[derive(Debug, Args)]
struct Inputs {
    /// Feature matrix (FMAT); defaults to the config's input.features.
    #[arg(long, value_name = "PATH")]
    features: Option<PathBuf>,
    /// Sample manifest (JSON); defaults to the config's input.manifest.
    #[arg(long, value_name = "PATH")]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic benchmark (features.fmat + manifest.json).
    Blobs {
        #[arg(long, value_enum, default_value = "standard")]
        preset: Preset,
        /// JSON blob spec overriding the preset.
        #[arg(long, value_name = "PATH")]
        spec: Option<PathBuf>,
    },
    /// Optional PCA then UMAP; writes embedding.fmat.
    Reduce {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Run every configured clusterer on the embedding.
    Cluster {
        #[arg(long, value_name = "PATH")]
        embedding: Option<PathBuf>,
    },
    /// Align the clusterings and keep the unanimous samples; writes consensus.json.
    Vote {
        /// Source of the sample ids.
        #[arg(long, value_name = "PATH")]
        embedding: Option<PathBuf>,
        /// Clustering files; defaults to clustering.<method>.json per configured method.
        #[arg(value_name = "CLUSTERING")]
        clusterings: Vec<PathBuf>,
    },
    /// Score a consensus against true labels.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        consensus: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Label map to score; defaults to the majority oracle.
        #[arg(long, value_name = "PATH")]
        labels: Option<PathBuf>,
    },
    /// Each clusterer alone against the vote.
    Compare {
        #[command(flatten)]
        inputs: Inputs,
    },
    /// Cluster-count sweep on one embedding, and optionally a UMAP dimension sweep.
    Sweep {
        #[command(flatten)]
        inputs: Inputs,
        #[arg(long, value_delimiter = ',', default_value = "8,12,16,20")]
        counts: Vec<usize>,
        /// UMAP output dimensions to sweep (reruns the whole pipeline per value).
        #[arg(long, value_delimiter = ',', value_name = "LIST")]
        dim_list: Vec<usize>,
    },
    /// Build per-cluster review manifests; writes clusters.json.
    Annotate {
        #[arg(long, value_name = "PATH")]
        consensus: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        embedding: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
    },
    /// Serve the review API (and a UI bundle) over HTTP.
    Serve {
        #[arg(long, value_name = "PATH")]
        consensus: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        clusters: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        /// Directory relative thumbnail paths resolve against; defaults to the manifest's.
        #[arg(long, value_name = "DIR")]
        thumbs: Option<PathBuf>,
        /// Static UI bundle served at /.
        #[arg(long, value_name = "DIR")]
        ui: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
    },
    /// Write the labeled dataset from a complete label map.
    Finalize {
        #[arg(long, value_name = "PATH")]
        consensus: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        labels: Option<PathBuf>,
    },
    /// The whole pipeline: reduce, cluster, vote, annotate (and evaluate with truth).
    Run {
        #[command(flatten)]
        inputs: Inputs,
    },
}

/// A failure tagged with the pipeline stage it came from.
#[derive(Debug)]
pub struct Failure {
    pub stage: &'static str,
    pub message: String,
}

impl Failure {
    /// `message` is prefixed with the stage name.
    pub fn new(stage: &'static str, message: impl std::fmt::Display) -> Self {
        Failure { stage, message: format!("{stage}: {message}") }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure { stage: e.stage(), message: e.to_string() }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::new("dataio", e)
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => clustervote::dataio::read_json(path).map_err(|e| Failure::new("config", e))?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(k) = common.k_over {
        cfg.cluster.k_over = k;
    }
    if let Some(d) = common.dims {
        cfg.umap.d_out = d;
    }
    if common.no_pca {
        cfg.pca.enabled = false;
    }
    if let Some(m) = common.reference {
        cfg.vote.reference = m;
    }
    if let Some(a) = common.alignment {
        cfg.vote.alignment = match a {
            AlignmentArg::Optimal => Alignment::Optimal,
            AlignmentArg::Greedy => Alignment::Greedy,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CA_LOG", "warn")).init();
    let result = load_config(&cli.common).and_then(|cfg| commands::dispatch(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::FAILURE
        }
    }
}
