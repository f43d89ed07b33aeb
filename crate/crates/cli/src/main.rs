//! `wavemark`: embed and verify fragile watermarks in model containers.
//!
//! Exit codes: 0 pass, 1 tamper detected, 2 usage error, 3 I/O or malformed
//! input, 4 insufficient capacity.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_TAMPER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_CAPACITY: u8 = 4;

#[derive(Parser)]
#[command(name = "wavemark", version, about = "Fragile wavelet watermarks for neural-network weights")]
#[command(after_help = "Exit codes: 0 pass, 1 tamper detected, 2 usage error, 3 I/O or malformed input, 4 insufficient capacity")]
pub struct Cli {
    /// Worker threads for per-layer and per-chunk parallelism (default: all cores)
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    /// Report style
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Text)]
    report: ReportFormat,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    /// Human-readable text
    Text,
    /// Comma-separated rows with a header
    Tabular,
}

#[derive(Args)]
pub struct KeyArg {
    /// Key file (64 hex digits)
    #[arg(long, env = "WAVEMARK_KEY")]
    key: PathBuf,
}

#[derive(Args)]
#[group(multiple = false)]
pub struct SecretArg {
    /// Owner secret as a literal string
    #[arg(long)]
    secret: Option<String>,

    /// Read the owner secret from a file (raw bytes)
    #[arg(long, value_name = "PATH")]
    secret_file: Option<PathBuf>,
}

#[derive(Args)]
pub struct MarkArgs {
    /// Bits replaced per selected coefficient (1-4)
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u32).range(1..=4))]
    level: u32,

    /// Weights per wavelet transform; a multiple of 32, at most 12000
    #[arg(long, default_value_t = 8192)]
    chunk: usize,
}

#[derive(Args)]
pub struct SourceArgs {
    /// Container to read weights from
    #[arg(long)]
    model: Option<PathBuf>,

    /// Layer to analyse (default: the first hidden layer)
    #[arg(long, requires = "model")]
    layer: Option<String>,

    /// Without --model, analyse this many Gaussian weights
    #[arg(long, default_value_t = 65_536, conflicts_with = "model")]
    gaussian: usize,

    /// Standard deviation of the Gaussian weights
    #[arg(long, default_value_t = 0.05, conflicts_with = "model")]
    sigma: f64,

    /// RNG seed for generated weights and payloads
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
pub enum Command {
    /// Write a fresh random 32-byte key
    Keygen {
        /// Key file to create
        #[arg(long)]
        out: PathBuf,
        /// Replace an existing key file
        #[arg(long)]
        force: bool,
    },
    /// Embed the watermark into every hidden layer
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        key: KeyArg,
        #[command(flatten)]
        secret: SecretArg,
        /// Marked container to write
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        mark: MarkArgs,
    },
    /// Check every marked layer; exits 1 when anything was tampered with
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        key: KeyArg,
        #[command(flatten)]
        secret: SecretArg,
    },
    /// Print the container manifest and embed records
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
    /// Measure weight distortion across watermark levels and chunk lengths
    Sweep {
        #[command(flatten)]
        source: SourceArgs,
        /// Watermark levels to try
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        levels: Vec<u32>,
        /// Chunk lengths to try; rounded up to multiples of 32
        #[arg(long, value_delimiter = ',', default_value = "4000,6000,8192,10000,12000")]
        chunks: Vec<usize>,
        /// Weights below this magnitude are left out of the relative maximum
        #[arg(long, default_value_t = 0.14)]
        rel_floor: f64,
    },
    /// Apply a declarative attack, or measure its detection rate
    Attack {
        #[arg(long)]
        model: PathBuf,
        /// Attack spec (TOML)
        #[arg(long)]
        spec: PathBuf,
        /// Where to write the attacked container
        #[arg(long, required_unless_present = "trials")]
        out: Option<PathBuf>,
        /// Run this many attack-and-verify rounds instead of writing a file
        #[arg(long, requires = "key")]
        trials: Option<usize>,
        #[arg(long, env = "WAVEMARK_KEY")]
        key: Option<PathBuf>,
        #[command(flatten)]
        secret: SecretArg,
    },
    /// Rebuild weights from the approximation sub-bands alone
    WipeDemo {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, default_value_t = 8192)]
        chunk: usize,
    },
    /// Write a random synthetic model
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        min_layers: usize,
        #[arg(long, default_value_t = 10)]
        max_layers: usize,
        #[arg(long, default_value_t = 8192)]
        min_weights: usize,
        #[arg(long, default_value_t = 200_000)]
        max_weights: usize,
        /// Scalar type of the hidden layers
        #[arg(long, value_enum, default_value_t = SynthDType::Mixed)]
        dtype: SynthDType,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthDType {
    F32,
    F64,
    Mixed,
}

/// A failure with a chosen exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub message: String,
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    Exit { code: EXIT_USAGE, message: message.into() }.into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use wavemark_core::Error as E;
    for cause in err.chain() {
        if let Some(exit) = cause.downcast_ref::<Exit>() {
            return exit.code;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Io(_) | E::Format { .. } | E::UnsupportedVersion(_) | E::KeyFile(_) | E::BadSeedLength(_) => EXIT_IO,
                E::InsufficientCapacity { .. } | E::SecretTooLarge(_) | E::NoEligibleLayers | E::CoefficientOutOfRange { .. } => {
                    EXIT_CAPACITY
                }
                E::MissingEmbedRecords => EXIT_TAMPER,
                _ => EXIT_USAGE,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_USAGE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.into()).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match commands::run(cli.command, cli.report) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let chain: Vec<String> = err.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::from(exit_code(&err))
        }
    }
}
