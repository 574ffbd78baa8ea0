use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gcwf_cli::{
    cmd_check, cmd_corpus, cmd_export, resolve_state_cap, ExportStage, OutputFormat, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "gcwf",
    version,
    about = "Check well-formedness of global choreographies",
    long_about = "Checks global choreographies two independent ways (pomset semantics and \
                  products of local automata), exports DOT artifacts, and cross-validates both \
                  analyses on random terms. Set GCWF_STATE_CAP to change the default executor \
                  state cap."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    /// Syntax tree of the input term
    Gchor,
    /// One file per pomset of the semantics
    Pomsets,
    /// One file per participant's local automaton
    Projections,
    /// Product of the stripped local automata
    Product,
}

impl From<StageArg> for ExportStage {
    fn from(s: StageArg) -> ExportStage {
        match s {
            StageArg::Gchor => ExportStage::Gchor,
            StageArg::Pomsets => ExportStage::Pomsets,
            StageArg::Projections => ExportStage::Projections,
            StageArg::Product => ExportStage::Product,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Check a choreography file and print the verdict
    Check {
        /// Choreography file in the term syntax
        file: PathBuf,
        /// Emit the verdict as JSON instead of text
        #[arg(long)]
        json: bool,
        /// Distinct system states the buffered executor may visit
        #[arg(long)]
        state_cap: Option<usize>,
    },
    /// Write DOT artifacts for one pipeline stage
    Export {
        /// Choreography file in the term syntax
        file: PathBuf,
        /// Stage to export
        #[arg(long, value_enum)]
        stage: StageArg,
        /// Directory the DOT files go into (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate random terms and cross-validate all analyses
    Corpus {
        /// Seed fully determining the generated corpus
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of terms to generate
        #[arg(long, default_value_t = 200)]
        count: usize,
        /// Nesting depth bound of generated terms
        #[arg(long, default_value_t = 4)]
        max_depth: usize,
        /// Participant pool size bound
        #[arg(long, default_value_t = 4)]
        max_participants: usize,
        /// Message pool size bound
        #[arg(long, default_value_t = 3)]
        max_messages: usize,
        /// Distinct system states the buffered executor may visit
        #[arg(long)]
        state_cap: Option<usize>,
    },
}

fn run() -> anyhow::Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Cmd::Check { file, json, state_cap } => {
            let config = RunConfig {
                inputs: vec![file],
                format: if json { OutputFormat::Json } else { OutputFormat::Text },
                state_cap: resolve_state_cap(state_cap),
                ..RunConfig::default()
            };
            let (code, report) = cmd_check(&config)?;
            print!("{report}");
            Ok(code)
        }
        Cmd::Export { file, stage, out } => {
            let config = RunConfig {
                inputs: vec![file],
                stages: vec![stage.into()],
                out_dir: out,
                ..RunConfig::default()
            };
            for path in cmd_export(&config)? {
                println!("{}", path.display());
            }
            Ok(0)
        }
        Cmd::Corpus { seed, count, max_depth, max_participants, max_messages, state_cap } => {
            let config = RunConfig {
                seed,
                count,
                max_depth,
                max_participants,
                max_messages,
                state_cap: resolve_state_cap(state_cap),
                ..RunConfig::default()
            };
            let (code, report) = cmd_corpus(&config);
            print!("{report}");
            Ok(code)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
