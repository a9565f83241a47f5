mod commands;
mod output;
mod pipeline;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};

use settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "suma", version, about = "Untrained attention encoder experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Comma-separated run seeds
    #[arg(long, global = true, value_delimiter = ',', default_value = "0")]
    seed: Vec<u64>,

    /// Flat `key = value` config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output root; each subcommand writes into its own directory below it
    #[arg(long, global = true, env = "SUMA_OUT_DIR", default_value = "runs")]
    out: PathBuf,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Config override, repeatable: `--set encoder.d_model=256`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a byte-level BPE vocabulary on a corpus
    TokenizeTrain {
        /// Corpus file (documents separated by blank lines); default is the toy corpus
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        vocab_size: Option<usize>,
    },
    /// Rank units by sentence vs non-word selectivity and write top-k masks
    Localize {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Score encoder features against stimulus-response datasets
    Align {
        /// Dataset manifest; repeatable. Default is the synthetic suite.
        #[arg(long)]
        dataset: Vec<PathBuf>,
        /// linear, cka or rdm
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Sentence/word-list/jabberwocky/non-word profiles and pattern analysis
    Analyze {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Alignment as a function of head count, depth or localized k
    #[command(group(ArgGroup::new("axis").required(true).args(["heads", "depth", "k"])))]
    Sweep {
        #[arg(long, value_delimiter = ',')]
        heads: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        depth: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long)]
        dataset: Vec<PathBuf>,
    },
    /// Train a decoder on frozen encoder features
    TrainDecoder {
        /// embeddings, final-layer or localized-units
        #[arg(long)]
        input: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Correlate decoder surprisal with reading times
    Behave {
        /// CSV with story_id,word_index,word,mean_rt_ms; default is a planted dataset
        #[arg(long)]
        reading_times: Option<PathBuf>,
        /// Checkpoint header written by train-decoder (params.json)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        input: Option<String>,
    },
    /// Generate seeded synthetic stimulus-response datasets
    Synth {
        #[arg(long)]
        n_stimuli: Option<usize>,
        /// Channels per subject
        #[arg(long)]
        n_channels: Option<usize>,
        #[arg(long)]
        n_subjects: Option<usize>,
        /// reference, length or noise
        #[arg(long)]
        signal: Option<String>,
        #[arg(long)]
        snr: Option<f64>,
        /// Write responses as little-endian f64 instead of CSV
        #[arg(long)]
        binary: bool,
    },
    /// Forward-pass FLOP estimates for the configured encoder
    Flops {
        #[arg(long, value_delimiter = ',')]
        seq_len: Vec<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TokenizeTrain { .. } => "tokenize-train",
            Command::Localize { .. } => "localize",
            Command::Align { .. } => "align",
            Command::Analyze { .. } => "analyze",
            Command::Sweep { .. } => "sweep",
            Command::TrainDecoder { .. } => "train-decoder",
            Command::Behave { .. } => "behave",
            Command::Synth { .. } => "synth",
            Command::Flops { .. } => "flops",
        }
    }

    /// Subcommand flags as config overrides, applied after the file and `--set`.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k, v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        match self {
            Command::TokenizeTrain { corpus, vocab_size } => {
                put("corpus.path", path(corpus));
                put("tokenizer.vocab_size", vocab_size.map(|v| v.to_string()));
            }
            Command::Localize { k } | Command::Analyze { k } => put("localizer.k", k.map(|v| v.to_string())),
            Command::Align { metric, k, .. } => {
                put("align.metric", metric.clone());
                put("localizer.k", k.map(|v| v.to_string()));
            }
            Command::Sweep { .. } => {}
            Command::TrainDecoder { input, steps } => {
                put("decoder.input", input.clone());
                put("decoder.steps", steps.map(|v| v.to_string()));
            }
            Command::Behave {
                reading_times,
                checkpoint,
                input,
            } => {
                put("behave.reading_times", path(reading_times));
                put("behave.checkpoint", path(checkpoint));
                put("decoder.input", input.clone());
            }
            Command::Synth {
                n_stimuli,
                n_channels,
                n_subjects,
                signal,
                snr,
                binary,
            } => {
                put("synth.n_stimuli", n_stimuli.map(|v| v.to_string()));
                put("synth.n_channels", n_channels.map(|v| v.to_string()));
                put("synth.n_subjects", n_subjects.map(|v| v.to_string()));
                put("synth.signal", signal.clone());
                put("synth.snr", snr.map(|v| v.to_string()));
                put("synth.binary", binary.then(|| "true".to_string()));
            }
            Command::Flops { seq_len } => {
                if !seq_len.is_empty() {
                    put("flops.seq_lens", Some(join(seq_len)));
                }
            }
        }
        o
    }
}

pub fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let settings = Settings::resolve(cli.common.config.as_deref(), &cli.common.overrides, &cli.command.overrides())?;
    let ctx = commands::Context::new(cli.command.name(), settings, cli.common.seed.clone(), &cli.common.out)?;
    match &cli.command {
        Command::TokenizeTrain { .. } => commands::tokenize_train(ctx),
        Command::Localize { .. } => commands::localize(ctx),
        Command::Align { dataset, .. } => commands::align(ctx, dataset),
        Command::Analyze { .. } => commands::analyze(ctx),
        Command::Sweep {
            heads,
            depth,
            k,
            dataset,
        } => {
            let axis = if !heads.is_empty() {
                commands::SweepAxis::Heads(heads.clone())
            } else if !depth.is_empty() {
                commands::SweepAxis::Depth(depth.clone())
            } else {
                commands::SweepAxis::K(k.clone())
            };
            commands::sweep(ctx, axis, dataset)
        }
        Command::TrainDecoder { .. } => commands::train_decoder(ctx),
        Command::Behave { .. } => commands::behave(ctx),
        Command::Synth { .. } => commands::synth(ctx),
        Command::Flops { .. } => commands::flops(ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
