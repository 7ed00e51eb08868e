use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ntpzip_core::codec::{self, CodecConfig, CodecError, CodecMode};
use ntpzip_core::membership::{self, ProbeConfigs};
use ntpzip_core::metrics::{self, CompressionReport};
use ntpzip_core::predictor::{
    Bridge, MarkovModel, Predictor, PredictorConfig, QuantBits, SWEEP_QUANTS, SWEEP_WINDOWS,
};
use ntpzip_core::tokenizer::{self, Tokenizer, Vocabulary};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_FINGERPRINT: u8 = 4;
const EXIT_MALFORMED: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "ntpzip", version, about = "Lossless text compression by next-token prediction")]
struct Cli {
    /// DEFLATE level for the body post-pass
    #[arg(long, global = true, env = "NTPZIP_DEFLATE_LEVEL", default_value_t = 6,
          value_parser = clap::value_parser!(u32).range(0..=9))]
    deflate_level: u32,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a vocabulary file from a corpus
    TrainVocab {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = VocabKindArg::Word)]
        kind: VocabKindArg,
        /// Target entry count for word vocabularies (at least 257)
        #[arg(long, default_value_t = 4096)]
        size: usize,
    },
    /// Train a Markov predictor on a corpus
    TrainModel {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..))]
        order: u8,
    },
    /// Compress a file into a container
    Compress {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(short, long, default_value_t = 2048, value_parser = clap::value_parser!(u32).range(1..))]
        window: u32,
        /// Probability precision in bits: 4, 8 or 16
        #[arg(short, long, default_value = "16")]
        quant_bits: QuantBits,
        #[arg(long, value_enum, default_value_t = ModeArg::Counter)]
        mode: ModeArg,
        #[arg(long, default_value_t = codec::DEFAULT_LITERAL_PREFIX)]
        prefix_len: u16,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Restore the original bytes from a container
    Decompress {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Compress files over a grid of windows and quantization levels
    Bench {
        #[arg(short, long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[command(flatten)]
        engine: EngineArgs,
        /// Full grid: windows 16..2048 by powers of two, 4/8/16 bits
        #[arg(long)]
        sweep: bool,
        #[arg(short, long, value_delimiter = ',', default_value = "2048",
              value_parser = clap::value_parser!(u32).range(1..))]
        windows: Vec<u32>,
        #[arg(short, long, value_delimiter = ',', default_value = "16")]
        quant_bits: Vec<QuantBits>,
        #[arg(long, value_enum, default_value_t = ModeArg::Counter)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Cut evenly spaced token batches from a large corpus
    SampleBatches {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 10)]
        batches: usize,
        #[arg(long, default_value_t = 100_000)]
        tokens: usize,
        /// Write each batch, detokenized, as batch_NN.txt here
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Membership probe: worst/best configuration size ratio
    Probe {
        #[arg(short, long)]
        input: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
        /// Use windows 16 and 2048 even for bounded-context models
        #[arg(long)]
        extremes: bool,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args, Debug)]
struct EngineArgs {
    /// Markov model file
    #[arg(long, required_unless_present = "external_predictor")]
    model: Option<PathBuf>,
    /// Vocabulary file
    #[arg(long, required_unless_present = "external_predictor")]
    vocab: Option<PathBuf>,
    /// Command line of an external predictor process; replaces --model and --vocab
    #[arg(long, conflicts_with_all = ["model", "vocab"])]
    external_predictor: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VocabKindArg {
    Byte,
    Word,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Counter,
    Rank,
}

impl From<ModeArg> for CodecMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Counter => CodecMode::Counter,
            ModeArg::Rank => CodecMode::Rank,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

/// Invalid arguments that clap cannot catch.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

enum Engine {
    Local { vocab: Vocabulary, model: MarkovModel },
    External(Bridge),
}

impl Engine {
    fn load(args: &EngineArgs) -> Result<Self> {
        if let Some(cmd) = &args.external_predictor {
            let bridge = Bridge::spawn(cmd).with_context(|| format!("starting {cmd:?}"))?;
            return Ok(Engine::External(bridge));
        }
        let (Some(model), Some(vocab)) = (&args.model, &args.vocab) else {
            bail!(UsageError("--model and --vocab are required".into()));
        };
        let vocab = load_vocab(vocab)?;
        let model = MarkovModel::from_bytes(&read(model)?)
            .with_context(|| format!("loading model {}", model.display()))?;
        Ok(Engine::Local { vocab, model })
    }

    fn tokenizer(&self) -> &dyn Tokenizer {
        match self {
            Engine::Local { vocab, .. } => vocab,
            Engine::External(b) => b,
        }
    }

    fn predictor(&self) -> &dyn Predictor {
        match self {
            Engine::Local { model, .. } => model,
            Engine::External(b) => b,
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    Vocabulary::from_bytes(&read(path)?).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn document_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn print_reports(reports: &[CompressionReport], format: Format) {
    match format {
        Format::Json => println!("{}", metrics::reports_to_json(reports)),
        Format::Csv | Format::Text => print!("{}", metrics::reports_to_csv(reports)),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainVocab {
            input,
            output,
            kind,
            size,
        } => {
            let vocab = match kind {
                VocabKindArg::Byte => Vocabulary::bytes(),
                VocabKindArg::Word => {
                    if size <= tokenizer::BYTE_PLANE {
                        bail!(UsageError(format!("--size must be at least 257, got {size}")));
                    }
                    tokenizer::train_word_vocab(&read(&input)?, size)?
                }
            };
            write(&output, &vocab.to_bytes())?;
            eprintln!("{} entries written to {}", vocab.len(), output.display());
        }
        Command::TrainModel {
            input,
            output,
            vocab,
            order,
        } => {
            let vocab = load_vocab(&vocab)?;
            let tokens = vocab.encode(&read(&input)?);
            let model = MarkovModel::train(&tokens, order as usize, vocab.len())?;
            write(&output, &model.to_bytes())?;
            eprintln!(
                "order-{order} model over {} tokens written to {}",
                tokens.len(),
                output.display()
            );
        }
        Command::Compress {
            input,
            output,
            engine,
            window,
            quant_bits,
            mode,
            prefix_len,
            format,
        } => {
            let engine = Engine::load(&engine)?;
            let text = read(&input)?;
            let config = CodecConfig::new(PredictorConfig::new(window, quant_bits)?)
                .with_mode(mode.into())
                .with_literal_prefix(prefix_len)
                .with_deflate_level(cli.deflate_level);
            let tokens = engine.tokenizer().tokenize(&text).map_err(CodecError::from)?;
            let started = std::time::Instant::now();
            let packed =
                codec::compress_tokens(&tokens, engine.tokenizer(), engine.predictor(), &config)?;
            let elapsed = started.elapsed().as_secs_f64();
            write(&output, &packed)?;
            let report = CompressionReport {
                document: document_name(&input),
                config: Some(config.predictor),
                mode: config.mode.as_str().to_owned(),
                original_bytes: text.len() as u64,
                compressed_bytes: packed.len() as u64,
                characters: metrics::character_count(&text),
                ratio: metrics::ratio(text.len() as u64, packed.len() as u64)?,
                bpc: match metrics::character_count(&text) {
                    0 => 0.0,
                    n => metrics::bpc(packed.len() as u64, n)?,
                },
                tokens_per_second: if elapsed > 0.0 { tokens.len() as f64 / elapsed } else { 0.0 },
            };
            print_reports(&[report], format);
        }
        Command::Decompress {
            input,
            output,
            engine,
        } => {
            let engine = Engine::load(&engine)?;
            let text = codec::decompress(&read(&input)?, engine.tokenizer(), engine.predictor())?;
            write(&output, &text)?;
        }
        Command::Bench {
            input,
            engine,
            sweep,
            windows,
            quant_bits,
            mode,
            format,
        } => {
            let engine = Engine::load(&engine)?;
            let (windows, quants) = if sweep {
                (SWEEP_WINDOWS.to_vec(), SWEEP_QUANTS.to_vec())
            } else {
                (windows, quant_bits)
            };
            let base = CodecConfig::new(PredictorConfig::best())
                .with_mode(mode.into())
                .with_deflate_level(cli.deflate_level);
            let mut reports = Vec::new();
            for path in &input {
                let text = read(path)?;
                reports.extend(metrics::bench_sweep(
                    &document_name(path),
                    &text,
                    engine.tokenizer(),
                    engine.predictor(),
                    &windows,
                    &quants,
                    &base,
                )?);
            }
            print_reports(&reports, format);
        }
        Command::SampleBatches {
            input,
            vocab,
            batches,
            tokens,
            output_dir,
        } => {
            let vocab = load_vocab(&vocab)?;
            let corpus = read(&input)?;
            let sampled = metrics::sample_batches(&corpus, batches, tokens, &vocab)?;
            if let Some(dir) = &output_dir {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            println!("batch,start_line,tokens,bytes");
            for (i, batch) in sampled.iter().enumerate() {
                let text = vocab.decode(&batch.tokens)?;
                println!("{i},{},{},{}", batch.start_line, batch.tokens.len(), text.len());
                if let Some(dir) = &output_dir {
                    write(&dir.join(format!("batch_{i:02}.txt")), &text)?;
                }
            }
        }
        Command::Probe {
            input,
            engine,
            threshold,
            extremes,
            format,
        } => {
            if threshold.is_nan() || threshold <= 1.0 {
                bail!(UsageError(format!("--threshold must exceed 1, got {threshold}")));
            }
            let engine = Engine::load(&engine)?;
            let configs = if extremes {
                ProbeConfigs::extremes()
            } else {
                ProbeConfigs::for_predictor(engine.predictor())
            };
            let report = membership::membership_probe(
                &read(&input)?,
                engine.tokenizer(),
                engine.predictor(),
                &configs,
                threshold,
            )?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Text | Format::Csv => print!("{}", report.to_text()),
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<CodecError>() {
            return match e {
                CodecError::FingerprintMismatch(_) => EXIT_FINGERPRINT,
                CodecError::BadMagic
                | CodecError::BadVersion(_)
                | CodecError::MalformedContainer(_)
                | CodecError::MalformedBody(_)
                | CodecError::RankOutOfRange { .. } => EXIT_MALFORMED,
                _ => continue,
            };
        }
    }
    EXIT_FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
