//! Benchmark CLI: translate a file under a chosen precision regime and
//! report cost-effectiveness, run the n-best distillation selection, or
//! generate a randomly initialized model for experiments.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgAction, Args, Parser, Subcommand};

use quantbeam::bench::{self, BenchRun};
use quantbeam::decode::{LexTable, Vocab};
use quantbeam::error::{Error, Result};
use quantbeam::model::{DecoderVariant, ModelConfig, ModelParams};
use quantbeam::pipeline::{PipelineOptions, Translator};
use quantbeam::runtime::Precision;

#[derive(Parser)]
#[command(name = "quantbeam", version, about = "CPU-oriented NMT inference benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Translate an input file, timing decoding and optionally appending a
    /// cost-effectiveness report row.
    Translate(TranslateArgs),
    /// Select, per sentence, the n-best hypothesis with the highest
    /// sentence BLEU against a reference file.
    Distill(DistillArgs),
    /// Write a randomly initialized model (parameters, config, vocabulary).
    GenModel(GenModelArgs),
}

#[derive(Args)]
struct TranslateArgs {
    /// Model parameter file.
    #[arg(long)]
    model: PathBuf,
    /// Model config file (key=value lines).
    #[arg(long)]
    config: PathBuf,
    /// Vocabulary file, one token per line.
    #[arg(long)]
    vocab: PathBuf,
    /// Tokenized input, one sentence per line.
    #[arg(long)]
    input: PathBuf,
    /// Where to write translations, one per line, input order.
    #[arg(long)]
    output: PathBuf,
    /// Beam size; 1 decodes greedily and skips softmax.
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// Word budget per batch.
    #[arg(long = "batch-words", default_value_t = 384)]
    batch_words: usize,
    /// Matrix-product regime: float32, int16, int8 or autotune.
    #[arg(long, default_value = "float32")]
    precision: String,
    /// Lexical table for shortlisting (source<TAB>target<TAB>prob lines).
    #[arg(long)]
    shortlist: Option<PathBuf>,
    /// Target frequency file for shortlisting (token<TAB>count lines).
    #[arg(long)]
    freq: Option<PathBuf>,
    /// Disable constant-node memoization (testing).
    #[arg(long = "no-memoize", action = ArgAction::SetTrue)]
    no_memoize: bool,
    /// Bypass the auto-tuner and always run this alternative (f32 or i16).
    #[arg(long = "force-alt")]
    force_alt: Option<String>,
    /// Instance price used for the cost-effectiveness column.
    #[arg(long = "price-per-hour", default_value_t = 0.102)]
    price_per_hour: f64,
    /// CSV report to create or extend with this run.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Reserved for reproducibility bookkeeping; decoding is deterministic.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Row name in the report; derived from the config when omitted.
    #[arg(long)]
    system: Option<String>,
    /// Externally measured quality score for the report row.
    #[arg(long)]
    quality: Option<f64>,
    /// Write the auto-tuner ledger here after the run.
    #[arg(long = "dump-tuner")]
    dump_tuner: Option<PathBuf>,
}

#[derive(Args)]
struct DistillArgs {
    /// N-best file: `sentence_index ||| hypothesis` lines.
    #[arg(long)]
    nbest: PathBuf,
    /// Reference file, one line per sentence.
    #[arg(long)]
    reference: PathBuf,
    /// Where to write the selected hypotheses.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct GenModelArgs {
    /// Directory for model.bin, config.txt and vocab.txt.
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Named configuration: big, base, small, tiny-256 or tiny-192.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long = "emb-dim", default_value_t = 8)]
    emb_dim: usize,
    #[arg(long = "ffn-dim", default_value_t = 16)]
    ffn_dim: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long = "vocab-size", default_value_t = 32)]
    vocab_size: usize,
    /// self-attention or aan.
    #[arg(long = "decoder-variant", default_value = "self-attention")]
    decoder_variant: String,
    #[arg(long = "aan-ffn", default_value_t = true, action = ArgAction::Set)]
    aan_ffn: bool,
    #[arg(long = "aan-gate", default_value_t = true, action = ArgAction::Set)]
    aan_gate: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Translate(args) => translate(args),
        Command::Distill(args) => distill(args),
        Command::GenModel(args) => gen_model(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn translate(args: TranslateArgs) -> Result<()> {
    let precision = Precision::parse(&args.precision)?;
    let config = ModelConfig::load(&args.config)?;
    let params = ModelParams::load(&args.model)?;
    let vocab = Vocab::load(&args.vocab)?;

    let input_text = fs::read_to_string(&args.input)?;
    let lines: Vec<String> = input_text.lines().map(|l| l.to_string()).collect();
    let tokens: u64 = lines.iter().map(|l| l.split_whitespace().count() as u64).sum();
    if tokens == 0 {
        return Err(Error::Parameter(format!(
            "input {} holds no tokens; nothing to translate",
            args.input.display()
        )));
    }

    let lex = match (&args.shortlist, &args.freq) {
        (Some(lex_path), Some(freq_path)) => Some(LexTable::load(lex_path, freq_path, &vocab)?),
        (None, None) => None,
        _ => {
            return Err(Error::Parameter(
                "--shortlist and --freq must be given together".into(),
            ))
        }
    };
    let shortlisted = lex.is_some();

    let options = PipelineOptions {
        precision,
        beam: args.beam,
        batch_words: args.batch_words,
        memoize: !args.no_memoize,
        force_alt: args.force_alt.clone(),
        length_norm: None,
    };
    let size_mib = config.size_mib();
    let system = args.system.clone().unwrap_or_else(|| {
        format!(
            "emb{}-{}-{}-b{}{}",
            config.emb_dim,
            config.decoder_variant,
            precision.name(),
            args.beam,
            if shortlisted { "-sl" } else { "" }
        )
    });

    let mut translator = Translator::new(config, params, vocab, lex, options)?;

    let start = Instant::now();
    let outputs = translator.translate_corpus(&lines)?;
    let seconds = start.elapsed().as_secs_f64();

    let mut out_text = outputs.join("\n");
    out_text.push('\n');
    fs::write(&args.output, out_text)?;

    println!(
        "translated {} sentences ({} tokens) in {:.3} s [{} beam={}]",
        lines.len(),
        tokens,
        seconds,
        precision.name(),
        args.beam
    );
    println!("counters: {}", translator.counter_line());

    if let Some(path) = &args.dump_tuner {
        match translator.tuner_dump() {
            Some(dump) => fs::write(path, dump)?,
            None => {
                return Err(Error::Parameter(
                    "--dump-tuner only applies to the autotune precision regime".into(),
                ))
            }
        }
    }

    if let Some(report_path) = &args.report {
        let run = BenchRun {
            system,
            size_mib,
            seconds,
            tokens,
            beam: args.beam,
            regime: precision.name().to_string(),
            quality: args.quality,
        };
        // Accumulate through the full-precision ledger next to the CSV;
        // the CSV itself rounds its columns for presentation.
        let ledger_path = report_path.with_extension("runs.tsv");
        let mut runs = match fs::read_to_string(&ledger_path) {
            Ok(existing) => bench::runs_from_tsv(&existing)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        runs.push(run);
        fs::write(&ledger_path, bench::runs_to_tsv(&runs))?;
        fs::write(report_path, bench::emit_report(&runs, args.price_per_hour)?)?;
        let per_usd = bench::cost_effectiveness(tokens, seconds, args.price_per_hour)? / 1e6;
        println!(
            "cost-effectiveness: {per_usd:.2} million tokens per USD at {} USD/h",
            args.price_per_hour
        );
    }
    let _ = args.seed;
    Ok(())
}

fn distill(args: DistillArgs) -> Result<()> {
    let nbest = fs::read_to_string(&args.nbest)?;
    let references = fs::read_to_string(&args.reference)?;
    let selected = bench::run_distill(&nbest, &references)?;
    let mut text = selected.join("\n");
    text.push('\n');
    fs::write(&args.output, text)?;
    println!("selected {} hypotheses", selected.len());
    Ok(())
}

fn gen_model(args: GenModelArgs) -> Result<()> {
    let mut config = match &args.preset {
        Some(name) => ModelConfig::preset(name, args.vocab_size)?,
        None => {
            let mut c = ModelConfig::new(args.emb_dim, args.ffn_dim, args.heads, args.vocab_size)?;
            c.enc_layers = args.layers;
            c.dec_layers = args.layers;
            c
        }
    };
    config.decoder_variant = DecoderVariant::parse(&args.decoder_variant)?;
    config.aan_ffn_enabled = args.aan_ffn;
    config.aan_gate_enabled = args.aan_gate;
    config.validate()?;

    fs::create_dir_all(&args.out_dir)?;
    let params = ModelParams::random(&config, args.seed);
    params.save(&args.out_dir.join("model.bin"))?;
    config.save(&args.out_dir.join("config.txt"))?;
    Vocab::synthetic(config.vocab_size)?.save(&args.out_dir.join("vocab.txt"))?;
    println!(
        "wrote {} ({} parameters, {:.1} MiB) to {}",
        args.preset.as_deref().unwrap_or("custom model"),
        config.param_count(),
        config.size_mib(),
        args.out_dir.display()
    );
    Ok(())
}
