use std::collections::BTreeSet;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use jointseg::charrepr::{GlyphSet, RadicalTable};
use jointseg::corpus::{format_corpus, parse_token, read_corpus, read_raw, write_corpus};
use jointseg::error::{Error, Result};
use jointseg::eval::{evaluate, mcnemar_midp, paired_counts};
use jointseg::synth::{synthetic_corpus, SynthSpec};
use jointseg::trainer::Resources;
use jointseg::{archive, tagger, train, Tagger, TrainConfig};

#[derive(Parser)]
#[command(name = "jointseg", version, about = "Joint Chinese word segmentation and POS tagging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write it as a single archive file.
    Train(TrainArgs),
    /// Tag raw text, one sentence per line. Several --model flags form an ensemble.
    Tag(TagArgs),
    /// Score a predicted corpus against a gold corpus.
    Eval(EvalArgs),
    /// Measure model loading time and tagging throughput.
    Bench(BenchArgs),
    /// Write a synthetic tagged corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// key=value hyperparameter file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Pre-trained character embeddings (text, one vector per line).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Radical range table replacing the builtin one.
    #[arg(long)]
    radicals: Option<PathBuf>,
    /// Glyph bitmaps; enables glyph features.
    #[arg(long)]
    glyphs: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the per-epoch log here.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 10)]
    bucket_width: usize,
}

#[derive(Args)]
struct TagArgs {
    #[command(flatten)]
    decode: DecodeArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Kv,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    /// Training corpus (or word list) defining in-vocabulary words.
    #[arg(long)]
    train_vocab: Option<PathBuf>,
    /// Require matching tags in the significance test.
    #[arg(long)]
    joint: bool,
    /// Second prediction file for a mid-p McNemar test against --pred.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    decode: DecodeArgs,
    /// Write the tagged output here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    sentences: usize,
    #[arg(long, default_value_t = 4)]
    tags: usize,
    #[arg(long, default_value_t = 8)]
    words_per_tag: usize,
    #[arg(long, default_value_t = 30)]
    sentence_chars: usize,
    /// Seed for the lexicon; corpora sharing it share their vocabulary.
    #[arg(long, default_value_t = 0)]
    lexicon_seed: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = TrainConfig::load(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if a.glyphs.is_some() {
        cfg.glyphs = true;
    }
    if a.embeddings.is_some() {
        cfg.pretrained = true;
    } else if cfg.pretrained {
        return Err(Error::Config("pretrained=true needs --embeddings".into()));
    }
    let train_set = read_corpus(&a.train)?;
    let dev_set = read_corpus(&a.dev)?;
    let resources = Resources {
        radicals: a.radicals.as_deref().map(RadicalTable::load).transpose()?,
        glyphs: a.glyphs.as_deref().map(GlyphSet::load).transpose()?,
        embeddings: match &a.embeddings {
            Some(p) => Some((read_text(p)?, p.clone())),
            None => None,
        },
    };
    let mut log_text = String::new();
    let outcome = train(&train_set, &dev_set, &cfg, resources, |e| {
        let line = e.line();
        eprintln!("{line}");
        log_text.push_str(&line);
        log_text.push('\n');
    })?;
    if let Some(c) = outcome.coverage {
        eprintln!("pretrained coverage {}/{}", c.covered, c.total);
    }
    let best = format!("best_epoch={}\n", outcome.best_epoch);
    eprint!("{best}");
    log_text.push_str(&best);
    if let Some(p) = &a.log {
        write_text(p, &log_text)?;
    }
    archive::save(&outcome.model, &a.out)
}

fn cmd_tag(a: TagArgs) -> Result<()> {
    let d = a.decode;
    let tagger = Tagger::load(&d.models)?;
    let raw = read_raw(&d.input)?;
    let out = tagger.tag(&raw, d.batch, d.bucket_width)?;
    write_corpus(&a.output, &out)
}

/// Word surfaces from a corpus file; tokens without a tag count as words.
fn read_vocab(path: &Path) -> Result<BTreeSet<String>> {
    Ok(read_text(path)?
        .split_whitespace()
        .map(|tok| parse_token(tok).map_or_else(|| tok.to_string(), |w| w.surface))
        .collect())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let gold = read_corpus(&a.gold)?;
    let pred = read_corpus(&a.pred)?;
    let vocab = a.train_vocab.as_deref().map(read_vocab).transpose()?;
    let report = evaluate(&gold, &pred, vocab.as_ref())?;
    let mut text = match a.format {
        Format::Text => report.to_text(),
        Format::Kv => report.to_kv(),
    };
    if let Some(other) = &a.compare {
        let pred_b = read_corpus(other)?;
        let c = paired_counts(&gold, &pred, &pred_b, a.joint)?;
        let p = mcnemar_midp(c.only_a, c.only_b)?;
        text.push_str(&match a.format {
            Format::Text => format!(
                "mcnemar        only_a {}  only_b {}  both {}  neither {}  mid-p {p:.6}\n",
                c.only_a, c.only_b, c.both, c.neither
            ),
            Format::Kv => format!(
                "mcnemar_only_a={}\nmcnemar_only_b={}\nmcnemar_both={}\nmcnemar_neither={}\nmcnemar_midp={p}\n",
                c.only_a, c.only_b, c.both, c.neither
            ),
        });
    }
    print!("{text}");
    std::io::stdout().flush().ok();
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let d = a.decode;
    let raw = read_raw(&d.input)?;
    let (out, report) = tagger::bench(&d.models, &raw, d.batch, d.bucket_width)?;
    if let Some(p) = &a.output {
        write_text(p, &format_corpus(&out))?;
    }
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    if a.tags < 2 || a.words_per_tag == 0 {
        return Err(Error::Config("synth needs at least 2 tags and 1 word per tag".into()));
    }
    let spec = SynthSpec {
        tags: a.tags,
        words_per_tag: a.words_per_tag,
        sentence_chars: a.sentence_chars,
        lexicon_seed: a.lexicon_seed,
        ..SynthSpec::default()
    };
    write_corpus(&a.out, &synthetic_corpus(&spec, a.sentences, a.seed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Tag(a) => cmd_tag(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Synth(a) => cmd_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
