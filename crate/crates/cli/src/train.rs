use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use pointgame_core::corpus::{class_count, encode_documents};
use pointgame_core::eval::{parse_agreement_tsv, AgreementSample};
use pointgame_core::models::{train_with, LabeledSequence, TrainConfig};
use pointgame_core::{
    Arch, Checkpoint, Direction, ModelConfig, NetworkParams, SeededRng, TokenSequence, Vocabulary,
};
use serde::Serialize;

use crate::failure::Failure;
use crate::files::{read_documents, read_text, write_atomic};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Uni,
    Bi,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// JSON-lines corpus, or an agreement TSV with `--agreement`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Read `--corpus` as agreement rows and predict verb number.
    #[arg(long)]
    pub agreement: bool,
    /// Core layer: gru, qgru, lstm, qlstm or cnn.
    #[arg(long)]
    pub arch: Arch,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines training log [default: <out>.log.jsonl].
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    /// Minibatch size [default: 8; 16 with --agreement].
    #[arg(long)]
    pub batch: Option<usize>,
    /// Embedding size [default: 300; 50 with --agreement].
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// Total hidden size, split across directions [default: 150; 50 with --agreement].
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Convolution width for QRNN gates and CNN filters.
    #[arg(long, default_value_t = 5)]
    pub kernel_width: usize,
    /// Recurrent direction [default: bi; uni with --agreement and for cnn].
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Frequency-rank cutoff of the vocabulary [default: 50000; 10000 with --agreement].
    #[arg(long)]
    pub vocab_cutoff: Option<usize>,
}

#[derive(Serialize)]
struct LogLine {
    epoch: usize,
    loss: f64,
    accuracy: f64,
}

/// Agreement prefixes as sequences: rare tokens fall back to their POS tag.
pub fn encode_agreement(vocab: &Vocabulary, sample: &AgreementSample) -> TokenSequence {
    TokenSequence::new(
        sample
            .tokens
            .iter()
            .zip(&sample.pos)
            .map(|(t, p)| vocab.id_with_pos(t, p))
            .collect(),
    )
}

fn load_training_set(
    args: &TrainArgs,
) -> Result<(Vocabulary, Vec<LabeledSequence>, usize), Failure> {
    if args.agreement {
        let samples = parse_agreement_tsv(&read_text(&args.corpus)?)?;
        let cutoff = args.vocab_cutoff.unwrap_or(10_000);
        let vocab = Vocabulary::build_with_pos(
            samples.iter().flat_map(|s| {
                s.tokens
                    .iter()
                    .map(String::as_str)
                    .zip(s.pos.iter().map(String::as_str))
            }),
            cutoff,
        );
        let set = samples
            .iter()
            .map(|s| LabeledSequence {
                tokens: encode_agreement(&vocab, s),
                label: s.number.class(),
            })
            .collect();
        Ok((vocab, set, 2))
    } else {
        let docs = read_documents(&args.corpus)?;
        let cutoff = args.vocab_cutoff.unwrap_or(50_000);
        let vocab = Vocabulary::build(
            docs.iter()
                .flat_map(|d| d.sentences.iter().flatten().map(String::as_str)),
            cutoff,
        );
        let set = encode_documents(&vocab, &docs);
        Ok((vocab, set, class_count(&docs).max(2)))
    }
}

fn model_config(
    args: &TrainArgs,
    vocab_size: usize,
    classes: usize,
) -> Result<ModelConfig, Failure> {
    let mut cfg = ModelConfig::new(args.arch, vocab_size, classes);
    let default_dir = if args.agreement || args.arch == Arch::Cnn {
        DirectionArg::Uni
    } else {
        DirectionArg::Bi
    };
    cfg.direction = match args.direction.unwrap_or(default_dir) {
        DirectionArg::Uni => Direction::Uni,
        DirectionArg::Bi => Direction::Bi,
    };
    cfg.embed_dim = args
        .embed_dim
        .unwrap_or(if args.agreement { 50 } else { 300 });
    cfg.hidden_dim = args
        .hidden_dim
        .unwrap_or(if args.agreement { 50 } else { 150 });
    cfg.kernel_width = args.kernel_width;
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(args: &TrainArgs) -> Result<(), Failure> {
    let batch_size = args.batch.unwrap_or(if args.agreement { 16 } else { 8 });
    if batch_size == 0 {
        return Err(Failure::usage("--batch must be at least 1"));
    }
    if args.lr.is_nan() || args.lr <= 0.0 {
        return Err(Failure::usage("--lr must be positive"));
    }
    let (vocab, set, classes) = load_training_set(args)?;
    let config = model_config(args, vocab.len(), classes)?;
    let init = NetworkParams::init(&config, &mut SeededRng::new(args.seed))?;
    let tc = TrainConfig {
        lr: args.lr,
        epochs: args.epochs,
        batch_size,
        seed: args.seed,
        ..TrainConfig::default()
    };
    eprintln!(
        "training {} on {} sequences, vocabulary {}, {} classes",
        args.arch,
        set.len(),
        vocab.len(),
        classes
    );
    let mut log = String::new();
    let (params, _) = train_with(&init, &set, &tc, |s| {
        eprintln!(
            "epoch {}/{}  loss {:.6}  accuracy {:.4}",
            s.epoch, args.epochs, s.loss, s.accuracy
        );
        let line = LogLine {
            epoch: s.epoch,
            loss: s.loss,
            accuracy: s.accuracy,
        };
        log.push_str(&serde_json::to_string(&line).expect("plain numbers serialize"));
        log.push('\n');
    })?;
    let checkpoint = Checkpoint::new(params, vocab)?;
    let mut bytes = Vec::new();
    checkpoint.write_to(&mut bytes)?;
    write_atomic(&args.out, &bytes)?;
    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| default_log_path(&args.out));
    write_atomic(&log_path, log.as_bytes())?;
    Ok(())
}

fn default_log_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".log.jsonl");
    out.with_file_name(name)
}
