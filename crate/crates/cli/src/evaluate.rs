use std::path::PathBuf;

use clap::Args;
use pointgame_core::corpus::Document;
use pointgame_core::eval::{
    baseline_last, baseline_random, build_hybrid_docs, hit_hybrid, parse_agreement_tsv,
    AgreementTally, EvalReport, HybridTally, LabeledSentence, Number,
};
use pointgame_core::models::forward;
use pointgame_core::{explain, Method, MethodOptions, NetworkParams, SeededRng, TokenSequence};
use rayon::prelude::*;

use crate::explain::in_pool;
use crate::failure::Failure;
use crate::files::{load_checkpoint, read_documents, read_text, write_output};
use crate::train::encode_agreement;
use crate::ModelInput;

#[derive(Args, Debug)]
pub struct HybridArgs {
    #[command(flatten)]
    pub model: ModelInput,
    /// JSON-lines corpus whose sentences are recombined.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Sentences per hybrid document.
    #[arg(long, default_value_t = 10)]
    pub sentences_per_doc: usize,
    /// Report TSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AgreementArgs {
    #[command(flatten)]
    pub model: ModelInput,
    /// Agreement TSV: tokens, POS tags, 1-based subject index, Sg/Pl.
    #[arg(long)]
    pub data: PathBuf,
    /// Report TSV [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Predicted class and one map per method for one input.
fn explain_all(
    params: &NetworkParams,
    x: &TokenSequence,
    methods: &[Method],
    options: &MethodOptions,
) -> pointgame_core::Result<(usize, Vec<Vec<f64>>)> {
    let k = forward(params, x)?.predicted_class();
    let maps = methods
        .iter()
        .map(|m| explain(params, x, k, m, options).map(|r| r.scores))
        .collect::<pointgame_core::Result<_>>()?;
    Ok((k, maps))
}

pub fn run_hybrid(args: &HybridArgs) -> Result<(), Failure> {
    let methods = args.model.methods.methods()?;
    let options = args.model.methods.options()?;
    if args.sentences_per_doc == 0 {
        return Err(Failure::usage("--sentences-per-doc must be at least 1"));
    }
    let checkpoint = load_checkpoint(&args.model.model)?;
    let (params, vocab) = (&checkpoint.params, &checkpoint.vocab);
    let docs = read_documents(&args.corpus)?;
    let sentences: Vec<LabeledSentence> =
        docs.iter().flat_map(Document::labeled_sentences).collect();
    let mut rng = SeededRng::new(args.model.methods.seed);
    let hybrids = build_hybrid_docs(&sentences, &mut rng, args.sentences_per_doc)?;

    let results = in_pool(args.model.jobs, || {
        hybrids
            .par_iter()
            .map(|doc| explain_all(params, &vocab.encode(&doc.tokens), &methods, &options))
            .collect::<pointgame_core::Result<Vec<_>>>()
    })??;

    let mut tallies = vec![HybridTally::default(); methods.len()];
    let mut random = HybridTally::default();
    for (doc, (k, maps)) in hybrids.iter().zip(&results) {
        for (tally, map) in tallies.iter_mut().zip(maps) {
            tally.add(hit_hybrid(&doc.origin, *k, map)?);
        }
        let baseline = baseline_random(&mut rng, doc.len())?;
        random.add(hit_hybrid(&doc.origin, *k, &baseline.scores)?);
    }
    let arch = params.arch.to_string();
    let mut report = EvalReport {
        samples: hybrids.len(),
        ..EvalReport::default()
    };
    for (method, t) in methods.iter().zip(&tallies) {
        report.push(&method.to_string(), &arch, "hybrid", t.hits, t.evaluated);
    }
    report.push("random", &arch, "hybrid", random.hits, random.evaluated);
    eprintln!(
        "{} hybrid documents, {} skipped (prediction matches no sentence label)",
        hybrids.len(),
        random.skipped
    );
    write_output(args.out.as_deref(), &report.to_tsv())?;
    Ok(())
}

fn predicted_number(k: usize) -> Result<Number, Failure> {
    Number::from_class(k)
        .ok_or_else(|| Failure::usage("agreement evaluation needs a 2-class model"))
}

pub fn run_agreement(args: &AgreementArgs) -> Result<(), Failure> {
    let methods = args.model.methods.methods()?;
    let options = args.model.methods.options()?;
    let checkpoint = load_checkpoint(&args.model.model)?;
    let (params, vocab) = (&checkpoint.params, &checkpoint.vocab);
    if params.classes() != 2 {
        return Err(Failure::usage("agreement evaluation needs a 2-class model"));
    }
    let samples = parse_agreement_tsv(&read_text(&args.data)?)?;

    let results = in_pool(args.model.jobs, || {
        samples
            .par_iter()
            .map(|s| explain_all(params, &encode_agreement(vocab, s), &methods, &options))
            .collect::<pointgame_core::Result<Vec<_>>>()
    })??;

    let mut tallies = vec![AgreementTally::default(); methods.len()];
    let mut random = AgreementTally::default();
    let mut last = AgreementTally::default();
    let mut rng = SeededRng::new(args.model.methods.seed);
    for (sample, (k, maps)) in samples.iter().zip(&results) {
        let predicted = predicted_number(*k)?;
        for (tally, map) in tallies.iter_mut().zip(maps) {
            tally.add(sample, predicted, map)?;
        }
        random.add(
            sample,
            predicted,
            &baseline_random(&mut rng, sample.len())?.scores,
        )?;
        last.add(sample, predicted, &baseline_last(sample.len())?.scores)?;
    }
    let arch = params.arch.to_string();
    let mut report = EvalReport {
        samples: samples.len(),
        ..EvalReport::default()
    };
    let names = methods
        .iter()
        .map(ToString::to_string)
        .chain(["random".to_string(), "last".to_string()]);
    for (name, t) in names.zip(tallies.iter().chain([&random, &last])) {
        report.push(&name, &arch, "hit_target", t.target_hits, t.target_possible);
        report.push(
            &name,
            &arch,
            "hit_feat_correct",
            t.feat_correct_hits,
            t.feat_correct_possible,
        );
        report.push(
            &name,
            &arch,
            "hit_feat_wrong",
            t.feat_wrong_hits,
            t.feat_wrong_possible,
        );
    }
    eprintln!(
        "{} samples, {} classified correctly",
        samples.len(),
        last.target_possible
    );
    write_output(args.out.as_deref(), &report.to_tsv())?;
    Ok(())
}
