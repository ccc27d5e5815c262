use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use pointgame_core::models::forward;
use pointgame_core::render::{colorize, emit_html_all, Markers};
use pointgame_core::{explain, Method, MethodOptions, NetworkParams, Vocabulary};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::failure::Failure;
use crate::files::{load_checkpoint, read_documents, write_output};
use crate::{ClassMode, ModelInput};

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub model: ModelInput,
    /// JSON-lines documents to explain.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ClassMode::Predicted)]
    pub mode: ClassMode,
    /// Target class for `--mode fixed`.
    #[arg(long)]
    pub class: Option<usize>,
    /// JSON-lines relevance records [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a heatmap page of all successful records.
    #[arg(long)]
    pub html: Option<PathBuf>,
}

/// One explanation of one document; `error` replaces `class` and `scores`
/// when the method failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRecord {
    pub doc: String,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<usize>,
    pub tokens: Vec<String>,
    /// Positions of out-of-vocabulary tokens.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub oov: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn in_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::Data(e.into()))?;
    Ok(pool.install(work))
}

struct Job<'a> {
    params: &'a NetworkParams,
    vocab: &'a Vocabulary,
    methods: &'a [Method],
    options: &'a MethodOptions,
    fixed: Option<usize>,
}

impl Job<'_> {
    fn document(&self, id: String, tokens: Vec<String>) -> Vec<RelevanceRecord> {
        let x = self.vocab.encode(&tokens);
        let oov: Vec<usize> = (0..x.len())
            .filter(|&t| x.ids[t] == self.vocab.oov_id())
            .collect();
        let class = match self.fixed {
            Some(k) => Ok(k),
            None => forward(self.params, &x).map(|tr| tr.predicted_class()),
        };
        self.methods
            .iter()
            .map(|method| {
                let outcome = class.as_ref().map_err(ToString::to_string).and_then(|&k| {
                    explain(self.params, &x, k, method, self.options).map_err(|e| e.to_string())
                });
                let (class, scores, error) = match outcome {
                    Ok(map) => (Some(map.class), Some(map.scores), None),
                    Err(e) => (None, None, Some(e)),
                };
                RelevanceRecord {
                    doc: id.clone(),
                    method: method.to_string(),
                    class,
                    tokens: tokens.clone(),
                    oov: oov.clone(),
                    scores,
                    error,
                }
            })
            .collect()
    }
}

pub fn run(args: &ExplainArgs) -> Result<(), Failure> {
    let methods = args.model.methods.methods()?;
    let options = args.model.methods.options()?;
    let fixed = match (args.mode, args.class) {
        (ClassMode::Predicted, None) => None,
        (ClassMode::Predicted, Some(_)) => {
            return Err(Failure::usage("--class requires --mode fixed"))
        }
        (ClassMode::Fixed, None) => return Err(Failure::usage("--mode fixed requires --class")),
        (ClassMode::Fixed, Some(k)) => Some(k),
    };
    let checkpoint = load_checkpoint(&args.model.model)?;
    if let Some(k) = fixed {
        if k >= checkpoint.params.classes() {
            return Err(Failure::usage(format!(
                "--class {k} out of range for a {}-class model",
                checkpoint.params.classes()
            )));
        }
    }
    let docs = read_documents(&args.input)?;
    let job = Job {
        params: &checkpoint.params,
        vocab: &checkpoint.vocab,
        methods: &methods,
        options: &options,
        fixed,
    };
    let records: Vec<RelevanceRecord> = in_pool(args.model.jobs, || {
        docs.par_iter()
            .enumerate()
            .map(|(i, d)| job.document(d.id_or(i), d.tokens()))
            .collect::<Vec<_>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).map_err(anyhow::Error::from)?);
        text.push('\n');
    }
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!(
            "{failed} of {} explanations failed; see the error field",
            records.len()
        );
    }
    write_output(args.out.as_deref(), &text)?;
    if let Some(path) = &args.html {
        let mut pages = Vec::new();
        for r in records.iter().filter(|r| r.scores.is_some()) {
            let markers = Markers {
                oov: r.oov.iter().copied().collect(),
                ground_truth: BTreeSet::new(),
                bold_rmax: true,
            };
            pages.push(colorize(
                r.scores.as_deref().unwrap_or_default(),
                &r.tokens,
                &markers,
            )?);
        }
        write_output(Some(path), &emit_html_all(&pages))?;
    }
    Ok(())
}
