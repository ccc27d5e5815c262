use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use pointgame_core::eval::{match_manual_gt, parse_manual_gt};
use pointgame_core::render::{colorize, emit_ansi, emit_html_all, Markers};

use crate::explain::RelevanceRecord;
use crate::failure::Failure;
use crate::files::{read_text, write_output};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Html,
    Ansi,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Relevance records written by `explain`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Html)]
    pub format: Format,
    /// Manual ground truth: a document id and its word types per line;
    /// matching tokens are underlined.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Output file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &RenderArgs) -> Result<(), Failure> {
    let ground_truth: HashMap<String, Vec<String>> = match &args.gt {
        Some(path) => parse_manual_gt(&read_text(path)?)?
            .into_iter()
            .map(|g| (g.doc_id, g.types))
            .collect(),
        None => HashMap::new(),
    };
    let text = read_text(&args.input)?;
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RelevanceRecord = serde_json::from_str(line).with_context(|| {
            format!(
                "{}: malformed record at line {}",
                args.input.display(),
                i + 1
            )
        })?;
        let Some(scores) = &record.scores else {
            continue;
        };
        let markers = Markers {
            bold_rmax: true,
            ground_truth: ground_truth
                .get(&record.doc)
                .map(|types| match_manual_gt(&record.tokens, types))
                .unwrap_or_default(),
            oov: record.oov.iter().copied().collect::<BTreeSet<_>>(),
        };
        docs.push(colorize(scores, &record.tokens, &markers)?);
    }
    let out = match args.format {
        Format::Html => emit_html_all(&docs),
        Format::Ansi => docs.iter().map(|d| emit_ansi(d)).collect(),
    };
    write_output(args.out.as_deref(), &out)?;
    Ok(())
}
