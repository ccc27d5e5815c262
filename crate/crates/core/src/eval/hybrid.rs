use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::rmax;
use crate::numerics::SeededRng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub tokens: Vec<String>,
    pub label: usize,
}

/// Concatenated sentences from differently labelled sources; every token
/// carries the label of the document its sentence came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridDocument {
    pub tokens: Vec<String>,
    pub origin: Vec<usize>,
    /// Start offset of each sentence.
    pub sentence_starts: Vec<usize>,
}

impl HybridDocument {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn from_sentences(sentences: &[&LabeledSentence]) -> Self {
        let mut doc = HybridDocument {
            tokens: Vec::new(),
            origin: Vec::new(),
            sentence_starts: Vec::with_capacity(sentences.len()),
        };
        for s in sentences {
            doc.sentence_starts.push(doc.tokens.len());
            doc.tokens.extend(s.tokens.iter().cloned());
            doc.origin
                .extend(std::iter::repeat_n(s.label, s.tokens.len()));
        }
        doc
    }
}

/// Shuffles the sentence pool and concatenates `per_doc` sentences at a
/// time; a final incomplete group is dropped.
pub fn build_hybrid_docs(
    sentences: &[LabeledSentence],
    rng: &mut SeededRng,
    per_doc: usize,
) -> Result<Vec<HybridDocument>> {
    if per_doc == 0 {
        return Err(Error::invalid("sentences per document must be positive"));
    }
    if sentences.len() < per_doc {
        return Err(Error::invalid(format!(
            "need at least {per_doc} sentences, got {}",
            sentences.len()
        )));
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    rng.shuffle(&mut order);
    Ok(order
        .chunks_exact(per_doc)
        .map(|group| {
            let picked: Vec<&LabeledSentence> = group.iter().map(|&i| &sentences[i]).collect();
            HybridDocument::from_sentences(&picked)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HitOutcome {
    Hit,
    Miss,
    /// The prediction matches no token's origin: the document is not scored.
    Skip,
}

/// Hybrid-document pointing game for one document.
pub fn hit_hybrid(origin: &[usize], predicted: usize, scores: &[f64]) -> Result<HitOutcome> {
    if origin.len() != scores.len() {
        return Err(Error::shape(format!(
            "{} origin labels but {} scores",
            origin.len(),
            scores.len()
        )));
    }
    if !origin.contains(&predicted) {
        return Ok(HitOutcome::Skip);
    }
    Ok(if origin[rmax(scores)?] == predicted {
        HitOutcome::Hit
    } else {
        HitOutcome::Miss
    })
}

/// Expected hit rate of a uniformly random pointer: the share of tokens
/// whose origin is the prediction. `None` for a skipped document.
pub fn random_hit_expectation(origin: &[usize], predicted: usize) -> Option<f64> {
    let matching = origin.iter().filter(|&&l| l == predicted).count();
    (matching > 0).then(|| matching as f64 / origin.len() as f64)
}

/// Running hit/skip counts over hybrid documents.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HybridTally {
    pub hits: usize,
    pub evaluated: usize,
    pub skipped: usize,
}

impl HybridTally {
    pub fn add(&mut self, outcome: HitOutcome) {
        match outcome {
            HitOutcome::Hit => {
                self.hits += 1;
                self.evaluated += 1;
            }
            HitOutcome::Miss => self.evaluated += 1,
            HitOutcome::Skip => self.skipped += 1,
        }
    }

    pub fn merge(&mut self, other: &HybridTally) {
        self.hits += other.hits;
        self.evaluated += other.evaluated;
        self.skipped += other.skipped;
    }

    pub fn total(&self) -> usize {
        self.evaluated + self.skipped
    }
}

/// Positions whose lowercased token is a prefix or suffix of a listed type.
pub fn match_manual_gt<S: AsRef<str>, W: AsRef<str>>(tokens: &[S], types: &[W]) -> BTreeSet<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, tok)| {
            let t = tok.as_ref().to_lowercase();
            types.iter().any(|w| {
                let w = w.as_ref();
                w.starts_with(&t) || w.ends_with(&t)
            })
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn hit_manual(ground_truth: &BTreeSet<usize>, scores: &[f64]) -> Result<bool> {
    Ok(ground_truth.contains(&rmax(scores)?))
}

/// Word types marked as evidence for one document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualGroundTruth {
    pub doc_id: String,
    pub types: Vec<String>,
}

/// One document per line: an id followed by its word types, whitespace
/// separated. Blank lines and lines starting with `#` are ignored.
pub fn parse_manual_gt(text: &str) -> Result<Vec<ManualGroundTruth>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let doc_id = fields.next().expect("non-empty line").to_string();
        let types: Vec<String> = fields.map(str::to_string).collect();
        if types.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("document `{doc_id}` lists no word types"),
            });
        }
        out.push(ManualGroundTruth { doc_id, types });
    }
    Ok(out)
}
