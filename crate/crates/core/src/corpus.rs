//! JSON-lines corpus: one `{"label": int, "sentences": [[token, ...], ...]}`
//! object per line, optionally with a string `"id"`.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::LabeledSentence;
use crate::models::LabeledSequence;
use crate::models::Vocabulary;
use crate::numerics::SeededRng;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub label: usize,
    pub sentences: Vec<Vec<String>>,
}

impl Document {
    pub fn tokens(&self) -> Vec<String> {
        self.sentences.iter().flatten().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `id` if present, otherwise the 1-based record number.
    pub fn id_or(&self, index: usize) -> String {
        self.id.clone().unwrap_or_else(|| (index + 1).to_string())
    }

    pub fn labeled_sentences(&self) -> impl Iterator<Item = LabeledSentence> + '_ {
        self.sentences
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| LabeledSentence {
                tokens: s.clone(),
                label: self.label,
            })
    }
}

/// Blank lines are skipped; errors carry the 1-based line number.
pub fn read_corpus(reader: impl BufRead) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(docs: &[Document]) -> Result<String> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(d)?);
        out.push('\n');
    }
    Ok(out)
}

/// Number of classes implied by the largest label.
pub fn class_count(docs: &[Document]) -> usize {
    docs.iter().map(|d| d.label + 1).max().unwrap_or(0)
}

pub fn encode_documents(vocab: &Vocabulary, docs: &[Document]) -> Vec<LabeledSequence> {
    docs.iter()
        .map(|d| LabeledSequence {
            tokens: vocab.encode(&d.tokens()),
            label: d.label,
        })
        .collect()
}

/// Shape of a synthetic keyword corpus: every sentence is filler words
/// plus exactly one keyword of its class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSpec {
    pub classes: usize,
    pub keywords_per_class: usize,
    pub fillers: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for KeywordSpec {
    fn default() -> Self {
        KeywordSpec {
            classes: 2,
            keywords_per_class: 3,
            fillers: 40,
            min_len: 4,
            max_len: 10,
        }
    }
}

impl KeywordSpec {
    pub fn keyword(class: usize, j: usize) -> String {
        format!("key{class}_{j}")
    }

    pub fn is_keyword(token: &str) -> bool {
        token.starts_with("key")
    }

    fn sentence(&self, rng: &mut SeededRng, label: usize) -> Vec<String> {
        let len = self.min_len + rng.index(self.max_len - self.min_len + 1);
        let mut tokens: Vec<String> = (0..len - 1)
            .map(|_| format!("w{}", rng.index(self.fillers)))
            .collect();
        let at = rng.index(len);
        tokens.insert(at, Self::keyword(label, rng.index(self.keywords_per_class)));
        tokens
    }

    /// `n` single-sentence documents with uniformly drawn labels.
    pub fn generate(&self, rng: &mut SeededRng, n: usize) -> Result<Vec<Document>> {
        if self.classes == 0 || self.keywords_per_class == 0 || self.fillers == 0 {
            return Err(Error::invalid(
                "keyword corpus needs classes, keywords and fillers",
            ));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "sentence length range {}..={} is empty",
                self.min_len, self.max_len
            )));
        }
        Ok((0..n)
            .map(|_| {
                let label = rng.index(self.classes);
                Document {
                    id: None,
                    label,
                    sentences: vec![self.sentence(rng, label)],
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let text = "{\"label\": 1, \"sentences\": [[\"a\", \"b\"], [\"c\"]]}\n\n{\"id\": \"x7\", \"label\": 0, \"sentences\": []}\n";
        let docs = read_corpus(text.as_bytes()).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].tokens(), vec!["a", "b", "c"]);
        assert_eq!(docs[0].id_or(0), "1");
        assert_eq!(docs[1].id_or(1), "x7");
        assert!(docs[1].is_empty());
        assert_eq!(class_count(&docs), 2);
        let again = read_corpus(write_corpus(&docs).unwrap().as_bytes()).unwrap();
        assert_eq!(docs, again);
    }

    #[test]
    fn sentences_inherit_label() {
        let doc = Document {
            id: None,
            label: 3,
            sentences: vec![vec!["a".into()], vec![], vec!["b".into(), "c".into()]],
        };
        let s: Vec<LabeledSentence> = doc.labeled_sentences().collect();
        assert_eq!(s.len(), 2);
        assert!(s.iter().all(|x| x.label == 3));
    }

    #[test]
    fn keyword_sentences_have_one_keyword() {
        let spec = KeywordSpec::default();
        let docs = spec.generate(&mut SeededRng::new(4), 200).unwrap();
        for d in &docs {
            let toks = d.tokens();
            assert!((spec.min_len..=spec.max_len).contains(&toks.len()));
            let keys: Vec<&String> = toks.iter().filter(|t| KeywordSpec::is_keyword(t)).collect();
            assert_eq!(keys.len(), 1);
            assert!(keys[0].starts_with(&format!("key{}_", d.label)));
        }
        assert_eq!(docs, spec.generate(&mut SeededRng::new(4), 200).unwrap());
        let bad = KeywordSpec { min_len: 0, ..spec };
        assert!(bad.generate(&mut SeededRng::new(0), 1).is_err());
    }

    #[test]
    fn bad_line_is_located() {
        let text = "{\"label\": 0, \"sentences\": []}\n{\"label\": -1, \"sentences\": []}\n";
        match read_corpus(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
