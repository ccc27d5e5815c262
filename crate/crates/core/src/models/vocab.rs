use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OOV_TOKEN: &str = "<oov>";

/// Token inventory with a frequency-rank cutoff.
///
/// Id 0 is always the out-of-vocabulary token. The remaining ids follow
/// descending corpus frequency (ties broken lexicographically), so the
/// `cutoff` most frequent types are kept and everything ranked below maps
/// to [`Vocabulary::oov_id`], or to its part-of-speech tag when the
/// vocabulary was built with [`Vocabulary::build_with_pos`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    cutoff: usize,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from a token stream, keeping the `cutoff` most frequent types.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>, cutoff: usize) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let kept = rank(counts, cutoff);
        Self::from_tokens_with_cutoff(kept, cutoff)
    }

    /// Builds from `(token, pos)` pairs: types ranked beyond `cutoff` are
    /// replaced by their part-of-speech tag, and the tags become types.
    pub fn build_with_pos<'a>(
        tagged: impl IntoIterator<Item = (&'a str, &'a str)> + Clone,
        cutoff: usize,
    ) -> Self {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for (t, _) in tagged.clone() {
            *counts.entry(t).or_default() += 1;
        }
        let frequent: std::collections::HashSet<String> =
            rank(counts, cutoff).into_iter().collect();
        let mut replaced: HashMap<&str, usize> = HashMap::new();
        for (t, pos) in tagged {
            let key = if frequent.contains(t) { t } else { pos };
            *replaced.entry(key).or_default() += 1;
        }
        let kept = rank(replaced, usize::MAX);
        Self::from_tokens_with_cutoff(kept, cutoff)
    }

    /// Vocabulary over the given types in order, after the OOV entry.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().collect();
        let cutoff = tokens.len();
        Self::from_tokens_with_cutoff(tokens, cutoff)
    }

    fn from_tokens_with_cutoff(kept: Vec<String>, cutoff: usize) -> Self {
        let mut tokens = vec![OOV_TOKEN.to_string()];
        tokens.extend(kept.into_iter().filter(|t| t != OOV_TOKEN));
        let mut v = Vocabulary {
            tokens,
            cutoff,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Restores the lookup table after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn oov_id(&self) -> usize {
        0
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    /// Like [`Vocabulary::id`], but falls back to the tag before the OOV id.
    pub fn id_with_pos(&self, token: &str, pos: &str) -> usize {
        self.index
            .get(token)
            .or_else(|| self.index.get(pos))
            .copied()
            .unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> TokenSequence {
        TokenSequence {
            ids: tokens.iter().map(|t| self.id(t.as_ref())).collect(),
        }
    }
}

fn rank(counts: HashMap<&str, usize>, cutoff: usize) -> Vec<String> {
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
        .into_iter()
        .filter(|(t, _)| *t != OOV_TOKEN)
        .take(cutoff)
        .map(|(t, _)| t.to_string())
        .collect()
}

/// Token ids of one input text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        TokenSequence { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn check(&self, vocab_size: usize) -> Result<()> {
        match self.ids.iter().find(|&&id| id >= vocab_size) {
            Some(&id) => Err(Error::TokenOutOfRange {
                id,
                size: vocab_size,
            }),
            None => Ok(()),
        }
    }
}

impl From<Vec<usize>> for TokenSequence {
    fn from(ids: Vec<usize>) -> Self {
        TokenSequence { ids }
    }
}
