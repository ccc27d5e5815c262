//! Omission and occlusion of N-gram windows.
//!
//! `phi(t) = (1/N) sum_{j=1..N} [s(k, E) - s(k, E without window j)]` over
//! the `N` windows of width `N` that contain `t`. Windows hanging over
//! either end are clipped to the sequence; the divisor stays `N`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::RelevanceMap;
use crate::models::{embed, scores_embedded, NetworkParams, TokenSequence};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PerturbMode {
    /// Delete the window; the sequence gets shorter.
    Omit,
    /// Replace the window by all-zero embedding rows.
    Occlude,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub mode: PerturbMode,
    pub n: usize,
}

impl PerturbConfig {
    pub fn new(mode: PerturbMode, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("window width must be at least 1"));
        }
        Ok(PerturbConfig { mode, n })
    }
}

/// Embeddings with rows `lo..hi` (0-based, half-open) removed or zeroed.
pub(crate) fn perturbed(e: &Matrix, lo: usize, hi: usize, mode: PerturbMode) -> Matrix {
    match mode {
        PerturbMode::Occlude => {
            let mut out = e.clone();
            for t in lo..hi {
                out.row_mut(t).iter_mut().for_each(|v| *v = 0.0);
            }
            out
        }
        PerturbMode::Omit => {
            let keep: Vec<Vec<f64>> = (0..e.rows())
                .filter(|t| !(lo..hi).contains(t))
                .map(|t| e.row(t).to_vec())
                .collect();
            Matrix::from_rows(&keep, e.cols()).expect("rows share the embedding width")
        }
    }
}

pub fn perturb_explain(
    params: &NetworkParams,
    x: &TokenSequence,
    k: usize,
    cfg: &PerturbConfig,
) -> Result<RelevanceMap> {
    if cfg.n == 0 {
        return Err(Error::invalid("window width must be at least 1"));
    }
    if x.is_empty() {
        return Err(Error::Empty("input sequence"));
    }
    if k >= params.classes() {
        return Err(Error::ClassOutOfRange {
            class: k,
            classes: params.classes(),
        });
    }
    let e = embed(params, x)?;
    let t_len = e.rows() as i64;
    let n = cfg.n as i64;
    let full = scores_embedded(params, &e)?[k];

    // window starting at a (1-based) covers a..a+N-1; a runs over 2-N..=T
    let mut drop_by_start = HashMap::new();
    let mut drop_by_span: HashMap<(usize, usize), f64> = HashMap::new();
    for a in (2 - n)..=t_len {
        let lo = (a.max(1) - 1) as usize;
        let hi = (a + n - 1).min(t_len) as usize;
        let drop = match drop_by_span.get(&(lo, hi)) {
            Some(&d) => d,
            None => {
                let d = full - scores_embedded(params, &perturbed(&e, lo, hi, cfg.mode))?[k];
                drop_by_span.insert((lo, hi), d);
                d
            }
        };
        drop_by_start.insert(a, drop);
    }
    let scores = (1..=t_len)
        .map(|t| (t - n + 1..=t).map(|a| drop_by_start[&a]).sum::<f64>() / n as f64)
        .collect();
    let tag = match cfg.mode {
        PerturbMode::Omit => format!("omit{}", cfg.n),
        PerturbMode::Occlude => format!("occ{}", cfg.n),
    };
    Ok(RelevanceMap::new(scores, k, tag))
}
