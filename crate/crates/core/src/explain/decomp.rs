//! Cell decomposition: relevance as the change in "net load" a state
//! carries to the final classifier input once every later gate has been
//! applied.
//!
//! LSTM family: `nl(t) = w_k . (o_T * tanh(F_t * c_t))` with
//! `F_t = f_{t+1} * ... * f_T`. GRU family: `nl(t) = w_k . (Z_t * h_t)` with
//! `Z_t = z_{t+1} * ... * z_T`. The token score is `nl(t) - nl(t-1)`.

use crate::error::{Error, Result};
use crate::explain::RelevanceMap;
use crate::models::{forward, ForwardTrace, NetworkParams, RecurrentTrace, TokenSequence};

/// Net loads `nl(0..=T)` of one direction for one class.
#[derive(Clone, Debug, PartialEq)]
pub struct NetLoadSeries {
    pub class: usize,
    pub values: Vec<f64>,
}

impl NetLoadSeries {
    /// First differences `nl(t) - nl(t-1)` for `t = 1..=T`.
    pub fn differences(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn unsupported(params: &NetworkParams) -> Error {
    Error::Unsupported {
        method: "decomp".into(),
        arch: params.arch.to_string(),
    }
}

fn direction_series(lstm: bool, tr: &RecurrentTrace, weights: &[f64]) -> Vec<f64> {
    let t_len = tr.len();
    let d = weights.len();
    let gates = if lstm { &tr.forget } else { &tr.update };
    let mut values = vec![0.0; t_len + 1];
    let mut suffix = vec![1.0; d];
    for t in (0..=t_len).rev() {
        values[t] = if lstm {
            let o = &tr.output[t_len - 1];
            (0..d)
                .map(|j| weights[j] * o[j] * (suffix[j] * tr.cell[t][j]).tanh())
                .sum()
        } else {
            (0..d)
                .map(|j| weights[j] * suffix[j] * tr.hidden[t][j])
                .sum()
        };
        if t > 0 {
            for (s, g) in suffix.iter_mut().zip(&gates[t - 1]) {
                *s *= g;
            }
        }
    }
    values
}

/// Net-load series of every direction (processing order) from a trace.
pub fn net_load_series(
    params: &NetworkParams,
    trace: &ForwardTrace,
    k: usize,
) -> Result<Vec<NetLoadSeries>> {
    let dirs = trace.recurrent().ok_or_else(|| unsupported(params))?;
    if k >= params.classes() {
        return Err(Error::ClassOutOfRange {
            class: k,
            classes: params.classes(),
        });
    }
    let d = params.direction_dim();
    let row = params.classifier.row(k);
    Ok(dirs
        .iter()
        .enumerate()
        .map(|(di, tr)| NetLoadSeries {
            class: k,
            values: direction_series(params.arch.is_lstm_family(), tr, &row[di * d..(di + 1) * d]),
        })
        .collect())
}

/// `nl(t)` of the forward direction.
pub fn net_load(params: &NetworkParams, trace: &ForwardTrace, k: usize, t: usize) -> Result<f64> {
    let series = net_load_series(params, trace, k)?;
    series[0].values.get(t).copied().ok_or_else(|| {
        Error::invalid(format!(
            "time step {t} beyond sequence length {}",
            trace.len()
        ))
    })
}

/// Per-token net-load differences; directions are summed after mapping
/// back to original positions.
pub fn decomp_explain(params: &NetworkParams, x: &TokenSequence, k: usize) -> Result<RelevanceMap> {
    if !params.arch.is_recurrent() {
        return Err(unsupported(params));
    }
    let trace = forward(params, x)?;
    let t_len = trace.len();
    let mut scores = vec![0.0; t_len];
    for (di, series) in net_load_series(params, &trace, k)?.iter().enumerate() {
        for (p, v) in series.differences().into_iter().enumerate() {
            let t = if di == 0 { p } else { t_len - 1 - p };
            scores[t] += v;
        }
    }
    Ok(RelevanceMap::new(scores, k, "decomp"))
}
