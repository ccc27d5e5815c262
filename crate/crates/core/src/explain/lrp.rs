//! Epsilon-LRP and DeepLIFT.
//!
//! Both methods walk the network backwards with the same epsilon rule,
//! treating gates as step-specific weights: relevance only flows through
//! embeddings, candidates, cell states and hidden states. DeepLIFT replaces
//! every relevance-carrying activation by its difference from a reference
//! pass on all-zero embeddings of the same length, while the gates stay
//! those of the actual input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::RelevanceMap;
use crate::models::{
    forward, forward_embedded, Cell, ConvGate, ForwardTrace, NetworkParams, RecurrentGate,
    RecurrentTrace, TokenSequence,
};
use crate::numerics::Matrix;

pub const DEFAULT_EPS: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropagationMode {
    Lrp,
    DeepLift,
}

/// `-eps` for negative `a`, `+eps` otherwise (zero included).
pub fn esign(a: f64, eps: f64) -> f64 {
    if a < 0.0 {
        -eps
    } else {
        eps
    }
}

fn stabilize(a: f64, eps: f64) -> f64 {
    a + esign(a, eps)
}

/// Epsilon rule through a dense layer whose `weights` are `out x in`:
/// `R(i) = sum_j R(j) a_i w_ji / (a'_j + esign(a'_j))`.
///
/// `a_out` are the pre-activations (bias included). With `baseline`
/// `(a_in_ref, a_out_ref)` every activation is replaced by its difference
/// from the reference, which gives the DeepLIFT rule.
pub fn relevance_dense(
    r_out: &[f64],
    a_in: &[f64],
    weights: &Matrix,
    a_out: &[f64],
    eps: f64,
    baseline: Option<(&[f64], &[f64])>,
) -> Result<Vec<f64>> {
    if weights.shape() != (r_out.len(), a_in.len()) || a_out.len() != r_out.len() {
        return Err(Error::shape(format!(
            "dense relevance: weights {:?}, {} inputs, {} outputs, {} relevances",
            weights.shape(),
            a_in.len(),
            a_out.len(),
            r_out.len()
        )));
    }
    if let Some((bi, bo)) = baseline {
        if bi.len() != a_in.len() || bo.len() != a_out.len() {
            return Err(Error::shape("baseline activations do not match"));
        }
    }
    let d_in = diff(a_in, baseline.map(|b| b.0));
    let d_out = diff(a_out, baseline.map(|b| b.1));
    let q: Vec<f64> = r_out
        .iter()
        .zip(&d_out)
        .map(|(r, a)| r / stabilize(*a, eps))
        .collect();
    let mut back = vec![0.0; a_in.len()];
    weights.matvec_t_acc(&q, &mut back);
    Ok(back.iter().zip(&d_in).map(|(b, a)| b * a).collect())
}

fn diff(a: &[f64], reference: Option<&[f64]>) -> Vec<f64> {
    match reference {
        Some(r) => a.iter().zip(r).map(|(x, y)| x - y).collect(),
        None => a.to_vec(),
    }
}

fn diff_seq(a: &[Vec<f64>], reference: Option<&[Vec<f64>]>) -> Vec<Vec<f64>> {
    (0..a.len())
        .map(|i| diff(&a[i], reference.map(|r| r[i].as_slice())))
        .collect()
}

/// Relevance of one recurrent direction, in processing order. `hidden` and
/// `cell` hold `T + 1` entries (index 0 is the initial state), `candidate`
/// holds `T`; `cell` is empty for the GRU family.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionRelevance {
    pub hidden: Vec<Vec<f64>>,
    pub cell: Vec<Vec<f64>>,
    pub candidate: Vec<Vec<f64>>,
    pub inputs: Matrix,
}

/// Every relevance array produced by one backward sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RelevanceState {
    pub mode: PropagationMode,
    pub eps: f64,
    /// Relevance of the target class logit.
    pub root: f64,
    /// Relevance of the document representation.
    pub representation: Vec<f64>,
    pub directions: Vec<DirectionRelevance>,
    /// CNN only: relevance of the feature map, `T x channels`.
    pub conv: Option<Matrix>,
    /// `T x d_e` relevance of every embedding entry, original order.
    pub embeddings: Matrix,
}

impl RelevanceState {
    /// Per-token relevance: embedding relevance summed over dimensions.
    pub fn token_scores(&self) -> Vec<f64> {
        self.embeddings.row_iter().map(|r| r.iter().sum()).collect()
    }
}

enum Candidate<'a> {
    Dense(&'a RecurrentGate),
    Conv(&'a ConvGate),
}

/// Adds `de_i * (tap_k^T q)` to input rows `i = t + shift - k` for every tap.
fn scatter_conv(gate: &ConvGate, t: usize, shift: usize, q: &[f64], de: &Matrix, re: &mut Matrix) {
    let mut tmp = vec![0.0; de.cols()];
    for (k, tap) in gate.taps.iter().enumerate() {
        let Some(i) = (t + shift).checked_sub(k) else {
            continue;
        };
        if i >= de.rows() {
            continue;
        }
        tmp.iter_mut().for_each(|v| *v = 0.0);
        tap.matvec_t_acc(q, &mut tmp);
        for ((r, d), v) in re.row_mut(i).iter_mut().zip(de.row(i)).zip(&tmp) {
            *r += d * v;
        }
    }
}

fn propagate_direction(
    cell: &Cell,
    tr: &RecurrentTrace,
    base: Option<&RecurrentTrace>,
    r_top: &[f64],
    eps: f64,
) -> Result<DirectionRelevance> {
    let t_len = tr.len();
    let d = r_top.len();
    let de = match base {
        Some(b) => {
            let mut m = tr.inputs.clone();
            for (x, y) in m.as_mut_slice().iter_mut().zip(b.inputs.as_slice()) {
                *x -= y;
            }
            m
        }
        None => tr.inputs.clone(),
    };
    let dh = diff_seq(&tr.hidden, base.map(|b| b.hidden.as_slice()));
    let dg = diff_seq(&tr.candidate, base.map(|b| b.candidate.as_slice()));
    let dgp = diff_seq(&tr.candidate_pre, base.map(|b| b.candidate_pre.as_slice()));

    let mut rh = vec![vec![0.0; d]; t_len + 1];
    let mut rc: Vec<Vec<f64>> = Vec::new();
    let mut rg = vec![vec![0.0; d]; t_len];
    let mut re = Matrix::zeros(t_len, tr.inputs.cols());
    rh[t_len].copy_from_slice(r_top);

    let mut upstream =
        |s: usize, rg_s: &[f64], cand: &Candidate, reset: Option<&[f64]>, rh_prev: &mut [f64]| {
            let q: Vec<f64> = rg_s
                .iter()
                .zip(&dgp[s])
                .map(|(r, a)| r / stabilize(*a, eps))
                .collect();
            match cand {
                Candidate::Dense(gate) => {
                    let mut tmp = vec![0.0; de.cols()];
                    gate.input.matvec_t_acc(&q, &mut tmp);
                    for ((r, e), v) in re.row_mut(s).iter_mut().zip(de.row(s)).zip(&tmp) {
                        *r += e * v;
                    }
                    let mut tmp = vec![0.0; d];
                    gate.recurrent.matvec_t_acc(&q, &mut tmp);
                    for m in 0..d {
                        let gate_weight = reset.map_or(1.0, |r| r[m]);
                        rh_prev[m] += dh[s][m] * gate_weight * tmp[m];
                    }
                }
                Candidate::Conv(gate) => scatter_conv(gate, s, 0, &q, &de, &mut re),
            }
        };

    let (cand, gru_family) = match cell {
        Cell::Gru { candidate, .. } => (Candidate::Dense(candidate), true),
        Cell::QGru { candidate, .. } => (Candidate::Conv(candidate), true),
        Cell::Lstm { candidate, .. } => (Candidate::Dense(candidate), false),
        Cell::QLstm { candidate, .. } => (Candidate::Conv(candidate), false),
        Cell::Cnn { .. } => return Err(Error::shape("recurrent relevance needs a recurrent cell")),
    };

    if gru_family {
        for s in (0..t_len).rev() {
            let t = s + 1;
            let z = &tr.update[s];
            let (before, after) = rh.split_at_mut(t);
            let (rh_prev, rh_t) = (&mut before[t - 1], &after[0]);
            for j in 0..d {
                let denom = stabilize(dh[t][j], eps);
                rg[s][j] = rh_t[j] * dg[s][j] * (1.0 - z[j]) / denom;
                rh_prev[j] += rh_t[j] * dh[t - 1][j] * z[j] / denom;
            }
            let reset = tr.reset.get(s).map(Vec::as_slice);
            upstream(s, &rg[s], &cand, reset, rh_prev);
        }
    } else {
        let dc = diff_seq(&tr.cell, base.map(|b| b.cell.as_slice()));
        let tanh_of = |cells: &[Vec<f64>]| -> Vec<Vec<f64>> {
            cells
                .iter()
                .map(|c| c.iter().map(|v| v.tanh()).collect())
                .collect()
        };
        // the reference enters as tanh(c_ref), not through tanh(c - c_ref)
        let dtc = match base {
            Some(b) => diff_seq(&tanh_of(&tr.cell), Some(&tanh_of(&b.cell))),
            None => tanh_of(&tr.cell),
        };
        rc = vec![vec![0.0; d]; t_len + 1];
        for s in (0..t_len).rev() {
            let t = s + 1;
            let (o, i) = (&tr.output[s], &tr.input_gate[s]);
            for j in 0..d {
                let mut r = rh[t][j] * dtc[t][j] * o[j] / stabilize(dh[t][j], eps);
                if t < t_len {
                    r += rc[t + 1][j] * dc[t][j] * tr.forget[t][j] / stabilize(dc[t + 1][j], eps);
                }
                rc[t][j] = r;
                rg[s][j] = r * dg[s][j] * i[j] / stabilize(dc[t][j], eps);
            }
            upstream(s, &rg[s], &cand, None, &mut rh[t - 1]);
        }
    }

    Ok(DirectionRelevance {
        hidden: rh,
        cell: rc,
        candidate: rg,
        inputs: re,
    })
}

/// Runs the backward relevance sweep for class `k`. With a `reference`
/// trace the DeepLIFT differences are used; without one, plain LRP.
pub fn propagate(
    params: &NetworkParams,
    trace: &ForwardTrace,
    reference: Option<&ForwardTrace>,
    k: usize,
    eps: f64,
) -> Result<RelevanceState> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!(
            "stabiliser must be positive, got {eps}"
        )));
    }
    let classes = trace.scores.len();
    if k >= classes {
        return Err(Error::ClassOutOfRange { class: k, classes });
    }
    if let Some(r) = reference {
        if r.embeddings.shape() != trace.embeddings.shape() {
            return Err(Error::shape("reference trace has a different length"));
        }
    }
    let mode = if reference.is_some() {
        PropagationMode::DeepLift
    } else {
        PropagationMode::Lrp
    };
    let root = trace.scores[k] - reference.map_or(0.0, |r| r.scores[k]);
    let mut r_out = vec![0.0; classes];
    r_out[k] = root;
    let representation = relevance_dense(
        &r_out,
        &trace.representation,
        &params.classifier,
        &trace.scores,
        eps,
        reference.map(|r| (r.representation.as_slice(), r.scores.as_slice())),
    )?;

    let t_len = trace.len();
    let mut embeddings = Matrix::zeros(t_len, trace.embeddings.cols());
    let mut directions = Vec::new();
    let mut conv = None;

    if let Some(dirs) = trace.recurrent() {
        let ref_dirs = reference.and_then(|r| r.recurrent());
        let d = params.direction_dim();
        for (di, (cell, tr)) in params.cells.iter().zip(dirs).enumerate() {
            let base = ref_dirs.map(|r| &r[di]);
            let rel =
                propagate_direction(cell, tr, base, &representation[di * d..(di + 1) * d], eps)?;
            for p in 0..t_len {
                let t = if di == 0 { p } else { t_len - 1 - p };
                for (a, b) in embeddings.row_mut(t).iter_mut().zip(rel.inputs.row(p)) {
                    *a += b;
                }
            }
            directions.push(rel);
        }
    } else {
        let tr = trace
            .conv()
            .ok_or_else(|| Error::shape("trace has no core layer"))?;
        let base = reference.and_then(|r| r.conv());
        let Some(Cell::Cnn { filter }) = params.cells.first() else {
            return Err(Error::shape("CNN parameters expected"));
        };
        let half = (params.kernel_width - 1) / 2;
        let channels = tr.pooled.len();
        let mut rg = Matrix::zeros(t_len, channels);
        for (j, &w) in tr.winners.iter().enumerate() {
            rg[(w, j)] = representation[j];
        }
        let mut de = trace.embeddings.clone();
        if let Some(r) = reference {
            for (x, y) in de.as_mut_slice().iter_mut().zip(r.embeddings.as_slice()) {
                *x -= y;
            }
        }
        for t in 0..t_len {
            let row = rg.row(t);
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            let q: Vec<f64> = (0..channels)
                .map(|j| {
                    let a = tr.pre[(t, j)] - base.map_or(0.0, |b| b.pre[(t, j)]);
                    row[j] / stabilize(a, eps)
                })
                .collect();
            scatter_conv(filter, t, half, &q, &de, &mut embeddings);
        }
        conv = Some(rg);
    }

    Ok(RelevanceState {
        mode,
        eps,
        root,
        representation,
        directions,
        conv,
        embeddings,
    })
}

pub fn lrp_explain(
    params: &NetworkParams,
    x: &TokenSequence,
    k: usize,
    eps: f64,
) -> Result<RelevanceMap> {
    let trace = forward(params, x)?;
    let state = propagate(params, &trace, None, k, eps)?;
    Ok(RelevanceMap::new(state.token_scores(), k, "lrp"))
}

/// DeepLIFT against the all-zero embedding matrix of the same length.
pub fn deeplift_explain(
    params: &NetworkParams,
    x: &TokenSequence,
    k: usize,
    eps: f64,
) -> Result<RelevanceMap> {
    let trace = forward(params, x)?;
    let reference = forward_embedded(params, &Matrix::zeros(trace.len(), params.embed_dim()))?;
    let state = propagate(params, &trace, Some(&reference), k, eps)?;
    Ok(RelevanceMap::new(state.token_scores(), k, "deeplift"))
}
