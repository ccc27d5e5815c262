//! Hand-written reverse-mode differentiation through a [`ForwardTrace`].

use crate::error::{Error, Result};
use crate::models::forward::{forward, ConvTrace, ForwardTrace, RecurrentTrace};
use crate::models::params::{Cell, ConvGate, NetworkParams, RecurrentGate};
use crate::models::vocab::TokenSequence;
use crate::numerics::Matrix;

/// Scalar being differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Unnormalised score `s(k, X)`.
    Score(usize),
    /// Probability `p(k | X)`.
    Probability(usize),
    /// `-log p(y | X)` for gold class `y`.
    CrossEntropy(usize),
}

impl Objective {
    fn class(self) -> usize {
        match self {
            Objective::Score(k) | Objective::Probability(k) | Objective::CrossEntropy(k) => k,
        }
    }

    pub fn value(self, trace: &ForwardTrace) -> f64 {
        match self {
            Objective::Score(k) => trace.scores[k],
            Objective::Probability(k) => trace.probs[k],
            Objective::CrossEntropy(k) => -trace.probs[k].max(f64::MIN_POSITIVE).ln(),
        }
    }

    /// Gradient of the objective with respect to the class scores.
    pub fn score_gradient(self, probs: &[f64]) -> Result<Vec<f64>> {
        let k = self.class();
        if k >= probs.len() {
            return Err(Error::ClassOutOfRange {
                class: k,
                classes: probs.len(),
            });
        }
        let mut d = vec![0.0; probs.len()];
        match self {
            Objective::Score(_) => d[k] = 1.0,
            Objective::Probability(_) => {
                // Jacobian of the softmax, row k
                for (j, dj) in d.iter_mut().enumerate() {
                    let delta = if j == k { 1.0 } else { 0.0 };
                    *dj = probs[k] * (delta - probs[j]);
                }
            }
            Objective::CrossEntropy(_) => {
                d.copy_from_slice(probs);
                d[k] -= 1.0;
            }
        }
        Ok(d)
    }
}

#[derive(Clone, Debug)]
pub struct Gradients {
    /// Same structure as the network; `None` if only input gradients were requested.
    /// The embedding table entry collects the gradient of every looked-up row.
    pub params: Option<NetworkParams>,
    /// `T x d_e` gradient with respect to the embedded input, original order.
    pub embeddings: Matrix,
}

/// Gradients of `objective` for token input `x`.
pub fn gradients(
    params: &NetworkParams,
    x: &TokenSequence,
    objective: Objective,
    with_params: bool,
) -> Result<Gradients> {
    let trace = forward(params, x)?;
    let d_scores = objective.score_gradient(&trace.probs)?;
    let mut grads = backward(params, &trace, &d_scores, with_params)?;
    if let Some(g) = grads.params.as_mut() {
        for (t, &id) in x.ids.iter().enumerate() {
            let row = g.embedding.row_mut(id);
            for (a, b) in row.iter_mut().zip(grads.embeddings.row(t)) {
                *a += b;
            }
        }
    }
    Ok(grads)
}

/// Backpropagates `d_scores` (the gradient with respect to the class
/// scores) through the trace.
pub fn backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    d_scores: &[f64],
    with_params: bool,
) -> Result<Gradients> {
    if d_scores.len() != params.classes() {
        return Err(Error::shape("score gradient length"));
    }
    let mut acc = with_params.then(|| params.zeros_like());
    let mut d_repr = vec![0.0; params.hidden_dim()];
    params.classifier.matvec_t_acc(d_scores, &mut d_repr);
    if let Some(g) = acc.as_mut() {
        g.classifier.add_outer(d_scores, &trace.representation);
        for (b, d) in g.classifier_bias.iter_mut().zip(d_scores) {
            *b += d;
        }
    }

    let t_len = trace.len();
    let d_e = params.embed_dim();
    let mut d_emb = Matrix::zeros(t_len, d_e);
    match (&trace.core, params.cells.as_slice()) {
        (crate::models::forward::CoreTrace::Conv(conv), [Cell::Cnn { filter }]) => {
            let g_filter = acc.as_mut().map(|g| match &mut g.cells[0] {
                Cell::Cnn { filter } => filter,
                _ => unreachable!(),
            });
            backward_cnn(
                filter,
                params.kernel_width,
                trace,
                conv,
                &d_repr,
                g_filter,
                &mut d_emb,
            );
        }
        (crate::models::forward::CoreTrace::Recurrent(dirs), cells) => {
            let d = params.direction_dim();
            for (di, (dir, cell)) in dirs.iter().zip(cells).enumerate() {
                let g_cell = acc.as_mut().map(|g| &mut g.cells[di]);
                let d_inputs =
                    backward_recurrent(cell, dir, &d_repr[di * d..(di + 1) * d], g_cell)?;
                for step in 0..t_len {
                    let pos = if di == 0 { step } else { t_len - 1 - step };
                    for (a, b) in d_emb.row_mut(pos).iter_mut().zip(d_inputs.row(step)) {
                        *a += b;
                    }
                }
            }
        }
        _ => return Err(Error::shape("trace does not match parameters")),
    }
    Ok(Gradients {
        params: acc,
        embeddings: d_emb,
    })
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

fn sigmoid_grad(d: &[f64], y: &[f64]) -> Vec<f64> {
    d.iter().zip(y).map(|(d, y)| d * y * (1.0 - y)).collect()
}

fn tanh_grad(d: &[f64], y: &[f64]) -> Vec<f64> {
    d.iter().zip(y).map(|(d, y)| d * (1.0 - y * y)).collect()
}

/// Accumulates the contribution of one affine gate: input gradient into
/// `d_e`, state gradient into `d_h`, weight gradients into `grad`.
fn affine_back(
    gate: &RecurrentGate,
    d_pre: &[f64],
    e: &[f64],
    h: &[f64],
    d_e: &mut [f64],
    d_h: &mut [f64],
    grad: Option<&mut RecurrentGate>,
) {
    gate.input.matvec_t_acc(d_pre, d_e);
    gate.recurrent.matvec_t_acc(d_pre, d_h);
    if let Some(g) = grad {
        g.input.add_outer(d_pre, e);
        g.recurrent.add_outer(d_pre, h);
        add_into(&mut g.bias, d_pre);
    }
}

/// Convolution backward for all positions at once; `d_pre` is `T x d`.
fn conv_back(
    gate: &ConvGate,
    shift: usize,
    inputs: &Matrix,
    d_pre: &[Vec<f64>],
    d_inputs: &mut Matrix,
    mut grad: Option<&mut ConvGate>,
) {
    let t_len = inputs.rows();
    for (t, dp) in d_pre.iter().enumerate() {
        for (k, tap) in gate.taps.iter().enumerate() {
            let Some(i) = (t + shift).checked_sub(k) else {
                continue;
            };
            if i >= t_len {
                continue;
            }
            tap.matvec_t_acc(dp, d_inputs.row_mut(i));
            if let Some(g) = grad.as_deref_mut() {
                g.taps[k].add_outer(dp, inputs.row(i));
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            add_into(&mut g.bias, dp);
        }
    }
}

fn backward_recurrent(
    cell: &Cell,
    tr: &RecurrentTrace,
    d_final: &[f64],
    mut grad: Option<&mut Cell>,
) -> Result<Matrix> {
    let t_len = tr.len();
    let d_e = tr.inputs.cols();
    let d = d_final.len();
    let mut d_inputs = Matrix::zeros(t_len, d_e);
    let mut dh = d_final.to_vec();
    let mut dc = vec![0.0; d];
    // QRNN pre-activation gradients, consumed by the convolution backward pass
    let mut d_pre: Vec<Vec<Vec<f64>>> = match cell {
        Cell::QGru { .. } => vec![vec![Vec::new(); t_len]; 2],
        Cell::QLstm { .. } => vec![vec![Vec::new(); t_len]; 4],
        _ => Vec::new(),
    };
    for step in (0..t_len).rev() {
        let e = tr.inputs.row(step);
        let h_prev = &tr.hidden[step];
        let mut dh_prev = vec![0.0; d];
        match cell {
            Cell::Gru {
                update,
                reset,
                candidate,
            } => {
                let (z, r, g) = (&tr.update[step], &tr.reset[step], &tr.candidate[step]);
                let dz: Vec<f64> = (0..d).map(|j| dh[j] * (h_prev[j] - g[j])).collect();
                let dg: Vec<f64> = (0..d).map(|j| dh[j] * (1.0 - z[j])).collect();
                add_into(&mut dh_prev, &mul(&dh, z));
                let dgp = tanh_grad(&dg, g);
                let rh = mul(r, h_prev);
                let mut d_rh = vec![0.0; d];
                let (gu, gr, gc) = match grad.as_deref_mut() {
                    Some(Cell::Gru {
                        update,
                        reset,
                        candidate,
                    }) => (Some(update), Some(reset), Some(candidate)),
                    _ => (None, None, None),
                };
                affine_back(
                    candidate,
                    &dgp,
                    e,
                    &rh,
                    d_inputs.row_mut(step),
                    &mut d_rh,
                    gc,
                );
                let dr = mul(&d_rh, h_prev);
                add_into(&mut dh_prev, &mul(&d_rh, r));
                let dzp = sigmoid_grad(&dz, z);
                let drp = sigmoid_grad(&dr, r);
                affine_back(
                    update,
                    &dzp,
                    e,
                    h_prev,
                    d_inputs.row_mut(step),
                    &mut dh_prev,
                    gu,
                );
                affine_back(
                    reset,
                    &drp,
                    e,
                    h_prev,
                    d_inputs.row_mut(step),
                    &mut dh_prev,
                    gr,
                );
            }
            Cell::QGru { .. } => {
                let (z, g) = (&tr.update[step], &tr.candidate[step]);
                let dz: Vec<f64> = (0..d).map(|j| dh[j] * (h_prev[j] - g[j])).collect();
                let dg: Vec<f64> = (0..d).map(|j| dh[j] * (1.0 - z[j])).collect();
                add_into(&mut dh_prev, &mul(&dh, z));
                d_pre[0][step] = sigmoid_grad(&dz, z);
                d_pre[1][step] = tanh_grad(&dg, g);
            }
            Cell::Lstm { .. } | Cell::QLstm { .. } => {
                let (i, f, o, g) = (
                    &tr.input_gate[step],
                    &tr.forget[step],
                    &tr.output[step],
                    &tr.candidate[step],
                );
                let c = &tr.cell[step + 1];
                let c_prev = &tr.cell[step];
                let tc: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
                let do_: Vec<f64> = mul(&dh, &tc);
                let dct: Vec<f64> = (0..d)
                    .map(|j| dc[j] + dh[j] * o[j] * (1.0 - tc[j] * tc[j]))
                    .collect();
                let di = mul(&dct, g);
                let dg = mul(&dct, i);
                let df = mul(&dct, c_prev);
                dc = mul(&dct, f);
                let dip = sigmoid_grad(&di, i);
                let dfp = sigmoid_grad(&df, f);
                let dop = sigmoid_grad(&do_, o);
                let dgp = tanh_grad(&dg, g);
                if let Cell::Lstm {
                    input,
                    forget,
                    output,
                    candidate,
                } = cell
                {
                    let (gi, gf, go, gc) = match grad.as_deref_mut() {
                        Some(Cell::Lstm {
                            input,
                            forget,
                            output,
                            candidate,
                        }) => (Some(input), Some(forget), Some(output), Some(candidate)),
                        _ => (None, None, None, None),
                    };
                    let row = d_inputs.row_mut(step);
                    affine_back(input, &dip, e, h_prev, row, &mut dh_prev, gi);
                    affine_back(forget, &dfp, e, h_prev, row, &mut dh_prev, gf);
                    affine_back(output, &dop, e, h_prev, row, &mut dh_prev, go);
                    affine_back(candidate, &dgp, e, h_prev, row, &mut dh_prev, gc);
                } else {
                    d_pre[0][step] = dip;
                    d_pre[1][step] = dfp;
                    d_pre[2][step] = dop;
                    d_pre[3][step] = dgp;
                }
            }
            Cell::Cnn { .. } => return Err(Error::shape("convolutional cell in a recurrent net")),
        }
        dh = dh_prev;
    }
    match cell {
        Cell::QGru { update, candidate } => {
            let (gu, gc) = match grad {
                Some(Cell::QGru { update, candidate }) => (Some(update), Some(candidate)),
                _ => (None, None),
            };
            conv_back(update, 0, &tr.inputs, &d_pre[0], &mut d_inputs, gu);
            conv_back(candidate, 0, &tr.inputs, &d_pre[1], &mut d_inputs, gc);
        }
        Cell::QLstm {
            input,
            forget,
            output,
            candidate,
        } => {
            let (gi, gf, go, gc) = match grad {
                Some(Cell::QLstm {
                    input,
                    forget,
                    output,
                    candidate,
                }) => (Some(input), Some(forget), Some(output), Some(candidate)),
                _ => (None, None, None, None),
            };
            conv_back(input, 0, &tr.inputs, &d_pre[0], &mut d_inputs, gi);
            conv_back(forget, 0, &tr.inputs, &d_pre[1], &mut d_inputs, gf);
            conv_back(output, 0, &tr.inputs, &d_pre[2], &mut d_inputs, go);
            conv_back(candidate, 0, &tr.inputs, &d_pre[3], &mut d_inputs, gc);
        }
        _ => {}
    }
    Ok(d_inputs)
}

fn backward_cnn(
    filter: &ConvGate,
    width: usize,
    trace: &ForwardTrace,
    conv: &ConvTrace,
    d_pooled: &[f64],
    grad: Option<&mut ConvGate>,
    d_emb: &mut Matrix,
) {
    let t_len = trace.len();
    let d = d_pooled.len();
    let mut d_pre = vec![vec![0.0; d]; t_len];
    for (j, &w) in conv.winners.iter().enumerate() {
        // max pooling routes to the recorded winner; relu'(0) = 0
        if conv.pre[(w, j)] > 0.0 {
            d_pre[w][j] = d_pooled[j];
        }
    }
    conv_back(
        filter,
        (width - 1) / 2,
        &trace.embeddings,
        &d_pre,
        d_emb,
        grad,
    );
}
