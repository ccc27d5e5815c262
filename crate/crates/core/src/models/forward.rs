//! Forward passes for the five core architectures.
//!
//! Recurrent directions consume their inputs in processing order; the
//! backward direction of a bi-directional net sees the reversed sequence and
//! its final state is concatenated after the forward direction's:
//! `h(X) = [h_T^fwd ; h_T^bwd]`. The CNN uses symmetric zero padding of
//! `(F-1)/2` rows and global max pooling after relu; QRNN gates use causal
//! convolutions over `F-1` leading zero rows.

use crate::error::{Error, Result};
use crate::models::params::{Arch, Cell, ConvGate, NetworkParams, RecurrentGate};
use crate::models::vocab::TokenSequence;
use crate::numerics::{sigmoid, softmax, Matrix};

/// Activations of one recurrent direction.
///
/// Per-step vectors (gates, candidate) are indexed by `t - 1` for step `t`
/// in `1..=T`. States (`hidden`, `cell`) hold `T + 1` entries with the
/// zero initial state at index 0. Vectors that the architecture does not
/// use are left empty.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentTrace {
    /// Embeddings in processing order.
    pub inputs: Matrix,
    pub update: Vec<Vec<f64>>,
    pub reset: Vec<Vec<f64>>,
    pub input_gate: Vec<Vec<f64>>,
    pub forget: Vec<Vec<f64>>,
    pub output: Vec<Vec<f64>>,
    /// Candidate pre-activation `g'`.
    pub candidate_pre: Vec<Vec<f64>>,
    /// Candidate `g = tanh(g')`.
    pub candidate: Vec<Vec<f64>>,
    pub cell: Vec<Vec<f64>>,
    pub hidden: Vec<Vec<f64>>,
}

impl RecurrentTrace {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn final_hidden(&self) -> &[f64] {
        self.hidden.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Activations of the convolutional core (`T x channels`).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvTrace {
    pub pre: Matrix,
    pub act: Matrix,
    /// Per channel, the first time step attaining the pooled maximum.
    pub winners: Vec<usize>,
    pub pooled: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CoreTrace {
    /// One entry per direction, forward direction first.
    Recurrent(Vec<RecurrentTrace>),
    Conv(ConvTrace),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `T x d_e`, original token order.
    pub embeddings: Matrix,
    pub core: CoreTrace,
    /// Document representation `h(X)`.
    pub representation: Vec<f64>,
    /// Unnormalised class scores `s(k, X)`.
    pub scores: Vec<f64>,
    /// Class probabilities `p(k | X)`.
    pub probs: Vec<f64>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.rows() == 0
    }

    pub fn predicted_class(&self) -> usize {
        crate::numerics::argmax(&self.probs).unwrap_or(0)
    }

    pub fn recurrent(&self) -> Option<&[RecurrentTrace]> {
        match &self.core {
            CoreTrace::Recurrent(dirs) => Some(dirs),
            CoreTrace::Conv(_) => None,
        }
    }

    pub fn conv(&self) -> Option<&ConvTrace> {
        match &self.core {
            CoreTrace::Conv(c) => Some(c),
            CoreTrace::Recurrent(_) => None,
        }
    }
}

/// Looks up the embedding row of every token.
pub fn embed(params: &NetworkParams, x: &TokenSequence) -> Result<Matrix> {
    x.check(params.vocab_size())?;
    let d_e = params.embed_dim();
    let mut out = Matrix::zeros(x.len(), d_e);
    for (t, &id) in x.ids.iter().enumerate() {
        out.row_mut(t).copy_from_slice(params.embedding.row(id));
    }
    Ok(out)
}

pub fn forward(params: &NetworkParams, x: &TokenSequence) -> Result<ForwardTrace> {
    let e = embed(params, x)?;
    forward_embedded(params, &e)
}

/// Runs the network on an explicit embedding matrix (which need not
/// correspond to any token sequence).
pub fn forward_embedded(params: &NetworkParams, embeddings: &Matrix) -> Result<ForwardTrace> {
    if embeddings.rows() == 0 {
        return Err(Error::Empty("input sequence"));
    }
    if embeddings.cols() != params.embed_dim() {
        return Err(Error::shape(format!(
            "embeddings have {} columns, network expects {}",
            embeddings.cols(),
            params.embed_dim()
        )));
    }
    if params.cells.len() != params.direction.count() {
        return Err(Error::shape("cell count does not match direction"));
    }
    let (core, representation) = match params.arch {
        Arch::Cnn => {
            let Cell::Cnn { filter } = &params.cells[0] else {
                return Err(Error::shape("CNN parameters expected"));
            };
            let conv = run_cnn(filter, params.kernel_width, embeddings);
            let pooled = conv.pooled.clone();
            (CoreTrace::Conv(conv), pooled)
        }
        _ => {
            let mut dirs = Vec::with_capacity(params.cells.len());
            let mut repr = Vec::with_capacity(params.hidden_dim());
            for (di, cell) in params.cells.iter().enumerate() {
                let inputs = if di == 0 {
                    embeddings.clone()
                } else {
                    reversed(embeddings)
                };
                let tr = run_recurrent(cell, inputs)?;
                repr.extend_from_slice(tr.final_hidden());
                dirs.push(tr);
            }
            (CoreTrace::Recurrent(dirs), repr)
        }
    };
    let (scores, probs) = class_outputs(params, &representation)?;
    Ok(ForwardTrace {
        embeddings: embeddings.clone(),
        core,
        representation,
        scores,
        probs,
    })
}

/// `s = W h + b`, `p = softmax(s)`.
pub fn class_outputs(
    params: &NetworkParams,
    representation: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if representation.len() != params.hidden_dim() {
        return Err(Error::shape(format!(
            "representation of length {} for hidden size {}",
            representation.len(),
            params.hidden_dim()
        )));
    }
    let mut scores = params.classifier.matvec(representation);
    for (s, b) in scores.iter_mut().zip(&params.classifier_bias) {
        *s += b;
    }
    let probs = softmax(&scores)?;
    Ok((scores, probs))
}

/// Document representation of a zero-length input: the zero initial state
/// for (Q)RNNs, and for the CNN the activation of a window that sees only
/// padding, `relu(b)`.
pub fn empty_representation(params: &NetworkParams) -> Vec<f64> {
    match (&params.arch, params.cells.first()) {
        (Arch::Cnn, Some(Cell::Cnn { filter })) => filter.bias.iter().map(|b| b.max(0.0)).collect(),
        _ => vec![0.0; params.hidden_dim()],
    }
}

/// Class scores for an embedding matrix of any length, including zero.
pub fn scores_embedded(params: &NetworkParams, embeddings: &Matrix) -> Result<Vec<f64>> {
    if embeddings.rows() == 0 {
        Ok(class_outputs(params, &empty_representation(params))?.0)
    } else {
        Ok(forward_embedded(params, embeddings)?.scores)
    }
}

pub(crate) fn reversed(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    let t = m.rows();
    for i in 0..t {
        out.row_mut(i).copy_from_slice(m.row(t - 1 - i));
    }
    out
}

fn affine(gate: &RecurrentGate, e: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = gate.bias.clone();
    gate.input.matvec_acc(e, &mut out);
    gate.recurrent.matvec_acc(h, &mut out);
    out
}

/// Convolution output at position `t`: `sum_k taps[k] * inputs[t + shift - k] + bias`,
/// with out-of-range rows treated as zero padding.
pub(crate) fn conv_at(gate: &ConvGate, inputs: &Matrix, t: usize, shift: usize) -> Vec<f64> {
    let mut out = gate.bias.clone();
    for (k, tap) in gate.taps.iter().enumerate() {
        if let Some(i) = (t + shift).checked_sub(k) {
            if i < inputs.rows() {
                tap.matvec_acc(inputs.row(i), &mut out);
            }
        }
    }
    out
}

fn map(v: Vec<f64>, f: impl Fn(f64) -> f64) -> Vec<f64> {
    v.into_iter().map(f).collect()
}

fn run_recurrent(cell: &Cell, inputs: Matrix) -> Result<RecurrentTrace> {
    let t_len = inputs.rows();
    let d = match cell {
        Cell::Gru { candidate, .. } | Cell::Lstm { candidate, .. } => candidate.bias.len(),
        Cell::QGru { candidate, .. } | Cell::QLstm { candidate, .. } => candidate.bias.len(),
        Cell::Cnn { .. } => return Err(Error::shape("convolutional cell in a recurrent net")),
    };
    let mut tr = RecurrentTrace {
        inputs,
        update: Vec::new(),
        reset: Vec::new(),
        input_gate: Vec::new(),
        forget: Vec::new(),
        output: Vec::new(),
        candidate_pre: Vec::with_capacity(t_len),
        candidate: Vec::with_capacity(t_len),
        cell: Vec::new(),
        hidden: vec![vec![0.0; d]],
    };
    let lstm_like = matches!(cell, Cell::Lstm { .. } | Cell::QLstm { .. });
    if lstm_like {
        tr.cell.push(vec![0.0; d]);
    }
    for step in 0..t_len {
        let e = tr.inputs.row(step).to_vec();
        let h_prev = tr.hidden[step].clone();
        match cell {
            Cell::Gru {
                update,
                reset,
                candidate,
            } => {
                let z = map(affine(update, &e, &h_prev), sigmoid);
                let r = map(affine(reset, &e, &h_prev), sigmoid);
                let rh: Vec<f64> = r.iter().zip(&h_prev).map(|(a, b)| a * b).collect();
                let gp = affine(candidate, &e, &rh);
                let g = map(gp.clone(), f64::tanh);
                let h = (0..d)
                    .map(|j| z[j] * h_prev[j] + (1.0 - z[j]) * g[j])
                    .collect();
                tr.update.push(z);
                tr.reset.push(r);
                tr.candidate_pre.push(gp);
                tr.candidate.push(g);
                tr.hidden.push(h);
            }
            Cell::QGru { update, candidate } => {
                let z = map(conv_at(update, &tr.inputs, step, 0), sigmoid);
                let gp = conv_at(candidate, &tr.inputs, step, 0);
                let g = map(gp.clone(), f64::tanh);
                let h = (0..d)
                    .map(|j| z[j] * h_prev[j] + (1.0 - z[j]) * g[j])
                    .collect();
                tr.update.push(z);
                tr.candidate_pre.push(gp);
                tr.candidate.push(g);
                tr.hidden.push(h);
            }
            Cell::Lstm {
                input,
                forget,
                output,
                candidate,
            } => {
                let i = map(affine(input, &e, &h_prev), sigmoid);
                let f = map(affine(forget, &e, &h_prev), sigmoid);
                let o = map(affine(output, &e, &h_prev), sigmoid);
                let gp = affine(candidate, &e, &h_prev);
                let g = map(gp.clone(), f64::tanh);
                push_lstm_state(&mut tr, i, f, o, gp, g, step);
            }
            Cell::QLstm {
                input,
                forget,
                output,
                candidate,
            } => {
                let i = map(conv_at(input, &tr.inputs, step, 0), sigmoid);
                let f = map(conv_at(forget, &tr.inputs, step, 0), sigmoid);
                let o = map(conv_at(output, &tr.inputs, step, 0), sigmoid);
                let gp = conv_at(candidate, &tr.inputs, step, 0);
                let g = map(gp.clone(), f64::tanh);
                push_lstm_state(&mut tr, i, f, o, gp, g, step);
            }
            Cell::Cnn { .. } => unreachable!(),
        }
    }
    Ok(tr)
}

fn push_lstm_state(
    tr: &mut RecurrentTrace,
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    gp: Vec<f64>,
    g: Vec<f64>,
    step: usize,
) {
    let c_prev = &tr.cell[step];
    let c: Vec<f64> = (0..g.len())
        .map(|j| f[j] * c_prev[j] + i[j] * g[j])
        .collect();
    let h = (0..g.len()).map(|j| o[j] * c[j].tanh()).collect();
    tr.input_gate.push(i);
    tr.forget.push(f);
    tr.output.push(o);
    tr.candidate_pre.push(gp);
    tr.candidate.push(g);
    tr.cell.push(c);
    tr.hidden.push(h);
}

fn run_cnn(filter: &ConvGate, width: usize, inputs: &Matrix) -> ConvTrace {
    let t_len = inputs.rows();
    let d = filter.bias.len();
    let half = (width - 1) / 2;
    let mut pre = Matrix::zeros(t_len, d);
    let mut act = Matrix::zeros(t_len, d);
    for t in 0..t_len {
        let gp = conv_at(filter, inputs, t, half);
        for (j, v) in gp.into_iter().enumerate() {
            pre[(t, j)] = v;
            act[(t, j)] = v.max(0.0);
        }
    }
    let mut winners = vec![0; d];
    let mut pooled = vec![f64::NEG_INFINITY; d];
    for t in 0..t_len {
        for j in 0..d {
            if act[(t, j)] > pooled[j] {
                pooled[j] = act[(t, j)];
                winners[j] = t;
            }
        }
    }
    ConvTrace {
        pre,
        act,
        winners,
        pooled,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::params::{Direction, ModelConfig};
    use crate::numerics::SeededRng;

    fn random_params(arch: Arch, direction: Direction, seed: u64) -> NetworkParams {
        let mut cfg = ModelConfig::new(arch, 11, 3);
        cfg.direction = direction;
        cfg.embed_dim = 3;
        cfg.hidden_dim = if direction == Direction::Bi { 8 } else { 4 };
        cfg.kernel_width = 3;
        cfg.init_scale = 0.8;
        let mut rng = SeededRng::new(seed);
        let mut p = NetworkParams::init(&cfg, &mut rng).unwrap();
        // nonzero biases exercise every term
        p.visit_mut(&mut |name, data| {
            if name.ends_with("bias") {
                for v in data.iter_mut() {
                    *v = rng.uniform_range(-0.5, 0.5);
                }
            }
        });
        p
    }

    #[test]
    fn embed_rows_and_empty() {
        let p = random_params(Arch::Gru, Direction::Uni, 1);
        let e = embed(&p, &TokenSequence::new(vec![])).unwrap();
        assert_eq!(e.shape(), (0, 3));
        let e = embed(&p, &TokenSequence::new(vec![4, 2, 4])).unwrap();
        assert_eq!(e.row(0), p.embedding.row(4));
        assert_eq!(e.row(1), p.embedding.row(2));
        assert_eq!(e.row(0), e.row(2));
        assert!(matches!(
            embed(&p, &TokenSequence::new(vec![11])),
            Err(Error::TokenOutOfRange { .. })
        ));
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let p = random_params(Arch::Lstm, Direction::Uni, 1);
        assert!(forward(&p, &TokenSequence::default()).is_err());
    }

    #[test]
    fn zero_lstm_stays_at_zero() {
        let mut p = random_params(Arch::Lstm, Direction::Uni, 2);
        p = p.zeros_like();
        let tr = forward(&p, &TokenSequence::new(vec![1, 2, 3])).unwrap();
        let dir = &tr.recurrent().unwrap()[0];
        for t in 0..3 {
            for gate in [&dir.input_gate, &dir.forget, &dir.output] {
                assert!(gate[t].iter().all(|&v| v == 0.5));
            }
            assert!(dir.candidate[t].iter().all(|&v| v == 0.0));
            assert!(dir.cell[t + 1].iter().all(|&v| v == 0.0));
            assert!(dir.hidden[t + 1].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn saturated_update_gate_freezes_gru() {
        let mut p = random_params(Arch::Gru, Direction::Uni, 3);
        if let Cell::Gru { update, .. } = &mut p.cells[0] {
            update.bias.iter_mut().for_each(|b| *b = 1e3);
        }
        let tr = forward(&p, &TokenSequence::new(vec![1, 5, 7, 2])).unwrap();
        for h in &tr.recurrent().unwrap()[0].hidden {
            assert!(h.iter().all(|&v| v == 0.0));
        }
    }

    /// Scalar re-implementation of the LSTM recursion, written independently
    /// of the vectorised code path.
    #[test]
    fn lstm_matches_scalar_oracle() {
        let mut cfg = ModelConfig::new(Arch::Lstm, 9, 2);
        cfg.direction = Direction::Uni;
        cfg.embed_dim = 3;
        cfg.hidden_dim = 4;
        cfg.init_scale = 0.7;
        let mut rng = SeededRng::new(77);
        let mut p = NetworkParams::init(&cfg, &mut rng).unwrap();
        p.visit_mut(&mut |name, data| {
            if name.ends_with("bias") {
                data.iter_mut()
                    .for_each(|v| *v = rng.uniform_range(-0.3, 0.3));
            }
        });
        let x = TokenSequence::new(vec![3, 1, 8, 0, 3]);
        let tr = forward(&p, &x).unwrap();
        let Cell::Lstm {
            input,
            forget,
            output,
            candidate,
        } = &p.cells[0]
        else {
            unreachable!()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |g: &RecurrentGate, e: &[f64], h: &[f64], j: usize| {
            let mut s = g.bias[j];
            for (m, em) in e.iter().enumerate() {
                s += g.input[(j, m)] * em;
            }
            for (m, hm) in h.iter().enumerate() {
                s += g.recurrent[(j, m)] * hm;
            }
            s
        };
        let mut h = vec![0.0; 4];
        let mut c = vec![0.0; 4];
        for (t, &id) in x.ids.iter().enumerate() {
            let e = p.embedding.row(id);
            let mut hn = vec![0.0; 4];
            let mut cn = vec![0.0; 4];
            for j in 0..4 {
                let i = sig(pre(input, e, &h, j));
                let f = sig(pre(forget, e, &h, j));
                let o = sig(pre(output, e, &h, j));
                let g = pre(candidate, e, &h, j).tanh();
                cn[j] = f * c[j] + i * g;
                hn[j] = o * cn[j].tanh();
                let dir = &tr.recurrent().unwrap()[0];
                assert!((dir.input_gate[t][j] - i).abs() < 1e-14);
                assert!((dir.forget[t][j] - f).abs() < 1e-14);
                assert!((dir.output[t][j] - o).abs() < 1e-14);
            }
            h = hn;
            c = cn;
            let dir = &tr.recurrent().unwrap()[0];
            for j in 0..4 {
                assert!((dir.hidden[t + 1][j] - h[j]).abs() < 1e-14);
                assert!((dir.cell[t + 1][j] - c[j]).abs() < 1e-14);
            }
        }
        let total: f64 = tr.probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_classifier_gives_bias_scores() {
        let mut p = random_params(Arch::QLstm, Direction::Bi, 4);
        p.classifier = Matrix::zeros(3, p.hidden_dim());
        p.classifier_bias = vec![0.3, -1.0, 2.0];
        let tr = forward(&p, &TokenSequence::new(vec![1, 2])).unwrap();
        assert_eq!(tr.scores, p.classifier_bias);
        p.classifier_bias = vec![0.0; 3];
        let tr = forward(&p, &TokenSequence::new(vec![1, 2])).unwrap();
        for v in tr.probs {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        for arch in Arch::ALL {
            let dir = if arch.is_recurrent() {
                Direction::Bi
            } else {
                Direction::Uni
            };
            let p = random_params(arch, dir, 9);
            let x = TokenSequence::new(vec![1, 4, 9, 9, 3, 0]);
            let a = forward(&p, &x).unwrap();
            let b = forward(&p, &x).unwrap();
            assert_eq!(a, b);
            let bits = |t: &ForwardTrace| t.scores.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn cnn_pooling_winners_attain_maximum() {
        let p = random_params(Arch::Cnn, Direction::Uni, 12);
        let tr = forward(&p, &TokenSequence::new(vec![1, 4, 9, 9, 3, 0, 7])).unwrap();
        let conv = tr.conv().unwrap();
        for j in 0..conv.pooled.len() {
            assert_eq!(conv.act[(conv.winners[j], j)], conv.pooled[j]);
            for t in 0..tr.len() {
                assert!(conv.act[(t, j)] <= conv.pooled[j]);
            }
        }
    }

    #[test]
    fn qrnn_gates_are_causal() {
        for arch in [Arch::QGru, Arch::QLstm] {
            let p = random_params(arch, Direction::Uni, 21);
            let x = TokenSequence::new(vec![1, 2, 3, 4, 5, 6, 7, 8]);
            let a = forward(&p, &x).unwrap();
            let mut y = x.clone();
            let changed = 5;
            y.ids[changed] = 10;
            let b = forward(&p, &y).unwrap();
            let (da, db) = (&a.recurrent().unwrap()[0], &b.recurrent().unwrap()[0]);
            for t in 0..changed {
                assert_eq!(da.candidate_pre[t], db.candidate_pre[t]);
                assert_eq!(da.hidden[t + 1], db.hidden[t + 1]);
            }
            // gates at t depend on x_{t-F+1..t} only
            assert_ne!(da.candidate_pre[changed], db.candidate_pre[changed]);
        }
    }

    #[test]
    fn bidirectional_halves_match_unidirectional_runs() {
        for arch in [Arch::Gru, Arch::QGru, Arch::Lstm, Arch::QLstm] {
            let bi = random_params(arch, Direction::Bi, 31);
            let x = TokenSequence::new(vec![2, 7, 1, 1, 9, 4]);
            let full = forward(&bi, &x).unwrap();
            let mut uni = bi.clone();
            uni.direction = Direction::Uni;
            uni.classifier = Matrix::zeros(3, 4);
            let fwd_cells = vec![bi.cells[0].clone()];
            let bwd_cells = vec![bi.cells[1].clone()];
            uni.cells = fwd_cells;
            let left = forward(&uni, &x).unwrap();
            uni.cells = bwd_cells;
            let mut rev = x.clone();
            rev.ids.reverse();
            let right = forward(&uni, &rev).unwrap();
            assert_eq!(&full.representation[..4], &left.representation[..]);
            assert_eq!(&full.representation[4..], &right.representation[..]);
        }
    }

    #[test]
    fn empty_scores_use_initial_state() {
        let p = random_params(Arch::Gru, Direction::Bi, 5);
        let s = scores_embedded(&p, &Matrix::zeros(0, 3)).unwrap();
        assert_eq!(s, p.classifier_bias);
        let p = random_params(Arch::Cnn, Direction::Uni, 5);
        let s = scores_embedded(&p, &Matrix::zeros(0, 3)).unwrap();
        let Cell::Cnn { filter } = &p.cells[0] else {
            unreachable!()
        };
        let h: Vec<f64> = filter.bias.iter().map(|b| b.max(0.0)).collect();
        assert_eq!(s, class_outputs(&p, &h).unwrap().0);
    }
}
