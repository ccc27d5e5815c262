use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Core layer type of a classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gru,
    QGru,
    Lstm,
    QLstm,
    Cnn,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Gru, Arch::QGru, Arch::Lstm, Arch::QLstm, Arch::Cnn];

    pub fn is_recurrent(self) -> bool {
        !matches!(self, Arch::Cnn)
    }

    /// Gates computed by convolution rather than from the previous state.
    pub fn is_quasi(self) -> bool {
        matches!(self, Arch::QGru | Arch::QLstm)
    }

    pub fn is_lstm_family(self) -> bool {
        matches!(self, Arch::Lstm | Arch::QLstm)
    }

    pub fn is_gru_family(self) -> bool {
        matches!(self, Arch::Gru | Arch::QGru)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Gru => "gru",
            Arch::QGru => "qgru",
            Arch::Lstm => "lstm",
            Arch::QLstm => "qlstm",
            Arch::Cnn => "cnn",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(Arch::Gru),
            "qgru" => Ok(Arch::QGru),
            "lstm" => Ok(Arch::Lstm),
            "qlstm" => Ok(Arch::QLstm),
            "cnn" => Ok(Arch::Cnn),
            other => Err(Error::invalid(format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Uni,
    Bi,
}

impl Direction {
    pub fn count(self) -> usize {
        match self {
            Direction::Uni => 1,
            Direction::Bi => 2,
        }
    }
}

/// Affine map feeding one gate or candidate of a recurrent cell:
/// `input * e_t + recurrent * state + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentGate {
    pub input: Matrix,
    pub recurrent: Matrix,
    pub bias: Vec<f64>,
}

/// One-dimensional convolution. `taps[k]` multiplies the input `k` steps
/// behind the output position for causal (QRNN) filters; for centred (CNN)
/// filters `taps[k]` multiplies the input `k - (F-1)/2` steps behind.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvGate {
    pub taps: Vec<Matrix>,
    pub bias: Vec<f64>,
}

/// Weights of the core layer for one direction.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Gru {
        update: RecurrentGate,
        reset: RecurrentGate,
        candidate: RecurrentGate,
    },
    Lstm {
        input: RecurrentGate,
        forget: RecurrentGate,
        output: RecurrentGate,
        candidate: RecurrentGate,
    },
    QGru {
        update: ConvGate,
        candidate: ConvGate,
    },
    QLstm {
        input: ConvGate,
        forget: ConvGate,
        output: ConvGate,
        candidate: ConvGate,
    },
    Cnn {
        filter: ConvGate,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub direction: Direction,
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Total hidden size; split evenly between directions.
    pub hidden_dim: usize,
    pub classes: usize,
    pub kernel_width: usize,
    /// Weights are drawn uniformly from `[-init_scale, init_scale)`.
    pub init_scale: f64,
}

impl ModelConfig {
    /// Desk-scale defaults: 16-dimensional embeddings and hidden layer, kernel width 5.
    pub fn new(arch: Arch, vocab_size: usize, classes: usize) -> Self {
        ModelConfig {
            arch,
            direction: if arch.is_recurrent() {
                Direction::Bi
            } else {
                Direction::Uni
            },
            vocab_size,
            embed_dim: 16,
            hidden_dim: 16,
            classes,
            kernel_width: 5,
            init_scale: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::invalid(
                "vocabulary, embedding and hidden sizes must be positive",
            ));
        }
        if self.classes < 1 {
            return Err(Error::invalid("need at least one class"));
        }
        if self.kernel_width == 0 || self.kernel_width.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "kernel width must be odd and positive, got {}",
                self.kernel_width
            )));
        }
        if self.arch == Arch::Cnn && self.direction == Direction::Bi {
            return Err(Error::invalid("a CNN has no direction; use uni"));
        }
        if !self.hidden_dim.is_multiple_of(self.direction.count()) {
            return Err(Error::invalid(format!(
                "hidden size {} does not split across {} directions",
                self.hidden_dim,
                self.direction.count()
            )));
        }
        Ok(())
    }
}

/// All weights of one classifier: embeddings, core layer (one cell per
/// direction) and the dense softmax head.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub arch: Arch,
    pub direction: Direction,
    pub kernel_width: usize,
    pub embedding: Matrix,
    pub cells: Vec<Cell>,
    /// `K x hidden` class weights; row `k` is `w_k`.
    pub classifier: Matrix,
    pub classifier_bias: Vec<f64>,
}

fn rand_gate(d: usize, d_in: usize, scale: f64, rng: &mut SeededRng) -> RecurrentGate {
    RecurrentGate {
        input: Matrix::random(d, d_in, scale, rng),
        recurrent: Matrix::random(d, d, scale, rng),
        bias: vec![0.0; d],
    }
}

fn rand_conv(d: usize, d_in: usize, width: usize, scale: f64, rng: &mut SeededRng) -> ConvGate {
    ConvGate {
        taps: (0..width)
            .map(|_| Matrix::random(d, d_in, scale, rng))
            .collect(),
        bias: vec![0.0; d],
    }
}

impl NetworkParams {
    /// Random initialisation: uniform weights, zero biases.
    pub fn init(config: &ModelConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let s = config.init_scale;
        let d_e = config.embed_dim;
        let d = config.hidden_dim / config.direction.count();
        let f = config.kernel_width;
        let embedding = Matrix::random(config.vocab_size, d_e, s, rng);
        let cells = (0..config.direction.count())
            .map(|_| match config.arch {
                Arch::Gru => Cell::Gru {
                    update: rand_gate(d, d_e, s, rng),
                    reset: rand_gate(d, d_e, s, rng),
                    candidate: rand_gate(d, d_e, s, rng),
                },
                Arch::Lstm => Cell::Lstm {
                    input: rand_gate(d, d_e, s, rng),
                    forget: rand_gate(d, d_e, s, rng),
                    output: rand_gate(d, d_e, s, rng),
                    candidate: rand_gate(d, d_e, s, rng),
                },
                Arch::QGru => Cell::QGru {
                    update: rand_conv(d, d_e, f, s, rng),
                    candidate: rand_conv(d, d_e, f, s, rng),
                },
                Arch::QLstm => Cell::QLstm {
                    input: rand_conv(d, d_e, f, s, rng),
                    forget: rand_conv(d, d_e, f, s, rng),
                    output: rand_conv(d, d_e, f, s, rng),
                    candidate: rand_conv(d, d_e, f, s, rng),
                },
                Arch::Cnn => Cell::Cnn {
                    filter: rand_conv(d, d_e, f, s, rng),
                },
            })
            .collect();
        let classifier = Matrix::random(config.classes, config.hidden_dim, s, rng);
        Ok(NetworkParams {
            arch: config.arch,
            direction: config.direction,
            kernel_width: f,
            embedding,
            cells,
            classifier,
            classifier_bias: vec![0.0; config.classes],
        })
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            arch: self.arch,
            direction: self.direction,
            vocab_size: self.vocab_size(),
            embed_dim: self.embed_dim(),
            hidden_dim: self.hidden_dim(),
            classes: self.classes(),
            kernel_width: self.kernel_width,
            init_scale: 0.0,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.classifier.cols()
    }

    /// Hidden size of a single direction (all of it for uni-directional nets and CNNs).
    pub fn direction_dim(&self) -> usize {
        self.hidden_dim() / self.cells.len().max(1)
    }

    pub fn classes(&self) -> usize {
        self.classifier.rows()
    }

    /// A zero-filled copy with the same structure; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(&mut |_, data| data.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, data| n += data.len());
        n
    }

    /// Visits every weight array in a fixed order with its name and shape.
    pub fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(
            "embedding",
            &[self.embedding.rows(), self.embedding.cols()],
            self.embedding.as_slice(),
        );
        for (di, cell) in self.cells.iter().enumerate() {
            for (gname, gate) in cell_parts(cell) {
                match gate {
                    GateRef::Recurrent(g) => {
                        f(
                            &format!("dir{di}.{gname}.input"),
                            &[g.input.rows(), g.input.cols()],
                            g.input.as_slice(),
                        );
                        f(
                            &format!("dir{di}.{gname}.recurrent"),
                            &[g.recurrent.rows(), g.recurrent.cols()],
                            g.recurrent.as_slice(),
                        );
                        f(&format!("dir{di}.{gname}.bias"), &[g.bias.len()], &g.bias);
                    }
                    GateRef::Conv(g) => {
                        for (k, tap) in g.taps.iter().enumerate() {
                            f(
                                &format!("dir{di}.{gname}.tap{k}"),
                                &[tap.rows(), tap.cols()],
                                tap.as_slice(),
                            );
                        }
                        f(&format!("dir{di}.{gname}.bias"), &[g.bias.len()], &g.bias);
                    }
                }
            }
        }
        f(
            "classifier",
            &[self.classifier.rows(), self.classifier.cols()],
            self.classifier.as_slice(),
        );
        f(
            "classifier_bias",
            &[self.classifier_bias.len()],
            &self.classifier_bias,
        );
    }

    /// Mutable counterpart of [`NetworkParams::visit`], same order.
    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("embedding", self.embedding.as_mut_slice());
        for (di, cell) in self.cells.iter_mut().enumerate() {
            for (gname, gate) in cell_parts_mut(cell) {
                match gate {
                    GateMut::Recurrent(g) => {
                        f(&format!("dir{di}.{gname}.input"), g.input.as_mut_slice());
                        f(
                            &format!("dir{di}.{gname}.recurrent"),
                            g.recurrent.as_mut_slice(),
                        );
                        f(&format!("dir{di}.{gname}.bias"), &mut g.bias);
                    }
                    GateMut::Conv(g) => {
                        for (k, tap) in g.taps.iter_mut().enumerate() {
                            f(&format!("dir{di}.{gname}.tap{k}"), tap.as_mut_slice());
                        }
                        f(&format!("dir{di}.{gname}.bias"), &mut g.bias);
                    }
                }
            }
        }
        f("classifier", self.classifier.as_mut_slice());
        f("classifier_bias", &mut self.classifier_bias);
    }

    /// All weights concatenated in visiting order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.visit(&mut |_, _, data| out.extend_from_slice(data));
        out
    }

    /// Overwrites all weights from a flat vector produced by [`NetworkParams::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.parameter_count()
            )));
        }
        let mut offset = 0;
        self.visit_mut(&mut |_, data| {
            data.copy_from_slice(&flat[offset..offset + data.len()]);
            offset += data.len();
        });
        Ok(())
    }

    /// Checks that every array has the shape implied by the architecture and dimensions.
    pub fn validate(&self) -> Result<()> {
        let config = self.config();
        config.validate()?;
        if self.cells.len() != self.direction.count() {
            return Err(Error::shape(format!(
                "{} cells for a {:?} network",
                self.cells.len(),
                self.direction
            )));
        }
        let d = self.direction_dim();
        let d_e = self.embed_dim();
        let f = self.kernel_width;
        let check = |ok: bool, what: String| if ok { Ok(()) } else { Err(Error::shape(what)) };
        for (di, cell) in self.cells.iter().enumerate() {
            if cell_arch(cell) != self.arch {
                return Err(Error::shape(format!(
                    "cell {di} does not match {}",
                    self.arch
                )));
            }
            for (gname, gate) in cell_parts(cell) {
                match gate {
                    GateRef::Recurrent(g) => {
                        check(
                            g.input.shape() == (d, d_e),
                            format!("dir{di}.{gname}.input"),
                        )?;
                        check(
                            g.recurrent.shape() == (d, d),
                            format!("dir{di}.{gname}.recurrent"),
                        )?;
                        check(g.bias.len() == d, format!("dir{di}.{gname}.bias"))?;
                    }
                    GateRef::Conv(g) => {
                        check(g.taps.len() == f, format!("dir{di}.{gname} tap count"))?;
                        for tap in &g.taps {
                            check(tap.shape() == (d, d_e), format!("dir{di}.{gname}.tap"))?;
                        }
                        check(g.bias.len() == d, format!("dir{di}.{gname}.bias"))?;
                    }
                }
            }
        }
        check(
            self.classifier_bias.len() == self.classes(),
            "classifier_bias".to_string(),
        )
    }
}

pub(crate) enum GateRef<'a> {
    Recurrent(&'a RecurrentGate),
    Conv(&'a ConvGate),
}

pub(crate) enum GateMut<'a> {
    Recurrent(&'a mut RecurrentGate),
    Conv(&'a mut ConvGate),
}

fn cell_arch(cell: &Cell) -> Arch {
    match cell {
        Cell::Gru { .. } => Arch::Gru,
        Cell::Lstm { .. } => Arch::Lstm,
        Cell::QGru { .. } => Arch::QGru,
        Cell::QLstm { .. } => Arch::QLstm,
        Cell::Cnn { .. } => Arch::Cnn,
    }
}

pub(crate) fn cell_parts(cell: &Cell) -> Vec<(&'static str, GateRef<'_>)> {
    use GateRef::{Conv, Recurrent};
    match cell {
        Cell::Gru {
            update,
            reset,
            candidate,
        } => vec![
            ("update", Recurrent(update)),
            ("reset", Recurrent(reset)),
            ("candidate", Recurrent(candidate)),
        ],
        Cell::Lstm {
            input,
            forget,
            output,
            candidate,
        } => vec![
            ("input", Recurrent(input)),
            ("forget", Recurrent(forget)),
            ("output", Recurrent(output)),
            ("candidate", Recurrent(candidate)),
        ],
        Cell::QGru { update, candidate } => {
            vec![("update", Conv(update)), ("candidate", Conv(candidate))]
        }
        Cell::QLstm {
            input,
            forget,
            output,
            candidate,
        } => vec![
            ("input", Conv(input)),
            ("forget", Conv(forget)),
            ("output", Conv(output)),
            ("candidate", Conv(candidate)),
        ],
        Cell::Cnn { filter } => vec![("filter", Conv(filter))],
    }
}

pub(crate) fn cell_parts_mut(cell: &mut Cell) -> Vec<(&'static str, GateMut<'_>)> {
    use GateMut::{Conv, Recurrent};
    match cell {
        Cell::Gru {
            update,
            reset,
            candidate,
        } => vec![
            ("update", Recurrent(update)),
            ("reset", Recurrent(reset)),
            ("candidate", Recurrent(candidate)),
        ],
        Cell::Lstm {
            input,
            forget,
            output,
            candidate,
        } => vec![
            ("input", Recurrent(input)),
            ("forget", Recurrent(forget)),
            ("output", Recurrent(output)),
            ("candidate", Recurrent(candidate)),
        ],
        Cell::QGru { update, candidate } => {
            vec![("update", Conv(update)), ("candidate", Conv(candidate))]
        }
        Cell::QLstm {
            input,
            forget,
            output,
            candidate,
        } => vec![
            ("input", Conv(input)),
            ("forget", Conv(forget)),
            ("output", Conv(output)),
            ("candidate", Conv(candidate)),
        ],
        Cell::Cnn { filter } => vec![("filter", Conv(filter))],
    }
}
