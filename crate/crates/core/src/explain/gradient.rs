//! Gradient explainers: simple or integrated gradients of the class score or
//! probability, reduced per token by L2 norm or by dot product with the
//! embedding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::RelevanceMap;
use crate::models::{backward, embed, forward_embedded, NetworkParams, Objective, TokenSequence};
use crate::numerics::{dot, norm2, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradVariant {
    Simple,
    Integrated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GradOutput {
    Score,
    Probability,
}

impl GradOutput {
    pub fn objective(self, k: usize) -> Objective {
        match self {
            GradOutput::Score => Objective::Score(k),
            GradOutput::Probability => Objective::Probability(k),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reduction {
    L2,
    Dot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GradConfig {
    pub variant: GradVariant,
    pub output: GradOutput,
    pub reduction: Reduction,
    /// Riemann steps for the integrated variant.
    pub steps: usize,
}

impl GradConfig {
    pub const DEFAULT_STEPS: usize = 50;

    pub fn new(variant: GradVariant, output: GradOutput, reduction: Reduction) -> Self {
        GradConfig {
            variant,
            output,
            reduction,
            steps: Self::DEFAULT_STEPS,
        }
    }

    /// All eight combinations, simple before integrated, score before probability, L2 before dot.
    pub fn all() -> Vec<GradConfig> {
        let mut out = Vec::with_capacity(8);
        for variant in [GradVariant::Simple, GradVariant::Integrated] {
            for output in [GradOutput::Score, GradOutput::Probability] {
                for reduction in [Reduction::L2, Reduction::Dot] {
                    out.push(GradConfig::new(variant, output, reduction));
                }
            }
        }
        out
    }

    pub fn tag(&self) -> String {
        format!(
            "{}_{}_{}",
            match self.variant {
                GradVariant::Simple => "grad1",
                GradVariant::Integrated => "gradint",
            },
            match self.output {
                GradOutput::Score => "s",
                GradOutput::Probability => "p",
            },
            match self.reduction {
                Reduction::L2 => "l2",
                Reduction::Dot => "dot",
            }
        )
    }
}

/// `T x d_e` matrix of `d o(k, E) / d e_{t,j}` at the given embeddings.
pub fn embedding_gradients(
    params: &NetworkParams,
    embeddings: &Matrix,
    output: GradOutput,
    k: usize,
) -> Result<Matrix> {
    let trace = forward_embedded(params, embeddings)?;
    let d_scores = output.objective(k).score_gradient(&trace.probs)?;
    Ok(backward(params, &trace, &d_scores, false)?.embeddings)
}

/// Right-endpoint Riemann average of the gradients along the straight path
/// from the all-zero embedding matrix to `embeddings`:
/// `(1/M) sum_{m=1..M} grad(m/M * E)`.
pub fn integrated_gradients(
    params: &NetworkParams,
    embeddings: &Matrix,
    output: GradOutput,
    k: usize,
    steps: usize,
) -> Result<Matrix> {
    if steps == 0 {
        return Err(Error::invalid(
            "integrated gradients need at least one step",
        ));
    }
    let mut total = Matrix::zeros(embeddings.rows(), embeddings.cols());
    for m in 1..=steps {
        let mut scaled = embeddings.clone();
        scaled.scale(m as f64 / steps as f64);
        let g = embedding_gradients(params, &scaled, output, k)?;
        for (a, b) in total.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *a += b;
        }
    }
    total.scale(1.0 / steps as f64);
    Ok(total)
}

/// One score per row: `||G_t||` or `E_t . G_t`.
pub fn reduce(gradients: &Matrix, embeddings: &Matrix, reduction: Reduction) -> Result<Vec<f64>> {
    if gradients.shape() != embeddings.shape() {
        return Err(Error::shape(format!(
            "gradients {:?} vs embeddings {:?}",
            gradients.shape(),
            embeddings.shape()
        )));
    }
    Ok(match reduction {
        Reduction::L2 => gradients.row_iter().map(norm2).collect(),
        Reduction::Dot => gradients
            .row_iter()
            .zip(embeddings.row_iter())
            .map(|(g, e)| dot(g, e))
            .collect(),
    })
}

pub fn explain_gradient(
    params: &NetworkParams,
    x: &TokenSequence,
    k: usize,
    config: &GradConfig,
) -> Result<RelevanceMap> {
    let e = embed(params, x)?;
    let scores = gradient_scores(params, &e, k, config)?;
    Ok(RelevanceMap::new(scores, k, config.tag()))
}

pub fn gradient_scores(
    params: &NetworkParams,
    e: &Matrix,
    k: usize,
    config: &GradConfig,
) -> Result<Vec<f64>> {
    let g = match config.variant {
        GradVariant::Simple => embedding_gradients(params, e, config.output, k)?,
        GradVariant::Integrated => integrated_gradients(params, e, config.output, k, config.steps)?,
    };
    // the zero baseline makes e_t - ebar_t = e_t for the integrated dot product
    reduce(&g, e, config.reduction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{forward, Arch, Cell, Direction, ModelConfig};
    use crate::numerics::SeededRng;

    fn model(arch: Arch, seed: u64) -> NetworkParams {
        let mut cfg = ModelConfig::new(arch, 10, 2);
        cfg.embed_dim = 4;
        cfg.hidden_dim = if arch.is_recurrent() { 6 } else { 5 };
        cfg.kernel_width = 3;
        cfg.init_scale = 0.8;
        if !arch.is_recurrent() {
            cfg.direction = Direction::Uni;
        }
        NetworkParams::init(&cfg, &mut SeededRng::new(seed)).unwrap()
    }

    #[test]
    fn reductions_on_trivial_inputs() {
        let e = Matrix::from_vec(2, 2, vec![1.0, 2.0, 0.0, 0.0]).unwrap();
        let zero = Matrix::zeros(2, 2);
        assert_eq!(reduce(&zero, &e, Reduction::L2).unwrap(), vec![0.0, 0.0]);
        assert_eq!(reduce(&zero, &e, Reduction::Dot).unwrap(), vec![0.0, 0.0]);
        let g = Matrix::from_vec(2, 2, vec![3.0, -4.0, 5.0, 1.0]).unwrap();
        assert_eq!(
            reduce(&g, &e, Reduction::L2).unwrap(),
            vec![5.0, 26f64.sqrt()]
        );
        // zero embedding row scores 0 under dot whatever the gradient
        assert_eq!(reduce(&g, &e, Reduction::Dot).unwrap()[1], 0.0);
        assert_eq!(reduce(&e, &e, Reduction::Dot).unwrap()[0], 5.0);
        assert!(reduce(&g, &Matrix::zeros(3, 2), Reduction::Dot).is_err());
    }

    #[test]
    fn constant_model_gives_zero_maps() {
        let mut p = model(Arch::Lstm, 1);
        p.classifier = Matrix::zeros(2, p.hidden_dim());
        let x = TokenSequence::new(vec![1, 2, 3]);
        for cfg in GradConfig::all() {
            let m = explain_gradient(&p, &x, 0, &cfg).unwrap();
            assert!(m.scores.iter().all(|&v| v == 0.0), "{}", cfg.tag());
        }
    }

    #[test]
    fn single_step_integration_is_the_simple_gradient() {
        let p = model(Arch::Gru, 2);
        let e = embed(&p, &TokenSequence::new(vec![4, 1, 7])).unwrap();
        let a = integrated_gradients(&p, &e, GradOutput::Score, 1, 1).unwrap();
        let b = embedding_gradients(&p, &e, GradOutput::Score, 1).unwrap();
        assert_eq!(a, b);
        assert!(integrated_gradients(&p, &e, GradOutput::Score, 1, 0).is_err());
    }

    /// A CNN whose max-pooling winners never change along the path and whose
    /// relu units stay active is linear in the embeddings.
    fn linear_cnn() -> NetworkParams {
        let mut p = model(Arch::Cnn, 3);
        let Cell::Cnn { filter } = &mut p.cells[0] else {
            unreachable!()
        };
        for tap in &mut filter.taps {
            tap.as_mut_slice().iter_mut().for_each(|v| *v = v.abs());
        }
        p.embedding
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = v.abs() + 0.05);
        p
    }

    #[test]
    fn linear_model_gradients_do_not_depend_on_steps() {
        let p = linear_cnn();
        let e = embed(&p, &TokenSequence::new(vec![2, 9, 5, 5])).unwrap();
        let g1 = embedding_gradients(&p, &e, GradOutput::Score, 0).unwrap();
        for steps in [1, 7, 50] {
            let gi = integrated_gradients(&p, &e, GradOutput::Score, 0, steps).unwrap();
            for (a, b) in gi.as_slice().iter().zip(g1.as_slice()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn completeness_on_score_output() {
        for arch in [Arch::Cnn, Arch::Gru, Arch::QLstm] {
            let p = model(arch, 4);
            let x = TokenSequence::new(vec![1, 8, 3, 6]);
            let e = embed(&p, &x).unwrap();
            let ig = integrated_gradients(&p, &e, GradOutput::Score, 1, 500).unwrap();
            let total: f64 = reduce(&ig, &e, Reduction::Dot).unwrap().iter().sum();
            let s = forward(&p, &x).unwrap().scores[1];
            let s0 = forward_embedded(&p, &Matrix::zeros(4, 4)).unwrap().scores[1];
            assert!(
                (total - (s - s0)).abs() <= 0.01 * (s - s0).abs(),
                "{arch}: {total} vs {}",
                s - s0
            );
        }
    }

    #[test]
    fn probability_dot_maps_are_opposite_for_two_classes() {
        let p = model(Arch::QGru, 5);
        let x = TokenSequence::new(vec![3, 3, 1, 9]);
        for variant in [GradVariant::Simple, GradVariant::Integrated] {
            let cfg = GradConfig::new(variant, GradOutput::Probability, Reduction::Dot);
            let a = explain_gradient(&p, &x, 0, &cfg).unwrap();
            let b = explain_gradient(&p, &x, 1, &cfg).unwrap();
            for (u, v) in a.scores.iter().zip(&b.scores) {
                assert!((u + v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eight_variants_are_distinct() {
        let p = model(Arch::Lstm, 6);
        let x = TokenSequence::new(vec![1, 2, 3, 4, 5]);
        let maps: Vec<Vec<f64>> = GradConfig::all()
            .iter()
            .map(|c| explain_gradient(&p, &x, 0, c).unwrap().scores)
            .collect();
        for i in 0..maps.len() {
            for j in i + 1..maps.len() {
                assert_ne!(maps[i], maps[j]);
            }
        }
        let tags: std::collections::HashSet<String> =
            GradConfig::all().iter().map(|c| c.tag()).collect();
        assert_eq!(tags.len(), 8);
    }
}
