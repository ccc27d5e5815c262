use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::backward::{gradients, Objective};
use crate::models::forward::forward;
use crate::models::params::NetworkParams;
use crate::models::vocab::TokenSequence;
use crate::numerics::SeededRng;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSequence {
    pub tokens: TokenSequence,
    pub label: usize,
}

/// Plain Adam on mean categorical crossentropy; no dropout, no schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 10,
            batch_size: 8,
            seed: 0,
        }
    }
}

/// Corpus loss and accuracy measured after an epoch's updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean crossentropy and accuracy of `params` on `corpus`.
pub fn evaluate(params: &NetworkParams, corpus: &[LabeledSequence]) -> Result<(f64, f64)> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for ex in corpus {
        let tr = forward(params, &ex.tokens)?;
        if ex.label >= tr.probs.len() {
            return Err(Error::ClassOutOfRange {
                class: ex.label,
                classes: tr.probs.len(),
            });
        }
        loss += Objective::CrossEntropy(ex.label).value(&tr);
        if tr.predicted_class() == ex.label {
            correct += 1;
        }
    }
    let n = corpus.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

pub fn train(
    params: &NetworkParams,
    corpus: &[LabeledSequence],
    config: &TrainConfig,
) -> Result<(NetworkParams, Vec<EpochStats>)> {
    train_with(params, corpus, config, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    params: &NetworkParams,
    corpus: &[LabeledSequence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(NetworkParams, Vec<EpochStats>)> {
    if corpus.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if config.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    for ex in corpus {
        if ex.tokens.is_empty() {
            return Err(Error::Empty("training sequence"));
        }
        ex.tokens.check(params.vocab_size())?;
        if ex.label >= params.classes() {
            return Err(Error::ClassOutOfRange {
                class: ex.label,
                classes: params.classes(),
            });
        }
    }
    let mut current = params.clone();
    let mut weights = current.flatten();
    let mut m = vec![0.0; weights.len()];
    let mut v = vec![0.0; weights.len()];
    let mut step = 0i32;
    let mut rng = SeededRng::new(config.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            let mut grad = vec![0.0; weights.len()];
            for &i in batch {
                let ex = &corpus[i];
                let g = gradients(
                    &current,
                    &ex.tokens,
                    Objective::CrossEntropy(ex.label),
                    true,
                )?;
                let flat = g.params.expect("parameter gradients requested").flatten();
                for (a, b) in grad.iter_mut().zip(flat) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            step += 1;
            let bc1 = 1.0 - config.beta1.powi(step);
            let bc2 = 1.0 - config.beta2.powi(step);
            for j in 0..weights.len() {
                let gj = grad[j] * scale;
                m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * gj;
                v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                weights[j] -= config.lr * m_hat / (v_hat.sqrt() + config.adam_eps);
            }
            current.assign_flat(&weights)?;
        }
        let (loss, accuracy) = evaluate(&current, corpus)?;
        let stats = EpochStats {
            epoch,
            loss,
            accuracy,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok((current, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::params::{Arch, ModelConfig};

    fn toy_corpus() -> Vec<LabeledSequence> {
        // token 1 marks class 0, token 2 marks class 1; 3..6 are filler
        let mut rng = SeededRng::new(8);
        (0..24)
            .map(|i| {
                let label = i % 2;
                let len = 3 + rng.index(3);
                let mut ids: Vec<usize> = (0..len).map(|_| 3 + rng.index(4)).collect();
                let pos = rng.index(len);
                ids[pos] = 1 + label;
                LabeledSequence {
                    tokens: TokenSequence::new(ids),
                    label,
                }
            })
            .collect()
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let p = NetworkParams::init(&ModelConfig::new(Arch::Gru, 7, 2), &mut SeededRng::new(1))
            .unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (q, hist) = train(&p, &toy_corpus(), &cfg).unwrap();
        assert_eq!(p, q);
        assert!(hist.is_empty());
        assert!(train(&p, &[], &cfg).is_err());
    }

    #[test]
    fn overfits_a_single_example() {
        for arch in Arch::ALL {
            let p =
                NetworkParams::init(&ModelConfig::new(arch, 7, 3), &mut SeededRng::new(2)).unwrap();
            let corpus = vec![LabeledSequence {
                tokens: TokenSequence::new(vec![3, 4, 5]),
                label: 2,
            }];
            let cfg = TrainConfig {
                lr: 0.01,
                epochs: 60,
                batch_size: 1,
                ..TrainConfig::default()
            };
            let (q, _) = train(&p, &corpus, &cfg).unwrap();
            assert_eq!(
                forward(&q, &corpus[0].tokens).unwrap().predicted_class(),
                2,
                "{arch}"
            );
        }
    }

    #[test]
    fn epoch_loss_decreases_on_separable_corpus() {
        for arch in Arch::ALL {
            let p =
                NetworkParams::init(&ModelConfig::new(arch, 7, 2), &mut SeededRng::new(3)).unwrap();
            let cfg = TrainConfig {
                lr: 0.005,
                epochs: 15,
                batch_size: 4,
                seed: 5,
                ..TrainConfig::default()
            };
            let (_, hist) = train(&p, &toy_corpus(), &cfg).unwrap();
            for w in hist.windows(2) {
                assert!(w[1].loss < w[0].loss, "{arch}: {hist:?}");
            }
        }
    }

    #[test]
    fn training_is_reproducible() {
        let p = NetworkParams::init(&ModelConfig::new(Arch::QGru, 7, 2), &mut SeededRng::new(4))
            .unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(&p, &toy_corpus(), &cfg).unwrap();
        let b = train(&p, &toy_corpus(), &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }
}
