//! Substring-sampling local surrogates.
//!
//! Contiguous substrings are drawn uniformly by length and then by start,
//! the classifier is run on each substring as a standalone sequence, and a
//! linear model over the substring's position indicators is fitted to the
//! classifier's response. The fitted coefficients are the relevance map.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::RelevanceMap;
use crate::models::{forward, NetworkParams, TokenSequence};
use crate::numerics::{argmax, sigmoid, softmax, solve_spd, Matrix, SeededRng};

/// Positions `start..start + len` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubstringSample {
    pub start: usize,
    pub len: usize,
}

impl SubstringSample {
    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn covers(&self, t: usize) -> bool {
        (self.start..self.end()).contains(&t)
    }

    pub fn indicator(&self, t_len: usize) -> Vec<bool> {
        (0..t_len).map(|t| self.covers(t)).collect()
    }
}

/// `n` draws: length uniform on `1..=min(max_len, T)`, then start uniform
/// over the positions where a substring of that length fits.
pub fn sample_substrings(
    rng: &mut SeededRng,
    t_len: usize,
    n: usize,
    max_len: usize,
) -> Result<Vec<SubstringSample>> {
    if t_len == 0 {
        return Err(Error::Empty("input sequence"));
    }
    if n == 0 || max_len == 0 {
        return Err(Error::invalid(
            "sample count and maximum length must be positive",
        ));
    }
    let longest = max_len.min(t_len) as i64;
    (0..n)
        .map(|_| {
            let len = rng.uniform_int(1, longest)?;
            let start = rng.uniform_int(1, t_len as i64 - len + 1)?;
            Ok(SubstringSample {
                start: start as usize - 1,
                len: len as usize,
            })
        })
        .collect()
}

/// Every substring of length at most `max_len`, each once.
pub fn all_substrings(t_len: usize, max_len: usize) -> Vec<SubstringSample> {
    let mut out = Vec::new();
    for len in 1..=max_len.min(t_len) {
        for start in 0..=t_len - len {
            out.push(SubstringSample { start, len });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// L2 penalty on the position weights (and on the intercept for the
    /// logistic fit).
    pub ridge: f64,
    /// Fit a constant term; it is never part of the returned map.
    pub intercept: bool,
    pub max_iter: usize,
    /// Gradient-norm tolerance for the logistic fit.
    pub tol: f64,
}

impl FitConfig {
    pub fn blackbox() -> Self {
        FitConfig {
            ridge: 1e-4,
            intercept: true,
            max_iter: 200,
            tol: 1e-6,
        }
    }

    /// Ridge `1e-6 * N` for `N` samples.
    pub fn magnitude(samples: usize) -> Self {
        FitConfig {
            ridge: 1e-6 * samples as f64,
            intercept: true,
            max_iter: 0,
            tol: 0.0,
        }
    }
}

/// Groups identical samples: `(sample, count, sum of responses)`.
fn aggregate(samples: &[SubstringSample], responses: &[f64]) -> Vec<(SubstringSample, f64, f64)> {
    let mut groups: HashMap<SubstringSample, (f64, f64)> = HashMap::new();
    for (s, y) in samples.iter().zip(responses) {
        let g = groups.entry(*s).or_insert((0.0, 0.0));
        g.0 += 1.0;
        g.1 += y;
    }
    let mut out: Vec<_> = groups.into_iter().map(|(s, (c, y))| (s, c, y)).collect();
    out.sort_by_key(|g| g.0);
    out
}

fn check_fit_inputs(t_len: usize, samples: &[SubstringSample], responses: usize) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Empty("substring samples"));
    }
    if samples.len() != responses {
        return Err(Error::shape(format!(
            "{} samples but {} responses",
            samples.len(),
            responses
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.len == 0 || s.end() > t_len) {
        return Err(Error::invalid(format!(
            "substring {s:?} outside a sequence of length {t_len}"
        )));
    }
    Ok(())
}

fn linear_term(w: &[f64], s: &SubstringSample, intercept: bool) -> f64 {
    let mut eta: f64 = w[s.start..s.end()].iter().sum();
    if intercept {
        eta += w[w.len() - 1];
    }
    eta
}

/// Adds `weight * x x^T` for the indicator `x` of `s` (plus intercept).
fn add_outer_indicator(h: &mut Matrix, s: &SubstringSample, intercept: bool, weight: f64) {
    let dim = h.rows();
    let mut idx: Vec<usize> = (s.start..s.end()).collect();
    if intercept {
        idx.push(dim - 1);
    }
    let data = h.as_mut_slice();
    for &i in &idx {
        for &j in &idx {
            data[i * dim + j] += weight;
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic regression of the binary labels on the position indicators,
/// minimised by damped Newton steps with backtracking.
pub fn fit_blackbox(
    t_len: usize,
    samples: &[SubstringSample],
    labels: &[bool],
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    check_fit_inputs(t_len, samples, labels.len())?;
    let ys: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let groups = aggregate(samples, &ys);
    let dim = t_len + usize::from(cfg.intercept);
    let lambda = cfg.ridge;

    let objective = |w: &[f64]| -> f64 {
        let mut loss = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
        for (s, count, pos) in &groups {
            let eta = linear_term(w, s, cfg.intercept);
            loss += count * softplus(eta) - pos * eta;
        }
        loss
    };

    let mut w = vec![0.0; dim];
    let mut loss = objective(&w);
    for _ in 0..cfg.max_iter.max(1) {
        let mut grad: Vec<f64> = w.iter().map(|v| lambda * v).collect();
        let mut hess = Matrix::zeros(dim, dim);
        for i in 0..dim {
            hess.as_mut_slice()[i * dim + i] = lambda;
        }
        for (s, count, pos) in &groups {
            let p = sigmoid(linear_term(&w, s, cfg.intercept));
            let r = count * p - pos;
            for g in &mut grad[s.start..s.end()] {
                *g += r;
            }
            if cfg.intercept {
                grad[dim - 1] += r;
            }
            add_outer_indicator(&mut hess, s, cfg.intercept, count * p * (1.0 - p));
        }
        if grad.iter().fold(0.0f64, |m, g| m.max(g.abs())) < cfg.tol {
            break;
        }
        let step = solve_spd(&hess, &grad)?;
        let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&step).map(|(a, d)| a - alpha * d).collect();
            let trial_loss = objective(&trial);
            if trial_loss <= loss - 1e-4 * alpha * slope || alpha < 1e-10 {
                w = trial;
                loss = trial_loss;
                break;
            }
            alpha *= 0.5;
        }
    }
    w.truncate(t_len);
    Ok(w)
}

/// Least squares of real responses on the position indicators via the
/// ridge-regularised normal equations. The intercept is not penalised.
pub fn fit_magnitude(
    t_len: usize,
    samples: &[SubstringSample],
    responses: &[f64],
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    check_fit_inputs(t_len, samples, responses.len())?;
    if responses.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("non-finite response"));
    }
    let dim = t_len + usize::from(cfg.intercept);
    let mut a = Matrix::zeros(dim, dim);
    let mut b = vec![0.0; dim];
    for (s, count, y) in aggregate(samples, responses) {
        add_outer_indicator(&mut a, &s, cfg.intercept, count);
        for v in &mut b[s.start..s.end()] {
            *v += y;
        }
        if cfg.intercept {
            b[dim - 1] += y;
        }
    }
    for i in 0..t_len {
        a.as_mut_slice()[i * dim + i] += cfg.ridge;
    }
    let mut w = solve_spd(&a, &b)?;
    w.truncate(t_len);
    Ok(w)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimsseVariant {
    /// Logistic fit on whether the substring is classified as `k`.
    BlackBox,
    /// Least squares on the class score.
    MagnitudeScore,
    /// Least squares on the class probability.
    MagnitudeProb,
}

impl LimsseVariant {
    pub fn tag(self) -> &'static str {
        match self {
            LimsseVariant::BlackBox => "limsse_bb",
            LimsseVariant::MagnitudeScore => "limsse_ms_s",
            LimsseVariant::MagnitudeProb => "limsse_ms_p",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimsseConfig {
    pub variant: LimsseVariant,
    pub samples: usize,
    pub max_len: usize,
    pub seed: u64,
    /// Overrides the variant's default fit settings.
    pub fit: Option<FitConfig>,
}

impl LimsseConfig {
    pub const DEFAULT_SAMPLES: usize = 3000;
    pub const DEFAULT_MAX_LEN: usize = 6;

    pub fn new(variant: LimsseVariant) -> Self {
        LimsseConfig {
            variant,
            samples: Self::DEFAULT_SAMPLES,
            max_len: Self::DEFAULT_MAX_LEN,
            seed: 0,
            fit: None,
        }
    }
}

/// Fits the surrogate for class `k` on given samples. `respond` returns the
/// class scores of a substring; it is called once per distinct substring.
pub fn limsse_fit(
    t_len: usize,
    samples: &[SubstringSample],
    k: usize,
    variant: LimsseVariant,
    fit: &FitConfig,
    mut respond: impl FnMut(SubstringSample) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut cache: HashMap<SubstringSample, f64> = HashMap::new();
    let mut responses = Vec::with_capacity(samples.len());
    for s in samples {
        let v = match cache.get(s) {
            Some(&v) => v,
            None => {
                let scores = respond(*s)?;
                if k >= scores.len() {
                    return Err(Error::ClassOutOfRange {
                        class: k,
                        classes: scores.len(),
                    });
                }
                let v = match variant {
                    LimsseVariant::MagnitudeScore => scores[k],
                    LimsseVariant::MagnitudeProb => softmax(&scores)?[k],
                    LimsseVariant::BlackBox => {
                        let p = softmax(&scores)?;
                        if argmax(&p) == Some(k) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                };
                cache.insert(*s, v);
                v
            }
        };
        responses.push(v);
    }
    match variant {
        LimsseVariant::BlackBox => {
            let labels: Vec<bool> = responses.iter().map(|&v| v == 1.0).collect();
            fit_blackbox(t_len, samples, &labels, fit)
        }
        _ => fit_magnitude(t_len, samples, &responses, fit),
    }
}

/// Samples substrings with `cfg` and fits the surrogate; works for any
/// scorer, not only the networks of this crate.
pub fn limsse_with(
    t_len: usize,
    k: usize,
    cfg: &LimsseConfig,
    respond: impl FnMut(SubstringSample) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut rng = SeededRng::new(cfg.seed);
    let samples = sample_substrings(&mut rng, t_len, cfg.samples, cfg.max_len)?;
    let fit = cfg.fit.unwrap_or_else(|| match cfg.variant {
        LimsseVariant::BlackBox => FitConfig::blackbox(),
        _ => FitConfig::magnitude(samples.len()),
    });
    limsse_fit(t_len, &samples, k, cfg.variant, &fit, respond)
}

pub fn limsse_explain(
    params: &NetworkParams,
    x: &TokenSequence,
    k: usize,
    cfg: &LimsseConfig,
) -> Result<RelevanceMap> {
    x.check(params.vocab_size())?;
    let scores = limsse_with(x.len(), k, cfg, |s| {
        let sub = TokenSequence::new(x.ids[s.start..s.end()].to_vec());
        Ok(forward(params, &sub)?.scores)
    })?;
    Ok(RelevanceMap::new(scores, k, cfg.variant.tag()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Arch, ModelConfig};

    #[test]
    fn single_token_sequence_samples_itself() {
        let s = sample_substrings(&mut SeededRng::new(1), 1, 50, 6).unwrap();
        assert!(s.iter().all(|s| *s == SubstringSample { start: 0, len: 1 }));
        assert_eq!(s[0].indicator(1), vec![true]);
        assert!(sample_substrings(&mut SeededRng::new(1), 0, 5, 6).is_err());
    }

    #[test]
    fn samples_are_contiguous_and_in_range() {
        let s = sample_substrings(&mut SeededRng::new(2), 9, 2000, 6).unwrap();
        for x in &s {
            assert!(x.len >= 1 && x.len <= 6);
            assert!(x.end() <= 9);
            let ind = x.indicator(9);
            let first = ind.iter().position(|&b| b).unwrap();
            let ones = ind.iter().filter(|&&b| b).count();
            assert_eq!(ones, x.len);
            assert!(ind[first..first + ones].iter().all(|&b| b));
        }
        let again = sample_substrings(&mut SeededRng::new(2), 9, 2000, 6).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn lengths_are_uniform() {
        let n = 100_000;
        let s = sample_substrings(&mut SeededRng::new(3), 10, n, 6).unwrap();
        let mut bins = [0usize; 6];
        for x in &s {
            bins[x.len - 1] += 1;
        }
        let p = 1.0 / 6.0;
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for b in bins {
            assert!((b as f64 - mean).abs() < 3.0 * sd, "{bins:?}");
        }
    }

    #[test]
    fn all_substrings_enumerates_each_once() {
        let all = all_substrings(5, 3);
        assert_eq!(all.len(), 5 + 4 + 3);
        let set: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(set.len(), all.len());
        assert_eq!(all_substrings(2, 6).len(), 3);
    }

    #[test]
    fn logistic_single_weight_matches_log_odds() {
        let samples = vec![SubstringSample { start: 0, len: 1 }; 10];
        let labels: Vec<bool> = (0..10).map(|i| i < 7).collect();
        let cfg = FitConfig {
            ridge: 0.0,
            intercept: false,
            ..FitConfig::blackbox()
        };
        let w = fit_blackbox(1, &samples, &labels, &cfg).unwrap();
        assert!((w[0] - (0.7f64 / 0.3).ln()).abs() < 1e-6);
    }

    #[test]
    fn identical_labels_give_finite_same_sign_weights() {
        let samples = sample_substrings(&mut SeededRng::new(4), 8, 300, 4).unwrap();
        for label in [true, false] {
            let w = fit_blackbox(8, &samples, &vec![label; 300], &FitConfig::blackbox()).unwrap();
            assert!(w.iter().all(|v| v.is_finite()));
            let touched: Vec<f64> = (0..8)
                .filter(|t| samples.iter().any(|s| s.covers(*t)))
                .map(|t| w[t])
                .collect();
            assert!(
                touched.iter().all(|&v| (v > 0.0) == label && v != 0.0),
                "{w:?}"
            );
        }
    }

    #[test]
    fn planted_keyword_is_the_argmax_for_every_variant() {
        let keyword = 6;
        let scorer = |s: SubstringSample| -> Result<Vec<f64>> {
            let hit = if s.covers(keyword) { 3.0 } else { -1.0 };
            Ok(vec![0.0, hit, 0.5])
        };
        for variant in [
            LimsseVariant::BlackBox,
            LimsseVariant::MagnitudeScore,
            LimsseVariant::MagnitudeProb,
        ] {
            let cfg = LimsseConfig {
                samples: 500,
                seed: 9,
                ..LimsseConfig::new(variant)
            };
            let map = limsse_with(12, 1, &cfg, scorer).unwrap();
            let best = argmax(&map).unwrap();
            assert_eq!(best, keyword, "{variant:?}: {map:?}");
            assert!(map
                .iter()
                .enumerate()
                .all(|(t, &v)| t == keyword || v < map[keyword]));
        }
    }

    #[test]
    fn magnitude_fit_recovers_additive_scorer() {
        let mut rng = SeededRng::new(5);
        for t_len in 1..=12 {
            let c: Vec<f64> = (0..t_len).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
            let samples = all_substrings(t_len, 6);
            let y: Vec<f64> = samples
                .iter()
                .map(|s| c[s.start..s.end()].iter().sum())
                .collect();
            let cfg = FitConfig {
                ridge: 0.0,
                intercept: false,
                ..FitConfig::magnitude(samples.len())
            };
            let w = fit_magnitude(t_len, &samples, &y, &cfg).unwrap();
            for (a, b) in w.iter().zip(&c) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn magnitude_fit_zero_response_and_shift() {
        let samples = sample_substrings(&mut SeededRng::new(6), 7, 400, 6).unwrap();
        let cfg = FitConfig::magnitude(400);
        let w = fit_magnitude(7, &samples, &vec![0.0; 400], &cfg).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
        let y: Vec<f64> = samples
            .iter()
            .map(|s| s.start as f64 - 0.3 * s.len as f64)
            .collect();
        let shifted: Vec<f64> = y.iter().map(|v| v + 42.0).collect();
        let a = fit_magnitude(7, &samples, &y, &cfg).unwrap();
        let b = fit_magnitude(7, &samples, &shifted, &cfg).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_design_needs_ridge() {
        let samples = vec![SubstringSample { start: 0, len: 2 }; 5];
        let cfg = FitConfig {
            ridge: 0.0,
            intercept: false,
            ..FitConfig::magnitude(5)
        };
        assert!(matches!(
            fit_magnitude(3, &samples, &[1.0; 5], &cfg),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn uncovered_positions_stay_at_zero() {
        let samples = vec![
            SubstringSample { start: 0, len: 2 },
            SubstringSample { start: 1, len: 1 },
        ];
        let y = [2.0, 1.0];
        let w = fit_magnitude(4, &samples, &y, &FitConfig::magnitude(2)).unwrap();
        assert_eq!(&w[2..], &[0.0, 0.0]);
        let w = fit_blackbox(4, &samples, &[true, false], &FitConfig::blackbox()).unwrap();
        assert_eq!(&w[2..], &[0.0, 0.0]);
    }

    #[test]
    fn constant_logit_model() {
        let mut cfg = ModelConfig::new(Arch::Gru, 8, 2);
        cfg.hidden_dim = 4;
        let mut p = NetworkParams::init(&cfg, &mut SeededRng::new(7)).unwrap();
        p.classifier = Matrix::zeros(2, 4);
        p.classifier_bias = vec![1.5, 1.5];
        let x = TokenSequence::new(vec![1, 2, 3, 4, 5]);
        let ms_p = LimsseConfig {
            samples: 300,
            ..LimsseConfig::new(LimsseVariant::MagnitudeProb)
        };
        let m = limsse_explain(&p, &x, 0, &ms_p).unwrap();
        assert!(m.scores.iter().all(|v| v.abs() < 1e-9));
        // without an intercept the score surrogate has to carry b_k itself
        let ms_s = LimsseConfig {
            variant: LimsseVariant::MagnitudeScore,
            fit: Some(FitConfig {
                intercept: false,
                ..FitConfig::magnitude(300)
            }),
            ..ms_p
        };
        let m = limsse_explain(&p, &x, 0, &ms_s).unwrap();
        assert!(m.scores.iter().all(|&v| v > 0.0));
        assert!(m.scores.iter().any(|&v| v > 0.1));
        assert_eq!(m.method, "limsse_ms_s");
    }

    #[test]
    fn explain_is_seeded() {
        let p = NetworkParams::init(&ModelConfig::new(Arch::Cnn, 8, 3), &mut SeededRng::new(8))
            .unwrap();
        let x = TokenSequence::new(vec![1, 7, 3, 3, 6]);
        let cfg = LimsseConfig {
            samples: 200,
            seed: 4,
            ..LimsseConfig::new(LimsseVariant::BlackBox)
        };
        assert_eq!(
            limsse_explain(&p, &x, 2, &cfg).unwrap(),
            limsse_explain(&p, &x, 2, &cfg).unwrap()
        );
    }
}
