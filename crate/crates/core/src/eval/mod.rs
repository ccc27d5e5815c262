//! Pointing-game evaluation: the position of maximal relevance is a hit when
//! it lands on evidence for the prediction.
//!
//! Positions are 0-based throughout.

mod agreement;
mod hybrid;
mod report;

pub use agreement::{
    feat_of_pos, hit_feat, hit_target, parse_agreement_tsv, AgreementSample, AgreementTally, Number,
};
pub use hybrid::{
    build_hybrid_docs, hit_hybrid, hit_manual, match_manual_gt, parse_manual_gt,
    random_hit_expectation, HitOutcome, HybridDocument, HybridTally, LabeledSentence,
    ManualGroundTruth,
};
pub use report::{EvalReport, ReportRow, TSV_HEADER};

use crate::error::{Error, Result};
use crate::explain::RelevanceMap;
use crate::numerics::{argmax, SeededRng};

/// Index of the maximal score; ties go to the earliest position.
pub fn rmax(scores: &[f64]) -> Result<usize> {
    if scores.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("relevance map contains NaN"));
    }
    argmax(scores).ok_or(Error::Empty("relevance map"))
}

fn one_hot(t_len: usize, at: usize, tag: &str) -> RelevanceMap {
    let mut scores = vec![0.0; t_len];
    scores[at] = 1.0;
    RelevanceMap::new(scores, 0, tag)
}

/// One-hot map at a uniformly drawn position.
pub fn baseline_random(rng: &mut SeededRng, t_len: usize) -> Result<RelevanceMap> {
    if t_len == 0 {
        return Err(Error::Empty("input sequence"));
    }
    Ok(one_hot(t_len, rng.index(t_len), "random"))
}

/// One-hot map at the final position.
pub fn baseline_last(t_len: usize) -> Result<RelevanceMap> {
    if t_len == 0 {
        return Err(Error::Empty("input sequence"));
    }
    Ok(one_hot(t_len, t_len - 1, "last"))
}

pub fn pointing_accuracy(hits: usize, possible: usize) -> Result<f64> {
    if possible == 0 {
        return Err(Error::invalid("no possible hit points"));
    }
    if hits > possible {
        return Err(Error::invalid(format!(
            "{hits} hits out of {possible} possible"
        )));
    }
    Ok(hits as f64 / possible as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmax_breaks_ties_low() {
        assert_eq!(rmax(&[0.0, 5.0, 5.0]).unwrap(), 1);
        assert_eq!(rmax(&[-2.0]).unwrap(), 0);
        assert!(rmax(&[]).is_err());
        assert!(rmax(&[1.0, f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn rmax_matches_linear_scan(v in prop::collection::vec(-100i32..100, 1..40)) {
            let scores: Vec<f64> = v.iter().map(|&x| x as f64).collect();
            let mut best = 0;
            for t in 1..scores.len() {
                if scores[t] > scores[best] {
                    best = t;
                }
            }
            prop_assert_eq!(rmax(&scores).unwrap(), best);
        }

        #[test]
        fn rmax_is_scale_invariant(v in prop::collection::vec(-1e3f64..1e3, 1..40), c in 1e-3f64..1e3) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert_eq!(rmax(&v).unwrap(), rmax(&scaled).unwrap());
        }
    }

    #[test]
    fn baselines() {
        assert_eq!(baseline_last(7).unwrap().rmax(), Some(6));
        assert!(baseline_last(0).is_err());
        let mut rng = SeededRng::new(1);
        assert!(baseline_random(&mut rng, 0).is_err());
        let n = 100_000;
        let mut bins = [0usize; 4];
        for _ in 0..n {
            bins[baseline_random(&mut rng, 4).unwrap().rmax().unwrap()] += 1;
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for b in bins {
            assert!((b as f64 - n as f64 / 4.0).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn accuracy_arithmetic() {
        assert_eq!(pointing_accuracy(0, 5).unwrap(), 0.0);
        assert_eq!(pointing_accuracy(5, 5).unwrap(), 1.0);
        assert_eq!(pointing_accuracy(37, 100).unwrap(), 0.37);
        assert!(pointing_accuracy(0, 0).is_err());
        assert!(pointing_accuracy(3, 2).is_err());
    }
}
