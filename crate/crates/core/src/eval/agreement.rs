use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::rmax;

/// Grammatical number of a noun or present-tense verb.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Number {
    Sg,
    Pl,
}

impl Number {
    /// Class index used by agreement classifiers: 0 singular, 1 plural.
    pub fn class(self) -> usize {
        match self {
            Number::Sg => 0,
            Number::Pl => 1,
        }
    }

    pub fn from_class(k: usize) -> Option<Number> {
        match k {
            0 => Some(Number::Sg),
            1 => Some(Number::Pl),
            _ => None,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Number::Sg => "Sg",
            Number::Pl => "Pl",
        })
    }
}

impl FromStr for Number {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Sg" | "sg" | "SG" => Ok(Number::Sg),
            "Pl" | "pl" | "PL" => Ok(Number::Pl),
            other => Err(Error::invalid(format!("unknown number `{other}`"))),
        }
    }
}

/// Number feature of a Penn Treebank tag, if it has one.
pub fn feat_of_pos(tag: &str) -> Option<Number> {
    match tag {
        "VBZ" | "NN" => Some(Number::Sg),
        "VBP" | "NNS" => Some(Number::Pl),
        _ => None,
    }
}

/// Sentence prefix up to (excluding) a present-tense verb, with the
/// position of its subject and the verb's number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementSample {
    pub tokens: Vec<String>,
    pub pos: Vec<String>,
    pub target: usize,
    pub number: Number,
}

impl AgreementSample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn feat(&self, t: usize) -> Option<Number> {
        self.pos.get(t).and_then(|p| feat_of_pos(p))
    }
}

fn check_len(sample: &AgreementSample, scores: &[f64]) -> Result<()> {
    if scores.len() != sample.len() {
        return Err(Error::shape(format!(
            "{} scores for a prefix of {} tokens",
            scores.len(),
            sample.len()
        )));
    }
    Ok(())
}

pub fn hit_target(sample: &AgreementSample, scores: &[f64]) -> Result<bool> {
    check_len(sample, scores)?;
    Ok(rmax(scores)? == sample.target)
}

pub fn hit_feat(sample: &AgreementSample, predicted: Number, scores: &[f64]) -> Result<bool> {
    check_len(sample, scores)?;
    Ok(sample.feat(rmax(scores)?) == Some(predicted))
}

/// Hit counts split the way agreement results are reported: the target
/// metric over correct predictions, the feature metric separately over
/// correct and incorrect ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementTally {
    pub target_hits: usize,
    pub target_possible: usize,
    pub feat_correct_hits: usize,
    pub feat_correct_possible: usize,
    pub feat_wrong_hits: usize,
    pub feat_wrong_possible: usize,
}

impl AgreementTally {
    pub fn add(
        &mut self,
        sample: &AgreementSample,
        predicted: Number,
        scores: &[f64],
    ) -> Result<()> {
        let feat = hit_feat(sample, predicted, scores)?;
        if predicted == sample.number {
            self.target_possible += 1;
            self.target_hits += usize::from(hit_target(sample, scores)?);
            self.feat_correct_possible += 1;
            self.feat_correct_hits += usize::from(feat);
        } else {
            self.feat_wrong_possible += 1;
            self.feat_wrong_hits += usize::from(feat);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &AgreementTally) {
        self.target_hits += other.target_hits;
        self.target_possible += other.target_possible;
        self.feat_correct_hits += other.feat_correct_hits;
        self.feat_correct_possible += other.feat_correct_possible;
        self.feat_wrong_hits += other.feat_wrong_hits;
        self.feat_wrong_possible += other.feat_wrong_possible;
    }

    pub fn samples(&self) -> usize {
        self.feat_correct_possible + self.feat_wrong_possible
    }
}

/// Tab-separated rows: space-joined tokens, space-joined POS tags, 1-based
/// subject index, `Sg` or `Pl`. Blank lines and `#` comments are skipped.
pub fn parse_agreement_tsv(text: &str) -> Result<Vec<AgreementSample>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| Error::Parse { line, message };
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(format!(
                "expected 4 tab-separated columns, found {}",
                cols.len()
            )));
        }
        let tokens: Vec<String> = cols[0].split_whitespace().map(str::to_string).collect();
        let pos: Vec<String> = cols[1].split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(err("empty prefix".into()));
        }
        if tokens.len() != pos.len() {
            return Err(err(format!(
                "{} tokens but {} POS tags",
                tokens.len(),
                pos.len()
            )));
        }
        let index: usize = cols[2].trim().parse().map_err(|_| {
            err(format!(
                "subject index `{}` is not a positive integer",
                cols[2]
            ))
        })?;
        if index == 0 || index > tokens.len() {
            return Err(err(format!(
                "subject index {index} outside 1..={}",
                tokens.len()
            )));
        }
        let number: Number = cols[3]
            .trim()
            .parse()
            .map_err(|e: Error| err(e.to_string()))?;
        out.push(AgreementSample {
            tokens,
            pos,
            target: index - 1,
            number,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> AgreementSample {
        parse_agreement_tsv("the keys to the cabinet\tDT NNS TO DT NN\t2\tPl\n")
            .unwrap()
            .remove(0)
    }

    #[test]
    fn pos_mapping() {
        assert_eq!(feat_of_pos("NN"), Some(Number::Sg));
        assert_eq!(feat_of_pos("VBZ"), Some(Number::Sg));
        assert_eq!(feat_of_pos("NNS"), Some(Number::Pl));
        assert_eq!(feat_of_pos("VBP"), Some(Number::Pl));
        assert_eq!(feat_of_pos("JJ"), None);
        assert_eq!(feat_of_pos("nn"), None);
    }

    #[test]
    fn target_and_feature_hits() {
        let s = sample();
        assert_eq!(s.target, 1);
        assert!(hit_target(&s, &[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap());
        assert!(!hit_target(&s, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap());
        // attractor "cabinet" is singular
        assert!(hit_feat(&s, Number::Sg, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap());
        assert!(!hit_feat(&s, Number::Pl, &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap());
        // "to" has no number
        assert!(!hit_feat(&s, Number::Pl, &[0.0, 0.0, 1.0, 0.0, 0.0]).unwrap());
        assert!(hit_target(&s, &[1.0]).is_err());
    }

    #[test]
    fn tally_partitions_every_sample_once() {
        let s = sample();
        let mut tally = AgreementTally::default();
        tally
            .add(&s, Number::Pl, &[0.0, 1.0, 0.0, 0.0, 0.0])
            .unwrap();
        tally
            .add(&s, Number::Sg, &[0.0, 0.0, 0.0, 0.0, 1.0])
            .unwrap();
        tally
            .add(&s, Number::Pl, &[1.0, 0.0, 0.0, 0.0, 0.0])
            .unwrap();
        assert_eq!(tally.samples(), 3);
        assert_eq!((tally.target_hits, tally.target_possible), (1, 2));
        assert_eq!(
            (tally.feat_correct_hits, tally.feat_correct_possible),
            (1, 2)
        );
        assert_eq!((tally.feat_wrong_hits, tally.feat_wrong_possible), (1, 1));
        // every target hit on a correct prediction is also a feature hit
        assert!(tally.feat_correct_hits >= tally.target_hits);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let cases = [
            "a b\tDT\t1\tSg",
            "a b\tDT NN\t3\tSg",
            "a b\tDT NN\t0\tSg",
            "a b\tDT NN\tx\tSg",
            "a b\tDT NN\t2\tDual",
            "a b\tDT NN\t2",
        ];
        for bad in cases {
            let text = format!("# header\nthe cat\tDT NN\t2\tSg\n{bad}\n");
            match parse_agreement_tsv(&text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, 3, "{bad}"),
                other => panic!("{bad}: {other:?}"),
            }
        }
    }

    #[test]
    fn number_round_trip() {
        for n in [Number::Sg, Number::Pl] {
            assert_eq!(n.to_string().parse::<Number>().unwrap(), n);
            assert_eq!(Number::from_class(n.class()), Some(n));
        }
        assert_eq!(Number::from_class(2), None);
    }
}
