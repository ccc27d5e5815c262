//! Post-hoc explanation methods. Every method maps `(network, tokens, class)`
//! to one relevance score per token.

pub mod decomp;
pub mod gradient;
pub mod limsse;
pub mod lrp;
pub mod perturb;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{NetworkParams, TokenSequence};

pub use decomp::{decomp_explain, net_load, net_load_series, NetLoadSeries};
pub use gradient::{
    embedding_gradients, explain_gradient, integrated_gradients, reduce, GradConfig, GradOutput,
    GradVariant, Reduction,
};
pub use limsse::{
    all_substrings, fit_blackbox, fit_magnitude, limsse_explain, limsse_fit, limsse_with,
    sample_substrings, FitConfig, LimsseConfig, LimsseVariant, SubstringSample,
};
pub use lrp::{
    deeplift_explain, esign, lrp_explain, propagate, relevance_dense, PropagationMode,
    RelevanceState,
};
pub use perturb::{perturb_explain, PerturbConfig, PerturbMode};

/// One relevance score per input token for a target class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceMap {
    pub scores: Vec<f64>,
    pub class: usize,
    pub method: String,
}

impl RelevanceMap {
    pub fn new(scores: Vec<f64>, class: usize, method: impl Into<String>) -> Self {
        RelevanceMap {
            scores,
            class,
            method: method.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.scores.iter().all(|v| v.is_finite())
    }

    /// Position of the maximum score, first on ties.
    pub fn rmax(&self) -> Option<usize> {
        crate::numerics::argmax(&self.scores)
    }
}

/// An explanation method from the catalog.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Gradient(GradVariant, GradOutput, Reduction),
    Lrp,
    DeepLift,
    Decomp,
    Perturb(PerturbMode, usize),
    Limsse(LimsseVariant),
}

impl Method {
    /// The twenty methods of the standard comparison, in a fixed order.
    pub fn catalog() -> Vec<Method> {
        let mut out: Vec<Method> = GradConfig::all()
            .into_iter()
            .map(|c| Method::Gradient(c.variant, c.output, c.reduction))
            .collect();
        out.extend([Method::Lrp, Method::DeepLift, Method::Decomp]);
        for mode in [PerturbMode::Omit, PerturbMode::Occlude] {
            for n in [1, 3, 7] {
                out.push(Method::Perturb(mode, n));
            }
        }
        out.extend([
            Method::Limsse(LimsseVariant::BlackBox),
            Method::Limsse(LimsseVariant::MagnitudeScore),
            Method::Limsse(LimsseVariant::MagnitudeProb),
        ]);
        out
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Gradient(v, o, r) => f.write_str(&GradConfig::new(*v, *o, *r).tag()),
            Method::Lrp => f.write_str("lrp"),
            Method::DeepLift => f.write_str("deeplift"),
            Method::Decomp => f.write_str("decomp"),
            Method::Perturb(PerturbMode::Omit, n) => write!(f, "omit{n}"),
            Method::Perturb(PerturbMode::Occlude, n) => write!(f, "occ{n}"),
            Method::Limsse(v) => f.write_str(v.tag()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(m) = Method::catalog().into_iter().find(|m| m.to_string() == s) {
            return Ok(m);
        }
        let window = |prefix: &str| -> Option<usize> {
            s.strip_prefix(prefix)
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
        };
        if let Some(n) = window("omit") {
            return Ok(Method::Perturb(PerturbMode::Omit, n));
        }
        if let Some(n) = window("occ") {
            return Ok(Method::Perturb(PerturbMode::Occlude, n));
        }
        Err(Error::invalid(format!("unknown explanation method `{s}`")))
    }
}

/// Tunable constants shared by the methods that need them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOptions {
    /// LRP / DeepLIFT stabiliser.
    pub eps: f64,
    /// Interpolation points for integrated gradients.
    pub int_steps: usize,
    pub limsse_samples: usize,
    pub limsse_max_len: usize,
    pub seed: u64,
}

impl Default for MethodOptions {
    fn default() -> Self {
        MethodOptions {
            eps: lrp::DEFAULT_EPS,
            int_steps: GradConfig::DEFAULT_STEPS,
            limsse_samples: LimsseConfig::DEFAULT_SAMPLES,
            limsse_max_len: LimsseConfig::DEFAULT_MAX_LEN,
            seed: 0,
        }
    }
}

/// Runs `method` on `x` for class `k`.
pub fn explain(
    params: &NetworkParams,
    x: &TokenSequence,
    k: usize,
    method: &Method,
    options: &MethodOptions,
) -> Result<RelevanceMap> {
    if x.is_empty() {
        return Err(Error::Empty("input sequence"));
    }
    if k >= params.classes() {
        return Err(Error::ClassOutOfRange {
            class: k,
            classes: params.classes(),
        });
    }
    match *method {
        Method::Gradient(variant, output, reduction) => {
            let cfg = GradConfig {
                variant,
                output,
                reduction,
                steps: options.int_steps,
            };
            explain_gradient(params, x, k, &cfg)
        }
        Method::Lrp => lrp_explain(params, x, k, options.eps),
        Method::DeepLift => deeplift_explain(params, x, k, options.eps),
        Method::Decomp => decomp_explain(params, x, k),
        Method::Perturb(mode, n) => perturb_explain(params, x, k, &PerturbConfig::new(mode, n)?),
        Method::Limsse(variant) => {
            let cfg = LimsseConfig {
                variant,
                samples: options.limsse_samples,
                max_len: options.limsse_max_len,
                seed: options.seed,
                fit: None,
            };
            limsse_explain(params, x, k, &cfg)
        }
    }
}
