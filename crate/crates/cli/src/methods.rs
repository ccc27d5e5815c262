use clap::Args;
use pointgame_core::explain::PerturbMode;
use pointgame_core::{Method, MethodOptions};

use crate::failure::Failure;

#[derive(Args, Debug, Clone)]
pub struct MethodArgs {
    /// Comma-separated method tags (e.g. `lrp,grad1_s_dot,limsse_ms_s`).
    /// `all` is the full catalog; bare `omit`/`occ` expand over `--perturb-n`.
    #[arg(long, default_value = "all")]
    pub methods: String,
    /// Stabilizer for LRP and DeepLIFT.
    #[arg(long, default_value_t = 0.001)]
    pub eps: f64,
    /// Interpolation points for integrated gradients.
    #[arg(long, default_value_t = 50)]
    pub int_steps: usize,
    /// LIMSSE substring samples per document.
    #[arg(long, default_value_t = 3000)]
    pub limsse_n: usize,
    /// Longest LIMSSE substring.
    #[arg(long, default_value_t = 6)]
    pub limsse_maxlen: usize,
    /// Window widths used by `all`, `omit` and `occ`.
    #[arg(long, value_delimiter = ',', default_value = "1,3,7")]
    pub perturb_n: Vec<usize>,
    /// Seed for LIMSSE sampling and the random baseline.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl MethodArgs {
    pub fn options(&self) -> Result<MethodOptions, Failure> {
        if self.eps.is_nan() || self.eps <= 0.0 {
            return Err(Failure::usage(format!(
                "--eps must be positive, got {}",
                self.eps
            )));
        }
        for (flag, v) in [
            ("--int-steps", self.int_steps),
            ("--limsse-n", self.limsse_n),
            ("--limsse-maxlen", self.limsse_maxlen),
        ] {
            if v == 0 {
                return Err(Failure::usage(format!("{flag} must be at least 1")));
            }
        }
        Ok(MethodOptions {
            eps: self.eps,
            int_steps: self.int_steps,
            limsse_samples: self.limsse_n,
            limsse_max_len: self.limsse_maxlen,
            seed: self.seed,
        })
    }

    pub fn methods(&self) -> Result<Vec<Method>, Failure> {
        if self.perturb_n.is_empty() || self.perturb_n.contains(&0) {
            return Err(Failure::usage("--perturb-n needs positive window widths"));
        }
        let mut out: Vec<Method> = Vec::new();
        let push = |m: Method, out: &mut Vec<Method>| {
            if !out.contains(&m) {
                out.push(m);
            }
        };
        for tag in self
            .methods
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
        {
            match tag.to_ascii_lowercase().as_str() {
                "all" => {
                    let mut expanded: Vec<PerturbMode> = Vec::new();
                    for m in Method::catalog() {
                        match m {
                            Method::Perturb(mode, _) if expanded.contains(&mode) => {}
                            Method::Perturb(mode, _) => {
                                expanded.push(mode);
                                for &n in &self.perturb_n {
                                    push(Method::Perturb(mode, n), &mut out);
                                }
                            }
                            other => push(other, &mut out),
                        }
                    }
                }
                "omit" | "occ" => {
                    let mode = if tag.eq_ignore_ascii_case("omit") {
                        PerturbMode::Omit
                    } else {
                        PerturbMode::Occlude
                    };
                    for &n in &self.perturb_n {
                        push(Method::Perturb(mode, n), &mut out);
                    }
                }
                _ => {
                    let m: Method = tag
                        .parse()
                        .map_err(|e: pointgame_core::Error| Failure::usage(e.to_string()))?;
                    push(m, &mut out);
                }
            }
        }
        if out.is_empty() {
            return Err(Failure::usage("no methods selected"));
        }
        Ok(out)
    }
}
