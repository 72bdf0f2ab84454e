//! Plain-text model files.
//!
//! ```text
//! sslda-model v1
//! method iclda
//! dim 2
//! seed 1
//! prior 0.5 0.5
//! mean1 1.02 0.98
//! mean2 -0.97 -1.01
//! cov 0.61 0.01
//! cov 0.01 0.59
//! label1 yes
//! label2 no
//! trace iterations 14 converged true fell_back false objective -231.5
//! ```
//!
//! One `cov` line per covariance row. Numbers use shortest round-trip
//! formatting, so a saved model loads back bit for bit. `label1`/`label2`
//! (the original label values, rest of line) and `trace` are optional;
//! `#` starts a comment line.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use sslda::{FitTrace, Method, ModelParams, SymMatrix, Vector};

pub const HEADER: &str = "sslda-model v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSummary {
    pub iterations: usize,
    pub converged: bool,
    pub fell_back: bool,
    pub objective: Option<f64>,
}

impl From<&FitTrace> for TraceSummary {
    fn from(t: &FitTrace) -> Self {
        TraceSummary {
            iterations: t.iterations,
            converged: t.converged,
            fell_back: t.fell_back,
            objective: t.final_objective(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub method: Method,
    pub seed: u64,
    pub params: ModelParams,
    pub label_names: Option<[String; 2]>,
    pub trace: Option<TraceSummary>,
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

impl ModelFile {
    pub fn render(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "method {}", self.method);
        let _ = writeln!(out, "dim {}", p.dim());
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "prior {} {}", p.pi1, p.pi2);
        let _ = writeln!(out, "mean1 {}", join(p.mu1.iter().copied()));
        let _ = writeln!(out, "mean2 {}", join(p.mu2.iter().copied()));
        for row in p.sigma.as_matrix().row_iter() {
            let _ = writeln!(out, "cov {}", join(row.iter().copied()));
        }
        if let Some([a, b]) = &self.label_names {
            let _ = writeln!(out, "label1 {a}");
            let _ = writeln!(out, "label2 {b}");
        }
        if let Some(t) = &self.trace {
            let _ = write!(
                out,
                "trace iterations {} converged {} fell_back {}",
                t.iterations, t.converged, t.fell_back
            );
            if let Some(o) = t.objective {
                let _ = write!(out, " objective {o}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, HEADER)) => {}
            Some((_, other)) => bail!("unsupported model header {other:?} (expected {HEADER:?})"),
            None => bail!("empty model file"),
        }
        let (mut method, mut dim, mut seed, mut prior) = (None, None, None, None);
        let (mut mean1, mut mean2) = (None, None);
        let mut cov: Vec<Vec<f64>> = Vec::new();
        let (mut label1, mut label2, mut trace) = (None, None, None);
        for (no, line) in lines {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let numbers = || -> Result<Vec<f64>> {
                rest.split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|e| anyhow!("line {no}: {v:?}: {e}")))
                    .collect()
            };
            match key {
                "method" => {
                    method = Some(
                        rest.trim()
                            .parse::<Method>()
                            .with_context(|| format!("line {no}"))?,
                    )
                }
                "dim" => {
                    dim = Some(
                        rest.trim()
                            .parse::<usize>()
                            .with_context(|| format!("line {no}"))?,
                    )
                }
                "seed" => seed = Some(rest.trim().parse::<u64>().with_context(|| format!("line {no}"))?),
                "prior" => prior = Some(numbers()?),
                "mean1" => mean1 = Some(numbers()?),
                "mean2" => mean2 = Some(numbers()?),
                "cov" => cov.push(numbers()?),
                "label1" => label1 = Some(rest.to_string()),
                "label2" => label2 = Some(rest.to_string()),
                "trace" => trace = Some(parse_trace(rest).with_context(|| format!("line {no}"))?),
                _ => bail!("line {no}: unknown key {key:?}"),
            }
        }
        let method = method.ok_or_else(|| anyhow!("missing `method`"))?;
        let dim = dim.ok_or_else(|| anyhow!("missing `dim`"))?;
        let prior = prior.ok_or_else(|| anyhow!("missing `prior`"))?;
        let mean1 = mean1.ok_or_else(|| anyhow!("missing `mean1`"))?;
        let mean2 = mean2.ok_or_else(|| anyhow!("missing `mean2`"))?;
        if prior.len() != 2 {
            bail!("`prior` needs two values");
        }
        if mean1.len() != dim || mean2.len() != dim || cov.len() != dim || cov.iter().any(|r| r.len() != dim)
        {
            bail!("means and covariance must match dim {dim}");
        }
        let flat: Vec<f64> = cov.into_iter().flatten().collect();
        let params = ModelParams {
            pi1: prior[0],
            pi2: prior[1],
            mu1: Vector::from_vec(mean1),
            mu2: Vector::from_vec(mean2),
            sigma: SymMatrix::from_row_slice(dim, &flat)?,
        };
        let label_names = match (label1, label2) {
            (Some(a), Some(b)) => Some([a, b]),
            (None, None) => None,
            _ => bail!("`label1` and `label2` must appear together"),
        };
        Ok(ModelFile {
            method,
            seed: seed.unwrap_or(0),
            params,
            label_names,
            trace,
        })
    }
}

fn parse_trace(rest: &str) -> Result<TraceSummary> {
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let mut t = TraceSummary {
        iterations: 0,
        converged: false,
        fell_back: false,
        objective: None,
    };
    for pair in fields.chunks(2) {
        let [k, v] = pair else {
            bail!("odd number of trace fields")
        };
        match *k {
            "iterations" => t.iterations = v.parse()?,
            "converged" => t.converged = v.parse()?,
            "fell_back" => t.fell_back = v.parse()?,
            "objective" => t.objective = Some(v.parse()?),
            _ => bail!("unknown trace field {k:?}"),
        }
    }
    Ok(t)
}
