use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::refine::ClusterMap;

use super::HarnessError;

/// Prescribed spectrum: distinct eigenvalues with multiplicities, plus the
/// seed for everything random in an instance built from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    pub values: Vec<(f64, usize)>,
    pub seed: u64,
}

impl SpectrumSpec {
    pub fn new(values: Vec<(f64, usize)>, seed: u64) -> Result<Self, HarnessError> {
        if values.is_empty() {
            return Err(HarnessError::Spec("spectrum is empty".into()));
        }
        for (k, &(v, m)) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(HarnessError::Spec(format!("eigenvalue {v} is not finite")));
            }
            if m == 0 {
                return Err(HarnessError::Spec(format!(
                    "multiplicity of {v} must be >= 1"
                )));
            }
            if values[..k].iter().any(|&(w, _)| w == v) {
                return Err(HarnessError::Spec(format!("eigenvalue {v} listed twice")));
            }
        }
        Ok(Self { values, seed })
    }

    /// Parses `"1x3,2x3"`; a bare value means multiplicity one and repeated
    /// values accumulate, so `"1,1,2"` equals `"1x2,2"`.
    pub fn parse(text: &str, seed: u64) -> Result<Self, HarnessError> {
        let mut values = Vec::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (v, m) = match item.split_once(['x', 'X', '*']) {
                Some((v, m)) => (v.trim(), m.trim()),
                None => (item, "1"),
            };
            let v: f64 = v
                .parse()
                .map_err(|_| HarnessError::Spec(format!("bad eigenvalue `{v}` in `{item}`")))?;
            let m: usize = m
                .parse()
                .map_err(|_| HarnessError::Spec(format!("bad multiplicity `{m}` in `{item}`")))?;
            match values.iter_mut().find(|(w, _)| *w == v) {
                Some((_, k)) => *k += m,
                None => values.push((v, m)),
            }
        }
        Self::new(values, seed)
    }

    /// Distinct eigenvalues `1, 2, …, n`.
    pub fn distinct_range(n: usize, seed: u64) -> Self {
        Self {
            values: (1..=n).map(|k| (k as f64, 1)).collect(),
            seed,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.values.iter().map(|&(_, m)| m).sum()
    }

    /// Eigenvalues expanded by multiplicity, in listed order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.values
            .iter()
            .flat_map(|&(v, m)| std::iter::repeat_n(v, m))
            .collect()
    }

    /// Smallest gap between distinct eigenvalues; infinite for a single one.
    pub fn eta(&self) -> f64 {
        let mut eta = f64::INFINITY;
        for (k, &(a, _)) in self.values.iter().enumerate() {
            for &(b, _) in &self.values[k + 1..] {
                eta = eta.min((a - b).abs());
            }
        }
        eta
    }

    /// `‖A‖₂ = max|λ|`.
    pub fn norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &(v, _)| m.max(v.abs()))
    }

    pub fn clusters(&self) -> ClusterMap {
        let sizes: Vec<usize> = self.values.iter().map(|&(_, m)| m).collect();
        ClusterMap::contiguous(&sizes, self.eta().min(f64::MAX))
    }
}

impl fmt::Display for SpectrumSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .values
            .iter()
            .map(|(v, m)| format!("{v}x{m}"))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for SpectrumSpec {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s, super::default_seed())
    }
}
