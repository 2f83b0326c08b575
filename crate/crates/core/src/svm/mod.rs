//! Binary soft-margin SVM with an RBF kernel.
//!
//! Training solves the dual problem
//!
//! ```text
//! max_a  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
//! s.t.   0 <= a_i <= C,  sum_i a_i y_i = 0
//! ```
//!
//! with sequential minimal optimization ([`train_smo`]). Inputs are first
//! mapped per dimension into [-1, 1] by a [`FeatureScaler`] fit on the
//! training rows; the scaler travels with the model.

mod grid;
mod model_io;
mod smo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use grid::{default_c_grid, default_gamma_grid, grid_search, GridPoint, GridSearchResult};
pub use model_io::MODEL_MAGIC;
pub use smo::{dual_objective, train_smo, SmoSolution};

/// Class label. Fado is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Fado,
    Other,
}

impl Label {
    pub fn sign(self) -> f64 {
        match self {
            Label::Fado => 1.0,
            Label::Other => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Label::Fado => 1,
            Label::Other => -1,
        }
    }

    pub fn from_i64(v: i64) -> Result<Self> {
        match v {
            1 => Ok(Label::Fado),
            -1 => Ok(Label::Other),
            _ => Err(Error::InvalidArgument(format!(
                "label must be 1 or -1, got {v}"
            ))),
        }
    }

    /// Sign of a decision value; exactly zero maps to Fado.
    pub fn from_decision(v: f64) -> Self {
        if v >= 0.0 {
            Label::Fado
        } else {
            Label::Other
        }
    }

    pub fn as_token(self) -> &'static str {
        match self {
            Label::Fado => "fado",
            Label::Other => "other",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_token())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Accepts `fado`/`other` as well as `1`/`-1`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fado" | "1" | "+1" => Ok(Label::Fado),
            "other" | "-1" => Ok(Label::Other),
            t => Err(Error::InvalidArgument(format!("unknown label `{t}`"))),
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.as_i8())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Label::from_i64(v).map_err(serde::de::Error::custom)
    }
}

/// Feature rows with labels and identifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    vectors: Vec<Vec<f64>>,
    labels: Vec<Label>,
    ids: Vec<String>,
}

impl LabeledDataset {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<Label>, ids: Vec<String>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: vectors.len(),
                right: labels.len(),
            });
        }
        if vectors.len() != ids.len() {
            return Err(Error::LengthMismatch {
                left: vectors.len(),
                right: ids.len(),
            });
        }
        if let Some(first) = vectors.first() {
            let dim = first.len();
            for (row, v) in vectors.iter().enumerate() {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: v.len(),
                    });
                }
                if let Some(col) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite { row, col });
                }
            }
        }
        Ok(Self {
            vectors,
            labels,
            ids,
        })
    }

    /// Builds a dataset whose ids are the row indices.
    pub fn from_rows(vectors: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        let ids = (0..vectors.len()).map(|i| i.to_string()).collect();
        Self::new(vectors, labels, ids)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn has_both_classes(&self) -> bool {
        self.count(Label::Fado) > 0 && self.count(Label::Other) > 0
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            vectors: indices.iter().map(|&i| self.vectors[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    #[cfg(test)]
    pub(crate) fn vector_mut(&mut self, i: usize) -> &mut Vec<f64> {
        &mut self.vectors[i]
    }
}

/// Per-dimension linear map of the training range onto [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    mins: Vec<f64>,
    maxs: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(train: &LabeledDataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let dim = train.dim();
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for v in train.vectors() {
            for (d, &x) in v.iter().enumerate() {
                mins[d] = mins[d].min(x);
                maxs[d] = maxs[d].max(x);
            }
        }
        Ok(Self { mins, maxs })
    }

    pub fn from_bounds(mins: Vec<f64>, maxs: Vec<f64>) -> Result<Self> {
        if mins.len() != maxs.len() {
            return Err(Error::LengthMismatch {
                left: mins.len(),
                right: maxs.len(),
            });
        }
        if mins
            .iter()
            .zip(&maxs)
            .any(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi))
        {
            return Err(Error::InvalidArgument(
                "scaler bounds must be finite with min <= max".into(),
            ));
        }
        Ok(Self { mins, maxs })
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    pub fn bounds(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.mins.iter().copied().zip(self.maxs.iter().copied())
    }

    /// Scales `x`; constant training dimensions map to 0.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&v, (&lo, &hi))| {
                if hi > lo {
                    -1.0 + 2.0 * (v - lo) / (hi - lo)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

pub(crate) fn squared_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `exp(-gamma * |x - y|^2)`.
pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::NonPositiveGamma(gamma));
    }
    Ok((-gamma * squared_distance(x, y)).exp())
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    /// Iteration cap; `None` derives it from [`KERNEL_EVAL_BUDGET`].
    pub max_iter: Option<usize>,
    /// Memory budget for cached kernel columns when the Gram matrix is not
    /// materialized.
    pub cache_bytes: usize,
}

/// Kernel evaluations one training run may spend on its iterations.
pub const KERNEL_EVAL_BUDGET: usize = 10_000_000;

/// Largest training set whose Gram matrix is materialized in full.
pub const FULL_GRAM_MAX_ROWS: usize = 2000;

impl SvmParams {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self {
            c,
            gamma,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name: "C",
                value: self.c,
            });
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::NonPositiveGamma(self.gamma));
        }
        if !(self.tol > 0.0) {
            return Err(Error::NonPositiveParameter {
                name: "tol",
                value: self.tol,
            });
        }
        Ok(())
    }
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: 1.0,
            tol: 1e-3,
            max_iter: None,
            cache_bytes: 100 << 20,
        }
    }
}

/// A trained classifier; support vectors live in scaled space.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    support_vectors: Vec<Vec<f64>>,
    dual_coeffs: Vec<f64>,
    bias: f64,
    gamma: f64,
    c: f64,
    scaler: FeatureScaler,
    converged: bool,
}

impl SvmModel {
    /// Assembles a model, rejecting empty or inconsistent parts.
    pub fn new(
        support_vectors: Vec<Vec<f64>>,
        dual_coeffs: Vec<f64>,
        bias: f64,
        gamma: f64,
        c: f64,
        scaler: FeatureScaler,
    ) -> Result<Self> {
        if support_vectors.is_empty() {
            return Err(Error::InvalidArgument(
                "a model needs at least one support vector".into(),
            ));
        }
        if support_vectors.len() != dual_coeffs.len() {
            return Err(Error::LengthMismatch {
                left: support_vectors.len(),
                right: dual_coeffs.len(),
            });
        }
        if let Some(sv) = support_vectors.iter().find(|sv| sv.len() != scaler.dim()) {
            return Err(Error::DimensionMismatch {
                expected: scaler.dim(),
                got: sv.len(),
            });
        }
        if !(gamma > 0.0) {
            return Err(Error::NonPositiveGamma(gamma));
        }
        if !(c > 0.0) {
            return Err(Error::NonPositiveParameter {
                name: "C",
                value: c,
            });
        }
        Ok(Self {
            support_vectors,
            dual_coeffs,
            bias,
            gamma,
            c,
            scaler,
            converged: true,
        })
    }

    /// Fits the scaler on `train`, then solves the dual with SMO.
    pub fn train(train: &LabeledDataset, params: &SvmParams) -> Result<Self> {
        params.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if !train.has_both_classes() {
            return Err(Error::SingleClassDataset);
        }
        let scaler = FeatureScaler::fit(train)?;
        let scaled = train
            .vectors()
            .iter()
            .map(|v| scaler.transform(v))
            .collect::<Result<Vec<_>>>()?;
        let ys: Vec<f64> = train.labels().iter().map(|l| l.sign()).collect();
        let sol = train_smo(&scaled, &ys, params)?;
        if !sol.converged {
            log::warn!(
                "SMO stopped after {} iterations without reaching tol {} (C={}, gamma={})",
                sol.iterations,
                params.tol,
                params.c,
                params.gamma
            );
        }
        let (svs, coeffs): (Vec<_>, Vec<_>) = scaled
            .into_iter()
            .zip(sol.alpha.iter().zip(&ys))
            .filter(|(_, (&a, _))| a > 0.0)
            .map(|(x, (&a, &y))| (x, a * y))
            .unzip();
        let mut model = Self::new(svs, coeffs, sol.bias, params.gamma, params.c, scaler)?;
        model.converged = sol.converged;
        Ok(model)
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    /// `alpha_i * y_i` per support vector.
    pub fn dual_coeffs(&self) -> &[f64] {
        &self.dual_coeffs
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn scaler(&self) -> &FeatureScaler {
        &self.scaler
    }

    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }

    /// False when training hit its iteration cap before the KKT tolerance.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Decision value of an input already mapped through the scaler.
    pub fn decision_value_scaled(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        let sum: f64 = self
            .support_vectors
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(sv, coef)| coef * (-self.gamma * squared_distance(sv, z)).exp())
            .sum();
        Ok(sum + self.bias)
    }

    /// `sum_i coef_i K(sv_i, scale(x)) + bias`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col });
        }
        self.decision_value_scaled(&self.scaler.transform(x)?)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(Label::from_decision(self.decision_value(x)?))
    }
}
