//! Baseline regression models for per-bin sentiment proportions.
//!
//! Each model is an unweighted least-squares fit of `p_pos` or `p_neg` on an
//! intercept, one indicator per non-reference level of each included
//! categorical factor, and optionally the bin's social proportion.

mod design;
mod ols;
mod qr;

use serde::{Deserialize, Serialize};

pub use design::{
    build_design_matrix, DesignLayout, DesignMatrix, Factor, FactorSpec, INTERCEPT, SOCIAL,
};
pub use ols::{fit_ols, fit_ols_many, Matrix, OlsFit, RANK_TOLERANCE};

use crate::aggregate::CityHourBin;
use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::polarity::Polarity;
use crate::stats;

pub const DEFAULT_MIN_BIN_SIZE: u64 = 5;
pub const DEFAULT_EPSILON_CLAMP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Bins with fewer tweets are left out of training.
    pub min_bin_size: u64,
    /// Predictions are clamped to `[ε, 1 − ε]`.
    pub epsilon_clamp: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_bin_size: DEFAULT_MIN_BIN_SIZE,
            epsilon_clamp: DEFAULT_EPSILON_CLAMP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: FactorSpec,
    pub outcome: Polarity,
    pub column_names: Vec<String>,
    pub beta: Vec<f64>,
    pub stderr: Vec<f64>,
    pub sigma2: f64,
    pub r_squared: f64,
    pub n_obs: usize,
    pub min_bin_size: u64,
    pub epsilon_clamp: f64,
    #[serde(skip)]
    layout: DesignLayout,
}

impl FittedModel {
    fn from_fit(layout: DesignLayout, outcome: Polarity, fit: OlsFit, n_obs: usize, opts: FitOptions) -> Self {
        Self {
            spec: layout.spec.clone().expect("layout has a spec"),
            outcome,
            column_names: layout.column_names.clone(),
            beta: fit.beta,
            stderr: fit.stderr,
            sigma2: fit.sigma2,
            r_squared: fit.r_squared,
            n_obs,
            min_bin_size: opts.min_bin_size,
            epsilon_clamp: opts.epsilon_clamp,
            layout,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut m: FittedModel = serde_json::from_str(text)
            .map_err(|e| Error::parse("model", e.line(), e.to_string()))?;
        let k = m.column_names.len();
        if m.beta.len() != k || m.stderr.len() != k {
            return Err(Error::Validation(format!(
                "model has {k} columns but {} coefficients and {} standard errors",
                m.beta.len(),
                m.stderr.len()
            )));
        }
        m.layout = DesignLayout::from_columns(m.spec.clone(), m.column_names.clone())?;
        Ok(m)
    }

    pub fn layout(&self) -> &DesignLayout {
        &self.layout
    }

    /// Unclamped linear prediction and whether an unseen level was met.
    pub fn predict_linear(&self, bin: &CityHourBin) -> (f64, bool) {
        let mut row = vec![0.0; self.beta.len()];
        let unseen = self.layout.fill_row(bin, &mut row);
        let v = row.iter().zip(&self.beta).map(|(x, b)| x * b).sum();
        (v, unseen)
    }

    /// Expected labeled proportion for `bin`, clamped to `[ε, 1 − ε]`.
    pub fn predict(&self, bin: &CityHourBin) -> Prediction {
        let (v, unseen_level) = self.predict_linear(bin);
        Prediction {
            proportion: v.clamp(self.epsilon_clamp, 1.0 - self.epsilon_clamp),
            unseen_level,
        }
    }

    pub fn observed(&self, bin: &CityHourBin) -> f64 {
        match self.outcome {
            Polarity::Positive => bin.p_pos,
            Polarity::Negative => bin.p_neg,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub proportion: f64,
    /// Some level of this bin was absent from training and was treated as
    /// the reference level.
    pub unseen_level: bool,
}

/// Bins eligible for training under `min_bin_size`.
pub fn training_bins(bins: &[CityHourBin], min_bin_size: u64) -> Vec<CityHourBin> {
    bins.iter().filter(|b| b.n_total >= min_bin_size).cloned().collect()
}

/// Fits the positive and negative models for one spec on the same design.
pub fn fit_models(
    exec: Exec,
    bins: &[CityHourBin],
    spec: &FactorSpec,
    opts: FitOptions,
) -> Result<(FittedModel, FittedModel)> {
    let train = training_bins(bins, opts.min_bin_size);
    let dm = build_design_matrix(exec, &train, spec)?;
    let mut fits = fit_ols_many(exec, &dm.x, dm.column_names(), &[&dm.y_pos, &dm.y_neg])?;
    let neg = fits.pop().expect("two fits");
    let pos = fits.pop().expect("two fits");
    let n = train.len();
    Ok((
        FittedModel::from_fit(dm.layout.clone(), Polarity::Positive, pos, n, opts),
        FittedModel::from_fit(dm.layout, Polarity::Negative, neg, n, opts),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Significance {
    pub p_values: Vec<f64>,
    /// Coefficients with zero standard error but nonzero value (p forced to 0).
    pub exact_fit: Vec<bool>,
    pub n_significant: usize,
}

/// Two-sided normal-approximation p-values for every coefficient.
pub fn coefficient_significance(m: &FittedModel) -> Result<Significance> {
    let k = m.beta.len();
    if m.n_obs < k + 31 {
        return Err(Error::Validation(format!(
            "normal approximation needs n − k > 30 (n = {}, k = {k})",
            m.n_obs
        )));
    }
    Ok(significance_from(&m.beta, &m.stderr))
}

pub(crate) fn significance_from(beta: &[f64], stderr: &[f64]) -> Significance {
    let mut p_values = Vec::with_capacity(beta.len());
    let mut exact_fit = Vec::with_capacity(beta.len());
    for (&b, &se) in beta.iter().zip(stderr) {
        let (p, exact) = if b == 0.0 {
            (1.0, false)
        } else if se == 0.0 {
            (0.0, true)
        } else {
            (stats::normal_two_sided_p(b / se), false)
        };
        p_values.push(p);
        exact_fit.push(exact);
    }
    let n_significant = p_values.iter().filter(|&&p| p < 0.05).count();
    Significance {
        p_values,
        exact_fit,
        n_significant,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationEstimate {
    pub r: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Pearson r with a 95% Fisher-z interval.
pub fn evaluate_correlation(predicted: &[f64], observed: &[f64]) -> Result<CorrelationEstimate> {
    if predicted.len() < 4 {
        return Err(Error::UndefinedCorrelation("need at least 4 pairs"));
    }
    let r = stats::pearson(predicted, observed)?;
    let (ci_low, ci_high) = stats::fisher_interval(r, predicted.len());
    Ok(CorrelationEstimate {
        r,
        ci_low,
        ci_high,
        n: predicted.len(),
    })
}

/// One row of a model comparison table.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSummary {
    pub name: String,
    pub outcome: Polarity,
    pub n_coefficients: usize,
    pub n_significant: usize,
    pub r_squared: f64,
    pub test: Option<CorrelationEstimate>,
}

/// Held-out correlation between clamped predictions and observed proportions.
pub fn test_correlation(exec: Exec, m: &FittedModel, test: &[CityHourBin]) -> Result<CorrelationEstimate> {
    let test: Vec<&CityHourBin> = test.iter().filter(|b| b.n_total >= m.min_bin_size).collect();
    let predicted = exec::map(exec, &test, |b| m.predict(b).proportion);
    let observed: Vec<f64> = test.iter().map(|b| m.observed(b)).collect();
    evaluate_correlation(&predicted, &observed)
}

/// Fits every spec in `specs` and summarizes both outcomes.
pub fn compare_models(
    exec: Exec,
    train: &[CityHourBin],
    test: &[CityHourBin],
    specs: &[(&str, FactorSpec)],
    opts: FitOptions,
) -> Result<Vec<ModelSummary>> {
    let mut out = Vec::new();
    for (name, spec) in specs {
        let (pos, neg) = fit_models(exec, train, spec, opts)?;
        for m in [neg, pos] {
            let sig = significance_from(&m.beta, &m.stderr);
            out.push(ModelSummary {
                name: name.to_string(),
                outcome: m.outcome,
                n_coefficients: m.beta.len(),
                n_significant: sig.n_significant,
                r_squared: m.r_squared,
                test: test_correlation(exec, &m, test).ok(),
            });
        }
    }
    Ok(out)
}
