use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::stats;

/// Candidate ridge strengths, tried in order; the first one with the lowest
/// development MSE wins.
pub const RIDGE_GRID: [f64; 7] = [0.0, 1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0];

const MIN_TRAINING_POINTS: usize = 10;

/// Score-file name of the trained combiner.
pub const TRAINED_COMBINER_NAME: &str = "RidgeCombined";

pub const TRAINED_NOTE: &str =
    "RidgeCombined is ridge regression over z-scored (ROUGE, SLOR) features, standing in for an RBF-kernel SVR";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: f64,
    /// Population variance; always > 0.
    pub variance: f64,
}

impl FeatureNorm {
    fn fit(name: &str, values: &[f64]) -> Result<Self, HarnessError> {
        let variance = stats::variance(values);
        if variance.is_nan() || variance <= 0.0 {
            return Err(HarnessError::DegenerateVariance { metric: name.to_string() });
        }
        Ok(Self { mean: stats::mean(values), variance })
    }

    pub fn z(&self, x: f64) -> f64 {
        (x - self.mean) / self.variance.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CombinerKind {
    #[serde(rename = "ROUGE-LM")]
    RougeLm,
    #[serde(rename = "trained")]
    Trained,
}

/// `intercept + w_rouge·z(rouge) + w_slor·z(slor)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedMetric {
    pub kind: CombinerKind,
    pub rouge_norm: FeatureNorm,
    pub slor_norm: FeatureNorm,
    pub weights: [f64; 2],
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge_lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CombinedMetric {
    pub fn name(&self) -> &'static str {
        match self.kind {
            CombinerKind::RougeLm => "ROUGE-LM",
            CombinerKind::Trained => TRAINED_COMBINER_NAME,
        }
    }

    pub fn predict(&self, rouge: f64, slor: f64) -> f64 {
        self.intercept + self.weights[0] * self.rouge_norm.z(rouge) + self.weights[1] * self.slor_norm.z(slor)
    }

    /// The same predictor written over raw feature values:
    /// `(a_rouge, a_slor, b)` with `predict = a_rouge·rouge + a_slor·slor + b`.
    pub fn raw_coefficients(&self) -> (f64, f64, f64) {
        let a0 = self.weights[0] / self.rouge_norm.variance.sqrt();
        let a1 = self.weights[1] / self.slor_norm.variance.sqrt();
        (a0, a1, self.intercept - a0 * self.rouge_norm.mean - a1 * self.slor_norm.mean)
    }
}

fn lookup(map: &BTreeMap<String, f64>, metric: &str, id: &str) -> Result<f64, HarnessError> {
    map.get(id).copied().ok_or_else(|| HarnessError::MissingScore { metric: metric.to_string(), id: id.to_string() })
}

/// Z-scores both metrics with statistics over `fit_ids` and adds them.
/// Returns the combination for every id scored by `rouge`.
pub fn combine_rouge_lm(
    rouge: &BTreeMap<String, f64>,
    slor: &BTreeMap<String, f64>,
    fit_ids: &[String],
) -> Result<(CombinedMetric, BTreeMap<String, f64>), HarnessError> {
    let fit_r = fit_ids.iter().map(|id| lookup(rouge, "rouge", id)).collect::<Result<Vec<_>, _>>()?;
    let fit_s = fit_ids.iter().map(|id| lookup(slor, "slor", id)).collect::<Result<Vec<_>, _>>()?;
    let metric = CombinedMetric {
        kind: CombinerKind::RougeLm,
        rouge_norm: FeatureNorm::fit("rouge", &fit_r)?,
        slor_norm: FeatureNorm::fit("slor", &fit_s)?,
        weights: [1.0, 1.0],
        intercept: 0.0,
        ridge_lambda: None,
        dev_mse: None,
        note: None,
    };
    let mut combined = BTreeMap::new();
    for (id, &r) in rouge {
        combined.insert(id.clone(), metric.predict(r, lookup(slor, "slor", id)?));
    }
    Ok((metric, combined))
}

/// Solves `(ZᵀZ + λI) w = Zᵀy` for centred two-column `Z`. `None` if singular.
fn ridge_2x2(z: &[[f64; 2]], y: &[f64], lambda: f64) -> Option<[f64; 2]> {
    let (mut a, mut b, mut d, mut u, mut v) = (lambda, 0.0, lambda, 0.0, 0.0);
    for (zi, &yi) in z.iter().zip(y) {
        a += zi[0] * zi[0];
        b += zi[0] * zi[1];
        d += zi[1] * zi[1];
        u += zi[0] * yi;
        v += zi[1] * yi;
    }
    let det = a * d - b * b;
    if det.is_nan() || det.abs() <= 1e-12 * (a * d).abs().max(f64::MIN_POSITIVE) {
        return None;
    }
    Some([(d * u - b * v) / det, (a * v - b * u) / det])
}

/// Ridge regression on z-scored `(rouge, slor)` features. Normalization and
/// weights come from `train_ids`; the ridge strength is picked from
/// [`RIDGE_GRID`] by MSE on `dev_ids`.
pub fn train_combiner(
    features: &BTreeMap<String, (f64, f64)>,
    targets: &BTreeMap<String, f64>,
    train_ids: &[String],
    dev_ids: &[String],
) -> Result<CombinedMetric, HarnessError> {
    if train_ids.len() < MIN_TRAINING_POINTS {
        return Err(HarnessError::TooFewSamples { needed: MIN_TRAINING_POINTS, got: train_ids.len() });
    }
    if dev_ids.is_empty() {
        return Err(HarnessError::TooFewSamples { needed: 1, got: 0 });
    }
    let train_set: std::collections::HashSet<&String> = train_ids.iter().collect();
    if let Some(id) = dev_ids.iter().find(|id| train_set.contains(id)) {
        return Err(HarnessError::OverlappingIds(id.clone()));
    }
    let row = |id: &String| -> Result<((f64, f64), f64), HarnessError> {
        let f = features
            .get(id)
            .copied()
            .ok_or_else(|| HarnessError::MissingScore { metric: "features".into(), id: id.clone() })?;
        let t = targets
            .get(id)
            .copied()
            .ok_or_else(|| HarnessError::MissingScore { metric: "targets".into(), id: id.clone() })?;
        Ok((f, t))
    };
    let train = train_ids.iter().map(row).collect::<Result<Vec<_>, _>>()?;
    let dev = dev_ids.iter().map(row).collect::<Result<Vec<_>, _>>()?;

    let rouge: Vec<f64> = train.iter().map(|r| r.0 .0).collect();
    let slor: Vec<f64> = train.iter().map(|r| r.0 .1).collect();
    let y: Vec<f64> = train.iter().map(|r| r.1).collect();
    let rouge_norm = FeatureNorm::fit("rouge", &rouge)?;
    let slor_norm = FeatureNorm::fit("slor", &slor)?;

    let z: Vec<[f64; 2]> = train.iter().map(|((r, s), _)| [rouge_norm.z(*r), slor_norm.z(*s)]).collect();
    let z_mean = [
        stats::mean(&z.iter().map(|p| p[0]).collect::<Vec<_>>()),
        stats::mean(&z.iter().map(|p| p[1]).collect::<Vec<_>>()),
    ];
    let y_mean = stats::mean(&y);
    let zc: Vec<[f64; 2]> = z.iter().map(|p| [p[0] - z_mean[0], p[1] - z_mean[1]]).collect();
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();

    let mut best: Option<CombinedMetric> = None;
    for &lambda in &RIDGE_GRID {
        let Some(w) = ridge_2x2(&zc, &yc, lambda) else { continue };
        let mut candidate = CombinedMetric {
            kind: CombinerKind::Trained,
            rouge_norm,
            slor_norm,
            weights: w,
            intercept: y_mean - w[0] * z_mean[0] - w[1] * z_mean[1],
            ridge_lambda: Some(lambda),
            dev_mse: None,
            note: Some(TRAINED_NOTE.to_string()),
        };
        let sq: Vec<f64> = dev.iter().map(|((r, s), t)| (candidate.predict(*r, *s) - t).powi(2)).collect();
        let mse = stats::mean(&sq);
        candidate.dev_mse = Some(mse);
        if best.as_ref().is_none_or(|b| mse < b.dev_mse.expect("set above")) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("positive ridge strengths always give a solvable system"))
}
