//! Ranking quality of predictions against measured values.

use std::cmp::Ordering;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction and target lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("correlation undefined: constant predictions or targets (mse {mse})")]
    DegenerateVariance { mse: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankingMetrics {
    pub pearson: f64,
    pub kendall_tau: f64,
    pub mse: f64,
}

pub fn mse(pred: &[f64], truth: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n
}

/// Sample Pearson correlation; `None` when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Kendall tau-b: `(C - D) / sqrt((C + D + Tx) (C + D + Ty))`, where `Tx`
/// counts pairs tied only in `x` and `Ty` pairs tied only in `y`. `None`
/// when either side is constant.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0u64, 0u64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let ox = x[i].partial_cmp(&x[j]).unwrap_or(Ordering::Equal);
            let oy = y[i].partial_cmp(&y[j]).unwrap_or(Ordering::Equal);
            match (ox, oy) {
                (Ordering::Equal, Ordering::Equal) => {}
                (Ordering::Equal, _) => tie_x += 1,
                (_, Ordering::Equal) => tie_y += 1,
                (a, b) if a == b => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let base = (concordant + discordant) as f64;
    let denom = ((base + tie_x as f64) * (base + tie_y as f64)).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((concordant as f64 - discordant as f64) / denom)
}

/// Pearson's rho, Kendall's tau-b and mean squared error of `pred`
/// against `truth`.
pub fn ranking_metrics_of(pred: &[f64], truth: &[f64]) -> Result<RankingMetrics, MetricsError> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(pred.len(), truth.len()));
    }
    let mse = mse(pred, truth);
    if pred.len() < 2 {
        return Err(MetricsError::DegenerateVariance { mse });
    }
    match (pearson(pred, truth), kendall_tau_b(pred, truth)) {
        (Some(pearson), Some(kendall_tau)) => Ok(RankingMetrics {
            pearson,
            kendall_tau,
            mse,
        }),
        _ => Err(MetricsError::DegenerateVariance { mse }),
    }
}
