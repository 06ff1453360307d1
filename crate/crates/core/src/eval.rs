//! Probabilistic and pointwise metrics and the Diebold–Mariano test.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::train::aql;

/// Quantile-crossing rate in percent over all samples and all pairs `τ_l < τ_u`.
/// Forecast entries must be ordered by increasing quantile level.
pub fn aqcr(forecasts: &[Vec<f64>]) -> Result<f64> {
    if forecasts.is_empty() {
        return Err(Error::contract("aqcr of an empty set"));
    }
    let mut crossings = 0usize;
    let mut pairs = 0usize;
    for f in forecasts {
        for l in 0..f.len() {
            for u in l + 1..f.len() {
                pairs += 1;
                if f[l] > f[u] {
                    crossings += 1;
                }
            }
        }
    }
    if pairs == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * crossings as f64 / pairs as f64)
}

/// Index pairs `(l, u)` with `τ_l + τ_u = 1` and `τ_l < τ_u`.
pub fn symmetric_pairs(taus: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (l, &a) in taus.iter().enumerate() {
        for (u, &b) in taus.iter().enumerate() {
            if a < b && (a + b - 1.0).abs() < 1e-9 {
                out.push((l, u));
            }
        }
    }
    out
}

/// Mean width of the central intervals defined by the symmetric pairs.
pub fn aiw(forecasts: &[Vec<f64>], taus: &[f64]) -> f64 {
    let pairs = symmetric_pairs(taus);
    if forecasts.is_empty() || pairs.is_empty() {
        return 0.0;
    }
    let total: f64 = forecasts
        .iter()
        .map(|f| pairs.iter().map(|&(l, u)| f[u] - f[l]).sum::<f64>())
        .sum();
    total / (forecasts.len() * pairs.len()) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pointwise {
    pub rmse: f64,
    pub mae: f64,
    /// Missing when the targets have zero variance or fewer than two samples.
    pub r2: Option<f64>,
}

pub fn pointwise(y: &[f64], yhat: &[f64]) -> Result<Pointwise> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(Error::contract("pointwise metrics need equal, non-empty series"));
    }
    let n = y.len() as f64;
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    let mae = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    let r2 = (y.len() >= 2 && ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    Ok(Pointwise {
        rmse: libm::sqrt(ss_res / n),
        mae,
        r2,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub aql: f64,
    pub aqcr: f64,
    pub aiw: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: Option<f64>,
    pub n_samples: usize,
    pub quantiles: Vec<f64>,
    pub symmetric_pairs: Vec<(f64, f64)>,
}

/// Full report; the point forecast is the 0.5 level, or the middle level if
/// 0.5 is absent.
pub fn report(y: &[f64], forecasts: &[Vec<f64>], taus: &[f64]) -> Result<MetricReport> {
    let loss = aql(y, forecasts, taus)?;
    let mid = taus
        .iter()
        .position(|&t| (t - 0.5).abs() < 1e-12)
        .unwrap_or(taus.len() / 2);
    let median: Vec<f64> = forecasts.iter().map(|f| f[mid]).collect();
    let pw = pointwise(y, &median)?;
    Ok(MetricReport {
        aql: loss,
        aqcr: aqcr(forecasts)?,
        aiw: aiw(forecasts, taus),
        rmse: pw.rmse,
        mae: pw.mae,
        r2: pw.r2,
        n_samples: y.len(),
        quantiles: taus.to_vec(),
        symmetric_pairs: symmetric_pairs(taus)
            .into_iter()
            .map(|(l, u)| (taus[l], taus[u]))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmResult {
    /// Negative values favour the first series.
    pub statistic: f64,
    pub p_value: f64,
}

/// Diebold–Mariano test on two loss series with lag-0 (unbiased sample) variance
/// and a two-sided normal p-value.
///
/// A differential with zero variance and zero mean gives `(0, 1)`; zero variance
/// with a nonzero mean gives `±∞` with p-value 0.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64]) -> Result<DmResult> {
    if loss_a.len() != loss_b.len() || loss_a.len() < 10 {
        return Err(Error::contract("dm test needs two equal series of length >= 10"));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 {
            DmResult {
                statistic: 0.0,
                p_value: 1.0,
            }
        } else {
            DmResult {
                statistic: f64::INFINITY.copysign(mean),
                p_value: 0.0,
            }
        });
    }
    let statistic = mean / libm::sqrt(var / n);
    Ok(DmResult {
        statistic,
        p_value: libm::erfc(statistic.abs() / core::f64::consts::SQRT_2),
    })
}
