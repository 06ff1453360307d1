//! Naive forecasts with hourly residual quantiles, hand-crafted features, linear
//! quantile regression and an MLP.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use chrono::{DateTime, TimeDelta, Timelike, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::market::{percentile_sorted, Sample};
use crate::model::glorot;
use crate::tensor::{ParamSet, Tape, Tensor, Var};
use crate::train::QuantileNet;

/// Index labels keyed by delivery start.
pub type LabelHistory = BTreeMap<DateTime<Utc>, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveVariant {
    /// Label of the delivery hour one hour earlier.
    PrevHour,
    /// Label of the same hour on the previous day.
    PrevDaySameHour,
    /// Mean label of the same hour over the previous three days.
    Mean3SameHour,
}

impl NaiveVariant {
    pub const ALL: [NaiveVariant; 3] = [
        NaiveVariant::PrevHour,
        NaiveVariant::PrevDaySameHour,
        NaiveVariant::Mean3SameHour,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NaiveVariant::PrevHour => "naive_prev_hour",
            NaiveVariant::PrevDaySameHour => "naive_prev_day",
            NaiveVariant::Mean3SameHour => "naive_mean3",
        }
    }
}

/// Point forecast for `target`, or `None` when the needed history is missing.
pub fn naive_point(history: &LabelHistory, target: DateTime<Utc>, variant: NaiveVariant) -> Option<f64> {
    let at = |hours: i64| history.get(&(target - TimeDelta::hours(hours))).copied();
    match variant {
        NaiveVariant::PrevHour => at(1),
        NaiveVariant::PrevDaySameHour => at(24),
        NaiveVariant::Mean3SameHour => Some((at(24)? + at(48)? + at(72)?) / 3.0),
    }
}

/// Per delivery hour, empirical residual quantiles at each level.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualQuantiles {
    pub taus: Vec<f64>,
    /// `by_hour[h]` is `None` when no residual was seen for hour `h`.
    pub by_hour: Vec<Option<Vec<f64>>>,
}

impl ResidualQuantiles {
    /// Fits from `(delivery, residual)` pairs of the training period.
    pub fn fit(residuals: &[(DateTime<Utc>, f64)], taus: &[f64]) -> Self {
        let mut groups: Vec<Vec<f64>> = vec![Vec::new(); 24];
        for (t, r) in residuals {
            groups[t.hour() as usize].push(*r);
        }
        let by_hour = groups
            .into_iter()
            .map(|mut g| {
                if g.is_empty() {
                    return None;
                }
                g.sort_by(f64::total_cmp);
                Some(taus.iter().map(|&t| percentile_sorted(&g, t)).collect())
            })
            .collect();
        ResidualQuantiles {
            taus: taus.to_vec(),
            by_hour,
        }
    }
}

/// Point forecast shifted by the residual quantiles of the delivery hour.
pub fn naive_probabilistic(rq: &ResidualQuantiles, point: f64, delivery: DateTime<Utc>) -> Result<Vec<f64>> {
    let h = delivery.hour();
    let q = rq.by_hour[h as usize]
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("no training residuals for hour {h}")))?;
    Ok(q.iter().map(|r| point + r).collect())
}

fn lead(sample: &Sample) -> f64 {
    (sample.delivery_start - sample.forecast_time).num_milliseconds() as f64 / 60_000.0
}

/// Volume-weighted price of both sides over the 15 minutes before `t_f`; falls
/// back to the last price when that window is empty. `None` without any trade.
pub fn feature_vwap15(sample: &Sample) -> Option<f64> {
    let horizon = lead(sample) + 15.0;
    let (mut pv, mut v) = (0.0, 0.0);
    for r in sample.buy.iter().chain(&sample.sell) {
        if r.minutes_to_delivery <= horizon {
            pv += r.price * r.volume;
            v += r.volume;
        }
    }
    if v > 0.0 {
        Some(pv / v)
    } else {
        feature_last_price(sample)
    }
}

/// Price of the latest trade on either side. Ties go to the buy side.
pub fn feature_last_price(sample: &Sample) -> Option<f64> {
    sample
        .buy
        .iter()
        .chain(&sample.sell)
        .fold(None, |best: Option<&crate::market::TradeRow>, r| match best {
            Some(b) if b.minutes_to_delivery <= r.minutes_to_delivery => Some(b),
            _ => Some(r),
        })
        .map(|r| r.price)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqrConfig {
    pub iterations: usize,
    pub lr: f64,
    /// ℓ1 strength, applied only with more than one feature.
    pub l1: f64,
}

impl Default for LqrConfig {
    fn default() -> Self {
        LqrConfig {
            iterations: 2000,
            lr: 1e-2,
            l1: 0.0,
        }
    }
}

/// Independent linear models, one per quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrModel {
    pub taus: Vec<f64>,
    /// `(weights, intercept)` per level.
    pub coefs: Vec<(Vec<f64>, f64)>,
}

impl LqrModel {
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.coefs
            .iter()
            .map(|(w, b)| w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b)
            .collect()
    }
}

/// Full-batch subgradient descent on the pinball loss from zero coefficients.
pub fn lqr_fit(x: &[Vec<f64>], y: &[f64], taus: &[f64], cfg: &LqrConfig) -> Result<LqrModel> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::contract("lqr needs equal, non-empty features and targets"));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::contract("ragged feature matrix"));
    }
    let n = x.len() as f64;
    let l1 = if d > 1 { cfg.l1 } else { 0.0 };
    let mut coefs = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        for it in 0..cfg.iterations {
            let mut gw = vec![0.0; d];
            let mut gb = 0.0;
            for (xi, &yi) in x.iter().zip(y) {
                let pred = w.iter().zip(xi).map(|(a, c)| a * c).sum::<f64>() + b;
                let g = if yi >= pred { -tau } else { 1.0 - tau } / n;
                gb += g;
                for (gwj, xij) in gw.iter_mut().zip(xi) {
                    *gwj += g * xij;
                }
            }
            for (wj, gj) in w.iter_mut().zip(&gw) {
                let penalty = if *wj == 0.0 { 0.0 } else { l1 * wj.signum() };
                *wj -= cfg.lr * (gj + penalty);
            }
            b -= cfg.lr * gb;
            if !b.is_finite() || w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("lqr diverged at iteration {it}")));
            }
        }
        coefs.push((w, b));
    }
    Ok(LqrModel {
        taus: taus.to_vec(),
        coefs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub inputs: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    pub quantiles: Vec<f64>,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(inputs: usize, quantiles: &[f64]) -> Self {
        MlpConfig {
            inputs,
            hidden: 16,
            layers: 2,
            dropout: 0.1,
            quantiles: quantiles.to_vec(),
            seed: 0,
        }
    }
}

/// Swish MLP with a plain multi-quantile output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    config: MlpConfig,
    params: ParamSet,
}

impl Mlp {
    pub fn new(config: MlpConfig) -> Result<Self> {
        if config.inputs == 0 || config.hidden == 0 || config.quantiles.is_empty() {
            return Err(Error::contract("mlp dimensions must be positive"));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::contract("dropout must lie in [0, 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let mut width = config.inputs;
        for l in 0..config.layers {
            params.add(format!("mlp.{l}.weight"), glorot(&mut rng, width, config.hidden))?;
            params.add(format!("mlp.{l}.bias"), Tensor::zeros(1, config.hidden))?;
            width = config.hidden;
        }
        let q = config.quantiles.len();
        params.add("mlp.out.weight", glorot(&mut rng, width, q))?;
        params.add("mlp.out.bias", Tensor::zeros(1, q))?;
        Ok(Mlp { config, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }
}

impl QuantileNet for Mlp {
    type Input = Vec<f64>;

    fn levels(&self) -> Vec<f64> {
        self.config.quantiles.clone()
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward_tape(&self, tape: &mut Tape, input: &Vec<f64>, mut rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        if input.len() != self.config.inputs {
            return Err(Error::contract("mlp input width mismatch"));
        }
        let mut h = tape.constant(Tensor::row(input));
        for l in 0..=self.config.layers {
            let w = tape.param(&self.params, 2 * l);
            let b = tape.param(&self.params, 2 * l + 1);
            let z = tape.matmul(h, w)?;
            h = tape.add_row(z, b)?;
            if l == self.config.layers {
                break;
            }
            h = tape.swish(h);
            if let Some(rng) = rng.as_deref_mut() {
                let p = self.config.dropout;
                if p > 0.0 {
                    let keep: Vec<f64> = (0..self.config.hidden)
                        .map(|_| if rng.random::<f64>() < p { 0.0 } else { 1.0 / (1.0 - p) })
                        .collect();
                    h = tape.mul_const(h, Tensor::row(&keep))?;
                }
            }
        }
        Ok(h)
    }
}
