//! Trades, index labels, per-delivery samples and robust scaling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use chrono::{DateTime, TimeDelta, Utc};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn symbol(self) -> char {
        match self {
            Side::Buy => '+',
            Side::Sell => '-',
        }
    }

    pub fn from_symbol(s: &str) -> Option<Side> {
        match s {
            "+" => Some(Side::Buy),
            "-" => Some(Side::Sell),
            _ => None,
        }
    }
}

/// One executed trade.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    pub delivery_start: DateTime<Utc>,
    pub side: Side,
    /// EUR/MWh
    pub price: f64,
    /// MWh, strictly positive
    pub volume: f64,
    pub transaction_time: DateTime<Utc>,
}

impl TradeRecord {
    pub fn new(
        delivery_start: DateTime<Utc>,
        side: Side,
        price: f64,
        volume: f64,
        transaction_time: DateTime<Utc>,
    ) -> Result<Self> {
        let t = TradeRecord {
            delivery_start,
            side,
            price,
            volume,
            transaction_time,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.price.is_finite() {
            return Err(Error::contract("price must be finite"));
        }
        if !(self.volume > 0.0 && self.volume.is_finite()) {
            return Err(Error::contract("volume must be positive"));
        }
        if self.transaction_time >= self.delivery_start {
            return Err(Error::contract("transaction must precede delivery"));
        }
        Ok(())
    }
}

/// Market and index parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarketConfig {
    delta_c_minutes: u32,
    index_x: u8,
}

impl MarketConfig {
    pub fn new(delta_c_minutes: u32, index_x: u8) -> Result<Self> {
        if !(1..=3).contains(&index_x) {
            return Err(Error::contract("index must be 1, 2 or 3"));
        }
        if delta_c_minutes >= 60 * index_x as u32 {
            return Err(Error::contract("gate closure offset must be below the lead time"));
        }
        Ok(MarketConfig {
            delta_c_minutes,
            index_x,
        })
    }

    /// Germany: gate closure offset 30 min.
    pub fn germany(index_x: u8) -> Result<Self> {
        Self::new(30, index_x)
    }

    /// Austria: gate closure offset 0 min.
    pub fn austria(index_x: u8) -> Result<Self> {
        Self::new(0, index_x)
    }

    pub fn delta_c_minutes(&self) -> u32 {
        self.delta_c_minutes
    }

    pub fn index_x(&self) -> u8 {
        self.index_x
    }

    pub fn lead_minutes(&self) -> u32 {
        60 * self.index_x as u32
    }

    /// Forecast time `t_f = t_d − Δ`.
    pub fn forecast_time(&self, delivery: DateTime<Utc>) -> DateTime<Utc> {
        delivery - TimeDelta::minutes(self.lead_minutes() as i64)
    }

    /// End of the index window, `t_d − δ_c` (exclusive).
    pub fn window_end(&self, delivery: DateTime<Utc>) -> DateTime<Utc> {
        delivery - TimeDelta::minutes(self.delta_c_minutes as i64)
    }
}

/// One trade as a model input row: price, volume and minutes to delivery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeRow {
    pub price: f64,
    pub volume: f64,
    pub minutes_to_delivery: f64,
}

impl TradeRow {
    pub fn feature(&self, i: usize) -> f64 {
        match i {
            0 => self.price,
            1 => self.volume,
            _ => self.minutes_to_delivery,
        }
    }

    fn map(self, f: impl Fn(usize, f64) -> f64) -> Self {
        TradeRow {
            price: f(0, self.price),
            volume: f(1, self.volume),
            minutes_to_delivery: f(2, self.minutes_to_delivery),
        }
    }
}

/// The paired buy/sell sequences of one delivery product.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub delivery_start: DateTime<Utc>,
    pub forecast_time: DateTime<Utc>,
    /// Time-ascending.
    pub buy: Vec<TradeRow>,
    /// Time-ascending.
    pub sell: Vec<TradeRow>,
    pub label: f64,
}

impl Sample {
    pub fn side(&self, side: Side) -> &[TradeRow] {
        match side {
            Side::Buy => &self.buy,
            Side::Sell => &self.sell,
        }
    }
}

fn minutes_between(later: DateTime<Utc>, earlier: DateTime<Utc>) -> f64 {
    (later - earlier).num_milliseconds() as f64 / 60_000.0
}

/// Volume-weighted average price over `[t_f, t_d − δ_c)` across both sides.
pub fn compute_index_label(
    trades: &[TradeRecord],
    delivery: DateTime<Utc>,
    cfg: &MarketConfig,
) -> Result<f64> {
    let start = cfg.forecast_time(delivery);
    let end = cfg.window_end(delivery);
    let (mut pv, mut v) = (0.0, 0.0);
    for t in trades {
        if t.delivery_start == delivery && t.transaction_time >= start && t.transaction_time < end
        {
            pv += t.price * t.volume;
            v += t.volume;
        }
    }
    if v <= 0.0 {
        return Err(Error::NoLabel(format!("{delivery}")));
    }
    Ok(pv / v)
}

/// Builds the sample of one delivery product from trades strictly before `t_f`.
pub fn build_sample(
    trades: &[TradeRecord],
    delivery: DateTime<Utc>,
    cfg: &MarketConfig,
) -> Result<Sample> {
    let label = compute_index_label(trades, delivery, cfg)?;
    Ok(Sample {
        label,
        ..build_unlabeled_sample(trades, delivery, cfg)
    })
}

/// The sample of a product whose index is not known yet; `label` is NaN.
pub fn build_unlabeled_sample(
    trades: &[TradeRecord],
    delivery: DateTime<Utc>,
    cfg: &MarketConfig,
) -> Sample {
    let t_f = cfg.forecast_time(delivery);
    let mut known: Vec<&TradeRecord> = trades
        .iter()
        .filter(|t| t.delivery_start == delivery && t.transaction_time < t_f)
        .collect();
    known.sort_by_key(|t| t.transaction_time);
    let rows = |side: Side| {
        known
            .iter()
            .filter(|t| t.side == side)
            .map(|t| TradeRow {
                price: t.price,
                volume: t.volume,
                minutes_to_delivery: minutes_between(delivery, t.transaction_time),
            })
            .collect()
    };
    Sample {
        delivery_start: delivery,
        forecast_time: t_f,
        buy: rows(Side::Buy),
        sell: rows(Side::Sell),
        label: f64::NAN,
    }
}

/// Counts from turning a trade stream into samples.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub trades: usize,
    pub deliveries: usize,
    pub samples: usize,
    /// Deliveries dropped because their index window held no trades.
    pub dropped_no_label: usize,
}

/// Groups trades by delivery and builds one sample per product, ordered by delivery.
pub fn build_samples(trades: &[TradeRecord], cfg: &MarketConfig) -> (Vec<Sample>, IngestReport) {
    let mut by_delivery: BTreeMap<DateTime<Utc>, Vec<TradeRecord>> = BTreeMap::new();
    for t in trades {
        by_delivery
            .entry(t.delivery_start)
            .or_default()
            .push(t.clone());
    }
    let mut report = IngestReport {
        trades: trades.len(),
        deliveries: by_delivery.len(),
        ..Default::default()
    };
    let mut samples = Vec::with_capacity(by_delivery.len());
    for (delivery, group) in &by_delivery {
        match build_sample(group, *delivery, cfg) {
            Ok(s) => samples.push(s),
            Err(_) => report.dropped_no_label += 1,
        }
    }
    report.samples = samples.len();
    (samples, report)
}

/// Percentile `q ∈ [0, 1]` of ascending `sorted` with linear interpolation between
/// order statistics.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    percentile_sorted(&v, q)
}

/// Median/IQR scaling of one feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustScaler {
    pub median: f64,
    /// 75th minus 25th percentile; 1 for a constant feature.
    pub iqr: f64,
    pub fitted_on: usize,
}

impl RobustScaler {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::contract("cannot fit a scaler on no data"));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let iqr = percentile_sorted(&v, 0.75) - percentile_sorted(&v, 0.25);
        Ok(RobustScaler {
            median: percentile_sorted(&v, 0.5),
            iqr: if iqr == 0.0 { 1.0 } else { iqr },
            fitted_on: v.len(),
        })
    }

    #[inline]
    pub fn transform(&self, x: f64) -> f64 {
        (x - self.median) / self.iqr
    }

    #[inline]
    pub fn inverse(&self, z: f64) -> f64 {
        z * self.iqr + self.median
    }
}

/// Scalers for the three trade features and the label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scalers {
    /// Price, volume, minutes to delivery.
    pub features: [RobustScaler; 3],
    pub label: RobustScaler,
}

/// Fits feature scalers on the pooled trade rows of both sides and a label scaler
/// on the labels. Only training samples may be passed here.
pub fn fit_scaler(train: &[Sample]) -> Result<Scalers> {
    if train.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let mut cols: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for s in train {
        for r in s.buy.iter().chain(&s.sell) {
            for (i, c) in cols.iter_mut().enumerate() {
                c.push(r.feature(i));
            }
        }
    }
    let fit_col = |c: &[f64]| {
        if c.is_empty() {
            Ok(RobustScaler {
                median: 0.0,
                iqr: 1.0,
                fitted_on: 0,
            })
        } else {
            RobustScaler::fit(c)
        }
    };
    let labels: Vec<f64> = train.iter().map(|s| s.label).collect();
    Ok(Scalers {
        features: [fit_col(&cols[0])?, fit_col(&cols[1])?, fit_col(&cols[2])?],
        label: RobustScaler::fit(&labels)?,
    })
}

pub fn apply_scaler(s: &Sample, scalers: &Scalers) -> Sample {
    let f = |i: usize, x: f64| scalers.features[i].transform(x);
    Sample {
        buy: s.buy.iter().map(|r| r.map(f)).collect(),
        sell: s.sell.iter().map(|r| r.map(f)).collect(),
        label: scalers.label.transform(s.label),
        ..s.clone()
    }
}

pub fn invert_scaler(s: &Sample, scalers: &Scalers) -> Sample {
    let f = |i: usize, x: f64| scalers.features[i].inverse(x);
    Sample {
        buy: s.buy.iter().map(|r| r.map(f)).collect(),
        sell: s.sell.iter().map(|r| r.map(f)).collect(),
        label: scalers.label.inverse(s.label),
        ..s.clone()
    }
}
