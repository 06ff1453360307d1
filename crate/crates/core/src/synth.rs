//! Synthetic intraday market with coupled buy and sell trade streams.

use alloc::vec::Vec;

use chrono::{DateTime, NaiveDate, TimeDelta, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, StandardNormal};

use crate::error::{Error, Result};
use crate::market::{compute_index_label, MarketConfig, Side, TradeRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub n_days: u32,
    pub base_price: f64,
    /// Peak-to-mean amplitude of the deterministic hour-of-day price profile.
    pub hourly_amplitude: f64,
    /// Standard deviation of the level shock shared by all hours of a day.
    pub daily_shock_sd: f64,
    /// Standard deviation of the level shock of one product.
    pub product_shock_sd: f64,
    /// Mid-price random-walk volatility per square-root hour.
    pub volatility: f64,
    /// Relative swing of the volatility over the day; 0 keeps it constant.
    pub volatility_swing: f64,
    /// Downward jump intensity per minute inside `jump_window_minutes` of delivery.
    pub jump_intensity: f64,
    pub jump_mean: f64,
    pub jump_window_minutes: f64,
    /// Scale of the half-normal distance of a quote from the mid.
    pub half_spread: f64,
    /// Trade arrival rate per minute and side at peak liquidity.
    pub arrival_rate: f64,
    /// Fraction of the arrival rate lost in the quietest hour.
    pub liquidity_dip: f64,
    pub volume_mu: f64,
    pub volume_sigma: f64,
    /// Weight pulling a quote toward the opposite side's last trade, in `[0, 1]`.
    pub coupling: f64,
    /// Trading opens this many minutes before delivery.
    pub open_minutes: u32,
    pub market: MarketConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            start: NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date"),
            n_days: 30,
            base_price: 100.0,
            hourly_amplitude: 30.0,
            daily_shock_sd: 15.0,
            product_shock_sd: 10.0,
            volatility: 6.0,
            volatility_swing: 0.0,
            jump_intensity: 0.01,
            jump_mean: 5.0,
            jump_window_minutes: 90.0,
            half_spread: 1.0,
            arrival_rate: 0.15,
            liquidity_dip: 0.7,
            volume_mu: 0.0,
            volume_sigma: 0.8,
            coupling: 0.3,
            open_minutes: 300,
            market: MarketConfig::germany(1).expect("valid market"),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.arrival_rate.is_nan() || self.arrival_rate <= 0.0 || !(0.0..1.0).contains(&self.liquidity_dip) {
            return Err(Error::contract("arrival rates must be positive"));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::contract("coupling must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.volatility_swing) {
            return Err(Error::contract("volatility swing must lie in [0, 1]"));
        }
        let nonneg = [
            self.hourly_amplitude,
            self.daily_shock_sd,
            self.product_shock_sd,
            self.volatility,
            self.jump_intensity,
            self.jump_mean,
            self.jump_window_minutes,
            self.half_spread,
            self.volume_sigma,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::contract("scales and intensities must be finite and non-negative"));
        }
        if self.n_days == 0 || (self.open_minutes as f64) <= self.market.delta_c_minutes() as f64 {
            return Err(Error::contract("need at least one day and a non-empty trading window"));
        }
        Ok(())
    }

    /// Volatility multiplier for a delivery hour; peaks in the evening.
    pub fn volatility_at(&self, hour: u32) -> f64 {
        let phase = core::f64::consts::TAU * (hour as f64 - 12.0) / 24.0;
        self.volatility * (1.0 + self.volatility_swing * libm::sin(phase))
    }

    fn price_profile(&self, hour: u32) -> f64 {
        let phase = core::f64::consts::TAU * (hour as f64 - 6.0) / 24.0;
        self.hourly_amplitude * libm::sin(phase)
    }

    fn liquidity(&self, hour: u32) -> f64 {
        let phase = core::f64::consts::TAU * (hour as f64 - 9.0) / 24.0;
        1.0 - self.liquidity_dip * 0.5 * (1.0 - libm::sin(phase))
    }
}

/// Ground-truth label row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelRow {
    pub delivery_start: DateTime<Utc>,
    pub index_x: u8,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthMarket {
    /// Ordered by delivery, then transaction time.
    pub trades: Vec<TradeRecord>,
    /// Latent mid price at each trade, parallel to `trades`.
    pub mids: Vec<f64>,
    /// Labels for every index whose window holds trades.
    pub labels: Vec<LabelRow>,
}

fn round_to(v: f64, step: f64) -> f64 {
    libm::round(v / step) * step
}

/// Simulates every hourly product of every day. Each day draws from its own
/// ChaCha stream, so days are independent.
pub fn gen_market(cfg: &SynthConfig) -> Result<SynthMarket> {
    cfg.validate()?;
    let normal = StandardNormal;
    let volume = LogNormal::new(cfg.volume_mu, cfg.volume_sigma)
        .map_err(|_| Error::contract("invalid volume distribution"))?;
    let jump = Exp::new(1.0 / cfg.jump_mean.max(f64::MIN_POSITIVE))
        .map_err(|_| Error::contract("invalid jump distribution"))?;
    let close = -(cfg.market.delta_c_minutes() as f64);

    let mut out = SynthMarket {
        trades: Vec::new(),
        mids: Vec::new(),
        labels: Vec::new(),
    };
    for day in 0..cfg.n_days {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(day as u64);
        let date = cfg
            .start
            .checked_add_days(chrono::Days::new(day as u64))
            .ok_or_else(|| Error::contract("date out of range"))?;
        let day_shock = cfg.daily_shock_sd * rng.sample::<f64, _>(normal);
        for hour in 0..24u32 {
            let delivery = date
                .and_hms_opt(hour, 0, 0)
                .expect("valid hour")
                .and_utc();
            let first = out.trades.len();
            let level = cfg.base_price
                + cfg.price_profile(hour)
                + day_shock
                + cfg.product_shock_sd * rng.sample::<f64, _>(normal);
            let sigma = cfg.volatility_at(hour);
            let rate = 2.0 * cfg.arrival_rate * cfg.liquidity(hour);
            let gap = Exp::new(rate).map_err(|_| Error::contract("invalid arrival rate"))?;

            let mut t = -(cfg.open_minutes as f64);
            let mut mid = level;
            let mut last: [Option<f64>; 2] = [None, None];
            loop {
                let dt = gap.sample(&mut rng);
                t += dt;
                if t >= close {
                    break;
                }
                mid += sigma * libm::sqrt(dt / 60.0) * rng.sample::<f64, _>(normal);
                if t > -cfg.jump_window_minutes
                    && cfg.jump_mean > 0.0
                    && rng.random::<f64>() < 1.0 - libm::exp(-cfg.jump_intensity * dt)
                {
                    mid -= jump.sample(&mut rng);
                }
                let (side, s, sign) = if rng.random::<bool>() {
                    (Side::Buy, 0, 1.0)
                } else {
                    (Side::Sell, 1, -1.0)
                };
                let offset: f64 = rng.sample::<f64, _>(normal);
                let quote = mid + sign * cfg.half_spread * offset.abs();
                let price = match last[1 - s] {
                    Some(p) => (1.0 - cfg.coupling) * quote + cfg.coupling * p,
                    None => quote,
                };
                let price = round_to(price, 0.01);
                last[s] = Some(price);
                let vol = round_to(volume.sample(&mut rng), 0.1).max(0.1);
                let at = delivery + TimeDelta::seconds(libm::floor(t * 60.0) as i64);
                out.trades
                    .push(TradeRecord::new(delivery, side, price, vol, at)?);
                out.mids.push(mid);
            }
            let product = &out.trades[first..];
            for x in 1..=3u8 {
                if cfg.open_minutes <= 60 * x as u32 {
                    continue;
                }
                let m = MarketConfig::new(cfg.market.delta_c_minutes(), x)?;
                if let Ok(label) = compute_index_label(product, delivery, &m) {
                    out.labels.push(LabelRow {
                        delivery_start: delivery,
                        index_x: x,
                        label,
                    });
                }
            }
        }
    }
    Ok(out)
}
