//! Chronological splits, scaling and model inputs for end-to-end runs.

use alloc::vec::Vec;

use chrono::{DateTime, Utc};

use crate::baselines::{naive_point, naive_probabilistic, LabelHistory, NaiveVariant, ResidualQuantiles};
use crate::error::{Error, Result};
use crate::market::{apply_scaler, fit_scaler, Sample, Scalers};
use crate::model::{Forecaster, ModelConfig, ModelInput};
use crate::train::FoldSpec;

/// Unscaled samples of one train / validation / test partition.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Splits delivery-ordered samples by fractions of their count.
pub fn chronological_split(samples: &[Sample], train_frac: f64, val_frac: f64) -> Result<Split> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::contract("split fractions must be positive and sum below 1"));
    }
    let n = samples.len();
    let a = (n as f64 * train_frac) as usize;
    let b = (n as f64 * (train_frac + val_frac)) as usize;
    if a == 0 || b == a || b == n {
        return Err(Error::contract("too few samples to split"));
    }
    Ok(Split {
        train: samples[..a].to_vec(),
        val: samples[a..b].to_vec(),
        test: samples[b..].to_vec(),
    })
}

/// Splits samples by the calendar boundaries of a rolling fold.
pub fn fold_split(samples: &[Sample], fold: &FoldSpec) -> Split {
    let pick = |p: &crate::train::Period| {
        samples
            .iter()
            .filter(|s| p.contains(s.delivery_start))
            .cloned()
            .collect()
    };
    Split {
        train: pick(&fold.train),
        val: pick(&fold.val),
        test: pick(&fold.test),
    }
}

/// Model inputs and scaled targets of one partition.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub inputs: Vec<ModelInput>,
    pub targets: Vec<f64>,
    /// Unscaled labels.
    pub labels: Vec<f64>,
}

pub fn prepare(samples: &[Sample], scalers: &Scalers, config: &ModelConfig) -> Result<Prepared> {
    let mut out = Prepared {
        inputs: Vec::with_capacity(samples.len()),
        targets: Vec::with_capacity(samples.len()),
        labels: Vec::with_capacity(samples.len()),
    };
    for s in samples {
        let scaled = apply_scaler(s, scalers);
        out.inputs.push(ModelInput::from_sample(&scaled, config)?);
        out.targets.push(scaled.label);
        out.labels.push(s.label);
    }
    Ok(out)
}

/// Scalers fitted on the training partition and the prepared partitions.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub scalers: Scalers,
    pub train: Prepared,
    pub val: Prepared,
    pub test: Prepared,
}

pub fn prepare_split(split: &Split, config: &ModelConfig) -> Result<PreparedSplit> {
    let scalers = fit_scaler(&split.train)?;
    Ok(PreparedSplit {
        train: prepare(&split.train, &scalers, config)?,
        val: prepare(&split.val, &scalers, config)?,
        test: prepare(&split.test, &scalers, config)?,
        scalers,
    })
}

/// Forecasts in price units.
pub fn forecast_prices(model: &Forecaster, inputs: &[ModelInput], scalers: &Scalers) -> Result<Vec<Vec<f64>>> {
    inputs
        .iter()
        .map(|x| {
            Ok(model
                .predict(x)?
                .into_iter()
                .map(|z| scalers.label.inverse(z))
                .collect())
        })
        .collect()
}

/// Forecasts of one model on the samples it could score.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub deliveries: Vec<DateTime<Utc>>,
    pub labels: Vec<f64>,
    pub forecasts: Vec<Vec<f64>>,
    /// Samples without the history the model needs.
    pub skipped: usize,
}

/// Naive probabilistic forecasts of the test partition. Residual quantiles come
/// from training samples only; point forecasts may use any earlier label.
pub fn naive_forecasts(split: &Split, variant: NaiveVariant, taus: &[f64]) -> Result<Scored> {
    let history: LabelHistory = split
        .train
        .iter()
        .chain(&split.val)
        .chain(&split.test)
        .map(|s| (s.delivery_start, s.label))
        .collect();
    let residuals: Vec<_> = split
        .train
        .iter()
        .filter_map(|s| {
            naive_point(&history, s.delivery_start, variant).map(|p| (s.delivery_start, s.label - p))
        })
        .collect();
    let rq = ResidualQuantiles::fit(&residuals, taus);
    let mut out = Scored {
        deliveries: Vec::new(),
        labels: Vec::new(),
        forecasts: Vec::new(),
        skipped: 0,
    };
    for s in &split.test {
        match naive_point(&history, s.delivery_start, variant) {
            Some(p) => {
                out.forecasts.push(naive_probabilistic(&rq, p, s.delivery_start)?);
                out.deliveries.push(s.delivery_start);
                out.labels.push(s.label);
            }
            None => out.skipped += 1,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::build_samples;
    use crate::synth::{gen_market, SynthConfig};

    #[test]
    fn split_is_chronological_and_complete() {
        let cfg = SynthConfig {
            n_days: 4,
            ..SynthConfig::default()
        };
        let m = gen_market(&cfg).unwrap();
        let (samples, _) = build_samples(&m.trades, &cfg.market);
        let s = chronological_split(&samples, 0.5, 0.25).unwrap();
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), samples.len());
        assert!(s.train.last().unwrap().delivery_start < s.val[0].delivery_start);
        assert!(s.val.last().unwrap().delivery_start < s.test[0].delivery_start);
        assert!(chronological_split(&samples, 0.9, 0.2).is_err());

        let p = prepare_split(&s, &ModelConfig::default()).unwrap();
        assert_eq!(p.train.inputs.len(), s.train.len());
        let back = p.scalers.label.inverse(p.test.targets[0]);
        assert!((back - s.test[0].label).abs() < 1e-9);

        let taus = crate::model::DEFAULT_QUANTILES;
        let n = naive_forecasts(&s, NaiveVariant::PrevHour, &taus).unwrap();
        assert_eq!(n.forecasts.len() + n.skipped, s.test.len());
        assert!(n.forecasts.iter().all(|f| f.windows(2).all(|w| w[0] <= w[1])));
    }
}
