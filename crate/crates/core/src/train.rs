//! Quantile loss, Adam, the epoch loop, rolling folds and grid search.

use alloc::vec;
use alloc::vec::Vec;

use chrono::{DateTime, Months, NaiveDate, Utc};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{FusionModel, Forecaster, ModelConfig, ModelInput, SortedEnsemble};
use crate::tensor::{pinball_value, ParamSet, Tape, Var};

/// Pinball loss of one forecast at level `tau`.
pub fn pinball(y: f64, yhat: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::contract("quantile level must lie in (0, 1)"));
    }
    Ok(pinball_value(y, yhat, tau))
}

/// Average pinball loss over samples and quantile levels.
pub fn aql(y: &[f64], forecasts: &[Vec<f64>], taus: &[f64]) -> Result<f64> {
    if y.is_empty() || taus.is_empty() {
        return Err(Error::contract("aql of an empty set"));
    }
    if y.len() != forecasts.len() || forecasts.iter().any(|f| f.len() != taus.len()) {
        return Err(Error::contract("aql inputs have inconsistent lengths"));
    }
    let mut total = 0.0;
    for (yi, f) in y.iter().zip(forecasts) {
        for (yhat, tau) in f.iter().zip(taus) {
            total += pinball(*yi, *yhat, *tau)?;
        }
    }
    Ok(total / (y.len() * taus.len()) as f64)
}

/// Per-sample mean pinball loss; the series compared by the Diebold–Mariano test.
pub fn per_sample_aql(y: &[f64], forecasts: &[Vec<f64>], taus: &[f64]) -> Result<Vec<f64>> {
    y.iter()
        .zip(forecasts)
        .map(|(yi, f)| aql(&[*yi], core::slice::from_ref(f), taus))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Multiplicative decay applied every `decay_every` epochs.
    pub decay: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 512,
            lr0: 7e-4,
            decay: 0.95,
            decay_every: 10,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(Error::contract("epochs, batch size and decay interval must be positive"));
        }
        if self.lr0.is_nan() || self.lr0 <= 0.0 {
            return Err(Error::contract("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Staircase schedule `lr0 · decay^⌊epoch / decay_every⌋`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * libm::pow(cfg.decay, (epoch / cfg.decay_every) as f64)
}

/// Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = |p: &crate::tensor::Parameter| vec![0.0; p.value.data().len()];
        OptimizerState {
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update using the gradients held in `params`.
pub fn adam_step(params: &mut ParamSet, state: &mut OptimizerState, lr: f64, cfg: &TrainConfig) {
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(cfg.beta1, t);
    let c2 = 1.0 - libm::pow(cfg.beta2, t);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let grad = p.grad.data().to_vec();
        for (j, w) in p.value.data_mut().iter_mut().enumerate() {
            let g = grad[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            *w -= lr * mhat / (libm::sqrt(vhat) + cfg.epsilon);
        }
    }
}

/// A network trainable with the average quantile loss.
pub trait QuantileNet: Clone {
    type Input;

    /// Output quantile levels, in output order.
    fn levels(&self) -> Vec<f64>;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Records the forward pass; returns a `1×q` row. `rng` is present only while
    /// training, for stochastic layers.
    fn forward_tape(
        &self,
        tape: &mut Tape,
        input: &Self::Input,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var>;

    fn predict_one(&self, input: &Self::Input) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward_tape(&mut tape, input, None)?;
        Ok(tape.value(out).data().to_vec())
    }
}

impl QuantileNet for FusionModel {
    type Input = ModelInput;

    fn levels(&self) -> Vec<f64> {
        self.quantiles()
    }

    fn params(&self) -> &ParamSet {
        FusionModel::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        FusionModel::params_mut(self)
    }

    fn forward_tape(&self, tape: &mut Tape, input: &ModelInput, _rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
        self.forward(tape, input)
    }
}

/// Borrowed inputs with their (scaled) targets.
#[derive(Debug)]
pub struct Dataset<'a, I> {
    pub inputs: &'a [I],
    pub targets: &'a [f64],
}

impl<I> Clone for Dataset<'_, I> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<I> Copy for Dataset<'_, I> {}

impl<'a, I> Dataset<'a, I> {
    pub fn new(inputs: &'a [I], targets: &'a [f64]) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::contract("inputs and targets differ in length"));
        }
        Ok(Dataset { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_aql: f64,
    pub val_aql: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<N> {
    /// Parameters of the epoch with the lowest validation AQL.
    pub best: N,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

pub fn predict_all<N: QuantileNet>(net: &N, inputs: &[N::Input]) -> Result<Vec<Vec<f64>>> {
    inputs.iter().map(|x| net.predict_one(x)).collect()
}

pub fn evaluate_aql<N: QuantileNet>(net: &N, data: Dataset<'_, N::Input>) -> Result<f64> {
    let preds = predict_all(net, data.inputs)?;
    aql(data.targets, &preds, &net.levels())
}

/// Sample order of one epoch; a fixed function of `(seed, epoch)`.
pub fn epoch_permutation(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Mini-batch Adam on the average quantile loss with best-validation checkpointing.
pub fn train<N: QuantileNet>(
    mut net: N,
    train: Dataset<'_, N::Input>,
    val: Dataset<'_, N::Input>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<N>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::contract("training and validation sets must be non-empty"));
    }
    let taus = net.levels();
    let mut state = OptimizerState::new(net.params());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_D809);
    let mut best: Option<(f64, usize, N)> = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let order = epoch_permutation(train.len(), cfg.seed, epoch);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            net.params_mut().zero_grad();
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut tape = Tape::new();
                let pred = net.forward_tape(&mut tape, &train.inputs[i], Some(&mut dropout_rng))?;
                let loss = tape.pinball_mean(pred, train.targets[i], &taus)?;
                let value = tape.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(alloc::format!(
                        "training loss diverged at epoch {epoch}"
                    )));
                }
                epoch_loss += value;
                let scaled = tape.scale(loss, weight);
                tape.backward(scaled, net.params_mut())?;
            }
            adam_step(net.params_mut(), &mut state, lr, cfg);
            if !net.params().is_finite() {
                return Err(Error::NonFinite(alloc::format!(
                    "parameters diverged at epoch {epoch}"
                )));
            }
        }
        let train_aql = epoch_loss / train.len() as f64;
        let val_aql = evaluate_aql(&net, val)?;
        if !val_aql.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "validation loss diverged at epoch {epoch}"
            )));
        }
        if best.as_ref().is_none_or(|(b, _, _)| val_aql < *b) {
            best = Some((val_aql, epoch, net.clone()));
        }
        history.push(EpochLog {
            epoch,
            train_aql,
            val_aql,
            lr,
        });
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        history,
    })
}

/// A trained forecaster and the loss history of each of its networks.
#[derive(Debug, Clone)]
pub struct TrainedForecaster {
    pub forecaster: Forecaster,
    pub histories: Vec<Vec<EpochLog>>,
}

/// Trains the network(s) of `config`; post-hoc sorting trains one single-quantile
/// network per level.
pub fn train_forecaster(
    config: &ModelConfig,
    train_set: Dataset<'_, ModelInput>,
    val_set: Dataset<'_, ModelInput>,
    cfg: &TrainConfig,
) -> Result<TrainedForecaster> {
    match Forecaster::new(config)? {
        Forecaster::Network(net) => {
            let out = train(net, train_set, val_set, cfg)?;
            Ok(TrainedForecaster {
                forecaster: Forecaster::Network(out.best),
                histories: vec![out.history],
            })
        }
        Forecaster::Sorted(ensemble) => {
            let mut members = Vec::with_capacity(ensemble.members.len());
            let mut histories = Vec::new();
            for (i, member) in ensemble.members.into_iter().enumerate() {
                let member_cfg = TrainConfig {
                    seed: cfg.seed.wrapping_add(i as u64 + 1),
                    ..cfg.clone()
                };
                let out = train(member, train_set, val_set, &member_cfg)?;
                members.push(out.best);
                histories.push(out.history);
            }
            Ok(TrainedForecaster {
                forecaster: Forecaster::Sorted(SortedEnsemble { members }),
                histories,
            })
        }
    }
}

/// Half-open UTC interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Period {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Period {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldSpec {
    pub train: Period,
    pub val: Period,
    pub test: Period,
}

/// Window lengths of the rolling protocol, in months.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RollingSpec {
    pub train_months: u32,
    pub val_months: u32,
    pub test_months: u32,
    pub shift_months: u32,
    pub folds: u32,
}

impl Default for RollingSpec {
    /// 20 months train, 4 validation, 4 test, shifted by 4 months, 3 folds.
    fn default() -> Self {
        RollingSpec {
            train_months: 20,
            val_months: 4,
            test_months: 4,
            shift_months: 4,
            folds: 3,
        }
    }
}

fn month_start(d: NaiveDate, months: u32) -> Result<DateTime<Utc>> {
    d.checked_add_months(Months::new(months))
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc())
        .ok_or_else(|| Error::contract("date out of range"))
}

/// Rolling folds starting at `start`; each fold shifts every boundary forward.
pub fn rolling_folds(start: NaiveDate, spec: &RollingSpec) -> Result<Vec<FoldSpec>> {
    (0..spec.folds)
        .map(|k| {
            let o = k * spec.shift_months;
            let a = month_start(start, o)?;
            let b = month_start(start, o + spec.train_months)?;
            let c = month_start(start, o + spec.train_months + spec.val_months)?;
            let d = month_start(
                start,
                o + spec.train_months + spec.val_months + spec.test_months,
            )?;
            Ok(FoldSpec {
                train: Period { start: a, end: b },
                val: Period { start: b, end: c },
                test: Period { start: c, end: d },
            })
        })
        .collect()
}

/// OrderFusion search space.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpace {
    pub hidden_dims: Vec<usize>,
    pub cutoff_exponents: Vec<u32>,
    pub interaction_degrees: Vec<usize>,
}

impl Default for GridSpace {
    fn default() -> Self {
        GridSpace {
            hidden_dims: vec![4, 16, 64, 256, 512],
            cutoff_exponents: (0..=10).collect(),
            interaction_degrees: vec![1, 2, 4],
        }
    }
}

impl GridSpace {
    /// Every combination applied to `base`; cutoffs longer than `t_max` are skipped.
    pub fn cells(&self, base: &ModelConfig) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &f in &self.hidden_dims {
            for &a in &self.cutoff_exponents {
                for &k in &self.interaction_degrees {
                    let c = ModelConfig {
                        hidden_dim: f,
                        cutoff_exponent: a,
                        interaction_degree: k,
                        ..base.clone()
                    };
                    if c.validate().is_ok() {
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GridResult<C> {
    /// Every evaluated cell with its validation loss, in evaluation order.
    pub table: Vec<(C, f64)>,
    pub best: usize,
}

impl<C> GridResult<C> {
    pub fn best(&self) -> &(C, f64) {
        &self.table[self.best]
    }
}

/// Cells evaluated under `budget`: all of them, or an evenly strided subset.
pub fn budget_subset<C: Clone>(space: &[C], budget: Option<usize>) -> Vec<C> {
    match budget {
        Some(b) if b < space.len() && b > 0 => (0..b)
            .map(|i| space[i * space.len() / b].clone())
            .collect(),
        _ => space.to_vec(),
    }
}

/// Evaluates each cell (validation AQL) and returns the full table and the argmin.
/// Ties keep the earlier cell.
pub fn grid_search<C: Clone>(
    space: &[C],
    budget: Option<usize>,
    mut evaluate: impl FnMut(&C) -> Result<f64>,
) -> Result<GridResult<C>> {
    let cells = budget_subset(space, budget);
    if cells.is_empty() {
        return Err(Error::contract("empty search space"));
    }
    let mut table = Vec::with_capacity(cells.len());
    for c in cells {
        let loss = evaluate(&c)?;
        table.push((c, loss));
    }
    Ok(from_table(table))
}

/// Argmin over an already evaluated table.
pub fn from_table<C>(table: Vec<(C, f64)>) -> GridResult<C> {
    let mut best = 0;
    for (i, (_, l)) in table.iter().enumerate() {
        if *l < table[best].1 {
            best = i;
        }
    }
    GridResult { table, best }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use chrono::Datelike;
    use rand::Rng;

    #[test]
    fn pinball_cases() {
        assert_eq!(pinball(3.0, 3.0, 0.3).unwrap(), 0.0);
        assert!((pinball(10.0, 0.0, 0.9).unwrap() - 9.0).abs() < 1e-12);
        assert!((pinball(0.0, 10.0, 0.1).unwrap() - 9.0).abs() < 1e-12);
        assert!(pinball(0.0, 1.0, 0.0).is_err());
        assert!(pinball(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn aql_reductions() {
        assert_eq!(aql(&[2.0], &[vec![5.0]], &[0.3]).unwrap(), pinball(2.0, 5.0, 0.3).unwrap());
        assert_eq!(aql(&[1.0, 2.0], &[vec![1.0, 1.0], vec![2.0, 2.0]], &[0.1, 0.9]).unwrap(), 0.0);
        assert!(aql(&[], &[], &[0.5]).is_err());
        assert!(aql(&[1.0], &[vec![1.0, 2.0]], &[0.5]).is_err());
    }

    #[test]
    fn aql_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let taus = crate::model::DEFAULT_QUANTILES;
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-20.0..80.0)).collect();
        let f: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..7).map(|_| rng.random_range(-20.0..80.0)).collect())
            .collect();
        let mut total = 0.0;
        for i in 0..50 {
            for q in 0..7 {
                let e = y[i] - f[i][q];
                total += if e >= 0.0 { taus[q] * e } else { (taus[q] - 1.0) * e };
            }
        }
        assert!((aql(&y, &f, &taus).unwrap() - total / 350.0).abs() <= 1e-12);
    }

    #[test]
    fn schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 7e-4);
        assert_eq!(lr_at(9, &cfg), 7e-4);
        assert!((lr_at(10, &cfg) - 6.65e-4).abs() < 1e-15);
        assert!((lr_at(49, &cfg) - 7e-4 * 0.95f64.powi(4)).abs() < 1e-15);
    }

    fn scalar_param(w: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::scalar(w)).unwrap();
        ps
    }

    #[test]
    fn adam_first_step_and_zero_grad() {
        let cfg = TrainConfig::default();
        let mut ps = scalar_param(1.0);
        ps.slot_mut(0).grad = Tensor::scalar(-3.0);
        let mut st = OptimizerState::new(&ps);
        adam_step(&mut ps, &mut st, 0.01, &cfg);
        let moved = ps.slot(0).value.item() - 1.0;
        assert!(moved > 0.0);
        assert!((moved - 0.01).abs() < 1e-8);

        let mut ps = scalar_param(2.0);
        let mut st = OptimizerState::new(&ps);
        adam_step(&mut ps, &mut st, 0.01, &cfg);
        assert_eq!(ps.slot(0).value.item(), 2.0);
        st.m[0][0] = 0.5;
        st.v[0][0] = 0.25;
        adam_step(&mut ps, &mut st, 0.01, &cfg);
        assert!((st.m[0][0] - 0.45).abs() < 1e-15);
        assert!(st.v[0][0] < 0.25);
    }

    #[test]
    fn adam_descends_a_parabola() {
        let cfg = TrainConfig::default();
        let mut ps = scalar_param(1.0);
        let mut st = OptimizerState::new(&ps);
        let mut f = 1.0;
        for _ in 0..3 {
            let w = ps.slot(0).value.item();
            ps.slot_mut(0).grad = Tensor::scalar(2.0 * w);
            adam_step(&mut ps, &mut st, 0.1, &cfg);
            let w = ps.slot(0).value.item();
            assert!(w * w < f);
            f = w * w;
        }
    }

    #[test]
    fn permutation_is_seeded() {
        let a = epoch_permutation(100, 5, 3);
        assert_eq!(a, epoch_permutation(100, 5, 3));
        assert_ne!(a, epoch_permutation(100, 5, 4));
        let mut s = a.clone();
        s.sort();
        assert_eq!(s, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn folds_follow_the_rolling_protocol() {
        let start = NaiveDate::from_ymd_opt(2022, 1, 1).unwrap();
        let folds = rolling_folds(start, &RollingSpec::default()).unwrap();
        assert_eq!(folds.len(), 3);
        let d = |t: DateTime<Utc>| (t.year(), t.month(), t.day());
        assert_eq!(d(folds[0].train.start), (2022, 1, 1));
        assert_eq!(d(folds[0].train.end), (2023, 9, 1));
        assert_eq!(d(folds[0].val.end), (2024, 1, 1));
        assert_eq!(d(folds[0].test.end), (2024, 5, 1));
        assert_eq!(d(folds[2].test.end), (2025, 1, 1));
        for w in folds.windows(2) {
            assert_eq!(w[0].test.end, w[1].test.start);
        }
    }

    #[test]
    fn grid_search_table_and_argmin() {
        let space = [3, 1, 2];
        let r = grid_search(&space, None, |&c| Ok(c as f64)).unwrap();
        assert_eq!(r.table.len(), 3);
        assert_eq!(r.best().0, 1);
        let single = grid_search(&[7], None, |_| Ok(0.0)).unwrap();
        assert_eq!(single.best().0, 7);
        let sub = budget_subset(&(0..10).collect::<Vec<_>>(), Some(3));
        assert_eq!(sub, [0, 3, 6]);
    }

    #[test]
    fn default_grid_skips_cutoffs_longer_than_t_max() {
        let cells = GridSpace::default().cells(&ModelConfig::default());
        // alpha 0..=7 fit t_max = 128
        assert_eq!(cells.len(), 5 * 8 * 3);
    }
}
