//! The fusion network: per-side input projection, iterative buy/sell cross-attention,
//! aggregation across interaction degrees, pooling, and the multi-quantile head.
//!
//! Rows removed by a mask are exactly zero in every intermediate representation, so
//! the forward pass gathers only the rows whose mask value is non-zero. A masked key
//! row contributes a zero logit and a zero value to attention; those terms are kept
//! in the softmax denominator as null entries, which makes the compacted computation
//! equal to the full `t_max`-row one.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::market::Sample;
use crate::masking::{self, DualMask, MaskVariant, PaddedSide};
use crate::tensor::{ParamSet, Tape, Tensor, Var};

/// Quantile levels of the multi-quantile head.
pub const DEFAULT_QUANTILES: [f64; 7] = [0.10, 0.25, 0.45, 0.50, 0.55, 0.75, 0.90];

pub const DEFAULT_T_MAX: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionVariant {
    #[default]
    Fusion,
    /// Pooled concatenation of the masked raw sides feeds the heads directly.
    NoFusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Sum over every degree and both sides.
    #[default]
    Residual,
    /// Only the highest degree.
    NoResidual,
    /// Buy and sell concatenated feature-wise, summed over degrees.
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Mean over all `t_max` rows, padded rows included.
    #[default]
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum HeadVariant {
    /// Median plus non-negative residual chains; never crosses.
    #[default]
    Hierarchical,
    /// Independent dense output per quantile.
    Multi,
    /// A single quantile level.
    Single(f64),
    /// One `Single` model per quantile, outputs sorted ascending.
    PosthocSort,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub interaction_degree: usize,
    pub cutoff_exponent: u32,
    pub t_max: usize,
    pub quantiles: Vec<f64>,
    pub mask: MaskVariant,
    pub fusion: FusionVariant,
    pub aggregation: Aggregation,
    pub pooling: Pooling,
    pub head: HeadVariant,
    /// Bias on the 3→F input projection.
    pub input_bias: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_dim: 16,
            interaction_degree: 2,
            cutoff_exponent: 6,
            t_max: DEFAULT_T_MAX,
            quantiles: DEFAULT_QUANTILES.to_vec(),
            mask: MaskVariant::Dual,
            fusion: FusionVariant::Fusion,
            aggregation: Aggregation::Residual,
            pooling: Pooling::Avg,
            head: HeadVariant::Hierarchical,
            input_bias: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::contract("hidden_dim must be positive"));
        }
        if self.fusion == FusionVariant::Fusion && self.interaction_degree == 0 {
            return Err(Error::contract("interaction_degree must be at least 1"));
        }
        if self.t_max == 0 {
            return Err(Error::contract("t_max must be positive"));
        }
        if masking::cutoff_len(self.cutoff_exponent)? > self.t_max {
            return Err(Error::contract("2^cutoff_exponent exceeds t_max"));
        }
        if self.quantiles.is_empty()
            || self.quantiles.iter().any(|&q| !(q > 0.0 && q < 1.0))
            || self.quantiles.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::contract(
                "quantiles must be strictly increasing within (0, 1)",
            ));
        }
        match self.head {
            HeadVariant::Hierarchical if !self.quantiles.contains(&0.5) => {
                return Err(Error::contract("hierarchical head needs the 0.5 quantile"))
            }
            HeadVariant::Single(tau) if !(tau > 0.0 && tau < 1.0) => {
                return Err(Error::contract("single quantile must lie in (0, 1)"))
            }
            _ => {}
        }
        Ok(())
    }

    /// Quantile levels produced by one network of this configuration.
    pub fn output_quantiles(&self) -> Vec<f64> {
        match self.head {
            HeadVariant::Single(tau) => vec![tau],
            _ => self.quantiles.clone(),
        }
    }

    fn pooled_width(&self) -> usize {
        match (self.fusion, self.aggregation) {
            (FusionVariant::NoFusion, _) => 6,
            (_, Aggregation::Concat) => 2 * self.hidden_dim,
            _ => self.hidden_dim,
        }
    }

    /// Configuration of the single-quantile member for level `tau`.
    pub fn single_member(&self, tau: f64, index: usize) -> ModelConfig {
        ModelConfig {
            head: HeadVariant::Single(tau),
            seed: self.seed.wrapping_add(0x9E37_79B9 * (index as u64 + 1)),
            ..self.clone()
        }
    }
}

/// Exact number of trainable scalars for `config`.
pub fn param_count(config: &ModelConfig) -> Result<usize> {
    config.validate()?;
    let f = config.hidden_dim;
    if config.head == HeadVariant::PosthocSort {
        let member = config.single_member(0.5, 0);
        return Ok(config.quantiles.len() * param_count(&member)?);
    }
    let heads = config.output_quantiles().len() * (config.pooled_width() + 1);
    Ok(match config.fusion {
        FusionVariant::NoFusion => heads,
        FusionVariant::Fusion => {
            let projection = 2 * 3 * f + if config.input_bias { 2 * f } else { 0 };
            projection + 2 * config.interaction_degree * 3 * f * f + heads
        }
    })
}

const SIDES: [&str; 2] = ["buy", "sell"];

/// Parameter slots of one network.
#[derive(Debug, Clone, PartialEq)]
struct Slots {
    input_weight: [usize; 2],
    input_bias: Option<[usize; 2]>,
    /// Per degree, per side: query, key, value.
    attention: Vec<[[usize; 3]; 2]>,
    /// Per quantile: weight, bias.
    heads: Vec<(usize, usize)>,
}

pub fn head_name(tau: f64) -> String {
    format!("head.q{:.2}", tau)
}

/// A fusion network and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    config: ModelConfig,
    params: ParamSet,
    slots: Slots,
}

pub(crate) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = libm::sqrt(6.0 / (rows + cols) as f64);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Tensor::new(rows, cols, data).expect("positive dims")
}

impl FusionModel {
    /// Builds a freshly initialised network. Weights are Glorot-uniform from the
    /// config seed, biases zero.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        if config.head == HeadVariant::PosthocSort {
            return Err(Error::contract(
                "post-hoc sorting is an ensemble; build it with SortedEnsemble",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamSet::new();
        let f = config.hidden_dim;
        let mut input_weight = [0; 2];
        let mut input_bias = None;
        let mut attention = Vec::new();
        if config.fusion == FusionVariant::Fusion {
            for (s, name) in SIDES.iter().enumerate() {
                input_weight[s] = params.add(format!("input.{name}.weight"), glorot(&mut rng, 3, f))?;
            }
            if config.input_bias {
                let mut b = [0; 2];
                for (s, name) in SIDES.iter().enumerate() {
                    b[s] = params.add(format!("input.{name}.bias"), Tensor::zeros(1, f))?;
                }
                input_bias = Some(b);
            }
            for k in 1..=config.interaction_degree {
                let mut per_side = [[0; 3]; 2];
                for (s, name) in SIDES.iter().enumerate() {
                    for (j, w) in ["query", "key", "value"].iter().enumerate() {
                        per_side[s][j] =
                            params.add(format!("fusion.{k}.{name}.{w}"), glorot(&mut rng, f, f))?;
                    }
                }
                attention.push(per_side);
            }
        }
        let width = config.pooled_width();
        let mut heads = Vec::new();
        for tau in config.output_quantiles() {
            let name = head_name(tau);
            let w = params.add(format!("{name}.weight"), glorot(&mut rng, width, 1))?;
            let b = params.add(format!("{name}.bias"), Tensor::zeros(1, 1))?;
            heads.push((w, b));
        }
        Ok(FusionModel {
            config,
            params,
            slots: Slots {
                input_weight,
                input_bias,
                attention,
                heads,
            },
        })
    }

    /// Rebuilds a network from stored parameters. Names and shapes must match what
    /// [`FusionModel::new`] would register for `config`.
    pub fn from_params(config: ModelConfig, stored: ParamSet) -> Result<Self> {
        let mut model = FusionModel::new(config)?;
        if stored.len() != model.params.len() {
            return Err(Error::contract("parameter count does not match the config"));
        }
        for p in model.params.iter_mut() {
            let src = stored
                .get(&p.name)
                .ok_or_else(|| Error::contract(format!("missing parameter {}", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::contract(format!("shape mismatch for {}", p.name)));
            }
            p.value = src.value.clone();
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn quantiles(&self) -> Vec<f64> {
        self.config.output_quantiles()
    }

    fn project(&self, tape: &mut Tape, side: usize, input: &SideInput) -> Result<Option<Var>> {
        let Some(rows) = &input.rows else {
            return Ok(None);
        };
        let x = tape.constant(rows.clone());
        let w = tape.param(&self.params, self.slots.input_weight[side]);
        let mut h = tape.matmul(x, w)?;
        if let Some(b) = self.slots.input_bias {
            let bv = tape.param(&self.params, b[side]);
            h = tape.add_row(h, bv)?;
        }
        let h = tape.swish(h);
        input.apply_mask(tape, h).map(Some)
    }

    /// One cross-attention step: `query` attends over `other`.
    fn fuse(
        &self,
        tape: &mut Tape,
        query: Option<Var>,
        other: Option<Var>,
        weights: [usize; 3],
        query_input: &SideInput,
        other_input: &SideInput,
    ) -> Result<Option<Var>> {
        // a zero query side stays zero; a zero key/value side yields zero values
        let (Some(q_in), Some(o_in)) = (query, other) else {
            return Ok(None);
        };
        let wq = tape.param(&self.params, weights[0]);
        let wk = tape.param(&self.params, weights[1]);
        let wv = tape.param(&self.params, weights[2]);
        let q = tape.matmul(q_in, wq)?;
        let k = tape.matmul(o_in, wk)?;
        let v = tape.matmul(o_in, wv)?;
        let logits = tape.matmul_t(q, k)?;
        let logits = tape.scale(logits, 1.0 / libm::sqrt(self.config.hidden_dim as f64));
        let n_null = self.config.t_max - other_input.index.len();
        let att = tape.softmax_rows_with_null(logits, n_null);
        let out = tape.matmul(att, v)?;
        query_input.apply_mask(tape, out).map(Some)
    }

    /// Per-degree representations `(C_k^buy, C_k^sell)` for `k = 1..=K`; `None`
    /// stands for an all-zero representation.
    pub fn fusion_stack(
        &self,
        tape: &mut Tape,
        input: &ModelInput,
    ) -> Result<Vec<(Option<Var>, Option<Var>)>> {
        let mut buy = self.project(tape, 0, &input.buy)?;
        let mut sell = self.project(tape, 1, &input.sell)?;
        let mut out = Vec::with_capacity(self.config.interaction_degree);
        for att in &self.slots.attention {
            // Buy queries with its own W_Q and the sell side's W_K, W_V; both
            // sides read the previous degree only.
            let wb = [att[0][0], att[1][1], att[1][2]];
            let ws = [att[1][0], att[0][1], att[0][2]];
            let nb = self.fuse(tape, buy, sell, wb, &input.buy, &input.sell)?;
            let ns = self.fuse(tape, sell, buy, ws, &input.sell, &input.buy)?;
            buy = nb;
            sell = ns;
            out.push((buy, sell));
        }
        Ok(out)
    }

    /// The pooled representation `U` as a `1×w` row.
    pub fn represent(&self, tape: &mut Tape, input: &ModelInput) -> Result<Var> {
        if input.t_max != self.config.t_max {
            return Err(Error::contract("input t_max differs from the model's"));
        }
        if self.config.fusion == FusionVariant::NoFusion {
            let mut parts = Vec::with_capacity(2);
            for side in [&input.buy, &input.sell] {
                let rep = match &side.rows {
                    Some(rows) => {
                        let x = tape.constant(rows.clone());
                        Some(side.apply_mask(tape, x)?)
                    }
                    None => None,
                };
                parts.push((rep, side));
            }
            return match self.config.pooling {
                Pooling::Avg => {
                    let mut pooled = Vec::new();
                    for (rep, _) in &parts {
                        pooled.push(self.avg_pool(tape, &[*rep], 3));
                    }
                    tape.concat_cols(&pooled)
                }
                Pooling::Max => {
                    let mut full = Vec::new();
                    for (rep, side) in &parts {
                        full.push(self.scatter_sum(tape, &[(*rep, *side)], 3)?);
                    }
                    let c = tape.concat_cols(&full)?;
                    Ok(tape.col_max(c))
                }
            };
        }

        let degrees = self.fusion_stack(tape, input)?;
        let used: &[(Option<Var>, Option<Var>)] = match self.config.aggregation {
            Aggregation::NoResidual => &degrees[degrees.len() - 1..],
            _ => &degrees,
        };
        let f = self.config.hidden_dim;
        let buys: Vec<Option<Var>> = used.iter().map(|d| d.0).collect();
        let sells: Vec<Option<Var>> = used.iter().map(|d| d.1).collect();
        match (self.config.aggregation, self.config.pooling) {
            (Aggregation::Concat, Pooling::Avg) => {
                let b = self.avg_pool(tape, &buys, f);
                let s = self.avg_pool(tape, &sells, f);
                tape.concat_cols(&[b, s])
            }
            (Aggregation::Concat, Pooling::Max) => {
                let b: Vec<_> = buys.iter().map(|&v| (v, &input.buy)).collect();
                let s: Vec<_> = sells.iter().map(|&v| (v, &input.sell)).collect();
                let fb = self.scatter_sum(tape, &b, f)?;
                let fs = self.scatter_sum(tape, &s, f)?;
                let c = tape.concat_cols(&[fb, fs])?;
                Ok(tape.col_max(c))
            }
            (_, Pooling::Avg) => {
                let all: Vec<Option<Var>> = buys.into_iter().chain(sells).collect();
                Ok(self.avg_pool(tape, &all, f))
            }
            (_, Pooling::Max) => {
                let all: Vec<_> = buys
                    .iter()
                    .map(|&v| (v, &input.buy))
                    .chain(sells.iter().map(|&v| (v, &input.sell)))
                    .collect();
                let c = self.scatter_sum(tape, &all, f)?;
                Ok(tape.col_max(c))
            }
        }
    }

    /// Mean over `t_max` rows of the sum of `reps`, as `1×width`.
    fn avg_pool(&self, tape: &mut Tape, reps: &[Option<Var>], width: usize) -> Var {
        let sums: Vec<Var> = reps.iter().flatten().map(|&r| tape.col_sum(r)).collect();
        match sum_vars(tape, &sums) {
            Some(total) => tape.scale(total, 1.0 / self.config.t_max as f64),
            None => tape.constant(Tensor::zeros(1, width)),
        }
    }

    /// Sum of `reps` placed back at their rows in a `t_max×width` matrix.
    fn scatter_sum(
        &self,
        tape: &mut Tape,
        reps: &[(Option<Var>, &SideInput)],
        width: usize,
    ) -> Result<Var> {
        let mut full = Vec::new();
        for (rep, side) in reps {
            if let Some(r) = rep {
                full.push(tape.scatter_rows(*r, side.index.clone(), self.config.t_max)?);
            }
        }
        Ok(match sum_vars(tape, &full) {
            Some(v) => v,
            None => tape.constant(Tensor::zeros(self.config.t_max, width)),
        })
    }

    /// Quantile outputs as a `1×q` row in quantile order.
    pub fn forward(&self, tape: &mut Tape, input: &ModelInput) -> Result<Var> {
        let u = self.represent(tape, input)?;
        let mut dense = Vec::with_capacity(self.slots.heads.len());
        for &(w, b) in &self.slots.heads {
            let wv = tape.param(&self.params, w);
            let bv = tape.param(&self.params, b);
            let o = tape.matmul(u, wv)?;
            dense.push(tape.add(o, bv)?);
        }
        match self.config.head {
            HeadVariant::Hierarchical => {
                let m = self
                    .config
                    .quantiles
                    .iter()
                    .position(|&q| q == 0.5)
                    .expect("validated");
                let mut out = dense.clone();
                for i in m + 1..dense.len() {
                    let r = tape.abs(dense[i]);
                    out[i] = tape.add(out[i - 1], r)?;
                }
                for i in (0..m).rev() {
                    let r = tape.abs(dense[i]);
                    out[i] = tape.sub(out[i + 1], r)?;
                }
                tape.concat_cols(&out)
            }
            _ => tape.concat_cols(&dense),
        }
    }

    /// Quantile forecast in the (scaled) label space of training.
    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, input)?;
        Ok(tape.value(out).data().to_vec())
    }
}

fn sum_vars(tape: &mut Tape, vars: &[Var]) -> Option<Var> {
    let (&first, rest) = vars.split_first()?;
    let mut acc = first;
    for &v in rest {
        acc = tape.add(acc, v).expect("equal shapes");
    }
    Some(acc)
}

/// Independently trained single-quantile networks whose outputs are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedEnsemble {
    pub members: Vec<FusionModel>,
}

impl SortedEnsemble {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let members = config
            .quantiles
            .iter()
            .enumerate()
            .map(|(i, &tau)| FusionModel::new(config.single_member(tau, i)))
            .collect::<Result<_>>()?;
        Ok(SortedEnsemble { members })
    }

    pub fn predict_unsorted(&self, input: &ModelInput) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.members.len());
        for m in &self.members {
            out.extend(m.predict(input)?);
        }
        Ok(out)
    }

    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>> {
        let mut out = self.predict_unsorted(input)?;
        out.sort_by(f64::total_cmp);
        Ok(out)
    }
}

/// A trained forecaster of any head variant.
#[derive(Debug, Clone, PartialEq)]
pub enum Forecaster {
    Network(FusionModel),
    Sorted(SortedEnsemble),
}

impl Forecaster {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        match config.head {
            HeadVariant::PosthocSort => Ok(Forecaster::Sorted(SortedEnsemble::new(config)?)),
            _ => Ok(Forecaster::Network(FusionModel::new(config.clone())?)),
        }
    }

    pub fn predict(&self, input: &ModelInput) -> Result<Vec<f64>> {
        match self {
            Forecaster::Network(m) => m.predict(input),
            Forecaster::Sorted(e) => e.predict(input),
        }
    }

    pub fn quantiles(&self) -> Vec<f64> {
        match self {
            Forecaster::Network(m) => m.quantiles(),
            Forecaster::Sorted(e) => {
                let mut q: Vec<f64> = e.members.iter().flat_map(|m| m.quantiles()).collect();
                q.sort_by(f64::total_cmp);
                q
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Forecaster::Network(m) => m.params.scalar_count(),
            Forecaster::Sorted(e) => e.members.iter().map(|m| m.params.scalar_count()).sum(),
        }
    }
}

/// The active (non-zero-mask) rows of one side.
#[derive(Debug, Clone, PartialEq)]
pub struct SideInput {
    /// Gathered active rows, `n×3`; `None` when no row is active.
    pub rows: Option<Tensor>,
    /// 0-based positions of the active rows within `t_max`.
    pub index: Vec<usize>,
    /// Mask values of the active rows.
    pub weights: Vec<f64>,
}

impl SideInput {
    pub fn new(padded: &PaddedSide, mask: &[f64]) -> Result<Self> {
        if mask.len() != padded.t_max() {
            return Err(Error::contract("mask length differs from t_max"));
        }
        let index: Vec<usize> = (0..mask.len()).filter(|&j| mask[j] != 0.0).collect();
        let weights: Vec<f64> = index.iter().map(|&j| mask[j]).collect();
        let rows = if index.is_empty() {
            None
        } else {
            let data = index.iter().flat_map(|&j| padded.rows[j]).collect();
            Some(Tensor::new(index.len(), 3, data)?)
        };
        Ok(SideInput {
            rows,
            index,
            weights,
        })
    }

    fn apply_mask(&self, tape: &mut Tape, v: Var) -> Result<Var> {
        if self.weights.iter().all(|&w| w == 1.0) {
            Ok(v)
        } else {
            tape.scale_rows(v, self.weights.clone())
        }
    }
}

/// A sample ready for the network: padded sides reduced to their active rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub t_max: usize,
    pub buy: SideInput,
    pub sell: SideInput,
}

impl ModelInput {
    pub fn new(buy: &PaddedSide, sell: &PaddedSide, buy_mask: &[f64], sell_mask: &[f64]) -> Result<Self> {
        if buy.t_max() != sell.t_max() {
            return Err(Error::contract("sides padded to different lengths"));
        }
        Ok(ModelInput {
            t_max: buy.t_max(),
            buy: SideInput::new(buy, buy_mask)?,
            sell: SideInput::new(sell, sell_mask)?,
        })
    }

    /// Pads a scaled sample and builds masks for `config`.
    pub fn from_sample(sample: &Sample, config: &ModelConfig) -> Result<Self> {
        let (buy, sell, bm, sm) = padded_with_masks(sample, config)?;
        ModelInput::new(&buy, &sell, &bm.combined, &sm.combined)
    }
}

/// Padded sides and their masks for one scaled sample.
pub fn padded_with_masks(
    sample: &Sample,
    config: &ModelConfig,
) -> Result<(PaddedSide, PaddedSide, DualMask, DualMask)> {
    let buy = masking::pad_side(&sample.buy, config.t_max);
    let sell = masking::pad_side(&sample.sell, config.t_max);
    let variant = |side: u64| match config.mask {
        MaskVariant::Random { seed } => MaskVariant::Random {
            seed: sample_seed(seed, sample.delivery_start, side),
        },
        v => v,
    };
    let bm = DualMask::build(&buy, config.cutoff_exponent, variant(0))?;
    let sm = DualMask::build(&sell, config.cutoff_exponent, variant(1))?;
    Ok((buy, sell, bm, sm))
}

/// Seed of the random mask of one delivery and side.
fn sample_seed(seed: u64, delivery: DateTime<Utc>, side: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ (delivery.timestamp() as u64).rotate_left(17) ^ side.wrapping_mul(0xA076_1D64_78BD_642F);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
