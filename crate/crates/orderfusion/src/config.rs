//! Plain-text `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use orderfusion_core::baselines::{LqrConfig, MlpConfig};
use orderfusion_core::market::MarketConfig;
use orderfusion_core::masking::MaskVariant;
use orderfusion_core::model::{Aggregation, FusionVariant, HeadVariant, ModelConfig, Pooling};
use orderfusion_core::synth::SynthConfig;
use orderfusion_core::train::{GridSpace, TrainConfig};

use crate::error::{CliError, Result};

/// Germany or Austria; sets the gate-closure offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Market {
    De,
    At,
}

impl Market {
    pub fn config(self, index: u8) -> Result<MarketConfig> {
        Ok(match self {
            Market::De => MarketConfig::germany(index)?,
            Market::At => MarketConfig::austria(index)?,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Market::De => "DE",
            Market::At => "AT",
        }
    }
}

impl FromStr for Market {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "DE" => Ok(Market::De),
            "AT" => Ok(Market::At),
            _ => Err(format!("unknown market {s:?}, expected DE or AT")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitSpec {
    /// Chronological fractions of the sample count.
    Fractions { train: f64, val: f64 },
    /// Fold `fold` (1-based) of the rolling protocol starting at `start`.
    Rolling { start: NaiveDate, fold: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSettings {
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
}

/// Everything a run needs; built from a config file and command-line overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub market: Market,
    pub index: u8,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub synth: SynthConfig,
    pub grid: GridSpace,
    pub grid_budget: Option<usize>,
    pub lqr: LqrConfig,
    pub mlp: MlpSettings,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            seed: 0,
            market: Market::De,
            index: 1,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::Fractions { train: 0.7, val: 0.15 },
            synth: SynthConfig::default(),
            grid: GridSpace::default(),
            grid_budget: None,
            lqr: LqrConfig::default(),
            mlp: MlpSettings {
                hidden: 16,
                layers: 2,
                dropout: 0.1,
            },
        }
    }
}

/// splitmix64 finaliser; derives per-module seeds from the run seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MODEL_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const SYNTH_STREAM: u64 = 3;
const MASK_STREAM: u64 = 4;

impl Settings {
    /// Distributes the run seed and market choice to every module.
    pub fn resolve(mut self) -> Result<Self> {
        self.model.seed = sub_seed(self.seed, MODEL_STREAM);
        self.train.seed = sub_seed(self.seed, TRAIN_STREAM);
        self.synth.seed = sub_seed(self.seed, SYNTH_STREAM);
        if let MaskVariant::Random { .. } = self.model.mask {
            self.model.mask = MaskVariant::Random {
                seed: sub_seed(self.seed, MASK_STREAM),
            };
        }
        self.synth.market = self.market.config(self.index)?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(self)
    }

    pub fn market_config(&self) -> Result<MarketConfig> {
        self.market.config(self.index)
    }

    pub fn mlp_config(&self, inputs: usize) -> MlpConfig {
        MlpConfig {
            hidden: self.mlp.hidden,
            layers: self.mlp.layers,
            dropout: self.mlp.dropout,
            seed: self.model.seed,
            ..MlpConfig::new(inputs, &self.model.quantiles)
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("invalid value {v:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| parse(key, x.trim())).collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("invalid boolean {v:?} for {key}"))),
    }
}

pub fn mask_name(m: MaskVariant) -> String {
    match m {
        MaskVariant::Dual => "dual".into(),
        MaskVariant::None => "none".into(),
        MaskVariant::Random { seed } => format!("random:{seed}"),
        MaskVariant::Reverse => "reverse".into(),
    }
}

pub fn parse_mask(v: &str) -> Result<MaskVariant> {
    match v {
        "dual" => Ok(MaskVariant::Dual),
        "none" => Ok(MaskVariant::None),
        "reverse" => Ok(MaskVariant::Reverse),
        "random" => Ok(MaskVariant::Random { seed: 0 }),
        _ => match v.strip_prefix("random:") {
            Some(s) => Ok(MaskVariant::Random { seed: parse("mask", s)? }),
            None => Err(CliError::Usage(format!("unknown mask {v:?}"))),
        },
    }
}

pub fn head_name(h: HeadVariant) -> String {
    match h {
        HeadVariant::Hierarchical => "hierarchical".into(),
        HeadVariant::Multi => "multi".into(),
        HeadVariant::Single(t) => format!("single:{t}"),
        HeadVariant::PosthocSort => "posthoc_sort".into(),
    }
}

pub fn parse_head(v: &str) -> Result<HeadVariant> {
    match v {
        "hierarchical" => Ok(HeadVariant::Hierarchical),
        "multi" => Ok(HeadVariant::Multi),
        "posthoc_sort" => Ok(HeadVariant::PosthocSort),
        _ => match v.strip_prefix("single:") {
            Some(t) => Ok(HeadVariant::Single(parse("head", t)?)),
            None => Err(CliError::Usage(format!("unknown head {v:?}"))),
        },
    }
}

pub fn aggregation_name(a: Aggregation) -> &'static str {
    match a {
        Aggregation::Residual => "residual",
        Aggregation::NoResidual => "no_residual",
        Aggregation::Concat => "concat",
    }
}

pub fn parse_aggregation(v: &str) -> Result<Aggregation> {
    match v {
        "residual" => Ok(Aggregation::Residual),
        "no_residual" => Ok(Aggregation::NoResidual),
        "concat" => Ok(Aggregation::Concat),
        _ => Err(CliError::Usage(format!("unknown aggregation {v:?}"))),
    }
}

pub fn pooling_name(p: Pooling) -> &'static str {
    match p {
        Pooling::Avg => "avg",
        Pooling::Max => "max",
    }
}

pub fn parse_pooling(v: &str) -> Result<Pooling> {
    match v {
        "avg" => Ok(Pooling::Avg),
        "max" => Ok(Pooling::Max),
        _ => Err(CliError::Usage(format!("unknown pooling {v:?}"))),
    }
}

/// Ablation variants selectable with `--variant`.
pub const VARIANTS: [&str; 11] = [
    "orderfusion",
    "no_mask",
    "random_mask",
    "reverse_mask",
    "no_fusion",
    "no_residual",
    "concat",
    "max_pool",
    "multi_head",
    "posthoc_sort",
    "input_bias",
];

/// Applies a named ablation to `model`.
pub fn apply_variant(model: &mut ModelConfig, variant: &str) -> Result<()> {
    match variant {
        "orderfusion" => {}
        "no_mask" => model.mask = MaskVariant::None,
        "random_mask" => model.mask = MaskVariant::Random { seed: 0 },
        "reverse_mask" => model.mask = MaskVariant::Reverse,
        "no_fusion" => model.fusion = FusionVariant::NoFusion,
        "no_residual" => model.aggregation = Aggregation::NoResidual,
        "concat" => model.aggregation = Aggregation::Concat,
        "max_pool" => model.pooling = Pooling::Max,
        "multi_head" => model.head = HeadVariant::Multi,
        "posthoc_sort" => model.head = HeadVariant::PosthocSort,
        "input_bias" => model.input_bias = true,
        _ => {
            return Err(CliError::Usage(format!(
                "unknown variant {variant:?}; expected one of {}",
                VARIANTS.join(", ")
            )))
        }
    }
    Ok(())
}

/// Parses `key = value` lines; `#` starts a comment. Duplicate keys are an error.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Usage(format!("config line {}: duplicate key {k}", i + 1)));
        }
    }
    Ok(out)
}

impl Settings {
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut s = Settings::default();
        let mut split_start = None;
        let mut split_fold = None;
        let (mut train_frac, mut val_frac) = (0.7, 0.15);
        for (k, v) in kv {
            let k = k.as_str();
            let v = v.as_str();
            match k {
                "seed" => s.seed = parse(k, v)?,
                "market" => s.market = v.parse().map_err(CliError::Usage)?,
                "index" => s.index = parse(k, v)?,

                "hidden_dim" => s.model.hidden_dim = parse(k, v)?,
                "interaction_degree" => s.model.interaction_degree = parse(k, v)?,
                "cutoff_exponent" => s.model.cutoff_exponent = parse(k, v)?,
                "t_max" => s.model.t_max = parse(k, v)?,
                "quantiles" => s.model.quantiles = parse_list(k, v)?,
                "mask" => s.model.mask = parse_mask(v)?,
                "fusion" => {
                    s.model.fusion = if parse_bool(k, v)? {
                        FusionVariant::Fusion
                    } else {
                        FusionVariant::NoFusion
                    }
                }
                "aggregation" => s.model.aggregation = parse_aggregation(v)?,
                "pooling" => s.model.pooling = parse_pooling(v)?,
                "head" => s.model.head = parse_head(v)?,
                "input_bias" => s.model.input_bias = parse_bool(k, v)?,
                "variant" => apply_variant(&mut s.model, v)?,

                "epochs" => s.train.epochs = parse(k, v)?,
                "batch_size" => s.train.batch_size = parse(k, v)?,
                "lr0" => s.train.lr0 = parse(k, v)?,
                "decay" => s.train.decay = parse(k, v)?,
                "decay_every" => s.train.decay_every = parse(k, v)?,

                "train_frac" => train_frac = parse(k, v)?,
                "val_frac" => val_frac = parse(k, v)?,
                "fold" => split_fold = Some(parse(k, v)?),
                "fold_start" => split_start = Some(parse(k, v)?),

                "grid.hidden_dim" => s.grid.hidden_dims = parse_list(k, v)?,
                "grid.cutoff_exponent" => s.grid.cutoff_exponents = parse_list(k, v)?,
                "grid.interaction_degree" => s.grid.interaction_degrees = parse_list(k, v)?,
                "grid.budget" => s.grid_budget = Some(parse(k, v)?),

                "lqr.l1" => s.lqr.l1 = parse(k, v)?,
                "lqr.iterations" => s.lqr.iterations = parse(k, v)?,
                "lqr.lr" => s.lqr.lr = parse(k, v)?,
                "mlp.hidden" => s.mlp.hidden = parse(k, v)?,
                "mlp.layers" => s.mlp.layers = parse(k, v)?,
                "mlp.dropout" => s.mlp.dropout = parse(k, v)?,

                "synth.start" => s.synth.start = parse(k, v)?,
                "synth.days" => s.synth.n_days = parse(k, v)?,
                "synth.base_price" => s.synth.base_price = parse(k, v)?,
                "synth.hourly_amplitude" => s.synth.hourly_amplitude = parse(k, v)?,
                "synth.daily_shock_sd" => s.synth.daily_shock_sd = parse(k, v)?,
                "synth.product_shock_sd" => s.synth.product_shock_sd = parse(k, v)?,
                "synth.volatility" => s.synth.volatility = parse(k, v)?,
                "synth.volatility_swing" => s.synth.volatility_swing = parse(k, v)?,
                "synth.jump_intensity" => s.synth.jump_intensity = parse(k, v)?,
                "synth.jump_mean" => s.synth.jump_mean = parse(k, v)?,
                "synth.jump_window_minutes" => s.synth.jump_window_minutes = parse(k, v)?,
                "synth.half_spread" => s.synth.half_spread = parse(k, v)?,
                "synth.arrival_rate" => s.synth.arrival_rate = parse(k, v)?,
                "synth.liquidity_dip" => s.synth.liquidity_dip = parse(k, v)?,
                "synth.volume_mu" => s.synth.volume_mu = parse(k, v)?,
                "synth.volume_sigma" => s.synth.volume_sigma = parse(k, v)?,
                "synth.coupling" => s.synth.coupling = parse(k, v)?,
                "synth.open_minutes" => s.synth.open_minutes = parse(k, v)?,
                _ => return Err(CliError::Usage(format!("unknown config key {k:?}"))),
            }
        }
        s.split = match (split_fold, split_start) {
            (None, None) => SplitSpec::Fractions {
                train: train_frac,
                val: val_frac,
            },
            (fold, start) => SplitSpec::Rolling {
                start: start.unwrap_or(NaiveDate::from_ymd_opt(2022, 1, 1).expect("valid date")),
                fold: fold.unwrap_or(1),
            },
        };
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_kv(&parse_kv(&text)?)
    }
}
