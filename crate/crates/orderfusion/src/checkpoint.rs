//! JSON checkpoints: configuration, scalers and named parameters.

use std::path::Path;

use orderfusion_core::market::{MarketConfig, RobustScaler, Scalers};
use orderfusion_core::model::{
    FusionModel, FusionVariant, Forecaster, HeadVariant, ModelConfig, SortedEnsemble,
};
use orderfusion_core::tensor::{ParamSet, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{
    aggregation_name, head_name, mask_name, parse_aggregation, parse_head, parse_mask,
    parse_pooling, pooling_name,
};
use crate::error::{CliError, Result};

pub const MAGIC: &str = "ORDERFUSION.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelDoc {
    hidden_dim: usize,
    interaction_degree: usize,
    cutoff_exponent: u32,
    t_max: usize,
    quantiles: Vec<f64>,
    mask: String,
    fusion: bool,
    aggregation: String,
    pooling: String,
    head: String,
    input_bias: bool,
    seed: u64,
}

impl ModelDoc {
    fn from_config(c: &ModelConfig) -> Self {
        ModelDoc {
            hidden_dim: c.hidden_dim,
            interaction_degree: c.interaction_degree,
            cutoff_exponent: c.cutoff_exponent,
            t_max: c.t_max,
            quantiles: c.quantiles.clone(),
            mask: mask_name(c.mask),
            fusion: c.fusion == FusionVariant::Fusion,
            aggregation: aggregation_name(c.aggregation).into(),
            pooling: pooling_name(c.pooling).into(),
            head: head_name(c.head),
            input_bias: c.input_bias,
            seed: c.seed,
        }
    }

    fn to_config(&self) -> Result<ModelConfig> {
        let c = ModelConfig {
            hidden_dim: self.hidden_dim,
            interaction_degree: self.interaction_degree,
            cutoff_exponent: self.cutoff_exponent,
            t_max: self.t_max,
            quantiles: self.quantiles.clone(),
            mask: parse_mask(&self.mask)?,
            fusion: if self.fusion {
                FusionVariant::Fusion
            } else {
                FusionVariant::NoFusion
            },
            aggregation: parse_aggregation(&self.aggregation)?,
            pooling: parse_pooling(&self.pooling)?,
            head: parse_head(&self.head)?,
            input_bias: self.input_bias,
            seed: self.seed,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ScalerDoc {
    median: f64,
    iqr: f64,
    fitted_on: usize,
}

impl From<RobustScaler> for ScalerDoc {
    fn from(s: RobustScaler) -> Self {
        ScalerDoc {
            median: s.median,
            iqr: s.iqr,
            fitted_on: s.fitted_on,
        }
    }
}

impl From<ScalerDoc> for RobustScaler {
    fn from(s: ScalerDoc) -> Self {
        RobustScaler {
            median: s.median,
            iqr: s.iqr,
            fitted_on: s.fitted_on,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorDoc {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    delta_c_minutes: u32,
    index_x: u8,
    model: ModelDoc,
    feature_scalers: [ScalerDoc; 3],
    label_scaler: ScalerDoc,
    /// One parameter list per network; several for post-hoc sorting.
    networks: Vec<Vec<TensorDoc>>,
}

/// A trained forecaster with everything needed to score new trades.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub market: MarketConfig,
    pub config: ModelConfig,
    pub scalers: Scalers,
    pub forecaster: Forecaster,
}

fn params_doc(p: &ParamSet) -> Vec<TensorDoc> {
    p.iter()
        .map(|p| TensorDoc {
            name: p.name.clone(),
            rows: p.value.rows(),
            cols: p.value.cols(),
            data: p.value.data().to_vec(),
        })
        .collect()
}

fn params_from(doc: &[TensorDoc]) -> Result<ParamSet> {
    let mut ps = ParamSet::new();
    for t in doc {
        ps.add(t.name.clone(), Tensor::new(t.rows, t.cols, t.data.clone())?)?;
    }
    Ok(ps)
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let networks = match &self.forecaster {
            Forecaster::Network(m) => vec![params_doc(m.params())],
            Forecaster::Sorted(e) => e.members.iter().map(|m| params_doc(m.params())).collect(),
        };
        let doc = CheckpointDoc {
            format: MAGIC.into(),
            delta_c_minutes: self.market.delta_c_minutes(),
            index_x: self.market.index_x(),
            model: ModelDoc::from_config(&self.config),
            feature_scalers: self.scalers.features.map(ScalerDoc::from),
            label_scaler: self.scalers.label.into(),
            networks,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| CliError::Data(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CheckpointDoc =
            serde_json::from_str(text).map_err(|e| CliError::Data(format!("bad checkpoint: {e}")))?;
        if doc.format != MAGIC {
            return Err(CliError::Data(format!(
                "unsupported checkpoint format {:?}",
                doc.format
            )));
        }
        let config = doc.model.to_config()?;
        let forecaster = if config.head == HeadVariant::PosthocSort {
            if doc.networks.len() != config.quantiles.len() {
                return Err(CliError::Data("checkpoint network count mismatch".into()));
            }
            let members = config
                .quantiles
                .iter()
                .zip(&doc.networks)
                .enumerate()
                .map(|(i, (&tau, net))| {
                    FusionModel::from_params(config.single_member(tau, i), params_from(net)?)
                        .map_err(CliError::from)
                })
                .collect::<Result<_>>()?;
            Forecaster::Sorted(SortedEnsemble { members })
        } else {
            let [net] = doc.networks.as_slice() else {
                return Err(CliError::Data("checkpoint network count mismatch".into()));
            };
            Forecaster::Network(FusionModel::from_params(config.clone(), params_from(net)?)?)
        };
        Ok(Checkpoint {
            market: MarketConfig::new(doc.delta_c_minutes, doc.index_x)?,
            config,
            scalers: Scalers {
                features: doc.feature_scalers.map(RobustScaler::from),
                label: doc.label_scaler.into(),
            },
            forecaster,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalers() -> Scalers {
        let s = RobustScaler {
            median: 1.5,
            iqr: 0.1 + 0.2,
            fitted_on: 10,
        };
        Scalers {
            features: [s; 3],
            label: s,
        }
    }

    fn round_trip(config: ModelConfig) {
        let ck = Checkpoint {
            market: MarketConfig::germany(2).unwrap(),
            config: config.clone(),
            scalers: scalers(),
            forecaster: Forecaster::new(&config).unwrap(),
        };
        let back = Checkpoint::from_json(&ck.to_json().unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn checkpoints_round_trip_exactly() {
        round_trip(ModelConfig {
            hidden_dim: 4,
            t_max: 8,
            cutoff_exponent: 2,
            ..ModelConfig::default()
        });
        round_trip(ModelConfig {
            hidden_dim: 4,
            t_max: 8,
            cutoff_exponent: 2,
            head: HeadVariant::PosthocSort,
            quantiles: vec![0.1, 0.5, 0.9],
            ..ModelConfig::default()
        });
    }

    #[test]
    fn rejects_foreign_formats() {
        let config = ModelConfig {
            hidden_dim: 4,
            t_max: 8,
            cutoff_exponent: 2,
            ..ModelConfig::default()
        };
        let ck = Checkpoint {
            market: MarketConfig::germany(1).unwrap(),
            config: config.clone(),
            scalers: scalers(),
            forecaster: Forecaster::new(&config).unwrap(),
        };
        let text = ck.to_json().unwrap().replace(MAGIC, "ORDERFUSION.v0");
        assert!(Checkpoint::from_json(&text).is_err());
        assert!(Checkpoint::from_json("{}").is_err());
    }
}
