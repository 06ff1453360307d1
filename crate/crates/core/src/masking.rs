//! Pre-padding and the padding / temporal / dual masks.
//!
//! Positions in this module are 0-based: row `j` here is row `j + 1` in the usual
//! 1-based notation, so the temporal mask keeps rows `j >= t_max - L`.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::market::TradeRow;

/// Sentinel written into padded rows. Never occurs in scaled data.
pub const PAD_VALUE: f64 = 10_000.0;

/// One side of a sample, pre-padded to `t_max` rows of (price, volume, ∇t).
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedSide {
    pub rows: Vec<[f64; 3]>,
    pub valid_len: usize,
}

impl PaddedSide {
    pub fn t_max(&self) -> usize {
        self.rows.len()
    }
}

/// Pre-pads `rows` with sentinel rows. Sides longer than `t_max` keep the newest
/// `t_max` trades.
pub fn pad_side(rows: &[TradeRow], t_max: usize) -> PaddedSide {
    let keep = &rows[rows.len().saturating_sub(t_max)..];
    let mut out = vec![[PAD_VALUE; 3]; t_max - keep.len()];
    out.extend(
        keep.iter()
            .map(|r| [r.price, r.volume, r.minutes_to_delivery]),
    );
    PaddedSide {
        rows: out,
        valid_len: keep.len(),
    }
}

/// 1 where the row holds data, 0 where every cell equals the sentinel.
pub fn padding_mask(p: &PaddedSide) -> Vec<f64> {
    p.rows
        .iter()
        .map(|r| {
            if r.iter().all(|&v| v == PAD_VALUE) {
                0.0
            } else {
                1.0
            }
        })
        .collect()
}

/// 1 on the trailing `L = 2^alpha` positions.
pub fn temporal_mask(t_max: usize, alpha: u32) -> Result<Vec<f64>> {
    let len = cutoff_len(alpha)?;
    if len > t_max {
        return Err(Error::contract("cutoff length 2^alpha exceeds t_max"));
    }
    Ok((0..t_max)
        .map(|j| if j >= t_max - len { 1.0 } else { 0.0 })
        .collect())
}

pub fn cutoff_len(alpha: u32) -> Result<usize> {
    if alpha >= usize::BITS - 1 {
        return Err(Error::contract("cutoff exponent too large"));
    }
    Ok(1 << alpha)
}

/// How the padding and temporal masks are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskVariant {
    /// Padding ⊙ temporal.
    #[default]
    Dual,
    /// All ones.
    None,
    /// i.i.d. U(0, 1) values drawn from the seed.
    Random { seed: u64 },
    /// Keeps the oldest `L` valid rows instead of the newest.
    Reverse,
}

/// Combines a padding mask `b` and a temporal mask `d` under `variant`.
pub fn combine_masks(b: &[f64], d: &[f64], variant: MaskVariant) -> Result<Vec<f64>> {
    if b.len() != d.len() {
        return Err(Error::contract("mask lengths differ"));
    }
    Ok(match variant {
        MaskVariant::Dual => b.iter().zip(d).map(|(x, y)| x * y).collect(),
        MaskVariant::None => vec![1.0; b.len()],
        MaskVariant::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..b.len()).map(|_| rng.random::<f64>()).collect()
        }
        MaskVariant::Reverse => {
            let mut left = d.iter().filter(|&&v| v != 0.0).count();
            b.iter()
                .map(|&v| {
                    if v != 0.0 && left > 0 {
                        left -= 1;
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualMask {
    pub padding: Vec<f64>,
    pub temporal: Vec<f64>,
    pub combined: Vec<f64>,
    pub cutoff_exponent: u32,
}

impl DualMask {
    pub fn build(side: &PaddedSide, alpha: u32, variant: MaskVariant) -> Result<Self> {
        let padding = padding_mask(side);
        let temporal = temporal_mask(side.t_max(), alpha)?;
        let combined = combine_masks(&padding, &temporal, variant)?;
        Ok(DualMask {
            padding,
            temporal,
            combined,
            cutoff_exponent: alpha,
        })
    }

    pub fn cutoff_len(&self) -> usize {
        1 << self.cutoff_exponent
    }
}
