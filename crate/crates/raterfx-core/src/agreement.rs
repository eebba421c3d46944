//! Classical interrater agreement on double-rated pairs.
//!
//! Quadratic weighted kappa plus the plain-language companions (exact
//! agreement, within-one agreement, mean absolute difference), with a
//! seeded percentile bootstrap for the kappa confidence interval.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::rng::{substream, uniform_f64};
use crate::scale::ScaleSpec;

const BOOTSTRAP_STREAM: u64 = 0x6167_7265; // "agre"

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgreementError {
    #[error("agreement needs at least one pair")]
    NoPairs,
    #[error("pair {index}: rating {value} outside the scale")]
    OutOfScale { index: usize, value: i32 },
    #[error("bootstrap confidence interval needs at least 2 pairs, got {0}")]
    NotEnoughPairs(usize),
    #[error("invalid bootstrap configuration: {0}")]
    InvalidConfig(String),
}

/// Percentile bootstrap settings: `replicates` resamples of the pair list at
/// coverage `level`, reproducible under `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replicates: 2000,
            level: 0.95,
            seed: 42,
        }
    }
}

impl BootstrapConfig {
    fn validate(&self) -> Result<(), AgreementError> {
        if self.replicates < 1 {
            return Err(AgreementError::InvalidConfig(
                "replicate count must be >= 1".to_string(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(AgreementError::InvalidConfig(
                "coverage level must lie strictly between 0 and 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Agreement statistics for one collection of rating pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub qwk: f64,
    pub qwk_ci: (f64, f64),
    pub exact_pct: f64,
    pub within_one_pct: f64,
    pub mean_abs_diff: f64,
    pub n_pairs: usize,
    /// Set when the kappa denominator was degenerate (both marginals on the
    /// same single category) and 1.0 was reported by convention.
    pub degenerate_qwk: bool,
}

/// Quadratic weighted kappa: `1 - sum(w * O) / sum(w * E)` with weights
/// `w[a][b] = (a - b)^2 / (K - 1)^2`, `O` the observed joint frequency table
/// and `E` the outer product of the two marginal distributions scaled to the
/// pair count. Perfect agreement returns exactly 1.0.
pub fn qwk(pairs: &[(i32, i32)], scale: ScaleSpec) -> Result<f64, AgreementError> {
    qwk_with_flag(pairs, scale).map(|(value, _)| value)
}

/// [`qwk`] plus a flag marking the degenerate-denominator convention (both
/// marginals concentrated on the same single category reports 1.0 rather
/// than an undefined ratio, so pipelines do not crash on constant columns).
pub fn qwk_with_flag(
    pairs: &[(i32, i32)],
    scale: ScaleSpec,
) -> Result<(f64, bool), AgreementError> {
    let positions = to_positions(pairs, scale)?;
    Ok(qwk_positions(&positions, scale.k_categories))
}

fn to_positions(pairs: &[(i32, i32)], scale: ScaleSpec) -> Result<Vec<(u8, u8)>, AgreementError> {
    if pairs.is_empty() {
        return Err(AgreementError::NoPairs);
    }
    pairs
        .iter()
        .enumerate()
        .map(|(index, &(a, b))| {
            let pa = scale
                .position(a)
                .ok_or(AgreementError::OutOfScale { index, value: a })?;
            let pb = scale
                .position(b)
                .ok_or(AgreementError::OutOfScale { index, value: b })?;
            Ok((pa as u8, pb as u8))
        })
        .collect()
}

fn qwk_positions(positions: &[(u8, u8)], k: usize) -> (f64, bool) {
    let n = positions.len() as f64;
    let mut observed = vec![0.0f64; k * k];
    let mut marginal_a = vec![0.0f64; k];
    let mut marginal_b = vec![0.0f64; k];
    for &(a, b) in positions {
        observed[a as usize * k + b as usize] += 1.0;
        marginal_a[a as usize] += 1.0;
        marginal_b[b as usize] += 1.0;
    }
    let denom_scale = ((k - 1) * (k - 1)) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..k {
        for b in 0..k {
            let w = ((a as f64 - b as f64) * (a as f64 - b as f64)) / denom_scale;
            num += w * observed[a * k + b];
            den += w * marginal_a[a] * marginal_b[b] / n;
        }
    }
    if den == 0.0 {
        // Both marginals sit on the same single category.
        (1.0, true)
    } else {
        (1.0 - num / den, false)
    }
}

/// Full agreement summary with a percentile-bootstrap confidence interval
/// for kappa (pair-level i.i.d. resampling; replicate substreams are derived
/// from (seed, replicate index), so results do not depend on evaluation
/// order). The interval is widened to contain the point estimate when a
/// degenerate resample would otherwise exclude it.
pub fn agreement_summary(
    pairs: &[(i32, i32)],
    scale: ScaleSpec,
    config: &BootstrapConfig,
) -> Result<AgreementSummary, AgreementError> {
    config.validate()?;
    let positions = to_positions(pairs, scale)?;
    if positions.len() < 2 {
        return Err(AgreementError::NotEnoughPairs(positions.len()));
    }
    let k = scale.k_categories;
    let n = positions.len();
    let (point, degenerate) = qwk_positions(&positions, k);

    let mut exact = 0usize;
    let mut within_one = 0usize;
    let mut abs_diff_sum = 0.0;
    for &(a, b) in &positions {
        let d = (a as i32 - b as i32).abs();
        if d == 0 {
            exact += 1;
        }
        if d <= 1 {
            within_one += 1;
        }
        abs_diff_sum += d as f64;
    }

    let mut replicates = Vec::with_capacity(config.replicates);
    let mut resample = vec![(0u8, 0u8); n];
    for r in 0..config.replicates {
        let mut rng = substream(config.seed, BOOTSTRAP_STREAM, r as u64);
        for slot in resample.iter_mut() {
            let idx = ((uniform_f64(&mut rng) * n as f64) as usize).min(n - 1);
            *slot = positions[idx];
        }
        replicates.push(qwk_positions(&resample, k).0);
    }
    replicates.sort_unstable_by(|a, b| a.total_cmp(b));
    let alpha = 1.0 - config.level;
    let b = config.replicates;
    let pick = |q: f64| -> f64 {
        let rank = libm::ceil(q * b as f64) as usize;
        replicates[rank.clamp(1, b) - 1]
    };
    let lower = pick(alpha / 2.0).min(point);
    let upper = pick(1.0 - alpha / 2.0).max(point);

    Ok(AgreementSummary {
        qwk: point,
        qwk_ci: (lower, upper),
        exact_pct: 100.0 * exact as f64 / n as f64,
        within_one_pct: 100.0 * within_one as f64 / n as f64,
        mean_abs_diff: abs_diff_sum / n as f64,
        n_pairs: n,
        degenerate_qwk: degenerate,
    })
}
