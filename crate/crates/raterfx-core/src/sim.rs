//! Synthetic rating datasets with known truth.
//!
//! Ratings are drawn forward from the same adjacent-logit model the fitter
//! estimates, so simulated datasets double as recovery oracles: fit the
//! model, compare against the generating parameters. Policy blocks assign
//! output ranges to rater subsets (with an optional severity offset on the
//! block's ratings), which is enough to stage severity-distortion and
//! centrality scenarios.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{RatingDataset, RatingRecord};
use crate::model::probs_into;
use crate::rng::{normal_pair, substream, uniform_f64};
use crate::scale::ScaleSpec;

const SETUP_STREAM: u64 = 0x7365_7475; // "setu"
const OUTPUT_STREAM: u64 = 0x6f75_7470; // "outp"

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("raters_per_output {requested} exceeds the {available} available raters")]
    InfeasibleAssignment { requested: usize, available: usize },
    #[error("unknown rater id {0}")]
    UnknownRater(String),
}

/// Fixed values or a normal law for a parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParamSpec {
    Values(Vec<f64>),
    Normal { mean: f64, sd: f64 },
}

/// How raters are assigned to outputs not covered by a policy block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Assignment {
    /// Every rater rates every output.
    FullyCrossed,
    /// Each output gets a window of `raters_per_output` raters from a
    /// shuffled rater cycle; consecutive outputs share one rater, which
    /// keeps the design linked.
    RandomOverlap { raters_per_output: usize },
}

/// A contiguous output range labeled with a policy and rated (fully crossed)
/// by a rater subset. `rho_offset` shifts the effective severity of every
/// rating generated inside the block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBlock {
    pub policy_id: String,
    /// Half-open output index range.
    pub output_range: (usize, usize),
    pub rater_indices: Vec<usize>,
    pub rho_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_outputs: usize,
    pub n_raters: usize,
    pub n_items: usize,
    pub k_categories: usize,
    pub min_label: i32,
    /// Output quality: explicit values (aligned with output index) or a
    /// normal law drawn per output. Not re-centered; quality carries the
    /// scale.
    pub theta: ParamSpec,
    pub delta: ParamSpec,
    pub rho: ParamSpec,
    /// Base thresholds are evenly spaced over [-tau_spread, +tau_spread].
    pub tau_spread: f64,
    /// Per-rater threshold spread multipliers (centrality control); empty
    /// means all 1.
    pub tau_multipliers: Vec<f64>,
    pub assignment: Assignment,
    pub policy_blocks: Vec<PolicyBlock>,
    /// Policy label for outputs outside every block.
    pub default_policy: String,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_outputs: 600,
            n_raters: 15,
            n_items: 4,
            k_categories: 7,
            min_label: 1,
            theta: ParamSpec::Normal { mean: 0.0, sd: 1.0 },
            delta: ParamSpec::Normal { mean: 0.0, sd: 0.5 },
            rho: ParamSpec::Normal { mean: 0.0, sd: 0.5 },
            tau_spread: 1.5,
            tau_multipliers: Vec::new(),
            assignment: Assignment::FullyCrossed,
            policy_blocks: Vec::new(),
            default_policy: "sim".to_string(),
            seed: 42,
        }
    }
}

/// Generating parameters aligned with the emitted dataset's dense id order,
/// pre-centered to the fitter's sum-to-zero constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub output_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub rater_ids: Vec<String>,
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
    pub rho: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
}

fn label(prefix: &str, index: usize, count: usize) -> String {
    let width = count.to_string().len();
    alloc::format!("{prefix}{:0width$}", index + 1)
}

impl SimConfig {
    pub fn output_id(&self, index: usize) -> String {
        label("O", index, self.n_outputs)
    }

    pub fn item_id(&self, index: usize) -> String {
        label("I", index, self.n_items)
    }

    pub fn rater_id(&self, index: usize) -> String {
        label("R", index, self.n_raters)
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.n_outputs == 0 || self.n_raters == 0 || self.n_items == 0 {
            return Err(SimError::InvalidConfig(
                "output, rater, item counts must be >= 1".into(),
            ));
        }
        if self.k_categories < 2 {
            return Err(SimError::InvalidConfig("k_categories must be >= 2".into()));
        }
        if !(self.tau_spread >= 0.0) {
            return Err(SimError::InvalidConfig(
                "tau_spread must be nonnegative".into(),
            ));
        }
        match &self.theta {
            ParamSpec::Values(v) if v.len() != self.n_outputs => {
                return Err(SimError::InvalidConfig(alloc::format!(
                    "theta values: expected {}, got {}",
                    self.n_outputs,
                    v.len()
                )));
            }
            ParamSpec::Normal { sd, .. } if !(*sd >= 0.0) => {
                return Err(SimError::InvalidConfig(
                    "theta sd must be nonnegative".into(),
                ));
            }
            _ => {}
        }
        if !self.tau_multipliers.is_empty() {
            if self.tau_multipliers.len() != self.n_raters {
                return Err(SimError::InvalidConfig(
                    "tau_multipliers must be empty or one per rater".into(),
                ));
            }
            if self.tau_multipliers.iter().any(|m| !(*m > 0.0)) {
                return Err(SimError::InvalidConfig(
                    "tau multipliers must be > 0".into(),
                ));
            }
        }
        if let Assignment::RandomOverlap { raters_per_output } = self.assignment {
            if raters_per_output < 2 {
                return Err(SimError::InvalidConfig(
                    "raters_per_output must be >= 2".into(),
                ));
            }
            if raters_per_output > self.n_raters {
                return Err(SimError::InfeasibleAssignment {
                    requested: raters_per_output,
                    available: self.n_raters,
                });
            }
        }
        let mut covered = vec![false; self.n_outputs];
        for block in &self.policy_blocks {
            let (start, end) = block.output_range;
            if start >= end || end > self.n_outputs {
                return Err(SimError::InvalidConfig(alloc::format!(
                    "block {} range {start}..{end} out of bounds",
                    block.policy_id
                )));
            }
            if block.policy_id.is_empty() {
                return Err(SimError::InvalidConfig("block policy id is empty".into()));
            }
            if block.rater_indices.is_empty()
                || block.rater_indices.iter().any(|&j| j >= self.n_raters)
            {
                return Err(SimError::InvalidConfig(alloc::format!(
                    "block {} rater indices invalid",
                    block.policy_id
                )));
            }
            for slot in covered.iter_mut().take(end).skip(start) {
                if *slot {
                    return Err(SimError::InvalidConfig("policy blocks overlap".into()));
                }
                *slot = true;
            }
        }
        Ok(())
    }

    fn resolve(&self, spec: &ParamSpec, len: usize, stream: u64) -> Result<Vec<f64>, SimError> {
        let mut values = match spec {
            ParamSpec::Values(v) => {
                if v.len() != len {
                    return Err(SimError::InvalidConfig(alloc::format!(
                        "expected {len} values, got {}",
                        v.len()
                    )));
                }
                v.clone()
            }
            ParamSpec::Normal { mean, sd } => {
                let mut rng = substream(self.seed, SETUP_STREAM, stream);
                (0..len)
                    .map(|_| mean + sd * normal_pair(&mut rng).0)
                    .collect()
            }
        };
        // Pre-center to the fitter's identification constraints.
        let mean = values.iter().sum::<f64>() / len as f64;
        for v in values.iter_mut() {
            *v -= mean;
        }
        Ok(values)
    }

    fn base_tau_row(&self) -> Vec<f64> {
        let k = self.k_categories;
        if k == 2 {
            return vec![0.0];
        }
        (0..k - 1)
            .map(|h| -self.tau_spread + 2.0 * self.tau_spread * h as f64 / (k - 2) as f64)
            .collect()
    }
}

/// Draws a full dataset from the generating model. Reproducible: output `n`
/// consumes only its own substream derived from (seed, n), so the emitted
/// records do not depend on evaluation order.
pub fn generate(config: &SimConfig) -> Result<(RatingDataset, SimTruth), SimError> {
    config.validate()?;
    let k = config.k_categories;
    let scale =
        ScaleSpec::new(k, config.min_label).map_err(|e| SimError::InvalidConfig(e.to_string()))?;

    let delta = config.resolve(&config.delta, config.n_items, 1)?;
    let rho = config.resolve(&config.rho, config.n_raters, 2)?;
    let base_row = config.base_tau_row();
    let tau: Vec<Vec<f64>> = (0..config.n_raters)
        .map(|j| {
            let mult = config.tau_multipliers.get(j).copied().unwrap_or(1.0);
            base_row.iter().map(|t| t * mult).collect()
        })
        .collect();

    // Rater windows for outputs outside every block.
    let mut cycle: Vec<usize> = (0..config.n_raters).collect();
    if let Assignment::RandomOverlap { .. } = config.assignment {
        let mut rng = substream(config.seed, SETUP_STREAM, 3);
        for i in (1..cycle.len()).rev() {
            let j = ((uniform_f64(&mut rng) * (i + 1) as f64) as usize).min(i);
            cycle.swap(i, j);
        }
    }

    let block_of_output: Vec<Option<usize>> = {
        let mut map = vec![None; config.n_outputs];
        for (b, block) in config.policy_blocks.iter().enumerate() {
            for slot in map
                .iter_mut()
                .take(block.output_range.1)
                .skip(block.output_range.0)
            {
                *slot = Some(b);
            }
        }
        map
    };

    let mut theta = vec![0.0; config.n_outputs];
    let mut records = Vec::new();
    let mut probs = vec![0.0; k];
    for n in 0..config.n_outputs {
        let mut rng = substream(config.seed, OUTPUT_STREAM, n as u64);
        theta[n] = match &config.theta {
            ParamSpec::Values(values) => values[n],
            ParamSpec::Normal { mean, sd } => mean + sd * normal_pair(&mut rng).0,
        };

        let (raters, offset, policy): (Vec<usize>, f64, &str) = match block_of_output[n] {
            Some(b) => {
                let block = &config.policy_blocks[b];
                (
                    block.rater_indices.clone(),
                    block.rho_offset,
                    &block.policy_id,
                )
            }
            None => {
                let raters = match config.assignment {
                    Assignment::FullyCrossed => (0..config.n_raters).collect(),
                    Assignment::RandomOverlap { raters_per_output } => (0..raters_per_output)
                        .map(|t| cycle[(n * (raters_per_output - 1) + t) % config.n_raters])
                        .collect(),
                };
                (raters, 0.0, config.default_policy.as_str())
            }
        };

        for &j in &raters {
            for i in 0..config.n_items {
                let eta = theta[n] - delta[i] - (rho[j] + offset);
                probs_into(eta, &tau[j], &mut probs);
                let u = uniform_f64(&mut rng);
                let mut cumulative = 0.0;
                let mut position = k - 1;
                for (x, p) in probs.iter().enumerate() {
                    cumulative += p;
                    if u < cumulative {
                        position = x;
                        break;
                    }
                }
                records.push(RatingRecord {
                    output_id: config.output_id(n),
                    item_id: config.item_id(i),
                    rater_id: config.rater_id(j),
                    policy_id: Some(policy.to_owned()),
                    category: scale.label(position),
                });
            }
        }
    }

    let truth = SimTruth {
        output_ids: (0..config.n_outputs).map(|n| config.output_id(n)).collect(),
        item_ids: (0..config.n_items).map(|i| config.item_id(i)).collect(),
        rater_ids: (0..config.n_raters).map(|j| config.rater_id(j)).collect(),
        theta,
        delta,
        rho,
        tau,
    };
    let dataset =
        RatingDataset::new(scale, records).expect("generated records satisfy dataset invariants");
    Ok((dataset, truth))
}

/// [`generate`] with the listed raters' threshold rows scaled by
/// `spread_multiplier` (wider thresholds concentrate their ratings in the
/// middle of the scale).
pub fn centrality_scenario(
    config: &SimConfig,
    central_rater_ids: &[&str],
    spread_multiplier: f64,
) -> Result<(RatingDataset, SimTruth), SimError> {
    if !(spread_multiplier > 0.0) {
        return Err(SimError::InvalidConfig(
            "spread multiplier must be > 0".into(),
        ));
    }
    let mut adjusted = config.clone();
    if adjusted.tau_multipliers.is_empty() {
        adjusted.tau_multipliers = vec![1.0; adjusted.n_raters];
    }
    for id in central_rater_ids {
        let index = (0..adjusted.n_raters)
            .find(|&j| adjusted.rater_id(j) == *id)
            .ok_or_else(|| SimError::UnknownRater((*id).to_owned()))?;
        adjusted.tau_multipliers[index] *= spread_multiplier;
    }
    generate(&adjusted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linkage::check_linkage;

    #[test]
    fn same_seed_reproduces_the_dataset() {
        let cfg = SimConfig {
            n_outputs: 20,
            n_raters: 4,
            n_items: 2,
            ..Default::default()
        };
        let (a, _) = generate(&cfg).unwrap();
        let (b, _) = generate(&cfg).unwrap();
        assert_eq!(a.records(), b.records());
        let (c, _) = generate(&SimConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.records(), c.records());
    }

    #[test]
    fn two_categories_with_zero_parameters_split_evenly() {
        let cfg = SimConfig {
            n_outputs: 500,
            n_raters: 5,
            n_items: 4,
            k_categories: 2,
            theta: ParamSpec::Normal { mean: 0.0, sd: 0.0 },
            delta: ParamSpec::Values(alloc::vec![0.0; 4]),
            rho: ParamSpec::Values(alloc::vec![0.0; 5]),
            ..Default::default()
        };
        let (ds, _) = generate(&cfg).unwrap();
        assert_eq!(ds.n_records(), 10_000);
        let top = ds.records().iter().filter(|r| r.category == 2).count() as f64;
        let share = top / 10_000.0;
        // 4 sigma of binomial(10000, 0.5) is 0.02.
        assert!((share - 0.5).abs() < 0.02, "share {share}");
    }

    #[test]
    fn severity_offset_block_lowers_observed_ratings() {
        let raters: Vec<usize> = (0..6).collect();
        let cfg = SimConfig {
            n_outputs: 300,
            n_raters: 6,
            n_items: 2,
            theta: ParamSpec::Normal { mean: 0.0, sd: 0.0 },
            delta: ParamSpec::Values(alloc::vec![0.0; 2]),
            rho: ParamSpec::Values(alloc::vec![0.0; 6]),
            policy_blocks: alloc::vec![
                PolicyBlock {
                    policy_id: "base".into(),
                    output_range: (0, 150),
                    rater_indices: raters.clone(),
                    rho_offset: 0.0,
                },
                PolicyBlock {
                    policy_id: "harsh".into(),
                    output_range: (150, 300),
                    rater_indices: raters,
                    rho_offset: 1.0,
                },
            ],
            ..Default::default()
        };
        let (ds, _) = generate(&cfg).unwrap();
        let mean_of = |policy: &str| {
            let (sum, count) = ds
                .records()
                .iter()
                .filter(|r| r.policy_id.as_deref() == Some(policy))
                .fold((0.0, 0usize), |(s, c), r| (s + r.category as f64, c + 1));
            sum / count as f64
        };
        assert!(mean_of("harsh") < mean_of("base") - 0.3);
    }

    #[test]
    fn infeasible_overlap_is_rejected() {
        let cfg = SimConfig {
            n_raters: 3,
            assignment: Assignment::RandomOverlap {
                raters_per_output: 4,
            },
            ..Default::default()
        };
        assert!(matches!(
            generate(&cfg),
            Err(SimError::InfeasibleAssignment {
                requested: 4,
                available: 3
            })
        ));
    }

    #[test]
    fn random_overlap_stays_linked() {
        let cfg = SimConfig {
            n_outputs: 50,
            n_raters: 10,
            n_items: 2,
            assignment: Assignment::RandomOverlap {
                raters_per_output: 2,
            },
            ..Default::default()
        };
        let (ds, _) = generate(&cfg).unwrap();
        assert_eq!(check_linkage(&ds).component_count, 1);
        // Every output got exactly 2 raters x 2 items.
        assert_eq!(ds.n_records(), 50 * 2 * 2);
    }

    #[test]
    fn multiplier_one_is_the_identity_scenario() {
        let cfg = SimConfig {
            n_outputs: 15,
            n_raters: 3,
            n_items: 2,
            ..Default::default()
        };
        let (plain, truth_a) = generate(&cfg).unwrap();
        let (scenario, truth_b) = centrality_scenario(&cfg, &["R2"], 1.0).unwrap();
        assert_eq!(plain.records(), scenario.records());
        assert_eq!(truth_a, truth_b);
    }

    #[test]
    fn unknown_rater_id_is_rejected() {
        let cfg = SimConfig::default();
        assert!(matches!(
            centrality_scenario(&cfg, &["R99"], 3.0),
            Err(SimError::UnknownRater(id)) if id == "R99"
        ));
    }

    #[test]
    fn wide_thresholds_compress_a_raters_ratings() {
        // 1250 outputs x 4 raters x 1 item = 5000 ratings per rater.
        let cfg = SimConfig {
            n_outputs: 1250,
            n_raters: 4,
            n_items: 1,
            delta: ParamSpec::Values(alloc::vec![0.0]),
            rho: ParamSpec::Values(alloc::vec![0.0; 4]),
            ..Default::default()
        };
        let (ds, _) = centrality_scenario(&cfg, &["R3"], 3.0).unwrap();
        let sd_of = |rater: &str| {
            let ratings: Vec<f64> = ds
                .records()
                .iter()
                .filter(|r| r.rater_id == rater)
                .map(|r| r.category as f64)
                .collect();
            let mean = ratings.iter().sum::<f64>() / ratings.len() as f64;
            let var = ratings.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                / (ratings.len() - 1) as f64;
            libm::sqrt(var)
        };
        let central = sd_of("R3");
        for other in ["R1", "R2", "R4"] {
            assert!(
                central < sd_of(other),
                "central {central} vs {other} {}",
                sd_of(other)
            );
        }
    }

    #[test]
    fn empirical_frequencies_match_category_probabilities() {
        // Fixed parameters everywhere, so every record shares one
        // probability vector; 100k draws pin the empirical shares down.
        let cfg = SimConfig {
            n_outputs: 2500,
            n_raters: 10,
            n_items: 4,
            theta: ParamSpec::Normal { mean: 0.6, sd: 0.0 },
            delta: ParamSpec::Values(alloc::vec![0.0; 4]),
            rho: ParamSpec::Values(alloc::vec![0.0; 10]),
            ..Default::default()
        };
        let (ds, truth) = generate(&cfg).unwrap();
        assert_eq!(ds.n_records(), 100_000);
        let expected = crate::model::category_probs(0.6, 0.0, 0.0, &truth.tau[0]);
        let mut counts = alloc::vec![0usize; 7];
        for r in ds.records() {
            counts[(r.category - 1) as usize] += 1;
        }
        for (x, &count) in counts.iter().enumerate() {
            let share = count as f64 / 100_000.0;
            let sigma = libm::sqrt(expected[x] * (1.0 - expected[x]) / 100_000.0);
            assert!(
                (share - expected[x]).abs() < 5.0 * sigma.max(1e-4),
                "category {x}: share {share} vs expected {}",
                expected[x]
            );
        }
    }

    #[test]
    fn truth_satisfies_fitter_constraints() {
        let (_, truth) = generate(&SimConfig {
            n_outputs: 10,
            n_raters: 5,
            n_items: 3,
            ..Default::default()
        })
        .unwrap();
        assert!(truth.delta.iter().sum::<f64>().abs() <= 1e-12);
        assert!(truth.rho.iter().sum::<f64>().abs() <= 1e-12);
        for row in &truth.tau {
            assert!(row.iter().sum::<f64>().abs() <= 1e-9);
        }
    }
}
