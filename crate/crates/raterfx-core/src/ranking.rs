//! Per-policy fitting and the three ranking views.
//!
//! Policies (generating systems) are compared three ways: raw mean ratings,
//! mean quality from the rater-free partial credit model, and mean quality
//! from the rater-facet model. Fits are independent per policy, so the
//! latent scales differ across policies: the table is meant for rank
//! comparisons only and says so in its serialized form.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{DataError, RatingDataset};
use crate::fit::{fit_mfrm, fit_pcm, FitConfig, FitResult};
use crate::model::ModelError;

/// Marker carried by serialized ranking tables: per-policy latent scales are
/// not comparable in magnitude, only by rank.
pub const COMPARABILITY_MARKER: &str = "ranks-only";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pcm,
    Mfrm,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RankingError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("policy {policy_id} missing from the {view} view")]
    MissingPolicy {
        policy_id: String,
        view: &'static str,
    },
    #[error("rank views cover different policy sets")]
    MismatchedPolicies,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("output {output_id} appears under more than one policy")]
    AmbiguousPolicy { output_id: String },
}

/// Mean raw rating per policy, across items and raters.
pub fn raw_means(ds: &RatingDataset) -> Result<BTreeMap<String, f64>, RankingError> {
    ds.require_policies()?;
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for e in ds.encoded() {
        let entry = sums.entry(e.policy).or_insert((0.0, 0));
        entry.0 += ds.scale().label(e.x as usize) as f64;
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(policy, (sum, count))| {
            (
                ds.policies().id(policy as usize).to_owned(),
                sum / count as f64,
            )
        })
        .collect())
}

/// Independent fits per policy. Failures (disconnected policy subsets,
/// degenerate raters) are reported per policy without aborting the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPolicyFits {
    pub model: ModelKind,
    pub fits: BTreeMap<String, FitResult>,
    pub failures: BTreeMap<String, String>,
}

/// Fits one model per policy. The PCM path applies the rounded-mean collapse
/// to each policy subset first.
pub fn fit_per_policy(
    ds: &RatingDataset,
    model: ModelKind,
    config: &FitConfig,
) -> Result<PerPolicyFits, RankingError> {
    ds.require_policies()?;
    let mut fits = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for policy_id in ds.policies().ids() {
        let subset = ds.subset_by_policy(policy_id)?;
        let outcome = match model {
            ModelKind::Mfrm => fit_mfrm(&subset, config),
            ModelKind::Pcm => fit_pcm(&subset.collapse_to_rounded_mean(), config),
        };
        match outcome {
            Ok(fit) => {
                fits.insert(policy_id.clone(), fit);
            }
            Err(err) => {
                failures.insert(policy_id.clone(), err.to_string());
            }
        }
    }
    Ok(PerPolicyFits {
        model,
        fits,
        failures,
    })
}

/// One row of the ranking table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScore {
    pub policy_id: String,
    pub raw_mean: f64,
    pub pcm_theta_mean: f64,
    pub mfrm_theta_mean: f64,
    pub n_outputs: usize,
    pub rank_raw: usize,
    pub rank_pcm: usize,
    pub rank_mfrm: usize,
}

/// The three ranking views side by side. Ranks are dense (1 = best); exact
/// ties are broken by policy id and recorded in `warnings`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyScoreTable {
    /// Always [`COMPARABILITY_MARKER`]: latent means are comparable by rank
    /// only.
    pub comparability: String,
    pub rows: Vec<PolicyScore>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankView {
    Raw,
    Pcm,
    Mfrm,
}

impl PolicyScoreTable {
    pub fn rank_view(&self, view: RankView) -> BTreeMap<String, usize> {
        self.rows
            .iter()
            .map(|r| {
                let rank = match view {
                    RankView::Raw => r.rank_raw,
                    RankView::Pcm => r.rank_pcm,
                    RankView::Mfrm => r.rank_mfrm,
                };
                (r.policy_id.clone(), rank)
            })
            .collect()
    }
}

/// Builds the three-view table from raw means plus per-policy fits of both
/// models.
pub fn ranking_table(
    ds: &RatingDataset,
    pcm_fits: &BTreeMap<String, FitResult>,
    mfrm_fits: &BTreeMap<String, FitResult>,
) -> Result<PolicyScoreTable, RankingError> {
    let raw = raw_means(ds)?;
    let mut outputs_per_policy: BTreeMap<u32, usize> = BTreeMap::new();
    {
        let mut seen_out = u32::MAX;
        for e in ds.encoded() {
            if e.out != seen_out {
                seen_out = e.out;
                *outputs_per_policy.entry(e.policy).or_insert(0) += 1;
            }
        }
    }

    let mut rows = Vec::new();
    for (policy_id, raw_mean) in &raw {
        let pcm = pcm_fits
            .get(policy_id)
            .ok_or_else(|| RankingError::MissingPolicy {
                policy_id: policy_id.clone(),
                view: "pcm",
            })?;
        let mfrm = mfrm_fits
            .get(policy_id)
            .ok_or_else(|| RankingError::MissingPolicy {
                policy_id: policy_id.clone(),
                view: "mfrm",
            })?;
        let policy_idx = ds.policies().index_of(policy_id).unwrap() as u32;
        rows.push(PolicyScore {
            policy_id: policy_id.clone(),
            raw_mean: *raw_mean,
            pcm_theta_mean: mean(pcm.params.theta()),
            mfrm_theta_mean: mean(mfrm.params.theta()),
            n_outputs: outputs_per_policy.get(&policy_idx).copied().unwrap_or(0),
            rank_raw: 0,
            rank_pcm: 0,
            rank_mfrm: 0,
        });
    }

    let mut warnings = Vec::new();
    assign_ranks(
        &mut rows,
        "raw",
        |r| r.raw_mean,
        |r, rank| r.rank_raw = rank,
        &mut warnings,
    );
    assign_ranks(
        &mut rows,
        "pcm",
        |r| r.pcm_theta_mean,
        |r, rank| r.rank_pcm = rank,
        &mut warnings,
    );
    assign_ranks(
        &mut rows,
        "mfrm",
        |r| r.mfrm_theta_mean,
        |r, rank| r.rank_mfrm = rank,
        &mut warnings,
    );

    Ok(PolicyScoreTable {
        comparability: COMPARABILITY_MARKER.to_string(),
        rows,
        warnings,
    })
}

fn assign_ranks(
    rows: &mut [PolicyScore],
    view: &str,
    value: impl Fn(&PolicyScore) -> f64,
    set: impl Fn(&mut PolicyScore, usize),
    warnings: &mut Vec<String>,
) {
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        value(&rows[b])
            .total_cmp(&value(&rows[a]))
            .then_with(|| rows[a].policy_id.cmp(&rows[b].policy_id))
    });
    for (rank0, &idx) in order.iter().enumerate() {
        set(&mut rows[idx], rank0 + 1);
    }
    for pair in order.windows(2) {
        if value(&rows[pair[0]]) == value(&rows[pair[1]]) {
            warnings.push(alloc::format!(
                "{view} view: tie between {} and {} broken by policy id",
                rows[pair[0]].policy_id,
                rows[pair[1]].policy_id
            ));
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean fitted quality per policy from a single joint fit of the whole
/// dataset (one common scale across policies, unlike the per-policy table).
pub fn policy_theta_means(
    ds: &RatingDataset,
    fit: &FitResult,
) -> Result<BTreeMap<String, f64>, RankingError> {
    ds.require_policies()?;
    let theta = fit.params.theta();
    if theta.len() != ds.n_outputs() {
        return Err(RankingError::Model(ModelError::DimensionMismatch(
            alloc::format!("theta: expected {}, got {}", ds.n_outputs(), theta.len()),
        )));
    }
    let mut policy_of_output: Vec<Option<u32>> = alloc::vec![None; ds.n_outputs()];
    for e in ds.encoded() {
        match policy_of_output[e.out as usize] {
            None => policy_of_output[e.out as usize] = Some(e.policy),
            Some(p) if p == e.policy => {}
            Some(_) => {
                return Err(RankingError::AmbiguousPolicy {
                    output_id: ds.outputs().id(e.out as usize).to_owned(),
                });
            }
        }
    }
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for (out, policy) in policy_of_output.iter().enumerate() {
        let policy = policy.expect("every output has records");
        let entry = sums.entry(policy).or_insert((0.0, 0));
        entry.0 += theta[out];
        entry.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(policy, (sum, count))| {
            (
                ds.policies().id(policy as usize).to_owned(),
                sum / count as f64,
            )
        })
        .collect())
}

/// Rank agreement between two views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankShift {
    /// Kendall rank correlation over all policy pairs.
    pub kendall_tau: f64,
    /// Per policy, rank in view B minus rank in view A (positive = dropped).
    pub deltas: BTreeMap<String, i64>,
}

pub fn rank_shift(
    view_a: &BTreeMap<String, usize>,
    view_b: &BTreeMap<String, usize>,
) -> Result<RankShift, RankingError> {
    if view_a.len() != view_b.len() || view_a.keys().any(|k| !view_b.contains_key(k)) {
        return Err(RankingError::MismatchedPolicies);
    }
    let policies: Vec<&String> = view_a.keys().collect();
    let n = policies.len();
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in (i + 1)..n {
            let da = view_a[policies[i]] as i64 - view_a[policies[j]] as i64;
            let db = view_b[policies[i]] as i64 - view_b[policies[j]] as i64;
            let product = da.signum() * db.signum();
            if product > 0 {
                concordant += 1;
            } else if product < 0 {
                discordant += 1;
            }
        }
    }
    let total_pairs = (n * (n - 1) / 2) as f64;
    let kendall_tau = if total_pairs > 0.0 {
        (concordant - discordant) as f64 / total_pairs
    } else {
        1.0
    };
    let deltas = view_a
        .iter()
        .map(|(policy, &rank_a)| (policy.clone(), view_b[policy] as i64 - rank_a as i64))
        .collect();
    Ok(RankShift {
        kendall_tau,
        deltas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingRecord;
    use crate::scale::ScaleSpec;

    fn rec(out: &str, item: &str, rater: &str, policy: &str, cat: i32) -> RatingRecord {
        RatingRecord {
            output_id: out.to_string(),
            item_id: item.to_string(),
            rater_id: rater.to_string(),
            policy_id: Some(policy.to_string()),
            category: cat,
        }
    }

    #[test]
    fn single_policy_raw_mean() {
        let ds = RatingDataset::new(
            ScaleSpec::new(7, 1).unwrap(),
            alloc::vec![rec("o1", "i", "r1", "p", 7), rec("o1", "i", "r2", "p", 7)],
        )
        .unwrap();
        let means = raw_means(&ds).unwrap();
        assert_eq!(means["p"], 7.0);
    }

    #[test]
    fn two_policy_raw_means_match_hand_arithmetic() {
        let ds = RatingDataset::new(
            ScaleSpec::new(7, 1).unwrap(),
            alloc::vec![
                rec("a1", "i", "r1", "pa", 2),
                rec("a2", "i", "r1", "pa", 5),
                rec("b1", "i", "r1", "pb", 6),
                rec("b2", "i", "r1", "pb", 7),
                rec("b3", "i", "r1", "pb", 3),
            ],
        )
        .unwrap();
        let means = raw_means(&ds).unwrap();
        assert!((means["pa"] - 3.5).abs() <= 1e-12);
        assert!((means["pb"] - 16.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn raw_means_are_record_order_invariant() {
        let forward = alloc::vec![
            rec("a1", "i", "r1", "pa", 2),
            rec("a2", "i", "r1", "pa", 5),
            rec("b1", "i", "r1", "pb", 6),
            rec("b2", "i", "r2", "pb", 7),
        ];
        let mut reversed = forward.clone();
        reversed.reverse();
        let scale = crate::scale::ScaleSpec::new(7, 1).unwrap();
        let a = raw_means(&RatingDataset::new(scale, forward).unwrap()).unwrap();
        let b = raw_means(&RatingDataset::new(scale, reversed).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn raw_means_need_policies_everywhere() {
        let mut records = alloc::vec![rec("o1", "i", "r1", "p", 4)];
        records.push(RatingRecord {
            policy_id: None,
            ..rec("o2", "i", "r1", "p", 5)
        });
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        assert!(matches!(
            raw_means(&ds),
            Err(RankingError::Data(DataError::MissingPolicyIds { count: 1 }))
        ));
    }

    fn policy_dataset() -> RatingDataset {
        let mut records = Vec::new();
        for (policy, base) in [("pa", 2), ("pb", 4)] {
            for n in 0..5 {
                for (j, offset) in [(0, 0), (1, 1), (2, 2)] {
                    records.push(rec(
                        &alloc::format!("{policy}-o{n}"),
                        "i",
                        &alloc::format!("r{j}"),
                        policy,
                        (base + (n as i32 % 3) + offset).min(7),
                    ));
                }
            }
        }
        RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap()
    }

    #[test]
    fn one_policy_fit_equals_direct_engine_call() {
        let ds = policy_dataset();
        let sub = ds.subset_by_policy("pa").unwrap();
        let config = FitConfig::default();

        let per_policy = fit_per_policy(&ds, ModelKind::Mfrm, &config).unwrap();
        let direct = fit_mfrm(&sub, &config).unwrap();
        assert_eq!(per_policy.fits["pa"], direct);
        assert!(per_policy.failures.is_empty());

        let per_policy = fit_per_policy(&ds, ModelKind::Pcm, &config).unwrap();
        let direct = fit_pcm(&sub.collapse_to_rounded_mean(), &config).unwrap();
        assert_eq!(per_policy.fits["pa"], direct);
    }

    #[test]
    fn per_policy_fits_are_independent() {
        let ds = policy_dataset();
        let config = FitConfig::default();
        let both = fit_per_policy(&ds, ModelKind::Mfrm, &config).unwrap();

        let only_a: Vec<RatingRecord> = ds
            .records()
            .iter()
            .filter(|r| r.policy_id.as_deref() == Some("pa"))
            .cloned()
            .collect();
        let ds_a = RatingDataset::new(ds.scale(), only_a).unwrap();
        let alone = fit_per_policy(&ds_a, ModelKind::Mfrm, &config).unwrap();
        assert_eq!(both.fits["pa"], alone.fits["pa"]);
    }

    #[test]
    fn table_ranks_are_dense_permutations() {
        let ds = policy_dataset();
        let config = FitConfig::default();
        let pcm = fit_per_policy(&ds, ModelKind::Pcm, &config).unwrap();
        let mfrm = fit_per_policy(&ds, ModelKind::Mfrm, &config).unwrap();
        let table = ranking_table(&ds, &pcm.fits, &mfrm.fits).unwrap();
        assert_eq!(table.comparability, COMPARABILITY_MARKER);
        assert_eq!(table.rows.len(), 2);
        let mut raw_ranks: Vec<usize> = table.rows.iter().map(|r| r.rank_raw).collect();
        raw_ranks.sort_unstable();
        assert_eq!(raw_ranks, alloc::vec![1, 2]);
        // pb is rated higher everywhere.
        let pb = table.rows.iter().find(|r| r.policy_id == "pb").unwrap();
        assert_eq!(pb.rank_raw, 1);
        assert_eq!(pb.n_outputs, 5);
    }

    #[test]
    fn identical_ratings_tie_every_view_with_warnings() {
        let mut records = Vec::new();
        for policy in ["pa", "pb"] {
            for n in 0..4 {
                for j in 0..2 {
                    let cat = if n % 2 == 0 { 3 } else { 5 };
                    records.push(rec(
                        &alloc::format!("{policy}-o{n}"),
                        "i",
                        &alloc::format!("r{j}"),
                        policy,
                        cat,
                    ));
                }
            }
        }
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        let config = FitConfig::default();
        let pcm = fit_per_policy(&ds, ModelKind::Pcm, &config).unwrap();
        let mfrm = fit_per_policy(&ds, ModelKind::Mfrm, &config).unwrap();
        let table = ranking_table(&ds, &pcm.fits, &mfrm.fits).unwrap();
        assert_eq!(table.warnings.len(), 3, "{:?}", table.warnings);
        let pa = table.rows.iter().find(|r| r.policy_id == "pa").unwrap();
        assert_eq!((pa.rank_raw, pa.rank_pcm, pa.rank_mfrm), (1, 1, 1));
    }

    #[test]
    fn missing_fit_is_an_error() {
        let ds = policy_dataset();
        let config = FitConfig::default();
        let pcm = fit_per_policy(&ds, ModelKind::Pcm, &config).unwrap();
        let mut mfrm = fit_per_policy(&ds, ModelKind::Mfrm, &config).unwrap();
        mfrm.fits.remove("pb");
        assert!(matches!(
            ranking_table(&ds, &pcm.fits, &mfrm.fits),
            Err(RankingError::MissingPolicy { view: "mfrm", .. })
        ));
    }

    fn view(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn rank_shift_endpoints() {
        let a = view(&[("p1", 1), ("p2", 2), ("p3", 3)]);
        let same = rank_shift(&a, &a).unwrap();
        assert_eq!(same.kendall_tau, 1.0);
        assert!(same.deltas.values().all(|d| *d == 0));

        let reversed = view(&[("p1", 3), ("p2", 2), ("p3", 1)]);
        let flipped = rank_shift(&a, &reversed).unwrap();
        assert_eq!(flipped.kendall_tau, -1.0);
        assert_eq!(flipped.deltas["p1"], 2);
        assert_eq!(flipped.deltas["p3"], -2);
    }

    #[test]
    fn rank_shift_matches_pair_counting_oracle() {
        let a = view(&[("p1", 1), ("p2", 2), ("p3", 3), ("p4", 4), ("p5", 5)]);
        let b = view(&[("p1", 2), ("p2", 4), ("p3", 1), ("p4", 5), ("p5", 3)]);
        let shift = rank_shift(&a, &b).unwrap();

        // Brute force over all C(5,2) pairs with the sign-product formula.
        let names = ["p1", "p2", "p3", "p4", "p5"];
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..5 {
            for j in (i + 1)..5 {
                let da = (a[names[i]] as i64 - a[names[j]] as i64).signum();
                let db = (b[names[i]] as i64 - b[names[j]] as i64).signum();
                total += (da * db) as f64;
                pairs += 1.0;
            }
        }
        assert!((shift.kendall_tau - total / pairs).abs() <= 1e-12);
    }

    #[test]
    fn rank_shift_rejects_mismatched_sets() {
        let a = view(&[("p1", 1), ("p2", 2)]);
        let b = view(&[("p1", 1), ("p3", 2)]);
        assert!(matches!(
            rank_shift(&a, &b),
            Err(RankingError::MismatchedPolicies)
        ));
    }

    #[test]
    fn joint_fit_policy_means() {
        let ds = policy_dataset();
        let fit = fit_mfrm(&ds, &FitConfig::default()).unwrap();
        let means = policy_theta_means(&ds, &fit).unwrap();
        assert_eq!(means.len(), 2);
        // pb's ratings sit two categories above pa's under the same raters.
        assert!(means["pb"] > means["pa"]);
    }
}
