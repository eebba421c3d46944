//! The report pipeline: validate, agree, fit per policy, diagnose, rank,
//! bundle.
//!
//! Per-policy fits run on the ambient rayon pool; each policy's fit is
//! independent and results are collected into ordered maps, so the artifacts
//! are identical for any thread count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use raterfx_core::agreement::{agreement_summary, AgreementSummary, BootstrapConfig};
use raterfx_core::data::{DataError, RatingDataset};
use raterfx_core::diagnostics::{
    complete_rows, cronbach_alpha, eigenvalue_screen, flag_raters, item_correlation_matrix,
    item_score_table, rater_profiles, yen_q3, EigenScreen, FlagRule, RaterProfile,
};
use raterfx_core::fit::{fit_mfrm, fit_pcm, FitConfig};
use raterfx_core::linkage::check_linkage;
use raterfx_core::ranking::{
    rank_shift, ranking_table, ModelKind, PerPolicyFits, RankView, RankingError,
};

use crate::artifacts::ArtifactWriter;
use crate::csv_io::{
    write_profiles, write_ranking, write_score_distribution, write_severity_centrality, PolicyMeta,
};
use crate::fit_io::PerPolicyReport;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub fit: FitConfig,
    pub bootstrap: BootstrapConfig,
    pub flag_rule: FlagRule,
    pub policy_meta: Option<BTreeMap<String, PolicyMeta>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            bootstrap: BootstrapConfig::default(),
            flag_rule: FlagRule::default(),
            policy_meta: None,
        }
    }
}

#[derive(Debug, Default)]
pub struct ReportOutcome {
    pub warnings: Vec<String>,
    pub non_converged: bool,
}

/// Parallel twin of `raterfx_core::ranking::fit_per_policy`; same results,
/// independent fits mapped over the rayon pool.
pub fn fit_per_policy_parallel(
    ds: &RatingDataset,
    model: ModelKind,
    config: &FitConfig,
) -> Result<PerPolicyFits, RankingError> {
    ds.require_policies().map_err(RankingError::Data)?;
    let policies: Vec<String> = ds.policies().ids().to_vec();
    let outcomes: Vec<(String, Result<raterfx_core::fit::FitResult, String>)> = policies
        .par_iter()
        .map(|policy_id| {
            let run = || {
                let subset = ds.subset_by_policy(policy_id).map_err(|e| e.to_string())?;
                match model {
                    ModelKind::Mfrm => fit_mfrm(&subset, config).map_err(|e| e.to_string()),
                    ModelKind::Pcm => fit_pcm(&subset.collapse_to_rounded_mean(), config)
                        .map_err(|e| e.to_string()),
                }
            };
            (policy_id.clone(), run())
        })
        .collect();
    let mut fits = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (policy, outcome) in outcomes {
        match outcome {
            Ok(fit) => {
                fits.insert(policy, fit);
            }
            Err(message) => {
                failures.insert(policy, message);
            }
        }
    }
    Ok(PerPolicyFits {
        model,
        fits,
        failures,
    })
}

/// Per-item seed so two items never share a replicate substream.
fn item_seed(base: u64, item_id: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in item_id.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    base ^ hash
}

/// Agreement summaries per item over its double-rated pairs. Items with
/// fewer than two pairs are reported in the skipped list.
pub fn per_item_agreement(
    ds: &RatingDataset,
    bootstrap: &BootstrapConfig,
) -> anyhow::Result<(BTreeMap<String, AgreementSummary>, Vec<String>)> {
    let mut by_item: BTreeMap<String, Vec<(i32, i32)>> = BTreeMap::new();
    for (item_id, a, b) in ds.double_rated_pairs() {
        by_item.entry(item_id).or_default().push((a, b));
    }
    let mut summaries = BTreeMap::new();
    let mut skipped = Vec::new();
    for item_id in ds.items().ids() {
        match by_item.get(item_id) {
            Some(pairs) if pairs.len() >= 2 => {
                let cfg = BootstrapConfig {
                    seed: item_seed(bootstrap.seed, item_id),
                    ..*bootstrap
                };
                summaries.insert(item_id.clone(), agreement_summary(pairs, ds.scale(), &cfg)?);
            }
            _ => skipped.push(item_id.clone()),
        }
    }
    Ok((summaries, skipped))
}

#[derive(Debug, Clone, Serialize)]
pub struct PolicyDiagnostics {
    pub alpha: Option<f64>,
    pub eigen: Option<EigenScreen>,
    pub q3_mean: Option<f64>,
    pub q3_max_positive: Option<f64>,
    pub notes: Vec<String>,
    pub profiles: Vec<RaterProfile>,
}

/// Assumption checks plus flagged rater profiles for one already-fitted
/// policy subset (diagnostics never trigger their own fits).
pub fn policy_diagnostics(
    subset: &RatingDataset,
    mfrm_fit: &raterfx_core::fit::FitResult,
    flag_rule: &FlagRule,
) -> PolicyDiagnostics {
    let mut notes = Vec::new();
    let (item_ids, table) = item_score_table(subset);

    let alpha = match cronbach_alpha(&complete_rows(&table)) {
        Ok(a) => Some(a),
        Err(e) => {
            notes.push(format!("alpha unavailable: {e}"));
            None
        }
    };
    let eigen = match item_correlation_matrix(&item_ids, &table)
        .and_then(|corr| eigenvalue_screen(&corr))
    {
        Ok(screen) => Some(screen),
        Err(e) => {
            notes.push(format!("eigenvalue screen unavailable: {e}"));
            None
        }
    };
    let (q3_mean, q3_max_positive) = match yen_q3(subset, mfrm_fit) {
        Ok(report) => (report.mean_q3, report.max_positive_q3),
        Err(e) => {
            notes.push(format!("Q3 unavailable: {e}"));
            (None, None)
        }
    };
    let profiles = match rater_profiles(mfrm_fit, subset) {
        Ok(mut profiles) => {
            flag_raters(&mut profiles, flag_rule);
            profiles
        }
        Err(e) => {
            notes.push(format!("profiles unavailable: {e}"));
            Vec::new()
        }
    };
    PolicyDiagnostics {
        alpha,
        eigen,
        q3_mean,
        q3_max_positive,
        notes,
        profiles,
    }
}

/// Mean severity/centrality per rater across the policies they rated, with
/// the flag rule applied to the averaged indices. Centrality averages skip
/// pooled-threshold fits.
pub fn average_rater_profiles(
    per_policy: &BTreeMap<String, PolicyDiagnostics>,
    flag_rule: &FlagRule,
) -> Vec<RaterProfile> {
    struct Acc {
        severity_sum: f64,
        policies: usize,
        centrality_sum: f64,
        centrality_n: usize,
        ratings: usize,
    }
    let mut acc: BTreeMap<String, Acc> = BTreeMap::new();
    for diag in per_policy.values() {
        for p in &diag.profiles {
            let entry = acc.entry(p.rater_id.clone()).or_insert(Acc {
                severity_sum: 0.0,
                policies: 0,
                centrality_sum: 0.0,
                centrality_n: 0,
                ratings: 0,
            });
            entry.severity_sum += p.severity;
            entry.policies += 1;
            entry.ratings += p.n_ratings;
            if !p.pooled_thresholds {
                entry.centrality_sum += p.centrality;
                entry.centrality_n += 1;
            }
        }
    }
    let mut profiles: Vec<RaterProfile> = acc
        .into_iter()
        .map(|(rater_id, a)| RaterProfile {
            rater_id,
            severity: a.severity_sum / a.policies as f64,
            centrality: if a.centrality_n > 0 {
                a.centrality_sum / a.centrality_n as f64
            } else {
                0.0
            },
            n_ratings: a.ratings,
            pooled_thresholds: a.centrality_n == 0,
            flags: Default::default(),
        })
        .collect();
    flag_raters(&mut profiles, flag_rule);
    profiles
}

#[derive(Serialize)]
struct AgreementFile<'a> {
    #[serde(flatten)]
    items: &'a BTreeMap<String, AgreementSummary>,
}

#[derive(Serialize)]
struct DiagnosticsFile<'a> {
    dataset: DatasetStats,
    per_policy: &'a BTreeMap<String, PolicyDiagnostics>,
    average_rater_profiles: &'a [RaterProfile],
}

#[derive(Serialize)]
struct DatasetStats {
    n_records: usize,
    n_outputs: usize,
    n_items: usize,
    n_raters: usize,
    n_policies: usize,
    n_double_rated_outputs: usize,
}

#[derive(Serialize)]
struct RankingFile<'a> {
    table: &'a raterfx_core::ranking::PolicyScoreTable,
    shift_raw_to_mfrm: &'a raterfx_core::ranking::RankShift,
    shift_pcm_to_mfrm: &'a raterfx_core::ranking::RankShift,
    fit_failures: &'a BTreeMap<String, String>,
}

/// Runs the full bundle into the artifact writer and finishes with the
/// manifest.
pub fn run_report(
    ds: &RatingDataset,
    config: &PipelineConfig,
    writer: &mut ArtifactWriter,
) -> anyhow::Result<ReportOutcome> {
    let mut outcome = ReportOutcome::default();

    let linkage = check_linkage(ds);
    writer.write_json("linkage.json", &linkage)?;
    if !linkage.is_connected() {
        outcome.warnings.push(format!(
            "design has {} linkage components",
            linkage.component_count
        ));
    }

    let (agreement, skipped) = per_item_agreement(ds, &config.bootstrap)?;
    for item in &skipped {
        outcome
            .warnings
            .push(format!("item {item}: fewer than 2 double-rated pairs"));
    }
    writer.write_json("agreement.json", &AgreementFile { items: &agreement })?;

    let mut score_csv = Vec::new();
    write_score_distribution(ds, &mut score_csv)?;
    writer.write("score_distribution.csv", &score_csv)?;

    ds.require_policies()
        .map_err(|e: DataError| anyhow::anyhow!(e))?;
    let subsets: BTreeMap<String, RatingDataset> = ds
        .policies()
        .ids()
        .iter()
        .map(|p| Ok((p.clone(), ds.subset_by_policy(p)?)))
        .collect::<Result<_, DataError>>()?;
    let collapsed: BTreeMap<String, RatingDataset> = subsets
        .iter()
        .map(|(p, s)| (p.clone(), s.collapse_to_rounded_mean()))
        .collect();

    let pcm = fit_per_policy_parallel(ds, ModelKind::Pcm, &config.fit)?;
    let mfrm = fit_per_policy_parallel(ds, ModelKind::Mfrm, &config.fit)?;
    for fits in [&pcm, &mfrm] {
        for (policy, message) in &fits.failures {
            outcome
                .warnings
                .push(format!("policy {policy}: fit failed: {message}"));
        }
        for (policy, fit) in &fits.fits {
            if !fit.converged {
                outcome.non_converged = true;
                outcome
                    .warnings
                    .push(format!("policy {policy}: fit did not converge"));
            }
        }
    }
    writer.write_json(
        "fit_pcm_per_policy.json",
        &PerPolicyReport::from_fits(&pcm, &collapsed),
    )?;
    writer.write_json(
        "fit_mfrm_per_policy.json",
        &PerPolicyReport::from_fits(&mfrm, &subsets),
    )?;

    let table = ranking_table(ds, &pcm.fits, &mfrm.fits)?;
    outcome.warnings.extend(table.warnings.iter().cloned());
    let raw_to_mfrm = rank_shift(
        &table.rank_view(RankView::Raw),
        &table.rank_view(RankView::Mfrm),
    )?;
    let pcm_to_mfrm = rank_shift(
        &table.rank_view(RankView::Pcm),
        &table.rank_view(RankView::Mfrm),
    )?;
    let mut ranking_csv = Vec::new();
    write_ranking(&table, config.policy_meta.as_ref(), &mut ranking_csv)?;
    writer.write("ranking.csv", &ranking_csv)?;
    writer.write_json(
        "ranking.json",
        &RankingFile {
            table: &table,
            shift_raw_to_mfrm: &raw_to_mfrm,
            shift_pcm_to_mfrm: &pcm_to_mfrm,
            fit_failures: &mfrm.failures,
        },
    )?;

    let per_policy: BTreeMap<String, PolicyDiagnostics> = mfrm
        .fits
        .iter()
        .map(|(policy, fit)| {
            (
                policy.clone(),
                policy_diagnostics(&subsets[policy], fit, &config.flag_rule),
            )
        })
        .collect();
    let averages = average_rater_profiles(&per_policy, &config.flag_rule);

    let mut severity_csv = Vec::new();
    let points: Vec<(String, RaterProfile)> = per_policy
        .iter()
        .flat_map(|(policy, diag)| {
            diag.profiles
                .iter()
                .map(move |p| (policy.clone(), p.clone()))
        })
        .collect();
    write_severity_centrality(&points, &mut severity_csv)?;
    writer.write("severity_centrality.csv", &severity_csv)?;

    let mut profiles_csv = Vec::new();
    write_profiles(&averages, &mut profiles_csv)?;
    writer.write("rater_profiles.csv", &profiles_csv)?;

    writer.write_json(
        "diagnostics.json",
        &DiagnosticsFile {
            dataset: DatasetStats {
                n_records: ds.n_records(),
                n_outputs: ds.n_outputs(),
                n_items: ds.n_items(),
                n_raters: ds.n_raters(),
                n_policies: ds.n_policies(),
                n_double_rated_outputs: ds.double_rated_outputs(),
            },
            per_policy: &per_policy,
            average_rater_profiles: &averages,
        },
    )?;

    if !outcome.warnings.is_empty() {
        writer.write_json("warnings.json", &outcome.warnings)?;
    }
    writer.write_manifest()?;
    Ok(outcome)
}
