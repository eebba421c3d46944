//! Rater profiles, percentile flags, and model-assumption diagnostics.
//!
//! A fitted rater model turns into per-rater behavior summaries: severity is
//! the fitted rater logit, centrality the spread of the rater's thresholds
//! (wider thresholds concentrate ratings in the middle of the scale).
//! Percentile flags mark raters in the tails of either index. The
//! assumption side carries Cronbach's alpha, an eigenvalue screen of the
//! item correlations, and pairwise residual correlations between items as a
//! local-independence check.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::RatingDataset;
use crate::fit::{FitResult, FitWarning, FittedParams};
use crate::model::{expected_position, probs_into, ModelError, ModelView};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("rater profiles need a rater-facet model fit")]
    NotRaterModel,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("needs at least {needed} items, got {got}")]
    TooFewItems { needed: usize, got: usize },
    #[error("needs at least {needed} outputs with complete item scores, got {got}")]
    TooFewOutputs { needed: usize, got: usize },
    #[error("total-score variance is zero")]
    ZeroTotalVariance,
    #[error("matrix must be square and symmetric")]
    NotSymmetric,
    #[error("correlation between items {a} and {b} is undefined (fewer than 3 complete pairs or zero variance)")]
    UndefinedCorrelation { a: String, b: String },
}

/// Tail flags over the two rater-effect indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RaterFlag {
    /// Severity above the upper percentile cutoff.
    Severe,
    /// Severity below the lower cutoff.
    Lenient,
    /// Threshold spread above the upper cutoff (middle-heavy scale use).
    Central,
    /// Threshold spread below the lower cutoff (ends-heavy scale use).
    Extreme,
}

/// Per-rater behavior summary from a rater-facet fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterProfile {
    pub rater_id: String,
    /// Fitted severity (logits).
    pub severity: f64,
    /// Sample standard deviation of the rater's fitted thresholds.
    pub centrality: f64,
    pub n_ratings: usize,
    /// True when the rater's thresholds were tied to the pooled row; such
    /// raters are excluded from centrality flagging.
    pub pooled_thresholds: bool,
    pub flags: BTreeSet<RaterFlag>,
}

/// Percentile flagging rule; defaults to the 2.5th/97.5th percentiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRule {
    pub lower_pct: f64,
    pub upper_pct: f64,
}

impl Default for FlagRule {
    fn default() -> Self {
        Self {
            lower_pct: 2.5,
            upper_pct: 97.5,
        }
    }
}

/// Builds per-rater profiles from a rater-facet fit. Severity is the fitted
/// rater logit; centrality the sample standard deviation (denominator K-2)
/// of the rater's K-1 thresholds.
pub fn rater_profiles(
    fit: &FitResult,
    ds: &RatingDataset,
) -> Result<Vec<RaterProfile>, DiagnosticsError> {
    let params = fit
        .params
        .as_mfrm()
        .ok_or(DiagnosticsError::NotRaterModel)?;
    ModelView::mfrm(params).validate(ds)?;

    let pooled: BTreeSet<&str> = fit
        .warnings
        .iter()
        .filter_map(|w| match w {
            FitWarning::PooledThresholds { ids } => Some(ids.iter().map(String::as_str)),
            _ => None,
        })
        .flatten()
        .collect();

    let mut n_ratings = vec![0usize; ds.n_raters()];
    for e in ds.encoded() {
        n_ratings[e.rater as usize] += 1;
    }

    Ok((0..ds.n_raters())
        .map(|j| {
            let rater_id = ds.raters().id(j).to_owned();
            RaterProfile {
                severity: params.rho[j],
                centrality: sample_sd(&params.tau[j]),
                n_ratings: n_ratings[j],
                pooled_thresholds: pooled.contains(rater_id.as_str()),
                rater_id,
                flags: BTreeSet::new(),
            }
        })
        .collect())
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    libm::sqrt(ss / (n - 1.0))
}

/// Nearest-rank tail cutoffs: the bottom block holds ceil(lower_pct% of n)
/// values and the cutoff is the first value above it; mirrored for the top.
/// Returns None for n <= 2, where flagging is defined to be off.
fn tail_cutoffs(values: &[f64], rule: &FlagRule) -> Option<(f64, f64)> {
    let n = values.len();
    if n <= 2 {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.total_cmp(b));
    let lower_block = libm::ceil(rule.lower_pct.clamp(0.0, 100.0) / 100.0 * n as f64) as usize;
    let upper_block =
        libm::ceil((100.0 - rule.upper_pct.clamp(0.0, 100.0)) / 100.0 * n as f64) as usize;
    let lower_cutoff = sorted[lower_block.min(n - 1)];
    let upper_cutoff = sorted[n - 1 - upper_block.min(n - 1)];
    Some((lower_cutoff, upper_cutoff))
}

/// Applies the percentile rule to severity and centrality separately; values
/// strictly beyond a cutoff get the corresponding flag. Pooled-threshold
/// raters keep severity flags but never centrality flags.
pub fn flag_raters(profiles: &mut [RaterProfile], rule: &FlagRule) {
    for p in profiles.iter_mut() {
        p.flags.clear();
    }

    let severities: Vec<f64> = profiles.iter().map(|p| p.severity).collect();
    if let Some((low, high)) = tail_cutoffs(&severities, rule) {
        for p in profiles.iter_mut() {
            if p.severity < low {
                p.flags.insert(RaterFlag::Lenient);
            }
            if p.severity > high {
                p.flags.insert(RaterFlag::Severe);
            }
        }
    }

    let centralities: Vec<f64> = profiles
        .iter()
        .filter(|p| !p.pooled_thresholds)
        .map(|p| p.centrality)
        .collect();
    if let Some((low, high)) = tail_cutoffs(&centralities, rule) {
        for p in profiles.iter_mut().filter(|p| !p.pooled_thresholds) {
            if p.centrality < low {
                p.flags.insert(RaterFlag::Extreme);
            }
            if p.centrality > high {
                p.flags.insert(RaterFlag::Central);
            }
        }
    }
}

/// Pairwise residual correlations between items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Q3Report {
    pub item_ids: Vec<String>,
    /// Symmetric item-pair matrix; the diagonal and undefined pairs (fewer
    /// than 3 common outputs, or zero residual variance) are None.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub mean_q3: Option<f64>,
    pub max_positive_q3: Option<f64>,
}

/// Local-independence check: per (output, item), the residual is the mean
/// over raters of (observed position - model-expected position); the matrix
/// holds Pearson correlations of residual columns over outputs present in
/// both items.
pub fn yen_q3(ds: &RatingDataset, fit: &FitResult) -> Result<Q3Report, DiagnosticsError> {
    let view = match &fit.params {
        FittedParams::Mfrm(p) => ModelView::mfrm(p),
        FittedParams::Pcm(p) => ModelView::pcm(p),
    };
    view.validate(ds)?;
    let n_items = ds.n_items();
    if n_items < 2 {
        return Err(DiagnosticsError::TooFewItems {
            needed: 2,
            got: n_items,
        });
    }

    let n_out = ds.n_outputs();
    let k = ds.scale().k_categories;
    let mut sums = vec![0.0f64; n_out * n_items];
    let mut counts = vec![0u32; n_out * n_items];
    let mut probs = vec![0.0; k];
    for e in ds.encoded() {
        probs_into(view.eta(e), view.tau_row(e), &mut probs);
        let resid = e.x as f64 - expected_position(&probs);
        let cell = e.out as usize * n_items + e.item as usize;
        sums[cell] += resid;
        counts[cell] += 1;
    }
    let residual = |n: usize, i: usize| -> Option<f64> {
        let cell = n * n_items + i;
        if counts[cell] > 0 {
            Some(sums[cell] / counts[cell] as f64)
        } else {
            None
        }
    };

    let mut matrix = vec![vec![None; n_items]; n_items];
    for a in 0..n_items {
        for b in (a + 1)..n_items {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for n in 0..n_out {
                if let (Some(x), Some(y)) = (residual(n, a), residual(n, b)) {
                    xs.push(x);
                    ys.push(y);
                }
            }
            let r = if xs.len() < 3 {
                None
            } else {
                pearson(&xs, &ys)
            };
            matrix[a][b] = r;
            matrix[b][a] = r;
        }
    }

    let present: Vec<f64> = (0..n_items)
        .flat_map(|a| {
            ((a + 1)..n_items).filter_map({
                let matrix = &matrix;
                move |b| matrix[a][b]
            })
        })
        .collect();
    let mean_q3 = if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    };
    let max_positive_q3 = present.iter().copied().reduce(f64::max);

    Ok(Q3Report {
        item_ids: ds.items().ids().to_vec(),
        matrix,
        mean_q3,
        max_positive_q3,
    })
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        None
    } else {
        Some(sxy / libm::sqrt(sxx * syy))
    }
}

/// Internal-consistency coefficient over a complete outputs-by-items score
/// table: `(I / (I - 1)) * (1 - sum(item variances) / variance(total))`,
/// sample variances with denominator n-1.
pub fn cronbach_alpha(table: &[Vec<f64>]) -> Result<f64, DiagnosticsError> {
    let n_rows = table.len();
    if n_rows < 3 {
        return Err(DiagnosticsError::TooFewOutputs {
            needed: 3,
            got: n_rows,
        });
    }
    let n_items = table[0].len();
    if n_items < 2 || table.iter().any(|row| row.len() != n_items) {
        return Err(DiagnosticsError::TooFewItems {
            needed: 2,
            got: n_items,
        });
    }
    let item_var_sum: f64 = (0..n_items)
        .map(|i| {
            let column: Vec<f64> = table.iter().map(|row| row[i]).collect();
            sample_variance(&column)
        })
        .sum();
    let totals: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let total_var = sample_variance(&totals);
    if total_var <= 0.0 {
        return Err(DiagnosticsError::ZeroTotalVariance);
    }
    let items = n_items as f64;
    Ok(items / (items - 1.0) * (1.0 - item_var_sum / total_var))
}

fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Outputs-by-items table of collapsed (rounded-mean) scores; None marks
/// cells never rated. Row order follows the output index, columns the item
/// index.
pub fn item_score_table(ds: &RatingDataset) -> (Vec<String>, Vec<Vec<Option<f64>>>) {
    let collapsed = ds.collapse_to_rounded_mean();
    let n_items = collapsed.n_items();
    let mut table = vec![vec![None; n_items]; collapsed.n_outputs()];
    for e in collapsed.encoded() {
        table[e.out as usize][e.item as usize] = Some(collapsed.scale().label(e.x as usize) as f64);
    }
    (collapsed.items().ids().to_vec(), table)
}

/// Rows of the table with every item present.
pub fn complete_rows(table: &[Vec<Option<f64>>]) -> Vec<Vec<f64>> {
    table
        .iter()
        .filter_map(|row| row.iter().copied().collect::<Option<Vec<f64>>>())
        .collect()
}

/// Pearson correlation matrix over the complete rows of a score table.
pub fn item_correlation_matrix(
    item_ids: &[String],
    table: &[Vec<Option<f64>>],
) -> Result<Vec<Vec<f64>>, DiagnosticsError> {
    let complete = complete_rows(table);
    let n_items = item_ids.len();
    let mut corr = vec![vec![1.0; n_items]; n_items];
    for a in 0..n_items {
        for b in (a + 1)..n_items {
            let xs: Vec<f64> = complete.iter().map(|row| row[a]).collect();
            let ys: Vec<f64> = complete.iter().map(|row| row[b]).collect();
            let r = if xs.len() < 3 {
                None
            } else {
                pearson(&xs, &ys)
            };
            let r = r.ok_or_else(|| DiagnosticsError::UndefinedCorrelation {
                a: item_ids[a].clone(),
                b: item_ids[b].clone(),
            })?;
            corr[a][b] = r;
            corr[b][a] = r;
        }
    }
    Ok(corr)
}

/// Two leading eigenvalues of the item correlation matrix and their ratio;
/// a ratio of at least 3 is reported as consistent with a single dominant
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenScreen {
    pub lambda1: f64,
    pub lambda2: f64,
    pub ratio: f64,
    pub unidimensional: bool,
}

pub fn eigenvalue_screen(corr: &[Vec<f64>]) -> Result<EigenScreen, DiagnosticsError> {
    let n = corr.len();
    if n < 2 || corr.iter().any(|row| row.len() != n) {
        return Err(DiagnosticsError::NotSymmetric);
    }
    for a in 0..n {
        for b in 0..n {
            if (corr[a][b] - corr[b][a]).abs() > 1e-9 {
                return Err(DiagnosticsError::NotSymmetric);
            }
        }
    }
    let eigen = symmetric_eigenvalues(corr);
    let lambda1 = eigen[0];
    let lambda2 = eigen[1];
    let ratio = if lambda2 > 0.0 {
        lambda1 / lambda2
    } else {
        f64::INFINITY
    };
    Ok(EigenScreen {
        lambda1,
        lambda2,
        ratio,
        unidimensional: ratio >= 3.0,
    })
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// descending.
fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + libm::sqrt(theta * theta + 1.0))
                } else {
                    -1.0 / (-theta + libm::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for i in 0..n {
                    let aip = a[i][p];
                    let aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p][i];
                    let aqi = a[q][i];
                    a[p][i] = c * api - s * aqi;
                    a[q][i] = s * api + c * aqi;
                }
            }
        }
    }
    let mut eigen: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eigen.sort_unstable_by(|x, y| y.total_cmp(x));
    eigen
}
