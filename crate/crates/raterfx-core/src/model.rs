//! Adjacent-logit likelihood core.
//!
//! The rater-facet model gives the log-odds of an output landing in category
//! k rather than k-1 on item i from rater j as
//! `theta[n] - delta[i] - rho[j] - tau[j][k-1]`: output quality minus item
//! stringency minus rater severity minus the rater's threshold between the
//! two categories. The rater-free partial credit model drops `rho` and
//! indexes the thresholds by item instead. Everything else in the crate(fit,
//! diagnostics, simulation) is built on the category probabilities, the
//! log-likelihood, and the analytic gradient defined here.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{Encoded, RatingDataset};

/// Parameters of the three-facet rater model.
///
/// `tau[j]` holds rater j's K-1 thresholds; the category-0 term is fixed at 0
/// by convention. Identification: `delta`, `rho`, and every `tau` row sum to
/// zero; `theta` carries the scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfrmParams {
    /// Latent output quality, one per output (logits).
    pub theta: Vec<f64>,
    /// Item stringency, one per item (logits).
    pub delta: Vec<f64>,
    /// Rater severity, one per rater (logits).
    pub rho: Vec<f64>,
    /// Rater-specific thresholds, K-1 per rater (logits).
    pub tau: Vec<Vec<f64>>,
}

/// Parameters of the rater-free partial credit model: thresholds vary by
/// item, no rater facet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcmParams {
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
    /// Item-specific thresholds, K-1 per item (logits).
    pub tau: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("parameter dimensions do not match dataset: {0}")]
    DimensionMismatch(String),
    #[error("non-finite parameter value in {0}")]
    NonFinite(&'static str),
}

impl MfrmParams {
    pub fn zeros(n_outputs: usize, n_items: usize, n_raters: usize, k: usize) -> Self {
        Self {
            theta: vec![0.0; n_outputs],
            delta: vec![0.0; n_items],
            rho: vec![0.0; n_raters],
            tau: vec![vec![0.0; k - 1]; n_raters],
        }
    }

    /// Largest violation of the sum-to-zero identification constraints.
    pub fn constraint_residual(&self) -> f64 {
        let mut worst = sum(&self.delta).abs().max(sum(&self.rho).abs());
        for row in &self.tau {
            worst = worst.max(sum(row).abs());
        }
        worst
    }
}

impl PcmParams {
    pub fn zeros(n_outputs: usize, n_items: usize, k: usize) -> Self {
        Self {
            theta: vec![0.0; n_outputs],
            delta: vec![0.0; n_items],
            tau: vec![vec![0.0; k - 1]; n_items],
        }
    }

    pub fn constraint_residual(&self) -> f64 {
        let mut worst = sum(&self.delta).abs();
        for row in &self.tau {
            worst = worst.max(sum(row).abs());
        }
        worst
    }
}

fn sum(v: &[f64]) -> f64 {
    v.iter().sum()
}

/// Category probabilities for one (output, item, rater) cell.
///
/// Returns P(category position x) for x = 0..K-1 where K = tau_row.len() + 1,
/// from the adjacent-logit expansion: the unnormalized log-weight of position
/// x is `x * (theta - delta - rho) - sum(tau_row[..x])`. Exponent overflow is
/// guarded by max-subtraction, so the result is a probability vector for any
/// finite inputs.
pub fn category_probs(theta: f64, delta: f64, rho: f64, tau_row: &[f64]) -> Vec<f64> {
    let mut probs = vec![0.0; tau_row.len() + 1];
    probs_into(theta - delta - rho, tau_row, &mut probs);
    probs
}

/// In-place version of [`category_probs`] on the combined logit
/// `eta = theta - delta - rho`.
pub(crate) fn probs_into(eta: f64, tau_row: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), tau_row.len() + 1);
    let mut acc = 0.0;
    let mut max = 0.0;
    out[0] = 0.0;
    for (x, t) in tau_row.iter().enumerate() {
        acc += eta - t;
        out[x + 1] = acc;
        if acc > max {
            max = acc;
        }
    }
    let mut norm = 0.0;
    for w in out.iter_mut() {
        *w = libm::exp(*w - max);
        norm += *w;
    }
    for w in out.iter_mut() {
        *w /= norm;
    }
}

/// Mean category position under a probability vector.
pub(crate) fn expected_position(probs: &[f64]) -> f64 {
    probs.iter().enumerate().map(|(x, p)| x as f64 * p).sum()
}

/// Variance of the category position under a probability vector.
pub(crate) fn position_variance(probs: &[f64]) -> f64 {
    let mean = expected_position(probs);
    probs
        .iter()
        .enumerate()
        .map(|(x, p)| {
            let d = x as f64 - mean;
            d * d * p
        })
        .sum()
}

/// Which facet owns the threshold rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TauOwner {
    Rater,
    Item,
}

/// Borrowed parameter view shared by the likelihood, gradient, and fitter.
pub(crate) struct ModelView<'a> {
    pub theta: &'a [f64],
    pub delta: &'a [f64],
    pub rho: Option<&'a [f64]>,
    pub tau: &'a [Vec<f64>],
    pub tau_owner: TauOwner,
}

impl<'a> ModelView<'a> {
    pub fn mfrm(p: &'a MfrmParams) -> Self {
        Self {
            theta: &p.theta,
            delta: &p.delta,
            rho: Some(&p.rho),
            tau: &p.tau,
            tau_owner: TauOwner::Rater,
        }
    }

    pub fn pcm(p: &'a PcmParams) -> Self {
        Self {
            theta: &p.theta,
            delta: &p.delta,
            rho: None,
            tau: &p.tau,
            tau_owner: TauOwner::Item,
        }
    }

    #[inline]
    pub fn eta(&self, e: &Encoded) -> f64 {
        let mut eta = self.theta[e.out as usize] - self.delta[e.item as usize];
        if let Some(rho) = self.rho {
            eta -= rho[e.rater as usize];
        }
        eta
    }

    #[inline]
    pub fn tau_row_index(&self, e: &Encoded) -> usize {
        match self.tau_owner {
            TauOwner::Rater => e.rater as usize,
            TauOwner::Item => e.item as usize,
        }
    }

    #[inline]
    pub fn tau_row(&self, e: &Encoded) -> &[f64] {
        &self.tau[self.tau_row_index(e)]
    }

    pub fn validate(&self, ds: &RatingDataset) -> Result<(), ModelError> {
        let k = ds.scale().k_categories;
        let checks: [(&str, usize, usize); 3] = [
            ("theta", self.theta.len(), ds.n_outputs()),
            ("delta", self.delta.len(), ds.n_items()),
            (
                "tau rows",
                self.tau.len(),
                match self.tau_owner {
                    TauOwner::Rater => ds.n_raters(),
                    TauOwner::Item => ds.n_items(),
                },
            ),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(ModelError::DimensionMismatch(alloc::format!(
                    "{name}: expected {want}, got {got}"
                )));
            }
        }
        if let Some(rho) = self.rho {
            if rho.len() != ds.n_raters() {
                return Err(ModelError::DimensionMismatch(alloc::format!(
                    "rho: expected {}, got {}",
                    ds.n_raters(),
                    rho.len()
                )));
            }
        }
        for row in self.tau {
            if row.len() != k - 1 {
                return Err(ModelError::DimensionMismatch(alloc::format!(
                    "tau row: expected {} thresholds, got {}",
                    k - 1,
                    row.len()
                )));
            }
        }
        let finite = self.theta.iter().all(|v| v.is_finite())
            && self.delta.iter().all(|v| v.is_finite())
            && self.rho.map_or(true, |r| r.iter().all(|v| v.is_finite()))
            && self.tau.iter().all(|row| row.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(ModelError::NonFinite("parameters"));
        }
        Ok(())
    }
}

/// Sum of log category probabilities over a record slice; empty slice sums
/// to zero.
pub(crate) fn log_likelihood_view(encoded: &[Encoded], view: &ModelView<'_>, k: usize) -> f64 {
    let mut probs = vec![0.0; k];
    let mut ll = 0.0;
    for e in encoded {
        probs_into(view.eta(e), view.tau_row(e), &mut probs);
        ll += libm::log(probs[e.x as usize]);
    }
    ll
}

/// Log-likelihood of a dataset under three-facet rater-model parameters.
pub fn log_likelihood_mfrm(ds: &RatingDataset, params: &MfrmParams) -> Result<f64, ModelError> {
    let view = ModelView::mfrm(params);
    view.validate(ds)?;
    Ok(log_likelihood_view(
        ds.encoded(),
        &view,
        ds.scale().k_categories,
    ))
}

/// Log-likelihood of a dataset under partial-credit-model parameters.
pub fn log_likelihood_pcm(ds: &RatingDataset, params: &PcmParams) -> Result<f64, ModelError> {
    let view = ModelView::pcm(params);
    view.validate(ds)?;
    Ok(log_likelihood_view(
        ds.encoded(),
        &view,
        ds.scale().k_categories,
    ))
}

/// Gradient of [`log_likelihood_mfrm`] in every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct MfrmGradient {
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
    pub rho: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
}

/// Gradient of [`log_likelihood_pcm`] in every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct PcmGradient {
    pub theta: Vec<f64>,
    pub delta: Vec<f64>,
    pub tau: Vec<Vec<f64>>,
}

/// Shared gradient accumulation. For each record with observed position x:
/// d/d theta = x - E[x], d/d delta = d/d rho = E[x] - x, and for threshold h
/// (1-based) of the owning row, d/d tau_h = P(position >= h) - [x >= h].
fn accumulate_gradient(
    ds: &RatingDataset,
    view: &ModelView<'_>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let k = ds.scale().k_categories;
    let mut g_theta = vec![0.0; view.theta.len()];
    let mut g_delta = vec![0.0; view.delta.len()];
    let mut g_rho = vec![0.0; view.rho.map_or(0, |r| r.len())];
    let mut g_tau: Vec<Vec<f64>> = view.tau.iter().map(|row| vec![0.0; row.len()]).collect();
    let mut probs = vec![0.0; k];
    for e in ds.encoded() {
        probs_into(view.eta(e), view.tau_row(e), &mut probs);
        let x = e.x as f64;
        let expected = expected_position(&probs);
        let resid = x - expected;
        g_theta[e.out as usize] += resid;
        g_delta[e.item as usize] -= resid;
        if !g_rho.is_empty() {
            g_rho[e.rater as usize] -= resid;
        }
        let row = &mut g_tau[view.tau_row_index(e)];
        // Upper-tail probabilities from the top down.
        let mut tail = 0.0;
        for h in (1..k).rev() {
            tail += probs[h];
            let observed = if (e.x as usize) >= h { 1.0 } else { 0.0 };
            row[h - 1] += tail - observed;
        }
    }
    (g_theta, g_delta, g_rho, g_tau)
}

pub fn gradient_mfrm(ds: &RatingDataset, params: &MfrmParams) -> Result<MfrmGradient, ModelError> {
    let view = ModelView::mfrm(params);
    view.validate(ds)?;
    let (theta, delta, rho, tau) = accumulate_gradient(ds, &view);
    Ok(MfrmGradient {
        theta,
        delta,
        rho,
        tau,
    })
}

pub fn gradient_pcm(ds: &RatingDataset, params: &PcmParams) -> Result<PcmGradient, ModelError> {
    let view = ModelView::pcm(params);
    view.validate(ds)?;
    let (theta, delta, _, tau) = accumulate_gradient(ds, &view);
    Ok(PcmGradient { theta, delta, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingRecord;
    use crate::scale::ScaleSpec;
    use alloc::string::ToString;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn all_zero_parameters_give_uniform() {
        let probs = category_probs(0.0, 0.0, 0.0, &[0.0; 6]);
        for p in &probs {
            assert!(close(*p, 1.0 / 7.0, 1e-12), "{probs:?}");
        }
    }

    #[test]
    fn adjacent_log_odds_reproduce_the_linear_term() {
        // log(P(x)/P(x-1)) must equal theta - delta - rho - tau[x-1] exactly.
        let mut rng = crate::rng::substream(11, 0, 0);
        for _ in 0..200 {
            let theta = 4.0 * (crate::rng::uniform_f64(&mut rng) - 0.5);
            let delta = 2.0 * (crate::rng::uniform_f64(&mut rng) - 0.5);
            let rho = 2.0 * (crate::rng::uniform_f64(&mut rng) - 0.5);
            let tau: Vec<f64> = (0..6)
                .map(|_| 4.0 * (crate::rng::uniform_f64(&mut rng) - 0.5))
                .collect();
            let probs = category_probs(theta, delta, rho, &tau);
            for x in 1..probs.len() {
                let lhs = libm::log(probs[x] / probs[x - 1]);
                let rhs = theta - delta - rho - tau[x - 1];
                assert!(close(lhs, rhs, 1e-10), "x={x} lhs={lhs} rhs={rhs}");
            }
        }
    }

    #[test]
    fn matches_direct_summed_exponent_evaluation() {
        // Independent route: build the unnormalized weights without the
        // max-subtraction guard and normalize directly.
        let (theta, delta, rho) = (1.0, 0.2, -0.3);
        let tau = [-1.0, 0.0, 1.0];
        let eta = theta - delta - rho;
        let mut weights = alloc::vec![1.0f64];
        for x in 1..=3 {
            let mut exponent = 0.0;
            for h in 0..x {
                exponent += eta - tau[h];
            }
            weights.push(libm::exp(exponent));
        }
        let norm: f64 = weights.iter().sum();
        let oracle: Vec<f64> = weights.iter().map(|w| w / norm).collect();

        let probs = category_probs(theta, delta, rho, &tau);
        for (p, o) in probs.iter().zip(&oracle) {
            assert!(close(*p, *o, 1e-14), "{probs:?} vs {oracle:?}");
        }
    }

    #[test]
    fn probabilities_sum_to_one_even_at_extreme_logits() {
        for theta in [-30.0, -5.0, 0.0, 5.0, 30.0] {
            let probs = category_probs(theta, 0.0, 0.0, &[-1.0, -0.5, 0.0, 0.5, 1.0, 2.0]);
            let total: f64 = probs.iter().sum();
            assert!(close(total, 1.0, 1e-12), "theta={theta} total={total}");
            assert!(probs.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn translation_of_theta_and_delta_cancels() {
        let tau = [0.3, -0.1, -0.2];
        let base = category_probs(0.7, -0.4, 0.2, &tau);
        for c in [-3.0, 0.5, 10.0] {
            let shifted = category_probs(0.7 + c, -0.4 + c, 0.2, &tau);
            for (a, b) in base.iter().zip(&shifted) {
                assert!(close(*a, *b, 1e-9));
            }
        }
    }

    #[test]
    fn two_categories_reduce_to_logistic() {
        let (theta, delta, rho) = (0.9, 0.1, -0.4);
        let probs = category_probs(theta, delta, rho, &[0.0]);
        let eta = theta - delta - rho;
        let logistic = 1.0 / (1.0 + libm::exp(-eta));
        assert!(close(probs[1], logistic, 1e-12));
    }

    fn rec(out: &str, item: &str, rater: &str, cat: i32) -> RatingRecord {
        RatingRecord {
            output_id: out.to_string(),
            item_id: item.to_string(),
            rater_id: rater.to_string(),
            policy_id: None,
            category: cat,
        }
    }

    #[test]
    fn single_record_uniform_likelihood() {
        let ds = RatingDataset::new(
            ScaleSpec::new(7, 1).unwrap(),
            alloc::vec![rec("o", "i", "r", 4)],
        )
        .unwrap();
        let params = MfrmParams::zeros(1, 1, 1, 7);
        let ll = log_likelihood_mfrm(&ds, &params).unwrap();
        assert!(close(ll, libm::log(1.0 / 7.0), 1e-12));
    }

    #[test]
    fn empty_record_slice_sums_to_zero() {
        let params = MfrmParams::zeros(1, 1, 1, 7);
        let view = ModelView::mfrm(&params);
        assert_eq!(log_likelihood_view(&[], &view, 7), 0.0);
    }

    #[test]
    fn likelihood_matches_per_record_oracle() {
        let mut rng = crate::rng::substream(5, 1, 0);
        let records: Vec<RatingRecord> = (0..10)
            .map(|i| {
                let cat = 1 + (crate::rng::uniform_f64(&mut rng) * 7.0) as i32;
                rec(
                    &alloc::format!("o{}", i % 4),
                    &alloc::format!("i{}", i % 2),
                    &alloc::format!("r{}", i % 3),
                    cat.min(7),
                )
            })
            .collect();
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        let mut params = MfrmParams::zeros(4, 2, 3, 7);
        for (i, t) in params.theta.iter_mut().enumerate() {
            *t = 0.3 * i as f64 - 0.5;
        }
        params.delta = alloc::vec![0.2, -0.2];
        params.rho = alloc::vec![0.1, -0.3, 0.2];
        params.tau = alloc::vec![alloc::vec![-0.5, -0.2, 0.0, 0.1, 0.2, 0.4]; 3];

        // Oracle: recompute record by record through the public
        // category_probs on original ids.
        let mut oracle = 0.0;
        for r in ds.records() {
            let n = ds.outputs().index_of(&r.output_id).unwrap();
            let i = ds.items().index_of(&r.item_id).unwrap();
            let j = ds.raters().index_of(&r.rater_id).unwrap();
            let probs = category_probs(
                params.theta[n],
                params.delta[i],
                params.rho[j],
                &params.tau[j],
            );
            oracle += libm::log(probs[ds.scale().position(r.category).unwrap()]);
        }
        let ll = log_likelihood_mfrm(&ds, &params).unwrap();
        assert!(close(ll, oracle, 1e-10), "ll={ll} oracle={oracle}");
    }

    #[test]
    fn gradient_zero_for_balanced_data_at_zero() {
        // Every category equally frequent in the single cell: the expected
        // position equals the mean observed position, so theta gradients
        // vanish at the symmetric point.
        let records: Vec<RatingRecord> = (1..=7)
            .map(|c| rec("o", "i", &alloc::format!("r{c}"), c))
            .collect();
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        let params = MfrmParams::zeros(1, 1, 7, 7);
        let grad = gradient_mfrm(&ds, &params).unwrap();
        assert!(close(grad.theta[0], 0.0, 1e-12), "{:?}", grad.theta);
        assert!(close(grad.delta[0], 0.0, 1e-12));
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = crate::rng::substream(17, 3, 0);
        let h = 1e-5;
        for instance in 0..20 {
            let records: Vec<RatingRecord> = (0..20)
                .map(|i| {
                    let cat = 1 + (crate::rng::uniform_f64(&mut rng) * 5.0) as i32;
                    rec(
                        &alloc::format!("o{}", i % 5),
                        &alloc::format!("i{}", (i / 5) % 2),
                        &alloc::format!("r{}", (i / 10) % 2),
                        cat,
                    )
                })
                .collect();
            let ds = RatingDataset::new(ScaleSpec::new(5, 1).unwrap(), records).unwrap();
            let mut params = MfrmParams::zeros(ds.n_outputs(), ds.n_items(), ds.n_raters(), 5);
            for t in params.theta.iter_mut() {
                *t = 2.0 * (crate::rng::uniform_f64(&mut rng) - 0.5);
            }
            for d in params.delta.iter_mut() {
                *d = crate::rng::uniform_f64(&mut rng) - 0.5;
            }
            for r in params.rho.iter_mut() {
                *r = crate::rng::uniform_f64(&mut rng) - 0.5;
            }
            for row in params.tau.iter_mut() {
                for t in row.iter_mut() {
                    *t = 2.0 * (crate::rng::uniform_f64(&mut rng) - 0.5);
                }
            }
            let grad = gradient_mfrm(&ds, &params).unwrap();

            let check = |get: &mut dyn FnMut(&mut MfrmParams) -> &mut f64, analytic: f64| {
                let mut plus = params.clone();
                *get(&mut plus) += h;
                let mut minus = params.clone();
                *get(&mut minus) -= h;
                let fd = (log_likelihood_mfrm(&ds, &plus).unwrap()
                    - log_likelihood_mfrm(&ds, &minus).unwrap())
                    / (2.0 * h);
                let rel = (analytic - fd).abs() / analytic.abs().max(1.0);
                assert!(
                    rel < 1e-6,
                    "instance {instance}: analytic={analytic} fd={fd}"
                );
            };

            for n in 0..params.theta.len() {
                let g = grad.theta[n];
                check(&mut |p| &mut p.theta[n], g);
            }
            for i in 0..params.delta.len() {
                let g = grad.delta[i];
                check(&mut |p| &mut p.delta[i], g);
            }
            for j in 0..params.rho.len() {
                let g = grad.rho[j];
                check(&mut |p| &mut p.rho[j], g);
            }
            for j in 0..params.tau.len() {
                for t in 0..params.tau[j].len() {
                    let g = grad.tau[j][t];
                    check(&mut |p| &mut p.tau[j][t], g);
                }
            }
        }
    }

    #[test]
    fn gradient_is_additive_over_record_subsets() {
        // Two datasets over the same id spaces; gradients add.
        let base = alloc::vec![
            rec("o1", "i1", "r1", 2),
            rec("o2", "i1", "r2", 4),
            rec("o1", "i2", "r2", 5),
            rec("o2", "i2", "r1", 1),
        ];
        let extra = alloc::vec![
            rec("o1", "i1", "r2", 3),
            rec("o2", "i2", "r2", 2),
            rec("o1", "i2", "r1", 4),
            rec("o2", "i1", "r1", 5),
        ];
        let scale = ScaleSpec::new(5, 1).unwrap();
        let ds_a = RatingDataset::new(scale, base.clone()).unwrap();
        let ds_b = RatingDataset::new(scale, extra.clone()).unwrap();
        let mut all = base;
        all.extend(extra);
        let ds_all = RatingDataset::new(scale, all).unwrap();

        let mut params = MfrmParams::zeros(2, 2, 2, 5);
        params.theta = alloc::vec![0.4, -0.2];
        params.delta = alloc::vec![0.1, -0.1];
        params.rho = alloc::vec![-0.3, 0.3];
        params.tau = alloc::vec![
            alloc::vec![-0.2, 0.0, 0.1, 0.1],
            alloc::vec![0.2, 0.1, -0.1, -0.2]
        ];

        let ga = gradient_mfrm(&ds_a, &params).unwrap();
        let gb = gradient_mfrm(&ds_b, &params).unwrap();
        let gall = gradient_mfrm(&ds_all, &params).unwrap();
        for n in 0..2 {
            assert!(close(ga.theta[n] + gb.theta[n], gall.theta[n], 1e-12));
            assert!(close(ga.delta[n] + gb.delta[n], gall.delta[n], 1e-12));
            assert!(close(ga.rho[n] + gb.rho[n], gall.rho[n], 1e-12));
            for t in 0..4 {
                assert!(close(ga.tau[n][t] + gb.tau[n][t], gall.tau[n][t], 1e-12));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let ds = RatingDataset::new(
            ScaleSpec::new(7, 1).unwrap(),
            alloc::vec![rec("o", "i", "r", 4)],
        )
        .unwrap();
        let params = MfrmParams::zeros(2, 1, 1, 7);
        assert!(matches!(
            log_likelihood_mfrm(&ds, &params),
            Err(ModelError::DimensionMismatch(_))
        ));
    }
}
