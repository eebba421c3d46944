//! Joint maximum likelihood fitting by coordinate Newton sweeps.
//!
//! All parameter families are estimated simultaneously: each sweep applies a
//! capped one-dimensional Newton step to every output quality, item
//! stringency, rater severity, and threshold coordinate in turn, then
//! re-centers to restore the sum-to-zero identification constraints (the
//! compensating shifts land in `theta`, which carries the scale). A step that
//! would lower the working objective is halved until it does not, so the
//! objective trace is nondecreasing.
//!
//! Outputs rated at the scale floor or ceiling everywhere have no finite
//! maximum-likelihood quality. Their raw totals are pulled in by
//! `extreme_adjust` score points, implemented as a fractional pseudo-response
//! split between the extreme category and its inward neighbor; this keeps the
//! working objective a genuine (fractional-count) log-likelihood, so the
//! monotonicity and invariance guarantees survive. Raters (or items, for the
//! rater-free model) that used too few distinct categories cannot support own
//! thresholds and are tied to a pooled threshold row instead.

use alloc::borrow::ToOwned;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::RatingDataset;
use crate::linkage::check_linkage;
use crate::model::{
    expected_position, position_variance, probs_into, MfrmParams, ModelError, PcmParams,
};

/// Fit settings. Defaults: 500 sweeps, tolerance 1e-4 logits on the largest
/// parameter change, step cap 1.0 logit, extreme-score adjustment 0.3 score
/// points, own thresholds require 3 distinct categories used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_sweeps: usize,
    pub tol: f64,
    pub step_cap: f64,
    pub extreme_adjust: f64,
    /// Minimum distinct categories a rater (item for the PCM) must have used
    /// to get its own threshold row; below this the row is pooled. Values
    /// <= 1 disable pooling, making single-category raters a hard error.
    pub min_categories_per_rater: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 500,
            tol: 1e-4,
            step_cap: 1.0,
            extreme_adjust: 0.3,
            min_categories_per_rater: 3,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<(), FitError> {
        if self.max_sweeps == 0 {
            return Err(FitError::InvalidConfig(
                "max_sweeps must be >= 1".to_string(),
            ));
        }
        if !(self.tol > 0.0) {
            return Err(FitError::InvalidConfig("tol must be > 0".to_string()));
        }
        if !(self.step_cap > 0.0) {
            return Err(FitError::InvalidConfig("step_cap must be > 0".to_string()));
        }
        if !(self.extreme_adjust > 0.0 && self.extreme_adjust < 0.5) {
            return Err(FitError::InvalidConfig(
                "extreme_adjust must lie strictly between 0 and 0.5".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error(
        "design is disconnected ({components} components); fitting needs one linked component"
    )]
    Disconnected { components: usize },
    #[error("rater {rater_id} used a single category and threshold pooling is disabled")]
    DegenerateRater { rater_id: String },
    #[error("item {item_id} used a single category and threshold pooling is disabled")]
    DegenerateItem { item_id: String },
    #[error("partial credit model expects the rounded-mean collapse (one synthetic rater), got {n_raters} raters")]
    NotCollapsed { n_raters: usize },
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Anything the fitter worked around rather than failed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FitWarning {
    /// Outputs scored all-minimum or all-maximum; raw totals adjusted by
    /// `adjust` score points before quality estimation.
    ExtremeOutputs {
        output_ids: Vec<String>,
        adjust: f64,
    },
    /// Raters (items for the PCM) tied to the pooled threshold row.
    PooledThresholds { ids: Vec<String> },
    /// Raters (items for the PCM) with categories never observed in their
    /// ratings; the thresholds adjacent to those categories have no finite
    /// maximum-likelihood estimate and were anchored instead of updated.
    AnchoredThresholds { ids: Vec<String> },
    /// Sweep limit reached before the parameter-change tolerance.
    NotConverged { last_change: f64 },
}

impl core::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FitWarning::ExtremeOutputs { output_ids, adjust } => write!(
                f,
                "{} extreme output(s) adjusted by {adjust} score points: {}",
                output_ids.len(),
                output_ids.join(", ")
            ),
            FitWarning::PooledThresholds { ids } => {
                write!(f, "thresholds pooled for: {}", ids.join(", "))
            }
            FitWarning::AnchoredThresholds { ids } => {
                write!(
                    f,
                    "thresholds anchored next to unobserved categories for: {}",
                    ids.join(", ")
                )
            }
            FitWarning::NotConverged { last_change } => {
                write!(
                    f,
                    "not converged; last max parameter change {last_change:.3e}"
                )
            }
        }
    }
}

/// Converged (or best-effort) parameters of either model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedParams {
    Mfrm(MfrmParams),
    Pcm(PcmParams),
}

impl FittedParams {
    pub fn theta(&self) -> &[f64] {
        match self {
            FittedParams::Mfrm(p) => &p.theta,
            FittedParams::Pcm(p) => &p.theta,
        }
    }

    pub fn as_mfrm(&self) -> Option<&MfrmParams> {
        match self {
            FittedParams::Mfrm(p) => Some(p),
            FittedParams::Pcm(_) => None,
        }
    }

    pub fn as_pcm(&self) -> Option<&PcmParams> {
        match self {
            FittedParams::Pcm(p) => Some(p),
            FittedParams::Mfrm(_) => None,
        }
    }

    pub fn constraint_residual(&self) -> f64 {
        match self {
            FittedParams::Mfrm(p) => p.constraint_residual(),
            FittedParams::Pcm(p) => p.constraint_residual(),
        }
    }
}

/// Fit outcome: parameters, the working-objective trace per sweep, and
/// standard errors from the observed-information diagonal (approximate; no
/// full-matrix inversion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FittedParams,
    /// Working log-likelihood after each sweep, preceded by its initial
    /// value; equals the exact log-likelihood when no extreme outputs were
    /// adjusted. Nondecreasing.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub sweeps_used: usize,
    pub se_theta: Vec<f64>,
    pub se_delta: Vec<f64>,
    /// Empty for the PCM.
    pub se_rho: Vec<f64>,
    pub warnings: Vec<FitWarning>,
}

/// Fits the three-facet rater model (rater-specific thresholds) by JMLE.
pub fn fit_mfrm(ds: &RatingDataset, config: &FitConfig) -> Result<FitResult, FitError> {
    Fitter::new(ds, config, true)?.run()
}

/// Fits the rater-free partial credit model (item-specific thresholds) on a
/// rounded-mean collapsed dataset.
pub fn fit_pcm(ds: &RatingDataset, config: &FitConfig) -> Result<FitResult, FitError> {
    if ds.n_raters() != 1 {
        return Err(FitError::NotCollapsed {
            n_raters: ds.n_raters(),
        });
    }
    Fitter::new(ds, config, false)?.run()
}

/// Log-likelihood of a dataset under fitted parameters of either family.
pub fn log_likelihood(ds: &RatingDataset, params: &FittedParams) -> Result<f64, ModelError> {
    match params {
        FittedParams::Mfrm(p) => crate::model::log_likelihood_mfrm(ds, p),
        FittedParams::Pcm(p) => crate::model::log_likelihood_pcm(ds, p),
    }
}

#[derive(Clone, Copy)]
enum Site {
    Theta(usize),
    Delta(usize),
    Rho(usize),
    Tau { row: usize, h: usize },
}

struct RowGroup {
    /// Owner indices (raters, or items for the PCM) sharing this row.
    members: Vec<usize>,
    records: Vec<u32>,
    /// Thresholds adjacent to a category with zero observations in this
    /// row's records; skipped during updates.
    frozen: Vec<bool>,
}

struct Fitter<'a> {
    ds: &'a RatingDataset,
    cfg: &'a FitConfig,
    k: usize,
    rho_on: bool,
    out_ranges: Vec<(u32, u32)>,
    item_records: Vec<Vec<u32>>,
    rater_records: Vec<Vec<u32>>,
    rows: Vec<RowGroup>,
    /// Fractional pseudo-response weight per output; nonzero only for
    /// extreme outputs (weight = extreme_adjust / record count).
    mix_of_output: Vec<f64>,
    warnings: Vec<FitWarning>,
    theta: Vec<f64>,
    delta: Vec<f64>,
    rho: Vec<f64>,
    /// Thresholds per owner; pooled members hold identical copies.
    tau: Vec<Vec<f64>>,
}

const MIN_INFO: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;

impl<'a> Fitter<'a> {
    fn new(ds: &'a RatingDataset, cfg: &'a FitConfig, rho_on: bool) -> Result<Self, FitError> {
        cfg.validate()?;
        let link = check_linkage(ds);
        if !link.is_connected() {
            return Err(FitError::Disconnected {
                components: link.component_count,
            });
        }

        let k = ds.scale().k_categories;
        let enc = ds.encoded();
        let n_out = ds.n_outputs();
        let n_item = ds.n_items();
        let n_rater = ds.n_raters();

        // Encoded records are sorted by output, so per-output groups are
        // contiguous runs.
        let mut out_ranges = vec![(0u32, 0u32); n_out];
        let mut item_records = vec![Vec::new(); n_item];
        let mut rater_records = vec![Vec::new(); n_rater];
        let mut start = 0usize;
        for r in 0..enc.len() {
            if enc[r].out != enc[start].out {
                out_ranges[enc[start].out as usize] = (start as u32, r as u32);
                start = r;
            }
            item_records[enc[r].item as usize].push(r as u32);
            rater_records[enc[r].rater as usize].push(r as u32);
        }
        out_ranges[enc[start].out as usize] = (start as u32, enc.len() as u32);

        // Extreme outputs: every rating at the floor or every rating at the
        // ceiling of the scale.
        let mut mix_of_output = vec![0.0; n_out];
        let mut extreme_ids = Vec::new();
        for (n, &(s, e)) in out_ranges.iter().enumerate() {
            let group = &enc[s as usize..e as usize];
            let all_min = group.iter().all(|r| r.x == 0);
            let all_max = group.iter().all(|r| r.x as usize == k - 1);
            if all_min || all_max {
                mix_of_output[n] = cfg.extreme_adjust / group.len() as f64;
                extreme_ids.push(ds.outputs().id(n).to_owned());
            }
        }
        let mut warnings = Vec::new();
        if !extreme_ids.is_empty() {
            warnings.push(FitWarning::ExtremeOutputs {
                output_ids: extreme_ids,
                adjust: cfg.extreme_adjust,
            });
        }

        // Threshold rows: one per owner with enough distinct categories,
        // plus a single pooled row for the rest.
        let (owner_records, n_owner) = if rho_on {
            (&rater_records, n_rater)
        } else {
            (&item_records, n_item)
        };
        let mut pooled_members = Vec::new();
        let mut rows = Vec::new();
        for owner in 0..n_owner {
            let mut used = vec![false; k];
            for &r in &owner_records[owner] {
                used[enc[r as usize].x as usize] = true;
            }
            let distinct = used.iter().filter(|u| **u).count();
            if distinct < cfg.min_categories_per_rater {
                pooled_members.push(owner);
            } else if distinct == 1 {
                // Only reachable when pooling is disabled (minimum <= 1).
                return Err(if rho_on {
                    FitError::DegenerateRater {
                        rater_id: ds.raters().id(owner).to_owned(),
                    }
                } else {
                    FitError::DegenerateItem {
                        item_id: ds.items().id(owner).to_owned(),
                    }
                });
            } else {
                rows.push(RowGroup {
                    members: vec![owner],
                    records: owner_records[owner].clone(),
                    frozen: Vec::new(),
                });
            }
        }
        if !pooled_members.is_empty() {
            let mut records = Vec::new();
            for &owner in &pooled_members {
                records.extend_from_slice(&owner_records[owner]);
            }
            records.sort_unstable();
            let ids = pooled_members
                .iter()
                .map(|&owner| {
                    if rho_on {
                        ds.raters().id(owner).to_owned()
                    } else {
                        ds.items().id(owner).to_owned()
                    }
                })
                .collect();
            warnings.push(FitWarning::PooledThresholds { ids });
            rows.push(RowGroup {
                members: pooled_members,
                records,
                frozen: Vec::new(),
            });
        }

        // A threshold next to a category this row never observed has no
        // finite maximum-likelihood estimate; anchor it where it starts.
        let mut anchored_ids = Vec::new();
        for row in rows.iter_mut() {
            let mut count = vec![0usize; k];
            for &r in &row.records {
                count[enc[r as usize].x as usize] += 1;
            }
            let mut frozen = vec![false; k - 1];
            for (x, &c) in count.iter().enumerate() {
                if c == 0 {
                    if x >= 1 {
                        frozen[x - 1] = true;
                    }
                    if x <= k - 2 {
                        frozen[x] = true;
                    }
                }
            }
            if frozen.iter().any(|f| *f) {
                for &owner in &row.members {
                    anchored_ids.push(if rho_on {
                        ds.raters().id(owner).to_owned()
                    } else {
                        ds.items().id(owner).to_owned()
                    });
                }
            }
            row.frozen = frozen;
        }
        if !anchored_ids.is_empty() {
            anchored_ids.sort_unstable();
            warnings.push(FitWarning::AnchoredThresholds { ids: anchored_ids });
        }

        // Start quality at the raw-score logit; everything else at zero.
        let mut theta = vec![0.0; n_out];
        for (n, &(s, e)) in out_ranges.iter().enumerate() {
            let group = &enc[s as usize..e as usize];
            let w = mix_of_output[n];
            let total: f64 = group
                .iter()
                .map(|r| {
                    let x = r.x as f64;
                    if w > 0.0 {
                        if r.x == 0 {
                            x + w
                        } else {
                            x - w
                        }
                    } else {
                        x
                    }
                })
                .sum();
            let ceiling = (group.len() * (k - 1)) as f64;
            theta[n] = libm::log(total / (ceiling - total));
        }

        Ok(Self {
            ds,
            cfg,
            k,
            rho_on,
            out_ranges,
            item_records,
            rater_records,
            rows,
            mix_of_output,
            warnings,
            theta,
            delta: vec![0.0; n_item],
            rho: if rho_on {
                vec![0.0; n_rater]
            } else {
                Vec::new()
            },
            tau: vec![vec![0.0; k - 1]; n_owner],
        })
    }

    #[inline]
    fn eta(&self, e: &crate::data::Encoded) -> f64 {
        let mut eta = self.theta[e.out as usize] - self.delta[e.item as usize];
        if self.rho_on {
            eta -= self.rho[e.rater as usize];
        }
        eta
    }

    #[inline]
    fn tau_row(&self, e: &crate::data::Encoded) -> &[f64] {
        if self.rho_on {
            &self.tau[e.rater as usize]
        } else {
            &self.tau[e.item as usize]
        }
    }

    /// Fractional pseudo-response of a record: weight `w` moved from the
    /// observed extreme category to its inward neighbor.
    #[inline]
    fn pseudo(&self, e: &crate::data::Encoded) -> (usize, usize, f64) {
        let x = e.x as usize;
        let w = self.mix_of_output[e.out as usize];
        if w > 0.0 {
            let neighbor = if x == 0 { 1 } else { x - 1 };
            (x, neighbor, w)
        } else {
            (x, x, 0.0)
        }
    }

    /// Working-objective contribution of one record given current probs.
    #[inline]
    fn record_w(&self, e: &crate::data::Encoded, probs: &[f64]) -> f64 {
        let (x, neighbor, w) = self.pseudo(e);
        if w > 0.0 {
            (1.0 - w) * libm::log(probs[x]) + w * libm::log(probs[neighbor])
        } else {
            libm::log(probs[x])
        }
    }

    fn records_of(&self, site: Site) -> &[u32] {
        match site {
            Site::Theta(_) => unreachable!("theta sites use contiguous ranges"),
            Site::Delta(i) => &self.item_records[i],
            Site::Rho(j) => &self.rater_records[j],
            Site::Tau { row, .. } => &self.rows[row].records,
        }
    }

    /// (gradient, information, group working objective) for a site.
    fn site_stats(&self, site: Site, probs: &mut [f64]) -> (f64, f64, f64) {
        let enc = self.ds.encoded();
        let mut g = 0.0;
        let mut info = 0.0;
        let mut w_sum = 0.0;
        let mut visit = |e: &crate::data::Encoded| {
            probs_into(self.eta(e), self.tau_row(e), probs);
            w_sum += self.record_w(e, probs);
            let (x, neighbor, w) = self.pseudo(e);
            match site {
                Site::Theta(_) => {
                    let x_eff = (1.0 - w) * x as f64 + w * neighbor as f64;
                    g += x_eff - expected_position(probs);
                    info += position_variance(probs);
                }
                Site::Delta(_) | Site::Rho(_) => {
                    let x_eff = (1.0 - w) * x as f64 + w * neighbor as f64;
                    g += expected_position(probs) - x_eff;
                    info += position_variance(probs);
                }
                Site::Tau { h, .. } => {
                    // h is the 0-based threshold index; its tail starts at
                    // position h + 1.
                    let tail: f64 = probs[h + 1..].iter().sum();
                    let pure = |pos: usize| if pos >= h + 1 { 1.0 } else { 0.0 };
                    let ge_obs = (1.0 - w) * pure(x) + w * pure(neighbor);
                    g += tail - ge_obs;
                    info += tail * (1.0 - tail);
                }
            }
        };
        match site {
            Site::Theta(n) => {
                let (s, e) = self.out_ranges[n];
                for rec in &enc[s as usize..e as usize] {
                    visit(rec);
                }
            }
            _ => {
                for &r in self.records_of(site) {
                    visit(&enc[r as usize]);
                }
            }
        }
        (g, info, w_sum)
    }

    /// Group working objective only (for step-halving re-evaluation).
    fn site_w(&self, site: Site, probs: &mut [f64]) -> f64 {
        let enc = self.ds.encoded();
        let mut w_sum = 0.0;
        let mut visit = |e: &crate::data::Encoded| {
            probs_into(self.eta(e), self.tau_row(e), probs);
            w_sum += self.record_w(e, probs);
        };
        match site {
            Site::Theta(n) => {
                let (s, e) = self.out_ranges[n];
                for rec in &enc[s as usize..e as usize] {
                    visit(rec);
                }
            }
            _ => {
                for &r in self.records_of(site) {
                    visit(&enc[r as usize]);
                }
            }
        }
        w_sum
    }

    fn get_site(&self, site: Site) -> f64 {
        match site {
            Site::Theta(n) => self.theta[n],
            Site::Delta(i) => self.delta[i],
            Site::Rho(j) => self.rho[j],
            Site::Tau { row, h } => self.tau[self.rows[row].members[0]][h],
        }
    }

    fn set_site(&mut self, site: Site, value: f64) {
        match site {
            Site::Theta(n) => self.theta[n] = value,
            Site::Delta(i) => self.delta[i] = value,
            Site::Rho(j) => self.rho[j] = value,
            Site::Tau { row, h } => {
                for m in 0..self.rows[row].members.len() {
                    let owner = self.rows[row].members[m];
                    self.tau[owner][h] = value;
                }
            }
        }
    }

    /// One capped Newton step on a site, halved until the group objective
    /// does not decrease.
    fn update_site(&mut self, site: Site, probs: &mut [f64]) {
        let (g, info, w0) = self.site_stats(site, probs);
        if info <= MIN_INFO {
            return;
        }
        let old = self.get_site(site);
        let mut step = (g / info).clamp(-self.cfg.step_cap, self.cfg.step_cap);
        for _ in 0..MAX_HALVINGS {
            self.set_site(site, old + step);
            let w1 = self.site_w(site, probs);
            if w1 >= w0 - 1e-12 * (1.0 + w0.abs()) {
                return;
            }
            step *= 0.5;
            if step.abs() < 1e-15 {
                break;
            }
        }
        self.set_site(site, old);
    }

    /// Restores the sum-to-zero constraints without changing any category
    /// probability: threshold-row means move into severity (stringency for
    /// the PCM), then severity and stringency means move into quality.
    fn recenter(&mut self) {
        for row_idx in 0..self.rows.len() {
            let lead = self.rows[row_idx].members[0];
            let c = mean(&self.tau[lead]);
            for m in 0..self.rows[row_idx].members.len() {
                let owner = self.rows[row_idx].members[m];
                for t in self.tau[owner].iter_mut() {
                    *t -= c;
                }
                if self.rho_on {
                    self.rho[owner] += c;
                } else {
                    self.delta[owner] += c;
                }
            }
        }
        if self.rho_on {
            let c = mean(&self.rho);
            for r in self.rho.iter_mut() {
                *r -= c;
            }
            for t in self.theta.iter_mut() {
                *t -= c;
            }
        }
        let c = mean(&self.delta);
        for d in self.delta.iter_mut() {
            *d -= c;
        }
        for t in self.theta.iter_mut() {
            *t -= c;
        }
    }

    fn total_w(&self, probs: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for e in self.ds.encoded() {
            probs_into(self.eta(e), self.tau_row(e), probs);
            total += self.record_w(e, probs);
        }
        total
    }

    fn snapshot(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.theta.len() + self.delta.len() + self.rho.len());
        flat.extend_from_slice(&self.theta);
        flat.extend_from_slice(&self.delta);
        flat.extend_from_slice(&self.rho);
        for row in &self.tau {
            flat.extend_from_slice(row);
        }
        flat
    }

    fn apply_snapshot(&mut self, flat: &[f64]) {
        let mut cursor = 0;
        let len = self.theta.len();
        self.theta.copy_from_slice(&flat[..len]);
        cursor += len;
        let len = self.delta.len();
        self.delta.copy_from_slice(&flat[cursor..cursor + len]);
        cursor += len;
        let len = self.rho.len();
        self.rho.copy_from_slice(&flat[cursor..cursor + len]);
        cursor += len;
        for row in self.tau.iter_mut() {
            let len = row.len();
            row.copy_from_slice(&flat[cursor..cursor + len]);
            cursor += len;
        }
    }

    /// Snapshot-aligned mask of coordinates the extrapolation may move
    /// (anchored thresholds stay put).
    fn movable_mask(&self) -> Vec<bool> {
        let mut mask = vec![true; self.theta.len() + self.delta.len() + self.rho.len()];
        let owner_of_row: alloc::collections::BTreeMap<usize, usize> = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(row, group)| group.members.iter().map(move |&owner| (owner, row)))
            .collect();
        for owner in 0..self.tau.len() {
            match owner_of_row.get(&owner) {
                Some(&row) => mask.extend(self.rows[row].frozen.iter().map(|f| !f)),
                None => mask.extend(core::iter::repeat(true).take(self.k - 1)),
            }
        }
        mask
    }

    /// Coordinate ascent zigzags slowly along curved ridges when quality and
    /// thresholds are strongly coupled (sparse data). After each sweep, try
    /// amplifying the sweep's total movement; keep the largest amplification
    /// that strictly improves the objective. Same fixed point, far fewer
    /// sweeps.
    fn extrapolate(
        &mut self,
        before: &[f64],
        after: &[f64],
        w_after: f64,
        mask: &[bool],
        probs: &mut [f64],
    ) -> f64 {
        let mut candidate = vec![0.0; after.len()];
        for factor in [8.0, 4.0, 2.0, 1.0] {
            for i in 0..after.len() {
                candidate[i] = if mask[i] {
                    after[i] + factor * (after[i] - before[i])
                } else {
                    after[i]
                };
            }
            self.apply_snapshot(&candidate);
            self.recenter();
            let w = self.total_w(probs);
            if w > w_after + 1e-12 * (1.0 + w_after.abs()) {
                return w;
            }
        }
        self.apply_snapshot(after);
        w_after
    }

    fn run(mut self) -> Result<FitResult, FitError> {
        let k = self.k;
        let mut probs = vec![0.0; k];
        let mut trace = vec![self.total_w(&mut probs)];
        let mut converged = false;
        let mut sweeps_used = 0;
        let mut last_change = f64::INFINITY;
        let mask = self.movable_mask();

        for _ in 0..self.cfg.max_sweeps {
            sweeps_used += 1;
            let before = self.snapshot();

            for n in 0..self.theta.len() {
                self.update_site(Site::Theta(n), &mut probs);
            }
            for i in 0..self.delta.len() {
                self.update_site(Site::Delta(i), &mut probs);
            }
            if self.rho_on {
                for j in 0..self.rho.len() {
                    self.update_site(Site::Rho(j), &mut probs);
                }
            }
            for row in 0..self.rows.len() {
                for h in 0..k - 1 {
                    if !self.rows[row].frozen[h] {
                        self.update_site(Site::Tau { row, h }, &mut probs);
                    }
                }
            }
            self.recenter();

            let w_after = self.total_w(&mut probs);
            let after = self.snapshot();
            let w_final = self.extrapolate(&before, &after, w_after, &mask, &mut probs);
            trace.push(w_final);
            let current = self.snapshot();
            last_change = before
                .iter()
                .zip(&current)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if last_change <= self.cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            self.warnings.push(FitWarning::NotConverged { last_change });
        }

        // Observed-information diagonal for standard errors.
        let mut info_theta = vec![0.0; self.theta.len()];
        let mut info_delta = vec![0.0; self.delta.len()];
        let mut info_rho = vec![0.0; self.rho.len()];
        for e in self.ds.encoded() {
            probs_into(self.eta(e), self.tau_row(e), &mut probs);
            let v = position_variance(&probs);
            info_theta[e.out as usize] += v;
            info_delta[e.item as usize] += v;
            if self.rho_on {
                info_rho[e.rater as usize] += v;
            }
        }
        let se = |info: &[f64]| -> Vec<f64> {
            info.iter()
                .map(|&i| {
                    if i > 0.0 {
                        1.0 / libm::sqrt(i)
                    } else {
                        f64::INFINITY
                    }
                })
                .collect()
        };

        let params = if self.rho_on {
            FittedParams::Mfrm(MfrmParams {
                theta: self.theta.clone(),
                delta: self.delta.clone(),
                rho: self.rho.clone(),
                tau: self.tau.clone(),
            })
        } else {
            FittedParams::Pcm(PcmParams {
                theta: self.theta.clone(),
                delta: self.delta.clone(),
                tau: self.tau.clone(),
            })
        };

        Ok(FitResult {
            se_theta: se(&info_theta),
            se_delta: se(&info_delta),
            se_rho: se(&info_rho),
            params,
            loglik_trace: trace,
            converged,
            sweeps_used,
            warnings: self.warnings,
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingRecord;
    use crate::scale::ScaleSpec;

    fn rec(out: &str, item: &str, rater: &str, cat: i32) -> RatingRecord {
        RatingRecord {
            output_id: out.to_string(),
            item_id: item.to_string(),
            rater_id: rater.to_string(),
            policy_id: None,
            category: cat,
        }
    }

    fn crossed_dataset() -> RatingDataset {
        // 6 outputs x 1 item x 3 raters; raters A and B give permuted
        // columns, C is distinct.
        let a = [1, 2, 3, 5, 6, 7];
        let b = [7, 6, 5, 3, 2, 1];
        let c = [3, 4, 5, 3, 4, 5];
        let mut records = Vec::new();
        for (n, ((&ca, &cb), &cc)) in a.iter().zip(&b).zip(&c).enumerate() {
            let out = alloc::format!("o{n}");
            records.push(rec(&out, "i", "A", ca));
            records.push(rec(&out, "i", "B", cb));
            records.push(rec(&out, "i", "C", cc));
        }
        RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap()
    }

    #[test]
    fn exchangeable_raters_get_equal_severity() {
        let ds = crossed_dataset();
        let fit = fit_mfrm(&ds, &FitConfig::default()).unwrap();
        let p = fit.params.as_mfrm().unwrap();
        let a = ds.raters().index_of("A").unwrap();
        let b = ds.raters().index_of("B").unwrap();
        assert!(
            (p.rho[a] - p.rho[b]).abs() <= 1e-6,
            "rho A {} vs B {}",
            p.rho[a],
            p.rho[b]
        );
        // A and B also share identical category usage, so their thresholds
        // agree.
        for h in 0..6 {
            assert!((p.tau[a][h] - p.tau[b][h]).abs() <= 1e-6);
        }
    }

    #[test]
    fn identical_raters_all_get_zero_severity() {
        // Four raters with identical columns: the sum-to-zero constraint
        // plus exchangeability forces every severity to zero.
        let mut records = Vec::new();
        for (n, cat) in [1, 3, 4, 6, 7, 2].iter().enumerate() {
            for j in 0..4 {
                records.push(rec(
                    &alloc::format!("o{n}"),
                    "i",
                    &alloc::format!("r{j}"),
                    *cat,
                ));
            }
        }
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        let fit = fit_mfrm(&ds, &FitConfig::default()).unwrap();
        for rho in &fit.params.as_mfrm().unwrap().rho {
            assert!(rho.abs() <= 1e-6, "{rho}");
        }
    }

    #[test]
    fn constraints_hold_and_trace_is_monotone() {
        let ds = crossed_dataset();
        let fit = fit_mfrm(&ds, &FitConfig::default()).unwrap();
        assert!(fit.params.constraint_residual() <= 1e-8);
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "trace decreased: {} -> {}", w[0], w[1]);
        }
        assert!(fit.converged);
        assert_eq!(fit.loglik_trace.len(), fit.sweeps_used + 1);
    }

    #[test]
    fn refit_with_permuted_records_is_identical() {
        let ds = crossed_dataset();
        let mut shuffled: Vec<RatingRecord> = ds.records().to_vec();
        shuffled.reverse();
        shuffled.swap(0, 7);
        shuffled.swap(3, 11);
        let ds2 = RatingDataset::new(ds.scale(), shuffled).unwrap();

        let fit1 = fit_mfrm(&ds, &FitConfig::default()).unwrap();
        let fit2 = fit_mfrm(&ds2, &FitConfig::default()).unwrap();
        let p1 = fit1.params.as_mfrm().unwrap();
        let p2 = fit2.params.as_mfrm().unwrap();
        for (a, b) in p1.theta.iter().zip(&p2.theta) {
            assert!((a - b).abs() <= 1e-8);
        }
        for (a, b) in p1.rho.iter().zip(&p2.rho) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn pcm_rejects_uncollapsed_input() {
        let ds = crossed_dataset();
        assert!(matches!(
            fit_pcm(&ds, &FitConfig::default()),
            Err(FitError::NotCollapsed { n_raters: 3 })
        ));
    }

    #[test]
    fn pcm_identical_outputs_get_equal_theta() {
        // Every output has the same rating vector across items.
        let mut records = Vec::new();
        for n in 0..5 {
            for (i, cat) in [(0, 3), (1, 5), (2, 6)] {
                records.push(rec(
                    &alloc::format!("o{n}"),
                    &alloc::format!("i{i}"),
                    crate::data::CONSENSUS_RATER_ID,
                    cat,
                ));
            }
        }
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        let fit = fit_pcm(&ds, &FitConfig::default()).unwrap();
        let theta = fit.params.theta();
        for t in theta {
            assert!((t - theta[0]).abs() <= 1e-6, "{theta:?}");
        }
    }

    #[test]
    fn disconnected_design_is_refused() {
        let records = vec![
            rec("o1", "i", "A", 3),
            rec("o2", "i", "A", 4),
            rec("o3", "i", "B", 5),
            rec("o4", "i", "B", 2),
        ];
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        assert!(matches!(
            fit_mfrm(&ds, &FitConfig::default()),
            Err(FitError::Disconnected { components: 2 })
        ));
    }

    #[test]
    fn extreme_output_is_adjusted_with_warning() {
        let mut records = Vec::new();
        for (n, cats) in [
            (0, [7, 7, 7]),
            (1, [3, 4, 5]),
            (2, [2, 5, 6]),
            (3, [1, 1, 1]),
        ] {
            for (j, cat) in cats.iter().enumerate() {
                records.push(rec(
                    &alloc::format!("o{n}"),
                    "i",
                    &alloc::format!("r{j}"),
                    *cat,
                ));
            }
        }
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        let fit = fit_mfrm(&ds, &FitConfig::default()).unwrap();
        let extreme = fit
            .warnings
            .iter()
            .find_map(|w| match w {
                FitWarning::ExtremeOutputs { output_ids, .. } => Some(output_ids.clone()),
                _ => None,
            })
            .expect("extreme warning");
        assert_eq!(extreme, vec!["o0".to_string(), "o3".to_string()]);
        let theta = fit.params.theta();
        assert!(theta.iter().all(|t| t.is_finite()));
        // All-max output sits above all-min output.
        assert!(theta[0] > theta[3]);
    }

    #[test]
    fn narrow_category_usage_pools_thresholds() {
        // Rater "narrow" uses two categories; default minimum is three.
        let mut records = Vec::new();
        for n in 0..6 {
            let out = alloc::format!("o{n}");
            records.push(rec(&out, "i", "wide", (n + 1) as i32));
            records.push(rec(&out, "i", "wide2", (7 - n) as i32));
            records.push(rec(&out, "i", "narrow", if n % 2 == 0 { 4 } else { 5 }));
        }
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        let fit = fit_mfrm(&ds, &FitConfig::default()).unwrap();
        let pooled = fit
            .warnings
            .iter()
            .find_map(|w| match w {
                FitWarning::PooledThresholds { ids } => Some(ids.clone()),
                _ => None,
            })
            .expect("pooled warning");
        assert_eq!(pooled, vec!["narrow".to_string()]);
    }

    #[test]
    fn single_category_rater_without_pooling_is_an_error() {
        let mut records = Vec::new();
        for n in 0..4 {
            let out = alloc::format!("o{n}");
            records.push(rec(&out, "i", "ok", (n + 2) as i32));
            records.push(rec(&out, "i", "flat", 4));
        }
        let ds = RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap();
        let cfg = FitConfig {
            min_categories_per_rater: 1,
            ..FitConfig::default()
        };
        assert!(matches!(
            fit_mfrm(&ds, &cfg),
            Err(FitError::DegenerateRater { rater_id }) if rater_id == "flat"
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let ds = crossed_dataset();
        let bad = FitConfig {
            tol: 0.0,
            ..FitConfig::default()
        };
        assert!(matches!(
            fit_mfrm(&ds, &bad),
            Err(FitError::InvalidConfig(_))
        ));
        let bad = FitConfig {
            extreme_adjust: 0.5,
            ..FitConfig::default()
        };
        assert!(matches!(
            fit_mfrm(&ds, &bad),
            Err(FitError::InvalidConfig(_))
        ));
    }
}
