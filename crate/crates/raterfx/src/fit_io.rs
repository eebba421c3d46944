//! Id-keyed serialization of fit results.
//!
//! The core fitter works in dense index space; on disk, parameter arrays are
//! keyed by the original ids so downstream steps (and humans) never see the
//! internal indices. A companion CSV gives one row per parameter.

use std::collections::BTreeMap;
use std::io::Write;

use raterfx_core::data::RatingDataset;
use raterfx_core::fit::{FitResult, FitWarning, FittedParams};
use raterfx_core::model::{MfrmParams, PcmParams};
use raterfx_core::ranking::{ModelKind, PerPolicyFits};
use serde::{Deserialize, Serialize};

/// Fit result with parameters keyed by original ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: ModelKind,
    pub converged: bool,
    pub sweeps_used: usize,
    pub constraint_residual: f64,
    pub loglik_trace: Vec<f64>,
    pub theta: BTreeMap<String, f64>,
    pub delta: BTreeMap<String, f64>,
    /// Empty for the PCM.
    pub rho: BTreeMap<String, f64>,
    /// Thresholds keyed by rater id (item id for the PCM).
    pub tau: BTreeMap<String, Vec<f64>>,
    pub se_theta: BTreeMap<String, f64>,
    pub se_delta: BTreeMap<String, f64>,
    pub se_rho: BTreeMap<String, f64>,
    pub warnings: Vec<FitWarning>,
}

/// Per-policy fit bundle as serialized by `fit --per-policy` and consumed by
/// `diagnose` and `rank`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerPolicyReport {
    pub model: ModelKind,
    pub fits: BTreeMap<String, FitReport>,
    pub failures: BTreeMap<String, String>,
}

fn keyed(ids: &[String], values: &[f64]) -> BTreeMap<String, f64> {
    ids.iter().cloned().zip(values.iter().copied()).collect()
}

fn unkeyed(what: &str, ids: &[String], map: &BTreeMap<String, f64>) -> anyhow::Result<Vec<f64>> {
    ids.iter()
        .map(|id| {
            map.get(id)
                .copied()
                .ok_or_else(|| anyhow::anyhow!("fit report is missing {what} for id {id}"))
        })
        .collect()
}

impl FitReport {
    pub fn from_fit(fit: &FitResult, ds: &RatingDataset) -> Self {
        let outputs = ds.outputs().ids();
        let items = ds.items().ids();
        let raters = ds.raters().ids();
        let (model, delta, rho, tau_ids, tau): (_, _, _, &[String], &[Vec<f64>]) = match &fit.params
        {
            FittedParams::Mfrm(p) => (
                ModelKind::Mfrm,
                &p.delta,
                keyed(raters, &p.rho),
                raters,
                &p.tau,
            ),
            FittedParams::Pcm(p) => (ModelKind::Pcm, &p.delta, BTreeMap::new(), items, &p.tau),
        };
        FitReport {
            model,
            converged: fit.converged,
            sweeps_used: fit.sweeps_used,
            constraint_residual: fit.params.constraint_residual(),
            loglik_trace: fit.loglik_trace.clone(),
            theta: keyed(outputs, fit.params.theta()),
            delta: keyed(items, delta),
            rho,
            tau: tau_ids.iter().cloned().zip(tau.iter().cloned()).collect(),
            se_theta: keyed(outputs, &fit.se_theta),
            se_delta: keyed(items, &fit.se_delta),
            se_rho: if fit.se_rho.is_empty() {
                BTreeMap::new()
            } else {
                keyed(raters, &fit.se_rho)
            },
            warnings: fit.warnings.clone(),
        }
    }

    /// Rebuilds the dense fit result against the dataset the fit came from.
    pub fn to_fit(&self, ds: &RatingDataset) -> anyhow::Result<FitResult> {
        let outputs = ds.outputs().ids();
        let items = ds.items().ids();
        let raters = ds.raters().ids();
        let theta = unkeyed("theta", outputs, &self.theta)?;
        let delta = unkeyed("delta", items, &self.delta)?;
        let tau_ids = match self.model {
            ModelKind::Mfrm => raters,
            ModelKind::Pcm => items,
        };
        let tau: Vec<Vec<f64>> = tau_ids
            .iter()
            .map(|id| {
                self.tau
                    .get(id)
                    .cloned()
                    .ok_or_else(|| anyhow::anyhow!("fit report is missing thresholds for {id}"))
            })
            .collect::<anyhow::Result<_>>()?;
        let params = match self.model {
            ModelKind::Mfrm => FittedParams::Mfrm(MfrmParams {
                theta,
                delta,
                rho: unkeyed("rho", raters, &self.rho)?,
                tau,
            }),
            ModelKind::Pcm => FittedParams::Pcm(PcmParams { theta, delta, tau }),
        };
        Ok(FitResult {
            params,
            loglik_trace: self.loglik_trace.clone(),
            converged: self.converged,
            sweeps_used: self.sweeps_used,
            se_theta: unkeyed("se_theta", outputs, &self.se_theta)?,
            se_delta: unkeyed("se_delta", items, &self.se_delta)?,
            se_rho: if self.rho.is_empty() {
                Vec::new()
            } else {
                unkeyed("se_rho", raters, &self.se_rho)?
            },
            warnings: self.warnings.clone(),
        })
    }
}

impl PerPolicyReport {
    pub fn from_fits(fits: &PerPolicyFits, subsets: &BTreeMap<String, RatingDataset>) -> Self {
        Self {
            model: fits.model,
            fits: fits
                .fits
                .iter()
                .map(|(policy, fit)| (policy.clone(), FitReport::from_fit(fit, &subsets[policy])))
                .collect(),
            failures: fits.failures.clone(),
        }
    }
}

/// One row per parameter: `kind,id,estimate,se`. Threshold rows use
/// `id = <owner>/<k>` for the k-th threshold and have no standard error.
pub fn write_params_csv<W: Write>(report: &FitReport, sink: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["kind", "id", "estimate", "se"])?;
    write_params_rows(&mut writer, report, None)?;
    writer.flush()?;
    Ok(())
}

/// Per-policy variant with a leading `policy` column.
pub fn write_per_policy_params_csv<W: Write>(report: &PerPolicyReport, sink: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["policy", "kind", "id", "estimate", "se"])?;
    for (policy, fit) in &report.fits {
        write_params_rows(&mut writer, fit, Some(policy))?;
    }
    writer.flush()?;
    Ok(())
}

fn write_params_rows<W: Write>(
    writer: &mut csv::Writer<W>,
    report: &FitReport,
    policy: Option<&str>,
) -> csv::Result<()> {
    let mut emit = |kind: &str, id: &str, estimate: f64, se: Option<f64>| -> csv::Result<()> {
        let estimate = format!("{estimate}");
        let se = se.map(|s| format!("{s}")).unwrap_or_default();
        match policy {
            Some(p) => writer.write_record([p, kind, id, &estimate, &se]),
            None => writer.write_record([kind, id, &estimate, &se]),
        }
    };
    for (id, value) in &report.theta {
        emit("theta", id, *value, report.se_theta.get(id).copied())?;
    }
    for (id, value) in &report.delta {
        emit("delta", id, *value, report.se_delta.get(id).copied())?;
    }
    for (id, value) in &report.rho {
        emit("rho", id, *value, report.se_rho.get(id).copied())?;
    }
    for (id, row) in &report.tau {
        for (h, value) in row.iter().enumerate() {
            emit("tau", &format!("{id}/{}", h + 1), *value, None)?;
        }
    }
    Ok(())
}
