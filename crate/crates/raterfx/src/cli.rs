//! Command-line surface: validate, agree, fit, diagnose, rank, simulate,
//! report, config.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 completed with
//! warnings (including a valid but disconnected design), 3 fit did not
//! converge. Flags override config-file values, which override built-in
//! defaults; `config --print-defaults` shows the baseline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use raterfx_core::agreement::BootstrapConfig;
use raterfx_core::data::RatingDataset;
use raterfx_core::diagnostics::FlagRule;
use raterfx_core::fit::{fit_mfrm, fit_pcm, FitConfig, FitResult};
use raterfx_core::linkage::check_linkage;
use raterfx_core::ranking::{rank_shift, ranking_table, ModelKind, RankView};
use raterfx_core::scale::ScaleSpec;
use raterfx_core::sim::{generate, Assignment, ParamSpec, SimConfig};

use crate::artifacts::ArtifactWriter;
use crate::csv_io::{self, read_policy_meta, PolicyMeta};
use crate::fit_io::{write_params_csv, write_per_policy_params_csv, FitReport, PerPolicyReport};
use crate::pipeline::{self, PipelineConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT_ERROR: i32 = 1;
pub const EXIT_WARNINGS: i32 = 2;
pub const EXIT_NON_CONVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "raterfx",
    version,
    about = "Psychometric rater-effect analysis for ordinal ratings of AI outputs"
)]
pub struct Cli {
    /// Flat key=value config file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for per-policy fitting (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a ratings CSV and report rater-output linkage.
    Validate(CommonOpts),
    /// Interrater agreement per item over double-rated pairs.
    Agree(CommonOpts),
    /// Fit a rater model (jointly, or independently per policy).
    Fit {
        #[arg(value_enum)]
        model: ModelArg,
        /// Fit each policy's records separately.
        #[arg(long)]
        per_policy: bool,
        #[command(flatten)]
        opts: CommonOpts,
    },
    /// Rater profiles, flags, and assumption checks from fit artifacts.
    Diagnose(CommonOpts),
    /// Raw / PCM / MFRM policy ranking views from fit artifacts.
    Rank(CommonOpts),
    /// Generate a synthetic rating dataset with known truth.
    Simulate(SimulateOpts),
    /// Full pipeline bundle with a hashed manifest.
    Report(CommonOpts),
    /// Show configuration values.
    Config {
        /// Print the built-in defaults and exit.
        #[arg(long)]
        print_defaults: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModelArg {
    Pcm,
    Mfrm,
}

impl From<ModelArg> for ModelKind {
    fn from(value: ModelArg) -> Self {
        match value {
            ModelArg::Pcm => ModelKind::Pcm,
            ModelArg::Mfrm => ModelKind::Mfrm,
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonOpts {
    /// Input ratings CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Artifact output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of scale categories.
    #[arg(long)]
    pub scale_k: Option<usize>,
    /// Lowest category label.
    #[arg(long)]
    pub scale_min: Option<i32>,
    /// Convergence tolerance on the largest parameter change (logits).
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_sweeps: Option<usize>,
    /// Newton step cap (logits).
    #[arg(long)]
    pub step_cap: Option<f64>,
    /// Score-point adjustment for all-minimum/all-maximum outputs.
    #[arg(long)]
    pub extreme_adjust: Option<f64>,
    /// Distinct categories a rater must use to get own thresholds.
    #[arg(long)]
    pub min_categories: Option<usize>,
    /// Bootstrap replicate count.
    #[arg(long)]
    pub bootstrap_b: Option<usize>,
    /// Bootstrap confidence level.
    #[arg(long)]
    pub level: Option<f64>,
    /// Random seed for bootstrap resampling.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lower flagging percentile.
    #[arg(long)]
    pub flag_lower: Option<f64>,
    /// Upper flagging percentile.
    #[arg(long)]
    pub flag_upper: Option<f64>,
    /// Policy metadata CSV (policy_id,label,group,size).
    #[arg(long)]
    pub policy_meta: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateOpts {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub n_outputs: usize,
    #[arg(long, default_value_t = 15)]
    pub n_raters: usize,
    #[arg(long, default_value_t = 4)]
    pub n_items: usize,
    #[arg(long)]
    pub scale_k: Option<usize>,
    #[arg(long)]
    pub scale_min: Option<i32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1.0)]
    pub theta_sd: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rho_sd: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta_sd: f64,
    #[arg(long, default_value_t = 1.5)]
    pub tau_spread: f64,
    /// Raters per output; omit for a fully crossed design.
    #[arg(long)]
    pub raters_per_output: Option<usize>,
    /// Split the outputs evenly into this many policies.
    #[arg(long, default_value_t = 1)]
    pub policies: usize,
    /// Also write the generating truth JSON.
    #[arg(long)]
    pub truth: bool,
}

/// Effective run settings after merging defaults, config file, and flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub scale: ScaleSpec,
    pub fit: FitConfig,
    pub bootstrap: BootstrapConfig,
    pub flag_rule: FlagRule,
    pub policy_meta: Option<PathBuf>,
    pub threads: usize,
}

/// Flat `key = value` file mirroring the run-config field names. Unknown
/// keys are an error so typos do not silently fall back to defaults.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    pub values: BTreeMap<String, String>,
}

const CONFIG_KEYS: [&str; 17] = [
    "input",
    "out",
    "scale_k",
    "scale_min",
    "tol",
    "max_sweeps",
    "step_cap",
    "extreme_adjust",
    "min_categories",
    "bootstrap_b",
    "level",
    "seed",
    "flag_lower",
    "flag_upper",
    "policy_meta",
    "threads",
    "per_policy",
];

impl FileConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key = value", lineno + 1))?;
            let key = key.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                bail!("config line {}: unknown key '{key}'", lineno + 1);
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                Self::parse(&text)
            }
            None => Ok(Self::default()),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> anyhow::Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            Some(raw) if !raw.is_empty() => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key {key}: {e}")),
            _ => Ok(None),
        }
    }
}

pub fn print_defaults() {
    let fit = FitConfig::default();
    let boot = BootstrapConfig::default();
    let flags = FlagRule::default();
    println!("input =");
    println!("out = out");
    println!("scale_k = 7");
    println!("scale_min = 1");
    println!("tol = {}", fit.tol);
    println!("max_sweeps = {}", fit.max_sweeps);
    println!("step_cap = {}", fit.step_cap);
    println!("extreme_adjust = {}", fit.extreme_adjust);
    println!("min_categories = {}", fit.min_categories_per_rater);
    println!("bootstrap_b = {}", boot.replicates);
    println!("level = {}", boot.level);
    println!("seed = {}", boot.seed);
    println!("flag_lower = {}", flags.lower_pct);
    println!("flag_upper = {}", flags.upper_pct);
    println!("policy_meta =");
    println!("threads = 0");
    println!("per_policy = false");
}

impl RunConfig {
    pub fn resolve(
        opts: &CommonOpts,
        file: &FileConfig,
        threads: Option<usize>,
    ) -> anyhow::Result<Self> {
        let defaults_fit = FitConfig::default();
        let defaults_boot = BootstrapConfig::default();
        let defaults_flags = FlagRule::default();

        let scale_k = opts.scale_k.or(file.get("scale_k")?).unwrap_or(7);
        let scale_min = opts.scale_min.or(file.get("scale_min")?).unwrap_or(1);
        let scale = ScaleSpec::new(scale_k, scale_min).map_err(|e| anyhow!(e))?;

        Ok(Self {
            input: opts.input.clone().or(file.get("input")?),
            out: opts
                .out
                .clone()
                .or(file.get("out")?)
                .unwrap_or_else(|| PathBuf::from("out")),
            scale,
            fit: FitConfig {
                tol: opts.tol.or(file.get("tol")?).unwrap_or(defaults_fit.tol),
                max_sweeps: opts
                    .max_sweeps
                    .or(file.get("max_sweeps")?)
                    .unwrap_or(defaults_fit.max_sweeps),
                step_cap: opts
                    .step_cap
                    .or(file.get("step_cap")?)
                    .unwrap_or(defaults_fit.step_cap),
                extreme_adjust: opts
                    .extreme_adjust
                    .or(file.get("extreme_adjust")?)
                    .unwrap_or(defaults_fit.extreme_adjust),
                min_categories_per_rater: opts
                    .min_categories
                    .or(file.get("min_categories")?)
                    .unwrap_or(defaults_fit.min_categories_per_rater),
            },
            bootstrap: BootstrapConfig {
                replicates: opts
                    .bootstrap_b
                    .or(file.get("bootstrap_b")?)
                    .unwrap_or(defaults_boot.replicates),
                level: opts
                    .level
                    .or(file.get("level")?)
                    .unwrap_or(defaults_boot.level),
                seed: opts
                    .seed
                    .or(file.get("seed")?)
                    .unwrap_or(defaults_boot.seed),
            },
            flag_rule: FlagRule {
                lower_pct: opts
                    .flag_lower
                    .or(file.get("flag_lower")?)
                    .unwrap_or(defaults_flags.lower_pct),
                upper_pct: opts
                    .flag_upper
                    .or(file.get("flag_upper")?)
                    .unwrap_or(defaults_flags.upper_pct),
            },
            policy_meta: opts.policy_meta.clone().or(file.get("policy_meta")?),
            threads: threads.or(file.get("threads")?).unwrap_or(0),
        })
    }

    fn load_input(&self) -> anyhow::Result<RatingDataset> {
        let path = self
            .input
            .as_ref()
            .ok_or_else(|| anyhow!("--input is required"))?;
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        csv_io::ingest_csv(std::io::BufReader::new(file), self.scale).map_err(|e| anyhow!(e))
    }

    fn load_policy_meta(&self) -> anyhow::Result<Option<BTreeMap<String, PolicyMeta>>> {
        match &self.policy_meta {
            Some(path) => {
                let file =
                    fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
                Ok(Some(read_policy_meta(std::io::BufReader::new(file))?))
            }
            None => Ok(None),
        }
    }
}

/// Runs a closure inside a rayon pool of the requested size (0 = default).
fn with_pool<T: Send>(
    threads: usize,
    run: impl FnOnce() -> anyhow::Result<T> + Send,
) -> anyhow::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        builder = builder.num_threads(threads);
    }
    let pool = builder.build().context("building thread pool")?;
    pool.install(run)
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Validate(opts) => {
            let config = RunConfig::resolve(&opts, &file, cli.threads)?;
            cmd_validate(&config)
        }
        Command::Agree(opts) => {
            let config = RunConfig::resolve(&opts, &file, cli.threads)?;
            cmd_agree(&config)
        }
        Command::Fit {
            model,
            per_policy,
            opts,
        } => {
            let config = RunConfig::resolve(&opts, &file, cli.threads)?;
            let per_policy = per_policy
                || matches!(
                    file.values.get("per_policy").map(String::as_str),
                    Some("true")
                );
            cmd_fit(&config, model.into(), per_policy)
        }
        Command::Diagnose(opts) => {
            let config = RunConfig::resolve(&opts, &file, cli.threads)?;
            cmd_diagnose(&config)
        }
        Command::Rank(opts) => {
            let config = RunConfig::resolve(&opts, &file, cli.threads)?;
            cmd_rank(&config)
        }
        Command::Simulate(opts) => cmd_simulate(&opts, &file),
        Command::Report(opts) => {
            let config = RunConfig::resolve(&opts, &file, cli.threads)?;
            cmd_report(&config)
        }
        Command::Config {
            print_defaults: defaults,
        } => {
            if defaults {
                print_defaults();
            } else {
                for key in CONFIG_KEYS {
                    match file.values.get(key) {
                        Some(value) => println!("{key} = {value}"),
                        None => println!("{key} = (default)"),
                    }
                }
            }
            Ok(EXIT_OK)
        }
    }
}

fn cmd_validate(config: &RunConfig) -> anyhow::Result<i32> {
    let ds = config.load_input()?;
    let report = check_linkage(&ds);
    let mut writer = ArtifactWriter::new(&config.out)?;
    writer.write_json("linkage.json", &report)?;
    println!(
        "{} records, {} outputs, {} items, {} raters, {} policies",
        ds.n_records(),
        ds.n_outputs(),
        ds.n_items(),
        ds.n_raters(),
        ds.n_policies()
    );
    println!(
        "linkage: {} component(s), smallest holds {} node(s)",
        report.component_count, report.smallest_component_size
    );
    if report.is_connected() {
        Ok(EXIT_OK)
    } else {
        eprintln!("warning: design is disconnected; fitting will refuse this input");
        Ok(EXIT_WARNINGS)
    }
}

fn cmd_agree(config: &RunConfig) -> anyhow::Result<i32> {
    let ds = config.load_input()?;
    let (summaries, skipped) = pipeline::per_item_agreement(&ds, &config.bootstrap)?;
    if summaries.is_empty() {
        bail!("no item has at least 2 double-rated pairs");
    }
    let mut writer = ArtifactWriter::new(&config.out)?;
    writer.write_json("agreement.json", &summaries)?;

    println!(
        "{:<16} {:>7} {:>8} {:>17} {:>10} {:>11} {:>9}",
        "item", "n_pairs", "qwk", "qwk 95% ci", "exact %", "within-1 %", "mean |d|"
    );
    for (item, s) in &summaries {
        println!(
            "{:<16} {:>7} {:>8.3} [{:>6.3}, {:>6.3}] {:>10.1} {:>11.1} {:>9.3}",
            item,
            s.n_pairs,
            s.qwk,
            s.qwk_ci.0,
            s.qwk_ci.1,
            s.exact_pct,
            s.within_one_pct,
            s.mean_abs_diff
        );
    }
    println!("double-rated outputs: {}", ds.double_rated_outputs());
    if skipped.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "warning: skipped items with <2 pairs: {}",
            skipped.join(", ")
        );
        Ok(EXIT_WARNINGS)
    }
}

fn fit_exit_code(
    failures: usize,
    total: usize,
    non_converged: bool,
    warned: bool,
) -> anyhow::Result<i32> {
    if failures == total && total > 0 {
        bail!("every fit failed");
    }
    Ok(if non_converged {
        EXIT_NON_CONVERGENCE
    } else if warned || failures > 0 {
        EXIT_WARNINGS
    } else {
        EXIT_OK
    })
}

fn cmd_fit(config: &RunConfig, model: ModelKind, per_policy: bool) -> anyhow::Result<i32> {
    let ds = config.load_input()?;
    let mut writer = ArtifactWriter::new(&config.out)?;
    let model_name = match model {
        ModelKind::Pcm => "pcm",
        ModelKind::Mfrm => "mfrm",
    };

    if per_policy {
        let fits = with_pool(config.threads, || {
            pipeline::fit_per_policy_parallel(&ds, model, &config.fit).map_err(|e| anyhow!(e))
        })?;
        let subsets: BTreeMap<String, RatingDataset> = ds
            .policies()
            .ids()
            .iter()
            .map(|p| {
                let subset = ds.subset_by_policy(p).map_err(|e| anyhow!(e))?;
                Ok((
                    p.clone(),
                    match model {
                        ModelKind::Pcm => subset.collapse_to_rounded_mean(),
                        ModelKind::Mfrm => subset,
                    },
                ))
            })
            .collect::<anyhow::Result<_>>()?;
        let report = PerPolicyReport::from_fits(&fits, &subsets);
        writer.write_json(&format!("fit_{model_name}_per_policy.json"), &report)?;
        let mut csv = Vec::new();
        write_per_policy_params_csv(&report, &mut csv)?;
        writer.write(&format!("fit_{model_name}_per_policy_params.csv"), &csv)?;

        let non_converged = fits.fits.values().any(|f| !f.converged);
        let warned = fits.fits.values().any(|f| !f.warnings.is_empty());
        for (policy, message) in &fits.failures {
            eprintln!("warning: policy {policy}: {message}");
        }
        println!(
            "fitted {model_name} for {} policies ({} failed)",
            fits.fits.len(),
            fits.failures.len()
        );
        fit_exit_code(fits.failures.len(), ds.n_policies(), non_converged, warned)
    } else {
        let fit = match model {
            ModelKind::Mfrm => fit_mfrm(&ds, &config.fit).map_err(|e| anyhow!(e))?,
            ModelKind::Pcm => {
                fit_pcm(&ds.collapse_to_rounded_mean(), &config.fit).map_err(|e| anyhow!(e))?
            }
        };
        let keyed_ds = match model {
            ModelKind::Pcm => ds.collapse_to_rounded_mean(),
            ModelKind::Mfrm => ds.clone(),
        };
        let report = FitReport::from_fit(&fit, &keyed_ds);
        writer.write_json(&format!("fit_{model_name}.json"), &report)?;
        let mut csv = Vec::new();
        write_params_csv(&report, &mut csv)?;
        writer.write(&format!("fit_{model_name}_params.csv"), &csv)?;

        for warning in &fit.warnings {
            eprintln!("warning: {warning}");
        }
        println!(
            "fitted {model_name}: {} sweeps, converged = {}, final loglik {:.3}",
            fit.sweeps_used,
            fit.converged,
            fit.loglik_trace.last().unwrap()
        );
        fit_exit_code(0, 1, !fit.converged, !fit.warnings.is_empty())
    }
}

/// Loads a per-policy fit artifact and rebuilds dense fits against the
/// policy subsets.
fn load_per_policy_fits(
    config: &RunConfig,
    ds: &RatingDataset,
    model_name: &str,
) -> anyhow::Result<BTreeMap<String, FitResult>> {
    let path = config.out.join(format!("fit_{model_name}_per_policy.json"));
    let text = fs::read_to_string(&path).with_context(|| {
        format!(
            "missing upstream artifact {}; run `raterfx fit {model_name} --per-policy` first",
            path.display()
        )
    })?;
    let report: PerPolicyReport = serde_json::from_str(&text)?;
    let mut fits = BTreeMap::new();
    for (policy, fit_report) in &report.fits {
        let subset = ds.subset_by_policy(policy).map_err(|e| anyhow!(e))?;
        let keyed = match report.model {
            ModelKind::Pcm => subset.collapse_to_rounded_mean(),
            ModelKind::Mfrm => subset,
        };
        fits.insert(policy.clone(), fit_report.to_fit(&keyed)?);
    }
    Ok(fits)
}

fn cmd_diagnose(config: &RunConfig) -> anyhow::Result<i32> {
    let ds = config.load_input()?;
    let mut writer = ArtifactWriter::new(&config.out)?;

    let per_policy_path = config.out.join("fit_mfrm_per_policy.json");
    let single_path = config.out.join("fit_mfrm.json");

    if per_policy_path.exists() {
        let fits = load_per_policy_fits(config, &ds, "mfrm")?;
        let per_policy: BTreeMap<String, pipeline::PolicyDiagnostics> = fits
            .iter()
            .map(|(policy, fit)| {
                let subset = ds.subset_by_policy(policy).map_err(|e| anyhow!(e))?;
                Ok((
                    policy.clone(),
                    pipeline::policy_diagnostics(&subset, fit, &config.flag_rule),
                ))
            })
            .collect::<anyhow::Result<_>>()?;
        let averages = pipeline::average_rater_profiles(&per_policy, &config.flag_rule);

        let points: Vec<_> = per_policy
            .iter()
            .flat_map(|(policy, d)| d.profiles.iter().map(move |p| (policy.clone(), p.clone())))
            .collect();
        let mut csv = Vec::new();
        csv_io::write_severity_centrality(&points, &mut csv)?;
        writer.write("severity_centrality.csv", &csv)?;
        let mut csv = Vec::new();
        csv_io::write_profiles(&averages, &mut csv)?;
        writer.write("rater_profiles.csv", &csv)?;
        writer.write_json(
            "diagnostics.json",
            &serde_json::json!({
                "per_policy": per_policy,
                "average_rater_profiles": averages,
            }),
        )?;
        println!("diagnosed {} policies", per_policy.len());
        Ok(EXIT_OK)
    } else if single_path.exists() {
        let report: FitReport = serde_json::from_str(&fs::read_to_string(&single_path)?)?;
        let fit = report.to_fit(&ds)?;
        let diag = pipeline::policy_diagnostics(&ds, &fit, &config.flag_rule);
        let mut csv = Vec::new();
        csv_io::write_profiles(&diag.profiles, &mut csv)?;
        writer.write("rater_profiles.csv", &csv)?;
        writer.write_json("diagnostics.json", &diag)?;
        let flagged: Vec<&str> = diag
            .profiles
            .iter()
            .filter(|p| !p.flags.is_empty())
            .map(|p| p.rater_id.as_str())
            .collect();
        println!(
            "profiled {} raters; flagged: {}",
            diag.profiles.len(),
            if flagged.is_empty() {
                "none".to_string()
            } else {
                flagged.join(", ")
            }
        );
        Ok(EXIT_OK)
    } else {
        bail!(
            "missing upstream artifact: neither {} nor {} exists; run `raterfx fit mfrm` first",
            per_policy_path.display(),
            single_path.display()
        );
    }
}

fn cmd_rank(config: &RunConfig) -> anyhow::Result<i32> {
    let ds = config.load_input()?;
    let pcm = load_per_policy_fits(config, &ds, "pcm")?;
    let mfrm = load_per_policy_fits(config, &ds, "mfrm")?;
    let table = ranking_table(&ds, &pcm, &mfrm).map_err(|e| anyhow!(e))?;
    let raw_to_mfrm = rank_shift(
        &table.rank_view(RankView::Raw),
        &table.rank_view(RankView::Mfrm),
    )
    .map_err(|e| anyhow!(e))?;
    let pcm_to_mfrm = rank_shift(
        &table.rank_view(RankView::Pcm),
        &table.rank_view(RankView::Mfrm),
    )
    .map_err(|e| anyhow!(e))?;

    let mut writer = ArtifactWriter::new(&config.out)?;
    let meta = config.load_policy_meta()?;
    let mut csv = Vec::new();
    csv_io::write_ranking(&table, meta.as_ref(), &mut csv)?;
    writer.write("ranking.csv", &csv)?;
    writer.write_json(
        "ranking.json",
        &serde_json::json!({
            "table": table,
            "shift_raw_to_mfrm": raw_to_mfrm,
            "shift_pcm_to_mfrm": pcm_to_mfrm,
        }),
    )?;

    println!(
        "{:<24} {:>9} {:>9} {:>10} {:>8} {:>8} {:>9}",
        "policy", "raw_mean", "pcm_mean", "mfrm_mean", "rank_raw", "rank_pcm", "rank_mfrm"
    );
    let mut rows = table.rows.clone();
    rows.sort_by_key(|r| r.rank_mfrm);
    for r in &rows {
        println!(
            "{:<24} {:>9.3} {:>9.3} {:>10.3} {:>8} {:>8} {:>9}",
            r.policy_id,
            r.raw_mean,
            r.pcm_theta_mean,
            r.mfrm_theta_mean,
            r.rank_raw,
            r.rank_pcm,
            r.rank_mfrm
        );
    }
    println!("kendall tau raw->mfrm: {:.3}", raw_to_mfrm.kendall_tau);
    for warning in &table.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(if table.warnings.is_empty() {
        EXIT_OK
    } else {
        EXIT_WARNINGS
    })
}

fn cmd_simulate(opts: &SimulateOpts, file: &FileConfig) -> anyhow::Result<i32> {
    let sim = SimConfig {
        n_outputs: opts.n_outputs,
        n_raters: opts.n_raters,
        n_items: opts.n_items,
        k_categories: opts.scale_k.or(file.get("scale_k")?).unwrap_or(7),
        min_label: opts.scale_min.or(file.get("scale_min")?).unwrap_or(1),
        theta: ParamSpec::Normal {
            mean: 0.0,
            sd: opts.theta_sd,
        },
        delta: ParamSpec::Normal {
            mean: 0.0,
            sd: opts.delta_sd,
        },
        rho: ParamSpec::Normal {
            mean: 0.0,
            sd: opts.rho_sd,
        },
        tau_spread: opts.tau_spread,
        assignment: match opts.raters_per_output {
            Some(m) => Assignment::RandomOverlap {
                raters_per_output: m,
            },
            None => Assignment::FullyCrossed,
        },
        policy_blocks: if opts.policies > 1 {
            let all_raters: Vec<usize> = (0..opts.n_raters).collect();
            let base = opts.n_outputs / opts.policies;
            let remainder = opts.n_outputs % opts.policies;
            let mut blocks = Vec::new();
            let mut start = 0;
            for p in 0..opts.policies {
                let end = start + base + usize::from(p < remainder);
                blocks.push(raterfx_core::sim::PolicyBlock {
                    policy_id: format!("sim{}", p + 1),
                    output_range: (start, end),
                    rater_indices: all_raters.clone(),
                    rho_offset: 0.0,
                });
                start = end;
            }
            blocks
        } else {
            Vec::new()
        },
        seed: opts.seed.or(file.get("seed")?).unwrap_or(42),
        ..Default::default()
    };
    let (ds, truth) = generate(&sim).map_err(|e| anyhow!(e))?;
    let out = opts
        .out
        .clone()
        .or(file.get("out")?)
        .unwrap_or_else(|| PathBuf::from("out"));
    let mut writer = ArtifactWriter::new(&out)?;
    let mut csv = Vec::new();
    csv_io::export_csv(&ds, &mut csv)?;
    writer.write("sim.csv", &csv)?;
    if opts.truth {
        writer.write_json("sim_truth.json", &truth)?;
    }
    println!(
        "simulated {} records ({} outputs x {} raters x {} items) into {}",
        ds.n_records(),
        sim.n_outputs,
        sim.n_raters,
        sim.n_items,
        out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_report(config: &RunConfig) -> anyhow::Result<i32> {
    let ds = config.load_input()?;
    let pipeline_config = PipelineConfig {
        fit: config.fit.clone(),
        bootstrap: config.bootstrap.clone(),
        flag_rule: config.flag_rule.clone(),
        policy_meta: config.load_policy_meta()?,
    };
    let mut writer = ArtifactWriter::new(&config.out)?;
    let outcome = with_pool(config.threads, || {
        pipeline::run_report(&ds, &pipeline_config, &mut writer)
    })?;
    println!("report written to {}", config.out.display());
    for warning in &outcome.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(if outcome.non_converged {
        EXIT_NON_CONVERGENCE
    } else if outcome.warnings.is_empty() {
        EXIT_OK
    } else {
        EXIT_WARNINGS
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses_and_rejects_unknown_keys() {
        let file =
            FileConfig::parse("# comment\nseed = 9\ntol = 0.001\n\nout = artifacts\n").unwrap();
        assert_eq!(file.values["seed"], "9");
        assert!(FileConfig::parse("nope = 1\n").is_err());
        assert!(FileConfig::parse("just a line\n").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let file = FileConfig::parse("seed = 9\ntol = 0.001\nscale_k = 5\n").unwrap();
        let opts = CommonOpts {
            seed: Some(11),
            ..Default::default()
        };
        let config = RunConfig::resolve(&opts, &file, None).unwrap();
        assert_eq!(config.bootstrap.seed, 11);
        assert_eq!(config.fit.tol, 0.001);
        assert_eq!(config.scale.k_categories, 5);
        assert_eq!(config.fit.max_sweeps, 500);
    }
}
