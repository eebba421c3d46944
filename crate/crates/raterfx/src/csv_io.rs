//! The canonical CSV interchange format and the plot-ready CSV exports.
//!
//! Ingestion schema: a header row naming `output_id,item_id,rater_id,
//! policy_id,category` (any column order, extra columns ignored), one rating
//! per row, empty `policy_id` meaning none. Every ingestion error carries
//! the 1-based file row number, counting the header as row 1.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use raterfx_core::data::{DataError, RatingDataset, RatingRecord};
use raterfx_core::diagnostics::RaterProfile;
use raterfx_core::ranking::PolicyScoreTable;
use raterfx_core::scale::ScaleSpec;
use serde::{Deserialize, Serialize};

pub const CSV_COLUMNS: [&str; 5] = ["output_id", "item_id", "rater_id", "policy_id", "category"];

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("row {row}: {message}")]
    Malformed { row: u64, message: String },
    #[error("missing required column {0}")]
    MissingColumn(&'static str),
    #[error("row {row}: category '{value}' is not an integer")]
    BadCategory { row: u64, value: String },
    #[error("row {row}: category {category} outside scale {min}..={max}")]
    OutOfRange {
        row: u64,
        category: i32,
        min: i32,
        max: i32,
    },
    #[error(
        "row {row}: duplicate rating for (output {output_id}, item {item_id}, rater {rater_id})"
    )]
    Duplicate {
        row: u64,
        output_id: String,
        item_id: String,
        rater_id: String,
    },
    #[error("row {row}: empty {field} id")]
    EmptyId { row: u64, field: &'static str },
    #[error("file has no data rows")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Data(DataError),
}

/// 1-based file row of a data record, counting the header row.
fn row_of(record_index: usize) -> u64 {
    record_index as u64 + 2
}

/// Reads and validates a rating table. Row order is preserved in the
/// returned dataset's records.
pub fn ingest_csv<R: Read>(source: R, scale: ScaleSpec) -> Result<RatingDataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let mut column = [0usize; 5];
    for (slot, name) in column.iter_mut().zip(CSV_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or(IngestError::MissingColumn(match name {
                "output_id" => "output_id",
                "item_id" => "item_id",
                "rater_id" => "rater_id",
                "policy_id" => "policy_id",
                _ => "category",
            }))?;
    }

    let mut records = Vec::new();
    for (index, row) in reader.records().enumerate() {
        let row = row.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { .. } => IngestError::Malformed {
                row: row_of(index),
                message: e.to_string(),
            },
            _ => IngestError::Csv(e),
        })?;
        let field = |c: usize| row.get(column[c]).unwrap_or("").trim();
        let raw_category = field(4);
        let category: i32 = raw_category.parse().map_err(|_| IngestError::BadCategory {
            row: row_of(index),
            value: raw_category.to_string(),
        })?;
        let policy = field(3);
        records.push(RatingRecord {
            output_id: field(0).to_string(),
            item_id: field(1).to_string(),
            rater_id: field(2).to_string(),
            policy_id: if policy.is_empty() {
                None
            } else {
                Some(policy.to_string())
            },
            category,
        });
    }

    RatingDataset::new(scale, records).map_err(|e| match e {
        DataError::Empty => IngestError::Empty,
        DataError::CategoryOutOfRange {
            record_index,
            category,
            min,
            max,
        } => IngestError::OutOfRange {
            row: row_of(record_index),
            category,
            min,
            max,
        },
        DataError::DuplicateTriple {
            record_index,
            output_id,
            item_id,
            rater_id,
        } => IngestError::Duplicate {
            row: row_of(record_index),
            output_id,
            item_id,
            rater_id,
        },
        DataError::EmptyId {
            record_index,
            field,
        } => IngestError::EmptyId {
            row: row_of(record_index),
            field,
        },
        other => IngestError::Data(other),
    })
}

/// Writes the dataset back out with the same header; re-ingesting yields an
/// identical record collection.
pub fn export_csv<W: Write>(ds: &RatingDataset, sink: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(CSV_COLUMNS)?;
    for r in ds.records() {
        writer.write_record([
            r.output_id.as_str(),
            r.item_id.as_str(),
            r.rater_id.as_str(),
            r.policy_id.as_deref().unwrap_or(""),
            &r.category.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Optional policy metadata passed through into ranking outputs.
/// Schema: `policy_id,label,group,size`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub label: String,
    pub group: String,
    pub size: String,
}

pub fn read_policy_meta<R: Read>(source: R) -> anyhow::Result<BTreeMap<String, PolicyMeta>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let pos = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = pos("policy_id")
        .ok_or_else(|| anyhow::anyhow!("policy metadata needs a policy_id column"))?;
    let label_col = pos("label");
    let group_col = pos("group");
    let size_col = pos("size");
    let mut meta = BTreeMap::new();
    for row in reader.records() {
        let row = row?;
        let get = |c: Option<usize>| {
            c.and_then(|c| row.get(c))
                .map(|s| s.trim().to_string())
                .unwrap_or_default()
        };
        meta.insert(
            row.get(id_col).unwrap_or("").trim().to_string(),
            PolicyMeta {
                label: get(label_col),
                group: get(group_col),
                size: get(size_col),
            },
        );
    }
    Ok(meta)
}

/// Per-rater score-distribution table: percentage of each rater's ratings
/// on each item landing in each category. All K categories are emitted per
/// (rater, item), including zero rows, so the table is plot-ready.
pub fn write_score_distribution<W: Write>(ds: &RatingDataset, sink: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["rater_id", "item_id", "category", "pct"])?;
    let k = ds.scale().k_categories;
    let mut counts: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for e in ds.records() {
        let rater = ds.raters().index_of(&e.rater_id).unwrap() as u32;
        let item = ds.items().index_of(&e.item_id).unwrap() as u32;
        let slot = counts.entry((rater, item)).or_insert_with(|| vec![0; k]);
        slot[ds.scale().position(e.category).unwrap()] += 1;
    }
    for ((rater, item), slot) in counts {
        let total: usize = slot.iter().sum();
        for (position, count) in slot.iter().enumerate() {
            writer.write_record([
                ds.raters().id(rater as usize),
                ds.items().id(item as usize),
                &ds.scale().label(position).to_string(),
                &format!("{:.4}", 100.0 * *count as f64 / total as f64),
            ])?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Profile table: `rater_id,severity,centrality,n_ratings,flags` with flags
/// joined by `|`.
pub fn write_profiles<W: Write>(profiles: &[RaterProfile], sink: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["rater_id", "severity", "centrality", "n_ratings", "flags"])?;
    for p in profiles {
        let flags: Vec<String> = p.flags.iter().map(|f| serde_flag(f)).collect();
        writer.write_record([
            p.rater_id.as_str(),
            &format!("{}", p.severity),
            &format!("{}", p.centrality),
            &p.n_ratings.to_string(),
            &flags.join("|"),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn serde_flag(flag: &raterfx_core::diagnostics::RaterFlag) -> String {
    serde_json::to_string(flag)
        .unwrap()
        .trim_matches('"')
        .to_string()
}

/// Severity-centrality points, one row per (policy, rater): the plot source
/// for per-rater and per-policy rater-effect charts.
pub fn write_severity_centrality<W: Write>(
    points: &[(String, RaterProfile)],
    sink: W,
) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(["policy_id", "rater_id", "severity", "centrality", "n"])?;
    for (policy, p) in points {
        writer.write_record([
            policy.as_str(),
            p.rater_id.as_str(),
            &format!("{}", p.severity),
            &format!("{}", p.centrality),
            &p.n_ratings.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Ranking table with optional policy metadata pass-through. The leading
/// comment line repeats the comparability marker: latent means are
/// comparable by rank only.
pub fn write_ranking<W: Write>(
    table: &PolicyScoreTable,
    meta: Option<&BTreeMap<String, PolicyMeta>>,
    mut sink: W,
) -> anyhow::Result<()> {
    writeln!(sink, "# comparability: {}", table.comparability)?;
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record([
        "policy_id",
        "label",
        "group",
        "size",
        "n_outputs",
        "raw_mean",
        "pcm_theta_mean",
        "mfrm_theta_mean",
        "rank_raw",
        "rank_pcm",
        "rank_mfrm",
    ])?;
    for row in &table.rows {
        let default = PolicyMeta::default();
        let m = meta.and_then(|m| m.get(&row.policy_id)).unwrap_or(&default);
        writer.write_record([
            row.policy_id.as_str(),
            m.label.as_str(),
            m.group.as_str(),
            m.size.as_str(),
            &row.n_outputs.to_string(),
            &format!("{}", row.raw_mean),
            &format!("{}", row.pcm_theta_mean),
            &format!("{}", row.mfrm_theta_mean),
            &row.rank_raw.to_string(),
            &row.rank_pcm.to_string(),
            &row.rank_mfrm.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
