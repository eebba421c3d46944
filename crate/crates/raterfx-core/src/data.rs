//! Canonical data model for ordinal rating tables.
//!
//! A [`RatingDataset`] is an immutable, validated collection of
//! `(output, item, rater, policy, category)` records together with dense
//! integer indices for each id space. Ids are opaque strings; dense indices
//! are assigned in sorted id order so every derived quantity is independent
//! of record order.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::scale::ScaleSpec;

/// One observed ordinal rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    /// Rated AI output (e.g. one generated summary).
    pub output_id: String,
    /// Rating dimension (e.g. factual accuracy).
    pub item_id: String,
    /// Human judge.
    pub rater_id: String,
    /// Generating system, when the dataset compares systems.
    pub policy_id: Option<String>,
    /// Category label within the scale range.
    pub category: i32,
}

/// Validation failure while building a dataset. `record_index` is the
/// zero-based position in the input record collection.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataError {
    #[error("dataset has no records")]
    Empty,
    #[error("record {record_index}: empty {field} id")]
    EmptyId {
        record_index: usize,
        field: &'static str,
    },
    #[error("record {record_index}: category {category} outside scale {min}..={max}")]
    CategoryOutOfRange {
        record_index: usize,
        category: i32,
        min: i32,
        max: i32,
    },
    #[error(
        "record {record_index}: duplicate rating for (output {output_id}, item {item_id}, rater {rater_id})"
    )]
    DuplicateTriple {
        record_index: usize,
        output_id: String,
        item_id: String,
        rater_id: String,
    },
    #[error("{count} record(s) have no policy id; this operation needs one on every record")]
    MissingPolicyIds { count: usize },
    #[error("unknown policy id {0}")]
    UnknownPolicy(String),
}

/// Sorted id table; dense index = rank of the id in sorted order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdIndex {
    ids: Vec<String>,
}

impl IdIndex {
    fn from_iter<'a>(iter: impl Iterator<Item = &'a str>) -> Self {
        let mut ids: Vec<String> = iter.map(|s| s.to_owned()).collect();
        ids.sort_unstable();
        ids.dedup();
        Self { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids
            .binary_search_by(|probe| probe.as_str().cmp(id))
            .ok()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Dense form of one record; `x` is the zero-based category position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Encoded {
    pub out: u32,
    pub item: u32,
    pub rater: u32,
    /// Dense policy index, or `NO_POLICY`.
    pub policy: u32,
    pub x: u8,
}

pub(crate) const NO_POLICY: u32 = u32::MAX;

/// Synthetic rater id used by [`RatingDataset::collapse_to_rounded_mean`].
pub const CONSENSUS_RATER_ID: &str = "consensus";

/// Validated, immutable ordinal rating table.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    scale: ScaleSpec,
    records: Vec<RatingRecord>,
    outputs: IdIndex,
    items: IdIndex,
    raters: IdIndex,
    policies: IdIndex,
    /// Dense records sorted by (out, item, rater); unique by construction.
    encoded: Vec<Encoded>,
}

impl RatingDataset {
    /// Validates and indexes a record collection. Record order is preserved
    /// in [`records`](Self::records); duplicate `(output, item, rater)`
    /// triples are a hard error so that silent overwrites cannot corrupt
    /// agreement statistics.
    pub fn new(scale: ScaleSpec, records: Vec<RatingRecord>) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        for (i, r) in records.iter().enumerate() {
            for (field, value) in [
                ("output", &r.output_id),
                ("item", &r.item_id),
                ("rater", &r.rater_id),
            ] {
                if value.is_empty() {
                    return Err(DataError::EmptyId {
                        record_index: i,
                        field,
                    });
                }
            }
            if let Some(p) = &r.policy_id {
                if p.is_empty() {
                    return Err(DataError::EmptyId {
                        record_index: i,
                        field: "policy",
                    });
                }
            }
            if !scale.contains(r.category) {
                return Err(DataError::CategoryOutOfRange {
                    record_index: i,
                    category: r.category,
                    min: scale.min_label,
                    max: scale.max_label(),
                });
            }
        }

        let outputs = IdIndex::from_iter(records.iter().map(|r| r.output_id.as_str()));
        let items = IdIndex::from_iter(records.iter().map(|r| r.item_id.as_str()));
        let raters = IdIndex::from_iter(records.iter().map(|r| r.rater_id.as_str()));
        let policies = IdIndex::from_iter(records.iter().filter_map(|r| r.policy_id.as_deref()));

        let mut keyed: Vec<(Encoded, usize)> = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let e = Encoded {
                    out: outputs.index_of(&r.output_id).unwrap() as u32,
                    item: items.index_of(&r.item_id).unwrap() as u32,
                    rater: raters.index_of(&r.rater_id).unwrap() as u32,
                    policy: r
                        .policy_id
                        .as_deref()
                        .map(|p| policies.index_of(p).unwrap() as u32)
                        .unwrap_or(NO_POLICY),
                    x: scale.position(r.category).unwrap() as u8,
                };
                (e, i)
            })
            .collect();
        keyed.sort_unstable_by_key(|(e, _)| (e.out, e.item, e.rater));
        for w in keyed.windows(2) {
            let (a, ia) = &w[0];
            let (b, ib) = &w[1];
            if (a.out, a.item, a.rater) == (b.out, b.item, b.rater) {
                // Report the later of the two colliding input records.
                let record_index = (*ia).max(*ib);
                let r = &records[record_index];
                return Err(DataError::DuplicateTriple {
                    record_index,
                    output_id: r.output_id.clone(),
                    item_id: r.item_id.clone(),
                    rater_id: r.rater_id.clone(),
                });
            }
        }
        let encoded = keyed.into_iter().map(|(e, _)| e).collect();

        Ok(Self {
            scale,
            records,
            outputs,
            items,
            raters,
            policies,
            encoded,
        })
    }

    pub fn scale(&self) -> ScaleSpec {
        self.scale
    }

    /// Records in input order.
    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_raters(&self) -> usize {
        self.raters.len()
    }

    pub fn n_policies(&self) -> usize {
        self.policies.len()
    }

    pub fn outputs(&self) -> &IdIndex {
        &self.outputs
    }

    pub fn items(&self) -> &IdIndex {
        &self.items
    }

    pub fn raters(&self) -> &IdIndex {
        &self.raters
    }

    pub fn policies(&self) -> &IdIndex {
        &self.policies
    }

    pub(crate) fn encoded(&self) -> &[Encoded] {
        &self.encoded
    }

    /// True when every record carries a policy id.
    pub fn fully_policied(&self) -> bool {
        self.encoded.iter().all(|e| e.policy != NO_POLICY)
    }

    /// Errors unless every record carries a policy id (the precondition of
    /// per-policy operations).
    pub fn require_policies(&self) -> Result<(), DataError> {
        let count = self
            .encoded
            .iter()
            .filter(|e| e.policy == NO_POLICY)
            .count();
        if count > 0 {
            return Err(DataError::MissingPolicyIds { count });
        }
        Ok(())
    }

    /// New dataset holding only the records of one policy, re-indexed.
    pub fn subset_by_policy(&self, policy_id: &str) -> Result<Self, DataError> {
        if self.policies.index_of(policy_id).is_none() {
            return Err(DataError::UnknownPolicy(policy_id.to_owned()));
        }
        let records: Vec<RatingRecord> = self
            .records
            .iter()
            .filter(|r| r.policy_id.as_deref() == Some(policy_id))
            .cloned()
            .collect();
        Self::new(self.scale, records)
    }

    /// Collapses multiple ratings of the same (output, item) cell into one
    /// synthetic consensus record whose category is the mean over raters,
    /// rounded half away from zero. This is the discrete-score input the
    /// rater-free partial credit model needs.
    pub fn collapse_to_rounded_mean(&self) -> Self {
        let mut out_records: Vec<RatingRecord> = Vec::new();
        let mut i = 0;
        while i < self.encoded.len() {
            let cell = (self.encoded[i].out, self.encoded[i].item);
            let mut j = i;
            let mut sum = 0i64;
            while j < self.encoded.len() && (self.encoded[j].out, self.encoded[j].item) == cell {
                sum += self.scale.label(self.encoded[j].x as usize) as i64;
                j += 1;
            }
            let mean = sum as f64 / (j - i) as f64;
            let rounded = round_half_away_from_zero(mean);
            let policy = match self.encoded[i].policy {
                NO_POLICY => None,
                p => Some(self.policies.id(p as usize).to_owned()),
            };
            out_records.push(RatingRecord {
                output_id: self.outputs.id(cell.0 as usize).to_owned(),
                item_id: self.items.id(cell.1 as usize).to_owned(),
                rater_id: CONSENSUS_RATER_ID.to_owned(),
                policy_id: policy,
                category: rounded,
            });
            i = j;
        }
        // A mean of in-range integers rounds back into range, and the cells
        // are unique, so re-validation cannot fail.
        Self::new(self.scale, out_records).expect("collapsed dataset is valid")
    }

    /// All unordered rater-pair category combinations for every (output, item)
    /// cell rated by at least two distinct raters, as `(item_id, a, b)`.
    /// Deterministic order: cells by (output, item) index, pairs by rater
    /// index with the lower-indexed rater first.
    pub fn double_rated_pairs(&self) -> Vec<(String, i32, i32)> {
        let mut pairs = Vec::new();
        let mut i = 0;
        while i < self.encoded.len() {
            let cell = (self.encoded[i].out, self.encoded[i].item);
            let mut j = i;
            while j < self.encoded.len() && (self.encoded[j].out, self.encoded[j].item) == cell {
                j += 1;
            }
            if j - i >= 2 {
                let item_id = self.items.id(cell.1 as usize);
                for a in i..j {
                    for b in (a + 1)..j {
                        pairs.push((
                            item_id.to_owned(),
                            self.scale.label(self.encoded[a].x as usize),
                            self.scale.label(self.encoded[b].x as usize),
                        ));
                    }
                }
            }
            i = j;
        }
        pairs
    }

    /// Number of distinct outputs rated by at least two raters on some item.
    pub fn double_rated_outputs(&self) -> usize {
        let mut count = 0;
        let mut i = 0;
        let mut current_out = u32::MAX;
        let mut counted = false;
        while i < self.encoded.len() {
            if self.encoded[i].out != current_out {
                current_out = self.encoded[i].out;
                counted = false;
            }
            let cell = (self.encoded[i].out, self.encoded[i].item);
            let mut j = i;
            while j < self.encoded.len() && (self.encoded[j].out, self.encoded[j].item) == cell {
                j += 1;
            }
            if j - i >= 2 && !counted {
                count += 1;
                counted = true;
            }
            i = j;
        }
        count
    }
}

/// Rounds to the nearest integer, breaking .5 ties away from zero.
pub(crate) fn round_half_away_from_zero(v: f64) -> i32 {
    libm::round(v) as i32
}
