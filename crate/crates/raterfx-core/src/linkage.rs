//! Connectivity of the rater-output design.
//!
//! A common measurement scale needs overlap among raters: the bipartite graph
//! with an edge (rater, output) for every observed rating must be connected,
//! or the facets of separate components float on unrelated scales. A
//! disconnected design is reported, not rejected; the fitting routines refuse
//! multi-component input.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::RatingDataset;

/// Connected components of the bipartite rater-output graph.
///
/// Component labels are canonical: components are numbered by their
/// lexicographically smallest output id, so the report does not depend on
/// record order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkageReport {
    pub component_count: usize,
    /// Node count (outputs + raters) of the smallest component.
    pub smallest_component_size: usize,
    pub output_components: BTreeMap<String, usize>,
    pub rater_components: BTreeMap<String, usize>,
}

impl LinkageReport {
    pub fn is_connected(&self) -> bool {
        self.component_count == 1
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let mut a = self.find(a);
        let mut b = self.find(b);
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            core::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Computes connected components over nodes = outputs then raters, with one
/// edge per observed (rater, output) pair.
pub fn check_linkage(dataset: &RatingDataset) -> LinkageReport {
    let n_out = dataset.n_outputs();
    let n_rat = dataset.n_raters();
    let mut uf = UnionFind::new(n_out + n_rat);
    for e in dataset.encoded() {
        uf.union(e.out as usize, n_out + e.rater as usize);
    }

    // Every component contains at least one output (raters only appear
    // through records, which always carry an output), so numbering
    // components by smallest output index is total and canonical.
    let mut label_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    for out in 0..n_out {
        let root = uf.find(out);
        let next = label_of_root.len();
        label_of_root.entry(root).or_insert(next);
    }

    let mut output_components = BTreeMap::new();
    let mut rater_components = BTreeMap::new();
    let component_count = label_of_root.len();
    let mut sizes = vec![0usize; component_count];
    for out in 0..n_out {
        let label = label_of_root[&uf.find(out)];
        sizes[label] += 1;
        output_components.insert(dataset.outputs().id(out).to_owned(), label);
    }
    for rater in 0..n_rat {
        let label = label_of_root[&uf.find(n_out + rater)];
        sizes[label] += 1;
        rater_components.insert(dataset.raters().id(rater).to_owned(), label);
    }

    LinkageReport {
        component_count,
        smallest_component_size: sizes.iter().copied().min().unwrap_or(0),
        output_components,
        rater_components,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingRecord;
    use crate::scale::ScaleSpec;
    use alloc::string::ToString;

    fn rec(out: &str, rater: &str) -> RatingRecord {
        RatingRecord {
            output_id: out.to_string(),
            item_id: "i".to_string(),
            rater_id: rater.to_string(),
            policy_id: None,
            category: 3,
        }
    }

    fn ds(records: Vec<RatingRecord>) -> RatingDataset {
        RatingDataset::new(ScaleSpec::new(7, 1).unwrap(), records).unwrap()
    }

    #[test]
    fn star_graph_is_one_component() {
        let records = (0..10)
            .map(|n| rec(&alloc::format!("o{n}"), "solo"))
            .collect();
        let report = check_linkage(&ds(records));
        assert_eq!(report.component_count, 1);
        assert!(report.is_connected());
        assert_eq!(report.smallest_component_size, 11);
    }

    #[test]
    fn disjoint_blocks_are_two_components() {
        let records = vec![
            rec("o1", "A"),
            rec("o2", "A"),
            rec("o1", "B"),
            rec("o2", "B"),
            rec("o3", "C"),
            rec("o4", "C"),
            rec("o3", "D"),
            rec("o4", "D"),
        ];
        let report = check_linkage(&ds(records));
        assert_eq!(report.component_count, 2);
        assert_eq!(report.smallest_component_size, 4);
        assert_eq!(
            report.output_components["o1"],
            report.output_components["o2"]
        );
        assert_eq!(report.rater_components["A"], report.output_components["o1"]);
        assert_ne!(
            report.output_components["o1"],
            report.output_components["o3"]
        );
    }

    #[test]
    fn membership_is_record_order_invariant() {
        let forward = vec![rec("o1", "A"), rec("o2", "A"), rec("o3", "B")];
        let mut reversed = forward.clone();
        reversed.reverse();
        assert_eq!(check_linkage(&ds(forward)), check_linkage(&ds(reversed)));
    }
}
