//! Property tests over randomly generated rating tables.

use proptest::prelude::*;

use raterfx_core::agreement::qwk;
use raterfx_core::data::{RatingDataset, RatingRecord};
use raterfx_core::linkage::check_linkage;
use raterfx_core::model::category_probs;
use raterfx_core::scale::ScaleSpec;

fn scale7() -> ScaleSpec {
    ScaleSpec::new(7, 1).unwrap()
}

/// Unique (output, item, rater) cells with arbitrary categories.
fn arb_records() -> impl Strategy<Value = Vec<RatingRecord>> {
    proptest::collection::btree_set((0u8..12, 0u8..3, 0u8..6), 1..60).prop_flat_map(|cells| {
        let cells: Vec<(u8, u8, u8)> = cells.into_iter().collect();
        let n = cells.len();
        (Just(cells), proptest::collection::vec(1i32..=7, n)).prop_map(|(cells, cats)| {
            cells
                .into_iter()
                .zip(cats)
                .map(|((o, i, r), category)| RatingRecord {
                    output_id: format!("o{o}"),
                    item_id: format!("i{i}"),
                    rater_id: format!("r{r}"),
                    policy_id: None,
                    category,
                })
                .collect()
        })
    })
}

proptest! {
    #[test]
    fn linkage_is_invariant_under_record_shuffles(records in arb_records(), seed in 0u64..1000) {
        let ds = RatingDataset::new(scale7(), records.clone()).unwrap();
        let report = check_linkage(&ds);

        let mut shuffled = records;
        // Cheap deterministic shuffle.
        let mut state = seed.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let ds2 = RatingDataset::new(scale7(), shuffled).unwrap();
        prop_assert_eq!(report, check_linkage(&ds2));
    }

    #[test]
    fn collapsed_categories_stay_in_range(records in arb_records()) {
        let ds = RatingDataset::new(scale7(), records).unwrap();
        let collapsed = ds.collapse_to_rounded_mean();
        for r in collapsed.records() {
            prop_assert!(scale7().contains(r.category));
        }
        // One record per (output, item) cell.
        let cells: std::collections::BTreeSet<(&str, &str)> = ds
            .records()
            .iter()
            .map(|r| (r.output_id.as_str(), r.item_id.as_str()))
            .collect();
        prop_assert_eq!(collapsed.n_records(), cells.len());
    }

    #[test]
    fn double_rated_pairs_count_is_m_choose_2(records in arb_records()) {
        let ds = RatingDataset::new(scale7(), records).unwrap();
        let mut cell_sizes: std::collections::BTreeMap<(&str, &str), usize> = Default::default();
        for r in ds.records() {
            *cell_sizes.entry((r.output_id.as_str(), r.item_id.as_str())).or_insert(0) += 1;
        }
        let expected: usize = cell_sizes.values().map(|m| m * (m - 1) / 2).sum();
        prop_assert_eq!(ds.double_rated_pairs().len(), expected);
    }

    #[test]
    fn qwk_symmetry_and_scale_reversal(pairs in proptest::collection::vec((1i32..=7, 1i32..=7), 1..40)) {
        let base = qwk(&pairs, scale7()).unwrap();
        let swapped: Vec<(i32, i32)> = pairs.iter().map(|&(a, b)| (b, a)).collect();
        let reversed: Vec<(i32, i32)> = pairs.iter().map(|&(a, b)| (8 - a, 8 - b)).collect();
        prop_assert!((base - qwk(&swapped, scale7()).unwrap()).abs() <= 1e-10);
        prop_assert!((base - qwk(&reversed, scale7()).unwrap()).abs() <= 1e-10);
        // All-exact pairs produce kappa 1 (checked when they happen to agree).
        if pairs.iter().all(|(a, b)| a == b) {
            prop_assert!((base - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn category_probabilities_normalize_and_translate(
        theta in -30.0f64..30.0,
        delta in -3.0f64..3.0,
        rho in -3.0f64..3.0,
        shift in -5.0f64..5.0,
        tau in proptest::collection::vec(-3.0f64..3.0, 6),
    ) {
        let probs = category_probs(theta, delta, rho, &tau);
        let total: f64 = probs.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(probs.iter().all(|p| *p >= 0.0 && *p <= 1.0));

        let shifted = category_probs(theta + shift, delta + shift, rho, &tau);
        for (a, b) in probs.iter().zip(&shifted) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}
