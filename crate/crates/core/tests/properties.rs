use std::collections::BTreeSet;

use guardrec::cooccurrence::{sppmi, url_cooccurrence_counts};
use guardrec::data::{
    filter_min_urls, load_interactions, save_interactions, split_per_guardian, Dataset, IdMap, Interaction,
    InteractionFormat, InteractionMatrix, SplitRatios,
};
use guardrec::evaluation::{ap_at_k, ndcg_at_k, recall_at_k, ApNormalization, CohortSpec};
use guardrec::similarity::{cosine_similarity_matrix, DocVectors};
use proptest::prelude::*;

fn matrix(max_g: usize, max_u: usize) -> impl Strategy<Value = InteractionMatrix> {
    (1..=max_g, 1..=max_u).prop_flat_map(|(n, m)| {
        prop::collection::vec((0..n, 0..m), 0..n * m + 1)
            .prop_map(move |pairs| InteractionMatrix::from_pairs(n, m, pairs).unwrap())
    })
}

fn ranking() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2usize..30).prop_flat_map(|m| {
        (
            Just((0..m).collect::<Vec<_>>()).prop_shuffle(),
            prop::collection::btree_set(0..m, 1..=m).prop_map(|s| s.into_iter().collect::<Vec<_>>()),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn split_partitions_each_guardian(x in matrix(12, 15), seed in any::<u64>()) {
        let Ok(f) = filter_min_urls(&x, 3) else { return Ok(()); };
        let x = f.matrix;
        let s = split_per_guardian(&x, SplitRatios::default(), seed).unwrap();
        for g in 0..x.n_guardians() {
            let parts = [s.train.row(g), s.validation.row(g), s.test.row(g)];
            let union: BTreeSet<usize> = parts.iter().flat_map(|p| p.iter().copied()).collect();
            prop_assert_eq!(parts.iter().map(|p| p.len()).sum::<usize>(), x.row(g).len());
            prop_assert_eq!(union, x.row(g).iter().copied().collect::<BTreeSet<_>>());
            prop_assert!(!s.train.row(g).is_empty() && !s.test.row(g).is_empty());
        }
        prop_assert_eq!(&split_per_guardian(&x, SplitRatios::default(), seed).unwrap(), &s);
    }

    #[test]
    fn min_url_filter_is_idempotent(x in matrix(12, 10), min in 1usize..5) {
        let Ok(once) = filter_min_urls(&x, min) else { return Ok(()); };
        for g in 0..once.matrix.n_guardians() {
            prop_assert!(once.matrix.row(g).len() >= min);
        }
        let twice = filter_min_urls(&once.matrix, min).unwrap();
        prop_assert_eq!(&twice.matrix, &once.matrix);
        let survivors: Vec<usize> = (0..x.n_guardians()).filter(|&g| x.row(g).len() >= min).collect();
        prop_assert_eq!(&once.guardians, &survivors);
    }

    #[test]
    fn interactions_roundtrip(pairs in prop::collection::vec((0usize..6, 0usize..8, prop::option::of(0i64..1_000_000)), 1..40), jsonl in any::<bool>()) {
        let guardians = IdMap::from_ids((0..6).map(|i| format!("g{i}")));
        let urls = IdMap::from_ids((0..8).map(|j| format!("https://x.example/{j}")));
        let events = pairs.iter().map(|&(g, u, ts)| Interaction { guardian: g, url: u, ts }).collect();
        let ds = Dataset::from_events(guardians, urls, events).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let format = if jsonl { InteractionFormat::Jsonl } else { InteractionFormat::Tsv };
        let path = dir.path().join("x");
        save_interactions(&ds, &path, format).unwrap();
        let back = load_interactions(&path, format).unwrap();
        let ids = |d: &Dataset| d.matrix.iter().map(|(g, u)| (d.guardians.id(g).to_string(), d.urls.id(u).to_string())).collect::<BTreeSet<_>>();
        prop_assert_eq!(ids(&back), ids(&ds));
        let distinct: BTreeSet<(usize, usize)> = pairs.iter().map(|&(g, u, _)| (g, u)).collect();
        prop_assert_eq!(back.events.len(), distinct.len());
        // A loaded dataset is a fixed point of save + load.
        save_interactions(&back, &path, format).unwrap();
        let again = load_interactions(&path, format).unwrap();
        prop_assert_eq!(again.guardians.ids(), back.guardians.ids());
        prop_assert_eq!(again.urls.ids(), back.urls.ids());
        prop_assert_eq!(&again.matrix, &back.matrix);
        prop_assert_eq!(&again.events, &back.events);
    }

    #[test]
    fn sppmi_shift_is_monotone(x in matrix(10, 8), s in 1u32..6) {
        let c = url_cooccurrence_counts(&x);
        let (Ok(lo), Ok(hi)) = (sppmi(&c, s), sppmi(&c, s + 1)) else { return Ok(()); };
        for i in 0..lo.dim() {
            for j in 0..lo.dim() {
                prop_assert!(hi.get(i, j) <= lo.get(i, j));
                prop_assert_eq!(hi.get(i, j), hi.get(j, i));
                prop_assert_eq!(lo.mask(i, j), lo.get(i, j) > 0.0);
                if hi.mask(i, j) {
                    prop_assert!(lo.mask(i, j));
                }
            }
            prop_assert!(!lo.mask(i, i));
        }
    }

    #[test]
    fn metrics_in_unit_interval_and_recall_monotone((ranked, relevant) in ranking()) {
        let mut prev = 0.0;
        for k in 1..=ranked.len() {
            let r = recall_at_k(&ranked, &relevant, k).unwrap();
            let n = ndcg_at_k(&ranked, &relevant, k).unwrap();
            let a = ap_at_k(&ranked, &relevant, k, ApNormalization::MinRelevantK).unwrap();
            let a2 = ap_at_k(&ranked, &relevant, k, ApNormalization::Relevant).unwrap();
            for v in [r, n, a, a2] {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert!((recall_at_k(&ranked, &relevant, ranked.len()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_is_scale_invariant(rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 3..10), scale in 0.1f64..50.0, k in 1usize..4) {
        let n = rows.len();
        let a = cosine_similarity_matrix(&DocVectors::from_dense(4, rows.clone()), k, n).unwrap();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect();
        let b = cosine_similarity_matrix(&DocVectors::from_dense(4, scaled), k, n).unwrap();
        prop_assert!(a.sim().is_symmetric());
        let (da, db) = (a.sim().to_dense(), b.sim().to_dense());
        for (x, y) in da.iter().zip(db.iter()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cohorts_partition_guardians(x in matrix(40, 6)) {
        let Ok(c) = CohortSpec::default().assign(&x) else { return Ok(()); };
        let mut all: Vec<usize> = c.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..x.n_guardians()).collect::<Vec<_>>());
        let max_cold = c[0].iter().map(|&g| x.row(g).len()).max().unwrap();
        let min_active = c[2].iter().map(|&g| x.row(g).len()).min().unwrap();
        prop_assert!(max_cold <= min_active);
    }
}
