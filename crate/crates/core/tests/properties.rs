mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use tastenet_core::dataset::{balance_sparsity, filter_dataset, load_ratings, save_ratings, z_normalize};
use tastenet_core::homophily::{group_baselines, homophily_index};
use tastenet_core::network::build_potential_network;
use tastenet_core::recommender::{choose, form_committee, predict_utility, Choice, KnnPredictor, Predictor};
use tastenet_core::similarity::{amplify_weight, build_similarity_matrix};
use tastenet_core::{AdviserPool, KnnConfig, NormalizedRatings, Provenance, RatingMatrix, SimilarityMatrix};

/// Sparse matrices with small integer ratings (so ties happen) and two
/// groups.
fn sparse_matrix() -> impl Strategy<Value = RatingMatrix> {
    (3usize..9, 4usize..14).prop_flat_map(|(n, m)| {
        proptest::collection::vec(proptest::collection::vec(proptest::option::weighted(0.7, 1u8..6), m), n).prop_map(
            move |cells| {
                let rows = cells
                    .iter()
                    .map(|row| row.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, f64::from(v)))).collect())
                    .collect();
                RatingMatrix::from_parts(
                    (0..n).map(|r| format!("r{r}")).collect(),
                    (0..n).map(|r| if r % 3 == 0 { "x".into() } else { "y".into() }).collect(),
                    (0..m).map(|i| format!("i{i}")).collect(),
                    rows,
                )
                .unwrap()
            },
        )
    })
}

/// Dense matrices with continuous ratings.
fn dense_matrix() -> impl Strategy<Value = RatingMatrix> {
    (3usize..8, 7usize..12).prop_flat_map(|(n, m)| {
        proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, m), n).prop_map(move |cells| {
            RatingMatrix::from_parts(
                (0..n).map(|r| format!("r{r}")).collect(),
                (0..n).map(|r| if r < 2 { "x".into() } else { "y".into() }).collect(),
                (0..m).map(|i| format!("i{i}")).collect(),
                cells.iter().map(|row| row.iter().copied().enumerate().collect()).collect(),
            )
            .unwrap()
        })
    })
}

fn triples(m: &RatingMatrix) -> BTreeMap<(String, String), u64> {
    m.records()
        .map(|r| ((r.rater_id, r.item_id), r.rating.to_bits()))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_identity(m in sparse_matrix()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        save_ratings(&m, &path).unwrap();
        let back = load_ratings(&path, None).unwrap();
        prop_assert_eq!(triples(&back), triples(&m));
    }

    #[test]
    fn z_scores_keep_rank_and_scale(m in sparse_matrix()) {
        let z = z_normalize(&m);
        for r in 0..z.n_raters() {
            let src = m.rater_index(z.rater_id(r)).unwrap();
            let row = z.row(r);
            let n = row.len() as f64;
            let mean = row.iter().map(|p| p.1).sum::<f64>() / n;
            let sd = (row.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-9);
            for &(a, za) in row {
                for &(b, zb) in row {
                    let (ua, ub) = (m.rating(src, a).unwrap(), m.rating(src, b).unwrap());
                    prop_assert_eq!(ua.partial_cmp(&ub), za.partial_cmp(&zb));
                }
            }
        }
    }

    #[test]
    fn balancing_only_removes_from_the_group(m in sparse_matrix(), seed in any::<u64>()) {
        let g = m.group_index("x").unwrap();
        let least = m.raters_in_group(g).iter().map(|&r| m.rating_count(r)).min().unwrap();
        let target = least as f64 / m.n_items() as f64;
        let mut rng = tastenet_core::rng::stream(seed, &[]);
        let out = balance_sparsity(&m, "x", target, &mut rng).unwrap();
        let (before, after) = (triples(&m), triples(&out));
        for (k, v) in &after {
            prop_assert_eq!(before.get(k), Some(v));
        }
        for r in 0..m.n_raters() {
            if m.group_of(r) != g {
                prop_assert_eq!(out.row(r), m.row(r));
            } else {
                prop_assert_eq!(out.rating_count(r), least);
            }
        }
    }

    // One item pass then one rater pass is idempotent whenever the rater
    // pass leaves every surviving item at or above the item threshold.
    #[test]
    fn filtering_twice_changes_nothing(m in sparse_matrix(), min_item in 0usize..4, min_rater in 0usize..6) {
        let Ok(once) = filter_dataset(&m, min_item, min_rater, &["x".to_string()]) else { return Ok(()); };
        prop_assume!(once.item_counts().iter().all(|&c| c >= min_item));
        let twice = filter_dataset(&once, min_item, min_rater, &["x".to_string()]).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn observed_entries_are_symmetric(m in sparse_matrix(), threshold in 0usize..4) {
        let r = z_normalize(&m);
        let s = build_similarity_matrix(&r, threshold);
        for i in 0..r.n_raters() {
            let observed: Vec<f64> = s.observed_row(i).map(|(_, w)| w).collect();
            for j in 0..r.n_raters() {
                if i == j {
                    prop_assert_eq!(s.provenance(i, j), Provenance::Undefined);
                    continue;
                }
                prop_assert_eq!(s.overlap(i, j), s.overlap(j, i));
                match s.provenance(i, j) {
                    Provenance::Observed => {
                        prop_assert_eq!(s.provenance(j, i), Provenance::Observed);
                        prop_assert_eq!(s.weight(i, j), s.weight(j, i));
                    }
                    Provenance::Fallback => {
                        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
                        prop_assert!((s.weight(i, j).unwrap() - mean).abs() < 1e-12);
                    }
                    Provenance::Undefined => prop_assert!(observed.is_empty()),
                }
            }
        }
    }

    #[test]
    fn amplify_preserves_order(a in 0.0f64..=1.0, b in 0.0f64..=1.0, rho in 0.01f64..4.0) {
        if a < b {
            prop_assert!(amplify_weight(a, rho) <= amplify_weight(b, rho));
        }
        prop_assert_eq!(amplify_weight(a, 0.0), 1.0);
        prop_assert_eq!(amplify_weight(-a - 1e-9, rho), 0.0);
    }

    #[test]
    fn committee_invariants(m in sparse_matrix(), k in 1usize..6, rho in prop::sample::select(vec![0.0, 0.5, 1.0, 2.0])) {
        let r = z_normalize(&m);
        let s = build_similarity_matrix(&r, 1);
        let cfg = KnnConfig::new(k, rho, AdviserPool::All);
        for t in 0..r.n_raters() {
            for item in 0..r.n_items() {
                let c = form_committee(&s, &r, t, item, &cfg).unwrap();
                prop_assert!(c.members.len() <= k);
                for w in c.members.windows(2) {
                    prop_assert!(w[0].raw_weight > w[1].raw_weight
                        || (w[0].raw_weight == w[1].raw_weight && w[0].adviser < w[1].adviser));
                }
                for x in &c.members {
                    prop_assert!(x.adviser != t && r.has_rating(x.adviser, item));
                    prop_assert!((0.0..=1.0).contains(&x.share));
                }
                if !c.members.is_empty() {
                    let total: f64 = c.members.iter().map(|x| x.share).sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                }
                let p = predict_utility(&c, &r, rho);
                prop_assert_eq!(p.value.is_some(), !c.members.is_empty());
                if rho == 0.0 && !c.members.is_empty() && c.members.iter().all(|x| x.raw_weight >= 0.0) {
                    let mean = c.members.iter().map(|x| r.rating(x.adviser, item).unwrap()).sum::<f64>()
                        / c.members.len() as f64;
                    prop_assert!((p.value.unwrap() - mean).abs() < 1e-12);
                    let first = c.members[0].share;
                    prop_assert!(c.members.iter().all(|x| x.share == first));
                }
            }
        }
    }

    #[test]
    fn idle_pool_member_changes_nothing(m in sparse_matrix(), k in 1usize..5, rho in 0.0f64..2.0) {
        let r = z_normalize(&m);
        let n = r.n_raters();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n).map(|i| r.row(i).to_vec()).collect();
        rows.push(Vec::new());
        let mut ids = r.rater_ids().to_vec();
        ids.push("idle".into());
        let mut groups: Vec<String> = (0..n).map(|i| r.group_name_of(i).to_string()).collect();
        groups.push("x".into());
        let bigger = NormalizedRatings::from_standardized(
            RatingMatrix::from_parts(ids, groups, r.item_ids().to_vec(), rows).unwrap(),
        );
        let cfg = KnnConfig::new(k, rho, AdviserPool::All);
        let (s1, s2) = (build_similarity_matrix(&r, 1), build_similarity_matrix(&bigger, 1));
        let (p1, p2) = (KnnPredictor::new(&s1, &r, &cfg).unwrap(), KnnPredictor::new(&s2, &bigger, &cfg).unwrap());
        for t in 0..n {
            for item in 0..r.n_items() {
                prop_assert_eq!(p1.predict(t, item), p2.predict(t, item));
            }
        }
    }

    #[test]
    fn selection_depends_only_on_rank(
        ws in proptest::collection::vec(0.0f64..=1.0, 36),
        k in 1usize..6,
        power in 0.2f64..5.0,
    ) {
        let n = 6;
        let rows: Vec<(&str, &str, Vec<Option<f64>>)> =
            ["a", "b", "c", "d", "e", "f"].iter().map(|id| (*id, "g", vec![Some(1.0)])).collect();
        let r = NormalizedRatings::from_standardized(common::matrix(&rows));
        let raw: Vec<Option<f64>> = ws.iter().map(|&w| Some(w)).collect();
        let bent: Vec<Option<f64>> = ws.iter().map(|&w| Some(w.powf(power))).collect();
        let (s1, s2) = (SimilarityMatrix::from_weights(n, &raw).unwrap(), SimilarityMatrix::from_weights(n, &bent).unwrap());
        let cfg = KnnConfig::new(k, 1.0, AdviserPool::All);
        for t in 0..n {
            let a: Vec<usize> = form_committee(&s1, &r, t, 0, &cfg).unwrap().members.iter().map(|x| x.adviser).collect();
            let b: Vec<usize> = form_committee(&s2, &r, t, 0, &cfg).unwrap().members.iter().map(|x| x.adviser).collect();
            // a strictly monotone map can still merge weights that round together
            let distinct = {
                let mut v: Vec<u64> = ws[t * n..(t + 1) * n].iter().map(|w| w.powf(power).to_bits()).collect();
                v.sort_unstable();
                v.windows(2).all(|p| p[0] != p[1])
            };
            if distinct {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn homophily_within_unit_interval(m in dense_matrix(), k in 1usize..5, rho in 0.0f64..2.0) {
        let r = z_normalize(&m);
        let s = build_similarity_matrix(&r, 5);
        let net = build_potential_network(&s, &r, &KnnConfig::new(k, rho, AdviserPool::All)).unwrap();
        for g in r.group_names() {
            if let Ok(h) = homophily_index(&net, g) {
                prop_assert!((0.0..=1.0).contains(&h));
            }
        }
        let b = group_baselines(&r).unwrap();
        prop_assert!((b.population.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!((b.ratings.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relabeling_groups_permutes_homophily(m in dense_matrix(), k in 1usize..4) {
        let r = z_normalize(&m);
        let renamed = RatingMatrix::from_parts(
            r.rater_ids().to_vec(),
            (0..r.n_raters()).map(|i| if r.group_name_of(i) == "x" { "second".into() } else { "first".into() }).collect(),
            r.item_ids().to_vec(),
            (0..r.n_raters()).map(|i| r.row(i).to_vec()).collect(),
        ).unwrap();
        let r2 = NormalizedRatings::from_standardized(renamed);
        let cfg = KnnConfig::new(k, 1.0, AdviserPool::All);
        let n1 = build_potential_network(&build_similarity_matrix(&r, 5), &r, &cfg).unwrap();
        let n2 = build_potential_network(&build_similarity_matrix(&r2, 5), &r2, &cfg).unwrap();
        prop_assert_eq!(homophily_index(&n1, "x").ok(), homophily_index(&n2, "second").ok());
        prop_assert_eq!(homophily_index(&n1, "y").ok(), homophily_index(&n2, "first").ok());
    }
}

#[test]
fn single_pass_filter_is_not_a_fixpoint() {
    // dropping r2 (too few ratings) leaves item i1 with one review
    let m = common::matrix(&[
        ("r0", "y", vec![Some(1.0), Some(2.0), Some(3.0)]),
        ("r1", "y", vec![Some(2.0), None, Some(1.0)]),
        ("r2", "y", vec![None, Some(4.0), None]),
    ]);
    let once = filter_dataset(&m, 2, 2, &[]).unwrap();
    assert_eq!(once.n_items(), 3);
    assert_eq!(once.n_raters(), 2);
    let twice = filter_dataset(&once, 2, 2, &[]).unwrap();
    assert_eq!(twice.n_items(), 2);
}

#[test]
fn choice_has_no_positional_bias() {
    let mut rng = tastenet_core::rng::stream(7, &[]);
    let cases = [(Some(0.3), Some(0.3)), (None, Some(1.0)), (None, None)];
    for (a, b) in cases {
        let mut first = 0usize;
        let n = 20_000;
        for _ in 0..n {
            let forward = choose(a, b, &mut rng) == Choice::A;
            let swapped = choose(b, a, &mut rng) == Choice::B;
            first += usize::from(forward) + usize::from(swapped);
        }
        let frac = first as f64 / (2 * n) as f64;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }
    for _ in 0..100 {
        assert_eq!(choose(Some(0.7), Some(0.2), &mut rng), Choice::A);
        assert_eq!(choose(Some(0.2), Some(0.7), &mut rng), Choice::B);
    }
}
