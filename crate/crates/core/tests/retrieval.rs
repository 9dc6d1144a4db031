use std::collections::BTreeMap;

use proptest::prelude::*;
use shapesearch::net::Embedding;
use shapesearch::retrieval::{decode_index, encode_index, topk_accuracy, DescriptorIndex, RetrievalResult};

fn unit(raw: &[f32]) -> Embedding {
    let n = raw.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt().max(1e-3);
    Embedding::new(raw.iter().map(|&x| (x as f64 / n) as f32).collect())
}

fn raw_vector() -> impl Strategy<Value = Vec<f32>> {
    // Small integers make exact score ties common.
    prop::collection::vec((-3i8..=3).prop_map(f32::from), 128).prop_filter("non-zero", |v| v.iter().any(|&x| x != 0.0))
}

fn index_strategy() -> impl Strategy<Value = DescriptorIndex> {
    prop::collection::vec(raw_vector(), 2..12).prop_map(|vs| {
        let entries = vs.iter().enumerate().map(|(i, v)| (format!("obj_{:02}", (i * 7) % 13), unit(v))).collect();
        DescriptorIndex::new(entries, None).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Re-sorting by any strictly increasing function of the score, with the
    /// same id tie-break, reproduces the ranking.
    #[test]
    fn ranking_survives_monotone_rescoring(index in index_strategy(), q in raw_vector()) {
        let r = index.rank(&unit(&q), index.len(), "q").unwrap();
        for f in [|s: f64| (3.0 * s).exp(), |s: f64| s * s * s, |s: f64| 2.0 * s - 7.0] {
            let mut resorted: Vec<(String, f64)> = r.ranked.iter().map(|(id, s)| (id.clone(), f(*s))).collect();
            resorted.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            let ids: Vec<&String> = resorted.iter().map(|(id, _)| id).collect();
            prop_assert_eq!(ids, r.ranked.iter().map(|(id, _)| id).collect::<Vec<_>>());
        }
        prop_assert!(r.ranked.windows(2).all(|w| w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)));
        prop_assert!(r.ranked.iter().all(|(_, s)| (-1.0 - 1e-6..=1.0 + 1e-6).contains(s)));
    }

    #[test]
    fn full_ranking_is_a_permutation_and_self_query_wins(index in index_strategy(), pick in any::<prop::sample::Index>()) {
        let (id, e) = &index.entries()[pick.index(index.len())];
        let r = index.rank(e, index.len(), "self").unwrap();
        let mut got: Vec<&str> = r.ranked.iter().map(|(i, _)| i.as_str()).collect();
        got.sort_unstable();
        let mut want: Vec<&str> = index.ids().collect();
        want.sort_unstable();
        prop_assert_eq!(got, want);
        // Another entry may tie with it, but nothing can beat it.
        prop_assert!((r.ranked[0].1 - 1.0).abs() < 1e-6);
        let pos = r.rank_of(id).unwrap();
        prop_assert!((r.ranked[pos - 1].1 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn topk_accuracy_never_drops_as_k_grows(
        index in index_strategy(),
        queries in prop::collection::vec((raw_vector(), any::<prop::sample::Index>()), 1..8),
    ) {
        let ids: Vec<String> = index.ids().map(String::from).collect();
        let mut results = Vec::new();
        let mut truth = BTreeMap::new();
        for (n, (q, t)) in queries.iter().enumerate() {
            let qid = format!("q{n}");
            results.push(index.rank(&unit(q), index.len(), &qid).unwrap());
            truth.insert(qid, ids[t.index(ids.len())].clone());
        }
        let acc: Vec<f64> = (1..=index.len()).map(|k| topk_accuracy(&results, &truth, k).unwrap()).collect();
        prop_assert!(acc.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*acc.last().unwrap(), 1.0);
    }

    #[test]
    fn index_bytes_round_trip(index in index_strategy()) {
        let bytes = encode_index(&index);
        let back = decode_index(&bytes).unwrap();
        prop_assert_eq!(back.entries(), index.entries());
        prop_assert_eq!(encode_index(&back), bytes.clone());
        for cut in [0, 3, bytes.len() / 2, bytes.len() - 1] {
            prop_assert!(decode_index(&bytes[..cut]).is_err());
        }
    }
}

#[test]
fn topk_counts_match_a_hand_example() {
    // Truth at ranks 1, 3 and 7.
    let ids: Vec<String> = (0..8).map(|i| format!("o{i}")).collect();
    let ranked: Vec<(String, f64)> = ids.iter().enumerate().map(|(i, id)| (id.clone(), 1.0 - i as f64 * 0.1)).collect();
    let results: Vec<RetrievalResult> = (0..3)
        .map(|q| RetrievalResult { query: format!("q{q}"), ranked: ranked.clone() })
        .collect();
    let truth: BTreeMap<String, String> =
        [("q0", "o0"), ("q1", "o2"), ("q2", "o6")].iter().map(|(q, o)| (q.to_string(), o.to_string())).collect();
    assert!((topk_accuracy(&results, &truth, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((topk_accuracy(&results, &truth, 5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
}
