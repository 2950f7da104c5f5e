mod common;

use std::collections::BTreeSet;

use dpcount::candidates::{build_candidates, CandidateOptions};
use dpcount::corpus::{count, count_capped, SuffixIndex, Symbol};
use dpcount::countingtrie::{
    build_private_trie, decompose, format, CandidateTrie, PrivateCountTrie, TrieOptions, ROOT,
};
use dpcount::mechanisms::{floor_log2, NoiseSource, PrivacyBudget};
use dpcount::qgrams::{build_qgrams, QGramOptions, QGramStructure};
use dpcount::treecount::{colored_counts, ColoredDataset, Tree};
use proptest::prelude::*;

use common::*;

fn corpus() -> impl Strategy<Value = (Vec<Vec<Symbol>>, usize, usize)> {
    (2usize..=4, 1usize..=12).prop_flat_map(|(sigma, ell)| {
        let doc = prop::collection::vec(0..sigma as Symbol, 1..=ell);
        (prop::collection::vec(doc, 1..=6), Just(sigma), Just(ell))
    })
}

fn pattern(sigma: usize, max: usize) -> impl Strategy<Value = Vec<Symbol>> {
    prop::collection::vec(0..sigma as Symbol, 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn capped_count_is_monotone_in_cap(text in pattern(3, 20), p in pattern(3, 4), a in 1usize..6, b in 1usize..6) {
        let (lo, hi) = (a.min(b), a.max(b));
        let c_lo = count_capped(&p, &text, lo).unwrap();
        let c_hi = count_capped(&p, &text, hi).unwrap();
        prop_assert!(c_lo <= c_hi);
        prop_assert!(c_hi <= count(&p, &text));
    }

    #[test]
    fn extending_a_pattern_never_raises_its_count((docs, sigma, ell) in corpus(), cap in 1usize..4) {
        let db = database(&docs, sigma, ell);
        let idx = SuffixIndex::build(&db);
        for (p, c) in substring_counts(&docs, cap) {
            for a in 0..sigma as Symbol {
                let mut longer = p.clone();
                longer.push(a);
                prop_assert!(idx.count(&longer, cap) <= c);
                longer.rotate_right(1);
                prop_assert!(idx.count(&longer, cap) <= c);
            }
        }
    }

    #[test]
    fn counts_of_one_length_sum_to_the_windows(text in pattern(2, 10), m in 1usize..5) {
        let total: usize = all_strings(2, m)
            .iter()
            .filter(|s| s.len() == m)
            .map(|s| count(s, &text))
            .sum();
        prop_assert_eq!(total, (text.len() + 1).saturating_sub(m));
    }

    #[test]
    fn index_matches_naive_counts((docs, sigma, ell) in corpus(), cap in 1usize..4, probes in prop::collection::vec(pattern(4, 14), 1..20)) {
        let db = database(&docs, sigma, ell);
        let idx = SuffixIndex::build(&db);
        for p in probes.iter().filter(|p| p.iter().all(|&s| (s as usize) < sigma)) {
            prop_assert_eq!(idx.count(p, cap), naive_count_db(p, &docs, cap));
            prop_assert_eq!(db.count_db(p, cap).unwrap(), naive_count_db(p, &docs, cap));
        }
    }

    #[test]
    fn lce_matches_direct_comparison((docs, sigma, ell) in corpus(), i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>()) {
        let db = database(&docs, sigma, ell);
        let idx = SuffixIndex::build(&db);
        let (i, j) = (i.index(idx.text_len()), j.index(idx.text_len()));
        let (li, lj) = (idx.location(i), idx.location(j));
        let a = &docs[li.doc][li.offset..];
        let b = &docs[lj.doc][lj.offset..];
        let expect = if i == j { a.len() } else { a.iter().zip(b).take_while(|(x, y)| x == y).count() };
        prop_assert_eq!(idx.lce(i, j), expect);
    }

    #[test]
    fn zero_noise_candidates_cover_frequent_strings((docs, sigma, ell) in corpus(), tau in 1u64..4) {
        let db = database(&docs, sigma, ell);
        let idx = SuffixIndex::build(&db);
        let budget = PrivacyBudget::pure(1.0, 0.1, ell).unwrap();
        let opts = CandidateOptions { threshold: Some(tau as f64) };
        let set = build_candidates(&db, &idx, &budget, &NoiseSource::zero_noise(), &opts)
            .unwrap()
            .ready()
            .unwrap();
        for (p, c) in substring_counts(&docs, ell) {
            if c >= tau {
                prop_assert!(set.contains(&p), "frequent {:?} missing", p);
            }
        }
        for k in 0..=floor_log2(ell) as usize {
            for cand in set.pow_set(k) {
                prop_assert!(naive_count_db(&cand.symbols, &docs, ell) >= tau);
            }
        }
    }

    #[test]
    fn heavy_paths_partition_the_trie(strings in prop::collection::vec(pattern(3, 10), 1..40)) {
        let mut trie = CandidateTrie::new();
        for s in &strings {
            trie.insert(s);
        }
        let children = trie.child_lists();
        let hpd = decompose(&children, ROOT);
        let mut seen = BTreeSet::new();
        for path in hpd.paths() {
            for w in path.windows(2) {
                prop_assert_eq!(hpd.heavy_child(w[0]), Some(w[1]));
            }
            for &v in path {
                prop_assert!(seen.insert(v));
            }
        }
        prop_assert_eq!(seen.len(), trie.len());
        let sizes = subtree_sizes(&children, ROOT);
        for (v, &size) in sizes.iter().enumerate() {
            prop_assert_eq!(hpd.subtree_size(v), size);
            prop_assert!((1usize << hpd.light_depth(v)) <= trie.len());
        }
    }

    #[test]
    fn difference_sequences_reconstruct_counts(strings in prop::collection::vec(pattern(3, 8), 1..30), seed in any::<u64>()) {
        let mut trie = CandidateTrie::new();
        for s in &strings {
            trie.insert(s);
        }
        let hpd = decompose(&trie.child_lists(), ROOT);
        let counts: Vec<i64> = (0..trie.len() as u64)
            .map(|v| (v.wrapping_mul(seed | 1) % 97) as i64)
            .collect();
        let diffs = hpd.difference_sequences(&counts);
        for (path, d) in hpd.paths().iter().zip(&diffs) {
            let mut acc = counts[path[0]];
            for (k, &v) in path.iter().enumerate().skip(1) {
                acc += d[k - 1];
                prop_assert_eq!(acc, counts[v]);
            }
        }
    }

    #[test]
    fn queries_are_total_and_mining_is_ordered((docs, sigma, ell) in corpus(), seed in any::<u64>(), probes in prop::collection::vec(pattern(4, 20), 1..20)) {
        let db = database(&docs, sigma, ell);
        let budget = PrivacyBudget::pure(1.0, 0.1, ell).unwrap();
        let opts = TrieOptions {
            candidate_threshold: Some(1.0),
            prune_alpha: Some(0.5),
            ..TrieOptions::default()
        };
        let trie = build_private_trie(&db, &budget, &NoiseSource::with_zero_noise(seed, true), &opts)
            .unwrap()
            .ready()
            .unwrap();
        for p in probes.iter().filter(|p| p.iter().all(|&s| (s as usize) < sigma)) {
            let v = trie.query(p).unwrap();
            prop_assert!(v.is_finite());
        }
        let mined = trie.mine(1.0);
        for w in mined.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
        let expect: BTreeSet<Vec<Symbol>> = substring_counts(&docs, ell).into_keys().collect();
        let got: BTreeSet<Vec<Symbol>> = mined.into_iter().map(|e| e.0).collect();
        prop_assert_eq!(got, expect);
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..300)) {
        let _ = format::decode(&bytes);
        let mut framed = format::MAGIC.to_vec();
        framed.extend_from_slice(&bytes);
        prop_assert!(PrivateCountTrie::from_bytes(&framed).is_err());
    }

    #[test]
    fn zero_noise_qgrams_are_exact((docs, sigma, ell) in corpus(), q in 1usize..6) {
        prop_assume!(q <= ell);
        let db = database(&docs, sigma, ell);
        let opts = QGramOptions { alpha: Some(0.5), final_alpha: Some(0.5), noise: None };
        for budget in [
            PrivacyBudget::pure(1.0, 0.1, ell).unwrap(),
            PrivacyBudget::new(0.5, 1e-6, 0.1, 1).unwrap(),
        ] {
            let s = build_qgrams(&db, q, &budget, &NoiseSource::zero_noise(), &opts)
                .unwrap()
                .ready()
                .unwrap();
            let expect: Vec<(Vec<Symbol>, f64)> = substrings_of_length(&docs, q, budget.cap)
                .into_iter()
                .map(|(p, c)| (p, c as f64))
                .collect();
            let mut got = s.entries();
            got.sort_by(|a, b| a.0.cmp(&b.0));
            prop_assert_eq!(&got, &expect);
            let loaded = QGramStructure::from_bytes(&s.to_bytes()).unwrap();
            for (p, c) in &expect {
                prop_assert_eq!(loaded.query(p).unwrap(), *c);
            }
        }
    }

    #[test]
    fn colored_counts_match_set_union(parents in prop::collection::vec(any::<prop::sample::Index>(), 0..60), items in prop::collection::vec((any::<prop::sample::Index>(), 0u64..8), 0..40)) {
        let mut p = vec![None];
        for (i, ix) in parents.iter().enumerate() {
            p.push(Some(ix.index(i + 1)));
        }
        let tree = Tree::from_parents(&p).unwrap();
        let leaves = tree.leaves();
        let data = ColoredDataset {
            items: items.iter().map(|(ix, c)| (leaves[ix.index(leaves.len())], *c)).collect(),
        };
        let counts = colored_counts(&tree, &data).unwrap();
        for (v, &count) in counts.iter().enumerate() {
            let mut colors = BTreeSet::new();
            for &(leaf, c) in &data.items {
                let mut u = Some(leaf);
                while let Some(x) = u {
                    if x == v {
                        colors.insert(c);
                    }
                    u = tree.parent(x);
                }
            }
            prop_assert_eq!(count, colors.len() as u64);
        }
    }
}
