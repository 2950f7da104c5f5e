#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dpcount::corpus::{Alphabet, Database, Symbol};
use rand::Rng;

/// Occurrences of `p` in `s` by direct comparison at every offset.
pub fn naive_count(p: &[Symbol], s: &[Symbol]) -> usize {
    if p.is_empty() || p.len() > s.len() {
        return 0;
    }
    (0..=s.len() - p.len()).filter(|&i| &s[i..i + p.len()] == p).count()
}

pub fn naive_count_db(p: &[Symbol], docs: &[Vec<Symbol>], cap: usize) -> u64 {
    docs.iter().map(|d| naive_count(p, d).min(cap) as u64).sum()
}

/// Every distinct non-empty substring of the documents.
pub fn all_substrings(docs: &[Vec<Symbol>]) -> BTreeSet<Vec<Symbol>> {
    let mut out = BTreeSet::new();
    for d in docs {
        for i in 0..d.len() {
            for j in i + 1..=d.len() {
                out.insert(d[i..j].to_vec());
            }
        }
    }
    out
}

/// Capped counts of every distinct non-empty substring, tallied per
/// document by enumerating all `(i, j)` windows.
pub fn substring_counts(docs: &[Vec<Symbol>], cap: usize) -> BTreeMap<Vec<Symbol>, u64> {
    let mut total = BTreeMap::new();
    for d in docs {
        let mut own: BTreeMap<&[Symbol], usize> = BTreeMap::new();
        for i in 0..d.len() {
            for j in i + 1..=d.len() {
                *own.entry(&d[i..j]).or_default() += 1;
            }
        }
        for (s, c) in own {
            *total.entry(s.to_vec()).or_default() += c.min(cap) as u64;
        }
    }
    total
}

/// Distinct substrings of length `m` with their capped counts.
pub fn substrings_of_length(docs: &[Vec<Symbol>], m: usize, cap: usize) -> BTreeMap<Vec<Symbol>, u64> {
    all_substrings(docs)
        .into_iter()
        .filter(|s| s.len() == m)
        .map(|s| {
            let c = naive_count_db(&s, docs, cap);
            (s, c)
        })
        .collect()
}

/// Every string over `0..sigma` of length `1..=max_len`, shortest first.
pub fn all_strings(sigma: usize, max_len: usize) -> Vec<Vec<Symbol>> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<Symbol>> = vec![vec![]];
    for _ in 0..max_len {
        let next: Vec<Vec<Symbol>> = layer
            .iter()
            .flat_map(|s| {
                (0..sigma as Symbol).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

pub fn random_doc<R: Rng>(rng: &mut R, sigma: usize, len: usize) -> Vec<Symbol> {
    (0..len).map(|_| rng.random_range(0..sigma) as Symbol).collect()
}

/// `n` documents of length in `1..=ell` over `0..sigma`.
pub fn random_docs<R: Rng>(rng: &mut R, n: usize, ell: usize, sigma: usize) -> Vec<Vec<Symbol>> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=ell);
            random_doc(rng, sigma, len)
        })
        .collect()
}

pub fn database(docs: &[Vec<Symbol>], sigma: usize, ell: usize) -> Database {
    Database::new(docs.to_vec(), Alphabet::new(sigma).unwrap(), Some(ell)).unwrap()
}

pub fn docs_of(db: &Database) -> Vec<Vec<Symbol>> {
    db.docs().iter().map(|d| d.symbols().to_vec()).collect()
}

/// Subtree sizes of a rooted tree given as child lists.
pub fn subtree_sizes(children: &[Vec<usize>], root: usize) -> Vec<usize> {
    let mut order = vec![root];
    let mut i = 0;
    while i < order.len() {
        order.extend(children[order[i]].iter().copied());
        i += 1;
    }
    let mut size = vec![1usize; children.len()];
    for &v in order.iter().rev() {
        for &c in &children[v] {
            size[v] += size[c];
        }
    }
    size
}

/// One-sample Kolmogorov-Smirnov statistic of `xs` against `cdf`.
pub fn ks_statistic(xs: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `3σ` of a binomial fraction with success probability `p` over `n` trials.
pub fn binomial_slack(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}
