use std::cmp::Ordering;
use std::ops::Range;

use super::{Database, Symbol};

/// Position of a substring occurrence inside the database.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Location {
    pub doc: usize,
    pub offset: usize,
}

/// A distinct substring found by [`SuffixIndex::distinct_substrings`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubstringStat {
    /// Text position of one occurrence (leftmost in suffix order).
    pub pos: usize,
    pub len: usize,
    /// Capped database count of the substring.
    pub count: u64,
}

/// Exact substring index over `S₁#₁S₂#₂…Sₙ#ₙ`.
///
/// Separators `#ᵢ` are encoded as `|Σ| + i`, so every separator is unique and
/// no pattern over the alphabet can match across a document boundary.
#[derive(Debug, Clone)]
pub struct SuffixIndex {
    text: Vec<u32>,
    doc_of: Vec<u32>,
    doc_start: Vec<usize>,
    /// Position of the separator closing the document that contains `pos`.
    doc_end: Vec<usize>,
    sa: Vec<u32>,
    rank: Vec<u32>,
    lcp: Vec<u32>,
    rmq: SparseMin,
    alphabet_size: usize,
    max_doc_len: usize,
}

impl SuffixIndex {
    pub fn build(db: &Database) -> Self {
        let sigma = db.alphabet().size() as u32;
        let mut text = Vec::with_capacity(db.total_len() + db.n());
        let mut doc_of = Vec::with_capacity(text.capacity());
        let mut doc_start = Vec::with_capacity(db.n());
        let mut doc_end = Vec::with_capacity(text.capacity());
        for (i, d) in db.docs().iter().enumerate() {
            doc_start.push(text.len());
            let end = text.len() + d.len();
            text.extend(d.symbols().iter().map(|&s| s as u32));
            text.push(sigma + i as u32);
            doc_of.extend(std::iter::repeat_n(i as u32, d.len() + 1));
            doc_end.extend(std::iter::repeat_n(end, d.len() + 1));
        }
        let sa = suffix_array(&text);
        let mut rank = vec![0u32; text.len()];
        for (r, &p) in sa.iter().enumerate() {
            rank[p as usize] = r as u32;
        }
        let lcp = kasai(&text, &sa, &rank);
        let rmq = SparseMin::new(&lcp);
        Self {
            text,
            doc_of,
            doc_start,
            doc_end,
            sa,
            rank,
            lcp,
            rmq,
            alphabet_size: sigma as usize,
            max_doc_len: db.docs().iter().map(|d| d.len()).max().unwrap_or(0),
        }
    }

    pub fn text_len(&self) -> usize {
        self.text.len()
    }

    pub fn n_docs(&self) -> usize {
        self.doc_start.len()
    }

    pub fn location(&self, pos: usize) -> Location {
        let doc = self.doc_of[pos] as usize;
        Location {
            doc,
            offset: pos - self.doc_start[doc],
        }
    }

    /// Symbols `pos..pos+len`; panics if the span crosses a separator.
    pub fn substring(&self, pos: usize, len: usize) -> Vec<Symbol> {
        assert!(pos + len <= self.doc_end[pos], "span crosses a document boundary");
        self.text[pos..pos + len].iter().map(|&c| c as Symbol).collect()
    }

    fn cmp_suffix(&self, pos: usize, pattern: &[Symbol]) -> Ordering {
        let end = (pos + pattern.len()).min(self.text.len());
        let suffix = &self.text[pos..end];
        for (a, &b) in suffix.iter().zip(pattern) {
            match a.cmp(&(b as u32)) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        suffix.len().cmp(&pattern.len())
    }

    /// Suffix-array interval of suffixes that start with `pattern`.
    pub fn locate(&self, pattern: &[Symbol]) -> Range<usize> {
        if pattern.iter().any(|&s| s as usize >= self.alphabet_size) {
            return 0..0;
        }
        let lo = self
            .sa
            .partition_point(|&p| self.cmp_suffix(p as usize, pattern) == Ordering::Less);
        let hi = self
            .sa
            .partition_point(|&p| self.cmp_suffix(p as usize, pattern) != Ordering::Greater);
        lo..hi
    }

    /// Text positions of all occurrences of a non-empty pattern.
    pub fn occurrences(&self, pattern: &[Symbol]) -> impl Iterator<Item = usize> + '_ {
        let r = if pattern.is_empty() {
            0..0
        } else {
            self.locate(pattern)
        };
        self.sa[r].iter().map(|&p| p as usize)
    }

    /// A witness occurrence of `pattern`, if it occurs.
    pub fn find(&self, pattern: &[Symbol]) -> Option<usize> {
        self.occurrences(pattern).next()
    }

    /// Exact `count_Δ(pattern, D)`.
    pub fn count(&self, pattern: &[Symbol], cap: usize) -> u64 {
        if pattern.is_empty() {
            return (0..self.n_docs())
                .map(|d| {
                    let len = self.doc_end[self.doc_start[d]] - self.doc_start[d];
                    len.min(cap) as u64
                })
                .sum();
        }
        let range = self.locate(pattern);
        if cap >= self.max_doc_len {
            return range.len() as u64;
        }
        let docs: Vec<u32> = self.sa[range].iter().map(|&p| self.doc_of[p as usize]).collect();
        capped_total(docs, cap)
    }

    /// Every distinct substring of length `m` with its capped count, in
    /// lexicographic order.
    pub fn distinct_substrings(&self, m: usize, cap: usize) -> Vec<SubstringStat> {
        let mut out = Vec::new();
        if m == 0 {
            return out;
        }
        let mut group: Vec<u32> = Vec::new();
        let mut group_pos = 0usize;
        let mut running = u32::MAX;
        let flush = |group: &mut Vec<u32>, pos: usize, out: &mut Vec<SubstringStat>| {
            if !group.is_empty() {
                let docs = std::mem::take(group);
                out.push(SubstringStat {
                    pos,
                    len: m,
                    count: capped_total(docs, cap),
                });
            }
        };
        for (idx, &p) in self.sa.iter().enumerate() {
            let p = p as usize;
            if idx > 0 {
                running = running.min(self.lcp[idx]);
            }
            if p + m > self.doc_end[p] {
                continue;
            }
            if group.is_empty() || (running as usize) < m {
                flush(&mut group, group_pos, &mut out);
                group_pos = p;
            }
            group.push(self.doc_of[p]);
            running = u32::MAX;
        }
        flush(&mut group, group_pos, &mut out);
        out
    }

    /// Substring-concatenation query: is `text[a] · text[b]` a substring of
    /// the database? Returns a witness position when it is.
    pub fn concat(&self, a: Range<usize>, b: Range<usize>) -> Option<usize> {
        let mut pattern = self.substring(a.start, a.len());
        pattern.extend(self.substring(b.start, b.len()));
        self.find(&pattern)
    }

    /// Longest common extension of the suffixes starting at text positions
    /// `i` and `j`, never crossing a separator.
    pub fn lce(&self, i: usize, j: usize) -> usize {
        if i == j {
            return self.doc_end[i] - i;
        }
        let (a, b) = {
            let (ri, rj) = (self.rank[i] as usize, self.rank[j] as usize);
            (ri.min(rj), ri.max(rj))
        };
        self.rmq.min(a + 1, b + 1) as usize
    }
}

fn capped_total(mut docs: Vec<u32>, cap: usize) -> u64 {
    docs.sort_unstable();
    let mut total = 0u64;
    let mut i = 0;
    while i < docs.len() {
        let mut j = i;
        while j < docs.len() && docs[j] == docs[i] {
            j += 1;
        }
        total += (j - i).min(cap) as u64;
        i = j;
    }
    total
}

/// Prefix-doubling suffix array. All suffixes are distinct because the text
/// ends with unique separators.
fn suffix_array(text: &[u32]) -> Vec<u32> {
    let n = text.len();
    let mut sa: Vec<u32> = (0..n as u32).collect();
    if n == 0 {
        return sa;
    }
    let mut rank: Vec<u64> = text.iter().map(|&c| c as u64).collect();
    let mut next = vec![0u64; n];
    let mut k = 1usize;
    loop {
        let key = |i: u32, rank: &[u64]| {
            let i = i as usize;
            (rank[i], if i + k < n { rank[i + k] + 1 } else { 0 })
        };
        sa.sort_unstable_by_key(|&i| key(i, &rank));
        next[sa[0] as usize] = 0;
        for w in 1..n {
            let bump = key(sa[w - 1], &rank) != key(sa[w], &rank);
            next[sa[w] as usize] = next[sa[w - 1] as usize] + bump as u64;
        }
        std::mem::swap(&mut rank, &mut next);
        if rank[sa[n - 1] as usize] as usize == n - 1 {
            break;
        }
        k *= 2;
    }
    sa
}

/// `lcp[r]` = LCP of suffixes `sa[r-1]` and `sa[r]`; `lcp[0] = 0`.
fn kasai(text: &[u32], sa: &[u32], rank: &[u32]) -> Vec<u32> {
    let n = text.len();
    let mut lcp = vec![0u32; n];
    let mut h = 0usize;
    for i in 0..n {
        let r = rank[i] as usize;
        if r == 0 {
            h = 0;
            continue;
        }
        let j = sa[r - 1] as usize;
        while i + h < n && j + h < n && text[i + h] == text[j + h] {
            h += 1;
        }
        lcp[r] = h as u32;
        h = h.saturating_sub(1);
    }
    lcp
}

#[derive(Debug, Clone)]
struct SparseMin {
    table: Vec<Vec<u32>>,
}

impl SparseMin {
    fn new(values: &[u32]) -> Self {
        let mut table = vec![values.to_vec()];
        let mut width = 1;
        while 2 * width <= values.len() {
            let prev = table.last().unwrap();
            let row = (0..=values.len() - 2 * width)
                .map(|i| prev[i].min(prev[i + width]))
                .collect();
            table.push(row);
            width *= 2;
        }
        Self { table }
    }

    /// Minimum over `lo..hi` (non-empty).
    fn min(&self, lo: usize, hi: usize) -> u32 {
        let level = (usize::BITS - 1 - (hi - lo).leading_zeros()) as usize;
        let row = &self.table[level];
        row[lo].min(row[hi - (1 << level)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{count, Database};
    use std::collections::BTreeMap;

    fn db(docs: &[&str]) -> Database {
        Database::from_texts(docs, None, None).unwrap()
    }

    fn enc(d: &Database, s: &str) -> Vec<Symbol> {
        d.codec().unwrap().encode(s.as_bytes()).unwrap()
    }

    #[test]
    fn length_one_substrings() {
        let d = db(&["ab", "ba"]);
        let idx = SuffixIndex::build(&d);
        let stats = idx.distinct_substrings(1, d.ell());
        let got: Vec<(Vec<Symbol>, u64)> = stats
            .iter()
            .map(|s| (idx.substring(s.pos, s.len), s.count))
            .collect();
        assert_eq!(got, vec![(enc(&d, "a"), 2), (enc(&d, "b"), 2)]);
    }

    #[test]
    fn concatenation_query() {
        let d = db(&["abba"]);
        let idx = SuffixIndex::build(&d);
        let ab = idx.find(&enc(&d, "ab")).unwrap();
        let ba = idx.find(&enc(&d, "ba")).unwrap();
        let w = idx.concat(ab..ab + 2, ba..ba + 2).unwrap();
        assert_eq!(idx.location(w), Location { doc: 0, offset: 0 });
        assert_eq!(idx.concat(ba..ba + 2, ab..ab + 2), None);
    }

    #[test]
    fn lce_stops_at_mismatch_and_separator() {
        let d = db(&["abx", "acx"]);
        let idx = SuffixIndex::build(&d);
        assert_eq!(idx.lce(0, 4), 1);
        // "x" then separators #0 and #1 differ.
        assert_eq!(idx.lce(2, 6), 1);
        assert_eq!(idx.lce(1, 1), 2);
    }

    #[test]
    fn capped_counts_match_scan() {
        let d = db(&["aaaa", "aab", "b"]);
        let idx = SuffixIndex::build(&d);
        for cap in 1..=4 {
            for p in ["a", "aa", "aaa", "b", "ab", "ba", ""] {
                let pat = enc(&d, p);
                let naive: u64 = d
                    .docs()
                    .iter()
                    .map(|s| count(&pat, s.symbols()).min(cap) as u64)
                    .sum();
                assert_eq!(idx.count(&pat, cap), naive, "pattern {p:?} cap {cap}");
            }
        }
    }

    #[test]
    fn enumeration_matches_scan() {
        let d = db(&["abracadabra", "cadabra", "abba"]);
        let idx = SuffixIndex::build(&d);
        for m in 1..=d.ell() {
            let mut naive: BTreeMap<Vec<Symbol>, u64> = BTreeMap::new();
            for s in d.docs() {
                let mut seen = BTreeMap::new();
                for w in s.symbols().windows(m) {
                    *seen.entry(w.to_vec()).or_insert(0u64) += 1;
                }
                for (k, v) in seen {
                    *naive.entry(k).or_default() += v.min(2);
                }
            }
            let got: BTreeMap<Vec<Symbol>, u64> = idx
                .distinct_substrings(m, 2)
                .into_iter()
                .map(|s| (idx.substring(s.pos, s.len), s.count))
                .collect();
            assert_eq!(got, naive, "m = {m}");
        }
    }
}
