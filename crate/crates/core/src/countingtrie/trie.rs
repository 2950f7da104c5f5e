use crate::candidates::CandidateSet;
use crate::corpus::{SuffixIndex, Symbol};

pub const ROOT: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrieNode {
    pub parent: Option<usize>,
    pub symbol: Symbol,
    pub depth: usize,
    /// `(symbol, child)` sorted by symbol.
    pub children: Vec<(Symbol, usize)>,
    /// Exact `count_Δ` of the node's string (construction time only).
    pub count: u64,
}

/// Trie over a set of strings with the exact count of every node.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTrie {
    nodes: Vec<TrieNode>,
}

impl Default for CandidateTrie {
    fn default() -> Self {
        Self::new()
    }
}

impl CandidateTrie {
    /// A trie holding only the root.
    pub fn new() -> Self {
        Self {
            nodes: vec![TrieNode {
                parent: None,
                symbol: 0,
                depth: 0,
                children: Vec::new(),
                count: 0,
            }],
        }
    }

    /// Inserts `s` and returns the node spelling it.
    pub fn insert(&mut self, s: &[Symbol]) -> usize {
        let mut v = ROOT;
        for &c in s {
            v = match self.nodes[v].children.binary_search_by_key(&c, |&(x, _)| x) {
                Ok(i) => self.nodes[v].children[i].1,
                Err(i) => {
                    let id = self.nodes.len();
                    let depth = self.nodes[v].depth + 1;
                    self.nodes.push(TrieNode {
                        parent: Some(v),
                        symbol: c,
                        depth,
                        children: Vec::new(),
                        count: 0,
                    });
                    self.nodes[v].children.insert(i, (c, id));
                    id
                }
            };
        }
        v
    }

    /// Trie of every candidate of every length, with exact capped counts.
    pub fn from_candidates(c: &CandidateSet, idx: &SuffixIndex, cap: usize) -> Self {
        let mut t = Self::new();
        c.for_each(idx, |cand| {
            t.insert(&cand.symbols);
        });
        t.fill_counts(idx, cap);
        t
    }

    pub fn from_strings<S: AsRef<[Symbol]>>(strings: &[S], idx: &SuffixIndex, cap: usize) -> Self {
        let mut t = Self::new();
        for s in strings {
            t.insert(s.as_ref());
        }
        t.fill_counts(idx, cap);
        t
    }

    /// Sets every node's count from the index.
    pub fn fill_counts(&mut self, idx: &SuffixIndex, cap: usize) {
        let mut stack = vec![(ROOT, Vec::new())];
        while let Some((v, s)) = stack.pop() {
            self.nodes[v].count = idx.count(&s, cap);
            for &(c, u) in &self.nodes[v].children {
                let mut t = s.clone();
                t.push(c);
                stack.push((u, t));
            }
        }
    }

    /// Overrides the counts, e.g. with values from another oracle.
    pub fn set_counts(&mut self, counts: &[u64]) {
        assert_eq!(counts.len(), self.nodes.len());
        for (n, &c) in self.nodes.iter_mut().zip(counts) {
            n.count = c;
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn node(&self, v: usize) -> &TrieNode {
        &self.nodes[v]
    }

    pub fn nodes(&self) -> &[TrieNode] {
        &self.nodes
    }

    pub fn child(&self, v: usize, c: Symbol) -> Option<usize> {
        let ch = &self.nodes[v].children;
        ch.binary_search_by_key(&c, |&(x, _)| x).ok().map(|i| ch[i].1)
    }

    pub fn find(&self, s: &[Symbol]) -> Option<usize> {
        s.iter().try_fold(ROOT, |v, &c| self.child(v, c))
    }

    /// The string spelled by `v`.
    pub fn string(&self, mut v: usize) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(self.nodes[v].depth);
        while let Some(p) = self.nodes[v].parent {
            out.push(self.nodes[v].symbol);
            v = p;
        }
        out.reverse();
        out
    }

    pub fn counts(&self) -> Vec<u64> {
        self.nodes.iter().map(|n| n.count).collect()
    }

    /// Child lists in symbol order, for [`super::decompose`].
    pub fn child_lists(&self) -> Vec<Vec<usize>> {
        self.nodes
            .iter()
            .map(|n| n.children.iter().map(|&(_, u)| u).collect())
            .collect()
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        self.nodes.iter().map(|n| n.parent).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Alphabet, Database};

    #[test]
    fn two_strings_over_ab() {
        let d = Database::new(vec![vec![0, 1]], Alphabet::new(2).unwrap(), None).unwrap();
        let idx = SuffixIndex::build(&d);
        let t = CandidateTrie::from_strings(&[vec![0u8], vec![0, 1]], &idx, 2);
        assert_eq!(t.len(), 3);
        assert_eq!(t.node(t.find(&[0]).unwrap()).count, 1);
        assert_eq!(t.node(t.find(&[0, 1]).unwrap()).count, 1);
        assert_eq!(t.node(ROOT).count, 2);
        assert_eq!(t.string(t.find(&[0, 1]).unwrap()), vec![0, 1]);
    }

    #[test]
    fn empty_and_shared_prefixes() {
        let t = CandidateTrie::new();
        assert!(t.is_empty());
        let mut t = CandidateTrie::new();
        for s in [&[1u8, 2, 3][..], &[1, 2], &[1, 3], &[0]] {
            t.insert(s);
        }
        // Distinct non-empty prefixes: 1, 12, 123, 13, 0.
        assert_eq!(t.len(), 6);
        let kids: Vec<Symbol> = t.node(ROOT).children.iter().map(|c| c.0).collect();
        assert_eq!(kids, vec![0, 1]);
    }
}
