//! Private counting trie: candidate trie, heavy paths, noisy path-root counts,
//! dyadic prefix sums over difference sequences, pruning and queries.

pub mod format;
mod heavy_path;
mod prefix_sums;
mod trie;

pub use heavy_path::{decompose, HeavyPathDecomposition};
pub use prefix_sums::{
    binary_tree_prefix_sums, binary_tree_prefix_sums_gaussian, dyadic_decomposition,
    gaussian_prefix_parameters, gaussian_prefix_sigma, laplace_prefix_parameters,
    laplace_prefix_scale, padded_length, PrefixSums,
};
pub use trie::{CandidateTrie, TrieNode, ROOT};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::candidates::{build_candidates, CandidateOptions, CandidateSet, Noise, SizeAbort};
use crate::corpus::{Database, SuffixIndex, Symbol, TextCodec};
use crate::error::{invalid_input, Error, Result};
use crate::mechanisms::{
    budget_split, ceil_log2, gaussian_max_error, gaussian_sigma, laplace_max_error, BudgetLedger,
    Mode, NoiseSource, PrivacyBudget,
};

pub const ROOT_STREAM: &str = "roots";
pub const PREFIX_STREAM: &str = "prefix-sums";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureKind {
    Substring,
    QGram,
}

/// Parameters and explicit error bounds of a released structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: StructureKind,
    pub mode: Mode,
    pub n: u64,
    pub ell: u64,
    pub sigma: u32,
    pub cap: u64,
    /// Pattern length of q-gram structures, `0` otherwise.
    pub q: u64,
    pub epsilon: f64,
    pub delta: f64,
    pub beta: f64,
    pub seed: u64,
    /// Set when every noise draw was replaced by zero: not private.
    pub zero_noise: bool,
    /// Error bound for every retained pattern.
    pub alpha_total: f64,
    /// Nodes with a noisy count below this value were removed.
    pub prune_threshold: f64,
    pub alpha_candidates: f64,
    pub tau_candidates: f64,
    pub root_bound: f64,
    pub prefix_bound: f64,
    /// Patterns without a stored node have true count below this value.
    pub absent_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyNode {
    pub parent: Option<usize>,
    pub symbol: Symbol,
    pub value: f64,
    children: Vec<(Symbol, usize)>,
}

/// Trie with one released value per node; parents precede children.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyTrie {
    nodes: Vec<NoisyNode>,
}

impl NoisyTrie {
    pub fn root(value: f64) -> Self {
        Self {
            nodes: vec![NoisyNode {
                parent: None,
                symbol: 0,
                value,
                children: Vec::new(),
            }],
        }
    }

    /// Appends a child of `parent` and returns its id.
    pub fn push(&mut self, parent: usize, symbol: Symbol, value: f64) -> Result<usize> {
        let id = self.nodes.len();
        let ch = &mut self.nodes[parent].children;
        match ch.binary_search_by_key(&symbol, |&(s, _)| s) {
            Ok(_) => return Err(Error::Format(format!("duplicate child {symbol} under node {parent}"))),
            Err(i) => ch.insert(i, (symbol, id)),
        }
        self.nodes.push(NoisyNode {
            parent: Some(parent),
            symbol,
            value,
            children: Vec::new(),
        });
        Ok(id)
    }

    /// Inserts `s`, creating interior nodes with value `fill`; sets the value
    /// of the final node.
    pub fn insert(&mut self, s: &[Symbol], value: f64, fill: f64) -> usize {
        let mut v = 0;
        for &c in s {
            v = match self.child(v, c) {
                Some(u) => u,
                None => self.push(v, c, fill).expect("fresh child"),
            };
        }
        self.nodes[v].value = value;
        v
    }

    /// Rebuilds a trie from `(parent, symbol, value)` records.
    pub fn from_table(table: &[(Option<usize>, Symbol, f64)]) -> Result<Self> {
        let Some(&(None, _, v0)) = table.first() else {
            return Err(Error::Format("first node must be the root".into()));
        };
        let mut t = Self::root(v0);
        for (i, &(parent, symbol, value)) in table.iter().enumerate().skip(1) {
            match parent {
                Some(p) if p < i => {
                    t.push(p, symbol, value)?;
                }
                _ => return Err(Error::Format(format!("node {i} has invalid parent"))),
            }
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    pub fn nodes(&self) -> &[NoisyNode] {
        &self.nodes
    }

    pub fn value(&self, v: usize) -> f64 {
        self.nodes[v].value
    }

    pub fn child(&self, v: usize, c: Symbol) -> Option<usize> {
        let ch = &self.nodes[v].children;
        ch.binary_search_by_key(&c, |&(s, _)| s).ok().map(|i| ch[i].1)
    }

    /// Node spelling `s`, walking one edge per symbol.
    pub fn walk(&self, s: &[Symbol]) -> Option<usize> {
        s.iter().try_fold(0, |v, &c| self.child(v, c))
    }

    pub fn depth(&self, mut v: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.nodes[v].parent {
            d += 1;
            v = p;
        }
        d
    }

    /// Every non-root node's string and value, in depth-first symbol order.
    pub fn entries(&self) -> Vec<(Vec<Symbol>, f64)> {
        let mut out = Vec::with_capacity(self.nodes.len().saturating_sub(1));
        let mut stack: Vec<(usize, Vec<Symbol>)> = vec![(0, Vec::new())];
        while let Some((v, s)) = stack.pop() {
            if v != 0 {
                out.push((s.clone(), self.nodes[v].value));
            }
            for &(c, u) in self.nodes[v].children.iter().rev() {
                let mut t = s.clone();
                t.push(c);
                stack.push((u, t));
            }
        }
        out
    }
}

/// Noisy counts of the heavy-path roots and their error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct RootRelease {
    pub values: Vec<f64>,
    pub noise: Noise,
    pub bound: f64,
}

/// `ℓ(⌈log₂ N⌉ + 1)`: the total count one document contributes to all path
/// roots of a trie with `N` nodes.
pub fn root_mass_bound(ell: usize, n_nodes: usize) -> f64 {
    ell as f64 * (ceil_log2(n_nodes) + 1) as f64
}

/// Noise and max-error bound for `k` path-root counts of a trie with
/// `n_nodes` nodes.
pub fn root_parameters(
    ell: usize,
    n_nodes: usize,
    k: usize,
    budget: &PrivacyBudget,
) -> Result<(Noise, f64)> {
    let mass = root_mass_bound(ell, n_nodes);
    let k = k.max(1);
    Ok(match Mode::of(budget) {
        Mode::Pure => {
            let l1 = 2.0 * mass;
            (
                Noise::Laplace {
                    scale: l1 / budget.epsilon,
                },
                laplace_max_error(l1, budget.epsilon, k, budget.beta)?,
            )
        }
        Mode::Approx => {
            let l2 = (2.0 * mass * budget.cap as f64).sqrt();
            (
                Noise::Gaussian {
                    sigma: gaussian_sigma(l2, budget.epsilon, budget.delta)?,
                },
                gaussian_max_error(l2, budget.epsilon, budget.delta, k, budget.beta)?,
            )
        }
    })
}

/// Noise and max-error bound for the prefix sums of `k` difference sequences
/// padded to length `t`.
pub fn path_sum_parameters(
    ell: usize,
    n_nodes: usize,
    k: usize,
    t: usize,
    budget: &PrivacyBudget,
) -> Result<(Noise, f64)> {
    let l = 2.0 * root_mass_bound(ell, n_nodes);
    match Mode::of(budget) {
        Mode::Pure => laplace_prefix_parameters(l, k, t, budget),
        Mode::Approx => gaussian_prefix_parameters(l, 2.0 * budget.cap as f64, k, t, budget),
    }
}

/// `α_total` of a trie with `n_nodes` nodes, `paths` heavy paths and padded
/// path length `t`, when `budget` is split by `shares` as in the pipeline.
pub fn alpha_total_bound(
    ell: usize,
    n_nodes: usize,
    paths: usize,
    t: usize,
    budget: &PrivacyBudget,
    shares: &[f64; 3],
) -> Result<f64> {
    let parts = budget_split(budget, shares)?;
    let (_, roots) = root_parameters(ell, n_nodes, paths, &parts[1])?;
    let (_, prefix) = path_sum_parameters(ell, n_nodes, paths, t, &parts[2])?;
    Ok(roots + prefix)
}

/// Noisy counts of the path roots. Pure: Laplace with L1 sensitivity
/// `2ℓ(⌈log N⌉+1)`. Approximate: Gaussian with L2 sensitivity
/// `√(2ℓΔ(⌈log N⌉+1))`.
pub fn noisy_root_counts(
    root_counts: &[u64],
    ell: usize,
    n_nodes: usize,
    budget: &PrivacyBudget,
    source: &NoiseSource,
) -> Result<RootRelease> {
    let (noise, bound) = root_parameters(ell, n_nodes, root_counts.len(), budget)?;
    let mut stream = source.stream(ROOT_STREAM);
    let values = root_counts
        .iter()
        .map(|&c| Ok(c as f64 + noise.draw(&mut stream)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(RootRelease {
        values,
        noise,
        bound,
    })
}

/// Noisy prefix sums of the difference sequences. Their summed L1 change is
/// `2ℓ(⌈log N⌉+1)`; one sequence changes by at most `2Δ`.
pub fn noisy_path_sums(
    diffs: &[Vec<i64>],
    ell: usize,
    n_nodes: usize,
    budget: &PrivacyBudget,
    source: &NoiseSource,
) -> Result<PrefixSums> {
    let l = 2.0 * root_mass_bound(ell, n_nodes);
    match Mode::of(budget) {
        Mode::Pure => binary_tree_prefix_sums(diffs, l, budget, source, PREFIX_STREAM),
        Mode::Approx => {
            binary_tree_prefix_sums_gaussian(diffs, l, 2.0 * budget.cap as f64, budget, source, PREFIX_STREAM)
        }
    }
}

/// Per-node noisy count `root + prefix sum`, then removes every node whose
/// value is below `prune_threshold` together with its subtree. The root is
/// always kept.
pub fn assemble(
    trie: &CandidateTrie,
    hpd: &HeavyPathDecomposition,
    roots: &[f64],
    prefix: &PrefixSums,
    prune_threshold: f64,
) -> Result<NoisyTrie> {
    let n = trie.len();
    if hpd.node_count() != n || roots.len() != hpd.paths().len() || prefix.sums.len() != roots.len() {
        return Err(Error::Internal("decomposition does not match the trie".into()));
    }
    let value = |v: usize| -> Result<f64> {
        let p = hpd.path_of(v);
        let off = hpd.offset(v);
        let tail = if off == 0 {
            0.0
        } else {
            *prefix.sums[p]
                .get(off - 1)
                .ok_or_else(|| Error::Internal(format!("missing prefix sum for node {v}")))?
        };
        Ok(roots[p] + tail)
    };
    let mut out = NoisyTrie::root(value(ROOT)?);
    let mut queue = VecDeque::from([(ROOT, 0usize)]);
    while let Some((v, id)) = queue.pop_front() {
        for &(c, u) in &trie.node(v).children {
            let x = value(u)?;
            if x >= prune_threshold {
                let uid = out.push(id, c, x)?;
                queue.push_back((u, uid));
            }
        }
    }
    Ok(out)
}

/// Tuning knobs; the defaults follow the standard construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrieOptions {
    /// Replaces the candidate threshold `2α`.
    pub candidate_threshold: Option<f64>,
    /// Replaces `α_total` in the pruning threshold `2α_total`.
    pub prune_alpha: Option<f64>,
    /// Budget shares of candidates, root counts and prefix sums.
    pub shares: [f64; 3],
}

impl Default for TrieOptions {
    fn default() -> Self {
        Self {
            candidate_threshold: None,
            prune_alpha: None,
            shares: [1.0 / 3.0; 3],
        }
    }
}

/// Intermediate sizes of a build, useful for diagnostics.
#[derive(Debug, Clone)]
pub struct BuildReport {
    pub candidates: usize,
    pub trie_nodes: usize,
    pub paths: usize,
    pub padded_length: usize,
    pub ledger: BudgetLedger,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum TrieBuild {
    Ready {
        trie: PrivateCountTrie,
        report: BuildReport,
    },
    Aborted(SizeAbort),
}

impl TrieBuild {
    pub fn ready(self) -> Option<PrivateCountTrie> {
        match self {
            TrieBuild::Ready { trie, .. } => Some(trie),
            TrieBuild::Aborted(_) => None,
        }
    }
}

/// The released structure answering `count_Δ` queries for every pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateCountTrie {
    trie: NoisyTrie,
    meta: Metadata,
    codec: Option<TextCodec>,
}

/// Builds the private counting trie for `db`.
pub fn build_private_trie(
    db: &Database,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &TrieOptions,
) -> Result<TrieBuild> {
    budget.check_cap(db.ell())?;
    let idx = SuffixIndex::build(db);
    let mut ledger = BudgetLedger::new(*budget);
    let parts = ledger.split("pipeline", &opts.shares)?;
    let cand_opts = CandidateOptions {
        threshold: opts.candidate_threshold,
    };
    let cands = match build_candidates(db, &idx, &parts[0], source, &cand_opts)? {
        crate::candidates::CandidateBuild::Ready(c) => c,
        crate::candidates::CandidateBuild::Aborted(a) => return Ok(TrieBuild::Aborted(a)),
    };
    build_from_candidates(db, &idx, &cands, budget, &parts[1], &parts[2], source, opts, ledger)
}

#[allow(clippy::too_many_arguments)]
fn build_from_candidates(
    db: &Database,
    idx: &SuffixIndex,
    cands: &CandidateSet,
    budget: &PrivacyBudget,
    roots_budget: &PrivacyBudget,
    prefix_budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &TrieOptions,
    ledger: BudgetLedger,
) -> Result<TrieBuild> {
    let trie = CandidateTrie::from_candidates(cands, idx, budget.cap);
    let hpd = decompose(&trie.child_lists(), ROOT);
    let n_nodes = trie.len();
    let counts: Vec<i64> = trie.nodes().iter().map(|n| n.count as i64).collect();
    let root_counts: Vec<u64> = hpd.roots().iter().map(|&r| trie.node(r).count).collect();
    let roots = noisy_root_counts(&root_counts, db.ell(), n_nodes, roots_budget, source)?;
    let diffs = hpd.difference_sequences(&counts);
    let prefix = noisy_path_sums(&diffs, db.ell(), n_nodes, prefix_budget, source)?;
    let alpha_total = roots.bound + prefix.bound;
    let prune_threshold = 2.0 * opts.prune_alpha.unwrap_or(alpha_total);
    let released = assemble(&trie, &hpd, &roots.values, &prefix, prune_threshold)?;
    let absent_floor = (cands.tau() + cands.alpha()).max(prune_threshold + alpha_total);
    let meta = Metadata {
        kind: StructureKind::Substring,
        mode: Mode::of(budget),
        n: db.n() as u64,
        ell: db.ell() as u64,
        sigma: db.alphabet().size() as u32,
        cap: budget.cap as u64,
        q: 0,
        epsilon: budget.epsilon,
        delta: budget.delta,
        beta: budget.beta,
        seed: source.seed(),
        zero_noise: source.is_zero_noise(),
        alpha_total,
        prune_threshold,
        alpha_candidates: cands.alpha(),
        tau_candidates: cands.tau(),
        root_bound: roots.bound,
        prefix_bound: prefix.bound,
        absent_floor,
    };
    let report = BuildReport {
        candidates: n_nodes - 1,
        trie_nodes: n_nodes,
        paths: hpd.paths().len(),
        padded_length: prefix.t,
        ledger,
    };
    Ok(TrieBuild::Ready {
        trie: PrivateCountTrie {
            trie: released,
            meta,
            codec: db.codec().cloned(),
        },
        report,
    })
}

/// Checks that every symbol of `pattern` is below `sigma`.
pub(crate) fn check_symbols(pattern: &[Symbol], sigma: u32) -> Result<()> {
    match pattern.iter().find(|&&s| s as u32 >= sigma) {
        Some(s) => Err(invalid_input(format!("symbol {s} outside alphabet of size {sigma}"))),
        None => Ok(()),
    }
}

/// Sorts mined patterns by value descending, then lexicographically.
pub(crate) fn sort_mined(out: &mut [(Vec<Symbol>, f64)]) {
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
}

impl PrivateCountTrie {
    pub fn metadata(&self) -> &Metadata {
        &self.meta
    }

    pub fn codec(&self) -> Option<&TextCodec> {
        self.codec.as_ref()
    }

    pub fn nodes(&self) -> &NoisyTrie {
        &self.trie
    }

    /// Number of stored patterns, excluding the empty one.
    pub fn retained(&self) -> usize {
        self.trie.len() - 1
    }

    /// The noisy count of `pattern`, or `0` when it has no stored node.
    /// Patterns longer than `ℓ` get `0`.
    pub fn query(&self, pattern: &[Symbol]) -> Result<f64> {
        check_symbols(pattern, self.meta.sigma)?;
        if pattern.len() as u64 > self.meta.ell {
            return Ok(0.0);
        }
        Ok(self.trie.walk(pattern).map_or(0.0, |v| self.trie.value(v)))
    }

    /// Query by raw text, encoded with the corpus dictionary. Characters
    /// outside the dictionary cannot occur, so the answer is `0`.
    pub fn query_text(&self, text: &[u8]) -> Result<f64> {
        match &self.codec {
            Some(c) => match c.encode(text) {
                Ok(p) => self.query(&p),
                Err(_) => Ok(0.0),
            },
            None => self.query(text),
        }
    }

    /// Stored non-empty patterns with noisy count at least `tau`, by count
    /// descending, then lexicographically.
    pub fn mine(&self, tau: f64) -> Vec<(Vec<Symbol>, f64)> {
        let mut out: Vec<_> = self.trie.entries().into_iter().filter(|e| e.1 >= tau).collect();
        sort_mined(&mut out);
        out
    }

    /// Zeroes the recorded seed. Anyone holding the seed can regenerate the
    /// noise, so released files should not carry it.
    pub fn redact_seed(&mut self) {
        self.meta.seed = 0;
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::encode(&self.meta, self.codec.as_ref(), &self.trie)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, codec, trie) = format::decode(bytes)?;
        if meta.kind != StructureKind::Substring {
            return Err(Error::Format("not a substring structure".into()));
        }
        Ok(Self { trie, meta, codec })
    }
}
