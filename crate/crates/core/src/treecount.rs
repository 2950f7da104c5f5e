//! Private estimates of monotone counting functions on arbitrary rooted trees.
//!
//! The caller supplies the exact count `c(v)` of every node. The count must
//! satisfy `c(v) <= Σ c(children)` at every inner node, and one neighbor
//! change may alter the leaf counts by at most `d` in total, with every node
//! only affected through the leaves below it. Heavy-path roots are noised
//! directly; every other node is its path root plus a noisy prefix sum of the
//! path's difference sequence.

use std::collections::HashSet;

use crate::candidates::Noise;
use crate::countingtrie::{
    binary_tree_prefix_sums, binary_tree_prefix_sums_gaussian, decompose, HeavyPathDecomposition,
};
use crate::error::{invalid_input, invalid_param, Result};
use crate::mechanisms::{
    budget_split, ceil_log2, gaussian_max_error, gaussian_sigma, laplace_max_error, Mode,
    NoiseSource, PrivacyBudget,
};

pub const TREE_ROOT_STREAM: &str = "tree-roots";
pub const TREE_PREFIX_STREAM: &str = "tree-prefix-sums";

/// A rooted tree on nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tree {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    depth: Vec<usize>,
}

impl Tree {
    /// Builds a tree from a parent array with exactly one root.
    pub fn from_parents(parent: &[Option<usize>]) -> Result<Self> {
        let n = parent.len();
        if n == 0 {
            return Err(invalid_input("tree has no nodes"));
        }
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (v, &p) in parent.iter().enumerate() {
            match p {
                None if root.is_some() => return Err(invalid_input("tree has more than one root")),
                None => root = Some(v),
                Some(p) if p >= n || p == v => {
                    return Err(invalid_input(format!("node {v} has invalid parent {p}")))
                }
                Some(p) => children[p].push(v),
            }
        }
        let root = root.ok_or_else(|| invalid_input("tree has no root"))?;
        let mut depth = vec![usize::MAX; n];
        depth[root] = 0;
        let mut stack = vec![root];
        let mut seen = 1;
        while let Some(v) = stack.pop() {
            for &u in &children[v] {
                depth[u] = depth[v] + 1;
                seen += 1;
                stack.push(u);
            }
        }
        if seen != n {
            return Err(invalid_input("parent array contains a cycle"));
        }
        Ok(Self {
            parent: parent.to_vec(),
            children,
            root,
            depth,
        })
    }

    /// Parses lines `node_id parent_id`; the root's parent is `-`. Blank
    /// lines and lines starting with `#` are skipped.
    pub fn parse(input: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(invalid_input(format!("line {}: expected `node parent`", i + 1)));
            };
            let node: usize = a
                .parse()
                .map_err(|_| invalid_input(format!("line {}: bad node id {a:?}", i + 1)))?;
            let parent = match b {
                "-" => None,
                _ => Some(
                    b.parse::<usize>()
                        .map_err(|_| invalid_input(format!("line {}: bad parent id {b:?}", i + 1)))?,
                ),
            };
            pairs.push((node, parent));
        }
        let n = pairs.len();
        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        for (node, p) in pairs {
            if node >= n || seen[node] {
                return Err(invalid_input(format!("node ids must be 0..{n} without repeats")));
            }
            seen[node] = true;
            parent[node] = p;
        }
        Self::from_parents(&parent)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.is_leaf(v)).collect()
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    pub fn decomposition(&self) -> HeavyPathDecomposition {
        decompose(&self.children, self.root)
    }

    /// Nodes with every parent listed before its children.
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.children[v].iter().rev());
        }
        out
    }
}

/// Checks `c(v) <= Σ c(children)` at every inner node.
pub fn check_monotone(tree: &Tree, counts: &[u64]) -> Result<()> {
    if counts.len() != tree.len() {
        return Err(invalid_input(format!(
            "{} counts for {} nodes",
            counts.len(),
            tree.len()
        )));
    }
    for v in 0..tree.len() {
        if tree.is_leaf(v) {
            continue;
        }
        let below: u64 = tree.children(v).iter().map(|&u| counts[u]).sum();
        if counts[v] > below {
            return Err(invalid_input(format!(
                "count {} at node {v} exceeds the sum {below} over its children",
                counts[v]
            )));
        }
    }
    Ok(())
}

/// Items of a colored dataset: `(leaf, color)` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ColoredDataset {
    pub items: Vec<(usize, u64)>,
}

impl ColoredDataset {
    /// Parses lines `leaf_id color`.
    pub fn parse(input: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<u64>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(leaf)), Some(Ok(color)), None) => items.push((leaf as usize, color)),
                _ => return Err(invalid_input(format!("line {}: expected `leaf color`", i + 1))),
            }
        }
        Ok(Self { items })
    }
}

/// Number of distinct colors among the items at leaves below each node.
pub fn colored_counts(tree: &Tree, data: &ColoredDataset) -> Result<Vec<u64>> {
    let mut sets: Vec<HashSet<u64>> = vec![HashSet::new(); tree.len()];
    for &(leaf, color) in &data.items {
        if leaf >= tree.len() || !tree.is_leaf(leaf) {
            return Err(invalid_input(format!("item assigned to unknown leaf {leaf}")));
        }
        sets[leaf].insert(color);
    }
    let mut counts = vec![0u64; tree.len()];
    for &v in tree.preorder().iter().rev() {
        // Merge smaller sets into the largest child set.
        let mut acc = std::mem::take(&mut sets[v]);
        for &u in tree.children(v) {
            let mut s = std::mem::take(&mut sets[u]);
            if s.len() > acc.len() {
                std::mem::swap(&mut s, &mut acc);
            }
            acc.extend(s);
        }
        counts[v] = acc.len() as u64;
        sets[v] = acc;
    }
    Ok(counts)
}

/// Released estimates with their explicit error bound.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEstimate {
    pub values: Vec<f64>,
    pub mode: Mode,
    pub root_noise: Noise,
    pub prefix_noise: Noise,
    pub root_bound: f64,
    pub prefix_bound: f64,
    /// `root_bound + prefix_bound`; holds for all nodes at once with
    /// probability `1 - β`.
    pub bound: f64,
    pub paths: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// Leaf sensitivity `d`.
    pub d: usize,
    /// Reject counts that are not monotone.
    pub validate: bool,
}

fn estimate(
    tree: &Tree,
    counts: &[u64],
    params: &TreeParams,
    budget: &PrivacyBudget,
    source: &NoiseSource,
) -> Result<TreeEstimate> {
    if counts.len() != tree.len() {
        return Err(invalid_input("one count per node required"));
    }
    if params.d < 1 {
        return Err(invalid_param("leaf sensitivity d must be at least 1"));
    }
    if params.validate {
        check_monotone(tree, counts)?;
    }
    let mode = Mode::of(budget);
    let halves = budget_split(budget, &[0.5, 0.5])?;
    let (rb, pb) = (halves[0], halves[1]);
    let hpd = tree.decomposition();
    let roots = hpd.roots();
    let k = roots.len();
    let mass = params.d as f64 * (ceil_log2(tree.len()) + 1) as f64;
    let (root_noise, root_bound) = match mode {
        Mode::Pure => (
            Noise::Laplace {
                scale: mass / rb.epsilon,
            },
            laplace_max_error(mass, rb.epsilon, k, rb.beta)?,
        ),
        Mode::Approx => {
            let l2 = (mass * budget.cap as f64).sqrt();
            (
                Noise::Gaussian {
                    sigma: gaussian_sigma(l2, rb.epsilon, rb.delta)?,
                },
                gaussian_max_error(l2, rb.epsilon, rb.delta, k, rb.beta)?,
            )
        }
    };
    let mut stream = source.stream(TREE_ROOT_STREAM);
    let root_values = roots
        .iter()
        .map(|&r| Ok(counts[r] as f64 + root_noise.draw(&mut stream)?))
        .collect::<Result<Vec<_>>>()?;
    let signed: Vec<i64> = counts.iter().map(|&c| c as i64).collect();
    let diffs = hpd.difference_sequences(&signed);
    let prefix = match mode {
        Mode::Pure => binary_tree_prefix_sums(&diffs, 2.0 * mass, &pb, source, TREE_PREFIX_STREAM)?,
        Mode::Approx => binary_tree_prefix_sums_gaussian(
            &diffs,
            2.0 * mass,
            2.0 * budget.cap as f64,
            &pb,
            source,
            TREE_PREFIX_STREAM,
        )?,
    };
    let values = (0..tree.len())
        .map(|v| {
            let p = hpd.path_of(v);
            let off = hpd.offset(v);
            root_values[p] + if off == 0 { 0.0 } else { prefix.sums[p][off - 1] }
        })
        .collect();
    Ok(TreeEstimate {
        values,
        mode,
        root_noise,
        prefix_noise: prefix.noise,
        root_bound,
        prefix_bound: prefix.bound,
        bound: root_bound + prefix.bound,
        paths: k,
    })
}

/// Pure estimates: Laplace roots with L1 sensitivity `d(⌈log|V|⌉+1)` and
/// Laplace prefix sums with total sensitivity `2d(⌈log|V|⌉+1)`, each at `ε/2`.
pub fn dp_tree_counts_pure(
    tree: &Tree,
    counts: &[u64],
    params: &TreeParams,
    budget: &PrivacyBudget,
    source: &NoiseSource,
) -> Result<TreeEstimate> {
    if !budget.is_pure() {
        return Err(invalid_param("pure tree counting requires delta = 0"));
    }
    estimate(tree, counts, params, budget, source)
}

/// Approximate estimates at `(ε/2, δ/2)` per stage, where every node count
/// changes by at most `Δ = budget.cap` between neighbors. Requires `ε/2 < 1`.
pub fn dp_tree_counts_approx(
    tree: &Tree,
    counts: &[u64],
    params: &TreeParams,
    budget: &PrivacyBudget,
    source: &NoiseSource,
) -> Result<TreeEstimate> {
    if budget.is_pure() {
        return Err(invalid_param("approximate tree counting requires delta > 0"));
    }
    estimate(tree, counts, params, budget, source)
}

/// Dispatches on `budget.delta`.
pub fn dp_tree_counts(
    tree: &Tree,
    counts: &[u64],
    params: &TreeParams,
    budget: &PrivacyBudget,
    source: &NoiseSource,
) -> Result<TreeEstimate> {
    estimate(tree, counts, params, budget, source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star(u: usize) -> Tree {
        let mut p = vec![None];
        p.extend((0..u).map(|_| Some(0)));
        Tree::from_parents(&p).unwrap()
    }

    #[test]
    fn colored_examples() {
        let t = Tree::from_parents(&[None, Some(0), Some(0)]).unwrap();
        let none = colored_counts(&t, &ColoredDataset::default()).unwrap();
        assert_eq!(none, vec![0, 0, 0]);
        let two = ColoredDataset {
            items: vec![(1, 7), (2, 9)],
        };
        assert_eq!(colored_counts(&t, &two).unwrap(), vec![2, 1, 1]);
        let same = ColoredDataset {
            items: vec![(1, 7), (2, 7)],
        };
        assert_eq!(colored_counts(&t, &same).unwrap(), vec![1, 1, 1]);
        let bad = ColoredDataset { items: vec![(0, 1)] };
        assert!(colored_counts(&t, &bad).is_err());
    }

    #[test]
    fn star_single_color_zero_noise() {
        let t = star(5);
        let data = ColoredDataset {
            items: (1..=5).map(|l| (l, 3)).collect(),
        };
        let c = colored_counts(&t, &data).unwrap();
        assert_eq!(c, vec![1, 1, 1, 1, 1, 1]);
        let params = TreeParams { d: 2, validate: true };
        let b = PrivacyBudget::pure(1.0, 0.1, 1).unwrap();
        let est = dp_tree_counts_pure(&t, &c, &params, &b, &NoiseSource::zero_noise()).unwrap();
        assert_eq!(est.values, vec![1.0; 6]);
        let g = PrivacyBudget::new(1.0, 1e-6, 0.1, 1).unwrap();
        let est = dp_tree_counts_approx(&t, &c, &params, &g, &NoiseSource::zero_noise()).unwrap();
        assert_eq!(est.values, vec![1.0; 6]);
    }

    #[test]
    fn path_tree_has_one_root() {
        let p: Vec<Option<usize>> = (0..8).map(|i| if i == 0 { None } else { Some(i - 1) }).collect();
        let t = Tree::from_parents(&p).unwrap();
        let params = TreeParams { d: 1, validate: true };
        let b = PrivacyBudget::pure(1.0, 0.1, 1).unwrap();
        let est = dp_tree_counts_pure(&t, &[1; 8], &params, &b, &NoiseSource::new(1)).unwrap();
        assert_eq!(est.paths, 1);
        assert_eq!(t.height(), 7);
    }

    #[test]
    fn monotonicity_violation_rejected() {
        let t = star(2);
        let params = TreeParams { d: 1, validate: true };
        let b = PrivacyBudget::pure(1.0, 0.1, 1).unwrap();
        assert!(dp_tree_counts_pure(&t, &[3, 1, 1], &params, &b, &NoiseSource::new(0)).is_err());
        let lax = TreeParams { d: 1, validate: false };
        assert!(dp_tree_counts_pure(&t, &[3, 1, 1], &lax, &b, &NoiseSource::new(0)).is_ok());
    }

    #[test]
    fn approx_bound_grows_as_delta_shrinks() {
        let t = star(16);
        let params = TreeParams { d: 1, validate: false };
        let counts = vec![0u64; 17];
        let at = |delta| {
            let g = PrivacyBudget::new(1.0, delta, 0.1, 1).unwrap();
            dp_tree_counts_approx(&t, &counts, &params, &g, &NoiseSource::zero_noise())
                .unwrap()
                .bound
        };
        assert!(at(1e-8) > at(1e-4));
        let g = PrivacyBudget::new(2.0, 1e-6, 0.1, 1).unwrap();
        assert!(dp_tree_counts_approx(&t, &counts, &params, &g, &NoiseSource::new(0)).is_err());
    }

    #[test]
    fn parse_formats() {
        let t = Tree::parse("# tree\n0 -\n1 0\n2 0\n3 1\n").unwrap();
        assert_eq!(t.leaves(), vec![2, 3]);
        assert!(Tree::parse("0 -\n1 -\n").is_err());
        assert!(Tree::parse("0 1\n1 0\n").is_err());
        let d = ColoredDataset::parse("3 5\n2 5\n").unwrap();
        assert_eq!(colored_counts(&t, &d).unwrap(), vec![1, 1, 1, 1]);
    }
}
