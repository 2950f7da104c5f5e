/// Heavy path decomposition of a rooted tree given as child lists.
///
/// The heavy child of a node is the child with the largest subtree (counted in
/// nodes); ties go to the earliest child in the list, which for tries is the
/// smallest symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeavyPathDecomposition {
    paths: Vec<Vec<usize>>,
    path_of: Vec<u32>,
    offset: Vec<u32>,
    heavy: Vec<Option<usize>>,
    light_depth: Vec<u32>,
    subtree: Vec<usize>,
}

/// Decomposes the tree rooted at `root`. Every node must be reachable from
/// `root` exactly once.
pub fn decompose(children: &[Vec<usize>], root: usize) -> HeavyPathDecomposition {
    let n = children.len();
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        order.push(v);
        stack.extend(children[v].iter().rev());
    }
    assert_eq!(order.len(), n, "tree must span all nodes");

    let mut subtree = vec![1usize; n];
    for &v in order.iter().rev() {
        subtree[v] += children[v].iter().map(|&u| subtree[u]).sum::<usize>();
    }
    let heavy: Vec<Option<usize>> = children
        .iter()
        .map(|ch| {
            let mut best: Option<usize> = None;
            for &u in ch {
                if best.is_none_or(|b| subtree[u] > subtree[b]) {
                    best = Some(u);
                }
            }
            best
        })
        .collect();

    let mut paths = Vec::new();
    let mut path_of = vec![u32::MAX; n];
    let mut offset = vec![0u32; n];
    let mut light_depth = vec![0u32; n];
    let mut starts = vec![(root, 0u32)];
    while let Some((start, ld)) = starts.pop() {
        let id = paths.len() as u32;
        let mut path = Vec::new();
        let mut cur = Some(start);
        while let Some(v) = cur {
            path_of[v] = id;
            offset[v] = path.len() as u32;
            light_depth[v] = ld;
            path.push(v);
            for &u in children[v].iter().rev() {
                if Some(u) != heavy[v] {
                    starts.push((u, ld + 1));
                }
            }
            cur = heavy[v];
        }
        paths.push(path);
    }
    HeavyPathDecomposition {
        paths,
        path_of,
        offset,
        heavy,
        light_depth,
        subtree,
    }
}

impl HeavyPathDecomposition {
    pub fn paths(&self) -> &[Vec<usize>] {
        &self.paths
    }

    pub fn path_of(&self, v: usize) -> usize {
        self.path_of[v] as usize
    }

    pub fn offset(&self, v: usize) -> usize {
        self.offset[v] as usize
    }

    pub fn heavy_child(&self, v: usize) -> Option<usize> {
        self.heavy[v]
    }

    pub fn is_path_root(&self, v: usize) -> bool {
        self.offset[v] == 0
    }

    /// First node of every path, in path order.
    pub fn roots(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p[0]).collect()
    }

    /// Light edges on the path from the root to `v`.
    pub fn light_depth(&self, v: usize) -> usize {
        self.light_depth[v] as usize
    }

    pub fn max_light_depth(&self) -> usize {
        self.light_depth.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn subtree_size(&self, v: usize) -> usize {
        self.subtree[v]
    }

    pub fn node_count(&self) -> usize {
        self.path_of.len()
    }

    /// `count(v_i) - count(v_{i-1})` for `i >= 1` along every path.
    pub fn difference_sequences(&self, counts: &[i64]) -> Vec<Vec<i64>> {
        self.paths
            .iter()
            .map(|p| p.windows(2).map(|w| counts[w[1]] - counts[w[0]]).collect())
            .collect()
    }
}
