//! Python bindings. The extension module is named `dpcount`.

use dpcount::corpus::{Database as CoreDatabase, Symbol, TextCodec};
use dpcount::countingtrie::{build_private_trie, Metadata, PrivateCountTrie, TrieBuild, TrieOptions};
use dpcount::mechanisms::{Mode, NoiseSource, PrivacyBudget};
use dpcount::qgrams::{build_qgrams, QGramBuild, QGramOptions, QGramStructure};
use dpcount::treecount::{self, ColoredDataset, Tree, TreeParams};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

create_exception!(dpcount, DpcountError, PyValueError, "Invalid input, parameters or structure.");
create_exception!(dpcount, ChecksumError, DpcountError, "A serialized structure failed its checksum.");
create_exception!(
    dpcount,
    SizeAbortError,
    DpcountError,
    "The candidate set outgrew n*ell; args are (level, size, limit)."
);

fn err(e: dpcount::Error) -> PyErr {
    match e {
        dpcount::Error::Checksum => ChecksumError::new_err(e.to_string()),
        e => DpcountError::new_err(e.to_string()),
    }
}

fn size_abort(level: u32, size: usize, limit: usize) -> PyErr {
    SizeAbortError::new_err((level, size, limit))
}

fn metadata_dict<'py>(py: Python<'py>, meta: &Metadata) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_string(meta).map_err(|e| DpcountError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (json,))
}

fn decode(codec: Option<&TextCodec>, symbols: &[Symbol]) -> String {
    match codec {
        Some(c) => String::from_utf8_lossy(&c.decode(symbols)).into_owned(),
        None => symbols.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
    }
}

struct Privacy {
    budget: PrivacyBudget,
    source: NoiseSource,
}

fn privacy(
    epsilon: f64,
    delta: f64,
    beta: f64,
    cap: usize,
    seed: Option<u64>,
    zero_noise: bool,
) -> PyResult<Privacy> {
    let budget = PrivacyBudget::new(epsilon, delta, beta, cap).map_err(err)?;
    let seed = seed.unwrap_or_else(rand::random);
    Ok(Privacy {
        budget,
        source: NoiseSource::with_zero_noise(seed, zero_noise),
    })
}

/// A collection of text documents over a finite alphabet.
#[pyclass(frozen, module = "dpcount")]
struct Database {
    inner: CoreDatabase,
}

#[pymethods]
impl Database {
    /// `max_len` bounds document length (defaults to the longest document);
    /// `alphabet` pins the alphabet size above the observed characters.
    #[new]
    #[pyo3(signature = (docs, max_len = None, alphabet = None))]
    fn new(docs: Vec<String>, max_len: Option<usize>, alphabet: Option<usize>) -> PyResult<Self> {
        let inner = CoreDatabase::from_texts(&docs, alphabet, max_len).map_err(err)?;
        Ok(Self { inner })
    }

    /// Parses the line-oriented corpus format.
    #[staticmethod]
    #[pyo3(signature = (text, max_len = None, alphabet = None))]
    fn parse(text: &str, max_len: Option<usize>, alphabet: Option<usize>) -> PyResult<Self> {
        let inner = CoreDatabase::parse_corpus_with(text, max_len, alphabet).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn ell(&self) -> usize {
        self.inner.ell()
    }

    #[getter]
    fn sigma(&self) -> usize {
        self.inner.alphabet().size()
    }

    /// Exact capped count: occurrences per document, each capped at `cap`, summed.
    fn count(&self, pattern: &str, cap: usize) -> PyResult<u64> {
        let Some(codec) = self.inner.codec() else {
            return Err(DpcountError::new_err("database has no text codec"));
        };
        match codec.encode(pattern.as_bytes()) {
            Ok(p) => self.inner.count_db(&p, cap).map_err(err),
            Err(_) => Ok(0),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Database(n={}, ell={}, sigma={})",
            self.inner.n(),
            self.inner.ell(),
            self.inner.alphabet().size()
        )
    }
}

/// Released noisy counts for every substring pattern.
#[pyclass(frozen, module = "dpcount")]
struct CountTrie {
    inner: PrivateCountTrie,
}

#[pymethods]
impl CountTrie {
    fn query(&self, pattern: &str) -> PyResult<f64> {
        self.inner.query_text(pattern.as_bytes()).map_err(err)
    }

    /// Retained patterns with noisy count at least `tau`, largest first.
    fn mine(&self, tau: f64) -> Vec<(String, f64)> {
        let codec = self.inner.codec();
        self.inner.mine(tau).into_iter().map(|(p, c)| (decode(codec, &p), c)).collect()
    }

    #[getter]
    fn metadata<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        metadata_dict(py, self.inner.metadata())
    }

    #[getter]
    fn retained(&self) -> usize {
        self.inner.retained()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: PrivateCountTrie::from_bytes(data).map_err(err)?,
        })
    }
}

/// Released noisy counts of q-grams.
#[pyclass(frozen, module = "dpcount")]
struct QGramTable {
    inner: QGramStructure,
}

#[pymethods]
impl QGramTable {
    fn query(&self, pattern: &str) -> PyResult<f64> {
        self.inner.query_text(pattern.as_bytes()).map_err(err)
    }

    fn mine(&self, tau: f64) -> Vec<(String, f64)> {
        let codec = self.inner.codec();
        self.inner.mine(tau).into_iter().map(|(p, c)| (decode(codec, &p), c)).collect()
    }

    #[getter]
    fn q(&self) -> usize {
        self.inner.q()
    }

    #[getter]
    fn metadata<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        metadata_dict(py, self.inner.metadata())
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: QGramStructure::from_bytes(data).map_err(err)?,
        })
    }
}

/// Builds the private counting trie. `cap` defaults to the database's `ell`;
/// `seed` defaults to OS entropy. `zero_noise=True` releases exact counts
/// and is not private.
#[pyfunction]
#[pyo3(signature = (
    db, *, epsilon = 1.0, delta = 0.0, beta = 0.05, cap = None, seed = None, zero_noise = false,
    candidate_threshold = None, prune_alpha = None
))]
#[allow(clippy::too_many_arguments)]
fn build_trie(
    py: Python<'_>,
    db: &Database,
    epsilon: f64,
    delta: f64,
    beta: f64,
    cap: Option<usize>,
    seed: Option<u64>,
    zero_noise: bool,
    candidate_threshold: Option<f64>,
    prune_alpha: Option<f64>,
) -> PyResult<CountTrie> {
    let db = &db.inner;
    let p = privacy(epsilon, delta, beta, cap.unwrap_or(db.ell().max(1)), seed, zero_noise)?;
    let (tau, prune) = if zero_noise { (Some(1.0), Some(0.5)) } else { (None, None) };
    let opts = TrieOptions {
        candidate_threshold: candidate_threshold.or(tau),
        prune_alpha: prune_alpha.or(prune),
        ..TrieOptions::default()
    };
    let built = py
        .detach(|| build_private_trie(db, &p.budget, &p.source, &opts))
        .map_err(err)?;
    match built {
        TrieBuild::Ready { trie, .. } => Ok(CountTrie { inner: trie }),
        TrieBuild::Aborted(a) => Err(size_abort(a.level, a.size, a.limit)),
    }
}

/// Builds the private q-gram table. Approximate mode requires `epsilon < 1`.
#[pyfunction]
#[pyo3(signature = (
    db, q, *, epsilon = 1.0, delta = 0.0, beta = 0.05, cap = None, seed = None, zero_noise = false
))]
#[allow(clippy::too_many_arguments)]
fn build_qgram_table(
    py: Python<'_>,
    db: &Database,
    q: usize,
    epsilon: f64,
    delta: f64,
    beta: f64,
    cap: Option<usize>,
    seed: Option<u64>,
    zero_noise: bool,
) -> PyResult<QGramTable> {
    let db = &db.inner;
    let p = privacy(epsilon, delta, beta, cap.unwrap_or(db.ell().max(1)), seed, zero_noise)?;
    let floor = zero_noise.then_some(0.5);
    let opts = QGramOptions {
        alpha: floor,
        final_alpha: floor,
        noise: None,
    };
    let built = py.detach(|| build_qgrams(db, q, &p.budget, &p.source, &opts)).map_err(err)?;
    match built {
        QGramBuild::Ready(s) => Ok(QGramTable { inner: s }),
        QGramBuild::Aborted(a) => Err(size_abort(a.level, a.size, a.limit)),
    }
}

/// Private node counts over a rooted tree.
#[pyclass(frozen, get_all, module = "dpcount")]
struct TreeEstimate {
    values: Vec<f64>,
    bound: f64,
    root_bound: f64,
    prefix_bound: f64,
    mode: String,
}

fn tree_of(parents: Vec<Option<usize>>) -> PyResult<Tree> {
    Tree::from_parents(&parents).map_err(err)
}

/// Number of distinct colors below each node. `items` are `(leaf, color)`.
#[pyfunction]
fn colored_counts(parents: Vec<Option<usize>>, items: Vec<(usize, u64)>) -> PyResult<Vec<u64>> {
    let tree = tree_of(parents)?;
    treecount::colored_counts(&tree, &ColoredDataset { items }).map_err(err)
}

/// Releases monotone node counts. Use `d=2` for colored counts and `d=1`
/// when each item touches a single root-to-leaf path.
#[pyfunction]
#[pyo3(signature = (
    parents, counts, *, d = 1, epsilon = 1.0, delta = 0.0, beta = 0.05, cap = 1, seed = None, zero_noise = false
))]
#[allow(clippy::too_many_arguments)]
fn tree_counts(
    parents: Vec<Option<usize>>,
    counts: Vec<u64>,
    d: usize,
    epsilon: f64,
    delta: f64,
    beta: f64,
    cap: usize,
    seed: Option<u64>,
    zero_noise: bool,
) -> PyResult<TreeEstimate> {
    let tree = tree_of(parents)?;
    let p = privacy(epsilon, delta, beta, cap, seed, zero_noise)?;
    let params = TreeParams { d, validate: true };
    let est = treecount::dp_tree_counts(&tree, &counts, &params, &p.budget, &p.source).map_err(err)?;
    Ok(TreeEstimate {
        values: est.values,
        bound: est.bound,
        root_bound: est.root_bound,
        prefix_bound: est.prefix_bound,
        mode: match est.mode {
            Mode::Pure => "pure",
            Mode::Approx => "approx",
        }
        .to_string(),
    })
}

#[pymodule]
#[pyo3(name = "dpcount")]
fn dpcount_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("DpcountError", py.get_type::<DpcountError>())?;
    m.add("ChecksumError", py.get_type::<ChecksumError>())?;
    m.add("SizeAbortError", py.get_type::<SizeAbortError>())?;
    m.add_class::<Database>()?;
    m.add_class::<CountTrie>()?;
    m.add_class::<QGramTable>()?;
    m.add_class::<TreeEstimate>()?;
    m.add_function(wrap_pyfunction!(build_trie, m)?)?;
    m.add_function(wrap_pyfunction!(build_qgram_table, m)?)?;
    m.add_function(wrap_pyfunction!(colored_counts, m)?)?;
    m.add_function(wrap_pyfunction!(tree_counts, m)?)?;
    Ok(())
}
