use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use dpcount::corpus::Database;
use dpcount::countingtrie::{
    build_private_trie, format, Metadata, PrivateCountTrie, StructureKind, TrieBuild, TrieOptions,
};
use dpcount::mechanisms::NoiseSource;
use dpcount::qgrams::{build_qgrams, QGramBuild, QGramOptions, QGramStructure};
use dpcount::treecount::{colored_counts, dp_tree_counts, ColoredDataset, Tree, TreeParams};
use serde::Serialize;
use serde_json::json;

use crate::config::{ModeArg, Privacy, PrivacyArgs, Task};
use crate::error::{config, io, CliError, Result};

/// Counts are printed with a fixed number of fraction digits so that golden
/// files are reproducible.
pub fn fmt_count(x: f64) -> String {
    format!("{x:.6}")
}

/// Pattern bytes for line-oriented output: lossy UTF-8 with `\t`, `\n`, `\r`
/// and `\\` escaped.
pub fn escape(bytes: &[u8]) -> String {
    let mut out = String::new();
    for c in String::from_utf8_lossy(bytes).chars() {
        match c {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Corpus file: one document per line, optional `#alphabet=<k>` header.
    #[arg(long, short, value_name = "FILE")]
    pub input: PathBuf,
    /// Document length bound ℓ. Longer lines are rejected. Defaults to the
    /// longest document, which is data-dependent: set it for real releases.
    #[arg(long = "max-len", value_name = "ELL")]
    pub max_len: Option<usize>,
    /// Alphabet size used in the bounds; at least the number of distinct bytes.
    #[arg(long)]
    pub alphabet: Option<usize>,
}

pub fn load_corpus(args: &CorpusArgs) -> Result<Database> {
    let text = std::fs::read_to_string(&args.input).map_err(io(&args.input))?;
    let db = Database::parse_corpus_with(&text, args.max_len, args.alphabet)?;
    if args.max_len.is_none() {
        eprintln!(
            "warning: --max-len not set; using the longest document ({}) as the public bound",
            db.ell()
        );
    }
    Ok(db)
}

/// Threshold overrides. In zero-noise mode they default to a candidate
/// threshold of 1 and a pruning floor of 1, which makes the pipeline exact.
#[derive(Debug, Clone, Copy, Default, Args)]
pub struct Tuning {
    /// Candidate threshold τ (default 2α).
    #[arg(long)]
    pub candidate_threshold: Option<f64>,
    /// α used in the pruning threshold 2α (default α_total).
    #[arg(long)]
    pub prune_alpha: Option<f64>,
}

impl Tuning {
    pub fn trie_options(&self, zero_noise: bool) -> TrieOptions {
        let (tau, prune) = if zero_noise { (Some(1.0), Some(0.5)) } else { (None, None) };
        TrieOptions {
            candidate_threshold: self.candidate_threshold.or(tau),
            prune_alpha: self.prune_alpha.or(prune),
            ..TrieOptions::default()
        }
    }

    pub fn qgram_options(&self, zero_noise: bool) -> QGramOptions {
        let floor = zero_noise.then_some(0.5);
        QGramOptions {
            alpha: self.candidate_threshold.map(|t| t / 2.0).or(floor),
            final_alpha: self.prune_alpha.or(floor),
            noise: None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BuildArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Where to write the structure.
    #[arg(long, short, value_name = "FILE")]
    pub output: PathBuf,
    /// `substring` (every occurrence) or `document` (cap 1).
    #[arg(long, value_enum, default_value = "substring")]
    pub task: Task,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Store 0 instead of the seed in the file header.
    #[arg(long)]
    pub redact_seed: bool,
}

#[derive(Debug, Clone, Args)]
pub struct QGramBuildArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, short, value_name = "FILE")]
    pub output: PathBuf,
    /// Pattern length.
    #[arg(long, short)]
    pub q: usize,
    /// `substring` (every occurrence) or `document` (cap 1).
    #[arg(long, value_enum, default_value = "substring")]
    pub task: Task,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
    #[command(flatten)]
    pub tuning: Tuning,
    #[arg(long)]
    pub redact_seed: bool,
}

/// A fully resolved build request.
#[derive(Debug, Clone, Serialize)]
pub struct BuildConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub task: Task,
    pub privacy: Privacy,
    pub q: Option<usize>,
    pub alphabet: Option<usize>,
    pub max_len: Option<usize>,
    #[serde(skip)]
    pub tuning: Tuning,
    pub redact_seed: bool,
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        match (self.task, self.q) {
            (Task::Treecount, _) => Err(config("use the tree-count subcommand for tree counting")),
            (Task::Qgram, _) => Err(config("choose substring or document counting for q-grams")),
            (_, Some(0)) => Err(config("q must be at least 1")),
            _ => Ok(()),
        }
    }

    fn corpus(&self) -> CorpusArgs {
        CorpusArgs {
            input: self.input.clone(),
            max_len: self.max_len,
            alphabet: self.alphabet,
        }
    }
}

impl BuildArgs {
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<BuildConfig> {
        Ok(BuildConfig {
            input: self.corpus.input.clone(),
            output: self.output.clone(),
            task: self.task,
            privacy: self.privacy.resolve(env_seed)?,
            q: None,
            alphabet: self.corpus.alphabet,
            max_len: self.corpus.max_len,
            tuning: self.tuning,
            redact_seed: self.redact_seed,
        })
    }
}

impl QGramBuildArgs {
    pub fn resolve(&self, env_seed: Option<&str>) -> Result<BuildConfig> {
        Ok(BuildConfig {
            input: self.corpus.input.clone(),
            output: self.output.clone(),
            task: self.task,
            privacy: self.privacy.resolve(env_seed)?,
            q: Some(self.q),
            alphabet: self.corpus.alphabet,
            max_len: self.corpus.max_len,
            tuning: self.tuning,
            redact_seed: self.redact_seed,
        })
    }
}

pub const BUILD_SCHEMA: &str = "dpcount-build/1";

fn warn_zero_noise(on: bool) {
    if on {
        eprintln!("WARNING: zero-noise mode: every noise draw is 0 and the output is NOT differentially private");
    }
}

fn abort_report(task: Task, a: &dpcount::candidates::SizeAbort) -> (serde_json::Value, CliError) {
    (
        json!({
            "schema": BUILD_SCHEMA,
            "status": "size-abort",
            "task": task,
            "level": a.level,
            "size": a.size,
            "limit": a.limit,
        }),
        CliError::SizeAbort {
            level: a.level,
            size: a.size,
            limit: a.limit,
        },
    )
}

/// Outcome of a build: the JSON summary to print, and the error to exit with
/// when the build aborted.
pub struct BuildOutcome {
    pub summary: serde_json::Value,
    pub abort: Option<CliError>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(io(path))
}

pub fn cmd_build(cfg: &BuildConfig) -> Result<BuildOutcome> {
    cfg.validate()?;
    let db = load_corpus(&cfg.corpus())?;
    let budget = cfg.privacy.budget(cfg.task, db.ell())?;
    let source = NoiseSource::with_zero_noise(cfg.privacy.seed, cfg.privacy.zero_noise);
    warn_zero_noise(cfg.privacy.zero_noise);
    if let Some(q) = cfg.q {
        return build_qgram_structure(cfg, &db, q, &budget, &source);
    }
    let opts = cfg.tuning.trie_options(cfg.privacy.zero_noise);
    match build_private_trie(&db, &budget, &source, &opts)? {
        TrieBuild::Aborted(a) => {
            let (summary, err) = abort_report(cfg.task, &a);
            Ok(BuildOutcome {
                summary,
                abort: Some(err),
            })
        }
        TrieBuild::Ready { mut trie, report } => {
            if cfg.redact_seed {
                trie.redact_seed();
            }
            write_file(&cfg.output, &trie.to_bytes())?;
            Ok(BuildOutcome {
                summary: json!({
                    "schema": BUILD_SCHEMA,
                    "status": "ok",
                    "task": cfg.task,
                    "output": cfg.output,
                    "retained": trie.retained(),
                    "candidates": report.candidates,
                    "trie_nodes": report.trie_nodes,
                    "paths": report.paths,
                    "metadata": trie.metadata(),
                    "ledger": report.ledger.entries(),
                }),
                abort: None,
            })
        }
    }
}

fn build_qgram_structure(
    cfg: &BuildConfig,
    db: &Database,
    q: usize,
    budget: &dpcount::mechanisms::PrivacyBudget,
    source: &NoiseSource,
) -> Result<BuildOutcome> {
    let opts = cfg.tuning.qgram_options(cfg.privacy.zero_noise);
    match build_qgrams(db, q, budget, source, &opts)? {
        QGramBuild::Aborted(a) => {
            let (summary, err) = abort_report(cfg.task, &a);
            Ok(BuildOutcome {
                summary,
                abort: Some(err),
            })
        }
        QGramBuild::Ready(mut s) => {
            if cfg.redact_seed {
                s.redact_seed();
            }
            write_file(&cfg.output, &s.to_bytes())?;
            Ok(BuildOutcome {
                summary: json!({
                    "schema": BUILD_SCHEMA,
                    "status": "ok",
                    "task": cfg.task,
                    "q": q,
                    "output": cfg.output,
                    "retained": s.entries().len(),
                    "metadata": s.metadata(),
                }),
                abort: None,
            })
        }
    }
}

/// A loaded structure of either kind.
pub enum Structure {
    Substring(PrivateCountTrie),
    QGram(QGramStructure),
}

impl Structure {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, _, _) = format::decode(bytes)?;
        Ok(match meta.kind {
            StructureKind::Substring => Structure::Substring(PrivateCountTrie::from_bytes(bytes)?),
            StructureKind::QGram => Structure::QGram(QGramStructure::from_bytes(bytes)?),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(io(path))?)
    }

    pub fn metadata(&self) -> &Metadata {
        match self {
            Structure::Substring(t) => t.metadata(),
            Structure::QGram(s) => s.metadata(),
        }
    }

    pub fn query_text(&self, pattern: &[u8]) -> Result<f64> {
        Ok(match self {
            Structure::Substring(t) => t.query_text(pattern)?,
            Structure::QGram(s) => s.query_text(pattern)?,
        })
    }

    fn decode(&self, symbols: &[u8]) -> Vec<u8> {
        let codec = match self {
            Structure::Substring(t) => t.codec(),
            Structure::QGram(s) => s.codec(),
        };
        match codec {
            Some(c) => c.decode(symbols),
            None => symbols.to_vec(),
        }
    }

    /// Stored patterns (as text) with noisy count at least `tau`, by count
    /// descending, then lexicographically.
    pub fn mine(&self, tau: f64) -> Vec<(Vec<u8>, f64)> {
        let raw = match self {
            Structure::Substring(t) => t.mine(tau),
            Structure::QGram(s) => s.mine(tau),
        };
        raw.into_iter().map(|(p, c)| (self.decode(&p), c)).collect()
    }
}

#[derive(Debug, Clone, Args)]
pub struct QueryArgs {
    /// Structure file written by `build` or `qgram-build`.
    #[arg(long, short, value_name = "FILE")]
    pub structure: PathBuf,
    /// Pattern to count.
    pub pattern: Option<String>,
    /// File with one pattern per line; prints `pattern<TAB>count` rows.
    #[arg(long, value_name = "FILE", conflicts_with = "pattern")]
    pub patterns: Option<PathBuf>,
    /// Print the structure metadata as JSON before the counts.
    #[arg(long)]
    pub metadata: bool,
}

pub fn cmd_query(args: &QueryArgs) -> Result<String> {
    let s = Structure::load(&args.structure)?;
    let mut out = String::new();
    if args.metadata {
        writeln!(out, "{}", serde_json::to_string(s.metadata()).expect("metadata serializes")).unwrap();
    }
    let ell = s.metadata().ell as usize;
    let answer = |p: &[u8]| -> Result<f64> {
        if p.len() > ell {
            eprintln!(
                "warning: pattern of length {} is longer than the document bound {ell}; answering 0",
                p.len()
            );
            return Ok(0.0);
        }
        s.query_text(p)
    };
    match (&args.pattern, &args.patterns) {
        (Some(p), _) => writeln!(out, "{}", fmt_count(answer(p.as_bytes())?)).unwrap(),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(io(path))?;
            for line in text.lines() {
                let line = line.strip_suffix('\r').unwrap_or(line);
                writeln!(out, "{}\t{}", escape(line.as_bytes()), fmt_count(answer(line.as_bytes())?)).unwrap();
            }
        }
        (None, None) => return Err(config("give a pattern or --patterns FILE")),
    }
    Ok(out)
}

#[derive(Debug, Clone, Args)]
pub struct MineArgs {
    #[arg(long, short, value_name = "FILE")]
    pub structure: PathBuf,
    /// Report patterns whose noisy count is at least this value.
    #[arg(long)]
    pub tau: f64,
}

pub fn cmd_mine(args: &MineArgs) -> Result<String> {
    if args.tau.is_nan() || args.tau < 0.0 {
        return Err(config(format!("tau must be non-negative, got {}", args.tau)));
    }
    let s = Structure::load(&args.structure)?;
    let mut out = String::new();
    for (p, c) in s.mine(args.tau) {
        writeln!(out, "{}\t{}", escape(&p), fmt_count(c)).unwrap();
    }
    Ok(out)
}

#[derive(Debug, Clone, Args)]
pub struct TreeCountArgs {
    /// Tree file: `node parent` per line, parent `-` for the root.
    #[arg(long, value_name = "FILE")]
    pub tree: PathBuf,
    /// Colored items: `leaf color` per line. Counts distinct colors below
    /// every node (sensitivity d = 2, Δ = 1).
    #[arg(long, value_name = "FILE", conflicts_with = "counts", required_unless_present = "counts")]
    pub items: Option<PathBuf>,
    /// Precomputed monotone counts: `node count` per line.
    #[arg(long, value_name = "FILE")]
    pub counts: Option<PathBuf>,
    /// Leaf sensitivity d: how many leaves one neighbor change can affect.
    #[arg(long)]
    pub d: Option<usize>,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
}

pub const TREE_SCHEMA: &str = "dpcount-tree-count\tv1";

fn parse_counts(text: &str, n: usize) -> Result<Vec<u64>> {
    let mut counts = vec![None; n];
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(config(format!("counts line {}: expected `node count`", i + 1)));
        };
        let v: usize = a.parse().map_err(|_| config(format!("counts line {}: bad node {a:?}", i + 1)))?;
        let c: u64 = b.parse().map_err(|_| config(format!("counts line {}: bad count {b:?}", i + 1)))?;
        let slot = counts
            .get_mut(v)
            .ok_or_else(|| config(format!("counts line {}: unknown node {v}", i + 1)))?;
        if slot.replace(c).is_some() {
            return Err(config(format!("counts line {}: node {v} repeated", i + 1)));
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(v, c)| c.ok_or_else(|| config(format!("no count for node {v}"))))
        .collect()
}

pub fn cmd_tree_count(args: &TreeCountArgs, env_seed: Option<&str>) -> Result<String> {
    let privacy = args.privacy.resolve(env_seed)?;
    let read = |p: &Path| std::fs::read_to_string(p).map_err(io(p));
    let tree = Tree::parse(&read(&args.tree)?)?;
    let (counts, default_d) = match (&args.items, &args.counts) {
        (Some(items), _) => {
            let data = ColoredDataset::parse(&read(items)?)?;
            (colored_counts(&tree, &data)?, 2)
        }
        (None, Some(c)) => (parse_counts(&read(c)?, tree.len())?, 1),
        (None, None) => return Err(config("give --items or --counts")),
    };
    let budget = privacy.budget(Task::Treecount, usize::MAX)?;
    let params = TreeParams {
        d: args.d.unwrap_or(default_d),
        validate: true,
    };
    warn_zero_noise(privacy.zero_noise);
    let source = NoiseSource::with_zero_noise(privacy.seed, privacy.zero_noise);
    let est = dp_tree_counts(&tree, &counts, &params, &budget, &source)?;
    let mut out = String::new();
    writeln!(out, "#{TREE_SCHEMA}").unwrap();
    let mode = match privacy.mode {
        ModeArg::Pure => "pure",
        ModeArg::Approx => "approx",
    };
    for (k, v) in [
        ("mode", mode.to_string()),
        ("epsilon", privacy.epsilon.to_string()),
        ("delta", privacy.delta.to_string()),
        ("beta", privacy.beta.to_string()),
        ("cap", budget.cap.to_string()),
        ("d", params.d.to_string()),
        ("zero_noise", privacy.zero_noise.to_string()),
        ("bound", fmt_count(est.bound)),
    ] {
        writeln!(out, "#{k}\t{v}").unwrap();
    }
    writeln!(out, "node\testimate").unwrap();
    for (v, x) in est.values.iter().enumerate() {
        writeln!(out, "{v}\t{}", fmt_count(*x)).unwrap();
    }
    Ok(out)
}
