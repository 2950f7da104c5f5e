//! Error-evaluation harness. Each trial builds a structure with its own seed
//! and compares every answer with a brute-force count.
//!
//! Output (schema `dpcount-eval v1`, tab-separated):
//!
//! ```text
//! #dpcount-eval  v1
//! #<key>         <value>                  run metadata, one per line
//! trial seed pattern true noisy error     column header
//! <row>...                                one per (trial, pattern)
//! #summary trial seed status patterns max mean p50 p90 p99 alpha_total within
//! #summary <one line per trial>
//! #overall trials aborted within within_fraction max mean
//! #overall <one line>
//! ```
//!
//! Aggregates are computed from the printed (6-digit) row values, so they can
//! be recomputed exactly from the rows. Quantiles use the nearest-rank rule.
//! A trial that hits the size abort has no rows and counts as not within.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use dpcount::corpus::{Database, Symbol};
use dpcount::countingtrie::{alpha_total_bound, build_private_trie, TrieOptions};
use dpcount::mechanisms::{NoiseSource, PrivacyBudget};
use dpcount::qgrams::{build_qgrams, QGramOptions};

use crate::commands::{escape, fmt_count, load_corpus, CorpusArgs, Structure, Tuning};
use crate::config::{ModeArg, Privacy, PrivacyArgs, Task};
use crate::error::{config, io, Result};

pub const EVAL_SCHEMA: &str = "dpcount-eval\tv1";
pub const CROSSOVER_SCHEMA: &str = "dpcount-crossover\tv1";
/// Above this many `Σ^q` strings the q-gram sweep covers occurring q-grams
/// only.
pub const FULL_SWEEP_LIMIT: usize = 100_000;

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// `substring`, `document` or `qgram`.
    #[arg(long, value_enum, default_value = "substring")]
    pub task: Task,
    /// Pattern length for the q-gram task.
    #[arg(long, short)]
    pub q: Option<usize>,
    /// Count q-grams per document (cap 1) instead of per occurrence.
    #[arg(long)]
    pub per_document: bool,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Worker threads; trial `i` always uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Write the report here instead of standard output.
    #[arg(long, short, value_name = "FILE")]
    pub output: Option<PathBuf>,
    /// Omit per-pattern rows; keep metadata and aggregates.
    #[arg(long)]
    pub no_rows: bool,
    /// Refuse corpora with more substring windows than this.
    #[arg(long, default_value_t = 2_000_000)]
    pub max_windows: usize,
    /// Instead of trials, tabulate α_total of pure and approximate document
    /// counting for ℓ = 1..=ell-max on worst-case tries.
    #[arg(long)]
    pub crossover: bool,
    #[arg(long, default_value_t = 4096)]
    pub ell_max: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub pattern: String,
    pub true_count: u64,
    pub noisy: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub aborted: bool,
    pub patterns: usize,
    pub max: f64,
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub alpha_total: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub summary: TrialSummary,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub metadata: Vec<(String, String)>,
    pub trials: Vec<Trial>,
}

/// Rounds to the printed precision.
fn printed(x: f64) -> f64 {
    fmt_count(x).parse().expect("formatted float parses")
}

/// Nearest-rank quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn summarize(trial: usize, seed: u64, alpha_total: f64, rows: &[EvalRow]) -> TrialSummary {
    let mut errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    errs.sort_by(f64::total_cmp);
    let max = errs.last().copied().unwrap_or(0.0);
    let mean = if errs.is_empty() {
        0.0
    } else {
        printed(errs.iter().sum::<f64>() / errs.len() as f64)
    };
    let alpha_total = printed(alpha_total);
    TrialSummary {
        trial,
        seed,
        aborted: false,
        patterns: rows.len(),
        max,
        mean,
        p50: quantile(&errs, 0.5),
        p90: quantile(&errs, 0.9),
        p99: quantile(&errs, 0.99),
        alpha_total,
        within: max <= alpha_total,
    }
}

/// Brute-force capped counts of every distinct substring, by enumerating all
/// windows of every document.
pub fn oracle_substrings(db: &Database, cap: usize) -> BTreeMap<Vec<Symbol>, u64> {
    let mut total = BTreeMap::new();
    for d in db.docs() {
        let s = d.symbols();
        let mut own: HashMap<&[Symbol], usize> = HashMap::new();
        for i in 0..s.len() {
            for j in i + 1..=s.len() {
                *own.entry(&s[i..j]).or_default() += 1;
            }
        }
        for (p, c) in own {
            *total.entry(p.to_vec()).or_default() += c.min(cap) as u64;
        }
    }
    total
}

/// Brute-force capped counts of the q-grams to sweep: all of `Σ^q` over the
/// observed symbols when that is small, otherwise the occurring ones.
pub fn oracle_qgrams(db: &Database, q: usize, cap: usize) -> BTreeMap<Vec<Symbol>, u64> {
    let sigma = db.codec().map_or(db.alphabet().size(), |c| c.observed());
    let mut out: BTreeMap<Vec<Symbol>, u64> = BTreeMap::new();
    let full = (sigma as f64).powi(q as i32) <= FULL_SWEEP_LIMIT as f64;
    if full {
        let mut layer: Vec<Vec<Symbol>> = vec![vec![]];
        for _ in 0..q {
            layer = layer
                .iter()
                .flat_map(|s| {
                    (0..sigma).map(move |c| {
                        let mut t = s.clone();
                        t.push(c as Symbol);
                        t
                    })
                })
                .collect();
        }
        out.extend(layer.into_iter().map(|s| (s, 0)));
    }
    for d in db.docs() {
        let s = d.symbols();
        let mut own: HashMap<&[Symbol], usize> = HashMap::new();
        for w in s.windows(q) {
            *own.entry(w).or_default() += 1;
        }
        for (p, c) in own {
            *out.entry(p.to_vec()).or_default() += c.min(cap) as u64;
        }
    }
    out
}

fn windows(db: &Database) -> usize {
    db.docs().iter().map(|d| d.len() * (d.len() + 1) / 2).sum()
}

struct Plan<'a> {
    db: &'a Database,
    budget: PrivacyBudget,
    privacy: Privacy,
    q: Option<usize>,
    trie_opts: TrieOptions,
    qgram_opts: QGramOptions,
    truth: &'a BTreeMap<Vec<Symbol>, u64>,
}

impl Plan<'_> {
    fn decode(&self, p: &[Symbol]) -> String {
        match self.db.codec() {
            Some(c) => escape(&c.decode(p)),
            None => p.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        }
    }

    fn run(&self, trial: usize) -> Result<Trial> {
        let seed = self.privacy.seed.wrapping_add(trial as u64);
        let source = NoiseSource::with_zero_noise(seed, self.privacy.zero_noise);
        let built = match self.q {
            None => build_private_trie(self.db, &self.budget, &source, &self.trie_opts)?
                .ready()
                .map(Structure::Substring),
            Some(q) => build_qgrams(self.db, q, &self.budget, &source, &self.qgram_opts)?
                .ready()
                .map(Structure::QGram),
        };
        let Some(s) = built else {
            return Ok(Trial {
                summary: TrialSummary {
                    trial,
                    seed,
                    aborted: true,
                    patterns: 0,
                    max: 0.0,
                    mean: 0.0,
                    p50: 0.0,
                    p90: 0.0,
                    p99: 0.0,
                    alpha_total: 0.0,
                    within: false,
                },
                rows: Vec::new(),
            });
        };
        let rows = self
            .truth
            .iter()
            .map(|(p, &c)| {
                let noisy = printed(match &s {
                    Structure::Substring(t) => t.query(p)?,
                    Structure::QGram(g) => g.query(p)?,
                });
                Ok(EvalRow {
                    pattern: self.decode(p),
                    true_count: c,
                    noisy,
                    error: printed((noisy - c as f64).abs()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Trial {
            summary: summarize(trial, seed, s.metadata().alpha_total, &rows),
            rows,
        })
    }
}

pub fn cmd_eval(args: &EvalArgs, env_seed: Option<&str>) -> Result<EvalReport> {
    let privacy = args.privacy.resolve(env_seed)?;
    let db = load_corpus(&args.corpus)?;
    let q = match (args.task, args.q) {
        (Task::Qgram, Some(q)) if q >= 1 => Some(q),
        (Task::Qgram, _) => return Err(config("the q-gram task needs --q >= 1")),
        (Task::Treecount, _) => return Err(config("eval covers substring, document and qgram tasks")),
        (_, Some(_)) => return Err(config("--q applies to the qgram task only")),
        (_, None) => None,
    };
    if args.trials == 0 {
        return Err(config("--trials must be at least 1"));
    }
    let w = windows(&db);
    if w > args.max_windows {
        return Err(config(format!(
            "the corpus has {w} substring windows, above --max-windows {}; the exact oracle would be too slow. \
             Evaluate on a sample of documents or raise --max-windows",
            args.max_windows
        )));
    }
    let count_task = match (args.task, args.per_document) {
        (Task::Qgram, true) | (Task::Document, _) => Task::Document,
        _ => Task::Substring,
    };
    let budget = privacy.budget(count_task, db.ell())?;
    let truth = match q {
        None => oracle_substrings(&db, budget.cap),
        Some(q) => oracle_qgrams(&db, q, budget.cap),
    };
    let plan = Plan {
        db: &db,
        budget,
        privacy,
        q,
        trie_opts: args.tuning.trie_options(privacy.zero_noise),
        qgram_opts: args.tuning.qgram_options(privacy.zero_noise),
        truth: &truth,
    };
    let jobs = args.jobs.clamp(1, args.trials);
    let mut trials: Vec<Trial> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let plan = &plan;
                scope.spawn(move || {
                    (j..args.trials)
                        .step_by(jobs)
                        .map(|t| plan.run(t))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("eval worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    trials.sort_by_key(|t| t.summary.trial);
    let mode = match privacy.mode {
        ModeArg::Pure => "pure",
        ModeArg::Approx => "approx",
    };
    let task = match args.task {
        Task::Substring => "substring",
        Task::Document => "document",
        _ => "qgram",
    };
    let metadata = [
        ("task", task.to_string()),
        ("q", q.map_or("-".into(), |q| q.to_string())),
        ("mode", mode.to_string()),
        ("epsilon", privacy.epsilon.to_string()),
        ("delta", privacy.delta.to_string()),
        ("beta", privacy.beta.to_string()),
        ("cap", budget.cap.to_string()),
        ("n", db.n().to_string()),
        ("ell", db.ell().to_string()),
        ("sigma", db.alphabet().size().to_string()),
        ("base_seed", privacy.seed.to_string()),
        ("zero_noise", privacy.zero_noise.to_string()),
        ("trials", args.trials.to_string()),
        ("patterns", truth.len().to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    Ok(EvalReport { metadata, trials })
}

impl EvalReport {
    pub fn within_fraction(&self) -> f64 {
        let within = self.trials.iter().filter(|t| t.summary.within).count();
        within as f64 / self.trials.len().max(1) as f64
    }

    pub fn to_tsv(&self, rows: bool) -> String {
        let mut out = String::new();
        writeln!(out, "#{EVAL_SCHEMA}").unwrap();
        for (k, v) in &self.metadata {
            writeln!(out, "#{k}\t{v}").unwrap();
        }
        writeln!(out, "trial\tseed\tpattern\ttrue\tnoisy\terror").unwrap();
        if rows {
            for t in &self.trials {
                for r in &t.rows {
                    writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}",
                        t.summary.trial,
                        t.summary.seed,
                        r.pattern,
                        r.true_count,
                        fmt_count(r.noisy),
                        fmt_count(r.error)
                    )
                    .unwrap();
                }
            }
        }
        writeln!(out, "#summary\ttrial\tseed\tstatus\tpatterns\tmax\tmean\tp50\tp90\tp99\talpha_total\twithin").unwrap();
        for t in &self.trials {
            let s = &t.summary;
            writeln!(
                out,
                "#summary\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.trial,
                s.seed,
                if s.aborted { "size-abort" } else { "ok" },
                s.patterns,
                fmt_count(s.max),
                fmt_count(s.mean),
                fmt_count(s.p50),
                fmt_count(s.p90),
                fmt_count(s.p99),
                fmt_count(s.alpha_total),
                s.within as u8
            )
            .unwrap();
        }
        let all: Vec<f64> = self.trials.iter().flat_map(|t| t.rows.iter().map(|r| r.error)).collect();
        let max = all.iter().copied().fold(0.0, f64::max);
        let mean = if all.is_empty() { 0.0 } else { all.iter().sum::<f64>() / all.len() as f64 };
        writeln!(out, "#overall\ttrials\taborted\twithin\twithin_fraction\tmax\tmean").unwrap();
        writeln!(
            out,
            "#overall\t{}\t{}\t{}\t{}\t{}\t{}",
            self.trials.len(),
            self.trials.iter().filter(|t| t.summary.aborted).count(),
            self.trials.iter().filter(|t| t.summary.within).count(),
            fmt_count(self.within_fraction()),
            fmt_count(max),
            fmt_count(mean)
        )
        .unwrap();
        out
    }
}

/// `α_total` of pure and approximate document counting (`Δ = 1`) at length
/// bound `ell`, on the largest trie `n` documents can produce: one node per
/// distinct substring, every node a path root, paths of length `ell`.
pub fn worst_case_alphas(
    n: usize,
    sigma: usize,
    ell: usize,
    epsilon: f64,
    delta: f64,
    beta: f64,
) -> Result<(f64, f64)> {
    let mut strings = 0usize;
    let mut per_len = 1usize;
    for m in 1..=ell {
        per_len = per_len.saturating_mul(sigma);
        strings = strings.saturating_add(per_len.min(n * (ell - m + 1)));
    }
    let nodes = strings + 1;
    let t = ell.next_power_of_two();
    let shares = TrieOptions::default().shares;
    let pure = PrivacyBudget::new(epsilon, 0.0, beta, 1)?;
    let approx = PrivacyBudget::new(epsilon, delta, beta, 1)?;
    Ok((
        alpha_total_bound(ell, nodes, nodes, t, &pure, &shares)?,
        alpha_total_bound(ell, nodes, nodes, t, &approx, &shares)?,
    ))
}

/// Smallest `ℓ` from which on the approximate bound stays below the pure one
/// for every `ℓ ≤ rows.last()`.
pub fn crossover(rows: &[(usize, f64, f64)]) -> Option<usize> {
    let last_loss = rows.iter().rposition(|r| r.2 >= r.1);
    match last_loss {
        None => rows.first().map(|r| r.0),
        Some(i) => rows.get(i + 1).map(|r| r.0),
    }
}

pub fn cmd_crossover(args: &EvalArgs, env_seed: Option<&str>) -> Result<String> {
    let privacy = args.privacy.resolve(env_seed)?;
    if privacy.mode != ModeArg::Approx {
        return Err(config("the crossover table compares against approx mode: give --delta > 0"));
    }
    let db = load_corpus(&args.corpus)?;
    let (n, sigma) = (db.n(), db.alphabet().size());
    let rows = (1..=args.ell_max)
        .map(|ell| {
            let (p, a) = worst_case_alphas(n, sigma, ell, privacy.epsilon, privacy.delta, privacy.beta)?;
            Ok((ell, p, a))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::new();
    writeln!(out, "#{CROSSOVER_SCHEMA}").unwrap();
    for (k, v) in [
        ("n", n.to_string()),
        ("sigma", sigma.to_string()),
        ("epsilon", privacy.epsilon.to_string()),
        ("delta", privacy.delta.to_string()),
        ("beta", privacy.beta.to_string()),
        ("cap", "1".to_string()),
        ("crossover", crossover(&rows).map_or("none".into(), |c| c.to_string())),
    ] {
        writeln!(out, "#{k}\t{v}").unwrap();
    }
    writeln!(out, "ell\tpure_alpha_total\tapprox_alpha_total").unwrap();
    for (ell, p, a) in rows {
        writeln!(out, "{ell}\t{}\t{}", fmt_count(p), fmt_count(a)).unwrap();
    }
    Ok(out)
}

pub fn write_report(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io(p)),
        None => {
            crate::emit(text);
            Ok(())
        }
    }
}
