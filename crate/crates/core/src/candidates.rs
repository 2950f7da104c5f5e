//! Private candidate sets built by length doubling.
//!
//! Level `k` holds the strings `P_{2^k}` of length `2^k` whose noisy count
//! reached the threshold `τ`. Level 0 noises every letter of the alphabet;
//! level `k > 0` noises every string of `P_{2^{k-1}} ∘ P_{2^{k-1}}`, including
//! strings that never occur. Candidates of any other length `m` are assembled
//! from two members of the highest level below `m` that overlap (see
//! [`candidates_of_length`]).

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Database, Location, SuffixIndex, Symbol};
use crate::error::{invalid_param, Result};
use crate::mechanisms::{
    floor_log2, gaussian_max_error, gaussian_sample, gaussian_sigma, laplace_max_error,
    laplace_sample, BudgetLedger, NoiseSource, NoiseStream, PrivacyBudget,
};

/// Stream id for the per-string noise of the doubling levels.
pub const CANDIDATE_STREAM: &str = "candidates";

/// A candidate string with an occurrence in the database, if it has one.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub symbols: Vec<Symbol>,
    pub witness: Option<Location>,
}

/// One doubling level `P_{2^k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub len: usize,
    /// Retained strings in lexicographic order.
    pub members: Vec<Candidate>,
    /// Noisy count of each retained string.
    pub noisy: Vec<f64>,
    /// Number of strings that received noise at this level.
    pub examined: usize,
    /// Number of examined strings with true count zero.
    pub zero_examined: usize,
    /// Largest noise magnitude added to a string with true count zero.
    pub max_zero_noise: f64,
}

impl Level {
    pub fn contains(&self, s: &[Symbol]) -> bool {
        self.members
            .binary_search_by(|c| c.symbols.as_slice().cmp(s))
            .is_ok()
    }
}

/// The size abort: some level retained more than `nℓ` strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeAbort {
    pub level: u32,
    pub size: usize,
    pub limit: usize,
}

/// Noise distribution applied to every examined count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    Laplace { scale: f64 },
    Gaussian { sigma: f64 },
}

impl Noise {
    pub fn draw(&self, stream: &mut NoiseStream) -> Result<f64> {
        match *self {
            Noise::Laplace { scale } => laplace_sample(scale, stream),
            Noise::Gaussian { sigma } => gaussian_sample(sigma, stream),
        }
    }

    pub fn parameter(&self) -> f64 {
        match *self {
            Noise::Laplace { scale } => scale,
            Noise::Gaussian { sigma } => sigma,
        }
    }
}

/// Which strings a level examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Universe {
    /// All letters, then all of `P ∘ P`.
    AllPairs,
    /// Only strings that occur in the database.
    Occurring,
}

pub(crate) struct Doubling<'a> {
    pub top: u32,
    pub cap: usize,
    pub tau: f64,
    pub limit: usize,
    pub noise: Noise,
    pub stream_id: &'a str,
    pub universe: Universe,
}

fn noisy(
    source: &NoiseSource,
    stream_id: &str,
    noise: Noise,
    s: &[Symbol],
    count: u64,
    zero: &mut (f64, usize),
) -> Result<f64> {
    let z = noise.draw(&mut source.keyed(stream_id, s))?;
    if count == 0 {
        zero.0 = zero.0.max(z.abs());
        zero.1 += 1;
    }
    Ok(count as f64 + z)
}

fn witness(idx: &SuffixIndex, s: &[Symbol]) -> Option<Location> {
    idx.find(s).map(|p| idx.location(p))
}

/// Runs levels `0..=top`. Noise for a string is drawn from a stream keyed by
/// its content, so two runs that examine the same string add the same noise.
pub(crate) fn double(
    idx: &SuffixIndex,
    alphabet_size: usize,
    spec: &Doubling<'_>,
    source: &NoiseSource,
) -> Result<std::result::Result<Vec<Level>, SizeAbort>> {
    let mut levels: Vec<Level> = Vec::with_capacity(spec.top as usize + 1);
    for k in 0..=spec.top {
        let len = 1usize << k;
        let mut zero = (0.0f64, 0usize);
        let mut kept: Vec<(Vec<Symbol>, f64)> = Vec::new();
        let mut examined = 0usize;
        match (spec.universe, levels.last()) {
            (Universe::AllPairs, None) => {
                for a in 0..alphabet_size {
                    let s = vec![a as Symbol];
                    let c = idx.count(&s, spec.cap);
                    examined += 1;
                    let v = noisy(source, spec.stream_id, spec.noise, &s, c, &mut zero)?;
                    if v >= spec.tau {
                        kept.push((s, v));
                    }
                }
            }
            (Universe::AllPairs, Some(prev)) => {
                for q1 in &prev.members {
                    for q2 in &prev.members {
                        let mut s = q1.symbols.clone();
                        s.extend_from_slice(&q2.symbols);
                        // Pairs whose parts never occur cannot occur either.
                        let c = if q1.witness.is_some() && q2.witness.is_some() {
                            idx.count(&s, spec.cap)
                        } else {
                            0
                        };
                        examined += 1;
                        let v = noisy(source, spec.stream_id, spec.noise, &s, c, &mut zero)?;
                        if v >= spec.tau {
                            kept.push((s, v));
                        }
                    }
                }
            }
            (Universe::Occurring, prev) => {
                let half = len / 2;
                for stat in idx.distinct_substrings(len, spec.cap) {
                    let s = idx.substring(stat.pos, len);
                    if let Some(prev) = prev {
                        if !(prev.contains(&s[..half]) && prev.contains(&s[half..])) {
                            continue;
                        }
                    }
                    examined += 1;
                    let v = noisy(source, spec.stream_id, spec.noise, &s, stat.count, &mut zero)?;
                    if v >= spec.tau {
                        kept.push((s, v));
                    }
                }
            }
        }
        if kept.len() > spec.limit {
            return Ok(Err(SizeAbort {
                level: k,
                size: kept.len(),
                limit: spec.limit,
            }));
        }
        kept.sort_by(|a, b| a.0.cmp(&b.0));
        let (members, noisy): (Vec<_>, Vec<_>) = kept
            .into_iter()
            .map(|(s, v)| {
                let w = witness(idx, &s);
                (Candidate { symbols: s, witness: w }, v)
            })
            .unzip();
        levels.push(Level {
            len,
            members,
            noisy,
            examined,
            zero_examined: zero.1,
            max_zero_noise: zero.0,
        });
    }
    Ok(Ok(levels))
}

/// All strings of length `m` (`2^k < m < 2^{k+1}`) whose length-`2^k` prefix
/// and suffix both belong to `pow_set`, each with a witness when it occurs.
///
/// Such a string is `Q₁ · Q₂[o..]` for members `Q₁, Q₂` whose length-`o`
/// suffix and prefix agree, `o = 2^{k+1} - m`. Output is lexicographic.
pub fn candidates_of_length(m: usize, pow_set: &[Candidate], idx: &SuffixIndex) -> Vec<Candidate> {
    let Some(first) = pow_set.first() else {
        return Vec::new();
    };
    let p = first.symbols.len();
    assert!(p < m && m < 2 * p, "length {m} not strictly between {p} and {}", 2 * p);
    let o = 2 * p - m;
    let mut by_prefix: HashMap<&[Symbol], Vec<&Candidate>> = HashMap::new();
    for q in pow_set {
        by_prefix.entry(&q.symbols[..o]).or_default().push(q);
    }
    let mut out = Vec::new();
    for q1 in pow_set {
        let Some(partners) = by_prefix.get(&q1.symbols[p - o..]) else {
            continue;
        };
        for q2 in partners {
            let mut s = q1.symbols.clone();
            s.extend_from_slice(&q2.symbols[o..]);
            let w = if q1.witness.is_some() && q2.witness.is_some() {
                witness(idx, &s)
            } else {
                None
            };
            out.push(Candidate { symbols: s, witness: w });
        }
    }
    out.sort_by(|a, b| a.symbols.cmp(&b.symbols));
    out
}

/// Test and tuning knobs for the candidate construction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CandidateOptions {
    /// Replaces the threshold `τ = 2α`.
    pub threshold: Option<f64>,
}

/// The result of a candidate construction that did not abort.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    levels: Vec<Level>,
    ell: usize,
    tau: f64,
    alpha: f64,
    noise: Noise,
    ledger: BudgetLedger,
}

/// Outcome of a candidate build: the size abort is an expected result, not an
/// error.
#[derive(Debug, Clone)]
pub enum CandidateBuild {
    Ready(CandidateSet),
    Aborted(SizeAbort),
}

impl CandidateBuild {
    pub fn ready(self) -> Option<CandidateSet> {
        match self {
            CandidateBuild::Ready(c) => Some(c),
            CandidateBuild::Aborted(_) => None,
        }
    }
}

/// `max{ℓ²n², |Σ|}` from the union bound over all examined strings.
pub fn union_size(db: &Database) -> usize {
    let ln = db.ell() * db.n();
    (ln * ln).max(db.alphabet().size())
}

/// Per-level parameters `(ε₁, δ₁, β₁)` for `levels` equal shares.
fn per_level(budget: &PrivacyBudget, levels: u32) -> (f64, f64, f64) {
    let l = levels as f64;
    (budget.epsilon / l, budget.delta / l, budget.beta / l)
}

/// Error bound `α` and noise for the pure construction:
/// `α = (2ℓ/ε₁)·ln(max{ℓ²n²,|Σ|}/β₁)` with Laplace scale `2ℓ/ε₁`.
pub fn pure_parameters(db: &Database, budget: &PrivacyBudget, levels: u32) -> Result<(f64, Noise)> {
    let (e1, _, b1) = per_level(budget, levels);
    let l1 = 2.0 * db.ell() as f64;
    let alpha = laplace_max_error(l1, e1, union_size(db), b1)?;
    Ok((alpha, Noise::Laplace { scale: l1 / e1 }))
}

/// Error bound `α` and noise for the approximate construction:
/// `α = 2ε₁⁻¹√(2ℓΔ·ln(2/δ₁)·ln(2·max{ℓ²n²,|Σ|}/β₁))`, Gaussian with
/// `L2 = √(2ℓΔ)`.
pub fn approx_parameters(
    db: &Database,
    budget: &PrivacyBudget,
    levels: u32,
) -> Result<(f64, Noise)> {
    let (e1, d1, b1) = per_level(budget, levels);
    let l2 = (2.0 * db.ell() as f64 * budget.cap as f64).sqrt();
    let sigma = gaussian_sigma(l2, e1, d1)?;
    let alpha = gaussian_max_error(l2, e1, d1, union_size(db), b1)?;
    Ok((alpha, Noise::Gaussian { sigma }))
}

fn build(
    db: &Database,
    idx: &SuffixIndex,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &CandidateOptions,
    (alpha, noise): (f64, Noise),
) -> Result<CandidateBuild> {
    budget.check_cap(db.ell())?;
    let top = floor_log2(db.ell());
    let mut ledger = BudgetLedger::new(*budget);
    let (e1, d1, _) = per_level(budget, top + 1);
    for k in 0..=top {
        ledger.spend(format!("candidates/level{k}"), e1, d1)?;
    }
    let tau = opts.threshold.unwrap_or(2.0 * alpha);
    let spec = Doubling {
        top,
        cap: budget.cap,
        tau,
        limit: db.n() * db.ell(),
        noise,
        stream_id: CANDIDATE_STREAM,
        universe: Universe::AllPairs,
    };
    Ok(match double(idx, db.alphabet().size(), &spec, source)? {
        Ok(levels) => CandidateBuild::Ready(CandidateSet {
            levels,
            ell: db.ell(),
            tau,
            alpha,
            noise,
            ledger,
        }),
        Err(abort) => CandidateBuild::Aborted(abort),
    })
}

/// Pure construction with Laplace noise; requires `δ = 0`.
pub fn build_candidates_pure(
    db: &Database,
    idx: &SuffixIndex,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &CandidateOptions,
) -> Result<CandidateBuild> {
    if !budget.is_pure() {
        return Err(invalid_param("pure candidate construction requires delta = 0"));
    }
    let levels = floor_log2(db.ell()) + 1;
    build(db, idx, budget, source, opts, pure_parameters(db, budget, levels)?)
}

/// Approximate construction with Gaussian noise on `Δ`-capped counts;
/// requires `δ > 0` and a per-level `ε₁ < 1`.
pub fn build_candidates_approx(
    db: &Database,
    idx: &SuffixIndex,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &CandidateOptions,
) -> Result<CandidateBuild> {
    if budget.is_pure() {
        return Err(invalid_param("approximate candidate construction requires delta > 0"));
    }
    let levels = floor_log2(db.ell()) + 1;
    build(db, idx, budget, source, opts, approx_parameters(db, budget, levels)?)
}

/// Dispatches on `budget.delta`.
pub fn build_candidates(
    db: &Database,
    idx: &SuffixIndex,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &CandidateOptions,
) -> Result<CandidateBuild> {
    if budget.is_pure() {
        build_candidates_pure(db, idx, budget, source, opts)
    } else {
        build_candidates_approx(db, idx, budget, source, opts)
    }
}

impl CandidateSet {
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn pow_set(&self, k: usize) -> &[Candidate] {
        &self.levels[k].members
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    /// `C_m`, materialized on demand.
    pub fn of_length(&self, m: usize, idx: &SuffixIndex) -> Vec<Candidate> {
        if m == 0 || m > self.ell {
            return Vec::new();
        }
        let k = floor_log2(m) as usize;
        if m.is_power_of_two() {
            self.levels[k].members.clone()
        } else {
            candidates_of_length(m, &self.levels[k].members, idx)
        }
    }

    /// Calls `f` on every candidate of every length `1..=ℓ`, one length at a
    /// time.
    pub fn for_each(&self, idx: &SuffixIndex, mut f: impl FnMut(&Candidate)) {
        for m in 1..=self.ell {
            for c in self.of_length(m, idx) {
                f(&c);
            }
        }
    }

    /// `|C|`, without keeping more than one length in memory.
    pub fn total_size(&self, idx: &SuffixIndex) -> usize {
        let mut n = 0;
        self.for_each(idx, |_| n += 1);
        n
    }

    /// Whether `s` is a candidate, by the prefix/suffix membership rule.
    pub fn contains(&self, s: &[Symbol]) -> bool {
        let m = s.len();
        if m == 0 || m > self.ell {
            return false;
        }
        let level = &self.levels[floor_log2(m) as usize];
        let p = level.len;
        level.contains(&s[..p]) && level.contains(&s[m - p..])
    }

    /// Retained level members that never occur, i.e. kept only because of
    /// noise.
    pub fn unwitnessed(&self) -> HashSet<Vec<Symbol>> {
        self.levels
            .iter()
            .flat_map(|l| l.members.iter())
            .filter(|c| c.witness.is_none())
            .map(|c| c.symbols.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Database;

    fn db(texts: &[&str], sigma: usize) -> Database {
        let docs = texts
            .iter()
            .map(|t| t.bytes().map(|b| b - b'a').collect())
            .collect();
        Database::new(docs, crate::corpus::Alphabet::new(sigma).unwrap(), None).unwrap()
    }

    fn strs(c: &[Candidate]) -> Vec<String> {
        c.iter()
            .map(|c| c.symbols.iter().map(|&s| (b'a' + s) as char).collect())
            .collect()
    }

    fn exact(d: &Database, tau: f64) -> CandidateSet {
        let idx = SuffixIndex::build(d);
        let budget = PrivacyBudget::pure(1.0, 0.1, d.ell()).unwrap();
        build_candidates_pure(
            d,
            &idx,
            &budget,
            &NoiseSource::zero_noise(),
            &CandidateOptions {
                threshold: Some(tau),
            },
        )
        .unwrap()
        .ready()
        .unwrap()
    }

    #[test]
    fn abab_times_five() {
        let d = db(&["abab"; 5], 2);
        let idx = SuffixIndex::build(&d);
        let c = exact(&d, 3.0);
        assert_eq!(strs(c.pow_set(0)), ["a", "b"]);
        assert_eq!(strs(c.pow_set(1)), ["ab", "ba"]);
        assert_eq!(strs(&c.of_length(3, &idx)), ["aba", "bab"]);
        assert!(strs(&c.of_length(4, &idx)).contains(&"abab".to_string()));
    }

    #[test]
    fn threshold_above_everything() {
        let d = db(&["abab"; 5], 2);
        let idx = SuffixIndex::build(&d);
        let c = exact(&d, (d.n() * d.ell()) as f64 + 1.0);
        assert!(c.levels().iter().all(|l| l.members.is_empty()));
        assert_eq!(c.total_size(&idx), 0);
    }

    #[test]
    fn overlap_assembly() {
        let d = db(&["abba"], 2);
        let idx = SuffixIndex::build(&d);
        let p2 = |xs: &[&str]| -> Vec<Candidate> {
            xs.iter()
                .map(|x| {
                    let s: Vec<u8> = x.bytes().map(|b| b - b'a').collect();
                    Candidate {
                        witness: idx.find(&s).map(|p| idx.location(p)),
                        symbols: s,
                    }
                })
                .collect()
        };
        assert_eq!(strs(&candidates_of_length(3, &p2(&["ab", "ba"]), &idx)), ["aba", "bab"]);
        assert_eq!(strs(&candidates_of_length(3, &p2(&["aa"]), &idx)), ["aaa"]);
        assert!(candidates_of_length(3, &[], &idx).is_empty());
    }

    #[test]
    fn witnesses_point_at_occurrences() {
        let d = db(&["abba", "bab"], 2);
        let idx = SuffixIndex::build(&d);
        let c = exact(&d, 1.0);
        c.for_each(&idx, |cand| {
            if let Some(w) = cand.witness {
                let doc = d.docs()[w.doc].symbols();
                assert_eq!(&doc[w.offset..w.offset + cand.symbols.len()], &cand.symbols[..]);
            } else {
                assert_eq!(d.count_db(&cand.symbols, d.ell()).unwrap(), 0);
            }
        });
    }

    #[test]
    fn ledger_spends_whole_budget_per_level() {
        let d = db(&["abcab", "bca"], 3);
        let c = exact(&d, 1.0);
        let levels = floor_log2(d.ell()) + 1;
        assert_eq!(c.ledger().entries().len(), levels as usize);
        let (e, _) = c.ledger().spent();
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn alpha_grows_with_log_inverse_delta() {
        let d = db(&["abcab", "bca"], 3);
        let b4 = PrivacyBudget::new(0.5, 1e-4, 0.1, d.ell()).unwrap();
        let b8 = PrivacyBudget::new(0.5, 1e-8, 0.1, d.ell()).unwrap();
        let (a4, _) = approx_parameters(&d, &b4, 3).unwrap();
        let (a8, _) = approx_parameters(&d, &b8, 3).unwrap();
        let ratio = a8 / a4;
        let expected = ((2.0f64 / (1e-8 / 3.0)).ln() / (2.0f64 / (1e-4 / 3.0)).ln()).sqrt();
        assert!((ratio - expected).abs() < 1e-9, "{ratio} vs {expected}");
    }

    #[test]
    fn approx_rejects_large_level_epsilon() {
        let d = db(&["ab"], 2);
        let idx = SuffixIndex::build(&d);
        let b = PrivacyBudget::new(4.0, 1e-6, 0.1, 1).unwrap();
        assert!(build_candidates_approx(&d, &idx, &b, &NoiseSource::new(0), &Default::default()).is_err());
        let pure = PrivacyBudget::pure(1.0, 0.1, 1).unwrap();
        assert!(build_candidates_approx(&d, &idx, &pure, &NoiseSource::new(0), &Default::default()).is_err());
    }

    #[test]
    fn size_abort_reports_level() {
        // τ below zero keeps every examined string: |Σ| letters exceed nℓ = 2.
        let d = db(&["ab"], 4);
        let idx = SuffixIndex::build(&d);
        let budget = PrivacyBudget::pure(1.0, 0.1, 2).unwrap();
        let out = build_candidates_pure(
            &d,
            &idx,
            &budget,
            &NoiseSource::zero_noise(),
            &CandidateOptions {
                threshold: Some(-1.0),
            },
        )
        .unwrap();
        match out {
            CandidateBuild::Aborted(a) => {
                assert_eq!(a.level, 0);
                assert_eq!(a.size, 4);
                assert_eq!(a.limit, 2);
            }
            CandidateBuild::Ready(_) => panic!("expected abort"),
        }
    }
}
