//! Private counts of all q-grams for one fixed length `q`.
//!
//! The pure construction runs the doubling levels up to `2^⌊log q⌋` with half
//! the budget, assembles the length-`q` candidates from overlapping pairs and
//! noises them with the other half.
//!
//! The approximate construction ([`build_qgrams_approx`]) never touches a
//! string that does not occur in the database. It is distributed like the
//! reference algorithm [`build_qgrams_reference`], which noises all of
//! `P ∘ P` including zero-count strings, conditioned on every zero-count noise
//! staying below `α`. Both draw noise from streams keyed by string content, so
//! on a shared seed they add identical noise to every string they both
//! examine and their outputs coincide whenever that event holds.

use crate::candidates::{
    candidates_of_length, double, union_size, Candidate, Doubling, Level, Noise, SizeAbort,
    Universe,
};
use crate::corpus::{Database, SuffixIndex, Symbol, TextCodec};
use crate::countingtrie::{
    check_symbols, format, sort_mined, Metadata, NoisyTrie, StructureKind,
};
use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::mechanisms::{
    floor_log2, laplace_max_error, BudgetLedger, Mode, NoiseSource, PrivacyBudget,
};

pub const LEVEL_STREAM: &str = "qgram-levels";
pub const FINAL_STREAM: &str = "qgram-final";

/// Overrides for testing and tuning.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QGramOptions {
    /// Replaces the level error `α` (thresholds become `2α`; in approximate
    /// mode it is also the bound defining the coupling event).
    pub alpha: Option<f64>,
    /// Replaces the final-stage error of the pure construction.
    pub final_alpha: Option<f64>,
    /// Replaces the Laplace scale or Gaussian σ of every stage.
    pub noise: Option<f64>,
}

/// Released noisy counts of the retained q-grams.
#[derive(Debug, Clone, PartialEq)]
pub struct QGramStructure {
    trie: NoisyTrie,
    meta: Metadata,
    codec: Option<TextCodec>,
}

#[derive(Debug, Clone)]
pub enum QGramBuild {
    Ready(QGramStructure),
    Aborted(SizeAbort),
}

impl QGramBuild {
    pub fn ready(self) -> Option<QGramStructure> {
        match self {
            QGramBuild::Ready(s) => Some(s),
            QGramBuild::Aborted(_) => None,
        }
    }
}

/// Output of the reference construction together with the coupling event.
#[derive(Debug, Clone)]
pub struct ReferenceBuild {
    pub build: QGramBuild,
    /// Every noise added to a zero-count string had magnitude at most `α`.
    pub event_holds: bool,
    /// Number of zero-count strings that were noised.
    pub zero_count_noised: usize,
}

/// Parameters of the approximate construction with `L = ⌊log q⌋ + 2` stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxParameters {
    pub stages: u32,
    pub epsilon1: f64,
    pub beta1: f64,
    pub delta1: f64,
    pub sigma: f64,
    pub alpha: f64,
}

/// `ε₁ = ε/L`, `β₁ = min(β/L, δ/(3e^ε·L))`, `δ₁ = β₁`,
/// `σ = 2ε₁⁻¹√(2ℓΔ·ln(2/δ₁))`, `α = σ·√(ln(2·max{ℓ²n²,|Σ|}/β₁))`.
pub fn approx_parameters(db: &Database, q: usize, budget: &PrivacyBudget) -> Result<ApproxParameters> {
    let stages = floor_log2(q) + 2;
    let l = stages as f64;
    let epsilon1 = budget.epsilon / l;
    if epsilon1 >= 1.0 {
        return Err(Error::GaussianEpsilonTooLarge(epsilon1));
    }
    let beta1 = (budget.beta / l).min(budget.delta / (3.0 * budget.epsilon.exp() * l));
    let delta1 = beta1;
    let core = 2.0 * db.ell() as f64 * budget.cap as f64 * (2.0 / delta1).ln();
    let sigma = 2.0 / epsilon1 * core.sqrt();
    let alpha = sigma * (2.0 * union_size(db) as f64 / beta1).ln().sqrt();
    Ok(ApproxParameters {
        stages,
        epsilon1,
        beta1,
        delta1,
        sigma,
        alpha,
    })
}

fn check_q(db: &Database, q: usize, budget: &PrivacyBudget) -> Result<()> {
    if q == 0 || q > db.ell() {
        return Err(invalid_param(format!("q must be in [1, {}], got {q}", db.ell())));
    }
    budget.check_cap(db.ell())
}

fn structure(
    db: &Database,
    q: usize,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    kept: &[(Vec<Symbol>, f64)],
    bounds: [f64; 4],
) -> QGramStructure {
    let [alpha_levels, tau_levels, alpha_final, prune] = bounds;
    let mut trie = NoisyTrie::root(f64::NAN);
    for (s, v) in kept {
        trie.insert(s, *v, f64::NAN);
    }
    QGramStructure {
        trie,
        meta: Metadata {
            kind: StructureKind::QGram,
            mode: Mode::of(budget),
            n: db.n() as u64,
            ell: db.ell() as u64,
            sigma: db.alphabet().size() as u32,
            cap: budget.cap as u64,
            q: q as u64,
            epsilon: budget.epsilon,
            delta: budget.delta,
            beta: budget.beta,
            seed: source.seed(),
            zero_noise: source.is_zero_noise(),
            alpha_total: alpha_final,
            prune_threshold: prune,
            alpha_candidates: alpha_levels,
            tau_candidates: tau_levels,
            root_bound: 0.0,
            prefix_bound: 0.0,
            absent_floor: (tau_levels + alpha_levels).max(prune + alpha_final),
        },
        codec: db.codec().cloned(),
    }
}

/// Noises `cands` with per-string streams and keeps values `>= tau`.
/// Also returns the largest zero-count noise magnitude and the number of
/// zero-count strings.
#[allow(clippy::type_complexity)]
fn final_stage(
    cands: &[Candidate],
    idx: &SuffixIndex,
    cap: usize,
    noise: Noise,
    tau: f64,
    source: &NoiseSource,
) -> Result<(Vec<(Vec<Symbol>, f64)>, f64, usize)> {
    let mut kept = Vec::new();
    let mut zero_max = 0.0f64;
    let mut zeros = 0;
    for c in cands {
        let count = if c.witness.is_some() {
            idx.count(&c.symbols, cap)
        } else {
            0
        };
        let z = noise.draw(&mut source.keyed(FINAL_STREAM, &c.symbols))?;
        if count == 0 {
            zero_max = zero_max.max(z.abs());
            zeros += 1;
        }
        let v = count as f64 + z;
        if v >= tau {
            kept.push((c.symbols.clone(), v));
        }
    }
    Ok((kept, zero_max, zeros))
}

/// Length-`q` strings with prefix and suffix in the top level.
fn final_candidates(q: usize, top: &Level, idx: &SuffixIndex) -> Vec<Candidate> {
    if q == top.len {
        top.members.clone()
    } else {
        candidates_of_length(q, &top.members, idx)
    }
}

/// Pure construction.
pub fn build_qgrams_pure(
    db: &Database,
    idx: &SuffixIndex,
    q: usize,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &QGramOptions,
) -> Result<QGramBuild> {
    if !budget.is_pure() {
        return Err(invalid_param("pure q-gram construction requires delta = 0"));
    }
    check_q(db, q, budget)?;
    let j = floor_log2(q);
    let mut ledger = BudgetLedger::new(*budget);
    let halves = ledger.split("qgrams", &[0.5, 0.5])?;
    let (levels_budget, final_budget) = (halves[0], halves[1]);

    let (alpha_levels, level_noise) =
        crate::candidates::pure_parameters(db, &levels_budget, j + 1)?;
    let alpha_levels = opts.alpha.unwrap_or(alpha_levels);
    let level_noise = opts.noise.map_or(level_noise, |scale| Noise::Laplace { scale });
    let tau = 2.0 * alpha_levels;
    let spec = Doubling {
        top: j,
        cap: budget.cap,
        tau,
        limit: db.n() * db.ell(),
        noise: level_noise,
        stream_id: LEVEL_STREAM,
        universe: Universe::AllPairs,
    };
    let levels = match double(idx, db.alphabet().size(), &spec, source)? {
        Ok(l) => l,
        Err(a) => return Ok(QGramBuild::Aborted(a)),
    };
    let cands = final_candidates(q, &levels[j as usize], idx);

    let l1 = 2.0 * db.ell() as f64;
    let alpha_final = match opts.final_alpha {
        Some(a) => a,
        None => laplace_max_error(l1, final_budget.epsilon, union_size(db), final_budget.beta)?,
    };
    let noise = Noise::Laplace {
        scale: opts.noise.unwrap_or(l1 / final_budget.epsilon),
    };
    let prune = 2.0 * alpha_final;
    let (kept, _, _) = final_stage(&cands, idx, budget.cap, noise, prune, source)?;
    Ok(QGramBuild::Ready(structure(
        db,
        q,
        budget,
        source,
        &kept,
        [alpha_levels, tau, alpha_final, prune],
    )))
}

fn approx_common(
    db: &Database,
    idx: &SuffixIndex,
    q: usize,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &QGramOptions,
    universe: Universe,
) -> Result<ReferenceBuild> {
    if budget.is_pure() {
        return Err(invalid_param("approximate q-gram construction requires delta > 0"));
    }
    check_q(db, q, budget)?;
    let p = approx_parameters(db, q, budget)?;
    let mut ledger = BudgetLedger::new(*budget);
    for k in 0..p.stages {
        ledger.spend(format!("qgrams/stage{k}"), p.epsilon1, budget.delta / p.stages as f64)?;
    }
    let alpha = opts.alpha.unwrap_or(p.alpha);
    let noise = Noise::Gaussian {
        sigma: opts.noise.unwrap_or(p.sigma),
    };
    let tau = 2.0 * alpha;
    let j = floor_log2(q);
    let spec = Doubling {
        top: j,
        cap: budget.cap,
        tau,
        limit: db.n() * db.ell(),
        noise,
        stream_id: LEVEL_STREAM,
        universe,
    };
    let levels = match double(idx, db.alphabet().size(), &spec, source)? {
        Ok(l) => l,
        Err(a) => {
            return Ok(ReferenceBuild {
                build: QGramBuild::Aborted(a),
                event_holds: true,
                zero_count_noised: 0,
            })
        }
    };
    let top = &levels[j as usize];
    let cands = match universe {
        Universe::AllPairs => final_candidates(q, top, idx),
        // Occurrence filter first, then the prefix/suffix rule.
        Universe::Occurring => idx
            .distinct_substrings(q, budget.cap)
            .into_iter()
            .map(|st| idx.substring(st.pos, q))
            .filter(|s| top.contains(&s[..top.len]) && top.contains(&s[q - top.len..]))
            .map(|s| Candidate {
                witness: Some(idx.location(idx.find(&s).expect("occurring substring"))),
                symbols: s,
            })
            .collect(),
    };
    let (kept, zero_max, zeros) = final_stage(&cands, idx, budget.cap, noise, tau, source)?;
    let level_zero_max = levels.iter().map(|l| l.max_zero_noise).fold(0.0, f64::max);
    let level_zeros: usize = levels.iter().map(|l| l.zero_examined).sum();
    Ok(ReferenceBuild {
        build: QGramBuild::Ready(structure(db, q, budget, source, &kept, [alpha, tau, alpha, tau])),
        event_holds: zero_max.max(level_zero_max) <= alpha,
        zero_count_noised: zeros + level_zeros,
    })
}

/// Approximate construction that only ever noises strings occurring in the
/// database.
pub fn build_qgrams_approx(
    db: &Database,
    idx: &SuffixIndex,
    q: usize,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &QGramOptions,
) -> Result<QGramBuild> {
    Ok(approx_common(db, idx, q, budget, source, opts, Universe::Occurring)?.build)
}

/// Reference algorithm for the approximate construction: identical
/// parameters, but zero-count strings are noised as well. Used to test the
/// coupling; it is never needed to release data.
pub fn build_qgrams_reference(
    db: &Database,
    idx: &SuffixIndex,
    q: usize,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &QGramOptions,
) -> Result<ReferenceBuild> {
    approx_common(db, idx, q, budget, source, opts, Universe::AllPairs)
}

/// Dispatches on `budget.delta`.
pub fn build_qgrams(
    db: &Database,
    q: usize,
    budget: &PrivacyBudget,
    source: &NoiseSource,
    opts: &QGramOptions,
) -> Result<QGramBuild> {
    let idx = SuffixIndex::build(db);
    if budget.is_pure() {
        build_qgrams_pure(db, &idx, q, budget, source, opts)
    } else {
        build_qgrams_approx(db, &idx, q, budget, source, opts)
    }
}

impl QGramStructure {
    pub fn metadata(&self) -> &Metadata {
        &self.meta
    }

    pub fn q(&self) -> usize {
        self.meta.q as usize
    }

    pub fn codec(&self) -> Option<&TextCodec> {
        self.codec.as_ref()
    }

    /// Retained q-grams with their noisy counts, lexicographically.
    pub fn entries(&self) -> Vec<(Vec<Symbol>, f64)> {
        let q = self.q();
        self.trie.entries().into_iter().filter(|e| e.0.len() == q).collect()
    }

    /// The noisy count of a retained q-gram, else `0`.
    pub fn query(&self, pattern: &[Symbol]) -> Result<f64> {
        if pattern.len() != self.q() {
            return Err(invalid_input(format!(
                "pattern length {} differs from q = {}",
                pattern.len(),
                self.q()
            )));
        }
        check_symbols(pattern, self.meta.sigma)?;
        Ok(self.trie.walk(pattern).map_or(0.0, |v| self.trie.value(v)))
    }

    pub fn query_text(&self, text: &[u8]) -> Result<f64> {
        match &self.codec {
            Some(c) => match c.encode(text) {
                Ok(p) => self.query(&p),
                Err(_) if text.len() == self.q() => Ok(0.0),
                Err(e) => Err(e),
            },
            None => self.query(text),
        }
    }

    pub fn mine(&self, tau: f64) -> Vec<(Vec<Symbol>, f64)> {
        let mut out: Vec<_> = self.entries().into_iter().filter(|e| e.1 >= tau).collect();
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
        if meta.kind != StructureKind::QGram {
            return Err(Error::Format("not a q-gram structure".into()));
        }
        Ok(Self { trie, meta, codec })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Alphabet;

    fn db(texts: &[&str], sigma: usize) -> Database {
        let docs = texts.iter().map(|t| t.bytes().map(|b| b - b'a').collect()).collect();
        Database::new(docs, Alphabet::new(sigma).unwrap(), None).unwrap()
    }

    fn exact() -> QGramOptions {
        QGramOptions {
            alpha: Some(0.5),
            final_alpha: Some(0.5),
            noise: None,
        }
    }

    #[test]
    fn letters_with_exact_counts() {
        let d = db(&["abca", "cab"], 4);
        let idx = SuffixIndex::build(&d);
        let b = PrivacyBudget::pure(1.0, 0.1, d.ell()).unwrap();
        let s = build_qgrams_pure(&d, &idx, 1, &b, &NoiseSource::zero_noise(), &exact())
            .unwrap()
            .ready()
            .unwrap();
        assert_eq!(
            s.entries(),
            vec![(vec![0], 3.0), (vec![1], 2.0), (vec![2], 2.0)]
        );
        assert_eq!(s.query(&[3]).unwrap(), 0.0);
        assert!(s.query(&[0, 1]).is_err());
    }

    #[test]
    fn power_of_two_and_overlap() {
        let d = db(&["abab"; 5], 2);
        let idx = SuffixIndex::build(&d);
        let b = PrivacyBudget::pure(1.0, 0.1, d.ell()).unwrap();
        let opts = QGramOptions {
            alpha: Some(1.5),
            final_alpha: Some(0.5),
            noise: None,
        };
        let s2 = build_qgrams_pure(&d, &idx, 2, &b, &NoiseSource::zero_noise(), &opts)
            .unwrap()
            .ready()
            .unwrap();
        let got: Vec<_> = s2.entries().into_iter().map(|e| e.0).collect();
        assert_eq!(got, vec![vec![0, 1], vec![1, 0]]);
        let s3 = build_qgrams_pure(&d, &idx, 3, &b, &NoiseSource::zero_noise(), &opts)
            .unwrap()
            .ready()
            .unwrap();
        assert_eq!(s3.entries(), vec![(vec![0, 1, 0], 5.0), (vec![1, 0, 1], 5.0)]);
    }

    #[test]
    fn beta1_formula() {
        let d = db(&["abcdabcd"], 4);
        let b = PrivacyBudget::new(1.0, 1e-6, 0.1, 1).unwrap();
        let p = approx_parameters(&d, 8, &b).unwrap();
        assert_eq!(p.stages, 5);
        let expected = (0.1f64 / 5.0).min(1e-6 / (3.0 * 1f64.exp() * 5.0));
        assert_eq!(p.beta1, expected);
        assert_eq!(p.delta1, p.beta1);
    }

    #[test]
    fn approx_zero_noise_support() {
        let d = db(&["abcab", "bcab", "aaaa"], 3);
        let idx = SuffixIndex::build(&d);
        let b = PrivacyBudget::new(0.9, 1e-6, 0.1, d.ell()).unwrap();
        for q in 1..=d.ell() {
            let s = build_qgrams_approx(&d, &idx, q, &b, &NoiseSource::zero_noise(), &exact())
                .unwrap()
                .ready()
                .unwrap();
            let truth: Vec<_> = idx
                .distinct_substrings(q, d.ell())
                .into_iter()
                .map(|st| (idx.substring(st.pos, q), st.count as f64))
                .collect();
            assert_eq!(s.entries(), truth, "q={q}");
        }
    }

    #[test]
    fn coupling_with_small_noise() {
        let d = db(&["abcab", "bcab", "abca"], 3);
        let idx = SuffixIndex::build(&d);
        let b = PrivacyBudget::new(0.9, 1e-6, 0.1, d.ell()).unwrap();
        let opts = QGramOptions {
            alpha: Some(0.75),
            final_alpha: None,
            noise: Some(0.5),
        };
        let (mut held, mut failed) = (0, 0);
        for seed in 0..200 {
            let src = NoiseSource::new(seed);
            let a2 = build_qgrams_approx(&d, &idx, 3, &b, &src, &opts).unwrap().ready().unwrap();
            let a1 = build_qgrams_reference(&d, &idx, 3, &b, &src, &opts).unwrap();
            if a1.event_holds {
                held += 1;
                assert_eq!(a1.build.ready().unwrap().entries(), a2.entries(), "seed {seed}");
            } else {
                failed += 1;
            }
            for (s, _) in a2.entries() {
                assert!(d.count_db(&s, d.ell()).unwrap() > 0);
            }
        }
        assert!(held > 0 && failed > 0, "held {held} failed {failed}");
    }

    #[test]
    fn round_trip_and_kind_check() {
        let d = db(&["abca", "cab"], 4);
        let idx = SuffixIndex::build(&d);
        let b = PrivacyBudget::pure(1.0, 0.1, d.ell()).unwrap();
        let s = build_qgrams_pure(&d, &idx, 2, &b, &NoiseSource::zero_noise(), &exact())
            .unwrap()
            .ready()
            .unwrap();
        let bytes = s.to_bytes();
        let back = QGramStructure::from_bytes(&bytes).unwrap();
        assert_eq!(back.entries(), s.entries());
        assert_eq!(back.metadata(), s.metadata());
        assert!(crate::countingtrie::PrivateCountTrie::from_bytes(&bytes).is_err());
    }
}
