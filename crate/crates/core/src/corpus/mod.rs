//! Documents, databases and exact (non-private) counting.
//!
//! Symbols are dense codes `0..|Σ|`. Text corpora are mapped onto codes by a
//! [`TextCodec`] recorded at ingestion time so that answers can be reported in
//! terms of the original bytes.

mod index;

pub use index::{Location, SubstringStat, SuffixIndex};

use crate::error::{invalid_input, invalid_param, Result};

/// A symbol code. Always `< Alphabet::size()`.
pub type Symbol = u8;

/// Alphabet of `size` contiguous codes `0..size`, `2 <= size <= 256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabet {
    size: u16,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if !(2..=256).contains(&size) {
            return Err(invalid_param(format!(
                "alphabet size must be in [2, 256], got {size}"
            )));
        }
        Ok(Self { size: size as u16 })
    }

    pub fn size(&self) -> usize {
        self.size as usize
    }

    pub fn contains(&self, symbol: Symbol) -> bool {
        (symbol as usize) < self.size()
    }

    /// Rejects patterns that use a code outside the alphabet.
    pub fn check(&self, pattern: &[Symbol]) -> Result<()> {
        match pattern.iter().find(|&&s| !self.contains(s)) {
            Some(s) => Err(invalid_input(format!(
                "symbol {s} outside alphabet of size {}",
                self.size
            ))),
            None => Ok(()),
        }
    }
}

/// A non-empty sequence of symbols; the privacy unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Document(Vec<Symbol>);

impl Document {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(invalid_input("documents must be non-empty"));
        }
        Ok(Self(symbols))
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[Symbol]> for Document {
    fn as_ref(&self) -> &[Symbol] {
        &self.0
    }
}

/// Number of (possibly overlapping) occurrences of `pattern` in `text`.
///
/// The empty pattern occurs `|text|` times by convention.
pub fn count(pattern: &[Symbol], text: &[Symbol]) -> usize {
    if pattern.is_empty() {
        return text.len();
    }
    if pattern.len() > text.len() {
        return 0;
    }
    text.windows(pattern.len()).filter(|w| *w == pattern).count()
}

/// `min(cap, count(pattern, text))`. `cap` must be at least 1.
pub fn count_capped(pattern: &[Symbol], text: &[Symbol], cap: usize) -> Result<usize> {
    if cap < 1 {
        return Err(invalid_param("cap must be at least 1"));
    }
    Ok(count(pattern, text).min(cap))
}

/// Maps raw bytes of a text corpus onto dense symbol codes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TextCodec {
    /// `bytes[code]` is the original byte for `code`, ascending.
    bytes: Vec<u8>,
}

impl TextCodec {
    pub fn from_bytes(mut bytes: Vec<u8>) -> Self {
        bytes.sort_unstable();
        bytes.dedup();
        Self { bytes }
    }

    pub fn observed(&self) -> usize {
        self.bytes.len()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn encode_byte(&self, b: u8) -> Option<Symbol> {
        self.bytes.binary_search(&b).ok().map(|i| i as Symbol)
    }

    pub fn encode(&self, text: &[u8]) -> Result<Vec<Symbol>> {
        text.iter()
            .map(|&b| {
                self.encode_byte(b).ok_or_else(|| {
                    invalid_input(format!("character {:?} is not in the corpus alphabet", b as char))
                })
            })
            .collect()
    }

    pub fn decode(&self, symbols: &[Symbol]) -> Vec<u8> {
        symbols
            .iter()
            .map(|&s| self.bytes.get(s as usize).copied().unwrap_or(b'?'))
            .collect()
    }
}

/// A multiset of documents together with the public bounds `(n, ℓ, |Σ|)`.
#[derive(Debug, Clone)]
pub struct Database {
    docs: Vec<Document>,
    ell: usize,
    alphabet: Alphabet,
    codec: Option<TextCodec>,
}

impl Database {
    /// Builds a database from symbol-coded documents. `ell` defaults to the
    /// longest document and must not be smaller than it.
    pub fn new(docs: Vec<Vec<Symbol>>, alphabet: Alphabet, ell: Option<usize>) -> Result<Self> {
        if docs.is_empty() {
            return Err(invalid_input("database must contain at least one document"));
        }
        let docs = docs
            .into_iter()
            .map(Document::new)
            .collect::<Result<Vec<_>>>()?;
        for d in &docs {
            alphabet.check(d.symbols())?;
        }
        let longest = docs.iter().map(Document::len).max().unwrap_or(0);
        let ell = match ell {
            Some(l) if l < longest => {
                return Err(invalid_input(format!(
                    "document of length {longest} exceeds the length bound {l}"
                )))
            }
            Some(l) => l,
            None => longest,
        };
        Ok(Self {
            docs,
            ell,
            alphabet,
            codec: None,
        })
    }

    /// Ingests text documents, mapping bytes to dense codes. The alphabet is
    /// the set of observed bytes unless `alphabet_size` pins a larger one.
    pub fn from_texts<T: AsRef<[u8]>>(
        texts: &[T],
        alphabet_size: Option<usize>,
        ell: Option<usize>,
    ) -> Result<Self> {
        let mut seen = [false; 256];
        for t in texts {
            for &b in t.as_ref() {
                seen[b as usize] = true;
            }
        }
        let codec = TextCodec::from_bytes((0..=255u8).filter(|&b| seen[b as usize]).collect());
        let size = match alphabet_size {
            Some(k) if k < codec.observed() => {
                return Err(invalid_input(format!(
                    "corpus uses {} distinct characters but the alphabet is pinned to {k}",
                    codec.observed()
                )))
            }
            Some(k) => k,
            None => codec.observed().max(2),
        };
        let docs = texts
            .iter()
            .map(|t| codec.encode(t.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let mut db = Self::new(docs, Alphabet::new(size)?, ell)?;
        db.codec = Some(codec);
        Ok(db)
    }

    /// Parses the line-oriented corpus format: one document per line and an
    /// optional leading `#alphabet=<int>` header.
    pub fn parse_corpus(input: &str, ell: Option<usize>) -> Result<Self> {
        Self::parse_corpus_with(input, ell, None)
    }

    /// Like [`Database::parse_corpus`]; a given `alphabet` replaces the
    /// header value.
    pub fn parse_corpus_with(input: &str, ell: Option<usize>, alphabet: Option<usize>) -> Result<Self> {
        let mut lines = input.lines().peekable();
        let mut pinned = None;
        if let Some(first) = lines.peek() {
            if let Some(rest) = first.strip_prefix("#alphabet=") {
                let k = rest.trim().parse::<usize>().map_err(|_| {
                    invalid_input(format!("malformed alphabet header {first:?}"))
                })?;
                pinned = Some(k);
                lines.next();
            }
        }
        let mut texts = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            if line.is_empty() {
                return Err(invalid_input(format!("empty document on line {}", i + 1)));
            }
            if let Some(cap) = ell {
                if line.len() > cap {
                    return Err(invalid_input(format!(
                        "document on line {} has length {} > {cap}",
                        i + 1,
                        line.len()
                    )));
                }
            }
            texts.push(line.as_bytes().to_vec());
        }
        Self::from_texts(&texts, alphabet.or(pinned), ell)
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    /// Number of documents `n`.
    pub fn n(&self) -> usize {
        self.docs.len()
    }

    /// Maximum document length `ℓ`.
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn codec(&self) -> Option<&TextCodec> {
        self.codec.as_ref()
    }

    /// Occurrences of `pattern` in document `doc`.
    pub fn count_in(&self, pattern: &[Symbol], doc: usize) -> Result<usize> {
        self.alphabet.check(pattern)?;
        let d = self
            .docs
            .get(doc)
            .ok_or_else(|| invalid_input(format!("no document at position {doc}")))?;
        Ok(count(pattern, d.symbols()))
    }

    /// `Σ_S min(cap, count(pattern, S))`. `cap = 1` is document count,
    /// `cap = ℓ` is substring count.
    pub fn count_db(&self, pattern: &[Symbol], cap: usize) -> Result<u64> {
        self.alphabet.check(pattern)?;
        if cap < 1 {
            return Err(invalid_param("cap must be at least 1"));
        }
        Ok(self
            .docs
            .iter()
            .map(|d| count(pattern, d.symbols()).min(cap) as u64)
            .sum())
    }

    /// The neighboring database obtained by replacing the document at
    /// `position` with `replacement`.
    pub fn replace(&self, position: usize, replacement: Vec<Symbol>) -> Result<Self> {
        if position >= self.docs.len() {
            return Err(invalid_input(format!(
                "position {position} out of range for {} documents",
                self.docs.len()
            )));
        }
        if replacement.len() > self.ell {
            return Err(invalid_input(format!(
                "replacement of length {} exceeds ℓ = {}",
                replacement.len(),
                self.ell
            )));
        }
        self.alphabet.check(&replacement)?;
        let mut next = self.clone();
        next.docs[position] = Document::new(replacement)?;
        Ok(next)
    }

    /// Documents as a sorted multiset, for order-insensitive comparison.
    pub fn sorted_docs(&self) -> Vec<&[Symbol]> {
        let mut v: Vec<&[Symbol]> = self.docs.iter().map(Document::symbols).collect();
        v.sort_unstable();
        v
    }

    pub fn total_len(&self) -> usize {
        self.docs.iter().map(Document::len).sum()
    }
}

impl PartialEq for Database {
    fn eq(&self, other: &Self) -> bool {
        self.ell == other.ell
            && self.alphabet == other.alphabet
            && self.sorted_docs() == other.sorted_docs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db(docs: &[&str]) -> Database {
        Database::from_texts(docs, None, None).unwrap()
    }

    #[test]
    fn count_examples() {
        assert_eq!(count(b"", b"abc"), 3);
        assert_eq!(count(b"abc", b"abc"), 1);
        assert_eq!(count(b"aa", b"aaaa"), 3);
        assert_eq!(count(b"abcd", b"abc"), 0);
    }

    #[test]
    fn capped_examples() {
        assert_eq!(count_capped(b"aa", b"aaaa", 1).unwrap(), 1);
        assert_eq!(count_capped(b"aa", b"aaaa", 2).unwrap(), 2);
        assert_eq!(count_capped(b"zz", b"aaaa", 5).unwrap(), 0);
        assert!(count_capped(b"a", b"a", 0).is_err());
    }

    #[test]
    fn count_db_examples() {
        let d = db(&["ab", "ba"]);
        let a = d.codec().unwrap().encode(b"a").unwrap();
        assert_eq!(d.count_db(&a, 1).unwrap(), 2);
        let d2 = db(&["aa", "ba"]);
        let a2 = d2.codec().unwrap().encode(b"a").unwrap();
        assert_eq!(d2.count_db(&a2, d2.ell()).unwrap(), 3);
        // "c" is outside the observed alphabet {a, b}: pin a third symbol.
        let d3 = Database::from_texts(&["ab", "ba"], Some(3), None).unwrap();
        assert_eq!(d3.count_db(&[2], 1).unwrap(), 0);
        assert!(d.count_db(&[7], 1).is_err());
    }

    #[test]
    fn replacement_examples() {
        let d = db(&["ab", "ba"]);
        let c = d.codec().unwrap().clone();
        let r = d.replace(0, c.encode(b"aa").unwrap()).unwrap();
        assert_eq!(r, db(&["aa", "ba"]));
        let single = db(&["ab"]);
        assert_eq!(single.replace(0, c.encode(b"ab").unwrap()).unwrap(), single);
        assert_eq!(
            d.replace(1, c.encode(b"bb").unwrap()).unwrap(),
            Database::from_texts(&["ab", "bb"], None, None).unwrap()
        );
        assert!(d.replace(2, vec![0]).is_err());
        assert!(d.replace(0, vec![0, 0, 0]).is_err());
    }

    #[test]
    fn rejects_empty_database_and_documents() {
        let a = Alphabet::new(2).unwrap();
        assert!(Database::new(vec![], a, None).is_err());
        assert!(Database::new(vec![vec![]], a, None).is_err());
        assert!(Alphabet::new(1).is_err());
        assert!(Alphabet::new(257).is_err());
    }

    #[test]
    fn corpus_header_pins_alphabet() {
        let d = Database::parse_corpus("#alphabet=4\nabab\nba\n", None).unwrap();
        assert_eq!(d.alphabet().size(), 4);
        assert_eq!(d.n(), 2);
        assert_eq!(d.ell(), 4);
        assert!(Database::parse_corpus("#alphabet=2\nabc\n", None).is_err());
        assert!(Database::parse_corpus("abc\nabcdef\n", Some(4)).is_err());
        assert!(Database::parse_corpus("abc\n\nab\n", None).is_err());
    }

    #[test]
    fn single_symbol_corpus_gets_binary_alphabet() {
        let d = db(&["aaa"]);
        assert_eq!(d.alphabet().size(), 2);
    }
}
