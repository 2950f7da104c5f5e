//! Versioned binary container shared by substring tries and q-gram
//! structures. All integers and floats are little-endian.
//!
//! ```text
//! magic          8   b"DPCOUNT\0"
//! version        u16 1
//! kind           u8  0 substring/pure, 1 substring/approx,
//!                    2 qgram/pure, 3 qgram/approx
//! zero_noise     u8  0 or 1
//! n              u64
//! ell            u64
//! sigma          u32
//! cap            u64
//! q              u64 (0 for substring structures)
//! seed           u64
//! epsilon        f64
//! delta          f64
//! beta           f64
//! alpha_total    f64
//! prune          f64
//! alpha_cand     f64
//! tau_cand       f64
//! root_bound     f64
//! prefix_bound   f64
//! absent_floor   f64
//! dict_len       u32, then dict_len bytes (code -> original byte)
//! node_count     u64, then node_count records of
//!                  parent u32 (0xFFFFFFFF for the root), symbol u8, value f64
//! checksum       32  SHA-256 of every preceding byte
//! ```
//!
//! Nodes are stored parents-first. Interior nodes of q-gram structures carry
//! NaN values.

use sha2::{Digest, Sha256};

use super::{Metadata, NoisyTrie, StructureKind};
use crate::corpus::TextCodec;
use crate::error::{Error, Result};
use crate::mechanisms::Mode;

pub const MAGIC: &[u8; 8] = b"DPCOUNT\0";
pub const VERSION: u16 = 1;
const NO_PARENT: u32 = u32::MAX;
const NODE_RECORD: usize = 4 + 1 + 8;

fn kind_tag(kind: StructureKind, mode: Mode) -> u8 {
    let k = match kind {
        StructureKind::Substring => 0,
        StructureKind::QGram => 2,
    };
    k + match mode {
        Mode::Pure => 0,
        Mode::Approx => 1,
    }
}

pub fn encode(meta: &Metadata, codec: Option<&TextCodec>, trie: &NoisyTrie) -> Vec<u8> {
    let mut out = Vec::with_capacity(160 + trie.len() * NODE_RECORD);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind_tag(meta.kind, meta.mode));
    out.push(meta.zero_noise as u8);
    for x in [meta.n, meta.ell] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out.extend_from_slice(&meta.sigma.to_le_bytes());
    for x in [meta.cap, meta.q, meta.seed] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for x in [
        meta.epsilon,
        meta.delta,
        meta.beta,
        meta.alpha_total,
        meta.prune_threshold,
        meta.alpha_candidates,
        meta.tau_candidates,
        meta.root_bound,
        meta.prefix_bound,
        meta.absent_floor,
    ] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let dict = codec.map(TextCodec::bytes).unwrap_or(&[]);
    out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
    out.extend_from_slice(dict);
    out.extend_from_slice(&(trie.len() as u64).to_le_bytes());
    for node in trie.nodes() {
        let parent = node.parent.map_or(NO_PARENT, |p| p as u32);
        out.extend_from_slice(&parent.to_le_bytes());
        out.push(node.symbol);
        out.extend_from_slice(&node.value.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<(Metadata, Option<TextCodec>, NoisyTrie)> {
    if bytes.len() < MAGIC.len() + 32 {
        return Err(Error::Format("input too short".into()));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let (body, sum) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != sum {
        return Err(Error::Checksum);
    }
    let mut r = Reader {
        buf: body,
        pos: MAGIC.len(),
    };
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (kind, mode) = match r.u8()? {
        0 => (StructureKind::Substring, Mode::Pure),
        1 => (StructureKind::Substring, Mode::Approx),
        2 => (StructureKind::QGram, Mode::Pure),
        3 => (StructureKind::QGram, Mode::Approx),
        t => return Err(Error::Format(format!("unknown kind tag {t}"))),
    };
    let zero_noise = match r.u8()? {
        0 => false,
        1 => true,
        f => return Err(Error::Format(format!("bad zero-noise flag {f}"))),
    };
    let n = r.u64()?;
    let ell = r.u64()?;
    let sigma = r.u32()?;
    let cap = r.u64()?;
    let q = r.u64()?;
    let seed = r.u64()?;
    let mut f = [0.0f64; 10];
    for x in &mut f {
        *x = r.f64()?;
    }
    let meta = Metadata {
        kind,
        mode,
        n,
        ell,
        sigma,
        cap,
        q,
        epsilon: f[0],
        delta: f[1],
        beta: f[2],
        seed,
        zero_noise,
        alpha_total: f[3],
        prune_threshold: f[4],
        alpha_candidates: f[5],
        tau_candidates: f[6],
        root_bound: f[7],
        prefix_bound: f[8],
        absent_floor: f[9],
    };
    let dict_len = r.u32()? as usize;
    let dict = r.take(dict_len)?;
    let codec = (dict_len > 0).then(|| TextCodec::from_bytes(dict.to_vec()));
    if codec.as_ref().is_some_and(|c| c.bytes() != dict) {
        return Err(Error::Format("dictionary is not strictly ascending".into()));
    }
    let count = r.u64()? as usize;
    if count == 0 || (body.len() - r.pos) / NODE_RECORD < count {
        return Err(Error::Format("node table length mismatch".into()));
    }
    let mut table = Vec::with_capacity(count);
    for _ in 0..count {
        let parent = r.u32()?;
        let symbol = r.u8()?;
        let value = r.f64()?;
        table.push(((parent != NO_PARENT).then_some(parent as usize), symbol, value));
    }
    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes".into()));
    }
    let trie = NoisyTrie::from_table(&table)?;
    Ok((meta, codec, trie))
}
