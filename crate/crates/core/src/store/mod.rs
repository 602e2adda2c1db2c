//! On-disk formats.
//!
//! Binary artifacts share one envelope:
//!
//! ```text
//! magic      4 bytes   "SSIX" (index) or "SSWT" (model)
//! version    u16 LE
//! kind       u8        1 = index, 2 = model
//! length     u64 LE    payload length in bytes
//! digest     u64 LE    first 8 bytes of the payload's SHA-256
//! payload
//! ```
//!
//! Index payload, integers as unsigned LEB128 varints:
//!
//! ```text
//! flags              u8; bit 0 set when terms are Porter stems
//! term count T
//! T x (byte length, UTF-8 bytes, frequency)
//! context count N
//! N x (doc id, distinct term count)
//! T x (posting count, first context id, then gaps to each next id)
//! ```
//!
//! Model payload: context count as u64 LE, one f64 LE weight per context,
//! then the weighted pair mass `Z` as f64 LE. Loading recomputes `Z` from the
//! weights and rejects the file if they disagree by more than `1e-9`
//! relative.
//!
//! Datasets (scored pairs, preferences, trainer configs, groups) are text;
//! see [`tsv`].

pub mod tsv;

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::corpus::Dictionary;
use crate::error::{Error, Result};
use crate::index::{ContextMeta, Index};
use crate::semantics::SemanticModel;
use crate::ContextId;

pub const FORMAT_VERSION: u16 = 1;
pub const INDEX_MAGIC: [u8; 4] = *b"SSIX";
pub const MODEL_MAGIC: [u8; 4] = *b"SSWT";
const KIND_INDEX: u8 = 1;
const KIND_MODEL: u8 = 2;
const HEADER_LEN: usize = 4 + 2 + 1 + 8 + 8;

/// Parsed envelope fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArtifactHeader {
    pub magic: [u8; 4],
    pub version: u16,
    pub kind: u8,
    pub payload_len: u64,
    pub digest: u64,
}

pub fn digest(payload: &[u8]) -> u64 {
    let d = Sha256::digest(payload);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn seal(magic: [u8; 4], kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&digest(payload).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Checks the envelope and returns the payload.
fn open(bytes: &[u8], magic: [u8; 4], kind: u8) -> Result<&[u8]> {
    if bytes.len() >= 4 && bytes[..4] != magic {
        return Err(Error::Unsupported(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(&magic)
        )));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptArtifact("truncated header".into()));
    }
    let header = ArtifactHeader {
        magic,
        version: u16::from_le_bytes(bytes[4..6].try_into().unwrap()),
        kind: bytes[6],
        payload_len: u64::from_le_bytes(bytes[7..15].try_into().unwrap()),
        digest: u64::from_le_bytes(bytes[15..23].try_into().unwrap()),
    };
    if header.version != FORMAT_VERSION {
        return Err(Error::Unsupported(format!("unsupported version {}", header.version)));
    }
    if header.kind != kind {
        return Err(Error::Unsupported(format!(
            "payload kind {} where {kind} expected",
            header.kind
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u64 != header.payload_len {
        return Err(Error::CorruptArtifact(format!(
            "payload is {} bytes, header says {}",
            payload.len(),
            header.payload_len
        )));
    }
    if digest(payload) != header.digest {
        return Err(Error::CorruptArtifact("digest mismatch".into()));
    }
    Ok(payload)
}

/// Writes `bytes` next to `path` and renames into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(e) => format!("{}.tmp", e.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or_else(|| Error::CorruptArtifact("unexpected end of payload".into()))?;
        self.pos += 1;
        Ok(b)
    }

    fn varint(&mut self) -> Result<u64> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::CorruptArtifact("varint too long".into()))
    }

    fn u32(&mut self) -> Result<u32> {
        u32::try_from(self.varint()?).map_err(|_| Error::CorruptArtifact("value exceeds u32".into()))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptArtifact("unexpected end of payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn u64_le(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CorruptArtifact("trailing bytes after payload".into()));
        }
        Ok(())
    }
}

/// Serializes an index to bytes.
pub fn encode_index(index: &Index) -> Vec<u8> {
    let mut p = Vec::new();
    p.push(u8::from(index.stemmed()));
    let dict = index.dictionary();
    put_varint(&mut p, dict.len() as u64);
    for (_, term, freq) in dict.iter() {
        put_varint(&mut p, term.len() as u64);
        p.extend_from_slice(term.as_bytes());
        put_varint(&mut p, freq);
    }
    put_varint(&mut p, index.num_contexts() as u64);
    for m in index.contexts() {
        put_varint(&mut p, u64::from(m.doc_id));
        put_varint(&mut p, u64::from(m.distinct_terms));
    }
    for t in 0..dict.len() {
        let list = index.postings(t as u32).expect("term in range");
        put_varint(&mut p, list.len() as u64);
        let mut prev = 0;
        for (i, &c) in list.iter().enumerate() {
            put_varint(&mut p, u64::from(if i == 0 { c } else { c - prev }));
            prev = c;
        }
    }
    seal(INDEX_MAGIC, KIND_INDEX, &p)
}

pub fn decode_index(bytes: &[u8]) -> Result<Index> {
    let mut r = Reader::new(open(bytes, INDEX_MAGIC, KIND_INDEX)?);
    let flags = r.byte()?;
    if flags > 1 {
        return Err(Error::Unsupported(format!("unknown index flags {flags:#x}")));
    }
    let n_terms = r.varint()? as usize;
    let mut entries = Vec::with_capacity(n_terms.min(1 << 20));
    for _ in 0..n_terms {
        let len = r.varint()? as usize;
        let term = std::str::from_utf8(r.bytes(len)?)
            .map_err(|_| Error::CorruptArtifact("term is not UTF-8".into()))?
            .to_string();
        entries.push((term, r.varint()?));
    }
    let dictionary = Dictionary::from_sorted(entries)?;
    let n_contexts = r.varint()? as usize;
    let mut contexts = Vec::with_capacity(n_contexts.min(1 << 24));
    for _ in 0..n_contexts {
        contexts.push(ContextMeta {
            doc_id: r.u32()?,
            distinct_terms: r.u32()?,
        });
    }
    let mut lists = Vec::with_capacity(n_terms);
    for _ in 0..n_terms {
        let n = r.varint()? as usize;
        let mut list: Vec<ContextId> = Vec::with_capacity(n.min(n_contexts));
        let mut prev: u64 = 0;
        for i in 0..n {
            let v = r.varint()?;
            let c = if i == 0 { v } else { prev + v };
            if c >= n_contexts as u64 || (i > 0 && v == 0) {
                return Err(Error::CorruptArtifact("invalid posting".into()));
            }
            list.push(c as ContextId);
            prev = c;
        }
        lists.push(list);
    }
    r.finish()?;
    Index::from_parts(dictionary, flags == 1, contexts, lists)
}

pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    write_atomic(path, &encode_index(index))
}

pub fn load_index(path: &Path) -> Result<Index> {
    decode_index(&fs::read(path)?)
}

pub fn encode_model(model: &SemanticModel) -> Vec<u8> {
    let w = model.weights();
    let mut p = Vec::with_capacity(16 + 8 * w.len());
    p.extend_from_slice(&(w.len() as u64).to_le_bytes());
    for x in w {
        p.extend_from_slice(&x.to_le_bytes());
    }
    p.extend_from_slice(&model.z_mass().to_le_bytes());
    seal(MODEL_MAGIC, KIND_MODEL, &p)
}

/// Decodes a model and checks it against `index`.
pub fn decode_model(bytes: &[u8], index: &Index) -> Result<SemanticModel> {
    let mut r = Reader::new(open(bytes, MODEL_MAGIC, KIND_MODEL)?);
    let n = r.u64_le()? as usize;
    if n.checked_mul(8).is_none_or(|b| b + 8 != r.buf.len() - r.pos) {
        return Err(Error::CorruptArtifact(
            "weight count disagrees with payload size".into(),
        ));
    }
    let weights = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let z = r.f64()?;
    r.finish()?;
    SemanticModel::from_stored(weights, z, index)
}

pub fn save_model(model: &SemanticModel, path: &Path) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub fn load_model(path: &Path, index: &Index) -> Result<SemanticModel> {
    decode_model(&fs::read(path)?, index)
}
