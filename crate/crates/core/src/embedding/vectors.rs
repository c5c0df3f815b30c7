//! Vector files.
//!
//! Binary layout: one ASCII header line
//! `FGRVEC v1 dim=<d> count=<n> dtype=f32 endian=little`, followed by `n`
//! rows of `u32` id byte length, id bytes and `d` little-endian `f32`s.
//!
//! Text layout: header `#FGRVEC-TEXT v1 dim=<d> count=<n>`, then one
//! `id \t v1 v2 ...` line per vector with shortest round-trip float
//! formatting.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::EmbeddingVector;
use crate::error::{Error, Result};

const BINARY_MAGIC: &str = "FGRVEC";
const TEXT_MAGIC: &str = "#FGRVEC-TEXT";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    Binary,
    Text,
}

fn uniform_dim(vectors: &[EmbeddingVector]) -> Result<usize> {
    let dim = vectors.first().map_or(0, EmbeddingVector::dim);
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::DimensionMismatch {
                id: v.id.clone(),
                expected: dim,
                actual: v.dim(),
            });
        }
    }
    Ok(dim)
}

pub fn save_vectors(vectors: &[EmbeddingVector], path: &Path) -> Result<()> {
    let dim = uniform_dim(vectors)?;
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(
        w,
        "{BINARY_MAGIC} {VERSION} dim={dim} count={} dtype=f32 endian=little",
        vectors.len()
    )
    .map_err(io)?;
    for v in vectors {
        let id = v.id.as_bytes();
        let len = u32::try_from(id.len())
            .map_err(|_| Error::InvalidRecord(format!("id of {} bytes is too long", id.len())))?;
        w.write_all(&len.to_le_bytes()).map_err(io)?;
        w.write_all(id).map_err(io)?;
        for x in &v.values {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn save_vectors_text(vectors: &[EmbeddingVector], path: &Path) -> Result<()> {
    let dim = uniform_dim(vectors)?;
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{TEXT_MAGIC} {VERSION} dim={dim} count={}", vectors.len()).map_err(io)?;
    for v in vectors {
        if v.id.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidRecord(format!("id {:?} contains a tab or line break", v.id)));
        }
        write!(w, "{}\t", v.id).map_err(io)?;
        for (i, x) in v.values.iter().enumerate() {
            if i > 0 {
                w.write_all(b" ").map_err(io)?;
            }
            write!(w, "{x}").map_err(io)?;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

struct Header {
    format: VectorFormat,
    dim: usize,
    count: usize,
}

fn parse_header(path: &Path, line: &str) -> Result<Header> {
    let corrupt = |m: String| Error::CorruptVectors {
        path: path.to_owned(),
        message: m,
    };
    let mut parts = line.split_whitespace();
    let format = match parts.next() {
        Some(BINARY_MAGIC) => VectorFormat::Binary,
        Some(TEXT_MAGIC) => VectorFormat::Text,
        _ => return Err(corrupt("missing magic".into())),
    };
    if parts.next() != Some(VERSION) {
        return Err(corrupt("unsupported version".into()));
    }
    let (mut dim, mut count) = (None, None);
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| corrupt(format!("bad header field `{kv}`")))?;
        match (k, v) {
            ("dim", v) => dim = v.parse().ok(),
            ("count", v) => count = v.parse().ok(),
            ("dtype", "f32") | ("endian", "little") => {}
            _ => return Err(corrupt(format!("unsupported header field `{kv}`"))),
        }
    }
    match (dim, count) {
        (Some(dim), Some(count)) => Ok(Header { format, dim, count }),
        _ => Err(corrupt("header lacks dim or count".into())),
    }
}

/// Loads either layout; the header decides which.
pub fn load_vectors(path: &Path) -> Result<Vec<EmbeddingVector>> {
    let io = |e| Error::io(path, e);
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut header = Vec::new();
    r.read_until(b'\n', &mut header).map_err(io)?;
    let corrupt = |m: String| Error::CorruptVectors {
        path: path.to_owned(),
        message: m,
    };
    if header.last() != Some(&b'\n') {
        return Err(corrupt("truncated header".into()));
    }
    let header = std::str::from_utf8(&header).map_err(|_| corrupt("header is not utf-8".into()))?;
    let h = parse_header(path, header.trim_end())?;
    let vectors = match h.format {
        VectorFormat::Binary => read_binary(path, &mut r, &h)?,
        VectorFormat::Text => read_text(path, r, &h)?,
    };
    let mut seen = HashSet::with_capacity(vectors.len());
    for v in &vectors {
        if !seen.insert(v.id.as_str()) {
            return Err(Error::DuplicateId {
                kind: "vector",
                id: v.id.clone(),
            });
        }
    }
    Ok(vectors)
}

fn read_binary(path: &Path, r: &mut impl Read, h: &Header) -> Result<Vec<EmbeddingVector>> {
    let truncated = |i: usize| Error::CorruptVectors {
        path: path.to_owned(),
        message: format!("truncated payload: header declares {} rows, row {} incomplete", h.count, i + 1),
    };
    let mut out = Vec::with_capacity(h.count);
    let mut row = vec![0u8; h.dim * 4];
    for i in 0..h.count {
        let mut len = [0u8; 4];
        r.read_exact(&mut len).map_err(|_| truncated(i))?;
        let mut id = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut id).map_err(|_| truncated(i))?;
        let id = String::from_utf8(id).map_err(|_| Error::CorruptVectors {
            path: path.to_owned(),
            message: format!("row {} id is not utf-8", i + 1),
        })?;
        r.read_exact(&mut row).map_err(|_| truncated(i))?;
        let values = row
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        out.push(EmbeddingVector::new(id, values));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::CorruptVectors {
            path: path.to_owned(),
            message: format!("trailing bytes after {} rows", h.count),
        });
    }
    Ok(out)
}

fn read_text(path: &Path, r: impl BufRead, h: &Header) -> Result<Vec<EmbeddingVector>> {
    let mut out = Vec::with_capacity(h.count);
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let n = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, n, "expected `id<TAB>values`"))?;
        let values = rest
            .split_whitespace()
            .map(str::parse::<f32>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, n, e.to_string()))?;
        if values.len() != h.dim {
            return Err(Error::DimensionMismatch {
                id: id.to_owned(),
                expected: h.dim,
                actual: values.len(),
            });
        }
        out.push(EmbeddingVector::new(id, values));
    }
    if out.len() != h.count {
        return Err(Error::CorruptVectors {
            path: path.to_owned(),
            message: format!("truncated payload: header declares {} rows, found {}", h.count, out.len()),
        });
    }
    Ok(out)
}
