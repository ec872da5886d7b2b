//! Append-only embedding cache.
//!
//! Layout: one JSON header line, then binary records
//! `[u32 len][doc id][u32 len][unit][32-byte sha256 of text][dim × f64]`,
//! all integers and floats little-endian. Vectors are shared between units
//! whose text hashes are equal.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::DenseVec;
use crate::error::{Error, Result};

const CACHE_FORMAT: &str = "storyline-embedding-cache";
const CACHE_VERSION: u32 = 1;

pub type TextHash = [u8; 32];

pub fn text_hash(text: &str) -> TextHash {
    Sha256::digest(text.as_bytes()).into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub model: String,
    pub segmentation: String,
}

impl CacheHeader {
    pub fn new(dim: usize, model: impl Into<String>) -> Self {
        CacheHeader {
            format: CACHE_FORMAT.to_owned(),
            version: CACHE_VERSION,
            dim,
            model: model.into(),
            segmentation: super::SEGMENTATION_RULE.to_owned(),
        }
    }
}

#[derive(Debug, Default)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    header: Option<CacheHeader>,
    keys: HashMap<(String, String), TextHash>,
    vectors: HashMap<TextHash, DenseVec>,
    // Records added since the last flush, in insertion order.
    pending: Vec<(String, String, TextHash)>,
    header_written: bool,
}

fn read_u32(r: &mut impl Read) -> std::io::Result<Option<u32>> {
    let mut buf = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match r.read(&mut buf[filled..])? {
            0 if filled == 0 => return Ok(None),
            0 => return Err(std::io::ErrorKind::UnexpectedEof.into()),
            n => filled += n,
        }
    }
    Ok(Some(u32::from_le_bytes(buf)))
}

fn read_string(r: &mut impl Read, len: u32) -> std::io::Result<String> {
    let mut bytes = vec![0u8; len as usize];
    r.read_exact(&mut bytes)?;
    String::from_utf8(bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

impl EmbeddingCache {
    /// In-memory cache with no backing file.
    pub fn in_memory(header: CacheHeader) -> Self {
        EmbeddingCache {
            header: Some(header),
            ..Default::default()
        }
    }

    /// Open an existing cache file.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut header_line = Vec::new();
        loop {
            let mut byte = [0u8; 1];
            match reader.read(&mut byte).map_err(|e| Error::io(path, e))? {
                0 => return Err(Error::Cache(format!("{}: missing header", path.display()))),
                _ if byte[0] == b'\n' => break,
                _ => header_line.push(byte[0]),
            }
        }
        let header: CacheHeader = serde_json::from_slice(&header_line)
            .map_err(|e| Error::Cache(format!("{}: bad header: {e}", path.display())))?;
        if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
            return Err(Error::Cache(format!(
                "{}: unsupported format {} v{}",
                path.display(),
                header.format,
                header.version
            )));
        }
        let mut cache = EmbeddingCache {
            path: Some(path.to_path_buf()),
            header: Some(header.clone()),
            header_written: true,
            ..Default::default()
        };
        let truncated = |e: std::io::Error| Error::Cache(format!("{}: corrupt record: {e}", path.display()));
        let mut values = vec![0u8; 8 * header.dim];
        while let Some(len) = read_u32(&mut reader).map_err(truncated)? {
            let doc_id = read_string(&mut reader, len).map_err(truncated)?;
            let len = read_u32(&mut reader)
                .map_err(truncated)?
                .ok_or_else(|| truncated(std::io::ErrorKind::UnexpectedEof.into()))?;
            let unit = read_string(&mut reader, len).map_err(truncated)?;
            let mut hash = [0u8; 32];
            reader.read_exact(&mut hash).map_err(truncated)?;
            reader.read_exact(&mut values).map_err(truncated)?;
            let vec: Vec<f64> = values
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let vec = DenseVec::new(vec)?;
            cache.vectors.entry(hash).or_insert(vec);
            cache.keys.insert((doc_id, unit), hash);
        }
        Ok(cache)
    }

    /// Open `path` if it exists, else start an empty cache that will be
    /// created on the first flush.
    pub fn open_or_create(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::open(path)
        } else {
            Ok(EmbeddingCache {
                path: Some(path.to_path_buf()),
                ..Default::default()
            })
        }
    }

    pub fn header(&self) -> Option<&CacheHeader> {
        self.header.as_ref()
    }

    /// Fix the encoder identity of an empty cache, or check that it matches.
    pub fn bind(&mut self, dim: usize, model: &str) -> Result<()> {
        match &self.header {
            None => {
                self.header = Some(CacheHeader::new(dim, model));
                Ok(())
            }
            Some(h) if h.model != model => Err(Error::Cache(format!(
                "cache holds vectors from encoder {:?}, refusing to mix with {model:?}",
                h.model
            ))),
            Some(h) if h.dim != dim => Err(Error::DimensionMismatch {
                expected: h.dim,
                actual: dim,
            }),
            Some(_) => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn get(&self, doc_id: &str, unit: &str) -> Option<&DenseVec> {
        let hash = self.keys.get(&(doc_id.to_owned(), unit.to_owned()))?;
        self.vectors.get(hash)
    }

    pub fn contains(&self, doc_id: &str, unit: &str) -> bool {
        self.keys.contains_key(&(doc_id.to_owned(), unit.to_owned()))
    }

    pub fn vector_for_hash(&self, hash: &TextHash) -> Option<&DenseVec> {
        self.vectors.get(hash)
    }

    /// Record a unit vector. The cache must be bound to an encoder first.
    pub fn insert(&mut self, doc_id: &str, unit: &str, hash: TextHash, vec: DenseVec) -> Result<()> {
        let header = self
            .header
            .as_ref()
            .ok_or_else(|| Error::Cache("cache is not bound to an encoder".into()))?;
        vec.check_dim(header.dim)?;
        let key = (doc_id.to_owned(), unit.to_owned());
        if self.keys.get(&key) == Some(&hash) {
            return Ok(());
        }
        self.vectors.entry(hash).or_insert(vec);
        self.keys.insert(key, hash);
        self.pending.push((doc_id.to_owned(), unit.to_owned(), hash));
        Ok(())
    }

    /// Append pending records to the backing file. A no-op when nothing
    /// changed, so a warm cache is never rewritten.
    pub fn flush(&mut self) -> Result<()> {
        let Some(path) = self.path.clone() else {
            self.pending.clear();
            return Ok(());
        };
        if self.pending.is_empty() {
            return Ok(());
        }
        let header = self
            .header
            .clone()
            .ok_or_else(|| Error::Cache("cache is not bound to an encoder".into()))?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(&path, e);
        if !self.header_written {
            serde_json::to_writer(&mut out, &header)?;
            out.write_all(b"\n").map_err(io)?;
            self.header_written = true;
        }
        for (doc_id, unit, hash) in self.pending.drain(..) {
            out.write_all(&(doc_id.len() as u32).to_le_bytes()).map_err(io)?;
            out.write_all(doc_id.as_bytes()).map_err(io)?;
            out.write_all(&(unit.len() as u32).to_le_bytes()).map_err(io)?;
            out.write_all(unit.as_bytes()).map_err(io)?;
            out.write_all(&hash).map_err(io)?;
            for v in self.vectors[&hash].as_slice() {
                out.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }
}
