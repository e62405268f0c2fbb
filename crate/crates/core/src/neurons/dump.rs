//! Binary activation dump.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "FATR"  u16 version=1  u16 n_layers  u32 ffn_dim
//! repeated:
//!   u16 uid_len  uid (UTF-8)  u16 lang_len  lang (UTF-8)
//!   n_layers * ffn_dim f32, layer-major
//! ```

use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FactUid, LanguageCode};

use super::NeuronMatrix;

pub const MAGIC: &[u8; 4] = b"FATR";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub version: u16,
    pub n_layers: u16,
    pub ffn_dim: u32,
}

impl DumpHeader {
    pub fn new(n_layers: u16, ffn_dim: u32) -> Self {
        DumpHeader {
            version: VERSION,
            n_layers,
            ffn_dim,
        }
    }

    pub fn cells(&self) -> usize {
        self.n_layers as usize * self.ffn_dim as usize
    }
}

/// Run description written by the model adapter next to its dumps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterManifest {
    pub model: String,
    pub n_layers: u16,
    pub ffn_dim: u32,
    pub mask_token: String,
    pub vocab_size: usize,
    pub format_version: u16,
}

impl AdapterManifest {
    pub fn check_header(&self, h: &DumpHeader) -> Result<()> {
        if self.n_layers != h.n_layers || self.ffn_dim != h.ffn_dim || self.format_version != h.version {
            return Err(Error::Dump(format!(
                "header (v{}, {} layers, ffn {}) does not match manifest for {} (v{}, {} layers, ffn {})",
                h.version, h.n_layers, h.ffn_dim, self.model, self.format_version, self.n_layers, self.ffn_dim
            )));
        }
        Ok(())
    }
}

/// FFN intermediate activations of one fact, pooled over its mask positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub uid: FactUid,
    pub language: LanguageCode,
    pub values: NeuronMatrix,
}

pub struct DumpReader<R> {
    inner: R,
    header: DumpHeader,
    buf: Vec<u8>,
    index: usize,
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(Error::Dump("truncated record".into())),
            Ok(n) => filled += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::io("<activation dump>", e)),
        }
    }
    Ok(true)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    if read_exact_or_eof(r, buf)? {
        Ok(())
    } else {
        Err(Error::Dump(format!("unexpected end of file reading {what}")))
    }
}

impl<R: Read> DumpReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut head = [0u8; 12];
        read_exact(&mut inner, &mut head, "header")?;
        if &head[..4] != MAGIC {
            return Err(Error::Dump("bad magic bytes".into()));
        }
        let header = DumpHeader {
            version: u16::from_le_bytes([head[4], head[5]]),
            n_layers: u16::from_le_bytes([head[6], head[7]]),
            ffn_dim: u32::from_le_bytes([head[8], head[9], head[10], head[11]]),
        };
        if header.version != VERSION {
            return Err(Error::Dump(format!("unsupported version {}", header.version)));
        }
        if header.n_layers == 0 || header.ffn_dim == 0 {
            return Err(Error::Dump("zero-sized activation shape".into()));
        }
        Ok(DumpReader {
            inner,
            header,
            buf: Vec::new(),
            index: 0,
        })
    }

    pub fn header(&self) -> DumpHeader {
        self.header
    }

    fn read_string(&mut self, what: &str) -> Result<String> {
        let mut len = [0u8; 2];
        read_exact(&mut self.inner, &mut len, what)?;
        let mut s = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact(&mut self.inner, &mut s, what)?;
        String::from_utf8(s).map_err(|_| Error::Dump(format!("record {}: {what} is not UTF-8", self.index)))
    }

    fn next_record(&mut self) -> Result<Option<ActivationRecord>> {
        let mut len = [0u8; 2];
        if !read_exact_or_eof(&mut self.inner, &mut len)? {
            return Ok(None);
        }
        let mut uid = vec![0u8; u16::from_le_bytes(len) as usize];
        read_exact(&mut self.inner, &mut uid, "uid")?;
        let uid = std::str::from_utf8(&uid)
            .map_err(|_| Error::Dump(format!("record {}: uid is not UTF-8", self.index)))?
            .parse::<FactUid>()
            .map_err(|e| Error::Dump(format!("record {}: {e}", self.index)))?;
        let lang = self.read_string("language")?;
        let language = LanguageCode::new(lang).map_err(|e| Error::Dump(format!("record {}: {e}", self.index)))?;

        let cells = self.header.cells();
        self.buf.resize(cells * 4, 0);
        read_exact(&mut self.inner, &mut self.buf, "activations")?;
        let data: Vec<f64> = self
            .buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Dump(format!("record {} ({uid}) has non-finite activations", self.index)));
        }
        self.index += 1;
        Ok(Some(ActivationRecord {
            uid,
            language,
            values: NeuronMatrix::from_vec(self.header.n_layers as usize, self.header.ffn_dim as usize, data)?,
        }))
    }
}

impl<R: Read> Iterator for DumpReader<R> {
    type Item = Result<ActivationRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

pub struct DumpWriter<W> {
    inner: W,
    header: DumpHeader,
}

fn io<T>(r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io("<activation dump>", e))
}

impl<W: Write> DumpWriter<W> {
    pub fn new(mut inner: W, header: DumpHeader) -> Result<Self> {
        io(inner.write_all(MAGIC))?;
        io(inner.write_all(&header.version.to_le_bytes()))?;
        io(inner.write_all(&header.n_layers.to_le_bytes()))?;
        io(inner.write_all(&header.ffn_dim.to_le_bytes()))?;
        Ok(DumpWriter { inner, header })
    }

    /// Writes one record; `values` is layer-major.
    pub fn write_record(&mut self, uid: &FactUid, language: &LanguageCode, values: &[f32]) -> Result<()> {
        if values.len() != self.header.cells() {
            return Err(Error::Dump(format!(
                "record {uid} has {} values, header expects {}",
                values.len(),
                self.header.cells()
            )));
        }
        for s in [uid.to_string(), language.to_string()] {
            let len = u16::try_from(s.len()).map_err(|_| Error::Dump(format!("string too long: {s}")))?;
            io(self.inner.write_all(&len.to_le_bytes()))?;
            io(self.inner.write_all(s.as_bytes()))?;
        }
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        io(self.inner.write_all(&bytes))
    }

    pub fn finish(mut self) -> Result<W> {
        io(self.inner.flush())?;
        Ok(self.inner)
    }
}
