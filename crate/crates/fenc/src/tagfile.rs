//! Binary photon tag files.
//!
//! Layout, all little-endian: magic `NVTS`, `u32` version, `u64`
//! duration (ps), `u64` tag count, `u64` seed, `u64` source digest, then
//! `count` `u64` timestamps in picoseconds.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fenc_core::photonsim::TagStream;
use serde::Serialize;

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"NVTS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Header {
    pub version: u32,
    pub duration_ps: u64,
    pub count: u64,
    pub seed: u64,
    pub source_digest: u64,
}

impl Header {
    pub fn of(stream: &TagStream) -> Self {
        Header {
            version: VERSION,
            duration_ps: stream.duration_ps(),
            count: stream.len() as u64,
            seed: stream.seed,
            source_digest: stream.source_digest,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..8].copy_from_slice(&self.version.to_le_bytes());
        b[8..16].copy_from_slice(&self.duration_ps.to_le_bytes());
        b[16..24].copy_from_slice(&self.count.to_le_bytes());
        b[24..32].copy_from_slice(&self.seed.to_le_bytes());
        b[32..40].copy_from_slice(&self.source_digest.to_le_bytes());
        b
    }

    pub fn parse(b: &[u8; HEADER_LEN]) -> Result<Self> {
        if b[0..4] != MAGIC {
            return Err(CliError::format("tag file", "bad magic"));
        }
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
        let version = u32::from_le_bytes(b[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(CliError::format("tag file", format!("unsupported version {version}")));
        }
        Ok(Header {
            version,
            duration_ps: u64_at(8),
            count: u64_at(16),
            seed: u64_at(24),
            source_digest: u64_at(32),
        })
    }
}

pub fn write_stream(mut w: impl Write, stream: &TagStream) -> std::io::Result<()> {
    w.write_all(&Header::of(stream).to_bytes())?;
    let mut buf = Vec::with_capacity(8 * 8192);
    for chunk in stream.timestamps().chunks(8192) {
        buf.clear();
        for t in chunk {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()
}

pub fn to_bytes(stream: &TagStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * stream.len());
    write_stream(&mut out, stream).expect("writing to a Vec cannot fail");
    out
}

/// Streaming reader over the timestamps of a tag file.
pub struct TagReader<R> {
    inner: R,
    header: Header,
    remaining: u64,
    last: Option<u64>,
}

impl TagReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| CliError::io(path, e))?;
        TagReader::new(BufReader::with_capacity(1 << 16, f))
    }
}

impl<R: Read> TagReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let mut b = [0u8; HEADER_LEN];
        inner
            .read_exact(&mut b)
            .map_err(|_| CliError::format("tag file", "truncated header"))?;
        let header = Header::parse(&b)?;
        Ok(TagReader {
            inner,
            header,
            remaining: header.count,
            last: None,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    fn next_tag(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| CliError::format("tag file", "fewer timestamps than the header declares"))?;
        let t = u64::from_le_bytes(b);
        if self.last.is_some_and(|p| t <= p) {
            return Err(CliError::format("tag file", "timestamps not strictly increasing"));
        }
        if t > self.header.duration_ps {
            return Err(CliError::format("tag file", "timestamp beyond the stream duration"));
        }
        self.last = Some(t);
        Ok(t)
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<u64>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let r = self.next_tag();
        if r.is_err() {
            self.remaining = 0;
        }
        Some(r)
    }
}

pub fn read_stream(r: impl Read) -> Result<TagStream> {
    let mut reader = TagReader::new(r)?;
    let header = reader.header;
    let mut ts = Vec::with_capacity(header.count.min(1 << 28) as usize);
    for t in &mut reader {
        ts.push(t?);
    }
    let mut extra = [0u8; 1];
    if reader.inner.read(&mut extra).map_err(|e| CliError::io("<tag stream>", e))? != 0 {
        return Err(CliError::format("tag file", "trailing bytes after the declared timestamps"));
    }
    Ok(TagStream::new(ts, header.duration_ps, header.seed)?.with_source_digest(header.source_digest))
}

pub fn read_file(path: &Path) -> Result<TagStream> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_stream(BufReader::with_capacity(1 << 16, f))
}

pub fn write_file(path: &Path, stream: &TagStream) -> Result<()> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_stream(BufWriter::new(f), stream).map_err(|e| CliError::io(path, e))
}

pub fn read_header(path: &Path) -> Result<Header> {
    Ok(*TagReader::open(path)?.header())
}
