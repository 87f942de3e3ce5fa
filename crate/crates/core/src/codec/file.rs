use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BitMatrix, IrisTemplate};
use crate::error::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"IRTC";
pub const VERSION: u8 = 1;

/// Row-major, LSB-first, each row padded to a whole byte.
pub(crate) fn pack(m: &BitMatrix) -> Vec<u8> {
    let row_bytes = m.cols().div_ceil(8);
    let mut out = vec![0u8; m.rows() * row_bytes];
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if m.get(r, c) {
                out[r * row_bytes + c / 8] |= 1 << (c % 8);
            }
        }
    }
    out
}

/// Inverse of [`pack`]; pad bits are ignored. `bytes` must hold at least
/// `rows * ceil(cols/8)` bytes.
pub(crate) fn unpack(bytes: &[u8], rows: usize, cols: usize) -> BitMatrix {
    let row_bytes = cols.div_ceil(8);
    BitMatrix::from_fn(rows, cols, |r, c| (bytes[r * row_bytes + c / 8] >> (c % 8)) & 1 == 1)
}

fn label_len(label: &str, what: &str) -> Result<u16> {
    u16::try_from(label.len()).map_err(|_| Error::contract(format!("{what} longer than 65535 bytes")))
}

/// Encodes `t` as a TemplateFile. Returns the number of bytes written.
pub fn write_template<W: Write>(t: &IrisTemplate, mut sink: W) -> Result<usize> {
    let rows = u16::try_from(t.rows()).map_err(|_| Error::contract("rows exceed 65535"))?;
    let cols = u16::try_from(t.cols()).map_err(|_| Error::contract("cols exceed 65535"))?;
    let id_len = label_len(t.identity(), "identity")?;
    let sample_len = label_len(t.sample_id(), "sample_id")?;

    let mut buf = Vec::with_capacity(13 + t.identity().len() + t.sample_id().len());
    buf.extend_from_slice(&MAGIC);
    buf.push(VERSION);
    buf.extend_from_slice(&rows.to_le_bytes());
    buf.extend_from_slice(&cols.to_le_bytes());
    buf.extend_from_slice(&id_len.to_le_bytes());
    buf.extend_from_slice(t.identity().as_bytes());
    buf.extend_from_slice(&sample_len.to_le_bytes());
    buf.extend_from_slice(t.sample_id().as_bytes());
    buf.extend_from_slice(&pack(t.code()));
    buf.extend_from_slice(&pack(t.mask()));
    sink.write_all(&buf)?;
    Ok(buf.len())
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, n: usize, field: &'static str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format(FormatError::Truncated(field)),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u16(&mut self, field: &'static str) -> Result<u16> {
        let b = self.bytes(2, field)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn label(&mut self, len_field: &'static str, field: &'static str) -> Result<String> {
        let n = self.u16(len_field)? as usize;
        let raw = self.bytes(n, field)?;
        String::from_utf8(raw).map_err(|_| FormatError::InvalidUtf8(field).into())
    }
}

pub fn read_template<R: Read>(source: R) -> Result<IrisTemplate> {
    let mut cur = Cursor { inner: source };
    let magic = cur.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(FormatError::BadMagic([magic[0], magic[1], magic[2], magic[3]]).into());
    }
    let version = cur.bytes(1, "version")?[0];
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let rows = cur.u16("rows")? as usize;
    let cols = cur.u16("cols")? as usize;
    if rows == 0 {
        return Err(FormatError::ZeroDimension("rows").into());
    }
    if cols == 0 {
        return Err(FormatError::ZeroDimension("cols").into());
    }
    let identity = cur.label("identity_len", "identity")?;
    let sample_id = cur.label("sample_len", "sample_id")?;
    let section = rows * cols.div_ceil(8);
    let code = unpack(&cur.bytes(section, "code")?, rows, cols);
    let mask = unpack(&cur.bytes(section, "mask")?, rows, cols);
    IrisTemplate::new(code, mask, identity, sample_id)
}

pub fn write_template_file(t: &IrisTemplate, path: impl AsRef<Path>) -> Result<usize> {
    let mut w = BufWriter::new(File::create(path)?);
    let n = write_template(t, &mut w)?;
    w.flush()?;
    Ok(n)
}

pub fn read_template_file(path: impl AsRef<Path>) -> Result<IrisTemplate> {
    read_template(BufReader::new(File::open(path)?))
}
