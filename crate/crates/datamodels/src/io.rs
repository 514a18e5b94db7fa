//! Bit-exact on-disk formats.
//!
//! Masks (`DMDM`): magic, format version u32, m u64, d u64, alpha f64,
//! seed u64, then rows bit-packed little-endian (bit j of a row at byte
//! j/8, bit position j%8), each row padded to a byte boundary, and a
//! trailing CRC32 over everything before it.
//!
//! Outputs (`DMOU`): magic, version, m u64, n u64, output-function id u32,
//! length-prefixed UTF-8 trainer id, values as row-major f32, exclusion
//! bits packed as in masks, trailing CRC32.
//!
//! Datamodels (`DMTH`): magic, n u64, d u64, then per target: target_id
//! u64, bias f64, nnz u64, sorted (index u64, value f64) pairs, lambda f64.
//!
//! All integers and floats are little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array1;

use crate::data::{packed_len, Datamodel, MaskMatrix, OutputFn, OutputMatrix};
use crate::error::{Error, Result};

pub const MASKS_MAGIC: &[u8; 4] = b"DMDM";
pub const OUTPUTS_MAGIC: &[u8; 4] = b"DMOU";
pub const DATAMODELS_MAGIC: &[u8; 4] = b"DMTH";
pub const FORMAT_VERSION: u32 = 1;

/// CRC-32 (IEEE 802.3, reflected, poly 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    const fn table() -> [u32; 256] {
        let mut t = [0u32; 256];
        let mut i = 0;
        while i < 256 {
            let mut c = i as u32;
            let mut k = 0;
            while k < 8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
                k += 1;
            }
            t[i] = c;
            i += 1;
        }
        t
    }
    const TABLE: [u32; 256] = table();
    let mut c = 0xFFFF_FFFFu32;
    for &b in bytes {
        c = TABLE[((c ^ u32::from(b)) & 0xFF) as usize] ^ (c >> 8);
    }
    c ^ 0xFFFF_FFFF
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(self.offset(), format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn expect_magic(cur: &mut Cursor, magic: &[u8; 4], kind: &str) -> Result<()> {
    let off = cur.offset();
    let got = cur.take(4, "magic")?;
    if got != magic {
        return Err(Error::format(off, format!("bad magic {got:?}, expected {kind}")));
    }
    Ok(())
}

fn check_crc(buf: &[u8]) -> Result<usize> {
    if buf.len() < 4 {
        return Err(Error::format(0, "file shorter than its checksum"));
    }
    let body = buf.len() - 4;
    let stored = u32::from_le_bytes(buf[body..].try_into().unwrap());
    let actual = crc32(&buf[..body]);
    if stored != actual {
        return Err(Error::format(
            body as u64,
            format!("checksum mismatch: stored {stored:#010x}, computed {actual:#010x}"),
        ));
    }
    Ok(body)
}

fn checked_count(m: u64, what: &str, offset: u64) -> Result<usize> {
    usize::try_from(m).map_err(|_| Error::format(offset, format!("{what} {m} overflows usize")))
}

pub fn write_masks(masks: &MaskMatrix, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(44 + masks.raw_bytes().len() + 4);
    buf.extend_from_slice(MASKS_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(masks.m as u64).to_le_bytes());
    buf.extend_from_slice(&(masks.d as u64).to_le_bytes());
    buf.extend_from_slice(&masks.alpha.to_le_bytes());
    buf.extend_from_slice(&masks.seed.to_le_bytes());
    buf.extend_from_slice(masks.raw_bytes());
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_masks(path: &Path) -> Result<MaskMatrix> {
    let buf = fs::read(path)?;
    let body = check_crc(&buf)?;
    let mut cur = Cursor::new(&buf[..body]);
    expect_magic(&mut cur, MASKS_MAGIC, "DMDM masks file")?;
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(4, format!("unsupported masks version {version}")));
    }
    let off = cur.offset();
    let m = checked_count(cur.u64("m")?, "row count", off)?;
    let d = checked_count(cur.u64("d")?, "column count", off + 8)?;
    let alpha = cur.f64("alpha")?;
    let seed = cur.u64("seed")?;
    let row_bytes = packed_len(d);
    let data_off = cur.offset();
    let data = cur.take(m * row_bytes, "mask rows")?;
    if cur.pos != body {
        return Err(Error::format(cur.offset(), "trailing bytes after mask rows"));
    }
    let mut mm = MaskMatrix::zeros(m, d, alpha, seed);
    mm.raw_bytes_mut().copy_from_slice(data);
    // pad bits must be zero for the popcount caches to be trustworthy
    if d % 8 != 0 {
        let pad_mask = !((1u16 << (d % 8)) - 1) as u8;
        for i in 0..m {
            if mm.row_bytes(i)[row_bytes - 1] & pad_mask != 0 {
                return Err(Error::format(
                    data_off + (i * row_bytes + row_bytes - 1) as u64,
                    format!("nonzero pad bits in row {i}"),
                ));
            }
        }
    }
    Ok(mm)
}

pub fn write_outputs(outputs: &OutputMatrix, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(OUTPUTS_MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(outputs.m as u64).to_le_bytes());
    buf.extend_from_slice(&(outputs.n as u64).to_le_bytes());
    buf.extend_from_slice(&outputs.output_fn.id().to_le_bytes());
    let id_bytes = outputs.trainer_id.as_bytes();
    buf.extend_from_slice(&(id_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(id_bytes);
    for v in &outputs.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(outputs.excluded_bytes());
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_outputs(path: &Path) -> Result<OutputMatrix> {
    let buf = fs::read(path)?;
    let body = check_crc(&buf)?;
    let mut cur = Cursor::new(&buf[..body]);
    expect_magic(&mut cur, OUTPUTS_MAGIC, "DMOU outputs file")?;
    let version = cur.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(4, format!("unsupported outputs version {version}")));
    }
    let off = cur.offset();
    let m = checked_count(cur.u64("m")?, "row count", off)?;
    let n = checked_count(cur.u64("n")?, "column count", off + 8)?;
    let fn_off = cur.offset();
    let fn_id = cur.u32("output_fn id")?;
    let output_fn = OutputFn::from_id(fn_id)
        .ok_or_else(|| Error::format(fn_off, format!("unknown output function id {fn_id}")))?;
    let id_len = cur.u32("trainer id length")? as usize;
    let id_off = cur.offset();
    let id_bytes = cur.take(id_len, "trainer id")?;
    let trainer_id = std::str::from_utf8(id_bytes)
        .map_err(|_| Error::format(id_off, "trainer id is not UTF-8"))?
        .to_string();
    let mut out = OutputMatrix::zeros(m, n, output_fn, trainer_id);
    let values = cur.take(m * n * 4, "output values")?;
    for (k, chunk) in values.chunks_exact(4).enumerate() {
        out.values[k] = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    let excl_len = m * packed_len(n);
    let excl = cur.take(excl_len, "exclusion bits")?;
    out.excluded_bytes_mut().copy_from_slice(excl);
    if cur.pos != body {
        return Err(Error::format(cur.offset(), "trailing bytes after exclusion bits"));
    }
    Ok(out)
}

/// Writes per-target sparse datamodels; weights within a target are sorted
/// by index. Byte-identical output for identical inputs.
pub fn write_datamodels(models: &[Datamodel], d: usize, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(DATAMODELS_MAGIC);
    buf.extend_from_slice(&(models.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(d as u64).to_le_bytes());
    for dm in models {
        if dm.d() != d {
            return Err(Error::Shape(format!("datamodel width {} vs file width {d}", dm.d())));
        }
        buf.extend_from_slice(&dm.target_id.to_le_bytes());
        buf.extend_from_slice(&dm.bias.to_le_bytes());
        let nz: Vec<(usize, f64)> =
            dm.theta.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(i, &v)| (i, v)).collect();
        buf.extend_from_slice(&(nz.len() as u64).to_le_bytes());
        for (i, v) in nz {
            buf.extend_from_slice(&(i as u64).to_le_bytes());
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&dm.lambda.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Reads a DMTH file. Provenance fields that the format does not store
/// (alpha, output function, trainer id) are filled with neutral defaults;
/// callers that track run metadata overwrite them.
pub fn read_datamodels(path: &Path) -> Result<(Vec<Datamodel>, usize)> {
    let buf = fs::read(path)?;
    let mut cur = Cursor::new(&buf);
    expect_magic(&mut cur, DATAMODELS_MAGIC, "DMTH datamodels file")?;
    let off = cur.offset();
    let n = checked_count(cur.u64("target count")?, "target count", off)?;
    let d = checked_count(cur.u64("d")?, "width", off + 8)?;
    let mut models = Vec::with_capacity(n);
    for _ in 0..n {
        let target_id = cur.u64("target id")?;
        let bias = cur.f64("bias")?;
        let nnz_off = cur.offset();
        let nnz = checked_count(cur.u64("nnz")?, "nnz", nnz_off)?;
        if nnz > d {
            return Err(Error::format(nnz_off, format!("nnz {nnz} exceeds width {d}")));
        }
        let mut theta = Array1::zeros(d);
        let mut prev: Option<usize> = None;
        for _ in 0..nnz {
            let idx_off = cur.offset();
            let idx = checked_count(cur.u64("weight index")?, "weight index", idx_off)?;
            if idx >= d {
                return Err(Error::format(idx_off, format!("weight index {idx} out of range {d}")));
            }
            if prev.is_some_and(|p| p >= idx) {
                return Err(Error::format(idx_off, "weight indices not strictly increasing"));
            }
            prev = Some(idx);
            theta[idx] = cur.f64("weight value")?;
        }
        let lambda = cur.f64("lambda")?;
        models.push(Datamodel {
            theta,
            bias,
            alpha: f64::NAN,
            lambda,
            target_id,
            output_fn: OutputFn::Margin,
            trainer_id: String::new(),
        });
    }
    if cur.pos != buf.len() {
        return Err(Error::format(cur.offset(), "trailing bytes after datamodel records"));
    }
    Ok((models, d))
}
