//! On-disk formats: RPCM binary matrices, RPCE encoder parameters, CSV
//! matrices and PGM images.
//!
//! RPCM: `b"RPCM"`, version `u32` = 1, rows and cols as `u64`, then the
//! entries as `f64` in column-major order. RPCE: `b"RPCE"`, version `u32` =
//! 1, `m`, `q`, `K` as `u64`, then the W (m×m), H (q×m), λ (m) and U (m×q)
//! blocks, column-major. Every integer and float is little-endian.
//!
//! Files are written to a temporary sibling and renamed into place.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::encoder::EncoderParams;
use crate::error::{Result, RpcaError};
use crate::linalg::DenseMatrix;
use crate::transforms::ImageGrid;

const MATRIX_MAGIC: &[u8; 4] = b"RPCM";
const ENCODER_MAGIC: &[u8; 4] = b"RPCE";
const VERSION: u32 = 1;

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn truncated(e: std::io::Error) -> RpcaError {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        RpcaError::Format("unexpected end of file".into())
    } else {
        RpcaError::Io(e)
    }
}

fn read_u64<R: Read>(r: &mut R) -> Result<usize> {
    let v = u64::from_le_bytes(read_array(r)?);
    usize::try_from(v).map_err(|_| RpcaError::Format(format!("size {v} does not fit in memory")))
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let got: [u8; 4] = read_array(r)?;
    if &got != magic {
        return Err(RpcaError::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = u32::from_le_bytes(read_array(r)?);
    if version != VERSION {
        return Err(RpcaError::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let bytes = len
        .checked_mul(8)
        .ok_or_else(|| RpcaError::Format("payload size overflows".into()))?;
    let mut buf = Vec::new();
    r.take(bytes as u64).read_to_end(&mut buf)?;
    if buf.len() != bytes {
        return Err(RpcaError::Format("unexpected end of file".into()));
    }
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn checked_area(rows: usize, cols: usize) -> Result<usize> {
    rows.checked_mul(cols)
        .ok_or_else(|| RpcaError::Format(format!("{rows}x{cols} overflows")))
}

pub fn write_rpcm<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    write_f64s(w, m.as_slice())
}

pub fn read_rpcm<R: Read>(r: &mut R) -> Result<DenseMatrix> {
    read_header(r, MATRIX_MAGIC)?;
    let rows = read_u64(r)?;
    let cols = read_u64(r)?;
    let data = read_f64s(r, checked_area(rows, cols)?)?;
    DenseMatrix::new(rows, cols, data)
}

pub fn write_rpce<W: Write>(w: &mut W, theta: &EncoderParams) -> Result<()> {
    theta.validate()?;
    w.write_all(ENCODER_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for v in [theta.dim(), theta.code_dim(), theta.layers] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    write_f64s(w, theta.w.as_slice())?;
    write_f64s(w, theta.h.as_slice())?;
    write_f64s(w, &theta.lambda)?;
    write_f64s(w, theta.u.as_slice())
}

pub fn read_rpce<R: Read>(r: &mut R) -> Result<EncoderParams> {
    read_header(r, ENCODER_MAGIC)?;
    let m = read_u64(r)?;
    let q = read_u64(r)?;
    let layers = read_u64(r)?;
    let w = DenseMatrix::new(m, m, read_f64s(r, checked_area(m, m)?)?)?;
    let h = DenseMatrix::new(q, m, read_f64s(r, checked_area(q, m)?)?)?;
    let lambda = read_f64s(r, m)?;
    let u = DenseMatrix::new(m, q, read_f64s(r, checked_area(m, q)?)?)?;
    EncoderParams::new(w, h, lambda, u, layers)
}

/// One matrix row per line. Values use the shortest decimal form that parses
/// back to the same `f64`.
pub fn write_csv<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    let mut line = String::new();
    for i in 0..m.rows() {
        line.clear();
        for j in 0..m.cols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{:?}", m.get(i, j)));
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<DenseMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| RpcaError::Format(format!("line {}: cannot parse {t:?}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(RpcaError::Format(format!(
                    "line {}: {} fields, expected {}",
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(rows.len() * cols);
    for j in 0..cols {
        data.extend(rows.iter().map(|r| r[j]));
    }
    DenseMatrix::new(rows.len(), cols, data)
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| RpcaError::InvalidParameter(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Saves as CSV when the extension is `.csv`, RPCM otherwise.
pub fn save_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    if is_csv(path) {
        write_csv(&mut buf, m)?;
    } else {
        write_rpcm(&mut buf, m)?;
    }
    write_atomic(path, &buf)
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let f = fs::File::open(path)?;
    if is_csv(path) {
        read_csv(f)
    } else {
        read_rpcm(&mut BufReader::new(f))
    }
}

pub fn save_encoder(path: impl AsRef<Path>, theta: &EncoderParams) -> Result<()> {
    let mut buf = Vec::new();
    write_rpce(&mut buf, theta)?;
    write_atomic(path.as_ref(), &buf)
}

pub fn load_encoder(path: impl AsRef<Path>) -> Result<EncoderParams> {
    read_rpce(&mut BufReader::new(fs::File::open(path)?))
}

/// Grayscale image with pixel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub grid: ImageGrid,
    pub pixels: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmEncoding {
    /// `P2`
    Ascii,
    /// `P5`
    Binary,
}

struct HeaderTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderTokens<'_> {
    fn next_token(&mut self) -> Result<&str> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(RpcaError::Format("PGM: unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| RpcaError::Format("PGM: non-ASCII header".into()))
    }

    fn next_usize(&mut self) -> Result<usize> {
        let t = self.next_token()?;
        t.parse()
            .map_err(|_| RpcaError::Format(format!("PGM: bad number {t:?}")))
    }
}

/// Parses a P2 or P5 image, dividing by `maxval`.
pub fn parse_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut tok = HeaderTokens { bytes, pos: 0 };
    let encoding = match tok.next_token()? {
        "P2" => PgmEncoding::Ascii,
        "P5" => PgmEncoding::Binary,
        other => return Err(RpcaError::Format(format!("PGM: unsupported magic {other:?}"))),
    };
    let width = tok.next_usize()?;
    let height = tok.next_usize()?;
    let maxval = tok.next_usize()?;
    if maxval == 0 || maxval > 65535 {
        return Err(RpcaError::Format(format!("PGM: maxval {maxval} outside 1..=65535")));
    }
    let grid = ImageGrid::new(width, height).map_err(|_| RpcaError::Format("PGM: empty image".into()))?;
    let count = checked_area(width, height)?;
    let scale = maxval as f64;
    let raw: Vec<usize> = match encoding {
        PgmEncoding::Ascii => (0..count).map(|_| tok.next_usize()).collect::<Result<_>>()?,
        PgmEncoding::Binary => {
            // Exactly one whitespace byte separates the header from the raster.
            let start = tok.pos + 1;
            let width_bytes = if maxval < 256 { 1 } else { 2 };
            let data = bytes
                .get(start..start + count * width_bytes)
                .ok_or_else(|| RpcaError::Format("PGM: truncated raster".into()))?;
            if width_bytes == 1 {
                data.iter().map(|b| *b as usize).collect()
            } else {
                data.chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                    .collect()
            }
        }
    };
    if let Some(v) = raw.iter().find(|v| **v > maxval) {
        return Err(RpcaError::Format(format!("PGM: sample {v} exceeds maxval {maxval}")));
    }
    Ok(GrayImage {
        grid,
        pixels: raw.into_iter().map(|v| v as f64 / scale).collect(),
    })
}

/// Encodes pixels clamped to `[0, 1]` and rounded to `maxval` levels.
pub fn format_pgm(img: &GrayImage, maxval: u16, encoding: PgmEncoding) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(RpcaError::InvalidParameter("PGM maxval must be positive".into()));
    }
    if img.pixels.len() != img.grid.pixels() {
        return Err(RpcaError::Dimension("PGM pixel count does not match grid".into()));
    }
    let (w, h) = (img.grid.width, img.grid.height);
    let levels: Vec<u16> = img
        .pixels
        .iter()
        .map(|v| {
            let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            (c * maxval as f64).round() as u16
        })
        .collect();
    let mut out = Vec::new();
    match encoding {
        PgmEncoding::Ascii => {
            writeln!(out, "P2\n{w} {h}\n{maxval}")?;
            for row in levels.chunks(w) {
                let line: Vec<String> = row.iter().map(u16::to_string).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
        PgmEncoding::Binary => {
            write!(out, "P5\n{w} {h}\n{maxval}\n")?;
            for v in levels {
                if maxval < 256 {
                    out.push(v as u8);
                } else {
                    out.extend_from_slice(&v.to_be_bytes());
                }
            }
        }
    }
    Ok(out)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    parse_pgm(&fs::read(path)?)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage, maxval: u16, encoding: PgmEncoding) -> Result<()> {
    write_atomic(path.as_ref(), &format_pgm(img, maxval, encoding)?)
}
