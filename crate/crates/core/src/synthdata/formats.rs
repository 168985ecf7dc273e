//! On-disk formats: binary `JTNS` tensors and headed CSV tables.
//!
//! `JTNS` layout, all little-endian:
//!
//! ```text
//! magic "JTNS" | u32 version = 1 | u32 ndims | u64 dims[ndims] | f64 data (row-major)
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"JTNS";
pub const TENSOR_VERSION: u32 = 1;

pub fn tensor_to_bytes(t: &Tensor) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(TENSOR_MAGIC);
    w.u32(TENSOR_VERSION);
    w.u32(t.ndim() as u32);
    for &d in t.shape() {
        w.u64(d as u64);
    }
    w.f64s(t.data());
    w.buf
}

pub fn tensor_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    r.magic(TENSOR_MAGIC)?;
    let version = r.u32()?;
    if version != TENSOR_VERSION {
        return Err(Error::Format(format!("unsupported tensor version {version}")));
    }
    let ndims = r.u32()? as usize;
    let mut shape = Vec::with_capacity(ndims.min(16));
    for _ in 0..ndims {
        shape.push(r.usize()?);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Format("tensor size overflow".into()))?;
    let data = r.f64s(len)?;
    r.finish()?;
    Tensor::new(shape, data).map_err(|e| Error::Format(format!("invalid tensor: {e}")))
}

pub fn save_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, tensor_to_bytes(t))?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    tensor_from_bytes(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// A parsed CSV file with a mandatory header row. Lines starting with `#`
/// are skipped.
#[derive(Debug, Clone)]
pub struct Table {
    source: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    lines: Vec<u64>,
}

impl Table {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Format(format!("{source}: line 1: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.is_empty() || header.iter().all(String::is_empty) {
            return Err(Error::Format(format!("{source}: line 1: missing header row")));
        }
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                Error::Format(format!("{source}: line {line}: {e}"))
            })?;
            lines.push(rec.position().map(|p| p.line()).unwrap_or(0));
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { source: source.to_string(), header, rows, lines })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of a required column.
    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: line 1: missing column `{name}`", self.source)))
    }

    /// Indices of `prefix0, prefix1, ...` up to the first gap; at least one required.
    pub fn indexed_columns(&self, prefix: &str) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        while let Some(i) = self.header.iter().position(|h| *h == format!("{prefix}{}", out.len())) {
            out.push(i);
        }
        if out.is_empty() {
            return Err(Error::Format(format!("{}: line 1: missing column `{prefix}0`", self.source)));
        }
        Ok(out)
    }

    pub fn get<T: FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let raw = &self.rows[row][col];
        raw.parse().map_err(|_| {
            Error::Format(format!(
                "{}: line {}: cannot parse `{raw}` in column `{}`",
                self.source, self.lines[row], self.header[col]
            ))
        })
    }

    /// Every row of a column parsed as `T`.
    pub fn parse_column<T: FromStr>(&self, name: &str) -> Result<Vec<T>> {
        let c = self.column(name)?;
        (0..self.len()).map(|r| self.get(r, c)).collect()
    }

    /// Format error pointing at a data row.
    pub fn row_error(&self, row: usize, msg: impl std::fmt::Display) -> Error {
        Error::Format(format!("{}: line {}: {msg}", self.source, self.lines[row]))
    }
}

/// Serializes a header and rows to CSV text.
pub fn csv_string<S: AsRef<str>>(header: &[S], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let write_err = |e: csv::Error| Error::Format(format!("csv write: {e}"));
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(write_err)?;
    for r in rows {
        w.write_record(&r).map_err(write_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv write: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv<S: AsRef<str>>(path: impl AsRef<Path>, header: &[S], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    std::fs::write(path, csv_string(header, rows)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_bytes_round_trip() {
        let t = Tensor::new(vec![2, 1, 3], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.5, 3.0]).unwrap();
        let b = tensor_to_bytes(&t);
        assert_eq!(&b[..4], b"JTNS");
        assert_eq!(b.len(), 4 + 4 + 4 + 3 * 8 + 6 * 8);
        let back = tensor_from_bytes(&b).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn tensor_rejects_bad_magic_and_truncation() {
        let mut b = tensor_to_bytes(&Tensor::zeros(&[2, 2]));
        assert!(matches!(tensor_from_bytes(&b[..b.len() - 1]), Err(Error::Format(_))));
        b[0] = b'X';
        assert!(matches!(tensor_from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn missing_column_is_named() {
        let t = Table::parse("a,b\n1,2\n", "t.csv").unwrap();
        let err = t.column("label").unwrap_err().to_string();
        assert!(err.contains("`label`"), "{err}");
    }

    #[test]
    fn parse_error_has_line_number() {
        let t = Table::parse("a,b\n1,2\n3,x\n", "t.csv").unwrap();
        let err = t.parse_column::<f64>("b").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let ragged = Table::parse("a,b\n1,2\n3\n", "t.csv").unwrap_err().to_string();
        assert!(ragged.contains("line 3"), "{ragged}");
    }

    #[test]
    fn indexed_columns_in_order() {
        let t = Table::parse("id,count_1,count_0\n", "t.csv").unwrap();
        assert_eq!(t.indexed_columns("count_").unwrap(), vec![2, 1]);
        assert!(t.indexed_columns("p_").is_err());
    }

    #[test]
    fn floats_survive_csv() {
        let v = [0.1f64, 1.0 / 3.0, -2.5e-300];
        let s = csv_string(&["v"], v.iter().map(|x| vec![x.to_string()])).unwrap();
        let t = Table::parse(&s, "mem").unwrap();
        assert_eq!(t.parse_column::<f64>("v").unwrap(), v);
    }
}
