//! On-disk stream format and JSON float formatting.
//!
//! A stream file is
//!
//! ```text
//! "OJAS"            4 bytes magic
//! version           u32 little-endian, currently 1
//! n                 u64 little-endian, number of rows
//! d                 u64 little-endian, row dimension
//! n·d values        IEEE-754 binary64 little-endian, row-major
//! ```
//!
//! Ground truth for a generated stream lives next to it in a JSON sidecar
//! with the same basename and the extension `.truth.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::la::StreamMatrix;

pub const MAGIC: [u8; 4] = *b"OJAS";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8;

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Header fields of a stream file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub n: u64,
    pub d: u64,
}

pub fn write_header<W: Write>(w: &mut W, header: Header) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&header.n.to_le_bytes())?;
    w.write_all(&header.d.to_le_bytes())?;
    Ok(())
}

pub fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    let mut buf = [0u8; HEADER_LEN];
    r.read_exact(&mut buf)
        .map_err(|_| format_err("file shorter than the 24-byte header"))?;
    if buf[0..4] != MAGIC {
        return Err(format_err("bad magic, expected \"OJAS\""));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(buf[8..16].try_into().unwrap());
    let d = u64::from_le_bytes(buf[16..24].try_into().unwrap());
    if n == 0 || d == 0 {
        return Err(format_err(format!("empty stream (n = {n}, d = {d})")));
    }
    Ok(Header { n, d })
}

pub fn write_stream<W: Write>(w: &mut W, x: &StreamMatrix) -> Result<()> {
    write_header(
        w,
        Header {
            n: x.n() as u64,
            d: x.d() as u64,
        },
    )?;
    for v in x.as_flat() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_stream<R: Read>(r: &mut R) -> Result<StreamMatrix> {
    let reader = StreamReader::new(r)?;
    let (n, d) = (reader.n(), reader.d());
    let mut data = Vec::with_capacity(n.saturating_mul(d).min(1 << 28));
    for row in reader {
        data.extend_from_slice(&row?);
    }
    StreamMatrix::from_flat(n, d, data).map_err(|e| match e {
        Error::NonFinite { index } => format_err(format!(
            "non-finite value at row {}, column {}",
            index / d,
            index % d
        )),
        other => other,
    })
}

pub fn save_stream(path: &Path, x: &StreamMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stream(&mut w, x)?;
    w.flush()?;
    Ok(())
}

/// Reads a whole stream file, rejecting trailing bytes.
pub fn load_stream(path: &Path) -> Result<StreamMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let x = read_stream(&mut r)?;
    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => Ok(x),
        _ => Err(format_err("trailing bytes after the last row")),
    }
}

/// Row-at-a-time reader; the file is consumed in a single forward pass.
pub struct StreamReader<R> {
    inner: R,
    n: usize,
    d: usize,
    read: usize,
    buf: Vec<u8>,
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let h = read_header(&mut inner)?;
        let n = usize::try_from(h.n).map_err(|_| format_err("row count overflows usize"))?;
        let d = usize::try_from(h.d).map_err(|_| format_err("dimension overflows usize"))?;
        n.checked_mul(d)
            .and_then(|nd| nd.checked_mul(8))
            .ok_or_else(|| format_err("n·d overflows"))?;
        Ok(StreamReader {
            inner,
            n,
            d,
            read: 0,
            buf: vec![0u8; d * 8],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<Vec<f64>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read == self.n {
            return None;
        }
        let row = self.read;
        self.read += 1;
        if self.inner.read_exact(&mut self.buf).is_err() {
            self.read = self.n;
            return Some(Err(format_err(format!(
                "truncated at row {row} of {}",
                self.n
            ))));
        }
        Some(Ok(self
            .buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect()))
    }
}

/// Writer for streams whose length is not known up front. The row count in
/// the header is patched when [`StreamWriter::finish`] is called.
pub struct StreamWriter<W: Write + Seek> {
    inner: W,
    d: usize,
    n: u64,
}

impl<W: Write + Seek> StreamWriter<W> {
    pub fn new(mut inner: W, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter(
                "dimension must be at least 1".into(),
            ));
        }
        write_header(&mut inner, Header { n: 0, d: d as u64 })?;
        Ok(StreamWriter { inner, d, n: 0 })
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: row.len(),
            });
        }
        crate::la::check_finite(row)?;
        for v in row {
            self.inner.write_all(&v.to_le_bytes())?;
        }
        self.n += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.seek(SeekFrom::Start(8))?;
        self.inner.write_all(&self.n.to_le_bytes())?;
        self.inner.seek(SeekFrom::End(0))?;
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// `dir/name.ojas` → `dir/name.truth.json`.
pub fn truth_path(stream: &Path) -> PathBuf {
    let stem = stream
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stream".into());
    stream.with_file_name(format!("{stem}.truth.json"))
}

/// Formats with 17 significant digits, the precision that round-trips any
/// binary64 value.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serde adapter writing `f64` as a JSON number with 17 significant digits.
pub mod sig17 {
    use serde::de::Error as _;
    use serde::ser::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if !x.is_finite() {
            return Err(S::Error::custom(format!(
                "cannot encode {x} as a JSON number"
            )));
        }
        let n: serde_json::Number = super::fmt17(*x).parse().map_err(S::Error::custom)?;
        n.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let n = serde_json::Number::deserialize(d)?;
        n.as_f64()
            .ok_or_else(|| D::Error::custom("number out of range"))
    }
}

/// Like [`sig17`] but maps `+∞` to JSON `null` and back.
pub mod float_or_inf {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *x == f64::INFINITY {
            s.serialize_none()
        } else {
            super::sig17::serialize(x, s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let v: Option<serde_json::Number> = Option::deserialize(d)?;
        Ok(v.and_then(|n| n.as_f64()).unwrap_or(f64::INFINITY))
    }
}

/// [`sig17`] for optional values.
pub mod opt_sig17 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match x {
            Some(v) if v.is_finite() => super::sig17::serialize(v, s),
            _ => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        let v: Option<serde_json::Number> = Option::deserialize(d)?;
        Ok(v.and_then(|n| n.as_f64()))
    }
}

/// [`UnitVec`](crate::la::UnitVec) fields nested in internally tagged enums.
pub mod unit_vec {
    use crate::la::UnitVec;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &UnitVec, s: S) -> Result<S::Ok, S::Error> {
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitVec, D::Error> {
        let raw: Vec<serde_json::Number> = Vec::deserialize(d)?;
        let v = raw
            .iter()
            .map(|n| {
                n.as_f64()
                    .ok_or_else(|| D::Error::custom("number out of range"))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        UnitVec::try_from(v).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn sample() -> StreamMatrix {
        StreamMatrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 3.25, -1e-300]]).unwrap()
    }

    #[test]
    fn header_layout_is_bit_exact() {
        let mut buf = Vec::new();
        write_stream(&mut buf, &sample()).unwrap();
        assert_eq!(&buf[0..4], b"OJAS");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &3u64.to_le_bytes());
        assert_eq!(buf.len(), HEADER_LEN + 6 * 8);
        assert_eq!(&buf[24..32], &1.0f64.to_le_bytes());
        assert_eq!(&buf[32..40], &(-2.0f64).to_le_bytes());
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_stream(&mut buf, &sample()).unwrap();
        assert_eq!(read_stream(&mut Cursor::new(buf)).unwrap(), sample());
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let mut good = Vec::new();
        write_stream(&mut good, &sample()).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            read_stream(&mut Cursor::new(bad_magic)),
            Err(Error::Format(_))
        ));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(
            read_stream(&mut Cursor::new(bad_version)),
            Err(Error::Format(_))
        ));

        let truncated = good[..good.len() - 3].to_vec();
        assert!(matches!(
            read_stream(&mut Cursor::new(truncated)),
            Err(Error::Format(_))
        ));

        assert!(matches!(
            read_stream(&mut Cursor::new(vec![1, 2, 3])),
            Err(Error::Format(_))
        ));

        let mut nan = good.clone();
        nan[24..32].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(
            read_stream(&mut Cursor::new(nan)),
            Err(Error::Format(_))
        ));

        let mut huge = good.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(read_stream(&mut Cursor::new(huge)).is_err());
    }

    #[test]
    fn trailing_bytes_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.ojas");
        save_stream(&p, &sample()).unwrap();
        assert_eq!(load_stream(&p).unwrap(), sample());
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.push(0);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_stream(&p), Err(Error::Format(_))));
    }

    #[test]
    fn streaming_writer_patches_row_count() {
        let mut w = StreamWriter::new(Cursor::new(Vec::new()), 3).unwrap();
        for r in sample().rows() {
            w.push(r).unwrap();
        }
        assert!(w.push(&[1.0]).is_err());
        let bytes = w.finish().unwrap().into_inner();
        let mut direct = Vec::new();
        write_stream(&mut direct, &sample()).unwrap();
        assert_eq!(bytes, direct);
    }

    #[test]
    fn truth_sidecar_name() {
        assert_eq!(
            truth_path(Path::new("/tmp/run/s.ojas")),
            PathBuf::from("/tmp/run/s.truth.json")
        );
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
        #[derive(serde::Serialize, serde::Deserialize)]
        struct T {
            #[serde(with = "sig17")]
            x: f64,
            #[serde(with = "float_or_inf")]
            r: f64,
        }
        let s = serde_json::to_string(&T {
            x: 0.25,
            r: f64::INFINITY,
        })
        .unwrap();
        assert_eq!(s, r#"{"x":2.5000000000000000e-1,"r":null}"#);
        let back: T = serde_json::from_str(&s).unwrap();
        assert_eq!(back.x, 0.25);
        assert!(back.r.is_infinite());
    }
}
