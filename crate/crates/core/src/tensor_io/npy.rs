//! NPY array persistence.
//!
//! Reads NPY versions 1.0 and 2.0 (C-order only, little-endian payloads) for
//! dtypes float64, float32, uint8, and int16; writes version 1.0. The dtype
//! of a file survives a read/write round trip byte for byte, which keeps the
//! format usable as a language-neutral interchange layer.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::ArrayD;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// A decoded NPY payload with its on-disk dtype preserved.
#[derive(Debug, Clone, PartialEq)]
pub enum NpyArray {
    F64(ArrayD<f64>),
    F32(ArrayD<f32>),
    U8(ArrayD<u8>),
    I16(ArrayD<i16>),
}

impl NpyArray {
    pub fn shape(&self) -> &[usize] {
        match self {
            NpyArray::F64(a) => a.shape(),
            NpyArray::F32(a) => a.shape(),
            NpyArray::U8(a) => a.shape(),
            NpyArray::I16(a) => a.shape(),
        }
    }

    pub fn descr(&self) -> &'static str {
        match self {
            NpyArray::F64(_) => "<f8",
            NpyArray::F32(_) => "<f4",
            NpyArray::U8(_) => "|u1",
            NpyArray::I16(_) => "<i2",
        }
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Widen to `f64` without changing any value (all supported dtypes embed
    /// losslessly in a double).
    pub fn to_f64(&self) -> ArrayD<f64> {
        match self {
            NpyArray::F64(a) => a.clone(),
            NpyArray::F32(a) => a.mapv(f64::from),
            NpyArray::U8(a) => a.mapv(f64::from),
            NpyArray::I16(a) => a.mapv(f64::from),
        }
    }
}

fn parse_shape(text: &str) -> Result<Vec<usize>> {
    let inner = text.trim();
    if inner.is_empty() {
        return Err(Error::UnsupportedLayout(
            "zero-dimensional arrays are not supported".into(),
        ));
    }
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::NpyFormat(format!("bad shape element {s:?}")))
        })
        .collect()
}

/// Pull one `'key': value` entry out of the Python dict literal header.
fn dict_value<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let needle = format!("'{key}':");
    let start = header
        .find(&needle)
        .ok_or_else(|| Error::NpyFormat(format!("header missing key {key:?}")))?
        + needle.len();
    let rest = header[start..].trim_start();
    if let Some(stripped) = rest.strip_prefix('\'') {
        let end = stripped
            .find('\'')
            .ok_or_else(|| Error::NpyFormat("unterminated string in header".into()))?;
        Ok(&stripped[..end])
    } else if let Some(stripped) = rest.strip_prefix('(') {
        let end = stripped
            .find(')')
            .ok_or_else(|| Error::NpyFormat("unterminated tuple in header".into()))?;
        Ok(&stripped[..end])
    } else {
        let end = rest
            .find([',', '}'])
            .ok_or_else(|| Error::NpyFormat("unterminated value in header".into()))?;
        Ok(rest[..end].trim())
    }
}

fn read_exact_or_format(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|_| Error::NpyFormat(format!("truncated file while reading {what}")))
}

/// Read an NPY file, preserving the stored dtype.
pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    let mut cursor = &bytes[..];

    let mut magic = [0u8; 6];
    read_exact_or_format(&mut cursor, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::NpyFormat("bad magic: not an NPY file".into()));
    }
    let mut version = [0u8; 2];
    read_exact_or_format(&mut cursor, &mut version, "version")?;
    let header_len = match version[0] {
        1 => {
            let mut len = [0u8; 2];
            read_exact_or_format(&mut cursor, &mut len, "header length")?;
            u16::from_le_bytes(len) as usize
        }
        2 => {
            let mut len = [0u8; 4];
            read_exact_or_format(&mut cursor, &mut len, "header length")?;
            u32::from_le_bytes(len) as usize
        }
        v => {
            return Err(Error::NpyFormat(format!(
                "unsupported NPY major version {v}"
            )))
        }
    };
    if header_len > cursor.len() {
        return Err(Error::NpyFormat("header length exceeds file size".into()));
    }
    let header = std::str::from_utf8(&cursor[..header_len])
        .map_err(|_| Error::NpyFormat("header is not valid UTF-8".into()))?
        .to_owned();
    cursor = &cursor[header_len..];

    let descr = dict_value(&header, "descr")?.to_owned();
    let fortran = match dict_value(&header, "fortran_order")? {
        "True" => true,
        "False" => false,
        other => {
            return Err(Error::NpyFormat(format!(
                "bad fortran_order value {other:?}"
            )))
        }
    };
    if fortran {
        return Err(Error::UnsupportedLayout(
            "Fortran-order arrays are not supported; re-save in C order".into(),
        ));
    }
    let shape = parse_shape(dict_value(&header, "shape")?)?;
    let count: usize = shape.iter().product();
    if count == 0 {
        return Err(Error::UnsupportedLayout(
            "arrays with a zero-length dimension are not supported".into(),
        ));
    }

    let item_size = match descr.as_str() {
        "<f8" => 8,
        "<f4" => 4,
        "|u1" | "<u1" => 1,
        "<i2" => 2,
        other => {
            return Err(Error::UnsupportedLayout(format!(
                "dtype {other:?} not supported (expected <f8, <f4, |u1, or <i2)"
            )))
        }
    };
    if cursor.len() != count * item_size {
        return Err(Error::NpyFormat(format!(
            "payload size {} does not match shape {:?} with itemsize {item_size}",
            cursor.len(),
            shape
        )));
    }

    let dims = ndarray::IxDyn(&shape);
    let arr = match item_size {
        8 => {
            let data = cursor
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            NpyArray::F64(ArrayD::from_shape_vec(dims, data).expect("shape/payload checked"))
        }
        4 => {
            let data = cursor
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            NpyArray::F32(ArrayD::from_shape_vec(dims, data).expect("shape/payload checked"))
        }
        2 => {
            let data = cursor
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes(c.try_into().unwrap()))
                .collect();
            NpyArray::I16(ArrayD::from_shape_vec(dims, data).expect("shape/payload checked"))
        }
        _ => NpyArray::U8(
            ArrayD::from_shape_vec(dims, cursor.to_vec()).expect("shape/payload checked"),
        ),
    };
    Ok(arr)
}

fn header_bytes(descr: &str, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => {
            let parts: Vec<String> = shape.iter().map(usize::to_string).collect();
            format!("({})", parts.join(", "))
        }
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_str}, }}");
    // Total of magic + version + length field + header must be a multiple of 64.
    let unpadded = 6 + 2 + 2 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&u16::try_from(dict.len()).expect("header fits v1").to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

fn validate_writable(array: &NpyArray) -> Result<()> {
    if array.shape().contains(&0) || array.shape().is_empty() {
        return Err(Error::InvalidData(format!(
            "refusing to write degenerate shape {:?}",
            array.shape()
        )));
    }
    let finite = match array {
        NpyArray::F64(a) => a.iter().all(|v| v.is_finite()),
        NpyArray::F32(a) => a.iter().all(|v| v.is_finite()),
        NpyArray::U8(_) | NpyArray::I16(_) => true,
    };
    if !finite {
        return Err(Error::InvalidData(
            "refusing to write non-finite values".into(),
        ));
    }
    Ok(())
}

/// Write an NPY v1.0 file; `read_npy` inverts it exactly.
pub fn write_npy(path: &Path, array: &NpyArray) -> Result<()> {
    validate_writable(array)?;
    let mut file = std::fs::File::create(path).map_err(Error::io(path))?;
    file.write_all(&header_bytes(array.descr(), array.shape()))
        .map_err(Error::io(path))?;
    // Arrays built in this crate are standard layout; fall back to a copy if not.
    match array {
        NpyArray::F64(a) => write_payload(&mut file, path, a.iter(), f64::to_le_bytes),
        NpyArray::F32(a) => write_payload(&mut file, path, a.iter(), f32::to_le_bytes),
        NpyArray::U8(a) => write_payload(&mut file, path, a.iter(), u8::to_le_bytes),
        NpyArray::I16(a) => write_payload(&mut file, path, a.iter(), i16::to_le_bytes),
    }
}

fn write_payload<'a, T: Copy + 'a, const N: usize>(
    file: &mut std::fs::File,
    path: &Path,
    values: impl Iterator<Item = &'a T>,
    to_bytes: impl Fn(T) -> [u8; N],
) -> Result<()> {
    let mut buf = Vec::with_capacity(1 << 16);
    for &v in values {
        buf.extend_from_slice(&to_bytes(v));
        if buf.len() >= (1 << 16) {
            file.write_all(&buf).map_err(Error::io(path))?;
            buf.clear();
        }
    }
    file.write_all(&buf).map_err(Error::io(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("aircsc-npy-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn zero_volume_round_trip() {
        let arr = NpyArray::F32(ArrayD::zeros(IxDyn(&[2, 2, 2])));
        let path = tmp("zeros.npy");
        write_npy(&path, &arr).unwrap();
        let back = read_npy(&path).unwrap();
        assert_eq!(back, arr);
        assert!(back.to_f64().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn payload_bytes_identical_for_each_dtype() {
        let cases = [
            NpyArray::F64(
                ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![1.5, -2.0, 0.0, 3.25, 1e-12, 7.0])
                    .unwrap(),
            ),
            NpyArray::F32(
                ArrayD::from_shape_vec(IxDyn(&[3]), vec![1.5f32, -0.25, 100.0]).unwrap(),
            ),
            NpyArray::U8(ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![0, 1, 1, 0]).unwrap()),
            NpyArray::I16(
                ArrayD::from_shape_vec(IxDyn(&[2, 2]), vec![-1000i16, 600, 0, -24]).unwrap(),
            ),
        ];
        for (i, arr) in cases.iter().enumerate() {
            let p1 = tmp(&format!("rt-{i}-a.npy"));
            let p2 = tmp(&format!("rt-{i}-b.npy"));
            write_npy(&p1, arr).unwrap();
            let back = read_npy(&p1).unwrap();
            write_npy(&p2, &back).unwrap();
            assert_eq!(
                std::fs::read(&p1).unwrap(),
                std::fs::read(&p2).unwrap(),
                "case {i} bytes differ"
            );
        }
    }

    #[test]
    fn int16_hu_widens_losslessly() {
        let arr = NpyArray::I16(
            ArrayD::from_shape_vec(IxDyn(&[1, 1, 2]), vec![-1000i16, 600]).unwrap(),
        );
        let path = tmp("hu.npy");
        write_npy(&path, &arr).unwrap();
        let wide = read_npy(&path).unwrap().to_f64();
        assert_eq!(wide[[0, 0, 0]], -1000.0);
        assert_eq!(wide[[0, 0, 1]], 600.0);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let path = tmp("bad-magic.npy");
        std::fs::write(&path, b"not an npy at all").unwrap();
        match read_npy(&path) {
            Err(Error::NpyFormat(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn fortran_order_is_layout_error() {
        let arr = NpyArray::F64(ArrayD::zeros(IxDyn(&[2, 2])));
        let path = tmp("fortran.npy");
        write_npy(&path, &arr).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Flip the flag in place; "True " matches "False" in length.
        let pos = bytes
            .windows(5)
            .position(|w| w == b"False")
            .expect("header carries the flag");
        bytes[pos..pos + 5].copy_from_slice(b"True ");
        std::fs::write(&path, bytes).unwrap();
        match read_npy(&path) {
            Err(Error::UnsupportedLayout(_)) => {}
            other => panic!("expected layout error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let arr = NpyArray::F64(ArrayD::zeros(IxDyn(&[4, 4])));
        let path = tmp("trunc.npy");
        write_npy(&path, &arr).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        match read_npy(&path) {
            Err(Error::NpyFormat(_)) => {}
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_shape_rejected_on_write() {
        let arr = NpyArray::F64(ArrayD::zeros(IxDyn(&[0, 3])));
        match write_npy(&tmp("empty.npy"), &arr) {
            Err(Error::InvalidData(_)) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected_on_write() {
        let arr = NpyArray::F64(
            ArrayD::from_shape_vec(IxDyn(&[2]), vec![1.0, f64::NAN]).unwrap(),
        );
        match write_npy(&tmp("nan.npy"), &arr) {
            Err(Error::InvalidData(_)) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn header_is_64_byte_aligned_v1() {
        let arr = NpyArray::U8(ArrayD::zeros(IxDyn(&[7])));
        let path = tmp("align.npy");
        write_npy(&path, &arr).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        assert_eq!(bytes[10 + header_len - 1], b'\n');
    }
}
