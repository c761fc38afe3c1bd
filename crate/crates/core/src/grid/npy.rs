//! Reading and writing the numpy `.npy` v1.0 container.
//!
//! Only the subset produced by the activation extractor is accepted:
//! little-endian `f4`/`f8` payloads in C order. Everything else is rejected
//! rather than converted, so a tensor either round-trips bit-exactly or fails
//! loudly.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use super::GridError;

/// The npy magic number.
pub const MAGIC: [u8; 6] = *b"\x93NUMPY";

const HEADER_ALIGN: usize = 64;

/// Element type of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
        }
    }
}

/// Shape and element type of a stored tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub shape: Vec<usize>,
    pub dtype: Dtype,
}

impl TensorHeader {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn payload_len(&self) -> usize {
        self.element_count() * self.dtype.width()
    }
}

/// A dense tensor; `f32` payloads are widened to `f64` on read.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub header: TensorHeader,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        &self.header.shape
    }

    /// Splits an `N×H×W×C` batch into `N` tensors of shape `H×W×C`.
    /// Tensors of rank 2 or 3 are returned unchanged as a single element.
    pub fn split_batch(self) -> Result<Vec<Tensor>, GridError> {
        match self.header.shape.len() {
            2 | 3 => Ok(vec![self]),
            4 => {
                let inner: Vec<usize> = self.header.shape[1..].to_vec();
                let stride: usize = inner.iter().product();
                if stride == 0 {
                    return Err(GridError::EmptyAxis(self.header.shape));
                }
                let dtype = self.header.dtype;
                Ok(self
                    .values
                    .chunks_exact(stride)
                    .map(|chunk| Tensor {
                        header: TensorHeader {
                            shape: inner.clone(),
                            dtype,
                        },
                        values: chunk.to_vec(),
                    })
                    .collect())
            }
            _ => Err(GridError::UnsupportedRank(self.header.shape)),
        }
    }
}

/// Reads a full tensor from `path`.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, GridError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_from(&mut BufReader::new(file))
}

/// Reads only the header of the tensor at `path`.
pub fn read_header(path: impl AsRef<Path>) -> Result<TensorHeader, GridError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| GridError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_header(&mut BufReader::new(file))
}

/// Reads a tensor from a stream positioned at the magic string.
pub fn read_from<R: Read>(reader: &mut R) -> Result<Tensor, GridError> {
    let header = parse_header(reader)?;
    let expected = header.payload_len();
    let mut payload = Vec::with_capacity(expected);
    reader
        .take(expected as u64)
        .read_to_end(&mut payload)
        .map_err(|e| GridError::MalformedHeader(format!("payload read failed: {e}")))?;
    if payload.len() < expected {
        return Err(GridError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let values = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
            .collect(),
    };
    Ok(Tensor { header, values })
}

fn parse_header<R: Read>(reader: &mut R) -> Result<TensorHeader, GridError> {
    let mut preamble = [0u8; 10];
    reader
        .read_exact(&mut preamble)
        .map_err(|_| GridError::MalformedHeader("file shorter than npy preamble".into()))?;
    if preamble[..6] != MAGIC {
        return Err(GridError::MalformedHeader("bad magic string".into()));
    }
    if preamble[6..8] != [1, 0] {
        return Err(GridError::MalformedHeader(format!(
            "unsupported npy version {}.{}",
            preamble[6], preamble[7]
        )));
    }
    let header_len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
    let mut dict = vec![0u8; header_len];
    reader
        .read_exact(&mut dict)
        .map_err(|_| GridError::MalformedHeader("header dict truncated".into()))?;
    let dict = std::str::from_utf8(&dict)
        .map_err(|_| GridError::MalformedHeader("header dict is not ASCII".into()))?;
    parse_dict(dict)
}

fn parse_dict(text: &str) -> Result<TensorHeader, GridError> {
    let body = text
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| GridError::MalformedHeader("header is not a dict literal".into()))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;

    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let (key, after_key) = take_quoted(rest)?;
        let after_colon = after_key
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| GridError::MalformedHeader(format!("missing ':' after '{key}'")))?
            .trim_start();
        let remaining = match key {
            "descr" => {
                let (value, r) = take_quoted(after_colon)?;
                descr = Some(value.to_string());
                r
            }
            "fortran_order" => {
                if let Some(r) = after_colon.strip_prefix("False") {
                    fortran = Some(false);
                    r
                } else if let Some(r) = after_colon.strip_prefix("True") {
                    fortran = Some(true);
                    r
                } else {
                    return Err(GridError::MalformedHeader("fortran_order is not a bool".into()));
                }
            }
            "shape" => {
                let (dims, r) = take_tuple(after_colon)?;
                shape = Some(dims);
                r
            }
            other => {
                return Err(GridError::MalformedHeader(format!("unexpected key '{other}'")));
            }
        };
        rest = remaining.trim_start();
        if let Some(r) = rest.strip_prefix(',') {
            rest = r.trim_start();
        } else if !rest.is_empty() {
            return Err(GridError::MalformedHeader("expected ',' between entries".into()));
        }
    }

    let descr = descr.ok_or_else(|| GridError::MalformedHeader("missing 'descr'".into()))?;
    let fortran =
        fortran.ok_or_else(|| GridError::MalformedHeader("missing 'fortran_order'".into()))?;
    let shape = shape.ok_or_else(|| GridError::MalformedHeader("missing 'shape'".into()))?;

    let dtype = match descr.as_str() {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        other => {
            return Err(GridError::UnsupportedDtype(format!(
                "descr '{other}' (only '<f4' and '<f8' are accepted)"
            )))
        }
    };
    if fortran {
        return Err(GridError::UnsupportedDtype(
            "Fortran-order payloads are not supported".into(),
        ));
    }
    Ok(TensorHeader { shape, dtype })
}

fn take_quoted(s: &str) -> Result<(&str, &str), GridError> {
    let quote = s
        .chars()
        .next()
        .filter(|c| *c == '\'' || *c == '"')
        .ok_or_else(|| GridError::MalformedHeader(format!("expected quoted string at '{s}'")))?;
    let inner = &s[1..];
    let end = inner
        .find(quote)
        .ok_or_else(|| GridError::MalformedHeader("unterminated string".into()))?;
    Ok((&inner[..end], &inner[end + 1..]))
}

fn take_tuple(s: &str) -> Result<(Vec<usize>, &str), GridError> {
    let inner = s
        .strip_prefix('(')
        .ok_or_else(|| GridError::MalformedHeader("shape is not a tuple".into()))?;
    let end = inner
        .find(')')
        .ok_or_else(|| GridError::MalformedHeader("unterminated shape tuple".into()))?;
    let dims = inner[..end]
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| GridError::MalformedHeader(format!("bad shape entry '{t}'")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((dims, &inner[end + 1..]))
}

fn format_shape(shape: &[usize]) -> String {
    match shape {
        [single] => format!("({single},)"),
        dims => {
            let parts: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    }
}

/// Writes `values` with the given shape as an npy v1.0 stream.
///
/// With `Dtype::F32` the values are narrowed before encoding.
pub fn write_to<W: Write>(
    writer: &mut W,
    shape: &[usize],
    values: &[f64],
    dtype: Dtype,
) -> io::Result<()> {
    let expected: usize = shape.iter().product();
    if expected != values.len() {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("shape {shape:?} needs {expected} values, got {}", values.len()),
        ));
    }
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        format_shape(shape)
    );
    // magic(6) + version(2) + len(2) + dict + '\n' must be a multiple of 64
    let unpadded = MAGIC.len() + 4 + dict.len() + 1;
    let padding = (HEADER_ALIGN - unpadded % HEADER_ALIGN) % HEADER_ALIGN;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');
    let header_len = u16::try_from(dict.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "npy header too long"))?;

    writer.write_all(&MAGIC)?;
    writer.write_all(&[1, 0])?;
    writer.write_all(&header_len.to_le_bytes())?;
    writer.write_all(dict.as_bytes())?;
    match dtype {
        Dtype::F32 => {
            for &v in values {
                writer.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for &v in values {
                writer.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Writes a tensor file at `path`.
pub fn write_tensor(
    path: impl AsRef<Path>,
    shape: &[usize],
    values: &[f64],
    dtype: Dtype,
) -> io::Result<()> {
    let mut out = io::BufWriter::new(File::create(path)?);
    write_to(&mut out, shape, values, dtype)?;
    out.flush()
}
