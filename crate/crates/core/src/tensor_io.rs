//! Dense tensors, the `.pst` binary container and ratings-table CSV ingestion.
//!
//! `.pst` layout, little-endian throughout:
//!
//! ```text
//! "PSYT" | version u16 = 1 | dtype u8 = 0 (f32) | reserved u8 = 0 | ndim u8
//!        | dims: ndim x u32 | payload: product(dims) x f32
//! ```

use std::collections::HashSet;
use std::io::{self, Read, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"PSYT";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 0;
pub const MAX_AXES: usize = 4;
/// Bytes before the dims list: magic, version, dtype, reserved, ndim.
pub const HEADER_FIXED_LEN: usize = 9;

/// Range of human attribute ratings in the face dataset (1 = not at all, 9 = extremely).
pub const HUMAN_RATING_RANGE: (f64, f64) = (1.0, 9.0);

/// Dense row-major tensor with 1 to 4 positive axes and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = checked_volume(&dims)?;
        if data.len() != len {
            return Err(Error::Shape(format!(
                "dims {dims:?} need {len} elements, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite element at flat index {pos}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let len = checked_volume(&dims)?;
        Ok(Self {
            dims,
            data: vec![T::zero(); len],
        })
    }

    /// Builds from a closure over the flat index.
    pub fn from_fn(dims: Vec<usize>, f: impl FnMut(usize) -> T) -> Result<Self> {
        let len = checked_volume(&dims)?;
        Self::new(dims, (0..len).map(f).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Same data, new dims of equal volume.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.dims.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn cast<U: Scalar>(&self) -> Result<Tensor<U>> {
        Tensor::new(
            self.dims.clone(),
            self.data.iter().map(|v| U::of(v.f64())).collect(),
        )
    }

    pub fn max(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }
}

fn checked_volume(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > MAX_AXES {
        return Err(Error::Shape(format!(
            "tensors need 1 to {MAX_AXES} axes, got {}",
            dims.len()
        )));
    }
    if let Some(axis) = dims.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!("axis {axis} has zero length")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("volume of {dims:?} overflows")))
}

/// Exact size of the encoded form of `t`.
pub fn encoded_len<T>(t: &Tensor<T>) -> u64 {
    (HEADER_FIXED_LEN + 4 * t.dims.len() + 4 * t.data.len()) as u64
}

struct CountingWriter<W> {
    inner: W,
    written: u64,
}

impl<W: Write> CountingWriter<W> {
    fn put(&mut self, bytes: &[u8]) -> Result<()> {
        let mut rest = bytes;
        while !rest.is_empty() {
            match self.inner.write(rest) {
                Ok(0) => {
                    return Err(Error::Io {
                        bytes_written: self.written,
                        source: io::Error::from(io::ErrorKind::WriteZero),
                    })
                }
                Ok(k) => {
                    self.written += k as u64;
                    rest = &rest[k..];
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(source) => {
                    return Err(Error::Io {
                        bytes_written: self.written,
                        source,
                    })
                }
            }
        }
        Ok(())
    }
}

/// Encodes `t` into `sink`, returning the number of bytes written.
pub fn write_tensor(t: &Tensor<f32>, sink: impl Write) -> Result<u64> {
    // Fields are private and validated on construction; recheck the volume anyway
    // since the header must agree with the payload bit for bit.
    let volume = checked_volume(&t.dims)?;
    if volume != t.data.len() {
        return Err(Error::Shape("tensor payload disagrees with dims".into()));
    }
    let mut header = Vec::with_capacity(HEADER_FIXED_LEN + 4 * t.dims.len());
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.push(DTYPE_F32);
    header.push(0);
    header.push(t.dims.len() as u8);
    for &d in &t.dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::Shape(format!("axis length {d} does not fit in u32")))?;
        header.extend_from_slice(&d.to_le_bytes());
    }

    let mut out = CountingWriter {
        inner: sink,
        written: 0,
    };
    out.put(&header)?;
    let mut payload = Vec::with_capacity(4 * t.data.len());
    for v in &t.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.put(&payload)?;
    out.inner.flush().map_err(|source| Error::Io {
        bytes_written: out.written,
        source,
    })?;
    Ok(out.written)
}

fn read_exact_or(source: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Format(format!("stream truncated in {what}"))
        } else {
            Error::io(e)
        }
    })
}

/// Decodes one tensor from `source`, consuming exactly the bytes its header declares.
pub fn read_tensor(mut source: impl Read) -> Result<Tensor<f32>> {
    let mut fixed = [0u8; HEADER_FIXED_LEN];
    read_exact_or(&mut source, &mut fixed, "header")?;
    if &fixed[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"PSYT\"",
            String::from_utf8_lossy(&fixed[0..4])
        )));
    }
    let version = u16::from_le_bytes([fixed[4], fixed[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    if fixed[6] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype {}", fixed[6])));
    }
    if fixed[7] != 0 {
        return Err(Error::Format(format!("reserved byte is {}, expected 0", fixed[7])));
    }
    let ndim = fixed[8] as usize;
    if ndim == 0 || ndim > MAX_AXES {
        return Err(Error::Format(format!("ndim {ndim} outside 1..={MAX_AXES}")));
    }

    let mut dim_bytes = vec![0u8; 4 * ndim];
    read_exact_or(&mut source, &mut dim_bytes, "dims")?;
    let dims: Vec<usize> = dim_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let volume = checked_volume(&dims).map_err(|e| match e {
        Error::Shape(msg) => Error::Format(msg),
        other => other,
    })?;
    let payload_len = volume
        .checked_mul(4)
        .ok_or_else(|| Error::Format(format!("payload size of {dims:?} overflows")))?;

    // Grow with the stream instead of trusting the header with a huge allocation.
    let mut payload = Vec::new();
    source
        .take(payload_len as u64)
        .read_to_end(&mut payload)
        .map_err(Error::io)?;
    if payload.len() != payload_len {
        return Err(Error::Format(format!(
            "payload truncated: header declares {payload_len} bytes, stream has {}",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite payload value (bits {:#010x}) at flat index {pos}",
            data[pos].to_bits()
        )));
    }
    Ok(Tensor { dims, data })
}

/// Reads a whole `.pst` file holding exactly one tensor; trailing bytes are a format error.
pub fn read_tensor_file(path: impl AsRef<std::path::Path>) -> Result<Tensor<f32>> {
    let bytes = std::fs::read(path).map_err(Error::io)?;
    let mut cursor = io::Cursor::new(bytes.as_slice());
    let t = read_tensor(&mut cursor)?;
    if (cursor.position() as usize) != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor",
            bytes.len() - cursor.position() as usize
        )));
    }
    Ok(t)
}

pub fn write_tensor_file(t: &Tensor<f32>, path: impl AsRef<std::path::Path>) -> Result<u64> {
    let file = std::fs::File::create(path).map_err(Error::io)?;
    write_tensor(t, io::BufWriter::new(file))
}

/// Images x attributes score matrix, used for both human ratings and model predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsTable<T = f64> {
    image_ids: Vec<String>,
    attribute_names: Vec<String>,
    values: Array2<T>,
}

impl<T: Scalar> RatingsTable<T> {
    pub fn new(
        image_ids: Vec<String>,
        attribute_names: Vec<String>,
        values: Array2<T>,
    ) -> Result<Self> {
        if values.nrows() != image_ids.len() || values.ncols() != attribute_names.len() {
            return Err(Error::Shape(format!(
                "values are {}x{} but there are {} ids and {} attributes",
                values.nrows(),
                values.ncols(),
                image_ids.len(),
                attribute_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &attribute_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Format(format!("duplicate attribute name {name:?}")));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("ratings contain non-finite values".into()));
        }
        Ok(Self {
            image_ids,
            attribute_names,
            values,
        })
    }

    pub fn image_ids(&self) -> &[String] {
        &self.image_ids
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn n_images(&self) -> usize {
        self.image_ids.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attribute_names.iter().position(|a| a == name)
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.values.column(j).to_vec()
    }

    /// Errors with `Data` when any value falls outside `[lo, hi]`.
    pub fn check_range(&self, lo: f64, hi: f64) -> Result<()> {
        for ((i, j), v) in self.values.indexed_iter() {
            let v = v.f64();
            if v < lo || v > hi {
                return Err(Error::Data(format!(
                    "value {v} for image {:?}, attribute {:?} outside [{lo}, {hi}]",
                    self.image_ids[i], self.attribute_names[j]
                )));
            }
        }
        Ok(())
    }
}

/// Parses a ratings CSV: header `image_id,<attr>,...`, then one row per image.
///
/// Row numbers in diagnostics count data rows from 1 (the header is row 0).
pub fn read_ratings_csv<T: Scalar>(
    source: impl Read,
    expect_range: Option<(f64, f64)>,
) -> Result<RatingsTable<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| Error::Format(format!("header: {e}")))?,
        None => return Err(Error::Format("empty CSV, header row required".into())),
    };
    if header.get(0).map(str::trim) != Some("image_id") {
        return Err(Error::Format(format!(
            "first header column must be \"image_id\", got {:?}",
            header.get(0).unwrap_or("")
        )));
    }
    let attribute_names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    if attribute_names.is_empty() {
        return Err(Error::Format("header names no attributes".into()));
    }
    let width = header.len();

    let mut image_ids = Vec::new();
    let mut flat: Vec<T> = Vec::new();
    for (k, record) in records.enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        if record.len() != width {
            return Err(Error::Format(format!(
                "row {row} has {} fields, header has {width}",
                record.len()
            )));
        }
        image_ids.push(record[0].trim().to_string());
        for (col, cell) in record.iter().enumerate().skip(1) {
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| {
                Error::Format(format!(
                    "row {row}, column {col} ({}): {cell:?} is not a number",
                    attribute_names[col - 1]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "row {row}, column {col} ({}): non-finite value {cell:?}",
                    attribute_names[col - 1]
                )));
            }
            flat.push(T::of(v));
        }
    }
    let values = Array2::from_shape_vec((image_ids.len(), attribute_names.len()), flat)
        .map_err(|e| Error::Shape(e.to_string()))?;
    let table = RatingsTable::new(image_ids, attribute_names, values)?;
    if let Some((lo, hi)) = expect_range {
        table.check_range(lo, hi)?;
    }
    Ok(table)
}

pub fn read_ratings_file<T: Scalar>(
    path: impl AsRef<std::path::Path>,
    expect_range: Option<(f64, f64)>,
) -> Result<RatingsTable<T>> {
    let file = std::fs::File::open(path).map_err(Error::io)?;
    read_ratings_csv(io::BufReader::new(file), expect_range)
}

/// Writes a table in the same layout `read_ratings_csv` accepts. Values use the
/// shortest decimal form that round-trips.
pub fn write_ratings_csv<T: Scalar>(table: &RatingsTable<T>, mut sink: impl Write) -> Result<()> {
    let mut text = String::from("image_id");
    for name in &table.attribute_names {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (i, id) in table.image_ids.iter().enumerate() {
        text.push_str(id);
        for v in table.values.row(i) {
            text.push(',');
            text.push_str(&v.to_string());
        }
        text.push('\n');
    }
    sink.write_all(text.as_bytes()).map_err(Error::io)
}
