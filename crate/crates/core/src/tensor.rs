//! Dense row-major tensors over `f32`/`f64`.
//!
//! There are no strides and no broadcasting. Every reduction runs in
//! ascending index order so results are bit-reproducible across runs.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

use num_traits::Float;

use crate::error::{contract_err, shape_err, Result};

/// Element type tag. The discriminant is the HRT1 dtype byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        }
    }
}

/// Floating-point element of a [`Tensor`].
pub trait Scalar:
    Float + Debug + Default + Send + Sync + Sum + AddAssign + MulAssign + 'static
{
    const DTYPE: DType;

    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    /// Decodes one element from exactly `DTYPE.size()` little-endian bytes.
    fn read_le(bytes: &[u8]) -> Self;
    /// Maps 64 random bits to a value in `[0, 1)` using the top mantissa-width bits.
    fn unit_from_bits(bits: u64) -> Self;
    /// Largest representable value strictly below `self` (finite inputs).
    fn next_below(self) -> Self;
}

impl Scalar for f32 {
    const DTYPE: DType = DType::F32;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
    fn unit_from_bits(bits: u64) -> Self {
        (bits >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }
    fn next_below(self) -> Self {
        self.next_down()
    }
}

impl Scalar for f64 {
    const DTYPE: DType = DType::F64;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
    fn unit_from_bits(bits: u64) -> Self {
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
    fn next_below(self) -> Self {
        self.next_down()
    }
}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v)
}

/// A dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_extents(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return shape_err("tensor rank must be at least 1");
    }
    if let Some(pos) = shape.iter().position(|&e| e == 0) {
        return shape_err(format!("extent {pos} of {shape:?} is not positive"));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_extents(shape)?;
        if data.len() != n {
            return shape_err(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = check_extents(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let n = check_extents(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        })
    }

    /// The `n × n` identity matrix.
    pub fn eye(n: usize) -> Result<Self> {
        Self::from_fn(&[n, n], |i| if i / n == i % n { T::one() } else { T::zero() })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => shape_err(format!("expected a matrix, got shape {:?}", self.shape)),
        }
    }

    /// Row `i` of a tensor viewed as `shape[0] × rest`.
    pub fn row(&self, i: usize) -> &[T] {
        let w = self.data.len() / self.shape[0];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.data.len() / self.shape[0];
        &mut self.data[i * w..(i + 1) * w]
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n = check_extents(shape)?;
        if n != self.data.len() {
            return shape_err(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }

    fn same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return shape_err(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Largest absolute elementwise difference, as `f64`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }

    /// True when both tensors have the same shape and identical bit patterns.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

/// Matrix product `a · b` with ascending-`k` accumulation per output element.
///
/// Each output starts at zero and accumulates `a[i][k]·b[k][j]` for
/// `k = 0, 1, …` so the result is bit-identical to the textbook triple loop.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return shape_err(format!("matmul inner extents differ: {m}x{k} · {k2}x{n}"));
    }
    let mut out = vec![T::zero(); m * n];
    for (a_row, out_row) in a.data.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (kk, &aik) in a_row.iter().enumerate() {
            let b_row = &b.data[kk * n..(kk + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

/// Sentinel index marking a padding slot in an [`IndexMap`].
pub const PAD: usize = usize::MAX;

/// Destination-slot → source-row map, with [`PAD`] for padding slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMap {
    sources: Vec<usize>,
    source_len: usize,
    inverse_hint: Option<Vec<usize>>,
}

impl IndexMap {
    /// Builds a map over a source sequence of `source_len` rows.
    ///
    /// The inverse hint is filled in when every source row is referenced.
    pub fn new(sources: Vec<usize>, source_len: usize) -> Result<Self> {
        let mut first = vec![PAD; source_len];
        for (slot, &src) in sources.iter().enumerate() {
            if src == PAD {
                continue;
            }
            if src >= source_len {
                return contract_err(format!(
                    "slot {slot} references row {src} of a {source_len}-row sequence"
                ));
            }
            if first[src] == PAD {
                first[src] = slot;
            }
        }
        let inverse_hint = if first.iter().all(|&s| s != PAD) {
            Some(first)
        } else {
            None
        };
        Ok(Self {
            sources,
            source_len,
            inverse_hint,
        })
    }

    /// A bijective map; rejects PAD entries and repeats.
    pub fn permutation(sources: Vec<usize>) -> Result<Self> {
        let n = sources.len();
        let map = Self::new(sources, n)?;
        if !map.is_permutation() {
            return contract_err("map is not a permutation");
        }
        Ok(map)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            sources: (0..n).collect(),
            source_len: n,
            inverse_hint: Some((0..n).collect()),
        }
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn dest_len(&self) -> usize {
        self.sources.len()
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn inverse_hint(&self) -> Option<&[usize]> {
        self.inverse_hint.as_deref()
    }

    pub fn pad_count(&self) -> usize {
        self.sources.iter().filter(|&&s| s == PAD).count()
    }

    pub fn has_pad(&self) -> bool {
        self.sources.contains(&PAD)
    }

    pub fn is_permutation(&self) -> bool {
        self.sources.len() == self.source_len && !self.has_pad() && self.inverse_hint.is_some()
    }

    /// Map from source rows back to their first destination slot.
    pub fn inverse(&self) -> Result<IndexMap> {
        match &self.inverse_hint {
            Some(hint) => IndexMap::new(hint.clone(), self.sources.len()),
            None => contract_err("map does not cover every source row; no inverse"),
        }
    }
}

/// Copies rows of `seq` into destination order; PAD slots take `pad_row`.
pub fn gather<T: Scalar>(
    seq: &Tensor<T>,
    map: &IndexMap,
    pad_row: Option<&[T]>,
) -> Result<Tensor<T>> {
    let (len, c) = seq.dims2()?;
    if len != map.source_len() {
        return shape_err(format!(
            "map expects {} source rows, sequence has {len}",
            map.source_len()
        ));
    }
    match (map.has_pad(), pad_row) {
        (true, None) => return contract_err("map contains PAD but no pad row was given"),
        (false, Some(_)) => return contract_err("pad row given for a map without PAD"),
        (_, Some(p)) if p.len() != c => {
            return shape_err(format!("pad row has {} channels, expected {c}", p.len()))
        }
        _ => {}
    }
    let mut out = Vec::with_capacity(map.dest_len() * c);
    for &src in map.sources() {
        if src == PAD {
            out.extend_from_slice(pad_row.expect("checked above"));
        } else {
            out.extend_from_slice(seq.row(src));
        }
    }
    Tensor::new(&[map.dest_len(), c], out)
}

/// Writes non-PAD destination rows back to their source positions.
pub fn scatter_back<T: Scalar>(dest: &Tensor<T>, map: &IndexMap) -> Result<Tensor<T>> {
    let inv = map.inverse()?;
    gather(dest, &inv, None)
}
