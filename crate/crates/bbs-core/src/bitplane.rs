//! Bit-plane decomposition of int8 weight groups.
//!
//! A group of N weights is viewed column-wise: bit plane b collects bit b of
//! every weight. In two's complement the top plane carries weight
//! -2^(width-1), all others +2^b. The key observation behind bi-directional
//! bit sparsity (BBS) is that within one plane, whichever bit value is in the
//! minority is the only one that needs processing: a plane with z zeros and
//! o ones costs min(z, o) work, because a majority of ones can be handled as
//! "all ones minus the zero positions". That bounds effectual bits per plane
//! at half the group size, for any weight distribution.

use crate::error::{Error, Result};

// ── Packed bit vector ────────────────────────────────────────────────────

/// Fixed-length bit vector, packed LSB-first within bytes: bit i lives at
/// byte i/8, bit position i%8. This layout is part of the storage format,
/// so it must not change. Padding bits past `len` are kept zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector {
    bytes: Vec<u8>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector { bytes: vec![0; len.div_ceil(8)], len }
    }

    pub fn from_fn(len: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut v = BitVector::zeros(len);
        for i in 0..len {
            if f(i) {
                v.bytes[i / 8] |= 1 << (i % 8);
            }
        }
        v
    }

    /// Reconstructs a vector from packed bytes. Padding bits must be zero;
    /// anything else means the stream was not produced by this code.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::Format(format!(
                "bit vector of length {len} needs {} bytes, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        if !len.is_multiple_of(8) {
            let last = bytes[bytes.len() - 1];
            if last >> (len % 8) != 0 {
                return Err(Error::Format("nonzero padding bits in bit vector".into()));
            }
        }
        Ok(BitVector { bytes: bytes.to_vec(), len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.bytes[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        debug_assert!(i < self.len);
        if v {
            self.bytes[i / 8] |= 1 << (i % 8);
        } else {
            self.bytes[i / 8] &= !(1 << (i % 8));
        }
    }

    pub fn count_ones(&self) -> usize {
        self.bytes.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Byte s holds bits [8s, 8s+8); past the end it reads as zero.
    pub fn byte(&self, s: usize) -> u8 {
        self.bytes.get(s).copied().unwrap_or(0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

// ── Bit-plane matrix ─────────────────────────────────────────────────────

/// A weight group decomposed into `width` bit planes over `group_size`
/// weights. `columns[b]` is plane b (significance 2^b relative to the
/// matrix), and the top plane carries `msb_weight`, which is -2^(width-1)
/// for a freshly decomposed two's-complement group and stays -2^(width-1)
/// after redundant top planes are trimmed away (the width shrinks with it).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    columns: Vec<BitVector>,
    group_size: usize,
    width: u8,
    msb_weight: i32,
}

impl BitMatrix {
    pub fn from_columns(columns: Vec<BitVector>, msb_weight: i32) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Config("bit matrix needs at least one column".into()));
        }
        let group_size = columns[0].len();
        if columns.iter().any(|c| c.len() != group_size) {
            return Err(Error::Shape("bit matrix columns differ in length".into()));
        }
        let width = columns.len() as u8;
        Ok(BitMatrix { columns, group_size, width, msb_weight })
    }

    pub fn width(&self) -> u8 {
        self.width
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn msb_weight(&self) -> i32 {
        self.msb_weight
    }

    pub fn column(&self, b: usize) -> &BitVector {
        &self.columns[b]
    }

    pub fn columns(&self) -> &[BitVector] {
        &self.columns
    }

    pub fn bit(&self, i: usize, b: usize) -> bool {
        self.columns[b].get(i)
    }
}

/// Decomposes two's-complement values into `width` bit planes.
/// Every value must be representable in `width` bits.
pub fn to_bitplanes(values: &[i8], width: u8) -> Result<BitMatrix> {
    if values.is_empty() {
        return Err(Error::Config("cannot decompose an empty group".into()));
    }
    if width == 0 || width > 8 {
        return Err(Error::Config(format!("bit width {width} outside 1..=8")));
    }
    let lo = -(1i32 << (width - 1));
    let hi = (1i32 << (width - 1)) - 1;
    for &v in values {
        if (v as i32) < lo || (v as i32) > hi {
            return Err(Error::ValueOutOfRange { value: v as i32, width });
        }
    }
    let columns = (0..width)
        .map(|b| BitVector::from_fn(values.len(), |i| (values[i] as u8) >> b & 1 == 1))
        .collect();
    Ok(BitMatrix { columns, group_size: values.len(), width, msb_weight: -(1i32 << (width - 1)) })
}

/// Exact inverse of `to_bitplanes`: sums 2^b per plane with the top plane
/// weighted `msb_weight`.
pub fn from_bitplanes(m: &BitMatrix) -> Vec<i8> {
    let top = (m.width - 1) as usize;
    (0..m.group_size)
        .map(|i| {
            let mut acc: i32 = 0;
            for b in 0..top {
                if m.columns[b].get(i) {
                    acc += 1 << b;
                }
            }
            if m.columns[top].get(i) {
                acc += m.msb_weight;
            }
            debug_assert!((-128..=127).contains(&acc));
            acc as i8
        })
        .collect()
}

/// Sign-magnitude decomposition: planes 0..=6 hold the magnitude, plane 7
/// the sign. -128 has no sign-magnitude form in 8 bits and saturates to
/// -127. Used for sparsity statistics only; `from_bitplanes` does not apply.
pub fn to_sign_magnitude(values: &[i8]) -> BitMatrix {
    let mag = |v: i8| -> u8 { (v.max(-127) as i16).unsigned_abs() as u8 };
    let mut columns: Vec<BitVector> = (0..7)
        .map(|b| BitVector::from_fn(values.len(), |i| mag(values[i]) >> b & 1 == 1))
        .collect();
    columns.push(BitVector::from_fn(values.len(), |i| values[i] < 0));
    BitMatrix { columns, group_size: values.len(), width: 8, msb_weight: -(1 << 7) }
}

/// Work a bit-serial PE owes one plane under BBS: the minority bit count.
/// Returns (effectual bits, inverted). `inverted` means ones outnumber
/// zeros, so the plane is processed as its complement plus a correction by
/// the full activation sum; an exact tie is not inverted.
pub fn column_effectual(column: &BitVector) -> (usize, bool) {
    let ones = column.count_ones();
    let zeros = column.len() - ones;
    (ones.min(zeros), ones > zeros)
}

// ── Tensor-level sparsity statistics ─────────────────────────────────────

/// Zero/skippable-bit fractions of a tensor under several encodings.
/// All fields are fractions of the 8 * len real weight bits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SparsityReport {
    /// Fraction of weights equal to zero.
    pub value_sparsity: f64,
    /// Fraction of zero bits in plain two's complement.
    pub bit_sparsity_2c: f64,
    /// Fraction of zero bits in sign-magnitude form.
    pub bit_sparsity_sm: f64,
    /// Fraction of bits BBS skips with the given vector size: per plane of
    /// each vector, the majority-bit count.
    pub bbs_sparsity: f64,
}

/// Computes sparsity statistics over a flat tensor. BBS statistics chunk the
/// tensor into vectors of `bbs_vector_size`; a short tail is treated as a
/// shorter vector (equivalently zero-padded, with the padding excluded from
/// both counts so statistics reflect real weights only).
pub fn sparsity_stats(tensor: &[i8], bbs_vector_size: usize) -> Result<SparsityReport> {
    if tensor.is_empty() {
        return Err(Error::Config("sparsity of an empty tensor is undefined".into()));
    }
    if bbs_vector_size == 0 {
        return Err(Error::Config("BBS vector size must be at least 1".into()));
    }

    let len = tensor.len();
    let total_bits = (8 * len) as f64;

    let zero_values = tensor.iter().filter(|&&v| v == 0).count();

    let one_bits_2c: usize = tensor.iter().map(|&v| (v as u8).count_ones() as usize).sum();

    let sm = to_sign_magnitude(tensor);
    let one_bits_sm: usize = sm.columns().iter().map(|c| c.count_ones()).sum();

    let mut skipped: usize = 0;
    for chunk in tensor.chunks(bbs_vector_size) {
        for b in 0..8 {
            let ones = chunk.iter().filter(|&&v| (v as u8) >> b & 1 == 1).count();
            skipped += ones.max(chunk.len() - ones);
        }
    }

    Ok(SparsityReport {
        value_sparsity: zero_values as f64 / len as f64,
        bit_sparsity_2c: 1.0 - one_bits_2c as f64 / total_bits,
        bit_sparsity_sm: 1.0 - one_bits_sm as f64 / total_bits,
        bbs_sparsity: skipped as f64 / total_bits,
    })
}
