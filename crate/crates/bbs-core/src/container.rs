//! Binary storage format for compressed models.
//!
//! All multi-byte fields are little-endian. A container is:
//!
//! ```text
//! magic "BBS1" | version u8 | group_size u8 | layer_count u16
//! per layer:
//!   name_len u16 | name (UTF-8)
//!   strategy u8 (0 uncompressed, 1 rounded-avg, 2 zero-point)
//!   n_pruned u8
//!   channels u32 | sensitive_count u32 | logical_k u32
//!   index map: channels x u32 (layout position -> original channel)
//!   sensitive rows: sensitive_count x logical_k raw int8
//!   group stream (see below)
//! ```
//!
//! A group stream is `group_count u32` followed by each group's record:
//! one metadata byte (bits 7..6 the redundant-plane count, bits 5..0 the
//! 6-bit constant, two's complement for zero-point), then the surviving
//! 8 - n_pruned planes MSB-plane first, each packed LSB-first into
//! ceil(group_size / 8) bytes. Strategy, n_pruned, and group size are not
//! repeated per group; they come from the enclosing layer header.

use crate::bitplane::{BitMatrix, BitVector};
use crate::compress::{CompressedGroup, Strategy, CONST_BITS, WEIGHT_BITS};
use crate::error::{Error, Result};
use crate::planner::{CompressedLayer, CompressedModel};

pub const MAGIC: &[u8; 4] = b"BBS1";
pub const VERSION: u8 = 1;

fn strategy_tag(s: Strategy) -> u8 {
    match s {
        Strategy::Uncompressed => 0,
        Strategy::RoundedAvg => 1,
        Strategy::ZeroPoint => 2,
    }
}

fn strategy_from_tag(tag: u8) -> Result<Strategy> {
    match tag {
        0 => Ok(Strategy::Uncompressed),
        1 => Ok(Strategy::RoundedAvg),
        2 => Ok(Strategy::ZeroPoint),
        t => Err(Error::Format(format!("unknown strategy tag {t}"))),
    }
}

// ── Reader ───────────────────────────────────────────────────────────────

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format("unexpected end of stream".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

// ── Group streams ────────────────────────────────────────────────────────

fn meta_byte(g: &CompressedGroup) -> u8 {
    (g.num_redundant << CONST_BITS) | (g.constant as u8 & 0x3F)
}

fn write_group(out: &mut Vec<u8>, g: &CompressedGroup) {
    out.push(meta_byte(g));
    for j in (0..g.stored.width() as usize).rev() {
        out.extend_from_slice(g.stored.column(j).as_bytes());
    }
}

fn read_group(
    r: &mut Reader,
    strategy: Strategy,
    n_pruned: u8,
    group_size: usize,
) -> Result<CompressedGroup> {
    let meta = r.u8()?;
    let num_redundant = meta >> CONST_BITS;
    let raw6 = meta & 0x3F;
    let constant = match strategy {
        Strategy::RoundedAvg | Strategy::Uncompressed => raw6 as i8,
        // sign-extend the 6-bit two's-complement field
        Strategy::ZeroPoint => {
            if raw6 & 0x20 != 0 {
                (raw6 | 0xC0) as i8
            } else {
                raw6 as i8
            }
        }
    };

    let width = (WEIGHT_BITS - n_pruned) as usize;
    let col_bytes = group_size.div_ceil(8);
    let mut columns = vec![BitVector::zeros(group_size); width];
    for j in (0..width).rev() {
        columns[j] = BitVector::from_bytes(r.take(col_bytes)?, group_size)?;
    }
    let stored = BitMatrix::from_columns(columns, -(1i32 << (width - 1)))?;

    let g = CompressedGroup { stored, num_redundant, constant, strategy, n_pruned };
    g.validate()?;
    Ok(g)
}

/// Serializes groups that share one layer's parameters. The stream starts
/// with the group count; per-layer parameters live in the container header,
/// not in the stream.
pub fn encode_stream(groups: &[CompressedGroup]) -> Result<Vec<u8>> {
    if let Some(first) = groups.first() {
        for g in groups {
            if g.strategy != first.strategy
                || g.n_pruned != first.n_pruned
                || g.group_size() != first.group_size()
            {
                return Err(Error::Config(
                    "groups in one stream must share strategy, n_pruned, and size".into(),
                ));
            }
            g.validate().map_err(|e| Error::Config(format!("unencodable group: {e}")))?;
        }
    }
    let mut out = Vec::new();
    out.extend_from_slice(&(groups.len() as u32).to_le_bytes());
    for g in groups {
        write_group(&mut out, g);
    }
    Ok(out)
}

/// Inverse of `encode_stream`; the whole byte slice must be consumed.
pub fn decode_stream(
    bytes: &[u8],
    strategy: Strategy,
    n_pruned: u8,
    group_size: usize,
) -> Result<Vec<CompressedGroup>> {
    let mut r = Reader::new(bytes);
    let groups = read_stream(&mut r, strategy, n_pruned, group_size)?;
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes after stream", r.remaining())));
    }
    Ok(groups)
}

fn read_stream(
    r: &mut Reader,
    strategy: Strategy,
    n_pruned: u8,
    group_size: usize,
) -> Result<Vec<CompressedGroup>> {
    if n_pruned > 6 {
        return Err(Error::Format(format!("n_pruned {n_pruned} exceeds 6")));
    }
    if group_size == 0 {
        return Err(Error::Format("group size 0".into()));
    }
    let count = r.u32()? as usize;
    let group_bytes = 1 + (WEIGHT_BITS - n_pruned) as usize * group_size.div_ceil(8);
    if r.remaining() < count * group_bytes {
        return Err(Error::Format(format!(
            "stream claims {count} groups but only {} bytes remain",
            r.remaining()
        )));
    }
    (0..count).map(|_| read_group(r, strategy, n_pruned, group_size)).collect()
}

// ── Containers ───────────────────────────────────────────────────────────

pub fn encode_container(model: &CompressedModel) -> Result<Vec<u8>> {
    if model.group_size == 0 || model.group_size > 255 {
        return Err(Error::Config(format!("group size {} outside 1..=255", model.group_size)));
    }
    if model.layers.len() > u16::MAX as usize {
        return Err(Error::Config("too many layers for the container header".into()));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(model.group_size as u8);
    out.extend_from_slice(&(model.layers.len() as u16).to_le_bytes());

    for layer in &model.layers {
        let name = layer.name.as_bytes();
        if name.len() > u16::MAX as usize {
            return Err(Error::Config(format!("layer name {} too long", layer.name)));
        }
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(strategy_tag(layer.strategy));
        out.push(layer.n_pruned);
        out.extend_from_slice(&(layer.channels as u32).to_le_bytes());
        out.extend_from_slice(&(layer.sensitive_count() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.logical_k as u32).to_le_bytes());
        for &p in &layer.permutation {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for row in &layer.sensitive_rows {
            if row.len() != layer.logical_k {
                return Err(Error::Shape(format!(
                    "layer {}: sensitive row length {} != {}",
                    layer.name,
                    row.len(),
                    layer.logical_k
                )));
            }
            out.extend(row.iter().map(|&v| v as u8));
        }
        let flat: Vec<CompressedGroup> = layer.normal_groups.iter().flatten().cloned().collect();
        let expected = (layer.channels - layer.sensitive_count()) * layer.groups_per_channel();
        if flat.len() != expected || flat.iter().any(|g| g.group_size() != model.group_size) {
            return Err(Error::Shape(format!(
                "layer {}: group stream does not match header counts",
                layer.name
            )));
        }
        out.extend(encode_stream(&flat)?);
    }
    Ok(out)
}

pub fn decode_container(bytes: &[u8]) -> Result<CompressedModel> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic, not a compressed-model container".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let group_size = r.u8()? as usize;
    if group_size == 0 {
        return Err(Error::Format("group size 0".into()));
    }
    let layer_count = r.u16()? as usize;

    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format("layer name is not UTF-8".into()))?
            .to_string();
        let strategy = strategy_from_tag(r.u8()?)?;
        let n_pruned = r.u8()?;
        if n_pruned > 6 {
            return Err(Error::Format(format!("layer {name}: n_pruned {n_pruned} exceeds 6")));
        }
        let channels = r.u32()? as usize;
        let sensitive_count = r.u32()? as usize;
        let logical_k = r.u32()? as usize;
        if sensitive_count > channels {
            return Err(Error::Format(format!(
                "layer {name}: {sensitive_count} sensitive of {channels} channels"
            )));
        }
        if logical_k == 0 || channels == 0 {
            return Err(Error::Format(format!("layer {name}: degenerate shape")));
        }

        if r.remaining() < channels * 4 {
            return Err(Error::Format("unexpected end of stream".into()));
        }
        let mut permutation = Vec::with_capacity(channels);
        let mut seen = vec![false; channels];
        for _ in 0..channels {
            let p = r.u32()? as usize;
            if p >= channels || seen[p] {
                return Err(Error::Format(format!("layer {name}: index map is not a permutation")));
            }
            seen[p] = true;
            permutation.push(p as u32);
        }

        if r.remaining() < sensitive_count * logical_k {
            return Err(Error::Format("unexpected end of stream".into()));
        }
        let sensitive_rows: Vec<Vec<i8>> = (0..sensitive_count)
            .map(|_| Ok(r.take(logical_k)?.iter().map(|&b| b as i8).collect()))
            .collect::<Result<_>>()?;

        let flat = read_stream(&mut r, strategy, n_pruned, group_size)?;
        let groups_per = logical_k.div_ceil(group_size);
        let normal = channels - sensitive_count;
        if flat.len() != normal * groups_per {
            return Err(Error::Format(format!(
                "layer {name}: {} groups for {normal} channels x {groups_per}",
                flat.len()
            )));
        }
        let normal_groups: Vec<Vec<CompressedGroup>> =
            flat.chunks(groups_per.max(1)).map(|c| c.to_vec()).collect();

        layers.push(CompressedLayer {
            name,
            strategy,
            n_pruned,
            group_size,
            channels,
            logical_k,
            permutation,
            sensitive_rows,
            normal_groups,
        });
    }

    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes after last layer", r.remaining())));
    }
    Ok(CompressedModel { group_size, layers })
}
