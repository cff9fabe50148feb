//! Binary pruning of weight groups.
//!
//! A group of N int8 weights is stored as 8 - n bit planes plus one metadata
//! byte; the n missing planes come from two sources that cost nothing to
//! reconstruct:
//!
//! * redundant planes: consecutive planes below the MSB plane that are
//!   bit-identical to it (sign extension). Removing them is lossless; the
//!   remaining top plane keeps the negative weight of a narrower two's
//!   complement. At most 3 can be recorded in the metadata.
//! * generated planes: the low planes are replaced by a shared constant, so
//!   each becomes all-zero or all-one across the group. `RoundedAvg` keeps
//!   values in place and averages the low bits; `ZeroPoint` first shifts the
//!   whole group by a searched constant c so that more top planes become
//!   redundant, snaps each shifted value onto the surviving grid, and lets
//!   the datapath subtract c * sum(activations) later.
//!
//! Both strategies leave every stored plane either untouched or constant,
//! which is what lets the PE skip exactly n planes per group every cycle.

use crate::bitplane::{from_bitplanes, to_bitplanes, BitMatrix};
use crate::error::{Error, Result};
use crate::metrics;
use serde::{Deserialize, Serialize};

/// Maximum redundant planes the metadata byte can record (2-bit field).
pub const MAX_REDUNDANT: u8 = 3;
/// Width of the metadata constant field in bits.
pub const CONST_BITS: u8 = 6;
/// Full precision of an uncompressed weight.
pub const WEIGHT_BITS: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    RoundedAvg,
    ZeroPoint,
    Uncompressed,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::RoundedAvg => "rounded_avg",
            Strategy::ZeroPoint => "zero_point",
            Strategy::Uncompressed => "uncompressed",
        })
    }
}

/// A weight group after binary pruning: the surviving bit planes plus the
/// metadata needed to reconstruct the pruned ones.
///
/// `stored` has 8 - n_pruned planes covering significances
/// n_pruned - num_redundant ..= 7 - num_redundant of the (possibly shifted)
/// values; its top plane is negative. `constant` is the 6-bit metadata
/// field: the unsigned low-bit constant for `RoundedAvg`, the signed shift
/// for `ZeroPoint`, 0 when uncompressed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedGroup {
    pub stored: BitMatrix,
    pub num_redundant: u8,
    pub constant: i8,
    pub strategy: Strategy,
    pub n_pruned: u8,
}

impl CompressedGroup {
    /// Wraps a raw group without pruning anything.
    pub fn uncompressed(values: &[i8]) -> Result<Self> {
        Ok(CompressedGroup {
            stored: to_bitplanes(values, WEIGHT_BITS)?,
            num_redundant: 0,
            constant: 0,
            strategy: Strategy::Uncompressed,
            n_pruned: 0,
        })
    }

    pub fn group_size(&self) -> usize {
        self.stored.group_size()
    }

    /// Significance of the lowest stored plane: how many planes were
    /// replaced by the constant (as opposed to removed as redundant).
    pub fn base_shift(&self) -> u8 {
        self.n_pruned - self.num_redundant
    }

    /// Checks the metadata invariants; decode paths call this to reject
    /// corrupt streams.
    pub fn validate(&self) -> Result<()> {
        if self.n_pruned > 6 {
            return Err(Error::Decode(format!("n_pruned {} exceeds 6", self.n_pruned)));
        }
        if self.num_redundant > MAX_REDUNDANT.min(self.n_pruned) {
            return Err(Error::Decode(format!(
                "num_redundant {} exceeds min(3, n_pruned={})",
                self.num_redundant, self.n_pruned
            )));
        }
        if self.stored.width() != WEIGHT_BITS - self.n_pruned {
            return Err(Error::Decode(format!(
                "stored width {} does not match n_pruned {}",
                self.stored.width(),
                self.n_pruned
            )));
        }
        match self.strategy {
            Strategy::RoundedAvg => {
                let k = self.base_shift();
                if self.constant < 0 || (self.constant as i32) >= (1 << k) {
                    return Err(Error::Decode(format!(
                        "rounded-avg constant {} outside [0, 2^{k})",
                        self.constant
                    )));
                }
            }
            Strategy::ZeroPoint => {
                let half = 1 << (CONST_BITS - 1);
                if (self.constant as i32) < -half || (self.constant as i32) >= half {
                    return Err(Error::Decode(format!(
                        "zero-point constant {} outside 6-bit range",
                        self.constant
                    )));
                }
            }
            Strategy::Uncompressed => {
                if self.n_pruned != 0 || self.num_redundant != 0 || self.constant != 0 {
                    return Err(Error::Decode(
                        "uncompressed group carries pruning metadata".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Result of pruning one group: the packed form, the values it will
/// reconstruct to, and their exact mean squared error against the input.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPruneResult {
    pub compressed: CompressedGroup,
    pub approx_values: Vec<i8>,
    pub mse: f64,
}

// ── Redundant planes ─────────────────────────────────────────────────────

/// Number of consecutive planes directly below the MSB plane that are
/// bit-identical to it, capped at the metadata limit of 3. Equivalently:
/// the whole group fits in (width - r)-bit two's complement.
pub fn count_redundant_columns(m: &BitMatrix) -> usize {
    let top = (m.width() - 1) as usize;
    let mut r = 0;
    while r < MAX_REDUNDANT as usize && r < top {
        if m.column(top - 1 - r) == m.column(top) {
            r += 1;
        } else {
            break;
        }
    }
    r
}

// ── Grid snapping (zero-point strategy) ──────────────────────────────────

/// Snaps a shifted value to the nearest multiple of 2^k, staying inside the
/// (8 - num_redundant)-bit signed range. Clearing the low bits (rounding
/// toward negative infinity) always fits; rounding up wins only when it is
/// strictly nearer and still representable, so an exact tie clears and a
/// would-be overflow at the top of the range falls back to clearing.
pub fn snap_to_grid(value: i32, k: u8, num_redundant: u8) -> i32 {
    debug_assert!(num_redundant <= MAX_REDUNDANT);
    if k == 0 {
        return value;
    }
    let step = 1i32 << k;
    let low = value >> k << k;
    let high = low + step;
    let hi_limit = (1i32 << (7 - num_redundant)) - step;
    if (high - value) < (value - low) && high <= hi_limit {
        high
    } else {
        low
    }
}

// ── Strategies ───────────────────────────────────────────────────────────

fn check_group_args(values: &[i8], n_target: u8) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Config("cannot prune an empty group".into()));
    }
    if n_target == 0 || n_target > 6 {
        return Err(Error::Config(format!("n_target {n_target} outside 1..=6 (metadata limits)")));
    }
    Ok(())
}

fn build_group(
    approx_bits: &[i8],
    n_pruned: u8,
    num_redundant: u8,
    constant: i8,
    strategy: Strategy,
) -> CompressedGroup {
    // Planes k ..= 7 - num_redundant of the (shifted) values survive.
    let k = (n_pruned - num_redundant) as usize;
    let full = to_bitplanes(approx_bits, WEIGHT_BITS).expect("int8 always fits 8 bits");
    let width = (WEIGHT_BITS - n_pruned) as usize;
    let columns = full.columns()[k..k + width].to_vec();
    let stored =
        BitMatrix::from_columns(columns, -(1i32 << (width - 1))).expect("width is at least 2");
    CompressedGroup { stored, num_redundant, constant, strategy, n_pruned }
}

/// Prunes `n_target` planes by removing redundant top planes and replacing
/// the remaining low planes with their rounded average. The constant
/// minimizes the squared error over all 2^k low-bit constants; the rounding
/// resolves an exact tie toward the larger constant.
pub fn compress_rounded_avg(values: &[i8], n_target: u8) -> Result<GroupPruneResult> {
    check_group_args(values, n_target)?;
    let m = to_bitplanes(values, WEIGHT_BITS)?;
    let r = (count_redundant_columns(&m) as u8).min(n_target);
    let k = n_target - r;

    let (constant, approx) = if k == 0 {
        (0i8, values.to_vec())
    } else {
        let mask = (1u32 << k) - 1;
        let sum: i64 = values.iter().map(|&v| (v as u8 as u32 & mask) as i64).sum();
        let len = values.len() as i64;
        // round(sum / len) with halves away from zero, in exact integers
        let c = ((2 * sum + len) / (2 * len)) as i32;
        let c = c.clamp(0, (1 << k) - 1);
        let approx =
            values.iter().map(|&v| (((v as u8 & !(mask as u8)) as i8) as i32 + c) as i8).collect();
        (c as i8, approx)
    };

    let mse = metrics::mse(values, &approx)?;
    Ok(GroupPruneResult {
        compressed: build_group(&approx, n_target, r, constant, Strategy::RoundedAvg),
        approx_values: approx,
        mse,
    })
}

/// Prunes `n_target` planes by searching a signed shift c: the group moves
/// by c, redundant top planes of the shifted group are removed, each shifted
/// value snaps onto the surviving 2^k grid, and the datapath later undoes
/// the shift. Scans c ascending over the 6-bit range and keeps the first
/// minimum-MSE candidate; shifts whose reconstruction would leave int8 are
/// skipped (c = 0 always qualifies, so the search cannot come up empty).
pub fn compress_zero_point(values: &[i8], n_target: u8) -> Result<GroupPruneResult> {
    compress_zero_point_with(values, n_target, CONST_BITS)
}

/// `compress_zero_point` with an explicit constant width; the metadata
/// field caps it at 6 bits.
pub fn compress_zero_point_with(
    values: &[i8],
    n_target: u8,
    const_bits: u8,
) -> Result<GroupPruneResult> {
    check_group_args(values, n_target)?;
    if const_bits == 0 || const_bits > CONST_BITS {
        return Err(Error::Config(format!(
            "const_bits {const_bits} outside 1..=6 (metadata field is 6 bits)"
        )));
    }

    // (sse, constant, redundant count, snapped values, approx values)
    type Candidate = (i64, i32, u8, Vec<i8>, Vec<i8>);
    let half = 1i32 << (const_bits - 1);
    let mut best: Option<Candidate> = None;

    'candidates: for c in -half..half {
        let shifted: Vec<i8> =
            values.iter().map(|&v| (v as i32 + c).clamp(-128, 127) as i8).collect();
        let m = to_bitplanes(&shifted, WEIGHT_BITS)?;
        let r = (count_redundant_columns(&m) as u8).min(n_target);
        let k = n_target - r;

        let mut snapped = Vec::with_capacity(values.len());
        let mut approx = Vec::with_capacity(values.len());
        let mut sse: i64 = 0;
        for (&v, &s) in values.iter().zip(&shifted) {
            let sn = snap_to_grid(s as i32, k, r);
            let ap = sn - c;
            if !(-128..=127).contains(&ap) {
                continue 'candidates;
            }
            snapped.push(sn as i8);
            approx.push(ap as i8);
            let d = ap as i64 - v as i64;
            sse += d * d;
        }

        if best.as_ref().is_none_or(|(b, ..)| sse < *b) {
            best = Some((sse, c, r, snapped, approx));
        }
    }

    let (sse, c, r, snapped, approx) = best.expect("c = 0 is always feasible");
    Ok(GroupPruneResult {
        compressed: build_group(&snapped, n_target, r, c as i8, Strategy::ZeroPoint),
        approx_values: approx,
        mse: sse as f64 / values.len() as f64,
    })
}

/// Reconstructs the values a compressed group stands for. Exact inverse of
/// the pruning output: `decompress(result.compressed) == result.approx_values`.
pub fn decompress(cg: &CompressedGroup) -> Result<Vec<i8>> {
    cg.validate()?;
    let k = cg.base_shift();
    let narrow = from_bitplanes(&cg.stored);
    let dir: i32 = match cg.strategy {
        Strategy::RoundedAvg => 1,
        Strategy::ZeroPoint => -1,
        Strategy::Uncompressed => 0,
    };
    narrow
        .into_iter()
        .map(|s| {
            let v = ((s as i32) << k) + dir * cg.constant as i32;
            if (-128..=127).contains(&v) {
                Ok(v as i8)
            } else {
                Err(Error::Decode(format!(
                    "reconstructed value {v} outside int8 (corrupt metadata)"
                )))
            }
        })
        .collect()
}

/// Uniform truncation baseline: clears the low `n` bit planes of every
/// value, the grid a pruning scheme without redundant planes or constants
/// would be stuck with. Used for quality comparisons.
pub fn truncate_low_bits(values: &[i8], n: u8) -> Vec<i8> {
    values.iter().map(|&v| (v as i32 >> n << n) as i8).collect()
}
