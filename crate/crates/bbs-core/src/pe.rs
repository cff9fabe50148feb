//! Functional model of the bit-serial processing element.
//!
//! One PE multiplies a group of weights against activations one bit plane
//! per cycle, most significant stored plane first. Within each 8-weight
//! sub-group the plane is at most half ones after optional inversion, so a
//! bank of four 5:1 muxes can route every effectual activation to an adder
//! in a single cycle: mux m reaches lanes m..=m+4, and a priority-encoder
//! chain assigns each remaining lowest one-bit to the first mux that can
//! reach it. An inverted plane contributes (sum of all activations) minus
//! the routed sum instead, which the shared adder tree makes free.
//!
//! Pruned planes never enter the loop. Redundant top planes are folded into
//! the stored MSB plane's weight; generated low planes are covered by the
//! metadata constant, applied once per group as constant * sum(activations),
//! added for the rounded-average strategy and subtracted for zero-point.

use crate::compress::{CompressedGroup, Strategy, WEIGHT_BITS};
use crate::error::{Error, Result};

/// Hardware shape of one PE. The scheduler structure (8-lane sub-groups,
/// four 5:1 muxes) is what guarantees `max_selected` covers the worst case:
/// a plane with more than 4 ones is inverted, so at most 4 survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeConfig {
    pub group_size: usize,
    pub subgroup_size: usize,
    pub max_selected: usize,
    pub precision: u8,
}

impl Default for PeConfig {
    fn default() -> Self {
        PeConfig { group_size: 16, subgroup_size: 8, max_selected: 4, precision: WEIGHT_BITS }
    }
}

/// Minimum cycles a PE spends on any group; below this the constant and
/// metadata path cannot keep up, so extra pruning stops buying time.
pub const MIN_GROUP_CYCLES: u32 = 2;

/// One sub-group plane as issued to the mux bank. `sel[m]` is only
/// meaningful where `val[m]` is set; selected indices are strictly
/// increasing and index m stays within the mux-m window [m, m+4].
/// `col_idx` is the plane significance, filled in by the plane sequencer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerOutput {
    pub sel: [u8; 4],
    pub val: [bool; 4],
    pub inverted: bool,
    pub col_idx: u8,
}

/// Routes one 8-bit plane through the priority-encoder chain. Inverts when
/// ones outnumber zeros (an exact 4-4 tie stays uninverted), then encoder m
/// picks the lowest unclaimed one-bit among lanes m..=m+4.
pub fn schedule_subgroup(column: u8) -> SchedulerOutput {
    let inverted = column.count_ones() > 4;
    let mut work = if inverted { !column } else { column };
    let mut sel = [0u8; 4];
    let mut val = [false; 4];
    for m in 0..4u8 {
        let window = (work >> m) & 0x1F;
        if window != 0 {
            let p = m + window.trailing_zeros() as u8;
            sel[m as usize] = p;
            val[m as usize] = true;
            work &= !(1 << p);
        }
    }
    debug_assert_eq!(work, 0, "chain must claim every effectual bit");
    SchedulerOutput { sel, val, inverted, col_idx: 0 }
}

/// Contribution of one sub-group plane: the sum of activations at one-bit
/// lanes, computed through the mux bank. `sum_a` must be the sum of all 8
/// activations (the shared adder tree provides it in hardware).
pub fn subgroup_dot(column: u8, acts: &[i8; 8], sum_a: i32) -> i32 {
    debug_assert_eq!(sum_a, acts.iter().map(|&a| a as i32).sum::<i32>());
    let s = schedule_subgroup(column);
    let mut routed = 0i32;
    for m in 0..4 {
        if s.val[m] {
            routed += acts[s.sel[m] as usize] as i32;
        }
    }
    if s.inverted {
        sum_a - routed
    } else {
        routed
    }
}

/// Full dot product of a compressed group against activations, exactly as
/// the PE computes it: stored planes high to low, each plane split into
/// 8-lane sub-groups (a short tail is padded with zero bits and zero
/// activations), the top plane accumulated negatively, then the metadata
/// constant applied against the activation sum. Matches
/// sum(decompress(cg)[i] * acts[i]) exactly.
pub fn pe_dot(cg: &CompressedGroup, acts: &[i8]) -> Result<i64> {
    cg.validate()?;
    let n = cg.group_size();
    if acts.len() != n {
        return Err(Error::Shape(format!("{} activations for a group of {n}", acts.len())));
    }

    let width = cg.stored.width() as usize;
    let k = cg.base_shift() as u32;
    let subgroups = n.div_ceil(8);

    let mut sums = vec![0i32; subgroups];
    let mut padded = vec![[0i8; 8]; subgroups];
    for (i, &a) in acts.iter().enumerate() {
        padded[i / 8][i % 8] = a;
        sums[i / 8] += a as i32;
    }

    let mut total: i64 = 0;
    for j in (0..width).rev() {
        let col_idx = k + j as u32;
        let plane = cg.stored.column(j);
        let mut plane_sum: i64 = 0;
        for s in 0..subgroups {
            plane_sum += subgroup_dot(plane.byte(s), &padded[s], sums[s]) as i64;
        }
        if j == width - 1 {
            total -= plane_sum << col_idx;
        } else {
            total += plane_sum << col_idx;
        }
    }

    let all_acts: i64 = sums.iter().map(|&s| s as i64).sum();
    match cg.strategy {
        Strategy::RoundedAvg => total += cg.constant as i64 * all_acts,
        Strategy::ZeroPoint => total -= cg.constant as i64 * all_acts,
        Strategy::Uncompressed => {}
    }
    Ok(total)
}

/// Cycles one PE spends on a group: one per stored plane, floored at the
/// 2-cycle minimum; an uncompressed group takes all 8.
pub fn pe_cycles(cg: &CompressedGroup) -> u32 {
    pe_cycles_for(cg.strategy, cg.n_pruned)
}

pub fn pe_cycles_for(strategy: Strategy, n_pruned: u8) -> u32 {
    match strategy {
        Strategy::Uncompressed => WEIGHT_BITS as u32,
        Strategy::RoundedAvg | Strategy::ZeroPoint => {
            (WEIGHT_BITS as u32 - n_pruned as u32).max(MIN_GROUP_CYCLES)
        }
    }
}
