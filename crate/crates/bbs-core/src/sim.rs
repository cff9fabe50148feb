//! Lock-step cycle models for bit-serial weight-processing accelerators.
//!
//! The array is `rows x cols` PEs: the 32 columns each hold a different
//! output channel's weight group, the 16 rows share those weights across
//! input windows, and every PE spans 16 weight lanes along the reduction
//! dimension. Layers lower to GEMM (convolutions via their im2col shape)
//! and execute as ceil(M/rows) * ceil(K/lanes) * ceil(N/cols) tile steps.
//! Within one step all active columns advance in lock step, so the step
//! costs the maximum of the per-column group cycles; what differs between
//! machines is only that per-group number:
//!
//! * `Stripes`: plain bit-serial, every group costs the full 8 planes.
//! * `Pragmatic`: each lane serially feeds the one-bits of its own weight;
//!   the group waits for the densest weight, max over popcounts.
//! * `Bitlet`: planes are processed independently with 2 lanes per
//!   significance; the group waits for the densest plane, max over
//!   ceil(ones / 2).
//! * `BitWave`: sign-magnitude planes are skipped only when entirely zero;
//!   the group costs the number of non-zero planes.
//! * `BitVert`: binary pruning fixes the plane count at compression time,
//!   so a group costs max(2, 8 - n_pruned) regardless of bit patterns, and
//!   full-precision (exempt) channels cost 8.
//!
//! Dynamic schemes pay two stall taxes that the reports break out:
//! `intra_pe_stall` is lane idle time inside a PE while its slowest
//! lane/plane finishes (normalized by lane count, so the unit is
//! PE-cycles), and `inter_pe_stall` is whole-PE idle time while the
//! slowest column of the step finishes. Per layer,
//! effectual + intra + inter = total_cycles * active columns. Cycle counts
//! never depend on activation values, so the simulator reads weights only.

use crate::compress::{CompressedGroup, Strategy};
use crate::error::{Error, Result};
use crate::pe::{pe_cycles, pe_cycles_for};
use crate::planner::{CompressedModel, QuantizedLayer};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceleratorKind {
    Stripes,
    Pragmatic,
    Bitlet,
    BitWave,
    BitVert,
}

pub const ALL_KINDS: [AcceleratorKind; 5] = [
    AcceleratorKind::Stripes,
    AcceleratorKind::Pragmatic,
    AcceleratorKind::Bitlet,
    AcceleratorKind::BitWave,
    AcceleratorKind::BitVert,
];

impl std::fmt::Display for AcceleratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AcceleratorKind::Stripes => "stripes",
            AcceleratorKind::Pragmatic => "pragmatic",
            AcceleratorKind::Bitlet => "bitlet",
            AcceleratorKind::BitWave => "bitwave",
            AcceleratorKind::BitVert => "bitvert",
        })
    }
}

impl std::str::FromStr for AcceleratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stripes" => Ok(AcceleratorKind::Stripes),
            "pragmatic" => Ok(AcceleratorKind::Pragmatic),
            "bitlet" => Ok(AcceleratorKind::Bitlet),
            "bitwave" => Ok(AcceleratorKind::BitWave),
            "bitvert" => Ok(AcceleratorKind::BitVert),
            other => Err(Error::Config(format!("unknown accelerator model {other}"))),
        }
    }
}

/// PE array shape. All models run the same array so multiplier counts
/// match and cycle ratios are load-balance effects, not resource effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// Input windows processed in parallel (output-stationary rows).
    pub rows: usize,
    /// Weight channels processed in parallel.
    pub cols: usize,
    /// Weight lanes per PE along the reduction dimension.
    pub lanes: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig { rows: 16, cols: 32, lanes: 16 }
    }
}

impl ArrayConfig {
    pub fn with_cols(cols: usize) -> Self {
        ArrayConfig { cols, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("array needs at least one row and column".into()));
        }
        if self.lanes == 0 || !self.lanes.is_multiple_of(8) {
            return Err(Error::Config(format!(
                "lanes {} must be a positive multiple of the 8-lane sub-group",
                self.lanes
            )));
        }
        Ok(())
    }
}

/// A layer lowered onto the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TileSchedule {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub m_tiles: usize,
    pub k_tiles: usize,
    pub n_tiles: usize,
}

impl TileSchedule {
    pub fn steps(&self) -> u64 {
        (self.m_tiles * self.k_tiles * self.n_tiles) as u64
    }
}

/// Maps a layer onto the array: GEMM directly, convolution through its
/// im2col equivalent (K = c_in * kh * kw, M = output pixels, N = c_out).
pub fn lower_layer(layer: &QuantizedLayer, cfg: &ArrayConfig) -> Result<TileSchedule> {
    cfg.validate()?;
    let m = layer.dims.output_positions();
    let k = layer.reduction_len();
    let n = layer.channels();
    Ok(TileSchedule {
        m,
        k,
        n,
        m_tiles: m.div_ceil(cfg.rows),
        k_tiles: k.div_ceil(cfg.lanes),
        n_tiles: n.div_ceil(cfg.cols),
    })
}

// ── Per-group cycle models ───────────────────────────────────────────────

struct GroupStats {
    cycles: u32,
    /// Lane work normalized by lane count; equals `cycles` for models
    /// without intra-PE imbalance.
    effectual: f64,
}

fn stats_stripes() -> GroupStats {
    GroupStats { cycles: 8, effectual: 8.0 }
}

fn stats_pragmatic(tile: &[i8], lanes: usize) -> GroupStats {
    let pops: Vec<u32> = tile.iter().map(|&w| (w as u8).count_ones()).collect();
    let cycles = pops.iter().copied().max().unwrap_or(0).max(1);
    let work: u32 = pops.iter().sum();
    GroupStats { cycles, effectual: work as f64 / lanes as f64 }
}

fn stats_bitlet(tile: &[i8], lanes: usize) -> GroupStats {
    let per_sig = lanes / 8;
    let mut cycles = 1u32;
    let mut work = 0u32;
    for b in 0..8 {
        let ones = tile.iter().filter(|&&w| (w as u8) >> b & 1 == 1).count() as u32;
        work += ones;
        cycles = cycles.max(ones.div_ceil(per_sig as u32));
    }
    GroupStats { cycles, effectual: work as f64 / lanes as f64 }
}

fn nonzero_sign_magnitude_planes(tile: &[i8]) -> u32 {
    let mut mask = 0u8; // bits 0..6 magnitude planes, bit 7 sign plane
    for &w in tile {
        let m = (w.max(-127) as i16).unsigned_abs() as u8;
        mask |= m & 0x7F;
        if w < 0 {
            mask |= 0x80;
        }
    }
    mask.count_ones()
}

fn stats_bitwave(tile: &[i8]) -> GroupStats {
    let cycles = nonzero_sign_magnitude_planes(tile).max(1);
    GroupStats { cycles, effectual: cycles as f64 }
}

fn stats_bitvert(strategy: Strategy, n_pruned: u8) -> GroupStats {
    let cycles = pe_cycles_for(strategy, n_pruned);
    GroupStats { cycles, effectual: cycles as f64 }
}

/// Cycles one PE spends on one weight group under the given model.
/// `compressed` carries the pruning metadata and is required for `BitVert`;
/// the other models read the raw bit patterns.
pub fn group_cycles(
    kind: AcceleratorKind,
    weights: &[i8],
    compressed: Option<&CompressedGroup>,
) -> Result<u32> {
    let lanes = weights.len().max(1);
    Ok(match kind {
        AcceleratorKind::Stripes => stats_stripes().cycles,
        AcceleratorKind::Pragmatic => stats_pragmatic(weights, lanes).cycles,
        AcceleratorKind::Bitlet => stats_bitlet(weights, lanes.next_multiple_of(8)).cycles,
        AcceleratorKind::BitWave => stats_bitwave(weights).cycles,
        AcceleratorKind::BitVert => pe_cycles(compressed.ok_or_else(|| {
            Error::Config("BitVert cycles need the group's compression metadata".into())
        })?),
    })
}

// ── Whole-workload simulation ────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub layer: String,
    pub total_cycles: u64,
    pub effectual_cycles: f64,
    pub intra_pe_stall: f64,
    pub inter_pe_stall: f64,
    pub weight_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleReport {
    pub kind: AcceleratorKind,
    pub pe_rows: usize,
    pub pe_columns: usize,
    pub layers: Vec<LayerReport>,
    pub total_cycles: u64,
    pub effectual_cycles: f64,
    pub intra_pe_stall: f64,
    pub inter_pe_stall: f64,
    pub weight_bytes: u64,
}

fn tile16(layer: &QuantizedLayer, channel: usize, k_tile: usize, lanes: usize) -> Vec<i8> {
    let row = layer.channel(channel);
    let start = k_tile * lanes;
    let end = ((k_tile + 1) * lanes).min(row.len());
    let mut t = row[start..end].to_vec();
    t.resize(lanes, 0);
    t
}

fn bitwave_layer_bytes(layer: &QuantizedLayer, lanes: usize) -> u64 {
    // Per 16-weight group: a plane-presence byte plus 2 bytes per stored
    // non-zero sign-magnitude plane.
    let k_tiles = layer.reduction_len().div_ceil(lanes);
    let mut bytes = 0u64;
    for c in 0..layer.channels() {
        for kt in 0..k_tiles {
            let tile = tile16(layer, c, kt, lanes);
            bytes += 1 + 2 * nonzero_sign_magnitude_planes(&tile) as u64;
        }
    }
    bytes
}

/// Simulates a workload under one model. `compressed` must be the
/// container contents for `BitVert` (which also adopts its channel layout,
/// exempt block first); baseline models walk the raw channel order and
/// fetch dense weights.
pub fn run(
    kind: AcceleratorKind,
    layers: &[QuantizedLayer],
    compressed: Option<&CompressedModel>,
    cfg: &ArrayConfig,
) -> Result<CycleReport> {
    cfg.validate()?;
    let compressed = match kind {
        AcceleratorKind::BitVert => Some(compressed.ok_or_else(|| {
            Error::Config("BitVert simulation needs the compressed model".into())
        })?),
        _ => None,
    };
    if let Some(cm) = compressed {
        if cm.layers.len() != layers.len()
            || cm.layers.iter().zip(layers).any(|(c, l)| c.name != l.name)
        {
            return Err(Error::Shape(
                "compressed model does not match the workload's layers".into(),
            ));
        }
    }

    let mut reports = Vec::with_capacity(layers.len());
    for (li, layer) in layers.iter().enumerate() {
        let sched = lower_layer(layer, cfg)?;
        let channels = layer.channels();

        // Per-column cycles for one K tile of one channel (in layout order
        // for BitVert, raw order otherwise).
        let col_stats = |pos: usize, k_tile: usize| -> GroupStats {
            match kind {
                AcceleratorKind::Stripes => stats_stripes(),
                AcceleratorKind::Pragmatic => {
                    stats_pragmatic(&tile16(layer, pos, k_tile, cfg.lanes), cfg.lanes)
                }
                AcceleratorKind::Bitlet => {
                    stats_bitlet(&tile16(layer, pos, k_tile, cfg.lanes), cfg.lanes)
                }
                AcceleratorKind::BitWave => stats_bitwave(&tile16(layer, pos, k_tile, cfg.lanes)),
                AcceleratorKind::BitVert => {
                    let cl = &compressed.unwrap().layers[li];
                    if pos < cl.sensitive_count() {
                        stats_bitvert(Strategy::Uncompressed, 0)
                    } else {
                        stats_bitvert(cl.strategy, cl.n_pruned)
                    }
                }
            }
        };

        let mut grid_cycles: u64 = 0;
        let mut effectual = 0.0f64;
        let mut intra = 0.0f64;
        let mut inter = 0.0f64;
        let mut step = Vec::with_capacity(cfg.cols);
        for n_tile in 0..sched.n_tiles {
            let active = (channels - n_tile * cfg.cols).min(cfg.cols);
            for k_tile in 0..sched.k_tiles {
                step.clear();
                for c in 0..active {
                    step.push(col_stats(n_tile * cfg.cols + c, k_tile));
                }
                let max = step.iter().map(|s| s.cycles).max().unwrap_or(1) as u64;
                grid_cycles += max;
                for s in &step {
                    effectual += s.effectual;
                    intra += s.cycles as f64 - s.effectual;
                    inter += (max - s.cycles as u64) as f64;
                }
            }
        }

        let m = sched.m_tiles as u64;
        let weight_bytes = match kind {
            AcceleratorKind::Stripes | AcceleratorKind::Pragmatic | AcceleratorKind::Bitlet => {
                (channels * layer.reduction_len()) as u64
            }
            AcceleratorKind::BitWave => bitwave_layer_bytes(layer, cfg.lanes),
            AcceleratorKind::BitVert => compressed.unwrap().layers[li].payload_bytes(),
        };
        reports.push(LayerReport {
            layer: layer.name.clone(),
            total_cycles: grid_cycles * m,
            effectual_cycles: effectual * m as f64,
            intra_pe_stall: intra * m as f64,
            inter_pe_stall: inter * m as f64,
            weight_bytes,
        });
    }

    Ok(CycleReport {
        kind,
        pe_rows: cfg.rows,
        pe_columns: cfg.cols,
        total_cycles: reports.iter().map(|r| r.total_cycles).sum(),
        effectual_cycles: reports.iter().map(|r| r.effectual_cycles).sum(),
        intra_pe_stall: reports.iter().map(|r| r.intra_pe_stall).sum(),
        inter_pe_stall: reports.iter().map(|r| r.inter_pe_stall).sum(),
        weight_bytes: reports.iter().map(|r| r.weight_bytes).sum(),
        layers: reports,
    })
}

// ── Column-scaling study ─────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub kind: AcceleratorKind,
    pub pe_columns: usize,
    pub total_cycles: u64,
    pub speedup_vs_stripes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSummary {
    pub kind: AcceleratorKind,
    /// Speedup never rises as columns are added (wider lock step can only
    /// hurt a data-dependent model).
    pub monotone_non_increasing: bool,
    /// max speedup - min speedup across the studied column counts.
    pub speedup_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingStudy {
    pub rows: Vec<ScalingRow>,
    pub summaries: Vec<ScalingSummary>,
}

/// Sweeps PE column counts and reports each model's speedup over Stripes
/// at the same width. Stripes work per step is constant, so this isolates
/// how well a model's skipped cycles survive wider lock-step groups.
pub fn scaling_study(
    kinds: &[AcceleratorKind],
    layers: &[QuantizedLayer],
    compressed: Option<&CompressedModel>,
    col_counts: &[usize],
) -> Result<ScalingStudy> {
    if col_counts.is_empty() {
        return Err(Error::Config("scaling study needs at least one column count".into()));
    }
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for &kind in kinds {
        let mut speedups = Vec::with_capacity(col_counts.len());
        for &cols in col_counts {
            let cfg = ArrayConfig::with_cols(cols);
            let base = run(AcceleratorKind::Stripes, layers, None, &cfg)?;
            let rep = run(kind, layers, compressed, &cfg)?;
            let speedup = base.total_cycles as f64 / rep.total_cycles as f64;
            speedups.push(speedup);
            rows.push(ScalingRow {
                kind,
                pe_columns: cols,
                total_cycles: rep.total_cycles,
                speedup_vs_stripes: speedup,
            });
        }
        let monotone = speedups.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        let spread = speedups.iter().copied().fold(f64::MIN, f64::max)
            - speedups.iter().copied().fold(f64::MAX, f64::min);
        summaries.push(ScalingSummary {
            kind,
            monotone_non_increasing: monotone,
            speedup_spread: spread,
        });
    }
    Ok(ScalingStudy { rows, summaries })
}
