//! Model-level pruning plans.
//!
//! Aggressive binary pruning hurts a small set of outlier channels far more
//! than the rest, so the planner ranks all output channels of the model by
//! their quantization scale (a proxy for how much numeric range the channel
//! carries) and exempts the top `beta` fraction from pruning: they stay at
//! full 8-bit precision. Because a PE array processes `c_h` weight channels
//! side by side in lock step, each layer's exempt count is rounded up to a
//! multiple of `c_h` by promoting its next-highest channels; that keeps
//! every hardware column tile uniform, so mixing precisions costs no
//! stalls. Exempt channels are moved to the front of the layout and an
//! index buffer remembers where results belong.

use crate::compress::{
    compress_rounded_avg, compress_zero_point, decompress, CompressedGroup, Strategy,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

// ── Workload description ─────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Gemm,
    Conv,
}

impl std::fmt::Display for LayerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LayerKind::Gemm => "gemm",
            LayerKind::Conv => "conv",
        })
    }
}

/// Layer shape. Convolutions are described by their im2col equivalent:
/// reduction length c_in * kh * kw and `out_pixels` output positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dims", rename_all = "snake_case")]
pub enum LayerDims {
    Gemm { m: usize, k: usize, n: usize },
    Conv { c_out: usize, c_in: usize, kh: usize, kw: usize, out_pixels: usize },
}

impl LayerDims {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerDims::Gemm { .. } => LayerKind::Gemm,
            LayerDims::Conv { .. } => LayerKind::Conv,
        }
    }

    /// Output channels: the dimension pruning decisions are made over.
    pub fn channels(&self) -> usize {
        match *self {
            LayerDims::Gemm { n, .. } => n,
            LayerDims::Conv { c_out, .. } => c_out,
        }
    }

    /// Reduction length: weights per output channel.
    pub fn reduction_len(&self) -> usize {
        match *self {
            LayerDims::Gemm { k, .. } => k,
            LayerDims::Conv { c_in, kh, kw, .. } => c_in * kh * kw,
        }
    }

    /// Output positions sharing the same weights (GEMM rows / conv pixels).
    pub fn output_positions(&self) -> usize {
        match *self {
            LayerDims::Gemm { m, .. } => m,
            LayerDims::Conv { out_pixels, .. } => out_pixels,
        }
    }
}

/// One quantized layer: channel-major int8 weights (`channels` rows of
/// `reduction_len` values) and optional per-channel scales.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub name: String,
    pub dims: LayerDims,
    /// weight[c * reduction_len + j] is weight j of output channel c.
    pub weight: Vec<i8>,
    /// One positive scale per channel, or empty to fall back to a
    /// statistics-based sensitivity proxy.
    pub scales: Vec<f32>,
}

impl QuantizedLayer {
    pub fn new(
        name: impl Into<String>,
        dims: LayerDims,
        weight: Vec<i8>,
        scales: Vec<f32>,
    ) -> Result<Self> {
        let name = name.into();
        let (channels, k) = (dims.channels(), dims.reduction_len());
        if channels == 0 || k == 0 || dims.output_positions() == 0 {
            return Err(Error::Config(format!("layer {name}: degenerate dims {dims:?}")));
        }
        if weight.len() != channels * k {
            return Err(Error::Shape(format!(
                "layer {name}: {} weights for {channels} channels x {k}",
                weight.len()
            )));
        }
        if !scales.is_empty() {
            if scales.len() != channels {
                return Err(Error::Shape(format!(
                    "layer {name}: {} scales for {channels} channels",
                    scales.len()
                )));
            }
            if scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
                return Err(Error::Config(format!("layer {name}: scales must be positive")));
            }
        }
        Ok(QuantizedLayer { name, dims, weight, scales })
    }

    pub fn kind(&self) -> LayerKind {
        self.dims.kind()
    }

    pub fn channels(&self) -> usize {
        self.dims.channels()
    }

    pub fn reduction_len(&self) -> usize {
        self.dims.reduction_len()
    }

    pub fn channel(&self, c: usize) -> &[i8] {
        let k = self.reduction_len();
        &self.weight[c * k..(c + 1) * k]
    }

    /// Ranking signal per channel: the declared scale, or the channel's
    /// weight standard deviation when no scales were provided.
    pub fn sensitivity(&self) -> Vec<f64> {
        if !self.scales.is_empty() {
            return self.scales.iter().map(|&s| s as f64).collect();
        }
        let k = self.reduction_len() as f64;
        (0..self.channels())
            .map(|c| {
                let row = self.channel(c);
                let mean = row.iter().map(|&v| v as f64).sum::<f64>() / k;
                let var = row.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / k;
                var.sqrt()
            })
            .collect()
    }
}

// ── Plan configuration ───────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneLevel {
    /// RoundedAvg with 2 planes pruned; default beta 0.10.
    Conservative,
    /// ZeroPoint with 4 planes pruned; default beta 0.20.
    Moderate,
    Custom {
        strategy: Strategy,
        n_target: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub level: PruneLevel,
    /// Fraction of all channels (model-wide) exempted from pruning.
    pub beta: f64,
    /// Hardware column-tile width the per-layer exempt count aligns to.
    pub c_h: usize,
    /// Weights per compression group along the reduction dimension.
    pub group_size: usize,
}

impl PlanConfig {
    pub fn conservative(c_h: usize, group_size: usize) -> Self {
        PlanConfig { level: PruneLevel::Conservative, beta: 0.10, c_h, group_size }
    }

    pub fn moderate(c_h: usize, group_size: usize) -> Self {
        PlanConfig { level: PruneLevel::Moderate, beta: 0.20, c_h, group_size }
    }

    pub fn custom(
        strategy: Strategy,
        n_target: u8,
        beta: f64,
        c_h: usize,
        group_size: usize,
    ) -> Self {
        PlanConfig { level: PruneLevel::Custom { strategy, n_target }, beta, c_h, group_size }
    }

    pub fn strategy(&self) -> Strategy {
        match self.level {
            PruneLevel::Conservative => Strategy::RoundedAvg,
            PruneLevel::Moderate => Strategy::ZeroPoint,
            PruneLevel::Custom { strategy, .. } => strategy,
        }
    }

    pub fn n_target(&self) -> u8 {
        match self.level {
            PruneLevel::Conservative => 2,
            PruneLevel::Moderate => 4,
            PruneLevel::Custom { n_target, .. } => n_target,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if self.c_h == 0 {
            return Err(Error::Config("c_h must be at least 1".into()));
        }
        if self.group_size == 0 {
            return Err(Error::Config("group size must be at least 1".into()));
        }
        if let PruneLevel::Custom { strategy, n_target } = self.level {
            if n_target == 0 || n_target > 6 {
                return Err(Error::Config(format!("n_target {n_target} outside 1..=6")));
            }
            if strategy == Strategy::Uncompressed {
                return Err(Error::Config(
                    "custom level needs a pruning strategy; use PrunePlan::uncompressed for none"
                        .into(),
                ));
            }
        }
        Ok(())
    }
}

// ── Plans ────────────────────────────────────────────────────────────────

/// Per-layer pruning decision. `permutation[pos]` is the original channel
/// stored at layout position `pos`: the exempt block first (ascending ids),
/// then the pruned channels (ascending ids). The same vector doubles as the
/// index buffer that routes outputs back to their original positions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub name: String,
    pub strategy: Strategy,
    pub n_pruned: u8,
    /// Channels kept at full precision, ascending.
    pub sensitive: Vec<u32>,
    pub permutation: Vec<u32>,
}

impl LayerPlan {
    pub fn sensitive_count(&self) -> usize {
        self.sensitive.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunePlan {
    pub beta: f64,
    pub c_h: usize,
    pub group_size: usize,
    pub layers: Vec<LayerPlan>,
}

impl PrunePlan {
    /// Plan that prunes nothing: every channel exempt, identity layout.
    pub fn uncompressed(model: &[QuantizedLayer], group_size: usize) -> Self {
        let layers = model
            .iter()
            .map(|l| {
                let ids: Vec<u32> = (0..l.channels() as u32).collect();
                LayerPlan {
                    name: l.name.clone(),
                    strategy: Strategy::Uncompressed,
                    n_pruned: 0,
                    sensitive: ids.clone(),
                    permutation: ids,
                }
            })
            .collect();
        PrunePlan { beta: 1.0, c_h: 1, group_size, layers }
    }
}

/// Ranks every output channel of the model by sensitivity and returns, per
/// layer, the ids inside the global top `beta` fraction. Ties are broken by
/// (layer index, channel index) ascending so results are reproducible.
pub fn rank_channels_global(model: &[QuantizedLayer], beta: f64) -> Result<Vec<Vec<u32>>> {
    if model.is_empty() {
        return Err(Error::Config("cannot rank an empty model".into()));
    }
    if !(0.0..=1.0).contains(&beta) || !beta.is_finite() {
        return Err(Error::Config(format!("beta {beta} outside [0, 1]")));
    }

    let mut entries: Vec<(f64, usize, u32)> = Vec::new();
    for (li, layer) in model.iter().enumerate() {
        for (ci, s) in layer.sensitivity().into_iter().enumerate() {
            entries.push((s, li, ci as u32));
        }
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let total = entries.len();
    // ceil with a tiny slack so beta * total that is mathematically integral
    // never rounds up by a float hair
    let count = ((beta * total as f64 - 1e-9).ceil().max(0.0) as usize).min(total);

    let mut per_layer = vec![Vec::new(); model.len()];
    for &(_, li, ci) in &entries[..count] {
        per_layer[li].push(ci);
    }
    for ids in &mut per_layer {
        ids.sort_unstable();
    }
    Ok(per_layer)
}

/// Turns a raw sensitive set into a hardware-aligned plan: each layer's
/// exempt count is rounded up to a multiple of `c_h` by promoting the
/// layer's next-highest-sensitivity channels (a layer with none stays at
/// none; a count that cannot be reached within the layer exempts the whole
/// layer), then the layout permutation is fixed.
pub fn align_plan(
    model: &[QuantizedLayer],
    sensitive: &[Vec<u32>],
    cfg: &PlanConfig,
) -> Result<PrunePlan> {
    cfg.validate()?;
    if model.len() != sensitive.len() {
        return Err(Error::Shape(format!(
            "{} layers but {} sensitive sets",
            model.len(),
            sensitive.len()
        )));
    }

    let mut layers = Vec::with_capacity(model.len());
    for (layer, raw) in model.iter().zip(sensitive) {
        let channels = layer.channels();
        if raw.iter().any(|&c| c as usize >= channels) {
            return Err(Error::Config(format!("layer {}: sensitive id out of range", layer.name)));
        }

        let aligned =
            if raw.is_empty() { 0 } else { raw.len().div_ceil(cfg.c_h) * cfg.c_h }.min(channels);

        // Layer-local ranking agrees with the global one on this layer, so
        // the globally chosen ids are exactly a prefix of it; promotion just
        // extends the prefix.
        let sens = layer.sensitivity();
        let mut order: Vec<u32> = (0..channels as u32).collect();
        order.sort_by(|&a, &b| sens[b as usize].total_cmp(&sens[a as usize]).then(a.cmp(&b)));
        let mut chosen: Vec<u32> = order[..aligned].to_vec();
        chosen.sort_unstable();
        debug_assert!(raw.iter().all(|id| chosen.binary_search(id).is_ok()));

        let normal: Vec<u32> =
            (0..channels as u32).filter(|c| chosen.binary_search(c).is_err()).collect();
        let mut permutation = chosen.clone();
        permutation.extend(&normal);

        layers.push(LayerPlan {
            name: layer.name.clone(),
            strategy: cfg.strategy(),
            n_pruned: cfg.n_target(),
            sensitive: chosen,
            permutation,
        });
    }

    Ok(PrunePlan { beta: cfg.beta, c_h: cfg.c_h, group_size: cfg.group_size, layers })
}

/// `rank_channels_global` and `align_plan` in one step.
pub fn build_plan(model: &[QuantizedLayer], cfg: &PlanConfig) -> Result<PrunePlan> {
    cfg.validate()?;
    let sensitive = rank_channels_global(model, cfg.beta)?;
    align_plan(model, &sensitive, cfg)
}

// ── Applying a plan ──────────────────────────────────────────────────────

/// One layer in compressed form, stored in layout order: the exempt rows
/// first (raw int8), then each pruned channel as a run of compressed groups
/// along the reduction dimension (the last group zero-padded to full size).
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    pub name: String,
    pub strategy: Strategy,
    pub n_pruned: u8,
    pub group_size: usize,
    pub channels: usize,
    pub logical_k: usize,
    /// Layout position -> original channel id (exempt block first).
    pub permutation: Vec<u32>,
    /// Raw rows of the exempt channels, in layout order.
    pub sensitive_rows: Vec<Vec<i8>>,
    /// Compressed groups of the pruned channels, in layout order.
    pub normal_groups: Vec<Vec<CompressedGroup>>,
}

impl CompressedLayer {
    pub fn sensitive_count(&self) -> usize {
        self.sensitive_rows.len()
    }

    pub fn groups_per_channel(&self) -> usize {
        self.logical_k.div_ceil(self.group_size)
    }

    /// Weight payload an accelerator fetches for this layer: index map,
    /// raw exempt rows, and per-group metadata byte plus packed planes.
    pub fn payload_bytes(&self) -> u64 {
        let map = 4 * self.permutation.len() as u64;
        let raw: u64 = self.sensitive_rows.iter().map(|r| r.len() as u64).sum();
        let col_bytes = self.group_size.div_ceil(8) as u64;
        let groups: u64 = self
            .normal_groups
            .iter()
            .flatten()
            .map(|g| 1 + (8 - g.n_pruned) as u64 * col_bytes)
            .sum();
        map + raw + groups
    }

    /// Reconstructs the layer's weights in original channel order, padding
    /// stripped. Row `permutation[pos]` of the result comes from layout
    /// position `pos`.
    pub fn decompress_layer(&self) -> Result<Vec<i8>> {
        let k = self.logical_k;
        let mut out = vec![0i8; self.channels * k];
        let mut seen = vec![false; self.channels];
        for (pos, &orig) in self.permutation.iter().enumerate() {
            let orig = orig as usize;
            if orig >= self.channels || seen[orig] {
                return Err(Error::Decode(format!(
                    "layer {}: index map is not a permutation",
                    self.name
                )));
            }
            seen[orig] = true;
            let row = &mut out[orig * k..(orig + 1) * k];
            if pos < self.sensitive_rows.len() {
                row.copy_from_slice(&self.sensitive_rows[pos]);
            } else {
                let groups = &self.normal_groups[pos - self.sensitive_rows.len()];
                let mut cursor = 0;
                for g in groups {
                    let vals = decompress(g)?;
                    let take = (k - cursor).min(vals.len());
                    row[cursor..cursor + take].copy_from_slice(&vals[..take]);
                    cursor += take;
                }
                if cursor < k {
                    return Err(Error::Decode(format!(
                        "layer {}: groups cover {cursor} of {k} weights",
                        self.name
                    )));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub group_size: usize,
    pub layers: Vec<CompressedLayer>,
}

impl CompressedModel {
    pub fn payload_bytes(&self) -> u64 {
        self.layers.iter().map(|l| l.payload_bytes()).sum()
    }
}

fn compress_channel(
    row: &[i8],
    strategy: Strategy,
    n: u8,
    group_size: usize,
) -> Result<Vec<CompressedGroup>> {
    let mut groups = Vec::with_capacity(row.len().div_ceil(group_size));
    for chunk in row.chunks(group_size) {
        let mut g = chunk.to_vec();
        g.resize(group_size, 0); // zero-pad the tail group
        let cg = match strategy {
            Strategy::RoundedAvg => compress_rounded_avg(&g, n)?.compressed,
            Strategy::ZeroPoint => compress_zero_point(&g, n)?.compressed,
            Strategy::Uncompressed => CompressedGroup::uncompressed(&g)?,
        };
        groups.push(cg);
    }
    Ok(groups)
}

/// Compresses a model per its plan. Exempt channels are copied raw; the
/// rest are pruned group by group. Every group is pure, so callers may
/// parallelize across layers if they wish; this implementation stays
/// sequential and deterministic.
pub fn apply_plan(model: &[QuantizedLayer], plan: &PrunePlan) -> Result<CompressedModel> {
    if model.len() != plan.layers.len() {
        return Err(Error::Shape(format!(
            "{} layers but plan covers {}",
            model.len(),
            plan.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(model.len());
    for (layer, lp) in model.iter().zip(&plan.layers) {
        if layer.name != lp.name {
            return Err(Error::Shape(format!(
                "plan layer {} does not match model layer {}",
                lp.name, layer.name
            )));
        }
        if lp.permutation.len() != layer.channels() {
            return Err(Error::Shape(format!(
                "layer {}: permutation covers {} of {} channels",
                layer.name,
                lp.permutation.len(),
                layer.channels()
            )));
        }

        let sensitive_rows: Vec<Vec<i8>> =
            lp.sensitive.iter().map(|&c| layer.channel(c as usize).to_vec()).collect();
        let normal_groups: Vec<Vec<CompressedGroup>> = lp.permutation[lp.sensitive.len()..]
            .iter()
            .map(|&c| {
                compress_channel(
                    layer.channel(c as usize),
                    lp.strategy,
                    lp.n_pruned,
                    plan.group_size,
                )
            })
            .collect::<Result<_>>()?;

        layers.push(CompressedLayer {
            name: layer.name.clone(),
            strategy: lp.strategy,
            n_pruned: lp.n_pruned,
            group_size: plan.group_size,
            channels: layer.channels(),
            logical_k: layer.reduction_len(),
            permutation: lp.permutation.clone(),
            sensitive_rows,
            normal_groups,
        });
    }
    Ok(CompressedModel { group_size: plan.group_size, layers })
}

// ── Layout helpers ───────────────────────────────────────────────────────

/// Returns the layer's weights with rows in layout order plus the index
/// buffer mapping layout position back to the original channel id.
pub fn reorder_channels(layer: &QuantizedLayer, lp: &LayerPlan) -> Result<(Vec<i8>, Vec<u32>)> {
    if lp.permutation.len() != layer.channels() {
        return Err(Error::Shape(format!(
            "layer {}: permutation covers {} of {} channels",
            layer.name,
            lp.permutation.len(),
            layer.channels()
        )));
    }
    let k = layer.reduction_len();
    let mut out = Vec::with_capacity(layer.weight.len());
    for &c in &lp.permutation {
        if c as usize >= layer.channels() {
            return Err(Error::Config(format!("layer {}: channel {c} out of range", layer.name)));
        }
        out.extend_from_slice(layer.channel(c as usize));
    }
    debug_assert_eq!(out.len(), layer.channels() * k);
    Ok((out, lp.permutation.clone()))
}

/// Routes rows computed in layout order back to original channel order:
/// row `pos` of `outputs` lands at row `index[pos]`. Needed wherever a
/// consumer sees the raw channel order, e.g. before a residual add.
pub fn unshuffle_outputs<T: Copy>(outputs: &[T], index: &[u32]) -> Result<Vec<T>> {
    if index.is_empty() || !outputs.len().is_multiple_of(index.len()) {
        return Err(Error::Shape(format!(
            "{} outputs do not split over {} channels",
            outputs.len(),
            index.len()
        )));
    }
    let rows = index.len();
    let width = outputs.len() / rows;
    let mut out = vec![outputs[0]; outputs.len()];
    let mut seen = vec![false; rows];
    for (pos, &orig) in index.iter().enumerate() {
        let orig = orig as usize;
        if orig >= rows || seen[orig] {
            return Err(Error::Config("index buffer is not a permutation".into()));
        }
        seen[orig] = true;
        out[orig * width..(orig + 1) * width]
            .copy_from_slice(&outputs[pos * width..(pos + 1) * width]);
    }
    Ok(out)
}

/// Average stored bits per weight under a plan: per pruned group one
/// metadata byte plus (8 - n) planes of `group_size` bits each, plus 8 bits
/// per exempt weight, divided by the logical weight count.
pub fn effective_bits(model: &[QuantizedLayer], plan: &PrunePlan) -> Result<f64> {
    if model.len() != plan.layers.len() {
        return Err(Error::Shape(format!(
            "{} layers but plan covers {}",
            model.len(),
            plan.layers.len()
        )));
    }
    let mut bits: u64 = 0;
    let mut weights: u64 = 0;
    for (layer, lp) in model.iter().zip(&plan.layers) {
        let k = layer.reduction_len() as u64;
        let channels = layer.channels() as u64;
        let sens = lp.sensitive.len() as u64;
        let groups_per = (layer.reduction_len().div_ceil(plan.group_size)) as u64;
        let group_bits = 8 + (8 - lp.n_pruned as u64) * plan.group_size as u64;
        bits += sens * k * 8;
        bits += (channels - sens) * groups_per * group_bits;
        weights += channels * k;
    }
    Ok(bits as f64 / weights as f64)
}
