//! The four subcommands. Each one loads inputs, drives the core library,
//! and emits CSV plus a mirroring JSON summary; all file output goes
//! through the atomic writer.

use crate::manifest::{write_atomic, LoadedManifest};
use crate::AppError;
use bbs_core::bitplane::sparsity_stats;
use bbs_core::compress::Strategy;
use bbs_core::container::{decode_container, encode_container};
use bbs_core::metrics::{kl_divergence, mse, Histogram256};
use bbs_core::planner::{apply_plan, build_plan, effective_bits, LayerDims, PlanConfig, PrunePlan};
use bbs_core::sim::{run, scaling_study, AcceleratorKind, ArrayConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

// ── analyze ──────────────────────────────────────────────────────────────

pub fn cmd_analyze(
    manifest_path: &Path,
    group_size: usize,
    out: Option<&Path>,
) -> Result<(), AppError> {
    let lm = LoadedManifest::open(manifest_path)?;
    let layers = lm.load_layers(true)?;

    let mut csv = String::from(
        "layer,kind,channels,weights,value_sparsity,bit_sparsity_2c,bit_sparsity_sm,bbs_sparsity\n",
    );
    // All four metrics are per-bit (or per-value) fractions, so the model
    // aggregate is the weight-count-weighted mean of the layer rows.
    let (mut agg, mut total) = ([0.0f64; 4], 0usize);
    for layer in &layers {
        let rep = sparsity_stats(&layer.weight, group_size)?;
        let w = layer.weight.len();
        writeln!(
            csv,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            csv_field(&layer.name),
            layer.kind(),
            layer.channels(),
            w,
            rep.value_sparsity,
            rep.bit_sparsity_2c,
            rep.bit_sparsity_sm,
            rep.bbs_sparsity
        )
        .unwrap();
        for (a, v) in agg.iter_mut().zip([
            rep.value_sparsity,
            rep.bit_sparsity_2c,
            rep.bit_sparsity_sm,
            rep.bbs_sparsity,
        ]) {
            *a += v * w as f64;
        }
        total += w;
    }
    writeln!(
        csv,
        "{},model,,{},{:.6},{:.6},{:.6},{:.6}",
        csv_field(&lm.manifest.model),
        total,
        agg[0] / total as f64,
        agg[1] / total as f64,
        agg[2] / total as f64,
        agg[3] / total as f64
    )
    .unwrap();

    match out {
        Some(path) => {
            write_atomic(path, csv.as_bytes())?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

// ── compress ─────────────────────────────────────────────────────────────

pub struct CompressArgs {
    pub plan: PlanChoice,
    pub beta: Option<f64>,
    pub c_h: usize,
    pub group_size: usize,
    pub verify: bool,
}

pub enum PlanChoice {
    None,
    Preset(PresetLevel),
    Custom { strategy: Strategy, n_pruned: u8 },
}

#[derive(Clone, Copy)]
pub enum PresetLevel {
    Conservative,
    Moderate,
}

#[derive(Serialize)]
struct LayerQuality {
    layer: String,
    strategy: String,
    n_pruned: u8,
    channels: usize,
    sensitive: usize,
    mse: f64,
    kl_divergence: f64,
    effective_bits: f64,
}

#[derive(Serialize)]
struct CompressReport {
    model: String,
    effective_bits: f64,
    compression_ratio: f64,
    container_bytes: u64,
    layers: Vec<LayerQuality>,
}

pub fn cmd_compress(
    manifest_path: &Path,
    args: &CompressArgs,
    out_dir: &Path,
) -> Result<(), AppError> {
    let lm = LoadedManifest::open(manifest_path)?;
    let model = lm.load_layers(true)?;

    let plan = match args.plan {
        PlanChoice::None => {
            if args.beta.is_some() {
                return Err(AppError::Config("--beta has no effect without compression".into()));
            }
            PrunePlan::uncompressed(&model, args.group_size)
        }
        PlanChoice::Preset(level) => {
            let base = match level {
                PresetLevel::Conservative => PlanConfig::conservative(args.c_h, args.group_size),
                PresetLevel::Moderate => PlanConfig::moderate(args.c_h, args.group_size),
            };
            let cfg = match args.beta {
                Some(beta) => PlanConfig::custom(
                    base.strategy(),
                    base.n_target(),
                    beta,
                    args.c_h,
                    args.group_size,
                ),
                None => base,
            };
            build_plan(&model, &cfg)?
        }
        PlanChoice::Custom { strategy, n_pruned } => {
            let cfg = PlanConfig::custom(
                strategy,
                n_pruned,
                args.beta.unwrap_or(0.0),
                args.c_h,
                args.group_size,
            );
            build_plan(&model, &cfg)?
        }
    };

    let compressed = apply_plan(&model, &plan)?;
    let container = encode_container(&compressed)?;

    let mut rows = Vec::with_capacity(model.len());
    for (layer, (cl, lp)) in model.iter().zip(compressed.layers.iter().zip(&plan.layers)) {
        let approx = cl.decompress_layer()?;
        let single = PrunePlan {
            beta: plan.beta,
            c_h: plan.c_h,
            group_size: plan.group_size,
            layers: vec![lp.clone()],
        };
        rows.push(LayerQuality {
            layer: layer.name.clone(),
            strategy: lp.strategy.to_string(),
            n_pruned: lp.n_pruned,
            channels: layer.channels(),
            sensitive: lp.sensitive_count(),
            mse: mse(&layer.weight, &approx)?,
            kl_divergence: kl_divergence(
                &Histogram256::from_values(&layer.weight),
                &Histogram256::from_values(&approx),
            ),
            effective_bits: effective_bits(std::slice::from_ref(layer), &single)?,
        });
    }
    let model_bits = effective_bits(&model, &plan)?;
    let report = CompressReport {
        model: lm.manifest.model.clone(),
        effective_bits: model_bits,
        compression_ratio: 8.0 / model_bits,
        container_bytes: container.len() as u64,
        layers: rows,
    };

    let mut csv = String::from(
        "layer,strategy,n_pruned,channels,sensitive,mse,kl_divergence,effective_bits\n",
    );
    for r in &report.layers {
        writeln!(
            csv,
            "{},{},{},{},{},{:.6},{:.6e},{:.4}",
            csv_field(&r.layer),
            r.strategy,
            r.n_pruned,
            r.channels,
            r.sensitive,
            r.mse,
            r.kl_divergence,
            r.effective_bits
        )
        .unwrap();
    }

    write_atomic(&out_dir.join("model.bbs"), &container)?;
    write_atomic(
        &out_dir.join("plan.json"),
        serde_json::to_string_pretty(&plan).map_err(data_err)?.as_bytes(),
    )?;
    write_atomic(&out_dir.join("report.csv"), csv.as_bytes())?;
    write_atomic(
        &out_dir.join("report.json"),
        serde_json::to_string_pretty(&report).map_err(data_err)?.as_bytes(),
    )?;

    if args.verify {
        let bytes = std::fs::read(out_dir.join("model.bbs"))
            .map_err(|e| AppError::Data(format!("re-reading container: {e}")))?;
        let decoded = decode_container(&bytes)?;
        if decoded != compressed {
            return Err(AppError::Data(
                "verification failed: decoded container differs from the applied plan".into(),
            ));
        }
        println!("verify: container decodes bit-exactly");
    }

    println!(
        "compressed {} layers: effective bits {:.4}, ratio {:.4}, container {} bytes",
        report.layers.len(),
        report.effective_bits,
        report.compression_ratio,
        report.container_bytes
    );
    Ok(())
}

fn data_err(e: impl std::fmt::Display) -> AppError {
    AppError::Data(e.to_string())
}

// ── simulate ─────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct SimSummary {
    model: String,
    pe_rows: usize,
    kinds: Vec<String>,
    pe_columns: Vec<usize>,
    rows: Vec<SummaryRow>,
}

#[derive(Serialize)]
struct SummaryRow {
    kind: String,
    pe_columns: usize,
    total_cycles: u64,
    speedup_vs_stripes: f64,
    monotone_non_increasing: bool,
    speedup_spread: f64,
}

pub fn cmd_simulate(
    manifest_path: &Path,
    container: Option<&Path>,
    kinds: &[AcceleratorKind],
    pe_columns: &[usize],
    out_dir: &Path,
) -> Result<(), AppError> {
    if kinds.is_empty() {
        return Err(AppError::Config("no accelerator models requested".into()));
    }
    let wants_bitvert = kinds.contains(&AcceleratorKind::BitVert);
    if wants_bitvert && container.is_none() {
        return Err(AppError::Config(
            "the bitvert model needs --container from a previous compress run".into(),
        ));
    }

    let lm = LoadedManifest::open(manifest_path)?;
    // Only the bit-pattern-dependent baselines look at weight values; the
    // container is self-sufficient for bitvert, and stripes reads nothing.
    let needs_weights = kinds.iter().any(|k| {
        matches!(k, AcceleratorKind::Pragmatic | AcceleratorKind::Bitlet | AcceleratorKind::BitWave)
    });
    let layers = lm.load_layers(needs_weights)?;
    let compressed = match container {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
            Some(decode_container(&bytes)?)
        }
        None => None,
    };

    let mut csv = String::from(
        "model,pe_columns,layer,total_cycles,effectual_cycles,intra_pe_stall,inter_pe_stall,weight_bytes,speedup_vs_stripes\n",
    );
    for &cols in pe_columns {
        let cfg = ArrayConfig::with_cols(cols);
        let stripes = run(AcceleratorKind::Stripes, &layers, None, &cfg)?;
        for &kind in kinds {
            let rep = run(kind, &layers, compressed.as_ref(), &cfg)?;
            for (lr, sr) in rep.layers.iter().zip(&stripes.layers) {
                writeln!(
                    csv,
                    "{kind},{cols},{},{},{:.2},{:.2},{:.2},{},{:.4}",
                    csv_field(&lr.layer),
                    lr.total_cycles,
                    lr.effectual_cycles,
                    lr.intra_pe_stall,
                    lr.inter_pe_stall,
                    lr.weight_bytes,
                    sr.total_cycles as f64 / lr.total_cycles as f64
                )
                .unwrap();
            }
            writeln!(
                csv,
                "{kind},{cols},(total),{},{:.2},{:.2},{:.2},{},{:.4}",
                rep.total_cycles,
                rep.effectual_cycles,
                rep.intra_pe_stall,
                rep.inter_pe_stall,
                rep.weight_bytes,
                stripes.total_cycles as f64 / rep.total_cycles as f64
            )
            .unwrap();
        }
    }

    let study = scaling_study(kinds, &layers, compressed.as_ref(), pe_columns)?;
    let rows = study
        .rows
        .iter()
        .map(|r| {
            let s = study.summaries.iter().find(|s| s.kind == r.kind).unwrap();
            SummaryRow {
                kind: r.kind.to_string(),
                pe_columns: r.pe_columns,
                total_cycles: r.total_cycles,
                speedup_vs_stripes: r.speedup_vs_stripes,
                monotone_non_increasing: s.monotone_non_increasing,
                speedup_spread: s.speedup_spread,
            }
        })
        .collect();
    let summary = SimSummary {
        model: lm.manifest.model.clone(),
        pe_rows: ArrayConfig::default().rows,
        kinds: kinds.iter().map(|k| k.to_string()).collect(),
        pe_columns: pe_columns.to_vec(),
        rows,
    };

    write_atomic(&out_dir.join("cycles.csv"), csv.as_bytes())?;
    write_atomic(
        &out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary).map_err(data_err)?.as_bytes(),
    )?;
    for row in &summary.rows {
        println!(
            "{} @ {} cols: {} cycles, {:.4}x vs stripes",
            row.kind, row.pe_columns, row.total_cycles, row.speedup_vs_stripes
        );
    }
    Ok(())
}

// ── gen-synthetic ────────────────────────────────────────────────────────

/// Parses a layer shape: `gemm:m=16,k=128,n=64` or
/// `conv:cout=32,cin=16,kh=3,kw=3,out=196`.
pub fn parse_layer_spec(spec: &str) -> Result<LayerDims, AppError> {
    let bad = |msg: &str| AppError::Config(format!("layer spec '{spec}': {msg}"));
    let (kind, rest) = spec.split_once(':').ok_or_else(|| bad("missing ':'"))?;
    let mut fields = std::collections::HashMap::new();
    for pair in rest.split(',') {
        let (key, value) = pair.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let value: usize =
            value.trim().parse().map_err(|_| bad(&format!("bad number in '{pair}'")))?;
        if fields.insert(key.trim(), value).is_some() {
            return Err(bad(&format!("duplicate key '{key}'")));
        }
    }
    let mut take = |key: &str| fields.remove(key).ok_or_else(|| bad(&format!("missing {key}")));
    let dims = match kind.trim() {
        "gemm" => LayerDims::Gemm { m: take("m")?, k: take("k")?, n: take("n")? },
        "conv" => LayerDims::Conv {
            c_out: take("cout")?,
            c_in: take("cin")?,
            kh: take("kh")?,
            kw: take("kw")?,
            out_pixels: take("out")?,
        },
        other => return Err(bad(&format!("unknown kind '{other}'"))),
    };
    if let Some(key) = fields.keys().next() {
        return Err(bad(&format!("unknown key '{key}'")));
    }
    Ok(dims)
}

pub fn cmd_gen_synthetic(
    specs: &[String],
    sigma: f64,
    seed: u64,
    name: &str,
    out_dir: &Path,
) -> Result<(), AppError> {
    if specs.is_empty() {
        return Err(AppError::Config("need at least one --layer spec".into()));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(AppError::Config(format!("sigma {sigma} must be finite and >= 0")));
    }
    let dims: Vec<LayerDims> =
        specs.iter().map(|s| parse_layer_spec(s)).collect::<Result<_, _>>()?;

    let normal =
        Normal::new(0.0, sigma).map_err(|e| AppError::Config(format!("sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(dims.len());
    for (i, d) in dims.iter().enumerate() {
        let layer_name = format!("{}{i}", d.kind());
        let (channels, k) = (d.channels(), d.reduction_len());
        let weight: Vec<i8> = (0..channels * k)
            .map(|_| (normal.sample(&mut rng).round() as i64).clamp(-128, 127) as i8)
            .collect();
        // quantization scale a real pipeline would produce: channel
        // max-abs mapped onto the int8 range, floored at one LSB
        let scales: Vec<f32> = (0..channels)
            .map(|c| {
                let row = &weight[c * k..(c + 1) * k];
                let maxabs = row.iter().map(|w| (*w as i32).unsigned_abs()).max().unwrap();
                (maxabs.max(1) as f32) / 127.0
            })
            .collect();

        let wfile = format!("{layer_name}.weights.bin");
        let sfile = format!("{layer_name}.scales.bin");
        let wbytes: Vec<u8> = weight.iter().map(|&w| w as u8).collect();
        let sbytes: Vec<u8> = scales.iter().flat_map(|s| s.to_le_bytes()).collect();
        write_atomic(&out_dir.join(&wfile), &wbytes)?;
        write_atomic(&out_dir.join(&sfile), &sbytes)?;
        layers.push(crate::manifest::ManifestLayer {
            name: layer_name,
            dims: *d,
            weights: wfile,
            scales: sfile,
            channels,
        });
    }

    let manifest = crate::manifest::Manifest { model: name.to_string(), layers };
    let path = out_dir.join("manifest.json");
    write_atomic(&path, serde_json::to_string_pretty(&manifest).map_err(data_err)?.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_specs_parse_and_reject() {
        assert_eq!(
            parse_layer_spec("gemm:m=16,k=128,n=64").unwrap(),
            LayerDims::Gemm { m: 16, k: 128, n: 64 }
        );
        assert_eq!(
            parse_layer_spec("conv:cout=32,cin=16,kh=3,kw=3,out=196").unwrap(),
            LayerDims::Conv { c_out: 32, c_in: 16, kh: 3, kw: 3, out_pixels: 196 }
        );
        for bad in [
            "gemm",
            "gemm:m=16,k=128",
            "gemm:m=16,k=128,n=64,z=1",
            "gemm:m=16,m=16,k=1,n=1",
            "pool:m=1",
            "gemm:m=x,k=1,n=1",
        ] {
            assert!(parse_layer_spec(bad).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn csv_fields_escape_only_when_needed() {
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("with,comma"), "\"with,comma\"");
        assert_eq!(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
