//! FLOPs accounting for architectures in the space.
//!
//! One multiply-accumulate counts as one FLOP, the mobile-NAS convention.
//! Elementwise additions, activations and batch norm count as zero; "same"
//! padding with ceiling division at stride 2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{ArchitectureConfig, ResolvedStage, SearchSpace};

/// Millions of multiply-accumulates.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Mflops(pub f64);

impl Mflops {
    pub fn from_macs(macs: u64) -> Self {
        Mflops(macs as f64 / 1e6)
    }
}

impl std::fmt::Display for Mflops {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}", self.0)
    }
}

/// One line of the per-layer cost breakdown.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub macs: u64,
}

/// Multiply-accumulates of a (possibly grouped) convolution.
pub fn conv_flops(
    in_ch: u64,
    out_ch: u64,
    kernel: u64,
    h_out: u64,
    w_out: u64,
    groups: u64,
) -> Result<u64> {
    if in_ch % groups != 0 {
        return Err(Error::GroupDivisibility {
            channels: in_ch,
            groups,
        });
    }
    Ok(h_out * w_out * (in_ch / groups) * out_ch * kernel * kernel)
}

fn ceil_div(a: u32, b: u32) -> u32 {
    (a + b - 1) / b
}

/// Cost of one full MBConv stage; returns (layers, out_channels, out_hw).
///
/// Each block is expand 1x1 (skipped at expansion 1), depthwise kxk, optional
/// squeeze-excite on the pooled vector, then project 1x1. The stage stride
/// applies to the first block only.
pub fn mbconv_flops(
    stage: &ResolvedStage,
    stage_name: &str,
    in_ch: u32,
    in_hw: u32,
) -> Result<(Vec<LayerCost>, u32, u32)> {
    let mut layers = Vec::new();
    let mut in_ch = in_ch as u64;
    let mut hw = in_hw;
    for block in 0..stage.depth {
        let stride = if block == 0 { stage.stride } else { 1 };
        let out_hw = ceil_div(hw, stride);
        let expanded = in_ch * stage.expansion as u64;
        if stage.expansion > 1 {
            layers.push(LayerCost {
                name: format!("{stage_name}.b{block}.expand"),
                macs: conv_flops(in_ch, expanded, 1, hw as u64, hw as u64, 1)?,
            });
        }
        layers.push(LayerCost {
            name: format!("{stage_name}.b{block}.dw"),
            macs: conv_flops(
                expanded,
                expanded,
                stage.kernel as u64,
                out_hw as u64,
                out_hw as u64,
                expanded,
            )?,
        });
        if stage.se {
            let squeezed = ((expanded as f64 / 4.0).round() as u64).max(1);
            layers.push(LayerCost {
                name: format!("{stage_name}.b{block}.se"),
                macs: expanded * squeezed + squeezed * expanded,
            });
        }
        layers.push(LayerCost {
            name: format!("{stage_name}.b{block}.project"),
            macs: conv_flops(expanded, stage.width as u64, 1, out_hw as u64, out_hw as u64, 1)?,
        });
        in_ch = stage.width as u64;
        hw = out_hw;
    }
    Ok((layers, in_ch as u32, hw))
}

/// Per-layer cost breakdown of a full architecture.
pub fn arch_flops_breakdown(
    space: &SearchSpace,
    arch: &ArchitectureConfig,
) -> Result<Vec<LayerCost>> {
    let resolved = space.resolve(arch)?;
    let mut layers = Vec::new();
    let mut hw = ceil_div(resolved.resolution, 2);
    layers.push(LayerCost {
        name: "stem".into(),
        macs: conv_flops(3, resolved.stem_width as u64, 3, hw as u64, hw as u64, 1)?,
    });
    let mut in_ch = resolved.stem_width;
    for (i, stage) in resolved.stages.iter().enumerate() {
        let (stage_layers, out_ch, out_hw) =
            mbconv_flops(stage, &format!("mb{}", i + 1), in_ch, hw)?;
        layers.extend(stage_layers);
        in_ch = out_ch;
        hw = out_hw;
    }
    // efficient last stage: 1x1 expansion, global pool, feature projection,
    // classifier
    let expanded = in_ch as u64 * resolved.mbpool_expansion as u64;
    layers.push(LayerCost {
        name: "head.expand".into(),
        macs: conv_flops(in_ch as u64, expanded, 1, hw as u64, hw as u64, 1)?,
    });
    layers.push(LayerCost {
        name: "head.features".into(),
        macs: expanded * resolved.mbpool_width as u64,
    });
    layers.push(LayerCost {
        name: "head.classifier".into(),
        macs: resolved.mbpool_width as u64 * resolved.class_count as u64,
    });
    Ok(layers)
}

/// Total cost of an architecture in MFLOPs.
///
/// Computed directly without materializing the per-layer breakdown; a test
/// pins it to the sum of [`arch_flops_breakdown`].
pub fn arch_flops(space: &SearchSpace, arch: &ArchitectureConfig) -> Result<Mflops> {
    let resolved = space.resolve(arch)?;
    let mut hw = ceil_div(resolved.resolution, 2) as u64;
    let mut total = hw * hw * 3 * resolved.stem_width as u64 * 9;
    let mut in_ch = resolved.stem_width as u64;
    for stage in &resolved.stages {
        for block in 0..stage.depth {
            let stride = if block == 0 { stage.stride } else { 1 } as u64;
            let out_hw = (hw + stride - 1) / stride;
            let expanded = in_ch * stage.expansion as u64;
            if stage.expansion > 1 {
                total += hw * hw * in_ch * expanded;
            }
            total += out_hw * out_hw * expanded * (stage.kernel as u64 * stage.kernel as u64);
            if stage.se {
                let squeezed = ((expanded as f64 / 4.0).round() as u64).max(1);
                total += 2 * expanded * squeezed;
            }
            total += out_hw * out_hw * expanded * stage.width as u64;
            in_ch = stage.width as u64;
            hw = out_hw;
        }
    }
    let expanded = in_ch * resolved.mbpool_expansion as u64;
    total += hw * hw * in_ch * expanded;
    total += expanded * resolved.mbpool_width as u64;
    total += resolved.mbpool_width as u64 * resolved.class_count as u64;
    Ok(Mflops::from_macs(total))
}
