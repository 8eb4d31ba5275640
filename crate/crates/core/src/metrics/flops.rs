//! Multiply-accumulate counts.
//!
//! Convention: one MAC per kernel tap per output position for every conv,
//! transposed conv and frequency 1×1 conv, plus one per output element
//! for the bias. Transposed convs are counted at their output positions.
//! FFTs are not part of the headline number; their cost is estimated
//! separately as `2.5·H·W·log2(H·W)` per channel per transform.

use crate::network::{layers, LayerOp, NetworkConfig};

pub const CONVENTION: &str = "macs+bias";

/// MACs of one conv producing an `oh × ow` map.
pub fn conv_macs(cin: usize, cout: usize, k: usize, (oh, ow): (usize, usize), bias: bool) -> u64 {
    let pos = (oh * ow) as u64;
    let mut m = (cin * cout * k * k) as u64 * pos;
    if bias {
        m += cout as u64 * pos;
    }
    m
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlopEntry {
    pub name: String,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlopReport {
    pub entries: Vec<FlopEntry>,
    pub total_macs: u64,
    pub height: usize,
    pub width: usize,
    pub convention: &'static str,
    /// Estimated real operations of all FFTs (not in `total_macs`).
    pub fft_ops: f64,
}

impl FlopReport {
    pub fn giga(&self) -> f64 {
        self.total_macs as f64 / 1e9
    }
}

fn fft_cost(h: usize, w: usize) -> f64 {
    let n = (h * w) as f64;
    2.5 * n * n.log2()
}

/// MAC count of the network on an `h × w` input.
pub fn flops_count(cfg: &NetworkConfig, h: usize, w: usize) -> FlopReport {
    let mut entries = Vec::new();
    let mut fft_ops = 0.0;
    for l in layers(cfg) {
        let (lh, lw) = (h >> l.level, w >> l.level);
        let out = match l.op {
            LayerOp::Conv | LayerOp::ConvTranspose => (lh, lw),
            LayerOp::FreqConv => (lh, lw / 2 + 1),
        };
        if l.op == LayerOp::FreqConv && l.name.ends_with(".fft1") {
            // forward and inverse transform of the block input, per channel
            fft_ops += 2.0 * (l.cin / 2) as f64 * fft_cost(lh, lw);
        }
        entries.push(FlopEntry {
            macs: conv_macs(l.cin, l.cout, l.k, out, true),
            name: l.name,
        });
    }
    FlopReport {
        total_macs: entries.iter().map(|e| e.macs).sum(),
        entries,
        height: h,
        width: w,
        convention: CONVENTION,
        fft_ops,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_hand_count() {
        assert_eq!(conv_macs(1, 1, 3, (8, 8), false), 576);
        assert_eq!(conv_macs(1, 1, 3, (8, 8), true), 640);
    }

    #[test]
    fn report_total_is_entry_sum_and_scales_with_area() {
        let cfg = NetworkConfig::deeprft_small();
        let a = flops_count(&cfg, 256, 256);
        assert_eq!(a.total_macs, a.entries.iter().map(|e| e.macs).sum::<u64>());
        let b = flops_count(&cfg, 512, 512);
        let ratio = b.total_macs as f64 / a.total_macs as f64;
        assert!((ratio / 4.0 - 1.0).abs() < 0.005, "{ratio}");
    }
}
