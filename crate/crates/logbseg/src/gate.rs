//! Foreground/background balancing gate: crops are routed into two bounded
//! queues by their foreground-to-background ratio T and emitted as balanced
//! batches of 2C once both queues fill.

use crate::error::{Error, Result};
use crate::voxelio::{LabeledCrop, Volume};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Default routing threshold on T.
pub const DEFAULT_MU: f64 = 0.15;

/// Foreground-to-background voxel ratio of a binary mask.
///
/// Errors on an all-foreground mask (zero background).
pub fn fg_ratio(mask: &Volume) -> Result<f64> {
    if !mask.is_binary() {
        return Err(Error::Data("fg_ratio requires a binary mask".into()));
    }
    let fg = mask.foreground_count();
    let bg = mask.data.len() - fg;
    if bg == 0 {
        return Err(Error::Data("all-foreground mask has no background".into()));
    }
    Ok(fg as f64 / bg as f64)
}

/// Running tallies over one epoch of gate traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateStats {
    /// Crops offered to the gate.
    pub pushed: u64,
    /// Crops accepted into a queue.
    pub enqueued: u64,
    /// Crops dropped (T = mu, full target queue, or ratio error).
    pub skipped: u64,
    /// Balanced batches emitted.
    pub emitted: u64,
}

/// A batch of exactly 2C crops, the C low-foreground ones first.
#[derive(Debug, Clone)]
pub struct BalancedBatch {
    pub crops: Vec<LabeledCrop>,
}

#[derive(Debug, Clone)]
pub struct GateState {
    q1: VecDeque<LabeledCrop>,
    q2: VecDeque<LabeledCrop>,
    pub capacity: usize,
    pub mu: f64,
    pub stats: GateStats,
}

impl GateState {
    pub fn new(capacity: usize, mu: f64) -> Result<Self> {
        if capacity < 1 {
            return Err(Error::Config("gate capacity must be >= 1".into()));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Config("gate threshold mu must be finite and > 0".into()));
        }
        Ok(GateState {
            q1: VecDeque::with_capacity(capacity),
            q2: VecDeque::with_capacity(capacity),
            capacity,
            mu,
            stats: GateStats::default(),
        })
    }

    /// Low-foreground counter c1 (always equals the queue length).
    pub fn c1(&self) -> usize {
        self.q1.len()
    }

    /// High-foreground counter c2.
    pub fn c2(&self) -> usize {
        self.q2.len()
    }

    /// Discard queued crops and reset the counters; stats are kept.
    pub fn clear(&mut self) {
        self.q1.clear();
        self.q2.clear();
    }
}

/// Route one crop; returns a balanced batch once both queues reach capacity.
///
/// Crops whose T equals mu exactly, whose target queue is full, or whose mask
/// is unusable for the ratio are skipped.
pub fn gate_push(g: &mut GateState, crop: LabeledCrop) -> Option<BalancedBatch> {
    g.stats.pushed += 1;
    let mask = match &crop.mask {
        Some(m) => m,
        None => {
            g.stats.skipped += 1;
            return None;
        }
    };
    let t = match fg_ratio(mask) {
        Ok(t) => t,
        Err(_) => {
            g.stats.skipped += 1;
            return None;
        }
    };
    if t < g.mu && g.q1.len() < g.capacity {
        g.q1.push_back(crop);
        g.stats.enqueued += 1;
    } else if t > g.mu && g.q2.len() < g.capacity {
        g.q2.push_back(crop);
        g.stats.enqueued += 1;
    } else {
        g.stats.skipped += 1;
        return None;
    }
    if g.q1.len() == g.capacity && g.q2.len() == g.capacity {
        let mut crops = Vec::with_capacity(2 * g.capacity);
        crops.extend(g.q1.drain(..));
        crops.extend(g.q2.drain(..));
        g.stats.emitted += 1;
        return Some(BalancedBatch { crops });
    }
    None
}

/// Chunk crops into batches of 2C in arrival order (no mask needed); the
/// final batch may be a remainder.
pub fn gate_bypass(crops: Vec<LabeledCrop>, capacity: usize) -> Vec<BalancedBatch> {
    let size = 2 * capacity.max(1);
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(size);
    for c in crops {
        cur.push(c);
        if cur.len() == size {
            out.push(BalancedBatch {
                crops: std::mem::replace(&mut cur, Vec::with_capacity(size)),
            });
        }
    }
    if !cur.is_empty() {
        out.push(BalancedBatch { crops: cur });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_with(fg: usize) -> Volume {
        let mut data = vec![0.0f32; 64];
        for v in data.iter_mut().take(fg) {
            *v = 1.0;
        }
        Volume::new([4, 4, 4], [1.0; 3], data).unwrap()
    }

    fn crop_with(fg: usize) -> LabeledCrop {
        LabeledCrop {
            image: mask_with(0),
            mask: Some(mask_with(fg)),
            source_id: "t".into(),
            offset: [0, 0, 0],
        }
    }

    #[test]
    fn fg_ratio_examples() {
        assert_eq!(fg_ratio(&mask_with(0)).unwrap(), 0.0);
        let r = fg_ratio(&mask_with(8)).unwrap();
        assert!((r - 8.0 / 56.0).abs() < 1e-12);
        assert_eq!(fg_ratio(&mask_with(32)).unwrap(), 1.0);
        assert!(fg_ratio(&mask_with(64)).is_err());
    }

    #[test]
    fn emit_example_capacity_one() {
        let mut g = GateState::new(1, DEFAULT_MU).unwrap();
        assert!(gate_push(&mut g, crop_with(2)).is_none()); // T ~ 0.032
        let batch = gate_push(&mut g, crop_with(20)).unwrap(); // T ~ 0.45
        assert_eq!(batch.crops.len(), 2);
        // q1 member first
        assert_eq!(batch.crops[0].mask.as_ref().unwrap().foreground_count(), 2);
        assert_eq!(g.c1(), 0);
        assert_eq!(g.c2(), 0);
        assert_eq!(g.stats.emitted, 1);
    }

    #[test]
    fn full_queue_skips() {
        let mut g = GateState::new(1, DEFAULT_MU).unwrap();
        assert!(gate_push(&mut g, crop_with(2)).is_none());
        assert!(gate_push(&mut g, crop_with(3)).is_none());
        assert_eq!(g.stats.skipped, 1);
        assert_eq!(g.c1(), 1);
    }

    #[test]
    fn exact_threshold_skipped() {
        // 64-voxel mask: fg/bg = mu when fg = 64*mu/(1+mu)
        let mut g = GateState::new(1, 8.0 / 56.0).unwrap();
        assert!(gate_push(&mut g, crop_with(8)).is_none());
        assert_eq!(g.stats.skipped, 1);
        assert_eq!(g.c1() + g.c2(), 0);
    }

    #[test]
    fn maskless_and_all_foreground_skipped() {
        let mut g = GateState::new(1, DEFAULT_MU).unwrap();
        let mut c = crop_with(2);
        c.mask = None;
        assert!(gate_push(&mut g, c).is_none());
        assert!(gate_push(&mut g, crop_with(64)).is_none());
        assert_eq!(g.stats.skipped, 2);
    }

    #[test]
    fn bypass_chunking() {
        let crops: Vec<_> = (0..3).map(|_| crop_with(0)).collect();
        let batches = gate_bypass(crops, 1);
        assert_eq!(batches.len(), 2);
        assert_eq!(batches[0].crops.len(), 2);
        assert_eq!(batches[1].crops.len(), 1);
        assert!(gate_bypass(vec![], 2).is_empty());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GateState::new(0, 0.15).is_err());
        assert!(GateState::new(2, 0.0).is_err());
        assert!(GateState::new(2, f64::NAN).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn gate_invariants_random_streams(
            fgs in proptest::collection::vec(0usize..=64, 1..200),
            cap in 1usize..4,
        ) {
            let mut g = GateState::new(cap, DEFAULT_MU).unwrap();
            for &fg in &fgs {
                let before_c1 = g.c1();
                let before_c2 = g.c2();
                let emitted = gate_push(&mut g, crop_with(fg));
                prop_assert!(g.c1() <= cap && g.c2() <= cap);
                if let Some(b) = emitted {
                    prop_assert_eq!(b.crops.len(), 2 * cap);
                    let low = b.crops.iter()
                        .filter(|c| fg_ratio(c.mask.as_ref().unwrap()).unwrap() < g.mu)
                        .count();
                    prop_assert_eq!(low, cap);
                    // the first C crops are the low-foreground ones
                    for c in &b.crops[..cap] {
                        prop_assert!(fg_ratio(c.mask.as_ref().unwrap()).unwrap() < g.mu);
                    }
                    prop_assert_eq!(g.c1(), 0);
                    prop_assert_eq!(g.c2(), 0);
                } else {
                    // queues only ever grow by one
                    prop_assert!(g.c1() + g.c2() <= before_c1 + before_c2 + 1);
                }
            }
            // conservation: everything pushed was enqueued or skipped
            prop_assert_eq!(g.stats.pushed, g.stats.enqueued + g.stats.skipped);
            prop_assert_eq!(g.stats.pushed, fgs.len() as u64);
            let queued_now = (g.c1() + g.c2()) as u64;
            prop_assert_eq!(g.stats.enqueued, g.stats.emitted * 2 * cap as u64 + queued_now);
        }

        #[test]
        fn gate_never_starves_mixed_stream(cap in 1usize..4) {
            // alternating low/high crops emit every 2*cap accepted pushes
            let mut g = GateState::new(cap, DEFAULT_MU).unwrap();
            let mut emitted = 0;
            for i in 0..8 * cap {
                let fg = if i % 2 == 0 { 2 } else { 30 };
                if gate_push(&mut g, crop_with(fg)).is_some() {
                    emitted += 1;
                }
            }
            prop_assert_eq!(emitted, 4);
        }
    }
}
