//! Per-iteration, per-phase, per-edge communication counters.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::frame::{Phase, ProtocolMessage, Role};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub messages: u64,
    pub elements: u64,
    /// Payload bytes (8 per element).
    pub bytes: u64,
    /// Full frame bytes including header and length prefix.
    pub wire_bytes: u64,
}

impl Counter {
    pub fn add(&mut self, other: &Counter) {
        self.messages += other.messages;
        self.elements += other.elements;
        self.bytes += other.bytes;
        self.wire_bytes += other.wire_bytes;
    }
}

type Key = (u32, Phase, Role, Role);

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommLedger {
    entries: BTreeMap<Key, Counter>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, msg: &ProtocolMessage) {
        let c = self
            .entries
            .entry((msg.iteration, msg.phase, msg.sender, msg.receiver))
            .or_default();
        c.messages += 1;
        c.elements += msg.elements();
        c.bytes += 8 * msg.elements();
        c.wire_bytes += msg.wire_len() as u64;
    }

    pub fn merge(&mut self, other: &CommLedger) {
        for (k, v) in &other.entries {
            self.entries.entry(*k).or_default().add(v);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> Counter {
        let mut t = Counter::default();
        self.entries.values().for_each(|c| t.add(c));
        t
    }

    pub fn filter(&self, mut keep: impl FnMut(u32, Phase, Role, Role) -> bool) -> Counter {
        let mut t = Counter::default();
        for (&(it, ph, s, r), c) in &self.entries {
            if keep(it, ph, s, r) {
                t.add(c);
            }
        }
        t
    }

    pub fn by_phase(&self) -> BTreeMap<Phase, Counter> {
        let mut out = BTreeMap::new();
        for (&(_, ph, _, _), c) in &self.entries {
            out.entry(ph).or_insert_with(Counter::default).add(c);
        }
        out
    }

    pub fn by_edge(&self) -> BTreeMap<(Role, Role), Counter> {
        let mut out = BTreeMap::new();
        for (&(_, _, s, r), c) in &self.entries {
            out.entry((s, r)).or_insert_with(Counter::default).add(c);
        }
        out
    }

    /// Counters of the iterative phases, grouped into epochs of
    /// `iters_per_epoch` iterations. Init and reconstruct traffic is excluded.
    pub fn per_epoch(&self, iters_per_epoch: usize, epochs: usize) -> Vec<BTreeMap<Phase, Counter>> {
        let mut out = vec![BTreeMap::new(); epochs];
        let ipe = iters_per_epoch.max(1) as u32;
        for (&(it, ph, _, _), c) in &self.entries {
            if !ph.is_iterative() {
                continue;
            }
            let e = (it / ipe) as usize;
            if e < epochs {
                out[e].entry(ph).or_insert_with(Counter::default).add(c);
            }
        }
        out
    }

    /// Ring elements per epoch over the iterative phases.
    pub fn elements_per_epoch(&self, iters_per_epoch: usize, epochs: usize) -> Vec<u64> {
        self.per_epoch(iters_per_epoch, epochs)
            .iter()
            .map(|m| m.values().map(|c| c.elements).sum())
            .collect()
    }
}
