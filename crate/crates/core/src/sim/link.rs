//! Fluid-flow link with QoS classes.
//!
//! Bandwidth allocation, recomputed at every arrival/departure on the link:
//! every class with active transfers receives its guaranteed minimum share,
//! and all remaining bandwidth (including the shares of idle classes) goes
//! to the highest-priority active class. Within a class the allocation is
//! processor-shared equally across its transfers.
//!
//! Completion scheduling uses a version counter: any state change bumps the
//! version, and stale `TransferDue` events are ignored by the caller.

use std::collections::BTreeMap;

/// Remaining data below this is considered drained.
const DRAIN_EPS: f64 = 1e-9;

/// Transfers within this many seconds of draining complete immediately.
/// Below roughly 1 ns the completion time is indistinguishable from the
/// current clock at f64 resolution, and scheduling it would spin the event
/// loop at a fixed timestamp.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Transfer {
    class: usize,
    remaining: f64,
    rate: f64,
    request: u64,
}

#[derive(Debug)]
pub struct FluidLink {
    bandwidth: f64,
    propagation_delay: f64,
    /// Guaranteed minimum share per class, in priority order (index 0 wins
    /// the excess).
    shares: Vec<f64>,
    transfers: BTreeMap<u64, Transfer>,
    next_transfer_id: u64,
    version: u64,
    last_update: f64,
    /// Data units moved since the last window reset; drives the utilization
    /// sample.
    window_data: f64,
}

impl FluidLink {
    pub fn new(bandwidth: f64, propagation_delay: f64, shares: Vec<f64>) -> Self {
        Self {
            bandwidth,
            propagation_delay,
            shares,
            transfers: BTreeMap::new(),
            next_transfer_id: 0,
            version: 0,
            last_update: 0.0,
            window_data: 0.0,
        }
    }

    pub fn propagation_delay(&self) -> f64 {
        self.propagation_delay
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Move time forward, draining every active transfer at its current rate.
    pub fn advance(&mut self, now: f64) {
        let dt = now - self.last_update;
        debug_assert!(dt >= -1e-12, "link time went backwards");
        if dt > 0.0 {
            for t in self.transfers.values_mut() {
                let moved = (t.rate * dt).min(t.remaining);
                t.remaining -= moved;
                self.window_data += moved;
            }
        }
        self.last_update = now;
    }

    fn recompute_rates(&mut self) {
        let active: Vec<usize> = (0..self.shares.len())
            .filter(|&c| self.transfers.values().any(|t| t.class == c))
            .collect();
        if active.is_empty() {
            return;
        }
        let guaranteed: f64 = active.iter().map(|&c| self.shares[c]).sum();
        let excess = self.bandwidth * (1.0 - guaranteed).max(0.0);
        let top = active[0];
        for &c in &active {
            let mut alloc = self.bandwidth * self.shares[c];
            if c == top {
                alloc += excess;
            }
            let count = self.transfers.values().filter(|t| t.class == c).count();
            let rate = alloc / count as f64;
            for t in self.transfers.values_mut().filter(|t| t.class == c) {
                t.rate = rate;
            }
        }
    }

    /// Begin transmitting `size` data units of `request` in `class`.
    pub fn start_transfer(&mut self, now: f64, class: usize, size: f64, request: u64) {
        self.advance(now);
        let id = self.next_transfer_id;
        self.next_transfer_id += 1;
        self.transfers.insert(id, Transfer { class, remaining: size, rate: 0.0, request });
        self.recompute_rates();
        self.version += 1;
    }

    /// Earliest completion time among active transfers, if any.
    pub fn next_completion(&self) -> Option<f64> {
        self.transfers
            .values()
            .filter(|t| t.rate > 0.0)
            .map(|t| self.last_update + t.remaining / t.rate)
            .min_by(f64::total_cmp)
    }

    /// Remove every drained transfer and return their request ids in
    /// transfer order; rates are recomputed when anything finished.
    pub fn take_completed(&mut self, now: f64) -> Vec<u64> {
        self.advance(now);
        let done: Vec<u64> = self
            .transfers
            .iter()
            .filter(|(_, t)| {
                t.remaining <= DRAIN_EPS || (t.rate > 0.0 && t.remaining <= t.rate * TIME_EPS)
            })
            .map(|(&id, _)| id)
            .collect();
        let mut requests = Vec::with_capacity(done.len());
        for id in done {
            let t = self.transfers.remove(&id).unwrap();
            requests.push(t.request);
        }
        if !requests.is_empty() {
            self.recompute_rates();
            self.version += 1;
        }
        requests
    }

    /// Update one class's guaranteed share; affects rates from `now` on.
    pub fn set_share(&mut self, now: f64, class: usize, share: f64) {
        self.advance(now);
        self.shares[class] = share;
        self.recompute_rates();
        self.version += 1;
    }

    /// Data units moved in the window ending now, then reset the window.
    pub fn take_window_data(&mut self, now: f64) -> f64 {
        self.advance(now);
        std::mem::take(&mut self.window_data)
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
}
