//! Latency extraction, histograms, tail statistics, and the two optimality
//! criteria computed from traces.
//!
//! "Heavy-tailed" is quantified by the tail mass ratio: the fraction of
//! samples exceeding twice the median. Percentiles use the nearest-rank
//! method on sorted samples, so every statistic is exact and deterministic.

use serde::Serialize;
use thiserror::Error;

use crate::trace::{RequestRecord, RequestStatus, Trace};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no latency samples: {0}")]
    EmptySamples(&'static str),
    #[error("histogram needs at least one bin")]
    NoBins,
    #[error("histogram range is inverted: [{lo}, {hi}]")]
    InvertedRange { lo: f64, hi: f64 },
}

/// Latency samples plus counts of what was excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencySamples {
    pub samples: Vec<f64>,
    /// Dropped requests (raw mode) or families with no completion (family
    /// mode).
    pub excluded: usize,
}

/// Per-request or per-family latencies in seconds.
///
/// Raw mode emits one sample per completed request. Family mode groups each
/// original with its timeout-spawned duplicates and emits the time from the
/// original's creation to the first completion in the family; families with
/// no completion in the log are excluded and counted.
pub fn latency_samples(trace: &Trace, family: bool) -> Result<LatencySamples, MetricsError> {
    latency_samples_from_records(&trace.request_log, family)
}

/// Same as [`latency_samples`] but over raw request records (e.g. re-read
/// from a requests CSV).
pub fn latency_samples_from_records(
    records: &[RequestRecord],
    family: bool,
) -> Result<LatencySamples, MetricsError> {
    if !family {
        let mut samples = Vec::new();
        let mut excluded = 0;
        for r in records {
            match (r.status, r.completed_at) {
                (RequestStatus::Completed, Some(done)) => samples.push(done - r.created_at),
                _ => excluded += 1,
            }
        }
        if samples.is_empty() {
            return Err(MetricsError::EmptySamples("no completed requests"));
        }
        return Ok(LatencySamples { samples, excluded });
    }

    // Family mode: key by the original's id. The original's creation time
    // anchors the family; originals missing from the log (still in flight at
    // horizon) leave their family unanchored and excluded.
    use std::collections::BTreeMap;
    let mut created: BTreeMap<u64, f64> = BTreeMap::new();
    let mut first_completion: BTreeMap<u64, f64> = BTreeMap::new();
    for r in records {
        let root = r.parent_id.unwrap_or(r.id);
        if r.parent_id.is_none() {
            created.insert(r.id, r.created_at);
        }
        if let (RequestStatus::Completed, Some(done)) = (r.status, r.completed_at) {
            first_completion
                .entry(root)
                .and_modify(|t| *t = t.min(done))
                .or_insert(done);
        }
    }
    let mut samples = Vec::new();
    let mut excluded = 0;
    for (&root, &created_at) in &created {
        match first_completion.get(&root) {
            Some(&done) => samples.push(done - created_at),
            None => excluded += 1,
        }
    }
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples("no completed families"));
    }
    Ok(LatencySamples { samples, excluded })
}

/// Equal-width histogram with explicit under/overflow counts so the total
/// always conserves the sample count.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HistogramRange {
    /// `[0, p99.5]` of the samples.
    Auto,
    Explicit { lo: f64, hi: f64 },
}

/// Bin samples into `bin_count` equal-width bins.
///
/// A sample on the upper edge lands in the last bin; outside the range it
/// counts as under/overflow.
pub fn build_histogram(
    samples: &[f64],
    bin_count: usize,
    range: HistogramRange,
) -> Result<Histogram, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples("histogram input"));
    }
    if bin_count == 0 {
        return Err(MetricsError::NoBins);
    }
    let (lo, hi) = match range {
        HistogramRange::Auto => {
            let mut sorted = samples.to_vec();
            sorted.sort_by(f64::total_cmp);
            let hi = nearest_rank(&sorted, 99.5).max(1e-9);
            (0.0, hi)
        }
        HistogramRange::Explicit { lo, hi } => {
            if lo >= hi {
                return Err(MetricsError::InvertedRange { lo, hi });
            }
            (lo, hi)
        }
    };
    let width = (hi - lo) / bin_count as f64;
    let bin_edges: Vec<f64> = (0..=bin_count).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bin_count];
    let mut underflow = 0;
    let mut overflow = 0;
    for &s in samples {
        if s < lo {
            underflow += 1;
        } else if s > hi {
            overflow += 1;
        } else {
            let idx = (((s - lo) / width) as usize).min(bin_count - 1);
            counts[idx] += 1;
        }
    }
    Ok(Histogram { bin_edges, counts, underflow, overflow })
}

/// Nearest-rank percentile on an ascending-sorted slice.
fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Distribution-free tail summary of a latency sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TailStats {
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    /// Fraction of samples exceeding twice the median.
    pub tail_mass_ratio: f64,
    pub sample_count: usize,
}

pub fn tail_stats(samples: &[f64]) -> Result<TailStats, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples("tail statistics input"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = nearest_rank(&sorted, 50.0);
    let p95 = nearest_rank(&sorted, 95.0);
    let p99 = nearest_rank(&sorted, 99.0);
    let threshold = 2.0 * median;
    let over = sorted.iter().filter(|&&s| s > threshold).count();
    Ok(TailStats {
        median,
        p95,
        p99,
        tail_mass_ratio: over as f64 / sorted.len() as f64,
        sample_count: sorted.len(),
    })
}

/// Verdict thresholds; artifact defaults, not taken from any measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CriteriaThresholds {
    /// Max |relative mean-latency change| for criterion 1 to pass.
    pub latency_change: f64,
    /// Min duplicated-request reduction for criterion 2.
    pub dup_reduction: f64,
    /// Min tail-mass reduction for criterion 2.
    pub tail_mass_reduction: f64,
}

impl Default for CriteriaThresholds {
    fn default() -> Self {
        Self { latency_change: 0.15, dup_reduction: 0.20, tail_mass_reduction: 0.20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Criterion1 {
    pub mean_latency_baseline: f64,
    pub mean_latency_candidate: f64,
    /// `(candidate − baseline) / baseline`.
    pub relative_change: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Criterion2 {
    pub dup_count_baseline: u64,
    pub dup_count_candidate: u64,
    pub tail_baseline: TailStats,
    pub tail_candidate: TailStats,
    /// `(baseline − candidate) / baseline` when baseline > 0, else 0.
    pub dup_reduction: f64,
    pub tail_mass_reduction: f64,
    pub pass: bool,
}

/// Comparison of a candidate run against a baseline run on both criteria.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CriteriaReport {
    pub criterion1: Criterion1,
    pub criterion2: Criterion2,
    pub thresholds: CriteriaThresholds,
}

fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

fn reduction(baseline: f64, candidate: f64) -> f64 {
    if baseline > 0.0 {
        (baseline - candidate) / baseline
    } else {
        0.0
    }
}

/// Count duplicated requests (records with a parent) in the log.
pub fn duplicate_count(records: &[RequestRecord]) -> u64 {
    records.iter().filter(|r| r.parent_id.is_some()).count() as u64
}

/// Evaluate both criteria on family latencies: criterion 1 compares mean
/// latency, criterion 2 compares duplicate counts and tail mass.
pub fn criteria_report(
    baseline: &Trace,
    candidate: &Trace,
    thresholds: CriteriaThresholds,
) -> Result<CriteriaReport, MetricsError> {
    criteria_report_from_records(&baseline.request_log, &candidate.request_log, thresholds)
}

/// Same as [`criteria_report`] over raw request records.
pub fn criteria_report_from_records(
    baseline: &[RequestRecord],
    candidate: &[RequestRecord],
    thresholds: CriteriaThresholds,
) -> Result<CriteriaReport, MetricsError> {
    let base = latency_samples_from_records(baseline, true)?;
    let cand = latency_samples_from_records(candidate, true)?;

    let mean_base = mean(&base.samples);
    let mean_cand = mean(&cand.samples);
    let relative_change = (mean_cand - mean_base) / mean_base;
    let criterion1 = Criterion1 {
        mean_latency_baseline: mean_base,
        mean_latency_candidate: mean_cand,
        relative_change,
        pass: relative_change.abs() <= thresholds.latency_change,
    };

    let dup_base = duplicate_count(baseline);
    let dup_cand = duplicate_count(candidate);
    let tail_base = tail_stats(&base.samples)?;
    let tail_cand = tail_stats(&cand.samples)?;
    let dup_reduction = reduction(dup_base as f64, dup_cand as f64);
    let tail_mass_reduction = reduction(tail_base.tail_mass_ratio, tail_cand.tail_mass_ratio);
    let criterion2 = Criterion2 {
        dup_count_baseline: dup_base,
        dup_count_candidate: dup_cand,
        tail_baseline: tail_base,
        tail_candidate: tail_cand,
        dup_reduction,
        tail_mass_reduction,
        pass: dup_reduction >= thresholds.dup_reduction
            && tail_mass_reduction >= thresholds.tail_mass_reduction,
    };

    Ok(CriteriaReport { criterion1, criterion2, thresholds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use crate::trace::{Conservation, Route};

    fn record(
        id: u64,
        parent: Option<u64>,
        created: f64,
        completed: Option<f64>,
        status: RequestStatus,
    ) -> RequestRecord {
        RequestRecord {
            id,
            parent_id: parent,
            qos_class: "data".into(),
            size: 1.0,
            created_at: created,
            dispatched_at: Some(created),
            completed_at: completed,
            route: Some(Route::Local),
            status,
        }
    }

    fn trace_with(records: Vec<RequestRecord>) -> Trace {
        let completed = records.iter().filter(|r| r.status == RequestStatus::Completed).count();
        let dropped = records.len() - completed;
        Trace {
            epoch_samples: vec![],
            request_log: records,
            event_count: 0,
            conservation: Conservation {
                generated: (completed + dropped) as u64,
                completed: completed as u64,
                dropped: dropped as u64,
                in_flight: 0,
            },
        }
    }

    #[test]
    fn raw_latency_simple() {
        let t = trace_with(vec![record(0, None, 1.0, Some(3.0), RequestStatus::Completed)]);
        let s = latency_samples(&t, false).unwrap();
        assert_eq!(s.samples, vec![2.0]);
        assert_eq!(s.excluded, 0);
    }

    #[test]
    fn family_latency_uses_first_completion() {
        // Original dropped; its duplicate completes 5 s after the original
        // was created.
        let t = trace_with(vec![
            record(0, None, 1.0, None, RequestStatus::Dropped),
            record(1, Some(0), 3.0, Some(6.0), RequestStatus::Completed),
        ]);
        let s = latency_samples(&t, true).unwrap();
        assert_eq!(s.samples, vec![5.0]);
    }

    #[test]
    fn all_dropped_is_empty_error() {
        let t = trace_with(vec![record(0, None, 1.0, None, RequestStatus::Dropped)]);
        assert!(matches!(latency_samples(&t, false), Err(MetricsError::EmptySamples(_))));
        assert!(matches!(latency_samples(&t, true), Err(MetricsError::EmptySamples(_))));
    }

    #[test]
    fn histogram_single_bin() {
        let h = build_histogram(&[1.0, 1.0, 1.0], 1, HistogramRange::Auto).unwrap();
        assert_eq!(h.counts, vec![3]);
        assert_eq!(h.underflow + h.overflow, 0);
    }

    #[test]
    fn histogram_explicit_edges() {
        let h = build_histogram(
            &[0.5, 1.5, 2.5],
            3,
            HistogramRange::Explicit { lo: 0.0, hi: 3.0 },
        )
        .unwrap();
        assert_eq!(h.bin_edges, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(h.counts, vec![1, 1, 1]);
    }

    #[test]
    fn histogram_conserves_count() {
        let mut rng = SplitMix64::new(3);
        let samples: Vec<f64> = (0..5000).map(|_| rng.next_f64() * 20.0 - 5.0).collect();
        let h = build_histogram(&samples, 17, HistogramRange::Explicit { lo: 0.0, hi: 10.0 })
            .unwrap();
        let total: u64 = h.counts.iter().sum::<u64>() + h.underflow + h.overflow;
        assert_eq!(total, samples.len() as u64);
    }

    #[test]
    fn tail_stats_constant_samples() {
        let s = tail_stats(&[3.0, 3.0, 3.0, 3.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.p95, 3.0);
        assert_eq!(s.p99, 3.0);
        assert_eq!(s.tail_mass_ratio, 0.0);
    }

    #[test]
    fn tail_stats_one_outlier_in_hundred() {
        let mut samples = vec![1.0; 99];
        samples.push(100.0);
        let s = tail_stats(&samples).unwrap();
        assert_eq!(s.median, 1.0);
        assert!((s.tail_mass_ratio - 0.01).abs() < 1e-12);
    }

    #[test]
    fn tail_stats_exponential_mass() {
        // For Exp(1): median = ln 2 and P(X > 2·median) = e^(−2 ln 2) = 0.25.
        let mut rng = SplitMix64::stream(99, "exp-tail");
        let samples: Vec<f64> = (0..100_000).map(|_| rng.next_exp(1.0)).collect();
        let s = tail_stats(&samples).unwrap();
        assert!((s.tail_mass_ratio - 0.25).abs() < 0.02, "got {}", s.tail_mass_ratio);
    }

    #[test]
    fn tail_stats_permutation_and_scale_invariance() {
        let samples = vec![5.0, 1.0, 9.0, 2.0, 7.0, 3.0, 8.0, 4.0, 6.0];
        let mut reversed = samples.clone();
        reversed.reverse();
        assert_eq!(tail_stats(&samples).unwrap(), tail_stats(&reversed).unwrap());
        let scaled: Vec<f64> = samples.iter().map(|s| s * 3.5).collect();
        let a = tail_stats(&samples).unwrap();
        let b = tail_stats(&scaled).unwrap();
        assert!((b.median - 3.5 * a.median).abs() < 1e-12);
        assert!((b.p99 - 3.5 * a.p99).abs() < 1e-12);
        assert_eq!(a.tail_mass_ratio, b.tail_mass_ratio);
    }

    #[test]
    fn percentiles_are_monotone() {
        let mut rng = SplitMix64::new(8);
        for _ in 0..50 {
            let samples: Vec<f64> = (0..200).map(|_| rng.next_f64() * 100.0).collect();
            let s = tail_stats(&samples).unwrap();
            assert!(s.median <= s.p95);
            assert!(s.p95 <= s.p99);
        }
    }

    #[test]
    fn identical_traces_give_zero_changes() {
        let t = trace_with(vec![
            record(0, None, 0.0, Some(1.0), RequestStatus::Completed),
            record(1, None, 1.0, Some(2.5), RequestStatus::Completed),
        ]);
        let r = criteria_report(&t, &t, CriteriaThresholds::default()).unwrap();
        assert_eq!(r.criterion1.relative_change, 0.0);
        assert!(r.criterion1.pass);
        assert_eq!(r.criterion2.dup_reduction, 0.0);
        assert_eq!(r.criterion2.tail_mass_reduction, 0.0);
        assert!(!r.criterion2.pass);
    }

    #[test]
    fn dup_reduction_arithmetic() {
        let mk = |dups: u64| {
            let mut records = vec![record(0, None, 0.0, Some(1.0), RequestStatus::Completed)];
            for i in 0..dups {
                records.push(record(1 + i, Some(0), 0.5, Some(1.5), RequestStatus::Completed));
            }
            trace_with(records)
        };
        let r = criteria_report(&mk(100), &mk(70), CriteriaThresholds::default()).unwrap();
        assert!((r.criterion2.dup_reduction - 0.30).abs() < 1e-12);
    }
}
