//! Current-state operation latency as a function of version list length.

use std::hint::black_box;
use std::time::Instant;

use chronocas::{Camera, EpochManager, VersionedCas};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyConfig {
    /// Version list lengths to measure at; the first one is the reference.
    pub versions: Vec<u64>,
    pub batches: usize,
    pub batch_size: usize,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            versions: vec![10, 1_000_000],
            batches: 1_000,
            batch_size: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyPoint {
    pub versions: u64,
    /// Operations timed per kind.
    pub ops: u64,
    pub read_median_ns: f64,
    pub cas_median_ns: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub points: Vec<LatencyPoint>,
    /// Median at the longest list over median at the reference length.
    pub read_ratio: f64,
    pub cas_ratio: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Builds an object with `versions` distinct versions, all kept alive by a
/// pinned guard, then times batches of reads and of successful CASes.
pub fn measure_point(versions: u64, batches: usize, batch_size: usize) -> LatencyPoint {
    let cam = Camera::new();
    let mgr = EpochManager::new();
    let h = mgr.register();
    let g = h.pin();
    let obj = VersionedCas::new(0u64, &cam);
    for v in 1..versions {
        assert!(obj.compare_and_swap(v - 1, v, &cam, &g));
        cam.take_snapshot();
    }
    let mut cur = versions - 1;
    let mut reads = Vec::with_capacity(batches);
    let mut cases = Vec::with_capacity(batches);
    for _ in 0..batches {
        let t = Instant::now();
        for _ in 0..batch_size {
            black_box(obj.read(&cam, &g));
        }
        reads.push(t.elapsed().as_nanos() as f64 / batch_size as f64);
        let t = Instant::now();
        for _ in 0..batch_size {
            black_box(obj.compare_and_swap(cur, cur + 1, &cam, &g));
            cur += 1;
        }
        cases.push(t.elapsed().as_nanos() as f64 / batch_size as f64);
    }
    assert_eq!(obj.read(&cam, &g), cur);
    LatencyPoint {
        versions,
        ops: (batches * batch_size) as u64,
        read_median_ns: median(reads),
        cas_median_ns: median(cases),
    }
}

pub fn latency(cfg: &LatencyConfig) -> LatencyReport {
    assert!(!cfg.versions.is_empty() && cfg.versions.iter().all(|&v| v >= 1));
    let points: Vec<LatencyPoint> = cfg
        .versions
        .iter()
        .map(|&v| measure_point(v, cfg.batches, cfg.batch_size))
        .collect();
    let (first, last) = (&points[0], &points[points.len() - 1]);
    LatencyReport {
        read_ratio: last.read_median_ns / first.read_median_ns,
        cas_ratio: last.cas_median_ns / first.cas_median_ns,
        points,
    }
}
