use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ClusterHandle, HarnessError};
use crate::consumer::{fetch_via, FetchOptions, FetchReport};
use crate::transport::{Link, UdpLink};
use crate::wire::Name;

/// How bench fetches reach the gateway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BenchVia {
    Udp,
    /// A fresh memory face per run with this one-way delay.
    Memory { delay_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub runs: usize,
    pub window: usize,
    pub rto_ms: u64,
    /// Run the warm fetches concurrently.
    pub parallel: bool,
    pub via: BenchVia,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            runs: 5,
            window: 16,
            rto_ms: 1000,
            parallel: false,
            via: BenchVia::Udp,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRun {
    pub run: usize,
    pub cold: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<FetchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Interests that reached producers during this run; absent for
    /// concurrent runs, where it cannot be attributed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub producer_interests: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub object_name: Name,
    pub window: usize,
    pub runs: Vec<BenchRun>,
    pub median_throughput_mbps: Option<f64>,
    pub cold_throughput_mbps: Option<f64>,
    pub warm_median_throughput_mbps: Option<f64>,
    /// Cold throughput over warm median throughput.
    pub cold_warm_ratio: Option<f64>,
    pub failed_runs: usize,
}

/// Median of the values; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

fn one_fetch(cluster: &ClusterHandle, name: &Name, opts: &BenchOptions) -> Result<FetchReport, HarnessError> {
    let fetch = FetchOptions {
        window: opts.window,
        rto_ms: opts.rto_ms,
        ..FetchOptions::default()
    };
    let mut link: Box<dyn Link> = match opts.via {
        BenchVia::Udp => {
            let gw = cluster
                .gateway_udp_addr()
                .ok_or_else(|| HarnessError::UnknownNode(cluster.gateway().to_string()))?;
            Box::new(UdpLink::connect(gw)?)
        }
        BenchVia::Memory { delay_ms } => Box::new(cluster.attach_consumer(Duration::from_millis(delay_ms))?),
    };
    Ok(fetch_via(link.as_mut(), name, &fetch)?.1)
}

fn finish(run: usize, cold: bool, result: Result<FetchReport, HarnessError>, producer: Option<u64>) -> BenchRun {
    match result {
        Ok(report) => BenchRun {
            run,
            cold,
            report: Some(report),
            error: None,
            producer_interests: producer,
        },
        Err(e) => BenchRun {
            run,
            cold,
            report: None,
            error: Some(e.to_string()),
            producer_interests: producer,
        },
    }
}

/// Fetches `name` `runs` times: the first run cold, the rest warm. A failed
/// run is recorded and the remaining runs still execute.
pub fn bench(cluster: &ClusterHandle, name: &Name, opts: &BenchOptions) -> BenchReport {
    let runs = opts.runs.max(1);
    let mut out = Vec::with_capacity(runs);

    let before = cluster.producer_interests();
    let first = one_fetch(cluster, name, opts);
    out.push(finish(1, true, first, Some(cluster.producer_interests() - before)));

    if opts.parallel {
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = (2..=runs)
                .map(|_| s.spawn(|| one_fetch(cluster, name, opts)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(HarnessError::Schema("bench run panicked".into()))))
                .collect()
        });
        for (i, r) in results.into_iter().enumerate() {
            out.push(finish(i + 2, false, r, None));
        }
    } else {
        for run in 2..=runs {
            let before = cluster.producer_interests();
            let r = one_fetch(cluster, name, opts);
            out.push(finish(run, false, r, Some(cluster.producer_interests() - before)));
        }
    }

    let tput = |cold: Option<bool>| -> Vec<f64> {
        out.iter()
            .filter(|r| cold.is_none_or(|c| r.cold == c))
            .filter_map(|r| r.report.as_ref().map(|rep| rep.throughput_mbps))
            .collect()
    };
    let cold = tput(Some(true)).first().copied();
    let warm = median(&tput(Some(false)));
    BenchReport {
        object_name: name.clone(),
        window: opts.window,
        median_throughput_mbps: median(&tput(None)),
        cold_throughput_mbps: cold,
        warm_median_throughput_mbps: warm,
        cold_warm_ratio: cold.zip(warm).map(|(c, w)| c / w),
        failed_runs: out.iter().filter(|r| r.report.is_none()).count(),
        runs: out,
    }
}
