//! Summary statistics and the metrics table.

use std::io::Write;

use serde::{Deserialize, Serialize};

use causalkv::Protocol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
}

/// Nearest-rank percentile of sorted data, `q` in `(0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Some(Summary {
            count: n,
            mean: sorted.iter().sum::<f64>() / n as f64,
            median,
            p90: percentile(&sorted, 0.90),
            p99: percentile(&sorted, 0.99),
        })
    }
}

/// Least-squares slope of `y` against `x`.
pub fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub protocol: Protocol,
    pub preset: String,
    pub param: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rows: Vec<MetricRow>,
}

impl Metrics {
    pub fn push(&mut self, protocol: Protocol, preset: &str, param: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            protocol,
            preset: preset.to_string(),
            param: param.to_string(),
            metric: metric.to_string(),
            value,
        });
    }

    /// Adds `{metric}.count`, `.mean`, `.median`, `.p90` and `.p99`. Empty
    /// series only get a zero count.
    pub fn push_summary(&mut self, protocol: Protocol, preset: &str, param: &str, metric: &str, values: &[f64]) {
        let Some(s) = Summary::of(values) else {
            self.push(protocol, preset, param, &format!("{metric}.count"), 0.0);
            return;
        };
        for (name, v) in [
            ("count", s.count as f64),
            ("mean", s.mean),
            ("median", s.median),
            ("p90", s.p90),
            ("p99", s.p99),
        ] {
            self.push(protocol, preset, param, &format!("{metric}.{name}"), v);
        }
    }

    pub fn get(&self, protocol: Protocol, param: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.protocol == protocol && r.param == param && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}
