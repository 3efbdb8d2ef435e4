//! Runs a preset for both protocols and turns the runs into metrics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use causalkv::checker::{self, CheckError, Verdict};
use causalkv::sim::trace::write_jsonl;
use causalkv::sim::{
    simulate, ClientSpec, Latency, LinkSpec, OpRecord, RunResult, SimConfig, SimError, SlowServer,
};
use causalkv::{Op, Outcome, Protocol, ReplicaId, Topology};

use crate::metrics::Metrics;
use crate::preset::{Preset, PutSkew, QueryAmp, RotxSlow, Soak, Visibility};
use crate::workload::{
    amplified_request, key_space, keys_on, Counter, HotKeyReader, Mixed, RoundRobinPuts, TimedWriter,
};

const MS: u64 = 1_000;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("{protocol} {param}: {source}")]
    Sim {
        protocol: Protocol,
        param: String,
        source: SimError,
    },
    #[error("{protocol} {param}: {source}")]
    Check {
        protocol: Protocol,
        param: String,
        source: CheckError,
    },
}

/// One simulation of one protocol at one parameter point.
#[derive(Debug)]
pub struct CaseRun {
    pub protocol: Protocol,
    pub param: String,
    pub result: RunResult,
    pub verdict: Verdict,
}

#[derive(Debug)]
pub struct Report {
    pub preset: Preset,
    pub seed: u64,
    pub metrics: Metrics,
    pub runs: Vec<CaseRun>,
}

#[derive(Debug, Serialize)]
struct RunVerdict<'a> {
    protocol: Protocol,
    param: &'a str,
    #[serde(flatten)]
    verdict: &'a Verdict,
}

#[derive(Debug, Serialize)]
struct VerdictFile<'a> {
    preset: String,
    seed: u64,
    pass: bool,
    runs: Vec<RunVerdict<'a>>,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.runs.iter().all(|r| r.verdict.pass)
    }

    pub fn write_trace<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.runs {
            write_jsonl(&mut w, &r.result.trace)?;
        }
        w.flush()
    }

    pub fn verdict_json(&self) -> String {
        let file = VerdictFile {
            preset: self.preset.name().to_string(),
            seed: self.seed,
            pass: self.pass(),
            runs: self
                .runs
                .iter()
                .map(|r| RunVerdict {
                    protocol: r.protocol,
                    param: &r.param,
                    verdict: &r.verdict,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("verdict serializes")
    }
}

struct Runner {
    preset: String,
    metrics: Metrics,
    runs: Vec<CaseRun>,
}

impl Runner {
    fn case(
        &mut self,
        protocol: Protocol,
        param: String,
        mut cfg: SimConfig,
        clients: Vec<ClientSpec>,
    ) -> Result<&CaseRun, ExperimentError> {
        cfg.protocol = protocol;
        let result = simulate(&cfg, clients).map_err(|source| ExperimentError::Sim {
            protocol,
            param: param.clone(),
            source,
        })?;
        let verdict = checker::check(&result.trace).map_err(|source| ExperimentError::Check {
            protocol,
            param: param.clone(),
            source,
        })?;
        let s = &result.stats;
        let m = &mut self.metrics;
        let p = &self.preset;
        m.push(protocol, p, &param, "ops", result.ops.len() as f64);
        m.push(protocol, p, &param, "put_deferrals", s.put_waits.len() as f64);
        m.push(protocol, p, &param, "rotx_parked", s.rotx_parked as f64);
        m.push(protocol, p, &param, "max_counter", s.max_counter as f64);
        m.push(protocol, p, &param, "stability_violations", s.stability_violations.len() as f64);
        m.push(protocol, p, &param, "checker_pass", if verdict.pass { 1.0 } else { 0.0 });
        self.runs.push(CaseRun {
            protocol,
            param,
            result,
            verdict,
        });
        Ok(self.runs.last().expect("pushed"))
    }

    fn summary(&mut self, protocol: Protocol, param: &str, metric: &str, values: &[f64]) {
        self.metrics
            .push_summary(protocol, &self.preset, param, metric, values);
    }
}

fn ms(us: u64) -> f64 {
    us as f64 / MS as f64
}

fn one_way_us(rtt_ms: f64) -> u64 {
    (rtt_ms * 1_000.0 / 2.0).round() as u64
}

pub fn run(preset: &Preset, seed: u64) -> Result<Report, ExperimentError> {
    let mut r = Runner {
        preset: preset.name().to_string(),
        metrics: Metrics::default(),
        runs: Vec::new(),
    };
    match preset {
        Preset::PutSkew(p) => put_skew(&mut r, p, seed)?,
        Preset::QueryAmp(p) => query_amp(&mut r, p, seed)?,
        Preset::Visibility(p) => visibility(&mut r, p, seed)?,
        Preset::RotxSlow(p) => rotx_slow(&mut r, p, seed)?,
        Preset::Soak(p) => soak(&mut r, p, seed)?,
    }
    Ok(Report {
        preset: preset.clone(),
        seed,
        metrics: r.metrics,
        runs: r.runs,
    })
}

fn put_skew(r: &mut Runner, p: &PutSkew, seed: u64) -> Result<(), ExperimentError> {
    let topo = Topology::new(1, 2);
    let keys = vec![keys_on(topo, "k", 0, 1).remove(0), keys_on(topo, "k", 1, 1).remove(0)];
    for &skew in &p.skews_ms {
        for protocol in Protocol::ALL {
            let cfg = SimConfig {
                topology: topo,
                seed,
                skew_us: vec![0, -((skew * MS) as i64)],
                ..p.sim.clone()
            };
            let client = RoundRobinPuts {
                keys: keys.clone(),
                remaining: p.puts,
                next: 0,
            };
            let param = format!("skew_ms={skew}");
            let run = r.case(
                protocol,
                param.clone(),
                cfg,
                vec![ClientSpec::new(ReplicaId(0), p.start_ms * MS, client)],
            )?;
            let lat: Vec<f64> = run.result.ops.iter().map(|o| ms(o.latency_us())).collect();
            let wait: u64 = run.result.stats.put_waits.iter().map(|(_, w)| w).sum();
            let mean_wait = ms(wait) / run.result.ops.len().max(1) as f64;
            r.summary(protocol, &param, "put_latency_ms", &lat);
            r.metrics
                .push(protocol, &r.preset.clone(), &param, "put_wait_ms.mean", mean_wait);
        }
    }
    Ok(())
}

/// Request latency: first start to last end of each client's operations.
fn request_latencies(ops: &[OpRecord]) -> Vec<f64> {
    let mut spans: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for o in ops {
        let e = spans.entry(o.client).or_insert((o.start_us, o.end_us));
        e.0 = e.0.min(o.start_us);
        e.1 = e.1.max(o.end_us);
    }
    spans.values().map(|(s, e)| ms(e - s)).collect()
}

fn query_amp(r: &mut Runner, p: &QueryAmp, seed: u64) -> Result<(), ExperimentError> {
    let topo = Topology::new(1, 2);
    let keys = vec![keys_on(topo, "k", 0, 1).remove(0), keys_on(topo, "k", 1, 1).remove(0)];
    for &factor in &p.factors {
        let factor = factor.max(1);
        let requests = (p.total_puts / factor).max(1);
        for protocol in Protocol::ALL {
            let cfg = SimConfig {
                topology: topo,
                seed,
                skew_us: vec![0, -((p.skew_ms * MS) as i64)],
                ..p.sim.clone()
            };
            // Each request runs in its own session and starts one
            // partition further along.
            let clients = (0..requests)
                .map(|i| {
                    let at = p.start_ms * MS + u64::from(i) * u64::from(factor) * p.arrival_gap_ms * MS;
                    ClientSpec::new(ReplicaId(0), at, amplified_request(&keys, factor, i as usize))
                })
                .collect();
            let param = format!("factor={factor}");
            let run = r.case(protocol, param.clone(), cfg, clients)?;
            let lat = request_latencies(&run.result.ops);
            r.summary(protocol, &param, "request_latency_ms", &lat);
        }
    }
    Ok(())
}

/// For every PUT, how long until a client at another replica first read
/// it or something newer, measured from the PUT's completion.
fn visibility_latencies(ops: &[OpRecord]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in ops {
        let Outcome::Put { key, stamp } = &w.outcome else {
            continue;
        };
        let seen = ops
            .iter()
            .filter(|o| o.home != w.home && o.end_us >= w.end_us)
            .find(|o| matches!(&o.outcome, Outcome::Get { key: k, item: Some(s), .. } if k == key && s >= stamp));
        if let Some(o) = seen {
            out.push(ms(o.end_us - w.end_us));
        }
    }
    out
}

fn visibility(r: &mut Runner, p: &Visibility, seed: u64) -> Result<(), ExperimentError> {
    let topo = Topology::new(3, 1);
    let key = keys_on(topo, "counter", 0, 1).remove(0);
    for site in &p.sites {
        for protocol in Protocol::ALL {
            let link = |a, b, rtt| LinkSpec {
                a,
                b,
                latency: Latency::constant(one_way_us(rtt)),
            };
            let cfg = SimConfig {
                topology: topo,
                seed,
                links: vec![
                    link(0, 1, p.rtt_ab_ms),
                    link(0, 2, site.rtt_a_ms),
                    link(1, 2, site.rtt_b_ms),
                ],
                ..p.sim.clone()
            };
            let counter = |parity| Counter {
                key: key.clone(),
                parity,
                target: p.target,
                poll_us: p.poll_ms * MS,
            };
            let clients = vec![
                ClientSpec::new(ReplicaId(0), p.start_ms * MS, counter(1)),
                ClientSpec::new(ReplicaId(1), p.start_ms * MS, counter(0)),
            ];
            let param = format!("c={}", site.name);
            let run = r.case(protocol, param.clone(), cfg, clients)?;
            let ops = &run.result.ops;
            let vis = visibility_latencies(ops);
            let first = ops.iter().map(|o| o.start_us).min().unwrap_or(0);
            let last = ops.iter().map(|o| o.end_us).max().unwrap_or(0);
            let puts = ops.iter().filter(|o| matches!(o.op, Op::Put { .. })).count();
            let rate = if last > first {
                puts as f64 / ((last - first) as f64 / 1e6)
            } else {
                0.0
            };
            r.summary(protocol, &param, "visibility_ms", &vis);
            r.metrics
                .push(protocol, &r.preset.clone(), &param, "updates_per_s", rate);
        }
    }
    Ok(())
}

fn rotx_slow(r: &mut Runner, p: &RotxSlow, seed: u64) -> Result<(), ExperimentError> {
    let topo = Topology::new(p.replicas, p.partitions);
    let keys = key_space(topo, "k", p.keys_per_partition);
    for &slow in &p.slowdowns_ms {
        for protocol in Protocol::ALL {
            let cfg = SimConfig {
                topology: topo,
                seed,
                slow_servers: if slow > 0 {
                    vec![SlowServer {
                        replica: 0,
                        partition: p.slow_partition,
                        delay_us: slow * MS,
                        only_to: None,
                    }]
                } else {
                    Vec::new()
                },
                ..p.sim.clone()
            };
            let start = p.start_ms * MS;
            let until = start + (p.write_base_ms + p.write_per_slow * slow) * MS;
            let mut clients: Vec<ClientSpec> = (0..p.writers)
                .map(|_| {
                    ClientSpec::new(
                        ReplicaId(0),
                        start,
                        TimedWriter {
                            keys: keys.clone(),
                            until_us: until,
                            gap_us: p.write_gap_ms * MS,
                            written: 0,
                        },
                    )
                })
                .collect();
            clients.extend((0..p.readers).map(|i| {
                ClientSpec::new(
                    ReplicaId(0),
                    start + 200 * MS + u64::from(i) * MS,
                    HotKeyReader {
                        keys: keys.clone(),
                        remaining: p.ops_per_reader,
                        size: p.rotx_size,
                        think_us: p.think_ms * MS,
                    },
                )
            }));
            let param = format!("slow_ms={slow}");
            let run = r.case(protocol, param.clone(), cfg, clients)?;
            let (mut involving, mut other) = (Vec::new(), Vec::new());
            for o in &run.result.ops {
                if let Op::Rotx { keys } = &o.op {
                    let hits = keys
                        .iter()
                        .any(|k| topo.partition_of(k).0 == p.slow_partition);
                    if hits {
                        involving.push(ms(o.latency_us()));
                    } else {
                        other.push(ms(o.latency_us()));
                    }
                }
            }
            r.summary(protocol, &param, "rotx_latency_ms.involving", &involving);
            r.summary(protocol, &param, "rotx_latency_ms.non_involving", &other);
        }
    }
    Ok(())
}

/// Soak configuration for one seed: skews spread evenly over
/// `[-max_skew, +max_skew]` in a seed-dependent order.
pub fn soak_config(p: &Soak, seed: u64) -> SimConfig {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let topo = Topology::new(p.replicas, p.partitions);
    let n = topo.server_count();
    let max = (p.max_skew_ms * MS) as i64;
    let mut skews: Vec<i64> = (0..n)
        .map(|i| {
            if n == 1 {
                0
            } else {
                -max + 2 * max * i as i64 / (n as i64 - 1)
            }
        })
        .collect();
    skews.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    SimConfig {
        topology: topo,
        seed,
        skew_us: skews,
        default_link: Latency {
            base_us: p.link_base_ms * MS,
            jitter_us: p.link_jitter_ms * MS,
        },
        ..p.sim.clone()
    }
}

pub fn soak_clients(p: &Soak) -> Vec<ClientSpec> {
    let topo = Topology::new(p.replicas, p.partitions);
    let keys = key_space(topo, "k", p.keys_per_partition);
    (0..p.replicas * p.clients_per_replica)
        .map(|i| {
            ClientSpec::new(
                ReplicaId(i % p.replicas),
                (p.max_skew_ms * 2 + 50) * MS + u64::from(i) * 300,
                Mixed {
                    keys: keys.clone(),
                    remaining: p.ops_per_client,
                    max_think_us: p.max_think_ms * MS,
                    written: 0,
                },
            )
        })
        .collect()
}

fn soak(r: &mut Runner, p: &Soak, seed: u64) -> Result<(), ExperimentError> {
    for protocol in Protocol::ALL {
        let param = format!("seed={seed}");
        let run = r.case(protocol, param.clone(), soak_config(p, seed), soak_clients(p))?;
        let lat: Vec<f64> = run.result.ops.iter().map(|o| ms(o.latency_us())).collect();
        let v = &run.verdict;
        let counts = [
            ("causal_violations", v.causal.len()),
            ("rotx_violations", v.rotx.len()),
            ("convergence_violations", v.convergence.len()),
        ];
        r.summary(protocol, &param, "op_latency_ms", &lat);
        let preset = r.preset.clone();
        for (name, n) in counts {
            r.metrics.push(protocol, &preset, &param, name, n as f64);
        }
    }
    Ok(())
}
