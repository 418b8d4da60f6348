//! Energy, wall-time and peak-memory probe for a child command.
//!
//! Cumulative energy counters are sampled at a fixed interval while the
//! command runs. Counters wrap at their advertised range; a reading lower
//! than its predecessor is taken to have wrapped exactly once. No idle
//! baseline is subtracted.

mod source;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::experiment::{Configuration, Environment};
use crate::ingest::{LogDocument, Sample, SCHEMA_VERSION};
use crate::metric::{POWER_DRAW, RUNNING_TIME};

pub use source::{
    EnergyDomain, EnergySource, MockEnergySource, PowercapSource, UnavailableSource,
    DEFAULT_POWERCAP_ROOT,
};

pub const DEFAULT_INTERVAL: Duration = Duration::from_millis(100);
pub const FLAG_ENERGY_UNAVAILABLE: &str = "energy_unavailable";

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("no command given")]
    EmptyCommand,
    #[error("cannot start `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("energy counters unavailable: {0}")]
    CounterUnavailable(String),
    #[error("waiting for child failed: {0}")]
    Wait(std::io::Error),
}

/// One sampling point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasurementSample {
    /// Nanoseconds since the session started; strictly increasing.
    pub timestamp_ns: u64,
    /// Raw cumulative reading per energy domain, empty without counters.
    pub energy_uj: Vec<u64>,
    pub resident_memory: Option<u64>,
}

/// Energy consumed between two readings of a counter with range `max_range`.
pub fn counter_delta(prev: u64, cur: u64, max_range: u64) -> u64 {
    if cur >= prev {
        cur - prev
    } else {
        max_range.saturating_sub(prev) + cur
    }
}

/// Running wraparound-corrected energy total per domain.
#[derive(Debug, Clone)]
pub struct EnergyAccumulator {
    ranges: Vec<u64>,
    last: Option<Vec<u64>>,
    totals: Vec<u128>,
}

impl EnergyAccumulator {
    pub fn new(domains: &[EnergyDomain]) -> Self {
        Self {
            ranges: domains.iter().map(|d| d.max_range_uj).collect(),
            last: None,
            totals: vec![0; domains.len()],
        }
    }

    pub fn push(&mut self, readings: &[u64]) {
        if let Some(last) = &self.last {
            for (i, (&prev, &cur)) in last.iter().zip(readings).enumerate() {
                self.totals[i] += counter_delta(prev, cur, self.ranges[i]) as u128;
            }
        }
        self.last = Some(readings.to_vec());
    }

    pub fn per_domain_uj(&self) -> &[u128] {
        &self.totals
    }

    pub fn total_uj(&self) -> u128 {
        self.totals.iter().sum()
    }
}

/// Result of a probe run.
#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub command: Vec<String>,
    pub exit_code: Option<i32>,
    /// Wall seconds between the first and last sample.
    pub running_time_s: f64,
    pub domains: Vec<String>,
    pub energy_uj: Option<u128>,
    pub power_draw_w: Option<f64>,
    pub peak_memory_bytes: Option<u64>,
    pub interval_ms: u64,
    pub samples: Vec<MeasurementSample>,
    pub warnings: Vec<String>,
}

/// Corrected energy and mean power over a sample trace.
pub fn summarize_energy(
    samples: &[MeasurementSample],
    domains: &[EnergyDomain],
) -> Option<(u128, f64, f64)> {
    let (first, last) = (samples.first()?, samples.last()?);
    if domains.is_empty() || samples.iter().any(|s| s.energy_uj.len() != domains.len()) {
        return None;
    }
    let mut acc = EnergyAccumulator::new(domains);
    for s in samples {
        acc.push(&s.energy_uj);
    }
    let seconds = (last.timestamp_ns - first.timestamp_ns) as f64 / 1e9;
    if seconds.is_nan() || seconds <= 0.0 {
        return None;
    }
    let energy = acc.total_uj();
    Some((energy, seconds, energy as f64 / 1e6 / seconds))
}

/// Which counters this host exposes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub energy: bool,
    pub energy_domains: Vec<String>,
    pub memory: bool,
}

pub fn probe_available() -> Capabilities {
    probe_available_at(Path::new(DEFAULT_POWERCAP_ROOT))
}

pub fn probe_available_at(powercap_root: &Path) -> Capabilities {
    let domains = PowercapSource::discover(powercap_root)
        .map(|s| s.domains().iter().map(|d| d.name.clone()).collect())
        .unwrap_or_default();
    capabilities(domains)
}

/// Capabilities when energy comes from `source`.
pub fn probe_available_with(source: &mut dyn EnergySource) -> Capabilities {
    let domains = match source.read_uj() {
        Ok(_) => source.domains().iter().map(|d| d.name.clone()).collect(),
        Err(_) => Vec::new(),
    };
    capabilities(domains)
}

fn capabilities(energy_domains: Vec<String>) -> Capabilities {
    Capabilities {
        energy: !energy_domains.is_empty(),
        energy_domains,
        memory: Path::new("/proc/self/status").exists(),
    }
}

fn resident_bytes(pid: u32) -> Option<u64> {
    let status = std::fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let line = status.lines().find(|l| l.starts_with("VmRSS:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

struct ChildExit {
    code: Option<i32>,
    max_rss_bytes: Option<u64>,
}

fn wait_child(pid: u32) -> Result<ChildExit, std::io::Error> {
    let mut status: libc::c_int = 0;
    // SAFETY: zeroed rusage is a valid value for the out parameter.
    let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
    loop {
        // SAFETY: pid is our own un-reaped child; both pointers are valid.
        let rc = unsafe { libc::wait4(pid as libc::pid_t, &mut status, 0, &mut usage) };
        if rc == pid as libc::pid_t {
            break;
        }
        let err = std::io::Error::last_os_error();
        if err.kind() != std::io::ErrorKind::Interrupted {
            return Err(err);
        }
    }
    let code = if libc::WIFEXITED(status) {
        Some(libc::WEXITSTATUS(status))
    } else {
        None
    };
    // ru_maxrss is in kilobytes on Linux.
    let max_rss_bytes = (usage.ru_maxrss > 0).then(|| usage.ru_maxrss as u64 * 1024);
    Ok(ChildExit {
        code,
        max_rss_bytes,
    })
}

/// Runs `command` to completion while sampling `source` every `interval`.
///
/// Energy is omitted (with a warning) when the source cannot be read; wall
/// time and memory are always reported.
pub fn measure_run(
    command: &[String],
    interval: Duration,
    source: &mut dyn EnergySource,
) -> Result<Measurement, MeasureError> {
    let (program, args) = command.split_first().ok_or(MeasureError::EmptyCommand)?;
    let interval = interval.max(Duration::from_millis(1));
    let mut warnings = Vec::new();

    let domains = source.domains().to_vec();
    let mut energy_ok = !domains.is_empty();
    if !energy_ok {
        warnings.push("energy counters unavailable: source has no domains".to_owned());
    }

    let start = Instant::now();
    let mut samples: Vec<MeasurementSample> = Vec::new();
    let mut take_sample = |pid: Option<u32>, energy_ok: &mut bool, warnings: &mut Vec<String>| {
        let energy_uj = if *energy_ok {
            match source.read_uj() {
                Ok(r) => r,
                Err(e) => {
                    *energy_ok = false;
                    warnings.push(e.to_string());
                    Vec::new()
                }
            }
        } else {
            Vec::new()
        };
        let mut ts = start.elapsed().as_nanos() as u64;
        if let Some(prev) = samples.last() {
            ts = ts.max(prev.timestamp_ns + 1);
        }
        samples.push(MeasurementSample {
            timestamp_ns: ts,
            energy_uj,
            resident_memory: pid.and_then(resident_bytes),
        });
    };

    take_sample(None, &mut energy_ok, &mut warnings);
    let child = Command::new(program)
        .args(args)
        .spawn()
        .map_err(|source| MeasureError::Spawn {
            command: command.join(" "),
            source,
        })?;
    let pid = child.id();
    let (tx, rx) = mpsc::channel();
    let waiter = thread::spawn(move || {
        let _ = tx.send(wait_child(pid));
    });

    let exit = loop {
        match rx.recv_timeout(interval) {
            Ok(result) => break result,
            Err(mpsc::RecvTimeoutError::Timeout) => {
                take_sample(Some(pid), &mut energy_ok, &mut warnings)
            }
            Err(mpsc::RecvTimeoutError::Disconnected) => {
                break Err(std::io::Error::other("wait thread exited"))
            }
        }
    };
    take_sample(None, &mut energy_ok, &mut warnings);
    let _ = waiter.join();
    // The child was reaped by wait4; dropping the handle does not wait again.
    drop(child);
    let exit = exit.map_err(MeasureError::Wait)?;

    let first = samples.first().map_or(0, |s| s.timestamp_ns);
    let last = samples.last().map_or(0, |s| s.timestamp_ns);
    let running_time_s = (last - first) as f64 / 1e9;

    let (energy_uj, power_draw_w) = match energy_ok
        .then(|| summarize_energy(&samples, &domains))
        .flatten()
    {
        Some((e, _, p)) => (Some(e), Some(p)),
        None => (None, None),
    };
    if energy_ok && energy_uj.is_none() {
        warnings.push("energy trace too short to compute power".to_owned());
    }
    if exit.code != Some(0) {
        warnings.push(format!("command exited with status {:?}", exit.code));
    }

    let sampled_peak = samples.iter().filter_map(|s| s.resident_memory).max();
    let peak_memory_bytes = match (sampled_peak, exit.max_rss_bytes) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };

    Ok(Measurement {
        command: command.to_vec(),
        exit_code: exit.code,
        running_time_s,
        domains: domains.iter().map(|d| d.name.clone()).collect(),
        energy_uj,
        power_draw_w,
        peak_memory_bytes,
        interval_ms: interval.as_millis() as u64,
        samples,
        warnings,
    })
}

impl Measurement {
    /// Log document carrying the measured resource metrics. Probe details
    /// (energy, memory, exit code, warnings) go under the `probe` key.
    pub fn to_log_document(
        &self,
        id: &str,
        configuration: Configuration,
        environment: Environment,
    ) -> LogDocument {
        let mut measurements = BTreeMap::new();
        measurements.insert(
            RUNNING_TIME.to_owned(),
            vec![Sample::new(self.running_time_s)],
        );
        let mut flags = BTreeSet::new();
        match self.power_draw_w {
            Some(p) => {
                measurements.insert(POWER_DRAW.to_owned(), vec![Sample::new(p)]);
            }
            None => {
                flags.insert(FLAG_ENERGY_UNAVAILABLE.to_owned());
            }
        }
        let probe = serde_json::json!({
            "command": self.command,
            "exit_code": self.exit_code,
            "interval_ms": self.interval_ms,
            "domains": self.domains,
            "energy_uj": self.energy_uj.map(|e| e as u64),
            "peak_memory_bytes": self.peak_memory_bytes,
            "samples": self.samples.len(),
            "warnings": self.warnings,
        });
        LogDocument {
            schema_version: SCHEMA_VERSION,
            id: id.to_owned(),
            configuration,
            environment,
            measurements,
            flags,
            extra: [("probe".to_owned(), probe)].into(),
        }
    }

    /// Copies the measured metrics into an existing document, replacing
    /// earlier values for the same keys.
    pub fn merge_into(&self, doc: &mut LogDocument) {
        let fragment =
            self.to_log_document(&doc.id, doc.configuration.clone(), doc.environment.clone());
        doc.measurements.extend(fragment.measurements);
        doc.flags.extend(fragment.flags);
        doc.extra.extend(fragment.extra);
    }
}
