use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::MeasureError;

pub const DEFAULT_POWERCAP_ROOT: &str = "/sys/class/powercap";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyDomain {
    pub name: String,
    /// Counter range in microjoules; readings wrap back to zero here.
    pub max_range_uj: u64,
}

/// Cumulative energy counters, one per domain.
pub trait EnergySource: Send {
    fn domains(&self) -> &[EnergyDomain];

    /// Current cumulative reading of every domain, in microjoules.
    fn read_uj(&mut self) -> Result<Vec<u64>, MeasureError>;
}

/// Top-level zones of the Linux power-capping filesystem
/// (`<root>/intel-rapl:N/energy_uj`). Sub-zones are skipped because their
/// energy is already contained in the parent package.
#[derive(Debug)]
pub struct PowercapSource {
    zones: Vec<PathBuf>,
    domains: Vec<EnergyDomain>,
}

fn read_trimmed(path: &Path) -> Result<String, MeasureError> {
    fs::read_to_string(path)
        .map(|s| s.trim().to_owned())
        .map_err(|e| MeasureError::CounterUnavailable(format!("{}: {e}", path.display())))
}

fn read_u64(path: &Path) -> Result<u64, MeasureError> {
    let text = read_trimmed(path)?;
    text.parse().map_err(|_| {
        MeasureError::CounterUnavailable(format!("{}: not an integer: {text:?}", path.display()))
    })
}

fn is_top_level_zone(name: &str) -> bool {
    match name.split_once(':') {
        Some((prefix, rest)) => prefix.ends_with("rapl") && !rest.contains(':'),
        None => false,
    }
}

impl PowercapSource {
    pub fn discover(root: &Path) -> Result<Self, MeasureError> {
        let entries = fs::read_dir(root)
            .map_err(|e| MeasureError::CounterUnavailable(format!("{}: {e}", root.display())))?;
        let mut zones: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .filter(|e| e.file_name().to_str().is_some_and(is_top_level_zone))
            .map(|e| e.path())
            .filter(|p| p.join("energy_uj").exists())
            .collect();
        zones.sort();
        if zones.is_empty() {
            return Err(MeasureError::CounterUnavailable(format!(
                "no energy zones under {}",
                root.display()
            )));
        }

        let mut domains = Vec::with_capacity(zones.len());
        for zone in &zones {
            let name = read_trimmed(&zone.join("name")).unwrap_or_else(|_| {
                zone.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            });
            let max_range_uj = read_u64(&zone.join("max_energy_range_uj"))?;
            // Fail now rather than mid-run when the counter is not readable.
            read_u64(&zone.join("energy_uj"))?;
            domains.push(EnergyDomain { name, max_range_uj });
        }
        Ok(Self { zones, domains })
    }
}

impl EnergySource for PowercapSource {
    fn domains(&self) -> &[EnergyDomain] {
        &self.domains
    }

    fn read_uj(&mut self) -> Result<Vec<u64>, MeasureError> {
        self.zones
            .iter()
            .map(|z| read_u64(&z.join("energy_uj")))
            .collect()
    }
}

/// Deterministic counters for tests and hosts without hardware counters.
#[derive(Debug)]
pub struct MockEnergySource {
    domains: Vec<EnergyDomain>,
    mode: MockMode,
}

#[derive(Debug)]
enum MockMode {
    /// Constant power since construction, wrapping at the domain range.
    Constant { watts: f64, start: Instant },
    /// Fixed reading sequence; the last reading repeats once exhausted.
    Scripted { readings: Vec<u64>, next: usize },
}

impl MockEnergySource {
    pub fn constant_power(watts: f64, max_range_uj: u64) -> Self {
        Self {
            domains: vec![EnergyDomain {
                name: "mock-package".into(),
                max_range_uj,
            }],
            mode: MockMode::Constant {
                watts,
                start: Instant::now(),
            },
        }
    }

    pub fn scripted(readings: Vec<u64>, max_range_uj: u64) -> Self {
        Self {
            domains: vec![EnergyDomain {
                name: "mock-package".into(),
                max_range_uj,
            }],
            mode: MockMode::Scripted { readings, next: 0 },
        }
    }
}

impl EnergySource for MockEnergySource {
    fn domains(&self) -> &[EnergyDomain] {
        &self.domains
    }

    fn read_uj(&mut self) -> Result<Vec<u64>, MeasureError> {
        let range = self.domains[0].max_range_uj.max(1);
        match &mut self.mode {
            MockMode::Constant { watts, start } => {
                let uj = (*watts * start.elapsed().as_secs_f64() * 1e6) as u64;
                Ok(vec![uj % range])
            }
            MockMode::Scripted { readings, next } => {
                let r = readings
                    .get(*next)
                    .or(readings.last())
                    .copied()
                    .ok_or_else(|| MeasureError::CounterUnavailable("empty script".into()))?;
                *next += 1;
                Ok(vec![r])
            }
        }
    }
}

/// Source for hosts without counters: every read fails.
#[derive(Debug, Default)]
pub struct UnavailableSource;

impl EnergySource for UnavailableSource {
    fn domains(&self) -> &[EnergyDomain] {
        &[]
    }

    fn read_uj(&mut self) -> Result<Vec<u64>, MeasureError> {
        Err(MeasureError::CounterUnavailable("no energy counters on this host".into()))
    }
}

#[cfg(test)]
pub(crate) fn fake_powercap(root: &Path, zones: &[(&str, &str, u64, u64)]) {
    for (dir, name, energy, range) in zones {
        let z = root.join(dir);
        fs::create_dir_all(&z).unwrap();
        fs::write(z.join("name"), format!("{name}\n")).unwrap();
        fs::write(z.join("energy_uj"), format!("{energy}\n")).unwrap();
        fs::write(z.join("max_energy_range_uj"), format!("{range}\n")).unwrap();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zone_names() {
        assert!(is_top_level_zone("intel-rapl:0"));
        assert!(is_top_level_zone("intel-rapl:1"));
        assert!(!is_top_level_zone("intel-rapl:0:1"));
        assert!(!is_top_level_zone("intel-rapl"));
        assert!(!is_top_level_zone("dtpm"));
    }

    #[test]
    fn discovers_top_level_zones_only() {
        let dir = tempfile::tempdir().unwrap();
        fake_powercap(
            dir.path(),
            &[
                ("intel-rapl:0", "package-0", 500, 262_143_328_850),
                ("intel-rapl:0:0", "core", 100, 262_143_328_850),
                ("intel-rapl:1", "package-1", 700, 262_143_328_850),
            ],
        );
        let mut src = PowercapSource::discover(dir.path()).unwrap();
        let names: Vec<&str> = src.domains().iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, ["package-0", "package-1"]);
        assert_eq!(src.read_uj().unwrap(), vec![500, 700]);
    }

    #[test]
    fn missing_tree_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            PowercapSource::discover(&dir.path().join("nope")),
            Err(MeasureError::CounterUnavailable(_))
        ));
        assert!(matches!(
            PowercapSource::discover(dir.path()),
            Err(MeasureError::CounterUnavailable(_))
        ));
    }

    #[test]
    fn scripted_mock_repeats_last() {
        let mut m = MockEnergySource::scripted(vec![1, 2], 10);
        let got: Vec<u64> = (0..4).map(|_| m.read_uj().unwrap()[0]).collect();
        assert_eq!(got, [1, 2, 2, 2]);
    }
}
