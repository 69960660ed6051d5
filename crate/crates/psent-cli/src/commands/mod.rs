//! Subcommand implementations for the `psent` binary.
//!
//! Each command takes its parsed arguments plus the resolved [`RunConfig`]
//! and returns `anyhow::Result<()>`; `main` turns an error into a
//! machine-readable record on stderr and a nonzero exit status.

pub mod bench;
pub mod evaluate;
pub mod featurize;
pub mod infer;
pub mod label;
pub mod simulate;
pub mod train;

use psent_core::signal::SensorKind;

/// Parse a comma-separated sensor list; `all` expands to every kind.
pub fn parse_sensor_list(s: &str) -> anyhow::Result<Vec<SensorKind>> {
    if s.trim() == "all" {
        return Ok(SensorKind::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let kind = SensorKind::parse(part)
            .map_err(|_| anyhow::anyhow!("unknown sensor {part}"))?;
        if out.contains(&kind) {
            anyhow::bail!("sensor {part} listed twice");
        }
        out.push(kind);
    }
    if out.is_empty() {
        anyhow::bail!("sensor list is empty");
    }
    Ok(out)
}

/// Directory tag for a sensor combination: kinds joined by `+` in the
/// order given (channel order is meaningful to the model stem).
pub fn sensor_tag(kinds: &[SensorKind]) -> String {
    kinds
        .iter()
        .map(|k| k.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

/// Percentile by linear interpolation on a sorted copy (p in [0, 100]).
pub fn percentile_ms(samples: &[f64], p: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
