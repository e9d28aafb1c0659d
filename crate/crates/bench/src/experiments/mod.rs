//! Experiment definitions.

use std::fs;
use std::path::PathBuf;

use gard_core::map::MotionRestrictionMap;
use gard_core::session::{run_session, Session, SessionConfig, SessionTrace, SoftMaps};
use gard_core::user::ForceSource;

use crate::report::ExperimentReport;
use crate::{BenchError, Result};

mod complexity;
mod dynamics;
mod oracles;
mod powered;
mod safety;

pub use complexity::{complexity, ComplexityOptions};
pub use dynamics::{admittance_ramp, spring_characteristic, spring_profile_1d, mass_sweep, noise_robustness};
pub use oracles::oracle_equivalence;
pub use powered::{band_following, non_accumulation, reconvergence};
pub use safety::{confinement, mode_equivalence};

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub seed: u64,
    /// Directory for reports and trace files; nothing is written when unset.
    pub out: Option<PathBuf>,
}

impl Options {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, out: None }
    }
}

/// Experiments runnable by name from the command line.
pub const NAMED: [&str; 11] = [
    "fig5",
    "fig6",
    "non_accumulation",
    "reconvergence",
    "admittance",
    "table2",
    "table3",
    "fig10",
    "complexity",
    "safety",
    "oracles",
];

pub fn run_named(name: &str, opts: &Options) -> Result<Vec<ExperimentReport>> {
    Ok(match name {
        "fig5" => vec![spring_profile_1d()?],
        "fig6" => vec![band_following(opts)?],
        "non_accumulation" => vec![non_accumulation(opts)?],
        "reconvergence" => vec![reconvergence(opts)?],
        "admittance" => vec![admittance_ramp()?],
        "table2" => vec![mass_sweep(opts)?],
        "table3" => vec![noise_robustness(opts)?],
        "fig10" => vec![spring_characteristic(opts)?],
        "complexity" => vec![complexity(opts, &ComplexityOptions::default())?],
        "safety" => vec![mode_equivalence(opts)?, confinement(opts, 1_000_000)?],
        "oracles" => vec![oracle_equivalence(opts.seed)?],
        other => return Err(BenchError::UnknownExperiment(other.into())),
    })
}

pub(crate) fn simulate(
    cfg: SessionConfig,
    map: MotionRestrictionMap,
    soft: Option<SoftMaps>,
    steps: u64,
    user: &mut dyn ForceSource,
) -> Result<SessionTrace> {
    let mut session = match soft {
        Some(s) => Session::with_soft_maps(cfg, map, Some(s))?,
        None => Session::new(cfg, map)?,
    };
    Ok(run_session(&mut session, steps, user, [])?)
}

/// Stores `trace` under `<out>/traces/` and lists it in the report.
pub(crate) fn keep_trace(opts: &Options, report: &mut ExperimentReport, name: &str, trace: &SessionTrace) -> Result<()> {
    let Some(out) = &opts.out else {
        return Ok(());
    };
    let dir = out.join("traces");
    fs::create_dir_all(&dir).map_err(|e| BenchError::io(&dir, e))?;
    let rel = format!("traces/{}_{}.csv", report.id, name);
    let path = out.join(&rel);
    let file = fs::File::create(&path).map_err(|e| BenchError::io(&path, e))?;
    trace
        .write_csv(std::io::BufWriter::new(file))
        .map_err(|e| BenchError::io(&path, e))?;
    report.traces.push(rel);
    Ok(())
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r_squared)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let pts: Vec<_> = (0..10).map(|i| (i as f64, 3.0 * i as f64 - 2.0)).collect();
        let (m, b, r2) = linear_fit(&pts);
        assert!((m - 3.0).abs() < 1e-12 && (b + 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
