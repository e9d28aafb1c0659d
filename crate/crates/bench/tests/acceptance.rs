//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.

use std::io::Write;

use gard_bench::experiments::{self, ComplexityOptions, Options};
use gard_bench::report::ExperimentReport;

struct Criterion {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn judge(name: &'static str, reports: &[&ExperimentReport], metrics: &[&str]) -> Criterion {
    let mut pass = true;
    let mut parts = Vec::new();
    for &m in metrics {
        let found = reports.iter().find_map(|r| r.get(m));
        match found {
            Some(metric) => {
                pass &= metric.pass;
                parts.push(format!("{m}={:.4}{}", metric.value, if metric.pass { "" } else { "!" }));
            }
            None => {
                pass = false;
                parts.push(format!("{m}=missing"));
            }
        }
    }
    Criterion {
        name,
        pass,
        detail: parts.join(" "),
    }
}

fn all_metrics(name: &'static str, report: &ExperimentReport) -> Criterion {
    let names: Vec<&str> = report.metrics.iter().map(|m| m.name.as_str()).collect();
    judge(name, &[report], &names)
}

#[test]
fn acceptance() {
    let opts = Options::with_seed(1);
    let run = |r: gard_bench::Result<ExperimentReport>| r.expect("experiment runs");

    let spring_profile_1d = run(experiments::spring_profile_1d());
    let non_acc = run(experiments::non_accumulation(&opts));
    let reconv = run(experiments::reconvergence(&opts));
    let ramp = run(experiments::admittance_ramp());
    let mass_sweep = run(experiments::mass_sweep(&opts));
    let noise_robustness = run(experiments::noise_robustness(&opts));
    let spring_characteristic = run(experiments::spring_characteristic(&opts));
    let oracles = run(experiments::oracle_equivalence(opts.seed));
    let complexity = run(experiments::complexity(&opts, &ComplexityOptions::default()));
    let modes = run(experiments::mode_equivalence(&opts));
    let fuzz = run(experiments::confinement(&opts, 1_000_000));

    let mass_sweep_band: Vec<String> = mass_sweep
        .metrics
        .iter()
        .filter(|m| m.name.starts_with("mae_") && m.name.ends_with("kg") && !m.name.ends_with("_5kg") && !m.name.contains("above"))
        .map(|m| m.name.clone())
        .collect();
    let mut mass_sweep_names: Vec<&str> = mass_sweep_band.iter().map(String::as_str).collect();
    mass_sweep_names.extend(["mae_x_5kg_above_10kg", "mae_y_5kg_above_10kg"]);

    let criteria = [
        judge("one-dimensional spring oracle", &[&spring_profile_1d], &["max_abs_error", "runtime"]),
        judge(
            "powered non-accumulation and baseline drift",
            &[&non_acc],
            &["mae", "lap10_minus_lap1_deviation", "baseline_radial_drift", "runtime"],
        ),
        judge(
            "exponential re-convergence",
            &[&reconv],
            &["initial_distance", "contraction_per_interval", "intervals_to_0.2mm"],
        ),
        all_metrics("admittance ramp and discretisation order", &ramp),
        judge("mass ordering and band", &[&mass_sweep], &mass_sweep_names),
        judge(
            "noise robustness at 7.7 N",
            &[&noise_robustness],
            &["circle_7.7n_mae", "hand_drawn_a_7.7n_mae", "circle_7.7n_lap_fraction", "hand_drawn_a_7.7n_lap_fraction"],
        ),
        judge("spring characteristic", &[&spring_characteristic], &["slope_relative_error", "r_squared"]),
        all_metrics("oracle equivalences", &oracles),
        judge(
            "complexity scaling and map invariance",
            &[&complexity],
            &["loglog_slope", "preset_mean_step", "impedance_maze_over_line", "impedance_line_over_maze"],
        ),
        all_metrics("mode equivalence and force invariance", &modes),
        all_metrics("confinement fuzz, 10^6 steps per case", &fuzz),
    ];

    // Written to the raw stream so the lines show without --nocapture.
    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for c in &criteria {
        writeln!(err, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail).unwrap();
        if !c.pass {
            failed.push(c.name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
