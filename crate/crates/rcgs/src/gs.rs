//! Generalized-synchronization testing by the auxiliary method: drive two
//! copies of the same reservoir with the same input from different initial
//! conditions and watch whether their states converge. A cheap pre-training
//! gate: no synchronization means no trainable readout.

use crate::error::{Error, Result};
use crate::linalg::mix_seeds;
use crate::reservoir::{DrivenStepper, Reservoir, ReservoirParams};
use crate::systems::Trajectory;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Distances below this are numeric noise; keeps log fits away from log(0).
pub const DISTANCE_FLOOR: f64 = 1e-14;

const GS_TRIAL_STREAM: u64 = 0x6753;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GsSettings {
    /// Initial driven segment discarded before the verdict, in time units.
    pub transient_time: f64,
    /// Assessment window after the transient, in time units; much shorter
    /// than a training run.
    pub test_time: f64,
    /// Convergence tolerance on ||r_A - r_B||_2 / sqrt(N), which must hold
    /// over the whole final 10% of the test window (no lucky crossings).
    pub tolerance: f64,
    /// Number of scatter pairs retained for plotting.
    pub scatter_len: usize,
}

impl Default for GsSettings {
    fn default() -> Self {
        GsSettings { transient_time: 10.0, test_time: 50.0, tolerance: 1e-8, scatter_len: 512 }
    }
}

/// Outcome of one auxiliary test.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GsReport {
    /// True when the normalized distance stayed below tolerance over the
    /// entire final 10% of the test window.
    pub converged: bool,
    /// True when integration blew past the overflow guard (the reservoir
    /// itself is unstable); reported, never thrown.
    pub diverged: bool,
    /// Max normalized distance over the verdict window.
    pub final_distance: f64,
    /// Least-squares slope of ln d(t); None when the distance fell below
    /// the numeric floor too fast to measure.
    pub conditional_le: Option<f64>,
    /// First time the distance touched the numeric floor, if it did.
    pub floor_crossing_time: Option<f64>,
    pub transient_time: f64,
    pub test_time: f64,
    pub tolerance_used: f64,
    /// (chi(r_A), chi(r_B)) pairs over the verdict window, chi = first
    /// component; on a synchronized pair these lie on the diagonal.
    pub scatter_sample: Vec<(f64, f64)>,
    /// (t, ||r_A - r_B|| / sqrt[N]) at every input sample.
    pub distance_series: Vec<(f64, f64)>,
}

/// Conditional-Lyapunov-exponent estimate from a distance series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CondLeEstimate {
    /// Slope of ln d vs t over the measurable window.
    Measured(f64),
    /// Every usable point sat at the numeric floor: convergence was faster
    /// than measurable; carries the first floor-crossing time.
    FasterThanMeasurable { floor_crossing_time: f64 },
}

/// Least-squares slope of ln d vs t over the window where d is above the
/// numeric floor, truncated at the first floor crossing.
pub fn estimate_conditional_le(series: &[(f64, f64)]) -> Result<CondLeEstimate> {
    let positive = series.iter().filter(|(_, d)| *d > 0.0).count();
    if positive < 10 {
        return Err(Error::invalid(format!(
            "conditional-LE fit needs at least 10 points with d > 0, got {positive}"
        )));
    }
    let mut window: Vec<(f64, f64)> = Vec::new();
    let mut crossing = None;
    for &(t, d) in series {
        if d <= DISTANCE_FLOOR {
            crossing = Some(t);
            break;
        }
        window.push((t, d.ln()));
    }
    if window.len() < 2 {
        return Ok(CondLeEstimate::FasterThanMeasurable {
            floor_crossing_time: crossing.unwrap_or(series[0].0),
        });
    }
    let n = window.len() as f64;
    let mean_t = window.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_l = window.iter().map(|(_, l)| l).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, l) in &window {
        num += (t - mean_t) * (l - mean_l);
        den += (t - mean_t) * (t - mean_t);
    }
    if den == 0.0 {
        return Err(Error::invalid("conditional-LE fit needs at least two distinct times"));
    }
    Ok(CondLeEstimate::Measured(num / den))
}

/// Drive two identical reservoirs from different initial conditions with the
/// same input and report whether generalized synchronization occurred.
///
/// The input must cover transient_time + test_time. Initial states are drawn
/// uniform on [-1, 1]^N from the two seeds.
pub fn auxiliary_test(
    res: &Reservoir,
    input: &Trajectory,
    seeds: (u64, u64),
    settings: &GsSettings,
) -> Result<GsReport> {
    if input.dim() != res.input_dim() {
        return Err(Error::dimension(format!(
            "input dimension {} does not match reservoir input_dim {}",
            input.dim(),
            res.input_dim()
        )));
    }
    let n_transient = (settings.transient_time / input.dt).round() as usize;
    let n_test = (settings.test_time / input.dt).round() as usize;
    let needed = n_transient + n_test + 1;
    if input.len() < needed {
        return Err(Error::invalid(format!(
            "input has {} samples, auxiliary test needs {needed} \
             (transient {} + test {} time units at dt {})",
            input.len(),
            settings.transient_time,
            settings.test_time,
            input.dt
        )));
    }
    if n_test < 10 {
        return Err(Error::invalid("test_time too short: fewer than 10 samples"));
    }

    let n = res.n_nodes();
    let sqrt_n = (n as f64).sqrt();
    let r_a0 = res.random_initial_state(seeds.0);
    let r_b0 = res.random_initial_state(seeds.1);

    let mut a = DrivenStepper::new(res, &r_a0)?;
    let mut b = DrivenStepper::new(res, &r_b0)?;

    let mut distance_series = Vec::with_capacity(needed);
    let mut chi_pairs: Vec<(f64, f64)> = Vec::new();
    let verdict_start = n_transient + (0.9 * n_test as f64).floor() as usize;
    let mut diverged = false;

    let dist = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            let d = a[i] - b[i];
            s += d * d;
        }
        s.sqrt() / sqrt_n
    };

    distance_series.push((input.time_at(0), dist(a.state(), b.state())));
    for k in 0..needed - 1 {
        let u0 = input.states.row(k);
        let u1 = input.states.row(k + 1);
        let step_a = a.step(u0.as_slice().unwrap(), u1.as_slice().unwrap(), input.dt);
        let step_b = b.step(u0.as_slice().unwrap(), u1.as_slice().unwrap(), input.dt);
        if step_a.is_err() || step_b.is_err() {
            diverged = true;
            break;
        }
        let t = input.time_at(k + 1);
        distance_series.push((t, dist(a.state(), b.state())));
        if k + 1 >= verdict_start {
            chi_pairs.push((a.state()[0], b.state()[0]));
        }
    }

    // Verdict: sustained sub-tolerance over the final 10% of the test window.
    let verdict_window: Vec<f64> = distance_series
        .iter()
        .skip(verdict_start)
        .map(|(_, d)| *d)
        .collect();
    let final_distance = if diverged || verdict_window.is_empty() {
        f64::INFINITY
    } else {
        verdict_window.iter().cloned().fold(0.0, f64::max)
    };
    let converged = !diverged && final_distance < settings.tolerance;

    // Conditional LE over the post-transient series.
    let post: Vec<(f64, f64)> = distance_series.iter().skip(n_transient).cloned().collect();
    let floor_touch = post.iter().find(|(_, d)| *d <= DISTANCE_FLOOR).map(|(t, _)| *t);
    let (conditional_le, floor_crossing_time) =
        if post.iter().filter(|(_, d)| *d > 0.0).count() < 10 {
            // Identical (or already numerically equal) copies: trivially
            // synchronized, decay too fast to measure.
            (None, Some(floor_touch.unwrap_or_else(|| post.first().map(|p| p.0).unwrap_or(0.0))))
        } else {
            match estimate_conditional_le(&post)? {
                CondLeEstimate::Measured(slope) => (Some(slope), floor_touch),
                CondLeEstimate::FasterThanMeasurable { floor_crossing_time } => {
                    (None, Some(floor_crossing_time))
                }
            }
        };

    // Downsample the scatter to the requested length.
    let stride = chi_pairs.len().div_ceil(settings.scatter_len.max(1)).max(1);
    let scatter_sample: Vec<(f64, f64)> = chi_pairs.into_iter().step_by(stride).collect();

    Ok(GsReport {
        converged,
        diverged,
        final_distance,
        conditional_le,
        floor_crossing_time,
        transient_time: settings.transient_time,
        test_time: settings.test_time,
        tolerance_used: settings.tolerance,
        scatter_sample,
        distance_series,
    })
}

/// Aggregate over the trials of one grid cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GsCellSummary {
    pub spectral_radius: f64,
    pub pnz: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub trials: usize,
    pub pass_fraction: f64,
    /// Mean of the measured conditional LEs; NaN when none were measurable.
    pub mean_conditional_le: f64,
    /// Per-trial failures (build errors and the like); a failing trial
    /// counts as a non-pass but never aborts the scan.
    pub failures: Vec<String>,
}

/// Scan a hyperparameter grid with the auxiliary test, `trials_per_cell`
/// independent reservoir seeds per cell. Cells run in parallel; the seed of
/// each trial is derived from (cell seed, trial index), so results are
/// independent of scheduling.
pub fn gs_region_scan(
    grid: &[ReservoirParams],
    input: &Trajectory,
    trials_per_cell: usize,
    settings: &GsSettings,
) -> Result<Vec<GsCellSummary>> {
    if grid.is_empty() {
        return Err(Error::invalid("gs_region_scan needs a nonempty grid"));
    }
    if trials_per_cell == 0 {
        return Err(Error::invalid("trials_per_cell must be at least 1"));
    }
    let summaries: Vec<GsCellSummary> = grid
        .par_iter()
        .map(|cell| {
            let mut passes = 0usize;
            let mut les = Vec::new();
            let mut failures = Vec::new();
            for trial in 0..trials_per_cell {
                let mut params = cell.clone();
                params.seed = mix_seeds(&[cell.seed, GS_TRIAL_STREAM, trial as u64]);
                let seed_a = mix_seeds(&[params.seed, 1]);
                let seed_b = mix_seeds(&[params.seed, 2]);
                let outcome = Reservoir::build(&params)
                    .and_then(|res| auxiliary_test(&res, input, (seed_a, seed_b), settings));
                match outcome {
                    Ok(report) => {
                        if report.converged {
                            passes += 1;
                        }
                        if let Some(le) = report.conditional_le {
                            les.push(le);
                        }
                    }
                    Err(e) => failures.push(format!("trial {trial}: {e}")),
                }
            }
            let mean_le = if les.is_empty() {
                f64::NAN
            } else {
                les.iter().sum::<f64>() / les.len() as f64
            };
            GsCellSummary {
                spectral_radius: cell.spectral_radius,
                pnz: cell.pnz,
                gamma: cell.gamma,
                sigma: cell.sigma,
                trials: trials_per_cell,
                pass_fraction: passes as f64 / trials_per_cell as f64,
                mean_conditional_le: mean_le,
                failures,
            }
        })
        .collect();
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::ReservoirParams;
    use crate::systems::{integrate_rk4, relax_onto_attractor, standardize, DriverSystem};

    fn lorenz_input(time_units: f64) -> Trajectory {
        let sys = DriverSystem::lorenz63();
        let x0 = relax_onto_attractor(&sys, &[1.0, 1.0, 1.0], 0.01, 100.0).unwrap();
        let n = (time_units / 0.01).round() as usize;
        let raw = integrate_rk4(&sys, &x0, 0.01, n).unwrap();
        standardize(&raw).unwrap().0
    }

    fn params(sr: f64, seed: u64) -> ReservoirParams {
        ReservoirParams {
            n_nodes: 80,
            input_dim: 3,
            spectral_radius: sr,
            pnz: 0.1,
            gamma: 8.0,
            sigma: 0.3,
            seed,
        }
    }

    #[test]
    fn conditional_le_exact_exponentials() {
        let decay: Vec<(f64, f64)> = (0..200).map(|i| {
            let t = i as f64 * 0.05;
            (t, (-2.0 * t).exp())
        })
        .collect();
        match estimate_conditional_le(&decay).unwrap() {
            CondLeEstimate::Measured(s) => assert!((s + 2.0).abs() < 1e-6, "slope {s}"),
            other => panic!("expected measured slope, got {other:?}"),
        }

        let constant: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 0.3)).collect();
        match estimate_conditional_le(&constant).unwrap() {
            CondLeEstimate::Measured(s) => assert!(s.abs() < 1e-12, "slope {s}"),
            other => panic!("expected measured slope, got {other:?}"),
        }

        let grow: Vec<(f64, f64)> = (0..200).map(|i| {
            let t = i as f64 * 0.05;
            (t, 1e-6 * (0.5 * t).exp())
        })
        .collect();
        match estimate_conditional_le(&grow).unwrap() {
            CondLeEstimate::Measured(s) => assert!((s - 0.5).abs() < 1e-6, "slope {s}"),
            other => panic!("expected measured slope, got {other:?}"),
        }
    }

    #[test]
    fn conditional_le_floor_sentinel_and_pre() {
        // Positive but sub-floor everywhere: faster than measurable, with the
        // first sample time as the crossing time.
        let series: Vec<(f64, f64)> = (0..20).map(|i| (3.0 + i as f64, 1e-15)).collect();
        match estimate_conditional_le(&series).unwrap() {
            CondLeEstimate::FasterThanMeasurable { floor_crossing_time } => {
                assert_eq!(floor_crossing_time, 3.0)
            }
            other => panic!("expected sentinel, got {other:?}"),
        }

        // Fewer than 10 points with d > 0 violates the precondition.
        let mut series: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 0.0)).collect();
        series[0].1 = 1.0;
        assert!(estimate_conditional_le(&series).is_err());
    }

    #[test]
    fn identical_initial_conditions_are_trivially_converged() {
        let res = Reservoir::build(&params(0.9, 3)).unwrap();
        let input = lorenz_input(65.0);
        let report = auxiliary_test(&res, &input, (7, 7), &GsSettings::default()).unwrap();
        assert!(report.converged);
        assert!(!report.diverged);
        assert_eq!(report.final_distance, 0.0);
        assert!(report.conditional_le.is_none());
        assert!(report.distance_series.iter().all(|(_, d)| *d == 0.0));
    }

    #[test]
    fn gs_dichotomy_at_desk_scale() {
        let input = lorenz_input(65.0);
        let settings = GsSettings::default();

        let good = Reservoir::build(&params(0.9, 5)).unwrap();
        let report = auxiliary_test(&good, &input, (11, 22), &settings).unwrap();
        assert!(report.converged, "SR=0.9 should synchronize: {:?}", report.final_distance);
        let le = report.conditional_le;
        if let Some(le) = le {
            assert!(le < 0.0, "converged pair must have negative conditional LE, got {le}");
        }
        // Scatter pairs lie on the diagonal within ||.||_2 <= tol sqrt(N).
        let bound = settings.tolerance * (good.n_nodes() as f64).sqrt();
        for (a, b) in &report.scatter_sample {
            assert!((a - b).abs() <= bound, "off-diagonal scatter: {a} vs {b}");
        }

        let bad = Reservoir::build(&params(3.0, 5)).unwrap();
        let report = auxiliary_test(&bad, &input, (11, 22), &settings).unwrap();
        assert!(!report.converged, "SR=3.0 should not synchronize");
        assert!(report.final_distance > settings.tolerance);
    }

    #[test]
    fn swapping_initial_conditions_gives_identical_distances() {
        let res = Reservoir::build(&params(0.9, 9)).unwrap();
        let input = lorenz_input(65.0);
        let settings = GsSettings::default();
        let ab = auxiliary_test(&res, &input, (100, 200), &settings).unwrap();
        let ba = auxiliary_test(&res, &input, (200, 100), &settings).unwrap();
        assert_eq!(ab.distance_series, ba.distance_series);
        assert_eq!(ab.converged, ba.converged);
    }

    #[test]
    fn tightening_tolerance_never_flips_fail_to_pass() {
        let input = lorenz_input(65.0);
        for sr in [0.7, 1.2, 2.2] {
            let res = Reservoir::build(&params(sr, 13)).unwrap();
            let loose = auxiliary_test(
                &res,
                &input,
                (1, 2),
                &GsSettings { tolerance: 1e-6, ..GsSettings::default() },
            )
            .unwrap();
            let tight = auxiliary_test(
                &res,
                &input,
                (1, 2),
                &GsSettings { tolerance: 1e-8, ..GsSettings::default() },
            )
            .unwrap();
            assert!(
                !(tight.converged && !loose.converged),
                "SR {sr}: tightening flipped fail to pass"
            );
        }
    }

    #[test]
    fn converged_cells_pass_with_a_third_initial_condition() {
        let res = Reservoir::build(&params(0.9, 17)).unwrap();
        let input = lorenz_input(65.0);
        let settings = GsSettings::default();
        let first = auxiliary_test(&res, &input, (31, 32), &settings).unwrap();
        assert!(first.converged);
        let third = auxiliary_test(&res, &input, (31, 93), &settings).unwrap();
        assert!(third.converged, "transitivity: a third initial condition must also converge");
    }

    #[test]
    fn unstable_integration_reports_diverged_flag() {
        // gamma far beyond the RK4 stability limit at this dt: the update
        // explodes numerically. Must be reported, not thrown.
        let mut p = params(0.9, 19);
        p.gamma = 1e6;
        let res = Reservoir::build(&p).unwrap();
        let input = lorenz_input(65.0);
        let report = auxiliary_test(&res, &input, (1, 2), &GsSettings::default()).unwrap();
        assert!(report.diverged);
        assert!(!report.converged);
        assert!(report.final_distance.is_infinite());
    }

    #[test]
    fn input_too_short_is_an_error() {
        let res = Reservoir::build(&params(0.9, 23)).unwrap();
        let input = lorenz_input(30.0); // needs 60+
        assert!(auxiliary_test(&res, &input, (1, 2), &GsSettings::default()).is_err());
    }

    #[test]
    fn region_scan_contrast_and_determinism() {
        let input = lorenz_input(65.0);
        let grid = vec![params(0.9, 41), params(3.0, 41)];
        let settings = GsSettings::default();
        let scan = gs_region_scan(&grid, &input, 2, &settings).unwrap();
        assert_eq!(scan.len(), 2);
        assert_eq!(scan[0].pass_fraction, 1.0, "failures: {:?}", scan[0].failures);
        assert_eq!(scan[1].pass_fraction, 0.0);

        let again = gs_region_scan(&grid, &input, 2, &settings).unwrap();
        let a = serde_json::to_string(&scan).unwrap();
        let b = serde_json::to_string(&again).unwrap();
        assert_eq!(a, b, "rerun with the same seed schedule must be byte-identical");

        assert!(gs_region_scan(&[], &input, 2, &settings).is_err());
        assert!(gs_region_scan(&grid, &input, 0, &settings).is_err());
    }
}
