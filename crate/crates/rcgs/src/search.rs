//! Two-stage hyperparameter exploration: a cheap GS-gated scan over
//! (SR, pnz, gamma, sigma), then train/evaluate only where synchronization
//! occurred. A train-all mode exists to measure what the gate saves.

use crate::error::{Error, Result};
use crate::evaluation::{
    lyapunov_spectrum_rc, mean_valid_time, spectrum_match, EvaluationSettings, ForecastMetrics,
    SpectrumMatchReport,
};
use crate::gs::{auxiliary_test, GsReport, GsSettings};
use crate::linalg::mix_seeds;
use crate::lyapunov::LyapunovSpectrum;
use crate::reservoir::{drive, Reservoir, ReservoirParams};
use crate::systems::Trajectory;
use crate::training::{train, TrainingSettings};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

const CELL_SEED_STREAM: u64 = 0xce11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gate {
    /// Auxiliary test only; nothing is trained.
    GsOnly,
    /// Train and evaluate only the cells that pass the auxiliary test.
    GsThenTrain,
    /// Train everything; exists to measure the gate's savings and to test
    /// the claim that GS-failing cells are untrainable.
    TrainAll,
}

/// A grid search over reservoir hyperparameters. Empty axes fall back to the
/// value in `fixed`; at least one axis must be nonempty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchPlan {
    pub sr_axis: Vec<f64>,
    pub pnz_axis: Vec<f64>,
    pub gamma_axis: Vec<f64>,
    pub sigma_axis: Vec<f64>,
    /// Remaining reservoir parameters (n_nodes, input_dim, defaults for the
    /// axes left empty); its seed field is unused, the schedule below rules.
    pub fixed: ReservoirParams,
    pub trials_per_cell: usize,
    pub gate: Gate,
    pub gs: GsSettings,
    pub evaluation: EvaluationSettings,
    pub training: TrainingSettings,
    /// Compute the reservoir Lyapunov spectrum for trained cells.
    pub compute_spectrum: bool,
    /// Tangent-block width for the reservoir spectrum.
    pub k_exponents: usize,
    /// Length of the reservoir spectrum run, time units.
    pub spectrum_time: f64,
    /// Relative tolerance for the spectrum match report.
    pub match_tolerance: f64,
    /// Root of the per-cell seed schedule.
    pub base_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellCoordinates {
    pub spectral_radius: f64,
    pub pnz: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl SearchPlan {
    /// Cartesian product of the axes, in axis-major order.
    pub fn cells(&self) -> Vec<CellCoordinates> {
        let srs = axis_or(&self.sr_axis, self.fixed.spectral_radius);
        let pnzs = axis_or(&self.pnz_axis, self.fixed.pnz);
        let gammas = axis_or(&self.gamma_axis, self.fixed.gamma);
        let sigmas = axis_or(&self.sigma_axis, self.fixed.sigma);
        let mut cells = Vec::with_capacity(srs.len() * pnzs.len() * gammas.len() * sigmas.len());
        for &sr in &srs {
            for &pnz in &pnzs {
                for &gamma in &gammas {
                    for &sigma in &sigmas {
                        cells.push(CellCoordinates { spectral_radius: sr, pnz, gamma, sigma });
                    }
                }
            }
        }
        cells
    }

    /// Cells times trials: the number of work units before execution.
    pub fn work_units(&self) -> usize {
        self.cells().len() * self.trials_per_cell
    }

    pub fn validate(&self) -> Result<()> {
        if self.sr_axis.is_empty()
            && self.pnz_axis.is_empty()
            && self.gamma_axis.is_empty()
            && self.sigma_axis.is_empty()
        {
            return Err(Error::invalid("search plan needs at least one nonempty axis"));
        }
        if self.trials_per_cell == 0 {
            return Err(Error::invalid("trials_per_cell must be at least 1"));
        }
        if self.compute_spectrum && self.k_exponents == 0 {
            return Err(Error::invalid("k_exponents must be positive when spectra are computed"));
        }
        Ok(())
    }

    /// Seed for one (cell, trial): a stable hash of the base seed and the
    /// cell coordinates, so parallel execution order cannot change results.
    pub fn cell_seed(&self, cell: &CellCoordinates, trial: usize) -> u64 {
        mix_seeds(&[
            self.base_seed,
            CELL_SEED_STREAM,
            cell.spectral_radius.to_bits(),
            cell.pnz.to_bits(),
            cell.gamma.to_bits(),
            cell.sigma.to_bits(),
            trial as u64,
        ])
    }
}

fn axis_or(axis: &[f64], fallback: f64) -> Vec<f64> {
    if axis.is_empty() {
        vec![fallback]
    } else {
        axis.to_vec()
    }
}

/// Compact view of a GS report for result tables.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GsSummary {
    pub converged: bool,
    pub diverged: bool,
    pub final_distance: f64,
    pub conditional_le: Option<f64>,
}

impl From<&GsReport> for GsSummary {
    fn from(r: &GsReport) -> Self {
        GsSummary {
            converged: r.converged,
            diverged: r.diverged,
            final_distance: r.final_distance,
            conditional_le: r.conditional_le,
        }
    }
}

/// Measured seconds per stage; informational, never part of the
/// deterministic output files.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub gs_seconds: f64,
    pub train_seconds: f64,
    pub evaluate_seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: CellCoordinates,
    pub trial: usize,
    pub reservoir_seed: u64,
    pub gs: Option<GsSummary>,
    pub trained: bool,
    pub metrics: Option<ForecastMetrics>,
    pub spectrum: Option<SpectrumMatchReport>,
    pub wall_clock: StageTimings,
    /// Structured failure record; a failed unit never aborts the sweep.
    pub error: Option<String>,
}

impl CellResult {
    /// Copy with measured times zeroed: the deterministic content.
    pub fn deterministic_view(&self) -> CellResult {
        CellResult { wall_clock: StageTimings::default(), ..self.clone() }
    }
}

/// Run the plan over every (cell, trial) work unit. Units are independent
/// and keyed by (coordinates, trial); per-unit failures are recorded in the
/// result, and the input trajectory is shared read-only.
pub fn run_search(
    plan: &SearchPlan,
    input: &Trajectory,
    driver_spectrum: &LyapunovSpectrum,
) -> Result<Vec<CellResult>> {
    plan.validate()?;
    let lambda1 = driver_spectrum.lambda1();
    if !(lambda1 > 0.0) {
        return Err(Error::invalid(format!(
            "driver lambda_1 must be positive for lambda_1 t units, got {lambda1}"
        )));
    }
    let cells = plan.cells();
    let mut units = Vec::with_capacity(cells.len() * plan.trials_per_cell);
    for cell in &cells {
        for trial in 0..plan.trials_per_cell {
            units.push((*cell, trial));
        }
    }
    let results: Vec<CellResult> = units
        .par_iter()
        .map(|&(cell, trial)| run_unit(plan, input, driver_spectrum, lambda1, cell, trial))
        .collect();
    Ok(results)
}

fn run_unit(
    plan: &SearchPlan,
    input: &Trajectory,
    driver_spectrum: &LyapunovSpectrum,
    lambda1: f64,
    cell: CellCoordinates,
    trial: usize,
) -> CellResult {
    let seed = plan.cell_seed(&cell, trial);
    let params = ReservoirParams {
        n_nodes: plan.fixed.n_nodes,
        input_dim: plan.fixed.input_dim,
        spectral_radius: cell.spectral_radius,
        pnz: cell.pnz,
        gamma: cell.gamma,
        sigma: cell.sigma,
        seed,
    };
    let mut result = CellResult {
        cell,
        trial,
        reservoir_seed: seed,
        gs: None,
        trained: false,
        metrics: None,
        spectrum: None,
        wall_clock: StageTimings::default(),
        error: None,
    };

    // Stage 1: build + auxiliary test.
    let gs_start = Instant::now();
    let built = Reservoir::build(&params);
    let res = match built {
        Ok(res) => res,
        Err(e) => {
            result.error = Some(format!("build: {e}"));
            result.wall_clock.gs_seconds = gs_start.elapsed().as_secs_f64();
            return result;
        }
    };
    let seed_a = mix_seeds(&[seed, 1]);
    let seed_b = mix_seeds(&[seed, 2]);
    let report = match auxiliary_test(&res, input, (seed_a, seed_b), &plan.gs) {
        Ok(report) => report,
        Err(e) => {
            result.error = Some(format!("gs: {e}"));
            result.wall_clock.gs_seconds = gs_start.elapsed().as_secs_f64();
            return result;
        }
    };
    result.gs = Some(GsSummary::from(&report));
    result.wall_clock.gs_seconds = gs_start.elapsed().as_secs_f64();

    let do_train = match plan.gate {
        Gate::GsOnly => false,
        Gate::GsThenTrain => report.converged,
        Gate::TrainAll => true,
    };
    if !do_train {
        return result;
    }

    // Stage 2: train.
    let train_start = Instant::now();
    let readout = match train(
        &res,
        input,
        plan.training.feature_spec,
        plan.training.beta,
        plan.training.washout,
    ) {
        Ok(r) => r,
        Err(e) => {
            result.error = Some(format!("train: {e}"));
            result.wall_clock.train_seconds = train_start.elapsed().as_secs_f64();
            return result;
        }
    };
    result.trained = true;
    result.wall_clock.train_seconds = train_start.elapsed().as_secs_f64();

    // Stage 3: evaluate (forecast skill, optionally the spectrum match).
    let eval_start = Instant::now();
    match mean_valid_time(&res, &readout, input, &plan.evaluation, lambda1) {
        Ok(m) => result.metrics = Some(m),
        Err(e) => {
            result.error = Some(format!("evaluate: {e}"));
            result.wall_clock.evaluate_seconds = eval_start.elapsed().as_secs_f64();
            return result;
        }
    }
    if plan.compute_spectrum {
        match rc_spectrum_for(&res, &readout, input, plan) {
            Ok(rc_spec) => match spectrum_match(driver_spectrum, &rc_spec, plan.match_tolerance) {
                Ok(report) => result.spectrum = Some(report),
                Err(e) => result.error = Some(format!("spectrum match: {e}")),
            },
            Err(e) => result.error = Some(format!("spectrum: {e}")),
        }
    }
    result.wall_clock.evaluate_seconds = eval_start.elapsed().as_secs_f64();
    result
}

/// Reservoir spectrum from a state synchronized on the tail of the input.
fn rc_spectrum_for(
    res: &Reservoir,
    readout: &crate::training::Readout,
    input: &Trajectory,
    plan: &SearchPlan,
) -> Result<LyapunovSpectrum> {
    let n_sync = ((plan.evaluation.sync_time / input.dt).round() as usize).max(1);
    if input.len() < n_sync + 1 {
        return Err(Error::invalid("input too short to synchronize for the spectrum run"));
    }
    let tail = input.window(input.len() - n_sync - 1, input.len())?;
    let driven = drive(res, &tail, &vec![0.0; res.n_nodes()])?;
    let r0 = driven.states.row(driven.states.nrows() - 1).to_vec();
    let steps = (plan.spectrum_time / input.dt).round() as usize;
    lyapunov_spectrum_rc(res, readout, &r0, plan.k_exponents, input.dt, steps)
}

/// Measured cost of the gated search against the counterfactual cost of
/// training everything, extrapolated from the units actually trained.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SavingsReport {
    pub gated_cost_seconds: f64,
    pub ungated_cost_estimate_seconds: f64,
    /// ungated / gated; None when nothing was trained (undefined).
    pub ratio: Option<f64>,
    pub trained_units: usize,
    pub total_units: usize,
}

pub fn savings_report(results: &[CellResult]) -> SavingsReport {
    let total_units = results.len();
    let gated_cost_seconds: f64 = results
        .iter()
        .map(|r| r.wall_clock.gs_seconds + r.wall_clock.train_seconds + r.wall_clock.evaluate_seconds)
        .sum();
    let trained: Vec<&CellResult> = results.iter().filter(|r| r.trained).collect();
    let trained_units = trained.len();
    if trained_units == 0 {
        return SavingsReport {
            gated_cost_seconds,
            ungated_cost_estimate_seconds: f64::NAN,
            ratio: None,
            trained_units,
            total_units,
        };
    }
    let mean_train_eval: f64 = trained
        .iter()
        .map(|r| r.wall_clock.train_seconds + r.wall_clock.evaluate_seconds)
        .sum::<f64>()
        / trained_units as f64;
    let ungated = total_units as f64 * mean_train_eval;
    SavingsReport {
        gated_cost_seconds,
        ungated_cost_estimate_seconds: ungated,
        ratio: Some(ungated / gated_cost_seconds),
        trained_units,
        total_units,
    }
}

/// One point of a spectral-radius sweep: forecast skill and the reservoir's
/// leading exponents, per SR.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SrSweepPoint {
    pub spectral_radius: f64,
    /// Mean over all forecast starts of all trials, lambda_1 t units.
    pub mean_valid_time: f64,
    pub std_valid_time: f64,
    /// Element-wise mean over trials, sorted descending.
    pub rc_exponents: Vec<f64>,
    pub driver_lambda1: f64,
    pub trials: usize,
    pub failures: usize,
}

/// Sweep the spectral radius with everything else fixed, training every
/// cell (the sweep exists to SEE the failing region) and computing the
/// reservoir spectrum at each SR.
pub fn sr_sweep(
    plan: &SearchPlan,
    input: &Trajectory,
    driver_spectrum: &LyapunovSpectrum,
) -> Result<Vec<SrSweepPoint>> {
    if plan.sr_axis.is_empty() {
        return Err(Error::invalid("sr_sweep needs a nonempty SR axis"));
    }
    if !(plan.pnz_axis.is_empty() && plan.gamma_axis.is_empty() && plan.sigma_axis.is_empty()) {
        return Err(Error::invalid("sr_sweep allows only the SR axis to vary"));
    }
    let mut sweep_plan = plan.clone();
    sweep_plan.gate = Gate::TrainAll;
    sweep_plan.compute_spectrum = true;
    let results = run_search(&sweep_plan, input, driver_spectrum)?;

    let mut points = Vec::with_capacity(plan.sr_axis.len());
    for &sr in &plan.sr_axis {
        let mine: Vec<&CellResult> =
            results.iter().filter(|r| r.cell.spectral_radius == sr).collect();
        let mut valid_times = Vec::new();
        let mut exponent_sums: Vec<f64> = Vec::new();
        let mut spectra_count = 0usize;
        let mut failures = 0usize;
        for r in &mine {
            if r.error.is_some() {
                failures += 1;
            }
            if let Some(m) = &r.metrics {
                valid_times.extend_from_slice(&m.per_start_valid_time);
            }
            if let Some(s) = &r.spectrum {
                let ex = &s.rc_spectrum.exponents;
                if exponent_sums.is_empty() {
                    exponent_sums = vec![0.0; ex.len()];
                }
                for (acc, v) in exponent_sums.iter_mut().zip(ex) {
                    *acc += v;
                }
                spectra_count += 1;
            }
        }
        let mean = if valid_times.is_empty() {
            f64::NAN
        } else {
            valid_times.iter().sum::<f64>() / valid_times.len() as f64
        };
        let std = if valid_times.len() > 1 {
            (valid_times.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (valid_times.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        let rc_exponents: Vec<f64> = if spectra_count > 0 {
            exponent_sums.iter().map(|s| s / spectra_count as f64).collect()
        } else {
            Vec::new()
        };
        points.push(SrSweepPoint {
            spectral_radius: sr,
            mean_valid_time: mean,
            std_valid_time: std,
            rc_exponents,
            driver_lambda1: driver_spectrum.lambda1(),
            trials: mine.len(),
            failures,
        });
    }
    Ok(points)
}
