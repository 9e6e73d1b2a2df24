//! Forecast-skill metrics (valid prediction time in units of lambda_1 t) and
//! the attractor-reconstruction certificate: the trained autonomous
//! reservoir's Lyapunov spectrum matched against the driver's.

use crate::error::{Error, Result};
use crate::lyapunov::{benettin_spectrum, Flow, LyapunovSpectrum, TangentSystem};
use crate::reservoir::{drive, AutonomousStepper, Reservoir};
use crate::systems::Trajectory;
use crate::training::Readout;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_VALID_TIME_THRESHOLD: f64 = 0.4;
pub const DEFAULT_SYNC_TIME: f64 = 10.0;

/// k exponents computed for the reservoir by default: the driver's D plus a
/// few to check that the tail is negative.
pub fn default_k_exponents(input_dim: usize) -> usize {
    input_dim + 5
}

/// Forecast evaluation knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSettings {
    /// Normalized-error threshold defining the valid prediction time.
    pub threshold: f64,
    /// Forecast starting points, evenly spaced over the truth trajectory.
    pub n_starts: usize,
    /// Forecast horizon per start, time units.
    pub horizon: f64,
    /// Driven synchronization window before each start, time units.
    pub sync_time: f64,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            threshold: DEFAULT_VALID_TIME_THRESHOLD,
            n_starts: 20,
            horizon: 15.0,
            sync_time: DEFAULT_SYNC_TIME,
        }
    }
}

/// Valid prediction times over a set of forecast starts, in lambda_1 t units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForecastMetrics {
    pub per_start_valid_time: Vec<f64>,
    /// Model time of each forecast origin within the truth trajectory.
    pub start_times: Vec<f64>,
    pub mean_valid_time: f64,
    /// Sample standard deviation (n-1); zero for a single start.
    pub std_valid_time: f64,
    pub threshold: f64,
    pub n_starts: usize,
    pub lambda1_driver: f64,
}

/// First time the normalized error E(t) = ||pred - truth||_2 / sqrt(D)
/// exceeds the threshold, converted to lambda_1 t units. Returns the full
/// horizon if the error never exceeds the threshold.
///
/// Both trajectories must be standardized by the training-set transform and
/// aligned sample-for-sample (same dt, same length, same dimension).
pub fn valid_time(
    truth: &Trajectory,
    prediction: &Trajectory,
    threshold: f64,
    lambda1: f64,
) -> Result<f64> {
    if truth.dim() != prediction.dim()
        || truth.len() != prediction.len()
        || (truth.dt - prediction.dt).abs() > 1e-12 * truth.dt
    {
        return Err(Error::dimension(format!(
            "misaligned trajectories: truth {}x{} at dt {}, prediction {}x{} at dt {}",
            truth.len(),
            truth.dim(),
            truth.dt,
            prediction.len(),
            prediction.dim(),
            prediction.dt
        )));
    }
    validate_threshold_lambda(threshold, lambda1)?;
    let sqrt_d = (truth.dim() as f64).sqrt();
    for k in 0..truth.len() {
        let mut err = 0.0;
        for j in 0..truth.dim() {
            let d = prediction.states[[k, j]] - truth.states[[k, j]];
            err += d * d;
        }
        if err.sqrt() / sqrt_d > threshold {
            return Ok(k as f64 * truth.dt * lambda1);
        }
    }
    Ok(truth.duration() * lambda1)
}

fn validate_threshold_lambda(threshold: f64, lambda1: f64) -> Result<()> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
    }
    if !(lambda1 > 0.0) || !lambda1.is_finite() {
        return Err(Error::invalid(format!(
            "lambda1 must be positive to express time in lambda_1 t units, got {lambda1}"
        )));
    }
    Ok(())
}

/// Forecast from `n_starts` evenly spaced origins in the (standardized)
/// truth trajectory: synchronize by driving over sync_time, forecast over
/// the horizon, and record each valid prediction time.
pub fn mean_valid_time(
    res: &Reservoir,
    readout: &Readout,
    truth: &Trajectory,
    settings: &EvaluationSettings,
    lambda1: f64,
) -> Result<ForecastMetrics> {
    validate_threshold_lambda(settings.threshold, lambda1)?;
    if settings.n_starts == 0 {
        return Err(Error::invalid("n_starts must be at least 1"));
    }
    if truth.dim() != res.input_dim() {
        return Err(Error::dimension(format!(
            "truth dimension {} does not match reservoir input_dim {}",
            truth.dim(),
            res.input_dim()
        )));
    }
    let n_sync = (settings.sync_time / truth.dt).round() as usize;
    let n_horizon = (settings.horizon / truth.dt).round() as usize;
    if n_sync == 0 || n_horizon == 0 {
        return Err(Error::invalid("sync_time and horizon must cover at least one step"));
    }
    let window = n_sync + n_horizon;
    let max_starts = (truth.len() - 1) / window;
    if settings.n_starts > max_starts {
        return Err(Error::invalid(format!(
            "truth of {} samples fits at most {max_starts} non-overlapping windows of \
             sync {} + horizon {} time units; requested {}",
            truth.len(),
            settings.sync_time,
            settings.horizon,
            settings.n_starts
        )));
    }
    // Even spacing across the whole trajectory, never closer than `window`.
    let span = truth.len() - 1 - window;
    let stride = if settings.n_starts > 1 {
        (span / (settings.n_starts - 1)).max(window)
    } else {
        window
    };

    let offsets: Vec<usize> = (0..settings.n_starts).map(|i| i * stride).collect();
    let pairs: Vec<(f64, f64)> = offsets
        .par_iter()
        .map(|&o| {
            let origin = o + n_sync;
            let sync = truth.window(o, origin + 1)?;
            let driven = drive(res, &sync, &vec![0.0; res.n_nodes()])?;
            let r0 = driven.states.row(driven.states.nrows() - 1).to_vec();
            let vt = forecast_valid_time(
                res,
                readout,
                truth,
                origin,
                &r0,
                n_horizon,
                settings.threshold,
            )?;
            Ok((truth.time_at(origin), vt * lambda1))
        })
        .collect::<Result<Vec<_>>>()?;

    let per_start: Vec<f64> = pairs.iter().map(|(_, v)| *v).collect();
    let start_times: Vec<f64> = pairs.iter().map(|(t, _)| *t).collect();
    let mean = per_start.iter().sum::<f64>() / per_start.len() as f64;
    let std = if per_start.len() > 1 {
        (per_start.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (per_start.len() - 1) as f64)
            .sqrt()
    } else {
        0.0
    };
    Ok(ForecastMetrics {
        per_start_valid_time: per_start,
        start_times,
        mean_valid_time: mean,
        std_valid_time: std,
        threshold: settings.threshold,
        n_starts: settings.n_starts,
        lambda1_driver: lambda1,
    })
}

/// Forecast from r0 at truth sample `origin`, stopping at the first
/// threshold crossing; returns the valid duration in model time units. An
/// escape of the autonomous trajectory caps the valid time at the escape
/// step (the forecast is unusable from there on).
fn forecast_valid_time(
    res: &Reservoir,
    readout: &Readout,
    truth: &Trajectory,
    origin: usize,
    r0: &[f64],
    n_horizon: usize,
    threshold: f64,
) -> Result<f64> {
    let sqrt_d = (truth.dim() as f64).sqrt();
    let mut stepper = AutonomousStepper::new(res, readout, r0)?;
    let error_at = |pred: &[f64], k: usize| -> f64 {
        let mut err = 0.0;
        for j in 0..truth.dim() {
            let d = pred[j] - truth.states[[origin + k, j]];
            err += d * d;
        }
        err.sqrt() / sqrt_d
    };
    if error_at(&stepper.observe(), 0) > threshold {
        return Ok(0.0);
    }
    for m in 1..=n_horizon {
        if stepper.step(truth.dt).is_err() {
            // Guard escape: everything from here on is garbage.
            return Ok(m as f64 * truth.dt);
        }
        if error_at(&stepper.observe(), m) > threshold {
            return Ok(m as f64 * truth.dt);
        }
    }
    Ok(n_horizon as f64 * truth.dt)
}

/// The autonomous forecast reservoir dr/dt = F_r(r, phi(r)) as a tangent
/// system: the Jacobian action is
///   gamma (-v + diag(1 - tanh^2(a)) (A v + sigma W (dphi/dr) v)),
/// a = A r + sigma W phi(r), exposed matrix-free.
pub struct AutonomousRc<'a> {
    res: &'a Reservoir,
    readout: &'a Readout,
}

impl<'a> AutonomousRc<'a> {
    pub fn new(res: &'a Reservoir, readout: &'a Readout) -> Result<Self> {
        if readout.feature_dim() != readout.spec.feature_dim(res.n_nodes())
            || readout.output_dim() != res.input_dim()
        {
            return Err(Error::dimension(format!(
                "readout maps {} features to {} outputs; reservoir needs {} -> {}",
                readout.feature_dim(),
                readout.output_dim(),
                readout.spec.feature_dim(res.n_nodes()),
                res.input_dim()
            )));
        }
        Ok(AutonomousRc { res, readout })
    }

    /// a = A r + sigma W phi(r) and d = 1 - tanh^2(a).
    fn preactivation(&self, r: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.res.n_nodes();
        let mut pre = vec![0.0; n];
        self.res.adjacency.matvec(r, &mut pre);
        let phi = self.readout.evaluate(r);
        self.res.add_scaled_input(&phi, &mut pre);
        let d: Vec<f64> = pre.iter().map(|a| {
            let t = a.tanh();
            1.0 - t * t
        })
        .collect();
        (pre, d)
    }
}

impl Flow for AutonomousRc<'_> {
    fn dim(&self) -> usize {
        self.res.n_nodes()
    }

    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        let (pre, _) = self.preactivation(x);
        self.res.finish_field(x, &pre, out);
    }
}

impl TangentSystem for AutonomousRc<'_> {
    fn tangent_apply(&self, x: &[f64], v: &ArrayView2<f64>, out: &mut Array2<f64>) {
        let (_, d) = self.preactivation(x);
        self.tangent_with_damping(x, &d, v, out);
    }

    fn field_and_tangent(
        &self,
        x: &[f64],
        v: &ArrayView2<f64>,
        out_field: &mut [f64],
        out_tangent: &mut Array2<f64>,
    ) {
        let (pre, d) = self.preactivation(x);
        self.res.finish_field(x, &pre, out_field);
        self.tangent_with_damping(x, &d, v, out_tangent);
    }
}

impl AutonomousRc<'_> {
    fn tangent_with_damping(
        &self,
        x: &[f64],
        damping: &[f64],
        v: &ArrayView2<f64>,
        out: &mut Array2<f64>,
    ) {
        let n = self.res.n_nodes();
        let k = v.ncols();
        let gamma = self.res.params.gamma;
        let sigma = self.res.params.sigma;

        // out <- A v
        self.res.adjacency.matmul_block(v, out);

        if sigma != 0.0 {
            // gv = (dphi/dr) v (D x k), then out += sigma W gv.
            let d_out = self.readout.output_dim();
            let mut gv = Array2::zeros((d_out, k));
            self.readout.jacobian_apply_block(x, v, &mut gv);
            let w = &self.res.input_matrix;
            for i in 0..n {
                let wrow = w.row(i);
                for j in 0..k {
                    let mut acc = 0.0;
                    for a in 0..d_out {
                        acc += wrow[a] * gv[[a, j]];
                    }
                    out[[i, j]] += sigma * acc;
                }
            }
        }

        for i in 0..n {
            let di = damping[i];
            for j in 0..k {
                out[[i, j]] = gamma * (-v[[i, j]] + di * out[[i, j]]);
            }
        }
    }
}

/// Matrix-free Jacobian-vector products of the autonomous reservoir at r,
/// applied to each column of v.
pub fn rc_jacobian_apply(
    res: &Reservoir,
    readout: &Readout,
    r: &[f64],
    v: &ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if r.len() != res.n_nodes() || v.nrows() != res.n_nodes() {
        return Err(Error::dimension(format!(
            "state/tangent rows must equal n_nodes = {}, got {} and {}",
            res.n_nodes(),
            r.len(),
            v.nrows()
        )));
    }
    let rc = AutonomousRc::new(res, readout)?;
    let mut out = Array2::zeros((res.n_nodes(), v.ncols()));
    rc.tangent_apply(r, v, &mut out);
    Ok(out)
}

/// Lyapunov spectrum of the trained autonomous reservoir via Benettin QR on
/// an N x k tangent block. An escaping trajectory is flagged on the result
/// (with its escape time), not raised.
pub fn lyapunov_spectrum_rc(
    res: &Reservoir,
    readout: &Readout,
    r0: &[f64],
    k: usize,
    dt: f64,
    n_steps: usize,
) -> Result<LyapunovSpectrum> {
    let rc = AutonomousRc::new(res, readout)?;
    benettin_spectrum(&rc, r0, dt, n_steps, k, crate::lyapunov::DEFAULT_RENORM_INTERVAL, 0.0)
}

/// Comparison of the trained reservoir's spectrum against the driver's.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumMatchReport {
    pub driver_spectrum: LyapunovSpectrum,
    pub rc_spectrum: LyapunovSpectrum,
    /// |rc_i - driver_i| for the driver's D exponents.
    pub per_exponent_error: Vec<f64>,
    /// Every non-negative driver exponent is matched by the corresponding
    /// reservoir exponent within tolerance.
    pub leading_match: bool,
    /// All computed reservoir exponents beyond the driver's D are negative.
    pub tail_negative: bool,
    /// Relative tolerance used for nonzero exponents.
    pub tolerance: f64,
    /// Absolute band used for the flow's zero exponent: tolerance * lambda_1.
    pub zero_band: f64,
}

/// Pairwise comparison of sorted leading exponents. The zero exponent of a
/// flow is matched within an absolute band (relative error at zero is
/// ill-defined); strictly positive exponents within relative tolerance.
pub fn spectrum_match(
    driver: &LyapunovSpectrum,
    rc: &LyapunovSpectrum,
    tolerance: f64,
) -> Result<SpectrumMatchReport> {
    let d = driver.exponents.len();
    if rc.exponents.len() < d {
        return Err(Error::invalid(format!(
            "reservoir spectrum has {} exponents, need at least the driver's {d}",
            rc.exponents.len()
        )));
    }
    if !(tolerance > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tolerance}")));
    }
    let lambda1 = driver.exponents[0];
    let zero_band = tolerance * lambda1.abs();
    let mut per_exponent_error = Vec::with_capacity(d);
    let mut leading_match = true;
    for i in 0..d {
        let want = driver.exponents[i];
        let got = rc.exponents[i];
        let err = (got - want).abs();
        per_exponent_error.push(err);
        if want >= -zero_band {
            // Non-negative exponent (the zero exponent sits inside the band).
            let ok = if want.abs() <= zero_band { err <= zero_band } else { err <= tolerance * want.abs() };
            if !ok {
                leading_match = false;
            }
        }
    }
    let tail_negative = rc.exponents[d..].iter().all(|l| *l < 0.0);
    Ok(SpectrumMatchReport {
        driver_spectrum: driver.clone(),
        rc_spectrum: rc.clone(),
        per_exponent_error,
        leading_match,
        tail_negative,
        tolerance,
        zero_band,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rank_correlation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..rx.len() {
        let a = rx[i] - mx;
        let b = ry[i] - my;
        num += a * b;
        dx += a * a;
        dy += b * b;
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &id in &idx[i..=j] {
            ranks[id] = avg;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::ReservoirParams;
    use crate::training::{FeatureKind, FeatureSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spectrum_with(exponents: Vec<f64>) -> LyapunovSpectrum {
        let k = exponents.len();
        LyapunovSpectrum {
            exponents,
            k,
            dt: 0.01,
            steps: 1000,
            renorm_interval: 10,
            transient_discarded: 0.0,
            drift: vec![0.0; k],
            tolerance: 0.01,
            converged: true,
            escaped: None,
            convergence_history: Vec::new(),
        }
    }

    fn traj_from_errors(errors: &[f64], dim: usize) -> (Trajectory, Trajectory) {
        // Truth at zero; prediction offset along the first axis so the
        // normalized error equals the requested value exactly.
        let s = errors.len();
        let truth = Trajectory::new(0.01, 0.0, Array2::zeros((s, dim))).unwrap();
        let mut states = Array2::zeros((s, dim));
        let sqrt_d = (dim as f64).sqrt();
        for (k, e) in errors.iter().enumerate() {
            states[[k, 0]] = e * sqrt_d;
        }
        let pred = Trajectory::new(0.01, 0.0, states).unwrap();
        (truth, pred)
    }

    #[test]
    fn valid_time_perfect_prediction_returns_full_horizon() {
        let (truth, _) = traj_from_errors(&vec![0.0; 101], 3);
        let vt = valid_time(&truth, &truth, 0.4, 0.9).unwrap();
        assert!((vt - 1.0 * 0.9).abs() < 1e-12, "got {vt}");
    }

    #[test]
    fn valid_time_first_step_breach_is_zero() {
        let (truth, pred) = traj_from_errors(&[0.4 + 1e-9, 0.0, 0.0], 3);
        let vt = valid_time(&truth, &pred, 0.4, 0.9).unwrap();
        assert_eq!(vt, 0.0);
    }

    #[test]
    fn valid_time_matches_analytic_crossing() {
        // E(t) = 0.01 e^{lambda t} crosses 0.4 at t* = ln(40) / lambda.
        let lambda = 2.0;
        let errors: Vec<f64> = (0..400).map(|k| 0.01 * (lambda * k as f64 * 0.01).exp()).collect();
        let (truth, pred) = traj_from_errors(&errors, 4);
        let lambda1 = 1.3;
        let vt = valid_time(&truth, &pred, 0.4, lambda1).unwrap();
        let t_star = (40.0f64).ln() / lambda;
        assert!(
            (vt / lambda1 - t_star).abs() <= 0.01 + 1e-12,
            "crossing {} vs analytic {t_star}",
            vt / lambda1
        );
    }

    #[test]
    fn valid_time_monotone_in_threshold_and_linear_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let errors: Vec<f64> = (0..300)
            .map(|k| 0.002 * k as f64 + 0.05 * rng.gen_range(0.0..1.0))
            .collect();
        let (truth, pred) = traj_from_errors(&errors, 2);
        let mut last = f64::INFINITY;
        for thr in [0.5, 0.4, 0.3, 0.2, 0.1] {
            let vt = valid_time(&truth, &pred, thr, 1.0).unwrap();
            assert!(vt <= last, "tightening to {thr} increased valid time");
            last = vt;
        }
        let a = valid_time(&truth, &pred, 0.3, 1.0).unwrap();
        let b = valid_time(&truth, &pred, 0.3, 2.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn valid_time_rejects_misalignment() {
        let (truth, _) = traj_from_errors(&[0.0, 0.0], 3);
        let (_, pred) = traj_from_errors(&[0.0, 0.0, 0.0], 3);
        assert!(valid_time(&truth, &pred, 0.4, 1.0).is_err());
    }

    fn small_reservoir(sigma: f64, seed: u64) -> Reservoir {
        Reservoir::build(&ReservoirParams {
            n_nodes: 50,
            input_dim: 3,
            spectral_radius: 0.8,
            pnz: 0.1,
            gamma: 8.0,
            sigma,
            seed,
        })
        .unwrap()
    }

    fn random_readout(n: usize, d: usize, seed: u64) -> Readout {
        let spec = FeatureSpec { kind: FeatureKind::LinearPlusSquares, include_bias: true };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = Array2::from_shape_fn((d, spec.feature_dim(n)), |_| rng.gen_range(-0.2..0.2));
        Readout::from_weights(spec, w, 1e-6)
    }

    #[test]
    fn rc_jacobian_matches_central_differences() {
        let res = small_reservoir(0.3, 3);
        let readout = random_readout(50, 3, 4);
        let rc = AutonomousRc::new(&res, &readout).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for probe in 0..100 {
            let r: Vec<f64> = (0..50).map(|_| rng.gen_range(-0.8..0.8)).collect();
            let v: Vec<f64> = (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vm = Array2::from_shape_fn((50, 1), |(i, _)| v[i]);
            let jv = rc_jacobian_apply(&res, &readout, &r, &vm.view()).unwrap();

            let mut fp = vec![0.0; 50];
            let mut fm = vec![0.0; 50];
            let rp: Vec<f64> = r.iter().zip(&v).map(|(x, dv)| x + h * dv).collect();
            let rm: Vec<f64> = r.iter().zip(&v).map(|(x, dv)| x - h * dv).collect();
            rc.vector_field(&rp, &mut fp);
            rc.vector_field(&rm, &mut fm);

            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..50 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                num += (jv[[i, 0]] - fd) * (jv[[i, 0]] - fd);
                den += fd * fd;
            }
            let rel = (num / den.max(1e-300)).sqrt();
            assert!(rel < 1e-5, "probe {probe}: relative error {rel}");
        }
    }

    #[test]
    fn rc_jacobian_with_sigma_zero_ignores_readout() {
        let res = small_reservoir(0.0, 7);
        let a = random_readout(50, 3, 8);
        let b = random_readout(50, 3, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let r: Vec<f64> = (0..50).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let v = Array2::from_shape_fn((50, 2), |_| rng.gen_range(-1.0..1.0));
        let ja = rc_jacobian_apply(&res, &a, &r, &v.view()).unwrap();
        let jb = rc_jacobian_apply(&res, &b, &r, &v.view()).unwrap();
        assert_eq!(ja, jb);
    }

    #[test]
    fn rc_jacobian_at_zero_with_zero_readout_is_gamma_a_minus_i() {
        // tanh'(0) = 1 and phi = 0, so J v = gamma (-v + A v).
        let res = small_reservoir(0.3, 11);
        let spec = FeatureSpec { kind: FeatureKind::LinearPlusSquares, include_bias: true };
        let zero = Readout::from_weights(spec, Array2::zeros((3, spec.feature_dim(50))), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v = Array2::from_shape_fn((50, 3), |_| rng.gen_range(-1.0..1.0));
        let jv = rc_jacobian_apply(&res, &zero, &vec![0.0; 50], &v.view()).unwrap();
        let mut av = Array2::zeros((50, 3));
        res.adjacency.matmul_block(&v.view(), &mut av);
        let gamma = res.params.gamma;
        for ((i, j), got) in jv.indexed_iter() {
            let want = gamma * (-v[[i, j]] + av[[i, j]]);
            assert!((got - want).abs() < 1e-12, "({i},{j}): {got} vs {want}");
        }
    }

    #[test]
    fn undriven_contracting_reservoir_has_negative_spectrum() {
        let res = small_reservoir(0.3, 13);
        let spec = FeatureSpec { kind: FeatureKind::LinearPlusSquares, include_bias: true };
        let zero = Readout::from_weights(spec, Array2::zeros((3, spec.feature_dim(50))), 0.0);
        let r0 = res.random_initial_state(14);
        let sp = lyapunov_spectrum_rc(&res, &zero, &r0, 3, 0.01, 20_000).unwrap();
        assert!(sp.escaped.is_none());
        assert!(
            sp.exponents.iter().all(|l| *l < 0.0),
            "contracting reservoir must have a negative spectrum: {:?}",
            sp.exponents
        );
    }

    #[test]
    fn spectrum_match_identical_and_tail() {
        let d = spectrum_with(vec![0.9, 0.0, -14.6]);
        let same = spectrum_with(vec![0.9, 0.0, -14.6, -20.0]);
        let report = spectrum_match(&d, &same, 0.05).unwrap();
        assert!(report.leading_match);
        assert!(report.tail_negative);
        assert!(report.per_exponent_error.iter().all(|e| *e == 0.0));

        let bad_tail = spectrum_with(vec![0.9, 0.0, -14.6, 0.2]);
        let report = spectrum_match(&d, &bad_tail, 0.05).unwrap();
        assert!(!report.tail_negative);
    }

    #[test]
    fn spectrum_match_hand_example() {
        let d = spectrum_with(vec![0.9, 0.0, -14.6]);
        let rc = spectrum_with(vec![0.88, -0.01, -13.0, -5.0]);
        let report = spectrum_match(&d, &rc, 0.05).unwrap();
        // lambda_1: |0.88 - 0.9| = 0.02 <= 0.05 * 0.9; zero exponent within
        // the absolute band 0.045; the third (negative) exponent is
        // informational only.
        assert!(report.leading_match);
        assert!((report.per_exponent_error[2] - 1.6).abs() < 1e-12);
        assert!(report.tail_negative);
    }

    #[test]
    fn spectrum_match_requires_enough_rc_exponents() {
        let d = spectrum_with(vec![0.9, 0.0, -14.6]);
        let rc = spectrum_with(vec![0.9, 0.0]);
        assert!(spectrum_match(&d, &rc, 0.05).is_err());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman_rank_correlation(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman_rank_correlation(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        let rho = spearman_rank_correlation(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]);
        assert!(rho > 0.5 && rho < 1.0, "rho = {rho}");
    }
}
