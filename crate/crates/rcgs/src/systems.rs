//! Chaotic driver systems: ground-truth trajectories and reference Lyapunov
//! spectra for the signals the reservoir learns to forecast.

use crate::error::{Error, Result};
use crate::lyapunov::{benettin_spectrum, Flow, LyapunovSpectrum, TangentSystem, GUARD_NORM};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Integration step used throughout for both Lorenz systems.
pub const DEFAULT_DT: f64 = 0.01;
/// Attractor transient discarded before any data is trusted, in time units.
pub const DEFAULT_TRANSIENT: f64 = 100.0;

/// A named chaotic ODE with analytic vector field and Jacobian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum DriverSystem {
    Lorenz63 { sigma: f64, rho: f64, beta: f64 },
    Lorenz96 { dim: usize, forcing: f64 },
}

impl DriverSystem {
    /// Lorenz63 with the classical parameters sigma=10, rho=28, beta=8/3.
    pub fn lorenz63() -> Self {
        DriverSystem::Lorenz63 { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 }
    }

    /// Cyclic Lorenz96 with `dim` sites; needs dim >= 4 so the coupled
    /// indices i+1, i-1, i-2 are distinct.
    pub fn lorenz96(dim: usize, forcing: f64) -> Result<Self> {
        if dim < 4 {
            return Err(Error::invalid(format!("lorenz96 needs dim >= 4, got {dim}")));
        }
        Ok(DriverSystem::Lorenz96 { dim, forcing })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DriverSystem::Lorenz63 { .. } => "lorenz63",
            DriverSystem::Lorenz96 { .. } => "lorenz96",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DriverSystem::Lorenz63 { .. } => 3,
            DriverSystem::Lorenz96 { dim, .. } => *dim,
        }
    }

    pub fn params(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        match self {
            DriverSystem::Lorenz63 { sigma, rho, beta } => {
                m.insert("sigma".into(), *sigma);
                m.insert("rho".into(), *rho);
                m.insert("beta".into(), *beta);
            }
            DriverSystem::Lorenz96 { dim, forcing } => {
                m.insert("dim".into(), *dim as f64);
                m.insert("forcing".into(), *forcing);
            }
        }
        m
    }

    /// A deterministic off-attractor starting point (the transient washes it
    /// onto the attractor; the uniform state of Lorenz96 is a fixed point, so
    /// it gets a kick on the first component).
    pub fn default_initial_state(&self) -> Vec<f64> {
        match self {
            DriverSystem::Lorenz63 { .. } => vec![1.0, 1.0, 1.0],
            DriverSystem::Lorenz96 { dim, forcing } => {
                let mut x = vec![*forcing; *dim];
                x[0] += 0.01;
                x
            }
        }
    }

    /// Checked vector-field evaluation; the public entry point for callers
    /// holding arbitrary states.
    pub fn eval(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.dim() {
            return Err(Error::dimension(format!(
                "state has length {}, {} has dimension {}",
                state.len(),
                self.name(),
                self.dim()
            )));
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("state contains a non-finite component"));
        }
        let mut out = vec![0.0; self.dim()];
        self.vector_field_unchecked(state, &mut out);
        Ok(out)
    }

    fn vector_field_unchecked(&self, x: &[f64], out: &mut [f64]) {
        match self {
            DriverSystem::Lorenz63 { sigma, rho, beta } => {
                out[0] = sigma * (x[1] - x[0]);
                out[1] = x[0] * (rho - x[2]) - x[1];
                out[2] = x[0] * x[1] - beta * x[2];
            }
            DriverSystem::Lorenz96 { dim, forcing } => {
                let d = *dim;
                for i in 0..d {
                    let ip1 = (i + 1) % d;
                    let im1 = (i + d - 1) % d;
                    let im2 = (i + d - 2) % d;
                    out[i] = (x[ip1] - x[im2]) * x[im1] - x[i] + forcing;
                }
            }
        }
    }

    /// Analytic Jacobian at `x`, written into `out` (dim x dim).
    pub fn jacobian(&self, x: &[f64], out: &mut Array2<f64>) {
        out.fill(0.0);
        match self {
            DriverSystem::Lorenz63 { sigma, rho, beta } => {
                out[[0, 0]] = -sigma;
                out[[0, 1]] = *sigma;
                out[[1, 0]] = rho - x[2];
                out[[1, 1]] = -1.0;
                out[[1, 2]] = -x[0];
                out[[2, 0]] = x[1];
                out[[2, 1]] = x[0];
                out[[2, 2]] = -beta;
            }
            DriverSystem::Lorenz96 { dim, .. } => {
                let d = *dim;
                for i in 0..d {
                    let ip1 = (i + 1) % d;
                    let im1 = (i + d - 1) % d;
                    let im2 = (i + d - 2) % d;
                    // += keeps coincident cyclic indices correct at small dim.
                    out[[i, ip1]] += x[im1];
                    out[[i, im2]] -= x[im1];
                    out[[i, im1]] += x[ip1] - x[im2];
                    out[[i, i]] -= 1.0;
                }
            }
        }
    }
}

impl Flow for DriverSystem {
    fn dim(&self) -> usize {
        DriverSystem::dim(self)
    }

    fn vector_field(&self, x: &[f64], out: &mut [f64]) {
        self.vector_field_unchecked(x, out);
    }
}

impl TangentSystem for DriverSystem {
    fn tangent_apply(&self, x: &[f64], v: &ArrayView2<f64>, out: &mut Array2<f64>) {
        let d = self.dim();
        let mut jac = Array2::zeros((d, d));
        self.jacobian(x, &mut jac);
        out.fill(0.0);
        for i in 0..d {
            for l in 0..d {
                let jil = jac[[i, l]];
                if jil != 0.0 {
                    for j in 0..v.ncols() {
                        out[[i, j]] += jil * v[[l, j]];
                    }
                }
            }
        }
    }
}

/// A uniformly sampled trajectory: sample k sits at time t0 + k dt exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    /// S x dim, one row per sample.
    pub states: Array2<f64>,
}

impl Trajectory {
    pub fn new(dt: f64, t0: f64, states: Array2<f64>) -> Result<Self> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
        }
        if states.nrows() == 0 {
            return Err(Error::invalid("trajectory needs at least one sample"));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("trajectory contains non-finite entries"));
        }
        Ok(Trajectory { dt, t0, states })
    }

    pub fn dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    /// Trajectory length in time units: (S-1) dt.
    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn time_at(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Copy of the sample range [start, end) with the start time adjusted.
    pub fn window(&self, start: usize, end: usize) -> Result<Trajectory> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "window [{start}, {end}) out of range for {} samples",
                self.len()
            )));
        }
        Ok(Trajectory {
            dt: self.dt,
            t0: self.time_at(start),
            states: self.states.slice(ndarray::s![start..end, ..]).to_owned(),
        })
    }
}

/// Classical fourth-order Runge-Kutta. The returned trajectory includes the
/// initial state, so it has n_steps + 1 rows.
pub fn integrate_rk4<F: Flow>(
    system: &F,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if dt <= 0.0 {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(Error::invalid("n_steps must be at least 1"));
    }
    if x0.len() != system.dim() {
        return Err(Error::dimension(format!(
            "x0 has length {}, system dimension is {}",
            x0.len(),
            system.dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("x0 contains a non-finite component"));
    }

    let d = system.dim();
    let mut states = Array2::zeros((n_steps + 1, d));
    let mut x = x0.to_vec();
    states.row_mut(0).assign(&ndarray::ArrayView1::from(&x[..]));

    let mut stepper = Rk4Scratch::new(d);
    for step in 0..n_steps {
        stepper.step(system, &mut x, dt);
        let norm = crate::linalg::norm(&x);
        if !norm.is_finite() || norm > GUARD_NORM {
            return Err(Error::Diverged { step: step + 1, norm, guard: GUARD_NORM });
        }
        states.row_mut(step + 1).assign(&ndarray::ArrayView1::from(&x[..]));
    }
    Trajectory::new(dt, 0.0, states)
}

/// Integrate without storing samples; used to relax onto the attractor.
pub fn relax_onto_attractor<F: Flow>(
    system: &F,
    x0: &[f64],
    dt: f64,
    transient_time: f64,
) -> Result<Vec<f64>> {
    let n_steps = (transient_time / dt).round() as usize;
    if n_steps == 0 {
        return Ok(x0.to_vec());
    }
    let mut x = x0.to_vec();
    let mut stepper = Rk4Scratch::new(system.dim());
    for step in 0..n_steps {
        stepper.step(system, &mut x, dt);
        let norm = crate::linalg::norm(&x);
        if !norm.is_finite() || norm > GUARD_NORM {
            return Err(Error::Diverged { step: step + 1, norm, guard: GUARD_NORM });
        }
    }
    Ok(x)
}

struct Rk4Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
}

impl Rk4Scratch {
    fn new(d: usize) -> Self {
        Rk4Scratch {
            k1: vec![0.0; d],
            k2: vec![0.0; d],
            k3: vec![0.0; d],
            k4: vec![0.0; d],
            stage: vec![0.0; d],
        }
    }

    fn step<F: Flow>(&mut self, system: &F, x: &mut [f64], dt: f64) {
        let d = x.len();
        system.vector_field(x, &mut self.k1);
        for i in 0..d {
            self.stage[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        system.vector_field(&self.stage, &mut self.k2);
        for i in 0..d {
            self.stage[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        system.vector_field(&self.stage, &mut self.k3);
        for i in 0..d {
            self.stage[i] = x[i] + dt * self.k3[i];
        }
        system.vector_field(&self.stage, &mut self.k4);
        for i in 0..d {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Reference Lyapunov spectrum of a driver system. The state is first relaxed
/// onto the attractor for [`DEFAULT_TRANSIENT`] time units; a diverging
/// trajectory is an error here (the driver itself is broken), while mere
/// non-convergence of the running means is flagged on the result.
pub fn lyapunov_spectrum_ode(
    system: &DriverSystem,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    k: usize,
    renorm_interval: usize,
) -> Result<LyapunovSpectrum> {
    if k == 0 || k > system.dim() {
        return Err(Error::invalid(format!(
            "k = {k} must satisfy 1 <= k <= dim = {}",
            system.dim()
        )));
    }
    let on_attractor = relax_onto_attractor(system, x0, dt, DEFAULT_TRANSIENT)?;
    let spectrum = benettin_spectrum(
        system,
        &on_attractor,
        dt,
        n_steps,
        k,
        renorm_interval,
        DEFAULT_TRANSIENT,
    )?;
    if let Some(esc) = spectrum.escaped {
        return Err(Error::Diverged { step: esc.step, norm: esc.norm, guard: GUARD_NORM });
    }
    Ok(spectrum)
}

/// Per-component affine transform to zero mean and unit (n-1) standard
/// deviation, kept so forecasts can be mapped back to raw units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    /// Fit to a trajectory (sample statistics, n-1 denominator).
    pub fn fit(traj: &Trajectory) -> Result<Self> {
        let s = traj.len();
        if s < 2 {
            return Err(Error::invalid("standardization needs at least 2 samples"));
        }
        let d = traj.dim();
        let mut mean = vec![0.0; d];
        let mut scale = vec![0.0; d];
        for j in 0..d {
            let col = traj.states.column(j);
            let m = col.sum() / s as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (s - 1) as f64;
            if var <= 0.0 {
                return Err(Error::ZeroVariance { component: j });
            }
            mean[j] = m;
            scale[j] = var.sqrt();
        }
        Ok(Standardization { mean, scale })
    }

    pub fn apply(&self, traj: &Trajectory) -> Result<Trajectory> {
        self.check_dim(traj)?;
        let mut states = traj.states.clone();
        for j in 0..self.mean.len() {
            let (m, s) = (self.mean[j], self.scale[j]);
            states.column_mut(j).mapv_inplace(|v| (v - m) / s);
        }
        Trajectory::new(traj.dt, traj.t0, states)
    }

    pub fn invert(&self, traj: &Trajectory) -> Result<Trajectory> {
        self.check_dim(traj)?;
        let mut states = traj.states.clone();
        for j in 0..self.mean.len() {
            let (m, s) = (self.mean[j], self.scale[j]);
            states.column_mut(j).mapv_inplace(|v| v * s + m);
        }
        Trajectory::new(traj.dt, traj.t0, states)
    }

    fn check_dim(&self, traj: &Trajectory) -> Result<()> {
        if traj.dim() != self.mean.len() {
            return Err(Error::dimension(format!(
                "transform has {} components, trajectory has {}",
                self.mean.len(),
                traj.dim()
            )));
        }
        Ok(())
    }
}

/// Standardize each component to sample mean 0 and sample std 1, returning
/// the transform for inversion.
pub fn standardize(traj: &Trajectory) -> Result<(Trajectory, Standardization)> {
    let transform = Standardization::fit(traj)?;
    let standardized = transform.apply(traj)?;
    Ok((standardized, transform))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lorenz63_fixed_point_and_substitution() {
        let sys = DriverSystem::lorenz63();
        assert_eq!(sys.eval(&[0.0, 0.0, 0.0]).unwrap(), vec![0.0, 0.0, 0.0]);

        let f = sys.eval(&[1.0, 1.0, 1.0]).unwrap();
        assert!((f[0] - 0.0).abs() < 1e-15);
        assert!((f[1] - 26.0).abs() < 1e-12);
        assert!((f[2] - (-5.0 / 3.0)).abs() < 1e-12);

        let f = sys.eval(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(f, vec![-10.0, 28.0, 0.0]);
    }

    #[test]
    fn lorenz63_rejects_non_finite() {
        let sys = DriverSystem::lorenz63();
        assert!(sys.eval(&[f64::NAN, 0.0, 0.0]).is_err());
        assert!(sys.eval(&[f64::INFINITY, 0.0, 0.0]).is_err());
    }

    #[test]
    fn lorenz96_uniform_state_is_fixed_point() {
        for dim in [4usize, 5, 9] {
            let sys = DriverSystem::lorenz96(dim, 8.0).unwrap();
            let f = sys.eval(&vec![8.0; dim]).unwrap();
            assert!(f.iter().all(|v| v.abs() < 1e-12), "dim {dim}: {f:?}");
        }
    }

    #[test]
    fn lorenz96_substitution() {
        let sys = DriverSystem::lorenz96(5, 0.0).unwrap();
        // (x_{i+1} - x_{i-2}) x_{i-1} - x_i + F at e_0: only the -x_0 term
        // survives (every product has a zero factor).
        let f = sys.eval(&[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f, vec![-1.0, 0.0, 0.0, 0.0, 0.0]);

        let sys = DriverSystem::lorenz96(5, 8.0).unwrap();
        let f = sys.eval(&[0.0; 5]).unwrap();
        assert_eq!(f, vec![8.0; 5]);
    }

    #[test]
    fn lorenz96_needs_dim_4() {
        assert!(DriverSystem::lorenz96(3, 8.0).is_err());
        assert!(DriverSystem::lorenz96(4, 8.0).is_ok());
    }

    #[test]
    fn jacobians_match_central_differences() {
        let systems = [
            DriverSystem::lorenz63(),
            DriverSystem::lorenz96(5, 8.0).unwrap(),
            DriverSystem::lorenz96(4, 8.0).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sys in &systems {
            let d = sys.dim();
            let mut jac = Array2::zeros((d, d));
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-10.0..10.0)).collect();
                sys.jacobian(&x, &mut jac);
                let h = 1e-5;
                for col in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[col] += h;
                    xm[col] -= h;
                    let fp = sys.eval(&xp).unwrap();
                    let fm = sys.eval(&xm).unwrap();
                    for row in 0..d {
                        let fd = (fp[row] - fm[row]) / (2.0 * h);
                        let a = jac[[row, col]];
                        let denom = a.abs().max(1.0);
                        assert!(
                            (a - fd).abs() / denom < 1e-6,
                            "{}: J[{row},{col}] = {a}, fd = {fd}",
                            sys.name()
                        );
                    }
                }
            }
        }
    }

    /// du/dt = -u, for checking the integrator against the exact solution.
    struct ExponentialDecay;

    impl Flow for ExponentialDecay {
        fn dim(&self) -> usize {
            1
        }
        fn vector_field(&self, x: &[f64], out: &mut [f64]) {
            out[0] = -x[0];
        }
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let t = integrate_rk4(&ExponentialDecay, &[1.0], 0.1, 1).unwrap();
        assert_eq!(t.len(), 2);
        assert!((t.states[[1, 0]] - 0.90483742).abs() < 1e-7, "got {}", t.states[[1, 0]]);
    }

    /// Zero vector field: state never moves.
    struct ZeroField(usize);

    impl Flow for ZeroField {
        fn dim(&self) -> usize {
            self.0
        }
        fn vector_field(&self, _x: &[f64], out: &mut [f64]) {
            out.fill(0.0);
        }
    }

    #[test]
    fn rk4_zero_field_keeps_state() {
        let t = integrate_rk4(&ZeroField(3), &[1.0, -2.0, 0.5], 0.1, 1).unwrap();
        assert_eq!(t.states.row(1).to_vec(), vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn rk4_self_convergence_order_on_lorenz63() {
        let sys = DriverSystem::lorenz63();
        let x0 = relax_onto_attractor(&sys, &[1.0, 1.0, 1.0], 0.01, 50.0).unwrap();
        // Integrate 1 time unit at dt, dt/2, dt/4; Richardson ratio ~ 2^4.
        let run = |dt: f64| {
            let n = (1.0 / dt).round() as usize;
            let t = integrate_rk4(&sys, &x0, dt, n).unwrap();
            t.states.row(t.len() - 1).to_vec()
        };
        let a = run(0.02);
        let b = run(0.01);
        let c = run(0.005);
        let err_ab: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let err_bc: f64 = b.iter().zip(&c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let order = (err_ab / err_bc).log2();
        assert!(
            (3.8..=4.2).contains(&order),
            "observed order {order} (errors {err_ab:.3e}, {err_bc:.3e})"
        );
    }

    #[test]
    fn rk4_divergence_guard_identifies_step() {
        // Lorenz63 with a hugely unstable rho at a big dt blows up fast.
        let sys = DriverSystem::Lorenz63 { sigma: 10.0, rho: 28.0, beta: 8.0 / 3.0 };
        let err = integrate_rk4(&sys, &[1e11, 1e11, 1e11], 0.1, 100).unwrap_err();
        match err {
            Error::Diverged { step, .. } => assert!(step >= 1),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn trajectory_time_indexing_is_exact() {
        let states = Array2::zeros((5, 2));
        let t = Trajectory::new(0.25, 1.0, states).unwrap();
        assert_eq!(t.time_at(0), 1.0);
        assert_eq!(t.time_at(4), 2.0);
        assert_eq!(t.duration(), 1.0);
    }

    #[test]
    fn standardize_two_sample_series() {
        // Hand computation under the (n-1) convention: mean 1, sample std
        // sqrt((1 + 1) / 1) = sqrt(2), so {0, 2} maps to -+1/sqrt(2) and the
        // standardized series has sample std exactly 1.
        let states = ndarray::arr2(&[[0.0], [2.0]]);
        let t = Trajectory::new(1.0, 0.0, states).unwrap();
        let (s, tf) = standardize(&t).unwrap();
        assert!((tf.mean[0] - 1.0).abs() < 1e-15);
        assert!((tf.scale[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.states[[0, 0]] + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((s.states[[1, 0]] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn standardize_errors_and_identity() {
        let constant = Trajectory::new(1.0, 0.0, ndarray::arr2(&[[1.0, 5.0], [2.0, 5.0]])).unwrap();
        match standardize(&constant).unwrap_err() {
            Error::ZeroVariance { component } => assert_eq!(component, 1),
            other => panic!("expected zero variance, got {other}"),
        }

        let one = Trajectory::new(1.0, 0.0, ndarray::arr2(&[[1.0]])).unwrap();
        assert!(standardize(&one).is_err());

        // Already standardized data: transform is (0, 1) and round-trips.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = Array2::from_shape_fn((5000, 2), |_| rng.gen_range(-1.0..1.0));
        let t = Trajectory::new(0.1, 0.0, raw).unwrap();
        let (s1, _) = standardize(&t).unwrap();
        let (s2, tf2) = standardize(&s1).unwrap();
        for j in 0..2 {
            assert!(tf2.mean[j].abs() < 1e-12);
            assert!((tf2.scale[j] - 1.0).abs() < 1e-12);
        }
        for (a, b) in s1.states.iter().zip(s2.states.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn standardize_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw = Array2::from_shape_fn((100, 3), |_| rng.gen_range(-5.0..5.0));
        let t = Trajectory::new(0.01, 3.0, raw.clone()).unwrap();
        let (s, tf) = standardize(&t).unwrap();
        let back = tf.invert(&s).unwrap();
        for (a, b) in raw.iter().zip(back.states.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
