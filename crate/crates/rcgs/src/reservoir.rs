//! The random tanh reservoir: sparse adjacency scaled to a target spectral
//! radius, dense input weights, and RK4 evolution of
//!     dr/dt = gamma (-r + tanh(A r + sigma W u))
//! in driven (listening) and autonomous (forecast) modes.

use crate::error::{Error, Result};
use crate::linalg::{dominant_eigenvalue, mix_seeds, norm, SparseMatrix};
use crate::lyapunov::GUARD_NORM;
use crate::systems::Trajectory;
use crate::training::Readout;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_GAMMA: f64 = 8.0;
pub const DEFAULT_SIGMA: f64 = 0.3;

// Distinct stream labels so the adjacency draw never depends on sigma or the
// input-matrix draw, keeping matrices stable across parameter sweeps.
const ADJACENCY_STREAM: u64 = 0x41;
const INPUT_STREAM: u64 = 0x57;

/// Hyperparameters and the seed that fully determine a reservoir.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservoirParams {
    /// Number of reservoir nodes N.
    pub n_nodes: usize,
    /// Input dimension D.
    pub input_dim: usize,
    /// Target spectral radius of the adjacency matrix.
    pub spectral_radius: f64,
    /// Probability that an adjacency entry is nonzero.
    pub pnz: f64,
    /// Timescale constant (1/time units).
    pub gamma: f64,
    /// Input weighting; applied at evaluation time, not baked into W.
    pub sigma: f64,
    pub seed: u64,
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes == 0 {
            return Err(Error::invalid("n_nodes must be positive"));
        }
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be positive"));
        }
        if self.n_nodes <= self.input_dim {
            return Err(Error::invalid(format!(
                "n_nodes = {} must exceed input_dim = {} (the reservoir embeds the input)",
                self.n_nodes, self.input_dim
            )));
        }
        if !(self.spectral_radius > 0.0) || !self.spectral_radius.is_finite() {
            return Err(Error::invalid(format!(
                "spectral_radius must be positive, got {}",
                self.spectral_radius
            )));
        }
        if !(self.pnz > 0.0 && self.pnz <= 1.0) {
            return Err(Error::invalid(format!("pnz must lie in (0, 1], got {}", self.pnz)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be non-negative, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// A constructed reservoir. (params, seed) -> matrices is bit-reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct Reservoir {
    pub params: ReservoirParams,
    /// Sparse N x N adjacency, rescaled to the target spectral radius.
    pub adjacency: SparseMatrix,
    /// Dense N x D input matrix; sigma is applied at evaluation time.
    pub input_matrix: Array2<f64>,
}

impl Reservoir {
    pub fn build(params: &ReservoirParams) -> Result<Self> {
        params.validate()?;
        let adjacency = build_adjacency(params)?;
        let input_matrix = build_input_matrix(params);
        Ok(Reservoir { params: params.clone(), adjacency, input_matrix })
    }

    pub fn n_nodes(&self) -> usize {
        self.params.n_nodes
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    /// Checked evaluation of the reservoir vector field at (r, u).
    pub fn vector_field(&self, r: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if r.len() != self.n_nodes() || u.len() != self.input_dim() {
            return Err(Error::dimension(format!(
                "r has length {} (need {}), u has length {} (need {})",
                r.len(),
                self.n_nodes(),
                u.len(),
                self.input_dim()
            )));
        }
        if r.iter().chain(u.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("r or u contains a non-finite component"));
        }
        let mut pre = vec![0.0; self.n_nodes()];
        self.adjacency.matvec(r, &mut pre);
        self.add_scaled_input(u, &mut pre);
        let mut out = vec![0.0; self.n_nodes()];
        self.finish_field(r, &pre, &mut out);
        Ok(out)
    }

    /// pre += sigma * W u
    pub(crate) fn add_scaled_input(&self, u: &[f64], pre: &mut [f64]) {
        let sigma = self.params.sigma;
        if sigma == 0.0 {
            return;
        }
        let d = self.input_dim();
        for (i, p) in pre.iter_mut().enumerate() {
            let row = self.input_matrix.row(i);
            let mut acc = 0.0;
            for j in 0..d {
                acc += row[j] * u[j];
            }
            *p += sigma * acc;
        }
    }

    /// out = gamma (-r + tanh(pre))
    pub(crate) fn finish_field(&self, r: &[f64], pre: &[f64], out: &mut [f64]) {
        let gamma = self.params.gamma;
        for i in 0..r.len() {
            out[i] = gamma * (-r[i] + pre[i].tanh());
        }
    }

    /// Deterministic uniform [-1, 1]^N initial state for auxiliary tests.
    pub fn random_initial_state(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..self.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

/// Random sparse adjacency: entries independently nonzero with probability
/// pnz, values uniform on [-1, 1], then globally rescaled so the dominant
/// eigenvalue magnitude equals the requested spectral radius.
pub fn build_adjacency(params: &ReservoirParams) -> Result<SparseMatrix> {
    if params.n_nodes == 0 {
        return Err(Error::invalid("n_nodes must be positive"));
    }
    if !(params.pnz > 0.0 && params.pnz <= 1.0) {
        return Err(Error::invalid(format!("pnz must lie in (0, 1], got {}", params.pnz)));
    }
    if !(params.spectral_radius > 0.0) || !params.spectral_radius.is_finite() {
        return Err(Error::invalid(format!(
            "spectral_radius must be positive, got {}",
            params.spectral_radius
        )));
    }
    let n = params.n_nodes;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seeds(&[params.seed, ADJACENCY_STREAM]));
    let mut m = SparseMatrix::new(n, n);
    for i in 0..n {
        for j in 0..n {
            if rng.gen::<f64>() < params.pnz {
                m.push(i, j, rng.gen_range(-1.0..1.0));
            }
        }
    }
    if m.nnz() == 0 {
        return Err(Error::invalid(format!(
            "adjacency draw has no nonzero entries (n = {n}, pnz = {}); \
             use a different seed or a larger pnz",
            params.pnz
        )));
    }
    let raw = dominant_eigenvalue(&m)?;
    if raw.value <= 0.0 {
        return Err(Error::invalid(
            "adjacency draw is nilpotent (spectral radius 0); use a different seed".to_string(),
        ));
    }
    m.scale(params.spectral_radius / raw.value);
    Ok(m)
}

/// Magnitude of the dominant eigenvalue of a sparse matrix.
pub fn estimate_spectral_radius(m: &SparseMatrix) -> Result<f64> {
    dominant_eigenvalue(m).map(|e| e.value)
}

/// Dense N x D input matrix, i.i.d. uniform on [-1, 1]. Depends only on
/// (seed, n_nodes, input_dim): sweeping sigma, SR, or pnz leaves it fixed.
pub fn build_input_matrix(params: &ReservoirParams) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seeds(&[params.seed, INPUT_STREAM]));
    let (n, d) = (params.n_nodes, params.input_dim);
    let mut w = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            w[[i, j]] = rng.gen_range(-1.0..1.0);
        }
    }
    w
}

/// Reservoir state samples r(t), one row per input sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirTrajectory {
    pub dt: f64,
    /// S x N.
    pub states: Array2<f64>,
}

/// RK4 stepper for the driven reservoir; the input is linearly interpolated
/// at the half step (the integration step equals the input sampling step).
pub struct DrivenStepper<'a> {
    res: &'a Reservoir,
    r: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
    pre: Vec<f64>,
    u_mid: Vec<f64>,
    steps_taken: usize,
}

impl<'a> DrivenStepper<'a> {
    pub fn new(res: &'a Reservoir, r0: &[f64]) -> Result<Self> {
        let n = res.n_nodes();
        if r0.len() != n {
            return Err(Error::dimension(format!("r0 has length {}, reservoir has {n} nodes", r0.len())));
        }
        if r0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("r0 contains a non-finite component"));
        }
        Ok(DrivenStepper {
            res,
            r: r0.to_vec(),
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
            pre: vec![0.0; n],
            u_mid: vec![0.0; res.input_dim()],
            steps_taken: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.r
    }

    fn eval_field(&mut self, u: &[f64], which: usize) {
        self.res.adjacency.matvec(&self.stage, &mut self.pre);
        self.res.add_scaled_input(u, &mut self.pre);
        let out = match which {
            0 => &mut self.k1,
            1 => &mut self.k2,
            2 => &mut self.k3,
            _ => &mut self.k4,
        };
        let gamma = self.res.params.gamma;
        for i in 0..self.stage.len() {
            out[i] = gamma * (-self.stage[i] + self.pre[i].tanh());
        }
    }

    /// Advance one step of size dt from input sample u0 to u1.
    pub fn step(&mut self, u0: &[f64], u1: &[f64], dt: f64) -> Result<()> {
        let n = self.r.len();
        for j in 0..self.u_mid.len() {
            self.u_mid[j] = 0.5 * (u0[j] + u1[j]);
        }

        self.stage.copy_from_slice(&self.r);
        self.eval_field(u0, 0);
        for i in 0..n {
            self.stage[i] = self.r[i] + 0.5 * dt * self.k1[i];
        }
        let u_mid = std::mem::take(&mut self.u_mid);
        self.eval_field(&u_mid, 1);
        for i in 0..n {
            self.stage[i] = self.r[i] + 0.5 * dt * self.k2[i];
        }
        self.eval_field(&u_mid, 2);
        self.u_mid = u_mid;
        for i in 0..n {
            self.stage[i] = self.r[i] + dt * self.k3[i];
        }
        self.eval_field(u1, 3);
        for i in 0..n {
            self.r[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        self.steps_taken += 1;

        let rn = norm(&self.r);
        if !rn.is_finite() || rn > GUARD_NORM {
            return Err(Error::Diverged { step: self.steps_taken, norm: rn, guard: GUARD_NORM });
        }
        Ok(())
    }
}

/// Drive the reservoir with an input trajectory, recording r at every input
/// sample time. The integration step is the input step.
pub fn drive(res: &Reservoir, input: &Trajectory, r0: &[f64]) -> Result<ReservoirTrajectory> {
    if input.dim() != res.input_dim() {
        return Err(Error::dimension(format!(
            "input dimension {} does not match reservoir input_dim {}",
            input.dim(),
            res.input_dim()
        )));
    }
    if input.len() < 2 {
        return Err(Error::invalid("input must have at least 2 samples"));
    }
    let n = res.n_nodes();
    let s = input.len();
    let mut states = Array2::zeros((s, n));
    let mut stepper = DrivenStepper::new(res, r0)?;
    states.row_mut(0).assign(&ndarray::ArrayView1::from(stepper.state()));
    for k in 0..s - 1 {
        let u0 = input.states.row(k);
        let u1 = input.states.row(k + 1);
        stepper.step(
            u0.as_slice().expect("contiguous row"),
            u1.as_slice().expect("contiguous row"),
            input.dt,
        )?;
        states.row_mut(k + 1).assign(&ndarray::ArrayView1::from(stepper.state()));
    }
    Ok(ReservoirTrajectory { dt: input.dt, states })
}

/// RK4 stepper for the autonomous (forecast) reservoir, with the readout
/// substituted for the input at every substage.
pub struct AutonomousStepper<'a> {
    res: &'a Reservoir,
    readout: &'a Readout,
    r: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    stage: Vec<f64>,
    pre: Vec<f64>,
    feat: Vec<f64>,
    phi: Vec<f64>,
    steps_taken: usize,
}

impl<'a> AutonomousStepper<'a> {
    pub fn new(res: &'a Reservoir, readout: &'a Readout, r0: &[f64]) -> Result<Self> {
        let n = res.n_nodes();
        if readout.feature_dim() != readout.spec.feature_dim(n)
            || readout.output_dim() != res.input_dim()
        {
            return Err(Error::dimension(format!(
                "readout maps {} features to {} outputs; reservoir needs {} -> {}",
                readout.feature_dim(),
                readout.output_dim(),
                readout.spec.feature_dim(n),
                res.input_dim()
            )));
        }
        if r0.len() != n {
            return Err(Error::dimension(format!("r0 has length {}, reservoir has {n} nodes", r0.len())));
        }
        Ok(AutonomousStepper {
            res,
            readout,
            r: r0.to_vec(),
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            stage: vec![0.0; n],
            pre: vec![0.0; n],
            feat: vec![0.0; readout.feature_dim()],
            phi: vec![0.0; res.input_dim()],
            steps_taken: 0,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.r
    }

    /// phi(r) at the current state.
    pub fn observe(&mut self) -> Vec<f64> {
        self.readout.evaluate_into(&self.r, &mut self.feat, &mut self.phi);
        self.phi.clone()
    }

    fn eval_field(&mut self, which: usize) {
        self.readout.evaluate_into(&self.stage, &mut self.feat, &mut self.phi);
        self.res.adjacency.matvec(&self.stage, &mut self.pre);
        let phi = std::mem::take(&mut self.phi);
        self.res.add_scaled_input(&phi, &mut self.pre);
        self.phi = phi;
        let out = match which {
            0 => &mut self.k1,
            1 => &mut self.k2,
            2 => &mut self.k3,
            _ => &mut self.k4,
        };
        let gamma = self.res.params.gamma;
        for i in 0..self.stage.len() {
            out[i] = gamma * (-self.stage[i] + self.pre[i].tanh());
        }
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let n = self.r.len();
        self.stage.copy_from_slice(&self.r);
        self.eval_field(0);
        for i in 0..n {
            self.stage[i] = self.r[i] + 0.5 * dt * self.k1[i];
        }
        self.eval_field(1);
        for i in 0..n {
            self.stage[i] = self.r[i] + 0.5 * dt * self.k2[i];
        }
        self.eval_field(2);
        for i in 0..n {
            self.stage[i] = self.r[i] + dt * self.k3[i];
        }
        self.eval_field(3);
        for i in 0..n {
            self.r[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        self.steps_taken += 1;

        let rn = norm(&self.r);
        if !rn.is_finite() || rn > GUARD_NORM {
            return Err(Error::Diverged { step: self.steps_taken, norm: rn, guard: GUARD_NORM });
        }
        Ok(())
    }
}

/// Closed-loop forecast from r0 (the end state of a synchronizing drive).
/// Returns the predicted observable and the internal state path; both have
/// n_steps + 1 rows, starting at the forecast origin.
pub fn forecast(
    res: &Reservoir,
    readout: &Readout,
    r0: &[f64],
    dt: f64,
    n_steps: usize,
) -> Result<(Trajectory, ReservoirTrajectory)> {
    if dt <= 0.0 {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    let n = res.n_nodes();
    let d = res.input_dim();
    let mut stepper = AutonomousStepper::new(res, readout, r0)?;
    let mut predicted = Array2::zeros((n_steps + 1, d));
    let mut states = Array2::zeros((n_steps + 1, n));
    predicted.row_mut(0).assign(&ndarray::ArrayView1::from(&stepper.observe()[..]));
    states.row_mut(0).assign(&ndarray::ArrayView1::from(stepper.state()));
    for k in 0..n_steps {
        stepper.step(dt)?;
        predicted.row_mut(k + 1).assign(&ndarray::ArrayView1::from(&stepper.observe()[..]));
        states.row_mut(k + 1).assign(&ndarray::ArrayView1::from(stepper.state()));
    }
    Ok((Trajectory::new(dt, 0.0, predicted)?, ReservoirTrajectory { dt, states }))
}
