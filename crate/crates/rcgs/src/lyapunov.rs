//! Lyapunov spectra by the Benettin method: evolve a block of tangent
//! vectors alongside the state with RK4 and re-orthonormalize periodically,
//! averaging the log of the QR diagonal.

use crate::error::{Error, Result};
use crate::linalg::orthonormalize_columns;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// An autonomous vector field dx/dt = f(x).
pub trait Flow {
    fn dim(&self) -> usize;

    fn vector_field(&self, x: &[f64], out: &mut [f64]);
}

/// A flow together with its tangent linearization (Jacobian-vector products).
pub trait TangentSystem: Flow {
    /// out = J(x) v for each column v of the block.
    fn tangent_apply(&self, x: &[f64], v: &ArrayView2<f64>, out: &mut Array2<f64>);

    /// Field and tangent block in one call; implementors override this when
    /// the two share intermediate quantities.
    fn field_and_tangent(
        &self,
        x: &[f64],
        v: &ArrayView2<f64>,
        out_field: &mut [f64],
        out_tangent: &mut Array2<f64>,
    ) {
        self.vector_field(x, out_field);
        self.tangent_apply(x, v, out_tangent);
    }
}

/// The state left the admissible region during tangent evolution.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EscapeInfo {
    pub step: usize,
    pub time: f64,
    pub norm: f64,
}

/// A computed Lyapunov spectrum with its convergence diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovSpectrum {
    /// Exponents in 1/time units, sorted non-increasing.
    pub exponents: Vec<f64>,
    /// Number of exponents computed.
    pub k: usize,
    pub dt: f64,
    pub steps: usize,
    pub renorm_interval: usize,
    /// Time units of transient discarded before tangent evolution started.
    pub transient_discarded: f64,
    /// Per-exponent running-mean drift (max minus min) over the final 20%
    /// of the renormalization history: the tolerance actually achieved.
    pub drift: Vec<f64>,
    /// Convergence target for the drift: 1% of |lambda_1|.
    pub tolerance: f64,
    /// True when no escape occurred and every drift is below tolerance.
    pub converged: bool,
    pub escaped: Option<EscapeInfo>,
    /// Running-mean estimates per renormalization (downsampled to at most
    /// `HISTORY_CAP` rows), columns ordered like `exponents`.
    pub convergence_history: Vec<Vec<f64>>,
}

impl LyapunovSpectrum {
    pub fn lambda1(&self) -> f64 {
        self.exponents[0]
    }
}

pub const DEFAULT_RENORM_INTERVAL: usize = 10;
pub const GUARD_NORM: f64 = 1e12;
const HISTORY_CAP: usize = 512;
const TOLERANCE_FLOOR: f64 = 0.01;

/// Evolve `k` tangent vectors from `x0` (assumed already on the attractor)
/// and return the spectrum estimate. Escapes are reported in the result,
/// not as errors, so callers can decide how hard to fail.
pub fn benettin_spectrum<S: TangentSystem>(
    sys: &S,
    x0: &[f64],
    dt: f64,
    n_steps: usize,
    k: usize,
    renorm_interval: usize,
    transient_discarded: f64,
) -> Result<LyapunovSpectrum> {
    let n = sys.dim();
    if x0.len() != n {
        return Err(Error::dimension(format!("x0 has length {}, system dimension is {n}", x0.len())));
    }
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k <= dim = {n}")));
    }
    if dt <= 0.0 || n_steps == 0 || renorm_interval == 0 {
        return Err(Error::invalid("dt > 0, n_steps >= 1, renorm_interval >= 1 required"));
    }

    let mut x = x0.to_vec();
    let mut v = Array2::zeros((n, k));
    for j in 0..k {
        v[[j, j]] = 1.0;
    }

    let mut sums = vec![0.0; k];
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut elapsed = 0.0;
    let mut escaped = None;

    let mut stepper = TangentStepper::new(n, k);

    for step in 0..n_steps {
        stepper.step(sys, &mut x, &mut v, dt);
        let xn = crate::linalg::norm(&x);
        if !xn.is_finite() || xn > GUARD_NORM {
            escaped = Some(EscapeInfo { step, time: (step + 1) as f64 * dt, norm: xn });
            break;
        }
        if (step + 1) % renorm_interval == 0 {
            let diag = orthonormalize_columns(&mut v);
            if diag.iter().any(|d| !d.is_finite() || *d <= 0.0) {
                escaped = Some(EscapeInfo { step, time: (step + 1) as f64 * dt, norm: xn });
                break;
            }
            elapsed += renorm_interval as f64 * dt;
            for (s, d) in sums.iter_mut().zip(&diag) {
                *s += d.ln();
            }
            history.push(sums.iter().map(|s| s / elapsed).collect());
        }
    }

    if history.is_empty() {
        return Err(Error::NonConvergence(
            "no complete renormalization interval before termination".into(),
        ));
    }

    let raw: Vec<f64> = sums.iter().map(|s| s / elapsed).collect();

    // Sort exponents descending, carrying the history columns along.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| raw[b].partial_cmp(&raw[a]).unwrap_or(std::cmp::Ordering::Equal));
    let exponents: Vec<f64> = order.iter().map(|&i| raw[i]).collect();
    let history: Vec<Vec<f64>> =
        history.into_iter().map(|row| order.iter().map(|&i| row[i]).collect()).collect();

    // Drift of the running means over the final 20% of the history.
    let tail_start = (history.len() as f64 * 0.8).floor() as usize;
    let tail = &history[tail_start.min(history.len() - 1)..];
    let mut drift = vec![0.0; k];
    for j in 0..k {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in tail {
            lo = lo.min(row[j]);
            hi = hi.max(row[j]);
        }
        drift[j] = if tail.len() >= 2 { hi - lo } else { f64::INFINITY };
    }

    let tolerance = 0.01 * exponents[0].abs().max(TOLERANCE_FLOOR);
    let converged = escaped.is_none() && drift.iter().all(|d| *d < tolerance);

    // Downsample the stored history; diagnostics above used the full record.
    let stride = history.len().div_ceil(HISTORY_CAP);
    let convergence_history: Vec<Vec<f64>> =
        history.into_iter().step_by(stride.max(1)).collect();

    Ok(LyapunovSpectrum {
        exponents,
        k,
        dt,
        steps: n_steps,
        renorm_interval,
        transient_discarded,
        drift,
        tolerance,
        converged,
        escaped,
        convergence_history,
    })
}

/// Scratch buffers for one augmented RK4 step (state + tangent block).
struct TangentStepper {
    kx: [Vec<f64>; 4],
    kv: [Array2<f64>; 4],
    x_stage: Vec<f64>,
    v_stage: Array2<f64>,
}

impl TangentStepper {
    fn new(n: usize, k: usize) -> Self {
        TangentStepper {
            kx: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            kv: [
                Array2::zeros((n, k)),
                Array2::zeros((n, k)),
                Array2::zeros((n, k)),
                Array2::zeros((n, k)),
            ],
            x_stage: vec![0.0; n],
            v_stage: Array2::zeros((n, k)),
        }
    }

    fn step<S: TangentSystem>(&mut self, sys: &S, x: &mut [f64], v: &mut Array2<f64>, dt: f64) {
        let n = x.len();

        let (kx0, rest) = self.kx.split_at_mut(1);
        let (kx1, rest) = rest.split_at_mut(1);
        let (kx2, kx3) = rest.split_at_mut(1);
        let (kv0, rest) = self.kv.split_at_mut(1);
        let (kv1, rest) = rest.split_at_mut(1);
        let (kv2, kv3) = rest.split_at_mut(1);

        sys.field_and_tangent(x, &v.view(), &mut kx0[0], &mut kv0[0]);

        for i in 0..n {
            self.x_stage[i] = x[i] + 0.5 * dt * kx0[0][i];
        }
        stage_block(&mut self.v_stage, v, &kv0[0], 0.5 * dt);
        sys.field_and_tangent(&self.x_stage, &self.v_stage.view(), &mut kx1[0], &mut kv1[0]);

        for i in 0..n {
            self.x_stage[i] = x[i] + 0.5 * dt * kx1[0][i];
        }
        stage_block(&mut self.v_stage, v, &kv1[0], 0.5 * dt);
        sys.field_and_tangent(&self.x_stage, &self.v_stage.view(), &mut kx2[0], &mut kv2[0]);

        for i in 0..n {
            self.x_stage[i] = x[i] + dt * kx2[0][i];
        }
        stage_block(&mut self.v_stage, v, &kv2[0], dt);
        sys.field_and_tangent(&self.x_stage, &self.v_stage.view(), &mut kx3[0], &mut kv3[0]);

        let w = dt / 6.0;
        for i in 0..n {
            x[i] += w * (kx0[0][i] + 2.0 * kx1[0][i] + 2.0 * kx2[0][i] + kx3[0][i]);
        }
        ndarray::Zip::from(v)
            .and(&kv0[0])
            .and(&kv1[0])
            .and(&kv2[0])
            .and(&kv3[0])
            .for_each(|v, &a, &b, &c, &d| *v += w * (a + 2.0 * b + 2.0 * c + d));
    }
}

fn stage_block(out: &mut Array2<f64>, v: &Array2<f64>, kv: &Array2<f64>, h: f64) {
    ndarray::Zip::from(out).and(v).and(kv).for_each(|o, &v, &k| *o = v + h * k);
}
