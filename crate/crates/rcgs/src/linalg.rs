//! Small linear-algebra kernels: triplet sparse matrices, dominant-eigenvalue
//! estimation, modified Gram-Schmidt, and a blocked Cholesky solver.

use crate::error::{Error, Result};
use ndarray::{linalg::general_mat_mul, s, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sparse matrix in triplet (COO) form. The matrix-vector product is the only
/// kernel the reservoir needs; triplets are kept in construction order so the
/// floating-point accumulation order is reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix { n_rows, n_cols, rows: Vec::new(), cols: Vec::new(), vals: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// out = A x
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        out.fill(0.0);
        for i in 0..self.vals.len() {
            out[self.rows[i]] += self.vals[i] * x[self.cols[i]];
        }
    }

    /// out = A V for a narrow dense block V (n_cols x k).
    pub fn matmul_block(&self, v: &ArrayView2<f64>, out: &mut Array2<f64>) {
        debug_assert_eq!(v.nrows(), self.n_cols);
        debug_assert_eq!(out.dim(), (self.n_rows, v.ncols()));
        out.fill(0.0);
        let k = v.ncols();
        for i in 0..self.vals.len() {
            let (r, c, a) = (self.rows[i], self.cols[i], self.vals[i]);
            for j in 0..k {
                out[[r, j]] += a * v[[c, j]];
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.vals {
            *v *= factor;
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n_rows, self.n_cols));
        for i in 0..self.vals.len() {
            m[[self.rows[i], self.cols[i]]] += self.vals[i];
        }
        m
    }
}

/// Deterministic seed derivation: absorb the parts into a splitmix64 chain.
/// Used everywhere a sub-seed is derived from (base seed, labels, indices) so
/// that parallel execution order can never change the random streams.
pub fn mix_seeds(parts: &[u64]) -> u64 {
    let mut state: u64 = 0x243f_6a88_85a3_08d3; // digits of pi, arbitrary fixed start
    for &p in parts {
        state ^= p.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        state = splitmix64(state);
    }
    state
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Outcome of the iterative dominant-eigenvalue estimate.
#[derive(Clone, Debug)]
pub struct DominantEigenvalue {
    /// Magnitude of the dominant eigenvalue (the spectral radius).
    pub value: f64,
    /// Matrix-vector products consumed.
    pub matvecs: usize,
    /// Relative residual of the fitted two-term recurrence at termination.
    pub residual: f64,
    /// True when the dense eigensolver had to finish the job.
    pub used_dense_fallback: bool,
}

pub const SPECTRAL_RADIUS_RTOL: f64 = 1e-6;
const DENSE_FALLBACK_MAX_DIM: usize = 500;
const MAX_MATVECS: usize = 400_000;

/// Magnitude of the dominant eigenvalue of a sparse matrix.
///
/// Power iteration with a two-iterate quadratic fit: successive iterates x,
/// y = Ax, z = Ay are fitted to the recurrence z = a y + b x, whose
/// characteristic roots capture a dominant complex-conjugate pair as well as
/// a dominant real eigenvalue. Convergence is declared when the recurrence
/// residual is tiny and the magnitude estimate has stabilized; small systems
/// fall back to a dense eigensolver if the iteration stalls.
pub fn dominant_eigenvalue(m: &SparseMatrix) -> Result<DominantEigenvalue> {
    if m.n_rows != m.n_cols {
        return Err(Error::dimension(format!("matrix is {}x{}, need square", m.n_rows, m.n_cols)));
    }
    let n = m.n_rows;
    if m.nnz() == 0 {
        return Err(Error::invalid("matrix has no nonzero entries"));
    }

    // Fixed internal seed keeps the estimate a pure function of the matrix.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1234_abcd_0001);
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut x);

    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut matvecs = 0usize;
    let mut best = f64::NAN;
    let mut best_residual = f64::INFINITY;
    let mut stable_checks = 0usize;
    let mut prev_estimate = f64::NAN;

    while matvecs < MAX_MATVECS {
        m.matvec(&x, &mut y);
        m.matvec(&y, &mut z);
        matvecs += 2;

        let yy = dot(&y, &y);
        if yy == 0.0 {
            // x is in the (numerical) kernel; nilpotent-like case.
            return Ok(DominantEigenvalue { value: 0.0, matvecs, residual: 0.0, used_dense_fallback: false });
        }
        let xx = dot(&x, &x);
        let xy = dot(&x, &y);
        let yz = dot(&y, &z);
        let xz = dot(&x, &z);
        let det = yy * xx - xy * xy;

        let (estimate, residual) = if det.abs() < 1e-13 * yy * xx {
            // x and y are colinear: dominant eigenvalue is real and converged.
            let lambda = yz / yy;
            let mut res = 0.0;
            for i in 0..n {
                let r = z[i] - lambda * y[i];
                res += r * r;
            }
            (lambda.abs(), (res.sqrt() / norm(&z).max(f64::MIN_POSITIVE)))
        } else {
            // Least-squares fit z ~ a y + b x.
            let a = (yz * xx - xz * xy) / det;
            let b = (xz * yy - yz * xy) / det;
            let mut res = 0.0;
            for i in 0..n {
                let r = z[i] - a * y[i] - b * x[i];
                res += r * r;
            }
            let disc = a * a + 4.0 * b;
            let magnitude = if disc >= 0.0 {
                let root = disc.sqrt();
                ((a + root) / 2.0).abs().max(((a - root) / 2.0).abs())
            } else {
                (-b).sqrt()
            };
            (magnitude, res.sqrt() / norm(&z).max(f64::MIN_POSITIVE))
        };

        if residual < best_residual {
            best_residual = residual;
            best = estimate;
        }

        let stabilized = prev_estimate.is_finite()
            && (estimate - prev_estimate).abs() <= 0.25 * SPECTRAL_RADIUS_RTOL * estimate.abs();
        if residual < 1e-10 && stabilized {
            stable_checks += 1;
            if stable_checks >= 3 {
                return Ok(DominantEigenvalue { value: estimate, matvecs, residual, used_dense_fallback: false });
            }
        } else {
            stable_checks = 0;
        }
        prev_estimate = estimate;

        // Advance two power steps, guarding against overflow/underflow.
        let zn = norm(&z);
        if !zn.is_finite() || zn == 0.0 {
            break;
        }
        for i in 0..n {
            x[i] = z[i] / zn;
        }
    }

    if n <= DENSE_FALLBACK_MAX_DIM {
        let value = dense_spectral_radius(&m.to_dense());
        return Ok(DominantEigenvalue { value, matvecs, residual: best_residual, used_dense_fallback: true });
    }
    Err(Error::NonConvergence(format!(
        "dominant eigenvalue estimate stalled after {matvecs} matvecs \
         (best estimate {best:.6e}, residual {best_residual:.3e}, n = {n})"
    )))
}

/// Dense spectral radius via the full eigendecomposition; the oracle for the
/// iterative scheme and its fallback for small matrices.
pub fn dense_spectral_radius(m: &Array2<f64>) -> f64 {
    let n = m.nrows();
    let dm = nalgebra::DMatrix::from_fn(n, n, |i, j| m[[i, j]]);
    dm.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Modified Gram-Schmidt on the columns of `v`, in place. Returns the R
/// diagonal: the norm of each column after orthogonalization against the
/// previous ones (the per-interval stretch factors in the Benettin method).
pub fn orthonormalize_columns(v: &mut Array2<f64>) -> Vec<f64> {
    let (n, k) = v.dim();
    let mut diag = Vec::with_capacity(k);
    for j in 0..k {
        for i in 0..j {
            let mut c = 0.0;
            for row in 0..n {
                c += v[[row, i]] * v[[row, j]];
            }
            for row in 0..n {
                let qi = v[[row, i]];
                v[[row, j]] -= c * qi;
            }
        }
        let mut d = 0.0;
        for row in 0..n {
            d += v[[row, j]] * v[[row, j]];
        }
        let d = d.sqrt();
        if d > 0.0 && d.is_finite() {
            for row in 0..n {
                v[[row, j]] /= d;
            }
        }
        diag.push(d);
    }
    diag
}

const CHOL_BLOCK: usize = 128;

/// In-place blocked Cholesky factorization of a symmetric positive-definite
/// matrix; on success the lower triangle holds L (the strict upper triangle
/// is left untouched and must be ignored by consumers).
pub fn cholesky_factor_in_place(g: &mut Array2<f64>) -> Result<()> {
    let n = g.nrows();
    if g.ncols() != n {
        return Err(Error::dimension(format!("matrix is {}x{}, need square", n, g.ncols())));
    }
    let mut kb = 0;
    while kb < n {
        let ke = (kb + CHOL_BLOCK).min(n);
        // Unblocked factorization of the diagonal block.
        for j in kb..ke {
            let mut d = g[[j, j]];
            for p in kb..j {
                d -= g[[j, p]] * g[[j, p]];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Singular(format!(
                    "non-positive pivot {d:.3e} at column {j}; the system is singular or \
                     indefinite (a ridge parameter beta > 0 makes the normal equations definite)"
                )));
            }
            let d = d.sqrt();
            g[[j, j]] = d;
            for i in (j + 1)..ke {
                let mut v = g[[i, j]];
                for p in kb..j {
                    v -= g[[i, p]] * g[[j, p]];
                }
                g[[i, j]] = v / d;
            }
        }
        if ke == n {
            break;
        }
        // Panel solve: rows below the diagonal block, columns of the block.
        for j in kb..ke {
            let d = g[[j, j]];
            for i in ke..n {
                let mut v = g[[i, j]];
                for p in kb..j {
                    v -= g[[i, p]] * g[[j, p]];
                }
                g[[i, j]] = v / d;
            }
        }
        // Trailing update: G[ke.., ke..] -= P P^T on the lower triangle only,
        // one gemm per trailing column block.
        let panel = g.slice(s![ke..n, kb..ke]).to_owned();
        let mut jb = ke;
        while jb < n {
            let je = (jb + CHOL_BLOCK).min(n);
            let pj = panel.slice(s![(jb - ke)..(je - ke), ..]).to_owned();
            let pi = panel.slice(s![(jb - ke).., ..]);
            let mut target = g.slice_mut(s![jb..n, jb..je]);
            general_mat_mul(-1.0, &pi, &pj.t(), 1.0, &mut target);
            jb = je;
        }
        kb = ke;
    }
    Ok(())
}

/// Solve (L L^T) X = B given the Cholesky factor from
/// [`cholesky_factor_in_place`]; B has one column per right-hand side.
pub fn cholesky_solve(l: &Array2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    debug_assert_eq!(b.nrows(), n);
    let k = b.ncols();
    let mut x = b.to_owned();
    // Forward: L y = b.
    for j in 0..n {
        let d = l[[j, j]];
        for c in 0..k {
            x[[j, c]] /= d;
        }
        for i in (j + 1)..n {
            let lij = l[[i, j]];
            if lij != 0.0 {
                for c in 0..k {
                    x[[i, c]] -= lij * x[[j, c]];
                }
            }
        }
    }
    // Backward: L^T x = y.
    for j in (0..n).rev() {
        let d = l[[j, j]];
        for c in 0..k {
            x[[j, c]] /= d;
        }
        for i in 0..j {
            let lji = l[[j, i]];
            if lji != 0.0 {
                for c in 0..k {
                    x[[i, c]] -= lji * x[[j, c]];
                }
            }
        }
    }
    x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn normalize(a: &mut [f64]) {
    let n = norm(a);
    if n > 0.0 {
        for v in a.iter_mut() {
            *v /= n;
        }
    }
}
