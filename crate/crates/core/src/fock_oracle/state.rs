use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::PSD_TOL;
use crate::error::{domain, Error, Result};

/// Density matrix of two bosonic modes over the basis |n_a, n_b⟩.
///
/// Row index is `n_a * dim_b + n_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    pub dim_a: usize,
    pub dim_b: usize,
    pub rho: DMatrix<C64>,
    /// Upper bound on probability mass lost to the cutoff while building the state.
    pub truncation_residual: f64,
    /// Largest residual the producer was asked to tolerate.
    pub tail_bound: f64,
}

/// Selects one of the two modes of a [`TwoModeState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    A,
    B,
}

impl TwoModeState {
    pub fn new(dim_a: usize, dim_b: usize, rho: DMatrix<C64>) -> Result<Self> {
        let d = dim_a * dim_b;
        if d == 0 || rho.nrows() != d || rho.ncols() != d {
            return Err(domain("density matrix shape does not match the mode cutoffs"));
        }
        Ok(Self { dim_a, dim_b, rho, truncation_residual: 0.0, tail_bound: super::DEFAULT_TAIL_BOUND })
    }

    /// |ψ⟩⟨ψ| for amplitudes indexed like the density matrix.
    pub fn pure(dim_a: usize, dim_b: usize, psi: &DVector<C64>) -> Result<Self> {
        Self::new(dim_a, dim_b, psi * psi.adjoint())
    }

    pub fn index(&self, na: usize, nb: usize) -> usize {
        na * self.dim_b + nb
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn normalized(mut self) -> Result<Self> {
        let t = self.trace();
        if !(t > 0.0) {
            return Err(Error::Underflow(t));
        }
        self.rho /= C64::new(t, 0.0);
        Ok(self)
    }

    pub fn check_residual(&self) -> Result<()> {
        if self.truncation_residual > self.tail_bound {
            return Err(Error::Truncation { residual: self.truncation_residual, bound: self.tail_bound });
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()).scale(0.5);
        h.symmetric_eigenvalues().min()
    }

    /// Hermitian, positive semidefinite and unit trace within [`PSD_TOL`].
    pub fn check_physical(&self) -> Result<()> {
        let herm = (&self.rho - self.rho.adjoint()).camax();
        if herm > PSD_TOL {
            return Err(Error::Consistency(format!("state not Hermitian ({herm:e})")));
        }
        let lo = self.min_eigenvalue();
        if lo < -PSD_TOL {
            return Err(Error::Consistency(format!("state has eigenvalue {lo:e}")));
        }
        let t = self.trace();
        if (t - 1.0).abs() > PSD_TOL {
            return Err(Error::Consistency(format!("state trace is {t}")));
        }
        Ok(())
    }

    pub fn reduced_a(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim_a, self.dim_a, |i, j| {
            (0..self.dim_b).map(|k| self.rho[(self.index(i, k), self.index(j, k))]).sum()
        })
    }

    pub fn reduced_b(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim_b, self.dim_b, |i, j| {
            (0..self.dim_a).map(|k| self.rho[(self.index(k, i), self.index(k, j))]).sum()
        })
    }

    /// Copy of the state on larger cutoffs, padded with zeros.
    pub fn embedded(&self, dim_a: usize, dim_b: usize) -> Result<Self> {
        if dim_a < self.dim_a || dim_b < self.dim_b {
            return Err(domain("cannot embed into smaller cutoffs"));
        }
        let mut rho = DMatrix::zeros(dim_a * dim_b, dim_a * dim_b);
        for i in 0..self.rho.nrows() {
            let (ia, ib) = (i / self.dim_b, i % self.dim_b);
            for j in 0..self.rho.ncols() {
                let (ja, jb) = (j / self.dim_b, j % self.dim_b);
                rho[(ia * dim_b + ib, ja * dim_b + jb)] = self.rho[(i, j)];
            }
        }
        Ok(Self { dim_a, dim_b, rho, ..*self })
    }

    /// ⟨ψ|ρ|ψ⟩ for a normalized pure state on the same basis.
    pub fn fidelity_with_pure(&self, psi: &DVector<C64>) -> f64 {
        (psi.adjoint() * &self.rho * psi)[(0, 0)].re
    }

    /// ½‖ρ − σ‖₁ after padding both states to common cutoffs.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        let da = self.dim_a.max(other.dim_a);
        let db = self.dim_b.max(other.dim_b);
        let a = self.embedded(da, db)?;
        let b = other.embedded(da, db)?;
        let diff = &a.rho - &b.rho;
        let h = (&diff + diff.adjoint()).scale(0.5);
        Ok(0.5 * h.symmetric_eigenvalues().iter().map(|x| x.abs()).sum::<f64>())
    }
}

/// Amplitude for losing `k` of `n` photons on a beam splitter with reflectivity `r`.
pub(crate) fn loss_amplitude(n: usize, k: usize, r: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut binom = 1.0;
    for j in 0..k {
        binom = binom * (n - j) as f64 / (j + 1) as f64;
    }
    (binom * (1.0 - r).powi((n - k) as i32) * r.powi(k as i32)).sqrt()
}

/// Mixes one mode with vacuum on a beam splitter of reflectivity `r_t` and
/// discards the reflected port.
pub fn loss_channel(state: &TwoModeState, mode: Mode, r_t: f64) -> Result<TwoModeState> {
    if !(0.0..=1.0).contains(&r_t) {
        return Err(domain(format!("reflectivity must lie in [0, 1], got {r_t}")));
    }
    state.check_residual()?;
    let (da, db) = (state.dim_a, state.dim_b);
    let dl = match mode {
        Mode::A => da,
        Mode::B => db,
    };
    let split = |i: usize| (i / db, i % db);
    let mut out = DMatrix::<C64>::zeros(da * db, da * db);
    for k in 0..dl {
        for i in 0..da * db {
            let (ia, ib) = split(i);
            let (ni, oi) = match mode {
                Mode::A => (ia, ib),
                Mode::B => (ib, ia),
            };
            if ni < k {
                continue;
            }
            let ki = loss_amplitude(ni, k, r_t);
            if ki == 0.0 {
                continue;
            }
            let ti = match mode {
                Mode::A => (ni - k) * db + oi,
                Mode::B => oi * db + (ni - k),
            };
            for j in 0..da * db {
                let (ja, jb) = split(j);
                let (nj, oj) = match mode {
                    Mode::A => (ja, jb),
                    Mode::B => (jb, ja),
                };
                if nj < k {
                    continue;
                }
                let tj = match mode {
                    Mode::A => (nj - k) * db + oj,
                    Mode::B => oj * db + (nj - k),
                };
                out[(ti, tj)] += state.rho[(i, j)] * (ki * loss_amplitude(nj, k, r_t));
            }
        }
    }
    Ok(TwoModeState { rho: out, ..state.clone() })
}
