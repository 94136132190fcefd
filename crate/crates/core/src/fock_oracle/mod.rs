//! Brute-force simulation in a truncated photon-number basis.
//!
//! Nothing here uses the closed-form series of the other modules. States are
//! assembled from source amplitudes, binomial loss and explicit beam-splitter
//! overlaps, and measurement operators are built as dense matrices, so the
//! oracle can be used to check every analytic formula independently.

mod herald;
mod state;

pub use herald::{
    arrival_distribution_1ph, herald_single_click_1ph, herald_single_click_2ph, CharlieDetector,
    Heralded,
};
pub use state::{loss_channel, Mode, TwoModeState};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{domain, Error, Result};

/// Default residual probability mass tolerated beyond the cutoff.
pub const DEFAULT_TAIL_BOUND: f64 = 1e-12;

/// Eigenvalue tolerance used for Hermiticity and positivity checks.
pub const PSD_TOL: f64 = 1e-10;

/// How the infinite photon-number series are cut off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    /// Fixed cutoff; `None` selects the smallest cutoff meeting `tail_bound`.
    pub n_max: Option<usize>,
    /// Largest probability mass allowed beyond the cutoff.
    pub tail_bound: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { n_max: None, tail_bound: DEFAULT_TAIL_BOUND }
    }
}

impl TruncationPolicy {
    pub fn fixed(n_max: usize) -> Self {
        Self { n_max: Some(n_max), ..Self::default() }
    }

    pub fn with_tail_bound(tail_bound: f64) -> Self {
        Self { n_max: None, tail_bound }
    }

    /// Cutoff for a two-mode squeezed vacuum of gain `g`.
    pub fn cutoff_for_gain(&self, g: f64) -> Result<usize> {
        if !(g >= 0.0) {
            return Err(domain(format!("gain must be nonnegative, got {g}")));
        }
        if let Some(n) = self.n_max {
            if n == 0 {
                return Err(domain("n_max must be at least 1"));
            }
            return Ok(n);
        }
        let t2 = g.tanh().powi(2);
        if t2 == 0.0 {
            return Ok(1);
        }
        if t2 >= 1.0 {
            return Err(domain("gain too large for a finite cutoff"));
        }
        // tanh^(2(n+1)) <= tail_bound
        let n = (self.tail_bound.ln() / t2.ln()).ceil() as usize;
        Ok(n.saturating_sub(1).max(1))
    }

    /// Probability mass of the TMSV distribution above `n_max`.
    pub fn tmsv_tail(g: f64, n_max: usize) -> f64 {
        g.tanh().powi(2 * (n_max as i32 + 1))
    }
}

/// Square operator on the span of |0⟩..|dim-1⟩.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    pub dim: usize,
    pub entries: DMatrix<C64>,
}

impl FockOperator {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(domain("Fock operator must be square and nonempty"));
        }
        Ok(Self { dim: entries.nrows(), entries })
    }

    pub fn get(&self, n: usize, m: usize) -> C64 {
        self.entries[(n, m)]
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.entries - self.entries.adjoint()).camax()
    }

    /// Smallest and largest eigenvalue of the Hermitian part.
    pub fn eigen_range(&self) -> (f64, f64) {
        let h = (&self.entries + self.entries.adjoint()).scale(0.5);
        let ev = h.symmetric_eigenvalues();
        (ev.min(), ev.max())
    }

    /// Checks the POVM-element invariants: Hermitian, spectrum inside [0, 1].
    pub fn check_povm(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        let (lo, hi) = self.eigen_range();
        if herm > PSD_TOL || lo < -PSD_TOL || hi > 1.0 + PSD_TOL {
            return Err(Error::Consistency(format!(
                "POVM element out of range: hermiticity {herm:e}, spectrum [{lo:e}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Photon-number distribution λ_n = tanh^{2n}(g)/cosh²(g), n = 0..=n_max.
pub fn tmsv_coefficients(g: f64, policy: &TruncationPolicy) -> Result<Vec<f64>> {
    let n_max = policy.cutoff_for_gain(g)?;
    let t2 = g.tanh().powi(2);
    let mut out = Vec::with_capacity(n_max + 1);
    let mut lam = 1.0 / g.cosh().powi(2);
    for _ in 0..=n_max {
        out.push(lam);
        lam *= t2;
    }
    Ok(out)
}

/// Generalized Laguerre polynomial L_n^{(a)}(x) by forward recurrence.
fn laguerre(n: usize, a: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + a - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// ⟨n|D(δ)|m⟩ through its Laguerre representation.
pub fn displacement_element(n: usize, m: usize, delta: C64) -> C64 {
    let x = delta.norm_sqr();
    let env = (-0.5 * x).exp();
    let (lo, hi, base) = if n >= m { (m, n, delta) } else { (n, m, -delta.conj()) };
    // sqrt(lo!/hi!) * base^(hi-lo), accumulated factor by factor
    let mut pref = C64::new(1.0, 0.0);
    for j in (lo + 1)..=hi {
        pref *= base / (j as f64).sqrt();
    }
    pref * env * laguerre(lo, (hi - lo) as f64, x)
}

/// ⟨n|D(δ)|m⟩ as the explicit finite double-factorial sum.
///
/// Suffers cancellation for large photon numbers; kept as an independent
/// reference for small `n`, `m`.
pub fn displacement_element_series(n: usize, m: usize, delta: C64) -> C64 {
    let env = (-0.5 * delta.norm_sqr()).exp();
    let fact = |k: usize| (1..=k).fold(1.0_f64, |acc, j| acc * j as f64);
    let root = (fact(m) * fact(n)).sqrt();
    let mut sum = C64::new(0.0, 0.0);
    for k in 0..=m.min(n) {
        let num = delta.powu((n - k) as u32) * (-delta.conj()).powu((m - k) as u32);
        sum += num * (root / (fact(k) * fact(m - k) * fact(n - k)));
    }
    sum * env
}

pub fn displacement_matrix(delta: C64, dim: usize) -> Result<FockOperator> {
    if dim == 0 {
        return Err(domain("dimension must be at least 1"));
    }
    let m = DMatrix::from_fn(dim, dim, |n, k| displacement_element(n, k, delta));
    FockOperator::new(m)
}

pub fn noclick_povm(eta_d: f64, dim: usize) -> Result<FockOperator> {
    check_efficiency(eta_d)?;
    if dim == 0 {
        return Err(domain("dimension must be at least 1"));
    }
    let mut m = DMatrix::zeros(dim, dim);
    let mut v = 1.0;
    for n in 0..dim {
        m[(n, n)] = C64::new(v, 0.0);
        v *= 1.0 - eta_d;
    }
    FockOperator::new(m)
}

/// Extra basis states needed so that a displaced operator is exact on the
/// leading `dim` block.
pub fn displacement_headroom(delta: C64) -> usize {
    let a = delta.norm();
    (a * a + 10.0 * a).ceil() as usize + 20
}

/// No-click POVM element D(δ)E₀D†(δ) restricted to the leading `dim` block.
pub fn displaced_noclick(delta: C64, eta_d: f64, dim: usize) -> Result<FockOperator> {
    check_efficiency(eta_d)?;
    let big = dim + displacement_headroom(delta);
    let d = displacement_matrix(delta, big)?.entries;
    let e = noclick_povm(eta_d, big)?.entries;
    let full = &d * e * d.adjoint();
    FockOperator::new(full.view((0, 0), (dim, dim)).into_owned())
}

pub(crate) fn check_efficiency(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(domain(format!("efficiency must lie in [0, 1], got {eta}")));
    }
    Ok(())
}

/// Which party's reduced state a marginal refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Alice,
    Bob,
}

/// Tr[ρ (M₀(δ_a) ⊗ M₀(δ_b))] for the joint no-click event.
pub fn numeric_probability(state: &TwoModeState, delta_a: C64, delta_b: C64, eta_d: f64) -> Result<f64> {
    state.check_residual()?;
    let ma = displaced_noclick(delta_a, eta_d, state.dim_a)?.entries;
    let mb = displaced_noclick(delta_b, eta_d, state.dim_b)?.entries;
    let db = state.dim_b;
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..state.rho.nrows() {
        let (ia, ib) = (i / db, i % db);
        for j in 0..state.rho.ncols() {
            let (ja, jb) = (j / db, j % db);
            acc += state.rho[(i, j)] * ma[(ja, ia)] * mb[(jb, ib)];
        }
    }
    Ok(acc.re)
}

/// Tr[ρ_side M₀(δ)] on the reduced state of one party.
pub fn numeric_marginal(state: &TwoModeState, side: Side, delta: C64, eta_d: f64) -> Result<f64> {
    state.check_residual()?;
    let red = match side {
        Side::Alice => state.reduced_a(),
        Side::Bob => state.reduced_b(),
    };
    let m = displaced_noclick(delta, eta_d, red.nrows())?.entries;
    Ok((red * m).trace().re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// exp(A) by scaling and squaring of a Taylor series; test-only reference.
    fn expm(a: &DMatrix<C64>) -> DMatrix<C64> {
        let norm = a.iter().map(|z| z.norm()).sum::<f64>();
        let s = (norm.max(1.0)).log2().ceil() as i32 + 4;
        let scaled = a.scale(0.5_f64.powi(s));
        let n = a.nrows();
        let mut term = DMatrix::<C64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &scaled / C64::new(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn tmsv_vacuum_at_zero_gain() {
        let l = tmsv_coefficients(0.0, &TruncationPolicy::fixed(5)).unwrap();
        assert_eq!(l[0], 1.0);
        assert!(l[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn tmsv_is_geometric_and_matches_spot_value() {
        let g = 0.2;
        let l = tmsv_coefficients(g, &TruncationPolicy::default()).unwrap();
        for w in l.windows(2) {
            assert_relative_eq!(w[1] / w[0], g.tanh().powi(2), max_relative = 1e-13);
        }
        assert_relative_eq!(l[1], 0.037_439_367_857_705_116, max_relative = 1e-12);
        let tail = 1.0 - l.iter().sum::<f64>();
        assert!((-1e-15..=1e-12).contains(&tail));
    }

    #[test]
    fn tmsv_rejects_negative_gain() {
        assert!(tmsv_coefficients(-0.1, &TruncationPolicy::default()).is_err());
    }

    #[test]
    fn auto_cutoff_meets_tail_bound() {
        let p = TruncationPolicy::default();
        for &g in &[1e-4, 0.05, 0.3, 0.8] {
            let n = p.cutoff_for_gain(g).unwrap();
            assert!(TruncationPolicy::tmsv_tail(g, n) <= 1e-12);
            if n > 1 {
                assert!(TruncationPolicy::tmsv_tail(g, n - 1) > 1e-12);
            }
        }
    }

    #[test]
    fn displacement_identity_and_vacuum_overlap() {
        let d0 = displacement_matrix(c(0.0, 0.0), 6).unwrap();
        assert!((d0.entries - DMatrix::<C64>::identity(6, 6)).camax() < 1e-15);
        let delta = c(0.7, -0.4);
        let d = displacement_matrix(delta, 4).unwrap();
        assert_relative_eq!(d.get(0, 0).re, (-delta.norm_sqr() / 2.0).exp(), max_relative = 1e-14);
    }

    #[test]
    fn displacement_column_zero_is_coherent_state() {
        let d = displacement_matrix(c(0.5, 0.0), 20).unwrap();
        let mut fact = 1.0;
        for n in 0..20 {
            if n > 0 {
                fact *= n as f64;
            }
            let want = (-0.125_f64).exp() * 0.5_f64.powi(n as i32) / fact.sqrt();
            assert!((d.get(n, 0) - c(want, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn displacement_matches_generator_exponential() {
        let delta = c(0.5, 0.3);
        let big = 60;
        let mut gen = DMatrix::<C64>::zeros(big, big);
        for n in 1..big {
            let s = (n as f64).sqrt();
            gen[(n, n - 1)] += delta * s; // δ a†
            gen[(n - 1, n)] -= delta.conj() * s; // −δ* a
        }
        let reference = expm(&gen);
        let d = displacement_matrix(delta, 20).unwrap();
        let diff = (d.entries - reference.view((0, 0), (20, 20))).camax();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn laguerre_and_series_forms_agree() {
        for &delta in &[c(0.3, 0.1), c(-1.2, 0.8), c(0.0, 2.0)] {
            for n in 0..10 {
                for m in 0..10 {
                    let a = displacement_element(n, m, delta);
                    let b = displacement_element_series(n, m, delta);
                    assert!((a - b).norm() < 1e-12, "{n} {m} {delta}");
                }
            }
        }
    }

    #[test]
    fn displacement_inverse_on_leading_block() {
        let delta = c(1.5, -1.0);
        let x = delta.norm_sqr();
        let big = (x + 10.0 * x.sqrt() + 20.0).ceil() as usize + 20;
        let d = displacement_matrix(delta, big).unwrap().entries;
        let dm = displacement_matrix(-delta, big).unwrap().entries;
        let prod = &d * &dm;
        let blk = 20;
        let err = (prod.view((0, 0), (blk, blk)) - DMatrix::<C64>::identity(blk, blk)).camax();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn noclick_limits() {
        let one = noclick_povm(1.0, 4).unwrap();
        assert_eq!(one.get(0, 0), c(1.0, 0.0));
        assert_eq!(one.get(1, 1), c(0.0, 0.0));
        let zero = noclick_povm(0.0, 4).unwrap();
        assert!((zero.entries - DMatrix::<C64>::identity(4, 4)).camax() == 0.0);
        let p = noclick_povm(0.9, 4).unwrap();
        assert_relative_eq!(p.get(2, 2).re, 0.01, max_relative = 1e-12);
        assert!(noclick_povm(1.2, 3).is_err());
    }

    #[test]
    fn displaced_noclick_is_a_povm_element() {
        for &(delta, eta) in &[(c(0.4, 0.2), 0.9), (c(-2.0, 0.0), 0.5), (c(1.0, 1.0), 1.0)] {
            displaced_noclick(delta, eta, 12).unwrap().check_povm().unwrap();
        }
    }
}
