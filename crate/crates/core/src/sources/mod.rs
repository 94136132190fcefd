//! Closed-form heralding probabilities and heralded density matrices.
//!
//! Charlie has two single-click patterns. They produce the same entangled
//! state up to a local phase, so the states here are always the "+i" pattern
//! and the `herald_prob_*` functions count both patterns (twice the
//! per-pattern value).

mod params;

pub use params::{ChannelModel, OnePhotonParams, TwoPhotonParams, DEFAULT_ATTENUATION, DEFAULT_BOB_GAIN};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{domain, Result};
use crate::fock_oracle::{self, CharlieDetector, TruncationPolicy, TwoModeState};

/// Probability of one single-click pattern for the 1-photon protocol,
/// x/(1+x)³·η_c with x = √η_t sinh²g.
pub fn herald_prob_1ph_per_pattern(p: &OnePhotonParams) -> f64 {
    let x = p.channel.sqrt_eta_t() * p.g.sinh().powi(2);
    x / (1.0 + x).powi(3) * p.eta_c
}

/// Heralding probability per pulse for the 1-photon protocol, both click
/// patterns included.
pub fn herald_prob_1ph(p: &OnePhotonParams) -> f64 {
    2.0 * herald_prob_1ph_per_pattern(p)
}

/// Ratio of multi-photon to single-photon arrivals at Charlie for the
/// 1-photon protocol, x(3+x)/2.
pub fn multiphoton_ratio_1ph(p: &OnePhotonParams) -> f64 {
    let x = p.channel.sqrt_eta_t() * p.g.sinh().powi(2);
    0.5 * x * (3.0 + x)
}

/// Normalization Ñ² of the 2-photon heralded state for an ideal split photon:
/// the probability that exactly one photon reaches the heralding port.
pub fn n_tilde_sq(p: &TwoPhotonParams) -> f64 {
    let tau = p.channel.sqrt_eta_t();
    let s2 = p.g_a.sinh().powi(2);
    let x = tau * s2;
    tau * (p.t_c * p.t_s / (1.0 + x) + p.r_c() * (1.0 - p.t_s * tau) * s2 / (1.0 + x).powi(2))
}

/// How a 2-photon heralding probability was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    ClosedForm,
    /// Finite g_b or an asymmetric Charlie splitter: evaluated with the Fock oracle.
    Oracle,
}

/// Which evaluation path [`herald_prob_2ph`] takes for these parameters.
pub fn herald_route_2ph(p: &TwoPhotonParams) -> Route {
    if p.sppe_limit && p.is_symmetric_charlie() {
        Route::ClosedForm
    } else {
        Route::Oracle
    }
}

/// Probability of one click pattern for the 2-photon protocol.
///
/// In the split-photon limit with a balanced Charlie this is
/// √η_t (t_s + sinh²g_a) / (2(1 + √η_t sinh²g_a)²) · P_s · η_c; any other
/// configuration is evaluated numerically (see [`herald_route_2ph`]).
pub fn herald_prob_2ph_per_pattern(p: &TwoPhotonParams) -> Result<f64> {
    p.validate()?;
    match herald_route_2ph(p) {
        Route::ClosedForm => {
            let tau = p.channel.sqrt_eta_t();
            let s2 = p.g_a.sinh().powi(2);
            Ok(tau * (p.t_s + s2) / (2.0 * (1.0 + tau * s2).powi(2)) * p.p_s() * p.eta_c)
        }
        Route::Oracle => {
            let h = fock_oracle::herald_single_click_2ph(
                p,
                1.0,
                CharlieDetector::PhotonNumberResolving,
                &TruncationPolicy::default(),
            )?;
            Ok(h.herald_prob)
        }
    }
}

/// Heralding probability per pulse for the 2-photon protocol, both click
/// patterns included.
pub fn herald_prob_2ph(p: &TwoPhotonParams) -> Result<f64> {
    Ok(2.0 * herald_prob_2ph_per_pattern(p)?)
}

fn check_visibility(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(domain(format!("visibility amplitude must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Closed-form 1-photon heralded state for the "+i" pattern.
///
/// With C = r_t tanh²g the photons lost in the channel leave each signal mode
/// in a geometric mixture on top of the shared single excitation; `visibility`
/// scales the coherences between "photon at Alice" and "photon at Bob".
pub fn rho_1ph_closed(p: &OnePhotonParams, visibility: f64, policy: &TruncationPolicy) -> Result<TwoModeState> {
    p.validate()?;
    check_visibility(visibility)?;
    let c = p.loss_parameter();
    let n = policy.cutoff_for_gain(p.g)? + 2;
    let dim = n + 1;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let amp = [C64::new(s, 0.0), C64::new(0.0, s)];
    let mut rho = DMatrix::<C64>::zeros(dim * dim, dim * dim);
    let pow: Vec<f64> = (0..dim).map(|k| c.powi(k as i32)).collect();
    // excitation p ∈ {0,1} sits with Alice; Bob carries the complement
    for pa in 0..2 {
        for qa in 0..2 {
            let coef = amp[pa] * amp[qa].conj() * if pa == qa { 1.0 } else { visibility };
            for m in 0..dim - 1 {
                let wa = ((if pa == 1 { m + 1 } else { 1 }) as f64 * (if qa == 1 { m + 1 } else { 1 }) as f64).sqrt();
                for k in 0..dim - 1 {
                    let wb = ((if pa == 0 { k + 1 } else { 1 }) as f64 * (if qa == 0 { k + 1 } else { 1 }) as f64).sqrt();
                    let row = (m + pa) * dim + (k + 1 - pa);
                    let col = (m + qa) * dim + (k + 1 - qa);
                    rho[(row, col)] += coef * (pow[m] * pow[k] * wa * wb);
                }
            }
        }
    }
    rho *= C64::new((1.0 - c).powi(3), 0.0);
    let mut st = TwoModeState::new(dim, dim, rho)?;
    st.truncation_residual = (1.0 - st.trace()).max(0.0);
    st.tail_bound = policy.tail_bound;
    st.normalized()
}

/// Closed-form 2-photon heralded state in the split-photon limit, normalized by Ñ².
///
/// Populations:
/// - |m,0⟩ ∝ √η_t λ_m r_t^m (t_s t_c + m t_s r_c)
/// - |m,1⟩ ∝ √η_t λ_m r_s r_c m r_t^(m−1)
///
/// Coherences |m,0⟩⟨m+1,1| ∝ √η_t √(t_s r_s t_c r_c) tanh(g_a) λ_m r_t^m √(m+1) e^(−iφ), times v.
pub fn rho_2ph_closed(p: &TwoPhotonParams, visibility: f64, policy: &TruncationPolicy) -> Result<TwoModeState> {
    p.validate()?;
    check_visibility(visibility)?;
    if !p.sppe_limit {
        return Err(domain("the closed-form 2-photon state requires the split-photon limit; use the oracle"));
    }
    let tau = p.channel.sqrt_eta_t();
    let r_t = p.channel.r_t();
    let n = policy.cutoff_for_gain(p.g_a)? + 2;
    let dim_a = n + 1;
    let lam: Vec<f64> = (0..dim_a).map(|m| p.g_a.tanh().powi(2 * m as i32) / p.g_a.cosh().powi(2)).collect();
    let (ts, rs, tc, rc) = (p.t_s, p.r_s(), p.t_c, p.r_c());
    let idx = |m: usize, b: usize| m * 2 + b;
    let mut rho = DMatrix::<C64>::zeros(dim_a * 2, dim_a * 2);
    let coh = C64::from_polar(tau * (ts * rs * tc * rc).sqrt() * p.g_a.tanh() * visibility, -p.phase);
    for m in 0..dim_a {
        let rm = r_t.powi(m as i32);
        let mf = m as f64;
        rho[(idx(m, 0), idx(m, 0))] = C64::new(tau * lam[m] * rm * (ts * tc + mf * ts * rc), 0.0);
        if m >= 1 {
            let rm1 = r_t.powi(m as i32 - 1);
            rho[(idx(m, 1), idx(m, 1))] = C64::new(tau * lam[m] * rs * rc * mf * rm1, 0.0);
        }
        if m + 1 < dim_a {
            let z = coh * (lam[m] * rm * (mf + 1.0).sqrt());
            rho[(idx(m, 0), idx(m + 1, 1))] = z;
            rho[(idx(m + 1, 1), idx(m, 0))] = z.conj();
        }
    }
    let norm = n_tilde_sq(p);
    if !(norm > 1e-300) {
        return Err(crate::error::Error::Underflow(norm));
    }
    rho /= C64::new(norm, 0.0);
    let mut st = TwoModeState::new(dim_a, 2, rho)?;
    st.truncation_residual = (1.0 - st.trace()).max(0.0);
    st.tail_bound = policy.tail_bound;
    st.normalized()
}

#[cfg(test)]
mod tests;
