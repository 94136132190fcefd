//! Heralded states from explicit branch enumeration.
//!
//! Every source is written as a weighted mixture of pure components
//! Σ c |local⟩|idler⟩. Loss on an idler is a Kraus decomposition indexed by
//! the number of photons lost, and Charlie's detection is the overlap with
//! |σ_c, 0_d⟩ expressed in the input idler modes. Distinct loss records and
//! distinct detection outcomes add incoherently.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use super::state::{loss_amplitude, TwoModeState};
use super::TruncationPolicy;
use crate::error::{domain, Error, Result};
use crate::sources::TwoPhotonParams;

/// What Charlie's detectors resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CharlieDetector {
    /// Exactly one photon at the clicking detector, none at the other.
    #[default]
    PhotonNumberResolving,
    /// One detector fires (any photon number), the other stays dark.
    OnOff,
}

/// Conditional state together with the probability of the heralding pattern.
#[derive(Debug, Clone)]
pub struct Heralded {
    pub state: TwoModeState,
    /// Probability of one specific click pattern, already scaled by η_c.
    pub herald_prob: f64,
}

struct Term {
    local: usize,
    idler: usize,
    amp: C64,
}

struct Component {
    weight: f64,
    terms: Vec<Term>,
}

fn tmsv_component(lam: &[f64]) -> Component {
    let terms = lam
        .iter()
        .enumerate()
        .map(|(n, &l)| Term { local: n, idler: n, amp: C64::new(l.sqrt(), 0.0) })
        .collect();
    Component { weight: 1.0, terms }
}

fn tmsv(g: f64, policy: &TruncationPolicy) -> Result<(Vec<f64>, f64)> {
    // One extra photon beyond the tail criterion keeps the error relative to
    // the (small) heralding probability below the bound as well.
    let n = policy.cutoff_for_gain(g)? + usize::from(policy.n_max.is_none());
    let t2 = g.tanh().powi(2);
    let mut lam = Vec::with_capacity(n + 1);
    let mut l = 1.0 / g.cosh().powi(2);
    for _ in 0..=n {
        lam.push(l);
        l *= t2;
    }
    Ok((lam, TruncationPolicy::tmsv_tail(g, n)))
}

/// Output mode of Charlie's beam splitter, c† = u a† + w b†, whose single
/// occupation heralds; `v` is the spectral overlap of Bob's idler with Alice's.
struct Pattern {
    u: C64,
    w: C64,
    v: f64,
    detector: CharlieDetector,
}

impl Pattern {
    /// ⟨σ_c 0_d | i_a, i_b⟩ for spectrally identical photons.
    fn overlap(&self, ia: usize, ib: usize) -> C64 {
        let s = ia + ib;
        let mut multinom = 1.0;
        for j in 0..ib {
            multinom *= (s - j) as f64 / (j + 1) as f64;
        }
        self.u.conj().powu(ia as u32) * self.w.conj().powu(ib as u32) * multinom.sqrt()
    }
}

fn herald(
    alice: &Component,
    bob: &[Component],
    pattern: &Pattern,
    loss_a: f64,
    loss_b: f64,
    dims: (usize, usize),
) -> Result<(DMatrix<C64>, f64)> {
    if pattern.v < 1.0 && pattern.detector == CharlieDetector::OnOff {
        return Err(domain("partial distinguishability is modelled for single-photon heralding only"));
    }
    let (da, db) = dims;
    let mut rho = DMatrix::<C64>::zeros(da * db, da * db);
    let max_ia = alice.terms.iter().map(|t| t.idler).max().unwrap_or(0);
    let mut psi = DVector::<C64>::zeros(da * db);
    let mut psi_perp = DVector::<C64>::zeros(da * db);
    let add = |rho: &mut DMatrix<C64>, psi: &mut DVector<C64>, weight: f64| {
        let nz: Vec<usize> = (0..psi.len()).filter(|&i| psi[i] != C64::new(0.0, 0.0)).collect();
        for &i in &nz {
            for &j in &nz {
                rho[(i, j)] += psi[i] * psi[j].conj() * weight;
            }
        }
        psi.fill(C64::new(0.0, 0.0));
    };
    for comp in bob {
        let max_ib = comp.terms.iter().map(|t| t.idler).max().unwrap_or(0);
        for ka in 0..=max_ia {
            for kb in 0..=max_ib {
                let a_after: Vec<(usize, usize, C64)> = alice
                    .terms
                    .iter()
                    .filter(|t| t.idler >= ka)
                    .map(|t| (t.local, t.idler - ka, t.amp * loss_amplitude(t.idler, ka, loss_a)))
                    .collect();
                let b_after: Vec<(usize, usize, C64)> = comp
                    .terms
                    .iter()
                    .filter(|t| t.idler >= kb)
                    .map(|t| (t.local, t.idler - kb, t.amp * loss_amplitude(t.idler, kb, loss_b)))
                    .collect();
                let max_sigma = match pattern.detector {
                    CharlieDetector::PhotonNumberResolving => 1,
                    CharlieDetector::OnOff => max_ia + max_ib,
                };
                for sigma in 1..=max_sigma {
                    for &(la, ia, ca) in &a_after {
                        for &(lb, ib, cb) in &b_after {
                            if ia + ib != sigma {
                                continue;
                            }
                            let idx = la * db + lb;
                            if ib == 0 {
                                psi[idx] += ca * cb * pattern.overlap(ia, ib);
                            } else {
                                // Bob's photon: the part overlapping Alice's spectral mode
                                // interferes, the orthogonal part is a separate outcome.
                                psi[idx] += ca * cb * pattern.overlap(ia, ib) * pattern.v;
                                psi_perp[idx] +=
                                    ca * cb * pattern.w.conj() * (1.0 - pattern.v * pattern.v).max(0.0).sqrt();
                            }
                        }
                    }
                    add(&mut rho, &mut psi, comp.weight);
                    add(&mut rho, &mut psi_perp, comp.weight);
                }
            }
        }
    }
    let p = rho.trace().re;
    Ok((rho, p))
}

fn finish(rho: DMatrix<C64>, p: f64, dims: (usize, usize), eta_c: f64, residual: f64, policy: &TruncationPolicy) -> Result<Heralded> {
    if !(p > 1e-300) {
        return Err(Error::Underflow(p));
    }
    let mut state = TwoModeState::new(dims.0, dims.1, rho)?.normalized()?;
    state.truncation_residual = residual;
    state.tail_bound = policy.tail_bound;
    state.check_physical()?;
    Ok(Heralded { state, herald_prob: p * eta_c })
}

/// Single-click heralding with two TMSV sources of gain `g`.
///
/// Charlie's balanced beam splitter is oriented so that the heralding detector
/// projects onto (|01⟩ + i|10⟩)/√2 in the lossless, low-gain limit.
pub fn herald_single_click_1ph(
    g: f64,
    r_t: f64,
    eta_c: f64,
    visibility: f64,
    detector: CharlieDetector,
    policy: &TruncationPolicy,
) -> Result<Heralded> {
    check_common(r_t, eta_c, visibility)?;
    let (lam, tail) = tmsv(g, policy)?;
    let src = tmsv_component(&lam);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let pattern = Pattern { u: C64::new(0.0, -s), w: C64::new(s, 0.0), v: visibility, detector };
    let dims = (lam.len(), lam.len());
    let (rho, p) = herald(&src, std::slice::from_ref(&src), &pattern, r_t, r_t, dims)?;
    finish(rho, p, dims, eta_c, 2.0 * tail, policy)
}

/// Single-click heralding with Alice's TMSV and Bob's heralded single photon.
///
/// With `sppe_limit` Bob holds an ideal split single photon prepared with
/// probability P_s; otherwise his pair source of gain g_b is heralded by an
/// on/off detector of efficiency η_s and every photon number is kept.
pub fn herald_single_click_2ph(
    p: &TwoPhotonParams,
    visibility: f64,
    detector: CharlieDetector,
    policy: &TruncationPolicy,
) -> Result<Heralded> {
    p.validate()?;
    let r_t = p.channel.r_t();
    check_common(r_t, p.eta_c, visibility)?;
    let (lam, tail_a) = tmsv(p.g_a, policy)?;
    let alice = tmsv_component(&lam);
    let (ts, rs) = (p.t_s, p.r_s());
    let ph = C64::from_polar(1.0, p.phase);
    let (bob, tail_b) = if p.sppe_limit {
        let terms = vec![
            Term { local: 0, idler: 1, amp: C64::new(ts.sqrt(), 0.0) },
            Term { local: 1, idler: 0, amp: ph * rs.sqrt() },
        ];
        (vec![Component { weight: p.p_s(), terms }], 0.0)
    } else {
        let (lam_b, tail_b) = tmsv(p.g_b, policy)?;
        let comps = lam_b
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, &l)| {
                let terms = (0..=n)
                    .map(|k| {
                        // k photons towards Charlie, n − k kept by Bob
                        let mut binom = 1.0;
                        for j in 0..k {
                            binom = binom * (n - j) as f64 / (j + 1) as f64;
                        }
                        let mag = (binom * ts.powi(k as i32) * rs.powi((n - k) as i32)).sqrt();
                        Term { local: n - k, idler: k, amp: ph.powu((n - k) as u32) * mag }
                    })
                    .collect();
                Component { weight: l * (1.0 - (1.0 - p.eta_s).powi(n as i32)), terms }
            })
            .collect();
        (comps, tail_b)
    };
    let db = bob.iter().flat_map(|c| c.terms.iter().map(|t| t.local)).max().unwrap_or(0) + 1;
    let pattern = Pattern {
        u: C64::new(p.r_c().sqrt(), 0.0),
        w: C64::new(p.t_c.sqrt(), 0.0),
        v: visibility,
        detector,
    };
    let dims = (lam.len(), db);
    let (rho, prob) = herald(&alice, &bob, &pattern, r_t, r_t, dims)?;
    finish(rho, prob, dims, p.eta_c, tail_a + tail_b, policy)
}

fn check_common(r_t: f64, eta_c: f64, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r_t) {
        return Err(domain(format!("reflectivity must lie in [0, 1], got {r_t}")));
    }
    if !(eta_c > 0.0 && eta_c <= 1.0) {
        return Err(domain(format!("Charlie efficiency must lie in (0, 1], got {eta_c}")));
    }
    if !(0.0..=1.0).contains(&v) {
        return Err(domain(format!("visibility amplitude must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Distribution of the total number of idler photons reaching Charlie when
/// both parties pump a TMSV of gain `g`; entry σ is P(σ arrivals).
pub fn arrival_distribution_1ph(g: f64, r_t: f64, policy: &TruncationPolicy) -> Result<Vec<f64>> {
    check_common(r_t, 1.0, 1.0)?;
    let (lam, _) = tmsv(g, policy)?;
    let n = lam.len();
    // per-arm distribution of surviving photons
    let mut arm = vec![0.0; n];
    for (m, &l) in lam.iter().enumerate() {
        for k in 0..=m {
            arm[m - k] += l * loss_amplitude(m, k, r_t).powi(2);
        }
    }
    let mut out = vec![0.0; 2 * n - 1];
    for (i, &a) in arm.iter().enumerate() {
        for (j, &b) in arm.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    Ok(out)
}
