//! No-click statistics of displaced on/off detection.
//!
//! Each party displaces its signal mode by δ and watches an on/off detector
//! of efficiency η_d. The no-click outcome is labelled +1 (key bit 0) and
//! a click −1 (key bit 1). Only the effective displacement δ enters the
//! formulas; a physical implementation mixes the signal with a coherent
//! state α on a beam splitter of reflectivity r, giving δ = −iα√r.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::sources::{self, ChannelModel, OnePhotonParams, TwoPhotonParams};

/// Displacement amplitude in polar form.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DisplacementSetting {
    pub magnitude: f64,
    pub phase: f64,
}

impl DisplacementSetting {
    pub fn new(magnitude: f64, phase: f64) -> Self {
        Self { magnitude, phase }
    }

    /// Builds the setting from a complex δ, phase wrapped to [0, 2π).
    pub fn from_complex(z: C64) -> Self {
        Self { magnitude: z.norm(), phase: z.arg().rem_euclid(std::f64::consts::TAU) }
    }

    pub fn to_complex(self) -> C64 {
        C64::from_polar(self.magnitude, self.phase)
    }

    /// Same amplitude with the phase wrapped to [0, 2π).
    pub fn canonical(self) -> Self {
        let phase = self.phase.rem_euclid(std::f64::consts::TAU);
        // rem_euclid can round up to exactly TAU
        Self { phase: if phase >= std::f64::consts::TAU { 0.0 } else { phase }, ..self }
    }
}

/// Two settings for Alice (x = 1, 2) and three for Bob (y = 1, 2, 3).
///
/// Only relative phases are observable, so Alice's first phase is kept at 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurementSettings {
    pub alice: [DisplacementSetting; 2],
    pub bob: [DisplacementSetting; 3],
}

impl MeasurementSettings {
    pub fn validate(&self) -> Result<()> {
        for s in self.alice.iter().chain(self.bob.iter()) {
            if !(s.magnitude >= 0.0) || !s.magnitude.is_finite() || !s.phase.is_finite() {
                return Err(domain(format!("invalid displacement setting {s:?}")));
            }
        }
        Ok(())
    }

    /// Copy with all phases wrapped into [0, 2π).
    pub fn canonical(&self) -> Self {
        Self { alice: self.alice.map(DisplacementSetting::canonical), bob: self.bob.map(DisplacementSetting::canonical) }
    }
}

/// Spectral overlap amplitude v of the two photons meeting at Charlie.
///
/// The Hong–Ou–Mandel visibility is v². Any phase of the overlap is absorbed
/// into Bob's setting phases, so v is real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityModel {
    pub v: f64,
}

impl Default for VisibilityModel {
    fn default() -> Self {
        Self { v: 1.0 }
    }
}

impl VisibilityModel {
    pub fn new(v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&v) {
            return Err(domain(format!("visibility amplitude must lie in [0, 1], got {v}")));
        }
        Ok(Self { v })
    }
}

/// Protocol selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    OnePhoton,
    TwoPhoton,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::OnePhoton => "one_photon",
            Protocol::TwoPhoton => "two_photon",
        })
    }
}

/// Physical parameters of one protocol instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ProtocolParams {
    OnePhoton(OnePhotonParams),
    TwoPhoton(TwoPhotonParams),
}

impl ProtocolParams {
    /// Defaults for the given protocol over the given channel.
    pub fn default_for(protocol: Protocol, channel: ChannelModel) -> Self {
        match protocol {
            Protocol::OnePhoton => Self::OnePhoton(OnePhotonParams::new(0.1, channel)),
            Protocol::TwoPhoton => Self::TwoPhoton(TwoPhotonParams { channel, ..Default::default() }),
        }
    }

    pub fn protocol(&self) -> Protocol {
        match self {
            Self::OnePhoton(_) => Protocol::OnePhoton,
            Self::TwoPhoton(_) => Protocol::TwoPhoton,
        }
    }

    pub fn channel(&self) -> ChannelModel {
        match self {
            Self::OnePhoton(p) => p.channel,
            Self::TwoPhoton(p) => p.channel,
        }
    }

    pub fn with_channel(mut self, channel: ChannelModel) -> Self {
        match &mut self {
            Self::OnePhoton(p) => p.channel = channel,
            Self::TwoPhoton(p) => p.channel = channel,
        }
        self
    }

    /// Heralding probability per pulse, both click patterns included.
    pub fn herald_prob(&self) -> Result<f64> {
        match self {
            Self::OnePhoton(p) => Ok(sources::herald_prob_1ph(p)),
            Self::TwoPhoton(p) => sources::herald_prob_2ph(p),
        }
    }

    /// Pump gain of the TMSV source (Alice's for the 2-photon protocol).
    pub fn gain(&self) -> f64 {
        match self {
            Self::OnePhoton(p) => p.g,
            Self::TwoPhoton(p) => p.g_a,
        }
    }

    /// Bob's splitter transmissivity, if the protocol has one.
    pub fn t_s(&self) -> Option<f64> {
        match self {
            Self::OnePhoton(_) => None,
            Self::TwoPhoton(p) => Some(p.t_s),
        }
    }
}

/// Outcome probabilities p(a,b|x,y) with a,b ∈ {0: no click, 1: click}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BehaviorTable {
    /// Indexed `[x][y][a][b]`, zero-based settings.
    pub joint: [[[[f64; 2]; 2]; 3]; 2],
    /// Indexed `[x][a]`.
    pub alice: [[f64; 2]; 2],
    /// Indexed `[y][b]`.
    pub bob: [[f64; 2]; 3],
}

/// Tolerance for normalization, marginal consistency and positivity.
pub const TABLE_TOL: f64 = 1e-12;

impl BehaviorTable {
    /// Assembles the table from no-click probabilities Q_ab(x,y), Q_a(x), Q_b(y).
    pub fn from_no_click(q_ab: [[f64; 3]; 2], q_a: [f64; 2], q_b: [f64; 3]) -> Result<Self> {
        let mut joint = [[[[0.0; 2]; 2]; 3]; 2];
        for x in 0..2 {
            for y in 0..3 {
                let q = q_ab[x][y];
                joint[x][y] = [[q, q_a[x] - q], [q_b[y] - q, 1.0 - q_a[x] - q_b[y] + q]];
            }
        }
        let t = Self { joint, alice: q_a.map(|q| [q, 1.0 - q]), bob: q_b.map(|q| [q, 1.0 - q]) };
        t.validate()?;
        Ok(t)
    }

    pub fn q_ab(&self, x: usize, y: usize) -> f64 {
        self.joint[x][y][0][0]
    }

    pub fn q_a(&self, x: usize) -> f64 {
        self.alice[x][0]
    }

    pub fn q_b(&self, y: usize) -> f64 {
        self.bob[y][0]
    }

    /// Checks positivity, normalization, marginal consistency and no-signalling.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Consistency(what));
        for x in 0..2 {
            for y in 0..3 {
                let blk = &self.joint[x][y];
                let mut sum = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        let p = blk[a][b];
                        if !(-TABLE_TOL..=1.0 + TABLE_TOL).contains(&p) {
                            return bad(format!("p({a},{b}|{x},{y}) = {p:e}"));
                        }
                        sum += p;
                    }
                }
                if (sum - 1.0).abs() > TABLE_TOL {
                    return bad(format!("block ({x},{y}) sums to {sum}"));
                }
                for a in 0..2 {
                    let m = blk[a][0] + blk[a][1];
                    if (m - self.alice[x][a]).abs() > TABLE_TOL {
                        return bad(format!("Alice marginal mismatch at ({x},{y})"));
                    }
                }
                for b in 0..2 {
                    let m = blk[0][b] + blk[1][b];
                    if (m - self.bob[y][b]).abs() > TABLE_TOL {
                        return bad(format!("Bob marginal mismatch at ({x},{y})"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn check_eta_c(eta_d: f64, c: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta_d) {
        return Err(domain(format!("detector efficiency must lie in [0, 1], got {eta_d}")));
    }
    if !(0.0..1.0).contains(&c) {
        return Err(domain(format!("loss parameter C must lie in [0, 1), got {c}")));
    }
    Ok(())
}

/// One party's no-click probability in the 1-photon protocol, with
/// C = r_t tanh²g. The same expression holds for Alice and Bob.
pub fn p1ph_marginal(delta: C64, eta_d: f64, c: f64) -> Result<f64> {
    check_eta_c(eta_d, c)?;
    let d2 = delta.norm_sqr();
    let k = 1.0 - c * (1.0 - eta_d);
    let bracket = 2.0 * k * k - eta_d * k + (1.0 - c) * eta_d * eta_d * d2;
    Ok(0.5 * (1.0 - c) * bracket / k.powi(3) * (-eta_d * (1.0 - c) * d2 / k).exp())
}

/// Joint no-click probability in the 1-photon protocol.
pub fn p1ph_joint(alpha: C64, beta: C64, eta_d: f64, c: f64, vis: VisibilityModel) -> Result<f64> {
    check_eta_c(eta_d, c)?;
    let (a2, b2) = (alpha.norm_sqr(), beta.norm_sqr());
    let k = 1.0 - c * (1.0 - eta_d);
    let interference = 2.0 * vis.v * (alpha * beta.conj()).im;
    let bracket = 2.0 * (1.0 - eta_d) * k + eta_d * eta_d * (a2 + b2 + interference);
    Ok(0.5 * (1.0 - c).powi(3) * bracket / k.powi(4) * (-eta_d * (1.0 - c) * (a2 + b2) / k).exp())
}

fn two_photon_constants(p: &TwoPhotonParams, eta_d: f64) -> Result<(f64, f64, f64)> {
    p.validate()?;
    if !p.sppe_limit {
        return Err(domain("closed-form 2-photon probabilities need the split-photon limit; use the oracle"));
    }
    if !p.is_symmetric_charlie() {
        return Err(domain("closed-form 2-photon probabilities assume a balanced Charlie splitter"));
    }
    let th2 = p.g_a.tanh().powi(2);
    let c_t = p.channel.r_t() * th2;
    check_eta_c(eta_d, c_t)?;
    Ok((c_t, p.r_s() * th2, p.t_s + p.r_s() * th2))
}

/// Alice's no-click probability in the 2-photon protocol (split-photon limit).
pub fn p2ph_marginal_alice(alpha: C64, eta_d: f64, p: &TwoPhotonParams) -> Result<f64> {
    let (c, c_s, norm) = two_photon_constants(p, eta_d)?;
    let a2 = alpha.norm_sqr();
    let k = 1.0 - c * (1.0 - eta_d);
    let u = eta_d * eta_d * a2 / k;
    let bracket = p.t_s * (1.0 + c * u) + c_s * (1.0 - eta_d + u);
    Ok((-(1.0 - c) * eta_d * a2 / k).exp() * ((1.0 - c) / k).powi(2) * bracket / norm)
}

/// Bob's no-click probability in the 2-photon protocol (split-photon limit).
pub fn p2ph_marginal_bob(beta: C64, eta_d: f64, p: &TwoPhotonParams) -> Result<f64> {
    let (_, c_s, norm) = two_photon_constants(p, eta_d)?;
    let b2 = beta.norm_sqr();
    Ok((-eta_d * b2).exp() * (p.t_s + c_s * (1.0 - eta_d + eta_d * eta_d * b2)) / norm)
}

/// Joint no-click probability in the 2-photon protocol (split-photon limit).
///
/// The interference term is 2η_d² tanh(g_a) √(t_s r_s) · v·Re(e^{−iφ} αβ),
/// which is v·Im(αβ) at the default φ = π/2. Unlike the 1-photon protocol no
/// conjugate appears: the coherence links |0,0⟩ with |1,1⟩.
pub fn p2ph_joint(alpha: C64, beta: C64, eta_d: f64, p: &TwoPhotonParams, vis: VisibilityModel) -> Result<f64> {
    let (c, c_s, norm) = two_photon_constants(p, eta_d)?;
    let (a2, b2) = (alpha.norm_sqr(), beta.norm_sqr());
    let k = 1.0 - c * (1.0 - eta_d);
    let u = eta_d * eta_d * a2 / k;
    let cross = (C64::from_polar(1.0, -p.phase) * alpha * beta).re;
    let bracket = p.t_s * (1.0 + c * u)
        + c_s * (1.0 - eta_d + u) * (1.0 - eta_d + eta_d * eta_d * b2)
        + 2.0 * eta_d * eta_d * p.g_a.tanh() * (p.t_s * p.r_s()).sqrt() * vis.v * cross;
    let pref = (-(1.0 - c) * eta_d * a2 / k - eta_d * b2).exp() * (1.0 - c).powi(2) / (norm * k * k);
    Ok(pref * bracket)
}

/// ⟨n|D(δ)E₀D†(δ)|n'⟩ in closed form.
pub fn povm_matrix_element(n: usize, n_prime: usize, delta: C64, eta_d: f64) -> C64 {
    let fact = |k: usize| (1..=k).fold(1.0_f64, |acc, j| acc * j as f64);
    let root = (fact(n) * fact(n_prime)).sqrt();
    let mut sum = C64::new(0.0, 0.0);
    for i in 0..=n.min(n_prime) {
        let w = (1.0 - eta_d).powi(i as i32) * eta_d.powi((n + n_prime - 2 * i) as i32)
            / (fact(i) * fact(n - i) * fact(n_prime - i));
        sum += delta.powu((n - i) as u32) * delta.conj().powu((n_prime - i) as u32) * w;
    }
    sum * root * (-eta_d * delta.norm_sqr()).exp()
}

/// Full behaviour table for the given protocol instance and settings.
pub fn behavior_table(
    params: &ProtocolParams,
    settings: &MeasurementSettings,
    eta_d: f64,
    vis: VisibilityModel,
) -> Result<BehaviorTable> {
    settings.validate()?;
    let a = settings.alice.map(DisplacementSetting::to_complex);
    let b = settings.bob.map(DisplacementSetting::to_complex);
    let mut q_ab = [[0.0; 3]; 2];
    let mut q_a = [0.0; 2];
    let mut q_b = [0.0; 3];
    match params {
        ProtocolParams::OnePhoton(p) => {
            p.validate()?;
            let c = p.loss_parameter();
            for x in 0..2 {
                q_a[x] = p1ph_marginal(a[x], eta_d, c)?;
                for y in 0..3 {
                    q_ab[x][y] = p1ph_joint(a[x], b[y], eta_d, c, vis)?;
                }
            }
            for y in 0..3 {
                q_b[y] = p1ph_marginal(b[y], eta_d, c)?;
            }
        }
        ProtocolParams::TwoPhoton(p) => {
            for x in 0..2 {
                q_a[x] = p2ph_marginal_alice(a[x], eta_d, p)?;
                for y in 0..3 {
                    q_ab[x][y] = p2ph_joint(a[x], b[y], eta_d, p, vis)?;
                }
            }
            for y in 0..3 {
                q_b[y] = p2ph_marginal_bob(b[y], eta_d, p)?;
            }
        }
    }
    BehaviorTable::from_no_click(q_ab, q_a, q_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock_oracle::{
        displaced_noclick, herald_single_click_1ph, herald_single_click_2ph, numeric_marginal,
        numeric_probability, CharlieDetector, Side, TruncationPolicy,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PNR: CharlieDetector = CharlieDetector::PhotonNumberResolving;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rand_delta(rng: &mut ChaCha8Rng) -> C64 {
        C64::from_polar(rng.random_range(0.0..2.0), rng.random_range(0.0..std::f64::consts::TAU))
    }

    #[test]
    fn one_photon_marginal_limits() {
        assert!((p1ph_marginal(c(0.0, 0.0), 1.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        // (1+|δ|²)e^{−|δ|²}/2 at δ = 1
        let want = (-1.0_f64).exp();
        assert!((p1ph_marginal(c(1.0, 0.0), 1.0, 0.0).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!(p1ph_marginal(c(0.0, 0.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn one_photon_joint_limits() {
        let v1 = VisibilityModel::default();
        assert_eq!(p1ph_joint(c(0.0, 0.0), c(0.0, 0.0), 1.0, 0.0, v1).unwrap(), 0.0);
        for eta in [0.3, 0.8] {
            let p = p1ph_joint(c(0.0, 0.0), c(0.0, 0.0), eta, 0.0, v1).unwrap();
            assert!((p - (1.0 - eta)).abs() < 1e-15);
        }
        // destructive interference point
        assert!(p1ph_joint(c(1.0, 0.0), c(0.0, 1.0), 1.0, 0.0, v1).unwrap().abs() < 1e-16);
    }

    #[test]
    fn zero_visibility_drops_only_the_interference_term() {
        let (a, b, eta, cc) = (c(0.4, -0.3), c(-0.2, 0.9), 0.85_f64, 0.05_f64);
        let k = 1.0 - cc * (1.0 - eta);
        let im = (a * b.conj()).im;
        let pref = 0.5 * (1.0 - cc).powi(3) / k.powi(4) * (-eta * (1.0 - cc) * (a.norm_sqr() + b.norm_sqr()) / k).exp();
        let full = p1ph_joint(a, b, eta, cc, VisibilityModel::default()).unwrap();
        let none = p1ph_joint(a, b, eta, cc, VisibilityModel::new(0.0).unwrap()).unwrap();
        assert!((full - none - pref * 2.0 * eta * eta * im).abs() < 1e-15);
    }

    #[test]
    fn two_photon_limits() {
        let p = TwoPhotonParams { g_a: 0.2, t_s: 0.3, ..Default::default() };
        let th2 = p.g_a.tanh().powi(2);
        let want = p.t_s / (p.t_s + p.r_s() * th2);
        assert!((p2ph_marginal_bob(c(0.0, 0.0), 1.0, &p).unwrap() - want).abs() < 1e-15);
        let p0 = TwoPhotonParams { g_a: 1e-9, ..p };
        let a = c(0.6, 0.2);
        for eta in [0.7, 1.0] {
            let m = p2ph_marginal_alice(a, eta, &p0).unwrap();
            assert!((m - (-eta * a.norm_sqr()).exp()).abs() < 1e-12);
        }
        let j = p2ph_joint(c(0.0, 0.0), c(0.0, 0.0), 1.0, &p0, VisibilityModel::default()).unwrap();
        assert!((j - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_photon_visibility_slope() {
        let p = TwoPhotonParams { g_a: 0.15, t_s: 0.4, channel: ChannelModel::new(20.0), ..Default::default() };
        let (a, b, eta) = (c(0.5, 0.1), c(0.3, 0.7), 0.9);
        let f = |v: f64| p2ph_joint(a, b, eta, &p, VisibilityModel::new(v).unwrap()).unwrap();
        let h = 1e-4;
        let fd = (f(0.9 + h) - f(0.9 - h)) / (2.0 * h);
        let cc = p.channel.r_t() * p.g_a.tanh().powi(2);
        let k = 1.0 - cc * (1.0 - eta);
        let norm = p.t_s + p.r_s() * p.g_a.tanh().powi(2);
        let pref = (-(1.0 - cc) * eta * a.norm_sqr() / k - eta * b.norm_sqr()).exp() * (1.0 - cc).powi(2) / (norm * k * k);
        let analytic = pref * 2.0 * eta * eta * p.g_a.tanh() * (p.t_s * p.r_s()).sqrt() * (a * b).im;
        assert!((fd - analytic).abs() < 1e-10);
        // linear in v
        assert!((f(0.5) - 0.5 * (f(0.0) + f(1.0))).abs() < 1e-15);
    }

    #[test]
    fn povm_element_limits_and_oracle() {
        let d = c(0.8, -0.5);
        assert!((povm_matrix_element(0, 0, d, 0.7).re - (-0.7 * d.norm_sqr()).exp()).abs() < 1e-15);
        let e = povm_matrix_element(2, 3, d, 1.0);
        let want = (-d.norm_sqr()).exp() * d.powu(2) * d.conj().powu(3) / (2.0_f64 * 6.0).sqrt();
        assert!((e - want).norm() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let delta = rand_delta(&mut rng);
            let eta = rng.random_range(0.5..1.0);
            let m = displaced_noclick(delta, eta, 7).unwrap();
            for n in 0..7 {
                for k in 0..7 {
                    let diff = (m.get(n, k) - povm_matrix_element(n, k, delta, eta)).norm();
                    assert!(diff < 1e-10, "{n} {k} {diff:e}");
                }
            }
        }
    }

    #[test]
    fn one_photon_formulas_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..25 {
            let g = rng.random_range(0.001..0.3);
            let r_t = rng.random_range(0.0..0.9);
            let v = rng.random_range(0.8..1.0);
            let eta = rng.random_range(0.5..1.0);
            let h = herald_single_click_1ph(g, r_t, 1.0, v, PNR, &TruncationPolicy::default()).unwrap();
            let cc = r_t * g.tanh().powi(2);
            let (a, b) = (rand_delta(&mut rng), rand_delta(&mut rng));
            let vis = VisibilityModel::new(v).unwrap();
            let j = numeric_probability(&h.state, a, b, eta).unwrap();
            assert!((j - p1ph_joint(a, b, eta, cc, vis).unwrap()).abs() < 1e-9);
            let ma = numeric_marginal(&h.state, Side::Alice, a, eta).unwrap();
            assert!((ma - p1ph_marginal(a, eta, cc).unwrap()).abs() < 1e-9);
            let mb = numeric_marginal(&h.state, Side::Bob, b, eta).unwrap();
            assert!((mb - p1ph_marginal(b, eta, cc).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn two_photon_formulas_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..25 {
            let p = TwoPhotonParams {
                g_a: rng.random_range(0.001..0.3),
                t_s: rng.random_range(0.01..0.99),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                channel: ChannelModel::from_reflectivity(rng.random_range(0.0..0.9)).unwrap(),
                ..Default::default()
            };
            let v = rng.random_range(0.8..1.0);
            let eta = rng.random_range(0.5..1.0);
            let h = herald_single_click_2ph(&p, v, PNR, &TruncationPolicy::default()).unwrap();
            let (a, b) = (rand_delta(&mut rng), rand_delta(&mut rng));
            let vis = VisibilityModel::new(v).unwrap();
            let j = numeric_probability(&h.state, a, b, eta).unwrap();
            assert!((j - p2ph_joint(a, b, eta, &p, vis).unwrap()).abs() < 1e-9, "{p:?}");
            let ma = numeric_marginal(&h.state, Side::Alice, a, eta).unwrap();
            assert!((ma - p2ph_marginal_alice(a, eta, &p).unwrap()).abs() < 1e-9);
            let mb = numeric_marginal(&h.state, Side::Bob, b, eta).unwrap();
            assert!((mb - p2ph_marginal_bob(b, eta, &p).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn oracle_probability_sanity_on_bell_state() {
        let h = herald_single_click_1ph(1e-5, 0.0, 1.0, 1.0, PNR, &TruncationPolicy::default()).unwrap();
        let z = c(0.0, 0.0);
        assert!(numeric_probability(&h.state, z, z, 1.0).unwrap().abs() < 1e-9);
        assert!((numeric_marginal(&h.state, Side::Alice, z, 1.0).unwrap() - 0.5).abs() < 1e-9);
    }

    fn random_settings(rng: &mut ChaCha8Rng) -> MeasurementSettings {
        let mut s = MeasurementSettings::default();
        for d in s.alice.iter_mut().chain(s.bob.iter_mut()) {
            *d = DisplacementSetting::new(rng.random_range(0.0..3.0), rng.random_range(0.0..6.3));
        }
        s.alice[0].phase = 0.0;
        s
    }

    #[test]
    fn behavior_tables_are_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..200 {
            let ch = ChannelModel::new(rng.random_range(0.0..200.0));
            let params = if i % 2 == 0 {
                ProtocolParams::OnePhoton(OnePhotonParams::new(rng.random_range(1e-4..1.0), ch))
            } else {
                ProtocolParams::TwoPhoton(TwoPhotonParams {
                    g_a: rng.random_range(1e-4..1.0),
                    t_s: rng.random_range(1e-4..0.9999),
                    channel: ch,
                    ..Default::default()
                })
            };
            let s = random_settings(&mut rng);
            let eta = rng.random_range(0.0..1.0);
            let vis = VisibilityModel::new(rng.random_range(0.0..1.0)).unwrap();
            let t = behavior_table(&params, &s, eta, vis).unwrap();
            for x in 0..2 {
                for y in 0..3 {
                    assert!(t.q_ab(x, y) <= t.q_a(x).min(t.q_b(y)) + TABLE_TOL);
                }
            }
            // marginals do not depend on v at all
            let t0 = behavior_table(&params, &s, eta, VisibilityModel::new(0.0).unwrap()).unwrap();
            assert_eq!(t.alice, t0.alice);
            assert_eq!(t.bob, t0.bob);
        }
    }
}
