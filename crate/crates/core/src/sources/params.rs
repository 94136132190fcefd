use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Default fibre attenuation in dB/km.
pub const DEFAULT_ATTENUATION: f64 = 0.2;

/// Symmetric fibre link with Charlie at the midpoint.
///
/// `distance_km` is the full Alice–Bob separation; each idler crosses half of
/// it, so every loss quantity is expressed through `√η_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub distance_km: f64,
    pub attenuation_db_per_km: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::new(0.0)
    }
}

impl ChannelModel {
    pub fn new(distance_km: f64) -> Self {
        Self { distance_km, attenuation_db_per_km: DEFAULT_ATTENUATION }
    }

    /// Channel with the given per-arm reflectivity `r_t` (useful for oracle sweeps).
    pub fn from_reflectivity(r_t: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&r_t) {
            return Err(domain(format!("channel reflectivity must lie in [0, 1), got {r_t}")));
        }
        let sqrt_eta = 1.0 - r_t;
        let distance = -20.0 * sqrt_eta.log10() / DEFAULT_ATTENUATION;
        Ok(Self::new(distance.max(0.0)))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km >= 0.0) || !self.distance_km.is_finite() {
            return Err(domain(format!("distance must be a finite nonnegative number, got {}", self.distance_km)));
        }
        if !(self.attenuation_db_per_km >= 0.0) {
            return Err(domain("attenuation must be nonnegative"));
        }
        Ok(())
    }

    /// End-to-end transmissivity η_t.
    pub fn eta_t(&self) -> f64 {
        10f64.powf(-self.attenuation_db_per_km * self.distance_km / 10.0)
    }

    /// Transmissivity of one arm, √η_t.
    pub fn sqrt_eta_t(&self) -> f64 {
        10f64.powf(-self.attenuation_db_per_km * self.distance_km / 20.0)
    }

    /// Reflectivity of the loss beam splitter on each arm.
    pub fn r_t(&self) -> f64 {
        // 1 − 10^(−x) without cancellation at short distances
        let x = self.attenuation_db_per_km * self.distance_km / 20.0;
        -(-x * std::f64::consts::LN_10).exp_m1()
    }
}

/// Both parties pump a two-mode squeezed vacuum and send the idler to Charlie.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnePhotonParams {
    pub g: f64,
    pub channel: ChannelModel,
    pub eta_c: f64,
}

impl OnePhotonParams {
    pub fn new(g: f64, channel: ChannelModel) -> Self {
        Self { g, channel, eta_c: 1.0 }
    }

    /// Loss parameter C = r_t tanh²g that the heralded state depends on.
    pub fn loss_parameter(&self) -> f64 {
        self.channel.r_t() * self.g.tanh().powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if !(self.g >= 0.0) || !self.g.is_finite() {
            return Err(domain(format!("gain must be nonnegative, got {}", self.g)));
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return Err(domain(format!("Charlie efficiency must lie in (0, 1], got {}", self.eta_c)));
        }
        Ok(())
    }
}

/// Alice pumps a two-mode squeezed vacuum; Bob splits a heralded single
/// photon between his lab and the channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPhotonParams {
    pub g_a: f64,
    /// Gain of Bob's heralding pair source; sets P_s.
    pub g_b: f64,
    /// Fraction of Bob's photon routed towards Charlie.
    pub t_s: f64,
    /// Efficiency of Bob's heralding detector.
    pub eta_s: f64,
    /// Transmissivity of Charlie's beam splitter (r_c = 1 − t_c).
    pub t_c: f64,
    /// Phase of the |11⟩ component relative to |00⟩ in the heralded state.
    pub phase: f64,
    pub channel: ChannelModel,
    pub eta_c: f64,
    /// Treat Bob's heralded state as an ideal single photon (g_b ≪ 1).
    pub sppe_limit: bool,
}

impl Default for TwoPhotonParams {
    fn default() -> Self {
        Self {
            g_a: 0.1,
            g_b: DEFAULT_BOB_GAIN,
            t_s: 0.5,
            eta_s: 1.0,
            t_c: 0.5,
            phase: std::f64::consts::FRAC_PI_2,
            channel: ChannelModel::default(),
            eta_c: 1.0,
            sppe_limit: true,
        }
    }
}

/// Default gain of Bob's heralding source.
pub const DEFAULT_BOB_GAIN: f64 = 0.1;

impl TwoPhotonParams {
    pub fn r_s(&self) -> f64 {
        1.0 - self.t_s
    }

    pub fn r_c(&self) -> f64 {
        1.0 - self.t_c
    }

    /// Probability that Bob's source heralds, P_s = 1 − (1 + η_s sinh²g_b)⁻¹.
    pub fn p_s(&self) -> f64 {
        let x = self.eta_s * self.g_b.sinh().powi(2);
        x / (1.0 + x)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if !(self.g_a >= 0.0) || !self.g_a.is_finite() {
            return Err(domain(format!("Alice gain must be nonnegative, got {}", self.g_a)));
        }
        if !(self.g_b >= 0.0) || !self.g_b.is_finite() {
            return Err(domain(format!("Bob gain must be nonnegative, got {}", self.g_b)));
        }
        if !(0.0..=1.0).contains(&self.t_s) {
            return Err(domain(format!("t_s must lie in [0, 1], got {}", self.t_s)));
        }
        if !(0.0..=1.0).contains(&self.t_c) {
            return Err(domain(format!("t_c must lie in [0, 1], got {}", self.t_c)));
        }
        if !(self.eta_s > 0.0 && self.eta_s <= 1.0) {
            return Err(domain(format!("herald efficiency must lie in (0, 1], got {}", self.eta_s)));
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0) {
            return Err(domain(format!("Charlie efficiency must lie in (0, 1], got {}", self.eta_c)));
        }
        Ok(())
    }

    pub(crate) fn is_symmetric_charlie(&self) -> bool {
        (self.t_c - 0.5).abs() < 1e-12
    }
}
