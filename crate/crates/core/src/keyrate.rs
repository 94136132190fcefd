//! Asymptotic key rates from the analytic CHSH bound with noisy preprocessing.
//!
//! The secret fraction per heralded round is
//!
//! r = 1 − h((1 + √((S/2)² − 1))/2) − H(A₁|B₃) + h((1 + √(1 − q(1−q)(8 − S²)))/2),
//!
//! where q is the probability that Alice flips her raw bit. Multiplying by
//! the heralding probability and the pulse rate gives bits per second.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bell::{chsh, optimize_chsh, Encoding, OptimizeOptions, TSIRELSON};
use crate::error::{domain, Result};
use crate::measurement::{
    behavior_table, BehaviorTable, DisplacementSetting, MeasurementSettings, ProtocolParams, VisibilityModel,
};
use crate::optim::{grid_golden_max, maximize_multistart_in};
use crate::sources::ChannelModel;

/// Default pulse repetition rate, 100 MHz.
pub const DEFAULT_REP_RATE: f64 = 1e8;

/// Rates at or below this value count as zero when locating thresholds.
pub const RATE_FLOOR: f64 = 1e-12;

/// Upper end of the q search. At q = 1/2 the bound is identically zero, so
/// stopping just short of it keeps the sign of the rate informative when the
/// only positive values sit in a thin layer below q = 1/2.
pub const Q_MAX: f64 = 0.499;

/// h(x) in bits, with h(0) = h(1) = 0.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(domain(format!("binary entropy argument {x} outside [0, 1]")));
    }
    Ok(h2(x))
}

fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

fn h2(x: f64) -> f64 {
    -xlog2x(x) - xlog2x(1.0 - x)
}

/// Alice flips her raw key bit with probability q.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoisyPreprocessing {
    pub q: f64,
}

impl NoisyPreprocessing {
    pub fn new(q: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&q) {
            return Err(domain(format!("flip probability must lie in [0, 0.5], got {q}")));
        }
        Ok(Self { q })
    }
}

/// H(A|B) of the flipped 2×2 joint, in bits.
fn cond_entropy(block: &[[f64; 2]; 2], q: f64) -> f64 {
    let mut h_ab = 0.0;
    let mut h_b = 0.0;
    for b in 0..2 {
        let p0 = (1.0 - q) * block[0][b] + q * block[1][b];
        let p1 = (1.0 - q) * block[1][b] + q * block[0][b];
        h_ab -= xlog2x(p0.max(0.0)) + xlog2x(p1.max(0.0));
        h_b -= xlog2x((block[0][b] + block[1][b]).max(0.0));
    }
    (h_ab - h_b).max(0.0)
}

/// Error-correction cost H(A₁|B₃) of the key block (x = 1, y = 3) after
/// Alice's bit flip.
pub fn ec_entropy(table: &BehaviorTable, np: NoisyPreprocessing) -> f64 {
    cond_entropy(&table.joint[0][2], np.q)
}

fn clamp_s(s: f64) -> Result<f64> {
    if s > TSIRELSON + 1e-9 || s.is_nan() {
        return Err(domain(format!("S = {s} exceeds Tsirelson's bound")));
    }
    Ok(s.clamp(2.0, TSIRELSON))
}

/// The part of the bound that lower-bounds H(A|E): everything except H(A₁|B₃).
///
/// Values of S below 2 are treated as S = 2, where the bound vanishes.
pub fn eve_entropy_bound(s: f64, q: f64) -> Result<f64> {
    let s = clamp_s(s)?;
    Ok(1.0 - h2(chsh_bias(s)) + noise_gain(s, q))
}

/// (1 + √((S/2)² − 1))/2; the root is clamped to [0, 1] because (2√2/2)²
/// rounds to slightly above 2.
fn chsh_bias(s: f64) -> f64 {
    (1.0 + ((s / 2.0).powi(2) - 1.0).clamp(0.0, 1.0).sqrt()) / 2.0
}

/// h((1 + √(1 − q(1−q)(8 − S²)))/2), the entropy Eve loses to the flip.
pub fn noise_gain(s: f64, q: f64) -> f64 {
    let inner = (1.0 - q * (1.0 - q) * (8.0 - s * s)).clamp(0.0, 1.0);
    h2((1.0 + inner.sqrt()) / 2.0)
}

/// Key rate per heralded round.
pub fn rate_chsh_np(s: f64, h_ec: f64, q: f64) -> Result<f64> {
    NoisyPreprocessing::new(q)?;
    Ok(eve_entropy_bound(s, q)? - h_ec)
}

/// Fraction of the bound spent per heralded round at a fixed table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    /// |S| of the table.
    pub s: f64,
    pub h_ec: f64,
    pub q: f64,
    pub r: f64,
}

/// Rate of a behaviour table, with q either fixed at 0 or chosen optimally
/// on [0, `Q_MAX`] by a 51-node scan refined by golden section.
pub fn rate_of_table(table: &BehaviorTable, noisy_preprocessing: bool) -> Result<RatePoint> {
    let s = chsh(table)?.abs();
    let sc = clamp_s(s)?;
    let block = table.joint[0][2];
    let base = 1.0 - h2(chsh_bias(sc));
    let r_of = |q: f64| base + noise_gain(sc, q) - cond_entropy(&block, q);
    let q = if noisy_preprocessing { grid_golden_max(r_of, 0.0, Q_MAX, 51, 1e-7).0 } else { 0.0 };
    Ok(RatePoint { s, h_ec: cond_entropy(&block, q), q, r: r_of(q) })
}

/// Options for rate optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateOptions {
    pub optimize: OptimizeOptions,
    pub noisy_preprocessing: bool,
    pub rep_rate: f64,
    /// Maximize P_h·r instead of r.
    pub maximize_throughput: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            optimize: OptimizeOptions::default(),
            noisy_preprocessing: true,
            rep_rate: DEFAULT_REP_RATE,
            maximize_throughput: false,
        }
    }
}

/// Optimized operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateResult {
    /// Analytic rate per heralded round; may be negative.
    pub r: f64,
    /// |S| at the operating point.
    pub s: f64,
    pub h_ec: f64,
    pub q_opt: f64,
    pub p_h: f64,
    pub rep_rate: f64,
    /// Bits per second, P_h·ν·max(r, 0).
    pub throughput: f64,
    pub params: ProtocolParams,
    pub settings: MeasurementSettings,
    pub converged: bool,
    pub seed: u64,
}

impl RateResult {
    pub fn is_positive(&self) -> bool {
        self.r > RATE_FLOOR
    }
}

/// Builds a [`RateResult`] at fixed parameters and settings.
pub fn evaluate_rate(
    params: &ProtocolParams,
    settings: &MeasurementSettings,
    eta_d: f64,
    vis: VisibilityModel,
    noisy_preprocessing: bool,
    rep_rate: f64,
) -> Result<RateResult> {
    let table = behavior_table(params, settings, eta_d, vis)?;
    let pt = rate_of_table(&table, noisy_preprocessing)?;
    let p_h = params.herald_prob()?;
    Ok(RateResult {
        r: pt.r,
        s: pt.s,
        h_ec: pt.h_ec,
        q_opt: pt.q,
        p_h,
        rep_rate,
        throughput: p_h * rep_rate * pt.r.max(0.0),
        params: *params,
        settings: *settings,
        converged: true,
        seed: 0,
    })
}

/// Maximizes the key rate over settings (including Bob's key setting β₃),
/// source parameters and q.
pub fn optimize_rate(
    base: &ProtocolParams,
    eta_d: f64,
    vis: VisibilityModel,
    opts: &RateOptions,
    hints: &[(ProtocolParams, MeasurementSettings)],
) -> Result<RateResult> {
    if !(eta_d > 0.0 && eta_d <= 1.0) {
        return Err(domain(format!("detector efficiency must lie in (0, 1], got {eta_d}")));
    }
    if !(opts.rep_rate > 0.0) {
        return Err(domain("repetition rate must be positive"));
    }
    base.herald_prob()?;
    let enc = Encoding::new(*base, opts.optimize.space, true);
    let bounds = enc.bounds();
    // Without a violation the bound is at most zero and nearly flat, which
    // strands a simplex. Below |S| = 2 the shortfall is subtracted, so the
    // search is pulled toward violating settings. The value is continuous
    // at |S| = 2 and unchanged wherever the rate can be positive.
    let objective = |x: &[f64]| -> f64 {
        let (p, s) = enc.decode(x);
        let Ok(table) = behavior_table(&p, &s, eta_d, vis) else { return f64::NEG_INFINITY };
        let Ok(pt) = rate_of_table(&table, opts.noisy_preprocessing) else { return f64::NEG_INFINITY };
        let shaped = pt.r - (2.0 - pt.s).max(0.0);
        if opts.maximize_throughput {
            p.herald_prob().map(|ph| ph * shaped).unwrap_or(f64::NEG_INFINITY)
        } else {
            shaped
        }
    };
    let mut hint_x: Vec<Vec<f64>> = hints.iter().map(|(p, s)| enc.encode(p, s)).collect();
    // The rate optimum sits close to the CHSH optimum; seed from it with a
    // few choices of the key setting.
    let bell = optimize_chsh(base, eta_d, vis, &opts.optimize, &[])?;
    let b = bell.settings;
    let a1 = b.alice[0];
    for b3 in [b.bob[0], b.bob[1], DisplacementSetting::new(0.0, 0.0), DisplacementSetting::new(a1.magnitude, a1.phase + std::f64::consts::PI)] {
        let mut s = b;
        s.bob[2] = b3;
        hint_x.push(enc.encode(&bell.params, &s));
    }
    hint_x.extend(enc.default_hints());
    let run = maximize_multistart_in(objective, &bounds, &enc.start_box(), &opts.optimize.multistart, &hint_x);
    let (params, settings) = enc.decode(&run.best.x);
    let mut res = evaluate_rate(&params, &settings, eta_d, vis, opts.noisy_preprocessing, opts.rep_rate)?;
    res.converged = run.best.converged;
    res.seed = opts.optimize.multistart.seed;
    Ok(res)
}

/// Re-optimizes every parameter at each distance, maximizing throughput.
///
/// Points are independent and run in parallel; the output follows the
/// order of `distances_km`.
pub fn distance_sweep(
    base: &ProtocolParams,
    eta_d: f64,
    vis: VisibilityModel,
    distances_km: &[f64],
    opts: &RateOptions,
) -> Result<Vec<RateResult>> {
    let attenuation = base.channel().attenuation_db_per_km;
    let opts = RateOptions { maximize_throughput: true, ..*opts };
    distances_km
        .par_iter()
        .map(|&l| {
            let ch = ChannelModel { distance_km: l, attenuation_db_per_km: attenuation };
            ch.validate()?;
            optimize_rate(&base.with_channel(ch), eta_d, vis, &opts, &[])
        })
        .collect()
}
