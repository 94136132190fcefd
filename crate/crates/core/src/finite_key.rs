//! Finite-size key rates from a tangent min-tradeoff function.
//!
//! The asymptotic entropy bound F(S) (the key-rate bound without the
//! error-correction term) is convex in the CHSH winning probability
//! p = 1/2 + |S|/8, so its tangent at the operating point is an affine
//! lower bound valid for every p. Feeding that line into a second-order
//! entropy-accumulation statement gives
//!
//! ℓ/N = F(S₀) − H(A₁|B₃) − Δ(N) − [log₂(1/ε_EC) + 2 log₂(1/ε_PA)]/N,
//!
//! with Δ(N) ≈ V √(2 ln2 · g(ε_s)) / √N. V is built from the variance of
//! the min-tradeoff function under infrequent sampling with test fraction γ,
//! and g(ε) = −log₂(1 − √(1 − ε²)). The Rényi order is chosen by
//! minimizing the full expression including its third-order remainder.

use std::f64::consts::{LN_2, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::keyrate::{self, eve_entropy_bound, RateOptions, RateResult};
use crate::measurement::{ProtocolParams, VisibilityModel};
use crate::optim::golden_section_max;

/// Winning probability at S = 2.
pub const P_WIN_CLASSICAL: f64 = 0.75;
/// Winning probability at Tsirelson's bound.
pub const P_WIN_MAX: f64 = (2.0 + SQRT_2) / 4.0;

/// CHSH winning probability for a violation |S|.
pub fn p_win(s: f64) -> f64 {
    0.5 + s.abs() / 8.0
}

fn h_prime(x: f64) -> f64 {
    ((1.0 - x) / x).log2()
}

/// dF/dS of the entropy bound at fixed q.
pub fn eve_entropy_slope(s: f64, q: f64) -> Result<f64> {
    let root = ((s / 2.0).powi(2) - 1.0).sqrt();
    if !(s > 2.0 && s < 2.0 * SQRT_2) || root <= 1e-9 {
        return Err(domain(format!("tangent needs 2 < |S| < 2√2 strictly, got {s}")));
    }
    let a = (1.0 + root) / 2.0;
    let da = s / (8.0 * root);
    let mut slope = -h_prime(a) * da;
    let w = q * (1.0 - q);
    if w > 0.0 {
        let inner = (1.0 - w * (8.0 - s * s)).sqrt();
        let b = (1.0 + inner) / 2.0;
        slope += h_prime(b) * w * s / (2.0 * inner);
    }
    Ok(slope)
}

/// Affine min-tradeoff function f(p) = intercept + slope·p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinTradeoff {
    pub slope: f64,
    pub intercept: f64,
    /// Range of f over the quantum winning probabilities [3/4, P_WIN_MAX].
    pub max_f: f64,
    pub min_f: f64,
    /// Operating winning probability the tangent touches.
    pub p0: f64,
    pub q: f64,
}

impl MinTradeoff {
    pub fn eval(&self, p: f64) -> f64 {
        self.intercept + self.slope * p
    }

    /// Values taken by the infrequent-sampling extension of f on a winning
    /// test round, a losing test round, and a key round.
    pub fn sampled_values(&self, gamma: f64) -> [f64; 3] {
        let m = self.max_f;
        [m + (self.eval(1.0) - m) / gamma, m + (self.eval(0.0) - m) / gamma, m]
    }

    /// Largest variance of the extended f over the quantum interval of p.
    pub fn var_bound(&self, gamma: f64) -> f64 {
        let [w, l, _] = self.sampled_values(gamma);
        let (dw, dl) = (w - self.max_f, l - self.max_f);
        let var = |p: f64| {
            let mean = gamma * (p * dw + (1.0 - p) * dl);
            gamma * (p * dw * dw + (1.0 - p) * dl * dl) - mean * mean
        };
        // concave quadratic in p: check the vertex and the ends
        let d = dw - dl;
        let mut best = var(P_WIN_CLASSICAL).max(var(P_WIN_MAX));
        if d != 0.0 {
            let vertex = ((dw * dw - dl * dl) / gamma - 2.0 * dl * d) / (2.0 * d * d);
            if (P_WIN_CLASSICAL..=P_WIN_MAX).contains(&vertex) {
                best = best.max(var(vertex));
            }
        }
        best.max(0.0)
    }
}

/// Tangent of F at S₀, expressed in winning-probability units.
pub fn tangent_min_tradeoff(s0: f64, q: f64) -> Result<MinTradeoff> {
    let s0 = s0.abs();
    let slope = 8.0 * eve_entropy_slope(s0, q)?;
    let p0 = p_win(s0);
    let intercept = eve_entropy_bound(s0, q)? - slope * p0;
    let ends = [intercept + slope * P_WIN_CLASSICAL, intercept + slope * P_WIN_MAX];
    Ok(MinTradeoff { slope, intercept, max_f: ends[0].max(ends[1]), min_f: ends[0].min(ends[1]), p0, q })
}

/// How the round count N is interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundCounting {
    /// N counts heralded rounds.
    #[default]
    Heralded,
    /// N counts emitted pulses; only N·P_h of them are heralded.
    Pulses,
}

/// Fraction of rounds used for Bell testing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFraction {
    Fixed(f64),
    /// Golden-section search on a logarithmic scale over [1e-4, 1].
    #[default]
    Optimized,
}

/// Security and sampling parameters of the finite-size analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeyParams {
    pub rounds: f64,
    /// Smoothing and privacy-amplification error.
    pub eps_sound: f64,
    pub eps_ec: f64,
    pub test_fraction: TestFraction,
    pub counting: RoundCounting,
    /// Size of Alice's key alphabet.
    pub alphabet: f64,
}

impl Default for FiniteKeyParams {
    fn default() -> Self {
        Self {
            rounds: 1e10,
            eps_sound: 1e-6,
            eps_ec: 1e-6,
            test_fraction: TestFraction::Optimized,
            counting: RoundCounting::Heralded,
            alphabet: 2.0,
        }
    }
}

impl FiniteKeyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rounds >= 1.0) || !self.rounds.is_finite() {
            return Err(domain(format!("round count must be ≥ 1, got {}", self.rounds)));
        }
        for (name, e) in [("eps_sound", self.eps_sound), ("eps_ec", self.eps_ec)] {
            if !(e > 0.0 && e < 1.0) {
                return Err(domain(format!("{name} must lie in (0, 1), got {e}")));
            }
        }
        if let TestFraction::Fixed(g) = self.test_fraction {
            if !(g > 0.0 && g <= 1.0) {
                return Err(domain(format!("test fraction must lie in (0, 1], got {g}")));
            }
        }
        if !(self.alphabet >= 2.0) {
            return Err(domain("key alphabet needs at least two symbols"));
        }
        Ok(())
    }

    /// g(ε) = −log₂(1 − √(1 − ε²)), computed without cancellation.
    pub fn smoothing_cost(&self) -> f64 {
        let e2 = self.eps_sound * self.eps_sound;
        // 1 − √(1 − e²) = e² / (1 + √(1 − e²))
        -(e2 / (1.0 + (1.0 - e2).sqrt())).log2()
    }
}

/// Breakdown of the second-order correction at one γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub gamma: f64,
    pub v: f64,
    /// Leading coefficient, the correction being ≈ c1/√n.
    pub c1: f64,
    /// Full per-round correction Δ(n) at the optimal Rényi parameter.
    pub delta: f64,
    /// (α − 1)/(2 − α) at the optimum.
    pub beta: f64,
}

fn correction(t: &MinTradeoff, fk: &FiniteKeyParams, n: f64, gamma: f64) -> Correction {
    let var = t.var_bound(gamma);
    let log_d = fk.alphabet.log2();
    let v = (1.0 + 2.0 * fk.alphabet).log2() + (2.0 + var).sqrt();
    let g = fk.smoothing_cost();
    let c1 = v * (2.0 * LN_2 * g).sqrt();
    let vals = t.sampled_values(gamma);
    let spread = log_d + vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
    let k_of = |beta: f64| {
        let alpha = (1.0 + 2.0 * beta) / (1.0 + beta);
        let pre = (2.0 - alpha).powi(3) / (6.0 * (3.0 - 2.0 * alpha).powi(3) * LN_2);
        pre * 2f64.powf(beta * spread) * ((2f64.powf(spread)) + std::f64::consts::E.powi(2)).ln().powi(3)
    };
    let delta_of = |beta: f64| beta * LN_2 / 2.0 * v * v + g / (beta * n) + beta * beta * k_of(beta);
    // β ranges over (0, 1) for α ∈ (1, 3/2); search log β
    let guess = (2.0 * g / (n * LN_2 * v * v)).sqrt().clamp(1e-300, 0.5);
    let lo = (guess * 1e-3).max(1e-300).ln();
    let hi = (guess * 1e3).min(0.999).ln();
    let (lb, neg) = golden_section_max(|lb| -delta_of(lb.exp()), lo, hi, 1e-10);
    Correction { gamma, v, c1, delta: -neg, beta: lb.exp() }
}

/// Finite-size result at one operating point and one N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeyResult {
    pub rounds: f64,
    /// Heralded rounds entering the bound.
    pub heralded_rounds: f64,
    /// ℓ/N per heralded round, possibly negative.
    pub rate: f64,
    pub asymptotic_rate: f64,
    /// Bits per second, P_h·ν·max(0, ℓ/N).
    pub throughput: f64,
    pub correction: Correction,
    /// ε-dependent 1/N terms.
    pub fixed_cost: f64,
    pub tradeoff: Option<MinTradeoff>,
}

/// Finite-size rate at an operating point found by [`keyrate::optimize_rate`].
pub fn finite_key_rate(op: &RateResult, fk: &FiniteKeyParams) -> Result<FiniteKeyResult> {
    fk.validate()?;
    let n = match fk.counting {
        RoundCounting::Heralded => fk.rounds,
        RoundCounting::Pulses => fk.rounds * op.p_h,
    };
    let empty = |c: Correction| FiniteKeyResult {
        rounds: fk.rounds,
        heralded_rounds: n,
        rate: 0.0,
        asymptotic_rate: op.r,
        throughput: 0.0,
        correction: c,
        fixed_cost: 0.0,
        tradeoff: None,
    };
    let no_corr = Correction { gamma: f64::NAN, v: f64::NAN, c1: f64::NAN, delta: f64::NAN, beta: f64::NAN };
    // no violation or no heralded rounds: nothing to distil
    let Ok(t) = tangent_min_tradeoff(op.s, op.q_opt) else { return Ok(empty(no_corr)) };
    if n < 1.0 {
        return Ok(empty(no_corr));
    }
    let corr = match fk.test_fraction {
        TestFraction::Fixed(g) => correction(&t, fk, n, g),
        TestFraction::Optimized => {
            let (lg, _) = golden_section_max(|lg| -correction(&t, fk, n, lg.exp()).delta, 1e-4_f64.ln(), 0.0, 1e-8);
            let c_opt = correction(&t, fk, n, lg.exp());
            let c_one = correction(&t, fk, n, 1.0);
            if c_one.delta <= c_opt.delta {
                c_one
            } else {
                c_opt
            }
        }
    };
    let fixed_cost = ((1.0 / fk.eps_ec).log2() + 2.0 * (1.0 / fk.eps_sound).log2()) / n;
    let rate = t.eval(t.p0) - op.h_ec - corr.delta - fixed_cost;
    Ok(FiniteKeyResult {
        rounds: fk.rounds,
        heralded_rounds: n,
        rate,
        asymptotic_rate: op.r,
        throughput: op.p_h * op.rep_rate * rate.max(0.0),
        correction: corr,
        fixed_cost,
        tradeoff: Some(t),
    })
}

/// One point of a finite-size distance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteCurvePoint {
    pub distance_km: f64,
    pub operating_point: RateResult,
    /// One entry per requested N, in input order.
    pub finite: Vec<FiniteKeyResult>,
}

/// Finite-size curves: for each distance the asymptotic operating point is
/// re-optimized once and evaluated for every N.
pub fn finite_distance_sweep(
    base: &ProtocolParams,
    eta_d: f64,
    vis: VisibilityModel,
    rounds: &[f64],
    distances_km: &[f64],
    fk: &FiniteKeyParams,
    opts: &RateOptions,
) -> Result<Vec<FiniteCurvePoint>> {
    let ops = keyrate::distance_sweep(base, eta_d, vis, distances_km, opts)?;
    ops.into_iter()
        .zip(distances_km)
        .map(|(op, &l)| {
            let finite = rounds
                .iter()
                .map(|&n| finite_key_rate(&op, &FiniteKeyParams { rounds: n, ..*fk }))
                .collect::<Result<Vec<_>>>()?;
            Ok(FiniteCurvePoint { distance_km: l, operating_point: op, finite })
        })
        .collect()
}

#[cfg(test)]
mod tests;
