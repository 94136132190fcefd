//! CHSH evaluation, optimization and threshold searches.

use std::f64::consts::{SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::keyrate::{self, RateOptions};
use crate::measurement::{
    behavior_table, BehaviorTable, DisplacementSetting, MeasurementSettings, ProtocolParams, VisibilityModel,
};
use crate::optim::{bisect, maximize_multistart_in, Bounds, MultiStartOptions};

/// Tsirelson's bound 2√2.
pub const TSIRELSON: f64 = 2.0 * SQRT_2;

/// S must exceed 2 by this much to count as a violation. It sits well above
/// the rounding noise of the closed forms (~1e-15) and well below the
/// violations seen a few 1e-3 above any threshold.
pub const VIOLATION_MARGIN: f64 = 1e-10;

/// E = 1 + 4Q_ab − 2Q_a − 2Q_b.
pub fn correlator(q_ab: f64, q_a: f64, q_b: f64) -> Result<f64> {
    let e = 1.0 + 4.0 * q_ab - 2.0 * q_a - 2.0 * q_b;
    if e.abs() > 1.0 + 1e-9 || !e.is_finite() {
        return Err(Error::Consistency(format!("correlator {e} outside [-1, 1]")));
    }
    Ok(e)
}

/// Correlators E(x,y) for x ∈ {1,2}, y ∈ {1,2}.
pub fn correlators(t: &BehaviorTable) -> Result<[[f64; 2]; 2]> {
    let mut e = [[0.0; 2]; 2];
    for x in 0..2 {
        for y in 0..2 {
            e[x][y] = correlator(t.q_ab(x, y), t.q_a(x), t.q_b(y))?;
        }
    }
    Ok(e)
}

/// S = E11 + E12 + E21 − E22, signed.
///
/// With no-click mapped to +1 the strongest violations of this form are
/// negative; relabelling every outcome of one party flips the sign without
/// changing any entropy, so |S| is what certifies randomness.
pub fn chsh(t: &BehaviorTable) -> Result<f64> {
    let e = correlators(t)?;
    Ok(e[0][0] + e[0][1] + e[1][0] - e[1][1])
}

/// The same S written in no-click probabilities only:
/// 2 + 4(Q11 + Q12 + Q21 − Q22 − Qa1 − Qb1).
pub fn chsh_qform(q_ab: [[f64; 2]; 2], q_a1: f64, q_b1: f64) -> f64 {
    2.0 + 4.0 * (q_ab[0][0] + q_ab[0][1] + q_ab[1][0] - q_ab[1][1] - q_a1 - q_b1)
}

/// Q-form evaluated on a behaviour table.
pub fn chsh_qform_table(t: &BehaviorTable) -> f64 {
    chsh_qform([[t.q_ab(0, 0), t.q_ab(0, 1)], [t.q_ab(1, 0), t.q_ab(1, 1)]], t.q_a(0), t.q_b(0))
}

/// Which variables the optimizer may move, and within what box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    /// Quasi-random starts draw magnitudes from [0, start_magnitude_max];
    /// the search itself covers [0, magnitude_max].
    pub start_magnitude_max: f64,
    pub g_min: f64,
    pub g_max: f64,
    pub t_s_min: f64,
    pub t_s_max: f64,
    pub magnitude_max: f64,
    /// When false the gains and t_s of the base parameters stay fixed.
    pub optimize_source: bool,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { start_magnitude_max: 1.0, g_min: 1e-4, g_max: 1.0, t_s_min: 1e-4, t_s_max: 1.0 - 1e-4, magnitude_max: 3.0, optimize_source: true }
    }
}

/// Optimizer configuration shared by the Bell and key-rate searches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub multistart: MultiStartOptions,
    pub space: SearchSpace,
}

/// Flat encoding of (source parameters, settings) for the optimizer.
///
/// Layout: source block (g, or g_a and t_s), then |α1|, |α2|, arg α2,
/// |β1|, arg β1, |β2|, arg β2, and with the key setting |β3|, arg β3.
/// Alice's first phase is pinned to zero.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Encoding {
    base: ProtocolParams,
    space: SearchSpace,
    with_key: bool,
}

impl Encoding {
    pub(crate) fn new(base: ProtocolParams, space: SearchSpace, with_key: bool) -> Self {
        Self { base, space, with_key }
    }

    fn source_dim(&self) -> usize {
        match (self.space.optimize_source, self.base) {
            (false, _) => 0,
            (true, ProtocolParams::OnePhoton(_)) => 1,
            (true, ProtocolParams::TwoPhoton(_)) => 2,
        }
    }

    pub(crate) fn bounds(&self) -> Bounds {
        let s = &self.space;
        let (mut lo, mut hi) = (Vec::new(), Vec::new());
        if self.source_dim() >= 1 {
            lo.push(s.g_min);
            hi.push(s.g_max);
        }
        if self.source_dim() == 2 {
            lo.push(s.t_s_min);
            hi.push(s.t_s_max);
        }
        let m = s.magnitude_max;
        let pairs = if self.with_key { 3 } else { 2 };
        lo.push(0.0);
        hi.push(m);
        for _ in 0..1 + pairs {
            lo.extend([0.0, 0.0]);
            hi.extend([m, TAU]);
        }
        Bounds::new(lo, hi)
    }

    /// The search box with magnitudes capped for drawing start points.
    pub(crate) fn start_box(&self) -> Bounds {
        let mut b = self.bounds();
        for i in self.source_dim()..b.dim() {
            if b.hi[i] == self.space.magnitude_max {
                b.hi[i] = self.space.start_magnitude_max.min(self.space.magnitude_max);
            }
        }
        b
    }

    /// Structured starts: small and larger amplitudes on Alice's side in
    /// antiphase, Bob's rotated by a quarter turn, which is where the
    /// interference term of both protocols is extremal.
    pub(crate) fn default_hints(&self) -> Vec<Vec<f64>> {
        use std::f64::consts::{FRAC_PI_2, PI};
        let mut p = self.base;
        match &mut p {
            ProtocolParams::OnePhoton(o) => o.g = o.g.clamp(self.space.g_min, self.space.g_max),
            ProtocolParams::TwoPhoton(t) => {
                t.g_a = 0.1_f64.clamp(self.space.g_min, self.space.g_max);
                t.t_s = 0.5_f64.clamp(self.space.t_s_min, self.space.t_s_max);
            }
        }
        let ds = DisplacementSetting::new;
        [(0.2, 0.6), (0.4, 0.7)]
            .iter()
            .flat_map(|&(m1, m2)| {
                [1.0, -1.0].map(|sgn: f64| {
                    let q = sgn * FRAC_PI_2;
                    let s = MeasurementSettings {
                        alice: [ds(m1, 0.0), ds(m2, PI)],
                        bob: [ds(m1, PI + q), ds(m2, q), ds(m1, PI + q)],
                    };
                    self.encode(&p, &s)
                })
            })
            .collect()
    }

    pub(crate) fn decode(&self, x: &[f64]) -> (ProtocolParams, MeasurementSettings) {
        let mut p = self.base;
        let k = self.source_dim();
        match &mut p {
            ProtocolParams::OnePhoton(o) if k == 1 => o.g = x[0],
            ProtocolParams::TwoPhoton(t) if k == 2 => {
                t.g_a = x[0];
                t.t_s = x[1];
            }
            _ => {}
        }
        let r = &x[k..];
        let ds = DisplacementSetting::new;
        let b1 = ds(r[3], r[4]);
        let s = MeasurementSettings {
            alice: [ds(r[0], 0.0), ds(r[1], r[2])],
            bob: [b1, ds(r[5], r[6]), if self.with_key { ds(r[7], r[8]) } else { b1 }],
        };
        (p, s.canonical())
    }

    pub(crate) fn encode(&self, p: &ProtocolParams, s: &MeasurementSettings) -> Vec<f64> {
        let mut x = Vec::new();
        match (self.source_dim(), p) {
            (1, ProtocolParams::OnePhoton(o)) => x.push(o.g),
            (2, ProtocolParams::TwoPhoton(t)) => x.extend([t.g_a, t.t_s]),
            _ => {}
        }
        let b = self.bounds();
        x.extend([s.alice[0].magnitude, s.alice[1].magnitude, s.alice[1].phase - s.alice[0].phase]);
        let shift = s.alice[0].phase;
        let bob = if self.with_key { &s.bob[..] } else { &s.bob[..2] };
        for d in bob {
            x.extend([d.magnitude, d.phase - shift]);
        }
        // bring every phase into [0, 2π) and every value inside the box
        let k = self.source_dim();
        for (i, xi) in x.iter_mut().enumerate() {
            if i >= k && b.hi[i] == TAU {
                *xi = xi.rem_euclid(TAU);
            }
            *xi = xi.clamp(b.lo[i], b.hi[i]);
        }
        x
    }
}

/// Result of a CHSH maximization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    /// The maximized |S|.
    pub s: f64,
    /// S with its sign, as computed from `correlators`.
    pub signed_s: f64,
    pub settings: MeasurementSettings,
    pub params: ProtocolParams,
    pub correlators: [[f64; 2]; 2],
    pub converged: bool,
    pub seed: u64,
}

fn check_eta(eta_d: f64) -> Result<()> {
    if !(eta_d > 0.0 && eta_d <= 1.0) {
        return Err(domain(format!("detector efficiency must lie in (0, 1], got {eta_d}")));
    }
    Ok(())
}

/// |S| at fixed parameters and settings.
pub fn chsh_at(p: &ProtocolParams, s: &MeasurementSettings, eta_d: f64, vis: VisibilityModel) -> Result<f64> {
    Ok(chsh(&behavior_table(p, s, eta_d, vis)?)?.abs())
}

/// Maximizes |S| over the four CHSH settings and, optionally, the source.
///
/// `hints` are extra start points (pairs of parameters and settings), tried
/// before the quasi-random ones.
pub fn optimize_chsh(
    base: &ProtocolParams,
    eta_d: f64,
    vis: VisibilityModel,
    opts: &OptimizeOptions,
    hints: &[(ProtocolParams, MeasurementSettings)],
) -> Result<ChshResult> {
    check_eta(eta_d)?;
    base.herald_prob()?;
    let enc = Encoding::new(*base, opts.space, false);
    let bounds = enc.bounds();
    let objective = |x: &[f64]| {
        let (p, s) = enc.decode(x);
        chsh_at(&p, &s, eta_d, vis).unwrap_or(f64::NEG_INFINITY)
    };
    let mut hint_x: Vec<Vec<f64>> = hints.iter().map(|(p, s)| enc.encode(p, s)).collect();
    hint_x.extend(enc.default_hints());
    let run = maximize_multistart_in(objective, &bounds, &enc.start_box(), &opts.multistart, &hint_x);
    let (params, settings) = enc.decode(&run.best.x);
    let table = behavior_table(&params, &settings, eta_d, vis)?;
    let correlators = correlators(&table)?;
    let signed_s = chsh(&table)?;
    let s = signed_s.abs();
    if s > TSIRELSON + 1e-9 {
        return Err(Error::Consistency(format!("|S| = {s} exceeds Tsirelson's bound")));
    }
    Ok(ChshResult { s, signed_s, settings, params, correlators, converged: run.best.converged, seed: opts.multistart.seed })
}

/// The quantity whose positivity defines a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdQuantity {
    /// |S| − 2.
    Bell,
    /// The asymptotic key rate per heralded round, with or without noisy
    /// preprocessing.
    KeyRate { noisy_preprocessing: bool },
}

/// Outcome of a threshold search, with every probe kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub value: f64,
    pub tolerance: f64,
    /// (probe point, optimized figure of merit) in probe order.
    pub probes: Vec<(f64, f64)>,
}

/// Bracket and tolerance for threshold bisections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOptions {
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { lo: 0.5, hi: 1.0, tol: 5e-4 }
    }
}

type Warm = Option<(ProtocolParams, MeasurementSettings)>;

/// Optimized figure of merit at one probe, plus its argmax for warm starts.
fn figure_of_merit(
    base: &ProtocolParams,
    eta_d: f64,
    vis: VisibilityModel,
    quantity: ThresholdQuantity,
    opts: &OptimizeOptions,
    warm: &Warm,
) -> Result<(f64, Warm)> {
    let hints: Vec<_> = warm.iter().copied().collect();
    match quantity {
        ThresholdQuantity::Bell => {
            let r = optimize_chsh(base, eta_d, vis, opts, &hints)?;
            Ok((r.s - 2.0, Some((r.params, r.settings))))
        }
        ThresholdQuantity::KeyRate { noisy_preprocessing } => {
            let ro = RateOptions { optimize: *opts, noisy_preprocessing, ..RateOptions::default() };
            let r = keyrate::optimize_rate(base, eta_d, vis, &ro, &hints)?;
            Ok((r.r, Some((r.params, r.settings))))
        }
    }
}

fn positive(quantity: ThresholdQuantity, v: f64) -> bool {
    match quantity {
        ThresholdQuantity::Bell => v > VIOLATION_MARGIN,
        ThresholdQuantity::KeyRate { .. } => v > keyrate::RATE_FLOOR,
    }
}

/// Smallest detector efficiency at which the optimized quantity is positive.
///
/// Each probe runs the full inner optimization, warm-started from the
/// argmax of the closest probe above it that succeeded.
pub fn detection_threshold(
    base: &ProtocolParams,
    vis: VisibilityModel,
    quantity: ThresholdQuantity,
    opts: &OptimizeOptions,
    search: &ThresholdOptions,
) -> Result<ThresholdResult> {
    let mut probes = Vec::new();
    let mut warm: Warm = None;
    let value = bisect(
        |eta| {
            let (v, arg) = figure_of_merit(base, eta, vis, quantity, opts, &warm)?;
            probes.push((eta, v));
            let ok = positive(quantity, v);
            if ok {
                warm = arg;
            }
            Ok(ok)
        },
        search.hi,
        search.lo,
        search.tol,
    )?;
    Ok(ThresholdResult { value, tolerance: search.tol, probes })
}

/// Smallest visibility amplitude v at which CHSH is violated at fixed η_d.
pub fn required_visibility(
    base: &ProtocolParams,
    eta_d: f64,
    opts: &OptimizeOptions,
    tol: f64,
) -> Result<ThresholdResult> {
    check_eta(eta_d)?;
    let mut probes = Vec::new();
    let mut warm: Warm = None;
    let value = bisect(
        |v| {
            let (val, arg) = figure_of_merit(base, eta_d, VisibilityModel::new(v)?, ThresholdQuantity::Bell, opts, &warm)?;
            probes.push((v, val));
            let ok = positive(ThresholdQuantity::Bell, val);
            if ok {
                warm = arg;
            }
            Ok(ok)
        },
        1.0,
        0.0,
        tol,
    )?;
    Ok(ThresholdResult { value, tolerance: tol, probes })
}
