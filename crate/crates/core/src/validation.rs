//! Closed forms checked against the Fock oracle, plus algebraic identities.
//!
//! Each check draws parameters at random (or walks a fixed grid), evaluates a
//! closed-form expression and an independent reference, and keeps the largest
//! discrepancy together with the draw that produced it. A [`Perturbation`]
//! adds a small offset to one named closed form so the harness can prove it
//! notices a broken formula.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bell::{chsh, chsh_qform_table};
use crate::error::{domain, Result};
use crate::fock_oracle::{
    arrival_distribution_1ph, displaced_noclick, herald_single_click_1ph, herald_single_click_2ph,
    numeric_marginal, numeric_probability, CharlieDetector, Side, TruncationPolicy, TwoModeState,
};
use crate::measurement::{
    behavior_table, p1ph_joint, p1ph_marginal, p2ph_joint, p2ph_marginal_alice, p2ph_marginal_bob,
    povm_matrix_element, DisplacementSetting, MeasurementSettings, ProtocolParams, VisibilityModel,
};
use crate::sources::{
    herald_prob_1ph_per_pattern, herald_prob_2ph_per_pattern, multiphoton_ratio_1ph, rho_1ph_closed,
    rho_2ph_closed, ChannelModel, OnePhotonParams, TwoPhotonParams,
};

/// Tolerance for closed-form probabilities against the oracle.
pub const PROBABILITY_TOL: f64 = 1e-9;
/// Tolerance (trace distance) for closed-form states against the oracle.
pub const STATE_TOL: f64 = 1e-8;
/// Tolerance for the POVM matrix elements.
pub const POVM_TOL: f64 = 1e-10;
/// Tolerance for exact identities evaluated in floating point.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Tolerance for the series identities, relative to max(1, |closed form|).
pub const SERIES_TOL: f64 = 1e-10;
/// Relative tolerance for the multiphoton arrival ratio.
pub const RATIO_TOL: f64 = 1e-8;

/// Every formula name understood by [`Perturbation`], in report order.
pub const FORMULAS: &[&str] = &[
    "p1ph_joint",
    "p1ph_marginal",
    "p2ph_joint",
    "p2ph_marginal_alice",
    "p2ph_marginal_bob",
    "povm_matrix_element",
    "rho_1ph",
    "herald_prob_1ph",
    "rho_2ph",
    "herald_prob_2ph",
    "multiphoton_ratio_1ph",
    "chsh_qform",
    "behavior_table",
    "series_a",
    "series_b",
    "series_c",
    "series_d",
];

/// Offset injected into one closed form before comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Perturbation {
    pub formula: String,
    pub eps: f64,
}

impl Perturbation {
    pub fn new(formula: &str, eps: f64) -> Result<Self> {
        if !FORMULAS.contains(&formula) {
            return Err(domain(format!("unknown formula `{formula}`; known: {}", FORMULAS.join(", "))));
        }
        if !eps.is_finite() {
            return Err(domain("perturbation must be finite"));
        }
        Ok(Self { formula: formula.to_owned(), eps })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    /// Random draws per randomized check.
    pub draws: usize,
    pub seed: u64,
    pub perturbation: Option<Perturbation>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { draws: 200, seed: 7, perturbation: None }
    }
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub formula: String,
    pub samples: usize,
    pub tolerance: f64,
    pub max_error: f64,
    /// Parameters of the draw that produced `max_error`.
    pub worst_draw: Vec<(String, f64)>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub perturbation: Option<Perturbation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, formula: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.formula == formula)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let draw: Vec<String> = c.worst_draw.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
            writeln!(
                f,
                "{} {:<22} n={:<4} max|Δ|={:.3e} tol={:.0e}  worst: {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.formula,
                c.samples,
                c.max_error,
                c.tolerance,
                draw.join(" ")
            )?;
        }
        Ok(())
    }
}

type Draw = Vec<(String, f64)>;

/// Errors of several formulas measured on one shared draw.
struct Sample {
    errors: Vec<f64>,
    draw: Draw,
}

struct Family<'a> {
    formulas: &'a [&'static str],
    tolerances: &'a [f64],
    samples: Vec<Sample>,
}

impl Family<'_> {
    fn into_checks(self) -> Vec<CheckResult> {
        let Family { formulas, tolerances, samples } = self;
        formulas
            .iter()
            .zip(tolerances)
            .enumerate()
            .map(|(i, (&name, &tol))| {
                let mut max_error = 0.0_f64;
                let mut worst_draw = Vec::new();
                for s in &samples {
                    let e = s.errors[i];
                    // NaN counts as the worst possible outcome
                    if e.is_nan() || e > max_error {
                        max_error = if e.is_nan() { f64::INFINITY } else { e };
                        worst_draw = s.draw.clone();
                    }
                }
                CheckResult {
                    formula: name.to_owned(),
                    samples: samples.len(),
                    tolerance: tol,
                    max_error,
                    worst_draw,
                    passed: max_error <= tol,
                }
            })
            .collect()
    }
}

struct Ctx<'a> {
    perturbation: Option<&'a Perturbation>,
    policy: TruncationPolicy,
}

impl Ctx<'_> {
    fn offset(&self, formula: &str) -> f64 {
        match self.perturbation {
            Some(p) if p.formula == formula => p.eps,
            _ => 0.0,
        }
    }

    /// Mixes a little vacuum into a closed-form state when it is the target.
    fn perturb_state(&self, formula: &str, mut st: TwoModeState) -> TwoModeState {
        let eps = self.offset(formula);
        if eps != 0.0 {
            st.rho.scale_mut(1.0 - eps);
            st.rho[(0, 0)] += C64::new(eps, 0.0);
        }
        st
    }
}

fn rng_for(seed: u64, family: u64, draw: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(family << 32 | draw as u64);
    rng
}

fn random_delta(rng: &mut ChaCha8Rng) -> C64 {
    C64::from_polar(rng.random_range(0.0..=2.0), rng.random_range(0.0..TAU))
}

fn delta_entries(name: &str, d: C64) -> [(String, f64); 2] {
    [(format!("|{name}|"), d.norm()), (format!("arg{name}"), d.arg())]
}

fn named(pairs: &[(&str, f64)]) -> Draw {
    pairs.iter().map(|&(k, v)| (k.to_owned(), v)).collect()
}

fn run_random<F>(opts: &ValidationOptions, family: u64, f: F) -> Vec<Sample>
where
    F: Fn(&mut ChaCha8Rng) -> Sample + Sync,
{
    (0..opts.draws).into_par_iter().map(|i| f(&mut rng_for(opts.seed, family, i))).collect()
}

fn err_or_inf(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::INFINITY)
}

const PNR: CharlieDetector = CharlieDetector::PhotonNumberResolving;

fn one_photon_probabilities(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Sample {
    let g = rng.random_range(1e-3..=0.3);
    let r_t = rng.random_range(0.0..=0.9);
    let v = rng.random_range(0.8..=1.0);
    let eta = rng.random_range(0.5..=1.0);
    let (a, b) = (random_delta(rng), random_delta(rng));
    let mut draw = named(&[("g", g), ("r_t", r_t), ("v", v), ("eta_d", eta)]);
    draw.extend(delta_entries("alpha", a));
    draw.extend(delta_entries("beta", b));
    let errors = (|| -> Result<Vec<f64>> {
        let h = herald_single_click_1ph(g, r_t, 1.0, v, PNR, &ctx.policy)?;
        let c = r_t * g.tanh().powi(2);
        let vis = VisibilityModel::new(v)?;
        let joint = p1ph_joint(a, b, eta, c, vis)? + ctx.offset("p1ph_joint");
        let joint_err = (joint - numeric_probability(&h.state, a, b, eta)?).abs();
        let bump = ctx.offset("p1ph_marginal");
        let ea = (p1ph_marginal(a, eta, c)? + bump - numeric_marginal(&h.state, Side::Alice, a, eta)?).abs();
        let eb = (p1ph_marginal(b, eta, c)? + bump - numeric_marginal(&h.state, Side::Bob, b, eta)?).abs();
        Ok(vec![joint_err, ea.max(eb)])
    })()
    .unwrap_or_else(|_| vec![f64::INFINITY; 2]);
    Sample { errors, draw }
}

fn random_two_photon(rng: &mut ChaCha8Rng) -> TwoPhotonParams {
    TwoPhotonParams {
        g_a: rng.random_range(1e-3..=0.3),
        t_s: rng.random_range(0.01..=0.99),
        phase: rng.random_range(0.0..TAU),
        channel: ChannelModel::from_reflectivity(rng.random_range(0.0..=0.9)).expect("reflectivity drawn in range"),
        ..Default::default()
    }
}

fn two_photon_draw(p: &TwoPhotonParams) -> Draw {
    named(&[("g_a", p.g_a), ("t_s", p.t_s), ("phase", p.phase), ("r_t", p.channel.r_t())])
}

fn two_photon_probabilities(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Sample {
    let p = random_two_photon(rng);
    let v = rng.random_range(0.8..=1.0);
    let eta = rng.random_range(0.5..=1.0);
    let (a, b) = (random_delta(rng), random_delta(rng));
    let mut draw = two_photon_draw(&p);
    draw.extend(named(&[("v", v), ("eta_d", eta)]));
    draw.extend(delta_entries("alpha", a));
    draw.extend(delta_entries("beta", b));
    let errors = (|| -> Result<Vec<f64>> {
        let h = herald_single_click_2ph(&p, v, PNR, &ctx.policy)?;
        let vis = VisibilityModel::new(v)?;
        let j = p2ph_joint(a, b, eta, &p, vis)? + ctx.offset("p2ph_joint");
        let ma = p2ph_marginal_alice(a, eta, &p)? + ctx.offset("p2ph_marginal_alice");
        let mb = p2ph_marginal_bob(b, eta, &p)? + ctx.offset("p2ph_marginal_bob");
        Ok(vec![
            (j - numeric_probability(&h.state, a, b, eta)?).abs(),
            (ma - numeric_marginal(&h.state, Side::Alice, a, eta)?).abs(),
            (mb - numeric_marginal(&h.state, Side::Bob, b, eta)?).abs(),
        ])
    })()
    .unwrap_or_else(|_| vec![f64::INFINITY; 3]);
    Sample { errors, draw }
}

const POVM_MAX_N: usize = 6;

fn povm_elements(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Sample {
    let delta = random_delta(rng);
    let eta = rng.random_range(0.5..=1.0);
    let mut draw = named(&[("eta_d", eta)]);
    draw.extend(delta_entries("delta", delta));
    let err = match displaced_noclick(delta, eta, POVM_MAX_N + 1) {
        Ok(m) => {
            let bump = ctx.offset("povm_matrix_element");
            let mut worst = 0.0_f64;
            for n in 0..=POVM_MAX_N {
                for k in 0..=POVM_MAX_N {
                    let closed = povm_matrix_element(n, k, delta, eta) + bump;
                    worst = worst.max((closed - m.get(n, k)).norm());
                }
            }
            worst
        }
        Err(_) => f64::INFINITY,
    };
    Sample { errors: vec![err], draw }
}

fn one_photon_states(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Sample {
    let g = rng.random_range(1e-3..=0.3);
    let r_t = rng.random_range(0.0..=0.9);
    let v = rng.random_range(0.8..=1.0);
    let eta_c = rng.random_range(0.5..=1.0);
    let draw = named(&[("g", g), ("r_t", r_t), ("v", v), ("eta_c", eta_c)]);
    let errors = (|| -> Result<Vec<f64>> {
        let mut p = OnePhotonParams::new(g, ChannelModel::from_reflectivity(r_t)?);
        p.eta_c = eta_c;
        let h = herald_single_click_1ph(g, r_t, eta_c, v, PNR, &ctx.policy)?;
        let closed = ctx.perturb_state("rho_1ph", rho_1ph_closed(&p, v, &ctx.policy)?);
        let herald = herald_prob_1ph_per_pattern(&p) + ctx.offset("herald_prob_1ph");
        Ok(vec![closed.trace_distance(&h.state)?, (herald / h.herald_prob - 1.0).abs()])
    })()
    .unwrap_or_else(|_| vec![f64::INFINITY; 2]);
    Sample { errors, draw }
}

fn two_photon_states(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Sample {
    let mut p = random_two_photon(rng);
    p.eta_c = rng.random_range(0.5..=1.0);
    let v = rng.random_range(0.8..=1.0);
    let mut draw = two_photon_draw(&p);
    draw.extend(named(&[("eta_c", p.eta_c), ("v", v)]));
    let errors = (|| -> Result<Vec<f64>> {
        let h = herald_single_click_2ph(&p, v, PNR, &ctx.policy)?;
        let closed = ctx.perturb_state("rho_2ph", rho_2ph_closed(&p, v, &ctx.policy)?);
        let herald = herald_prob_2ph_per_pattern(&p)? + ctx.offset("herald_prob_2ph");
        Ok(vec![closed.trace_distance(&h.state)?, (herald / h.herald_prob - 1.0).abs()])
    })()
    .unwrap_or_else(|_| vec![f64::INFINITY; 2]);
    Sample { errors, draw }
}

fn multiphoton_ratio(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Sample {
    let g = rng.random_range(1e-3..=0.3);
    let r_t = rng.random_range(0.0..=0.9);
    let draw = named(&[("g", g), ("r_t", r_t)]);
    let err = (|| -> Result<f64> {
        let p = OnePhotonParams::new(g, ChannelModel::from_reflectivity(r_t)?);
        let dist = arrival_distribution_1ph(g, r_t, &TruncationPolicy::fixed(60))?;
        let ratio = dist[2..].iter().sum::<f64>() / dist[1];
        Ok(((multiphoton_ratio_1ph(&p) + ctx.offset("multiphoton_ratio_1ph")) / ratio - 1.0).abs())
    })();
    Sample { errors: vec![err_or_inf(err)], draw }
}

fn table_identities(ctx: &Ctx, rng: &mut ChaCha8Rng) -> Sample {
    let two = rng.random_bool(0.5);
    let ch = ChannelModel::new(rng.random_range(0.0..=300.0));
    let params = if two {
        ProtocolParams::TwoPhoton(TwoPhotonParams {
            g_a: rng.random_range(1e-4..=1.0),
            t_s: rng.random_range(1e-4..=0.9999),
            phase: rng.random_range(0.0..TAU),
            channel: ch,
            ..Default::default()
        })
    } else {
        ProtocolParams::OnePhoton(OnePhotonParams::new(rng.random_range(1e-4..=1.0), ch))
    };
    let mut settings = MeasurementSettings::default();
    for d in settings.alice.iter_mut().chain(settings.bob.iter_mut()) {
        *d = DisplacementSetting::new(rng.random_range(0.0..=3.0), rng.random_range(0.0..TAU));
    }
    let eta = rng.random_range(0.0..=1.0);
    let v = rng.random_range(0.0..=1.0);
    let draw = named(&[("two_photon", f64::from(u8::from(two))), ("g", params.gain()), ("L", ch.distance_km), ("eta_d", eta), ("v", v)]);
    let errors = (|| -> Result<Vec<f64>> {
        let t = behavior_table(&params, &settings, eta, VisibilityModel::new(v)?)?;
        let q = (chsh_qform_table(&t) + ctx.offset("chsh_qform") - chsh(&t)?).abs();
        let bump = ctx.offset("behavior_table");
        let mut worst = 0.0_f64;
        for x in 0..2 {
            for y in 0..3 {
                let blk = &t.joint[x][y];
                let total: f64 = blk.iter().flatten().sum::<f64>() + bump;
                worst = worst.max((total - 1.0).abs());
                for a in 0..2 {
                    worst = worst.max((blk[a][0] + blk[a][1] - t.alice[x][a]).abs());
                    worst = worst.max((blk[0][a] + blk[1][a] - t.bob[y][a]).abs());
                }
                worst = worst.max(t.q_ab(x, y) + bump - t.q_a(x).min(t.q_b(y)));
                worst = worst.max(-blk.iter().flatten().cloned().fold(f64::MAX, f64::min));
            }
        }
        Ok(vec![q, worst])
    })()
    .unwrap_or_else(|_| vec![f64::INFINITY; 2]);
    Sample { errors, draw }
}

const SERIES_X: [f64; 4] = [0.1, 0.3, 0.5, 0.7];
const SERIES_K_MAX: usize = 6;
const SERIES_TERMS: usize = 200;

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, j| acc * j as f64)
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Σ_{n≥max(k,k')} n!/((n−k)!(n−k')!) xⁿ · w(n), summed over 200 terms by recurrence.
fn factorial_series(x: f64, k: usize, kp: usize, weight: impl Fn(usize) -> f64) -> f64 {
    let n0 = k.max(kp);
    let mut term = factorial(n0) / (factorial(n0 - k) * factorial(n0 - kp)) * x.powi(n0 as i32);
    let mut sum = 0.0;
    for n in n0..n0 + SERIES_TERMS {
        sum += term * weight(n);
        let m = (n + 1) as f64;
        term *= m * x / ((m - k as f64) * (m - kp as f64));
    }
    sum
}

/// Σ_{n≥k} C(n,k) xⁿ · w(n).
fn binomial_series(x: f64, k: usize, weight: impl Fn(usize) -> f64) -> f64 {
    let mut term = x.powi(k as i32);
    let mut sum = 0.0;
    for n in k..k + SERIES_TERMS {
        sum += term * weight(n);
        let m = (n + 1) as f64;
        term *= m * x / (m - k as f64);
    }
    sum
}

fn series_family(ctx: &Ctx) -> Vec<CheckResult> {
    let rel = |lhs: f64, rhs: f64| (lhs - rhs).abs() / rhs.abs().max(1.0);
    let mut a = Vec::new();
    let mut rest = Vec::new();
    for &x in &SERIES_X {
        for k in 0..=SERIES_K_MAX {
            for kp in 0..=SERIES_K_MAX {
                let lhs = factorial_series(x, k, kp, |_| 1.0) + ctx.offset("series_a");
                let rhs = x.exp()
                    * (0..=k.min(kp))
                        .map(|i| {
                            factorial(k) * factorial(kp) * x.powi((k + kp - i) as i32)
                                / (factorial(i) * factorial(k - i) * factorial(kp - i))
                        })
                        .sum::<f64>();
                a.push(Sample { errors: vec![rel(lhs, rhs)], draw: named(&[("x", x), ("k", k as f64), ("k'", kp as f64)]) });
            }
            let kf = k as f64;
            let lhs_b = factorial_series(x, k, k, |n| n as f64) + ctx.offset("series_b");
            let rhs_b = x.exp()
                * x.powi(k as i32)
                * (0..=k)
                    .map(|i| {
                        factorial(k) / factorial(i)
                            * (binom(k + 1, i + 1) * x.powi(i as i32 + 1) + kf * binom(k, i) * x.powi(i as i32))
                    })
                    .sum::<f64>();
            let lhs_c = binomial_series(x, k, |_| 1.0) + ctx.offset("series_c");
            let rhs_c = x.powi(k as i32) / (1.0 - x).powi(k as i32 + 1);
            // Σ n C(n,k) x^{n−1}: the same series weighted by n/x
            let lhs_d = binomial_series(x, k, |n| n as f64 / x) + ctx.offset("series_d");
            let low = if k == 0 { 0.0 } else { kf * x.powi(k as i32 - 1) };
            let rhs_d = (x.powi(k as i32) + low) / (1.0 - x).powi(k as i32 + 2);
            rest.push(Sample {
                errors: vec![rel(lhs_b, rhs_b), rel(lhs_c, rhs_c), rel(lhs_d, rhs_d)],
                draw: named(&[("x", x), ("k", kf)]),
            });
        }
    }
    let mut out = Family { formulas: &["series_a"], tolerances: &[SERIES_TOL], samples: a }.into_checks();
    out.extend(
        Family { formulas: &["series_b", "series_c", "series_d"], tolerances: &[SERIES_TOL; 3], samples: rest }
            .into_checks(),
    );
    out
}

/// Runs every check and collects the report. Never fails on a tolerance
/// breach; inspect [`ValidationReport::passed`].
pub fn run_validation(opts: &ValidationOptions) -> Result<ValidationReport> {
    if opts.draws == 0 {
        return Err(domain("validation needs at least one draw per check"));
    }
    if let Some(p) = &opts.perturbation {
        Perturbation::new(&p.formula, p.eps)?;
    }
    let ctx = Ctx { perturbation: opts.perturbation.as_ref(), policy: TruncationPolicy::default() };
    let fams: Vec<(&[&'static str], &[f64], Vec<Sample>)> = vec![
        (
            &["p1ph_joint", "p1ph_marginal"],
            &[PROBABILITY_TOL; 2],
            run_random(opts, 1, |r| one_photon_probabilities(&ctx, r)),
        ),
        (
            &["p2ph_joint", "p2ph_marginal_alice", "p2ph_marginal_bob"],
            &[PROBABILITY_TOL; 3],
            run_random(opts, 2, |r| two_photon_probabilities(&ctx, r)),
        ),
        (&["povm_matrix_element"], &[POVM_TOL], run_random(opts, 3, |r| povm_elements(&ctx, r))),
        (
            &["rho_1ph", "herald_prob_1ph"],
            &[STATE_TOL, PROBABILITY_TOL],
            run_random(opts, 4, |r| one_photon_states(&ctx, r)),
        ),
        (
            &["rho_2ph", "herald_prob_2ph"],
            &[STATE_TOL, PROBABILITY_TOL],
            run_random(opts, 5, |r| two_photon_states(&ctx, r)),
        ),
        (&["multiphoton_ratio_1ph"], &[RATIO_TOL], run_random(opts, 6, |r| multiphoton_ratio(&ctx, r))),
        (
            &["chsh_qform", "behavior_table"],
            &[IDENTITY_TOL; 2],
            run_random(opts, 7, |r| table_identities(&ctx, r)),
        ),
    ];
    let mut checks: Vec<CheckResult> = fams
        .into_iter()
        .flat_map(|(formulas, tolerances, samples)| Family { formulas, tolerances, samples }.into_checks())
        .collect();
    checks.extend(series_family(&ctx));
    Ok(ValidationReport { checks, perturbation: opts.perturbation.clone() })
}
