use std::sync::OnceLock;

use super::*;
use crate::keyrate::{optimize_rate, DEFAULT_REP_RATE};
use crate::sources::{ChannelModel, OnePhotonParams, TwoPhotonParams};

fn rate_opts() -> RateOptions {
    RateOptions { maximize_throughput: true, ..Default::default() }
}

fn one_photon_op() -> &'static RateResult {
    static OP: OnceLock<RateResult> = OnceLock::new();
    OP.get_or_init(|| {
        let p = ProtocolParams::OnePhoton(OnePhotonParams::new(0.1, ChannelModel::new(100.0)));
        optimize_rate(&p, 0.93, VisibilityModel::default(), &rate_opts(), &[]).unwrap()
    })
}

fn two_photon_op() -> &'static RateResult {
    static OP: OnceLock<RateResult> = OnceLock::new();
    OP.get_or_init(|| {
        let p = ProtocolParams::TwoPhoton(TwoPhotonParams { channel: ChannelModel::new(100.0), ..Default::default() });
        optimize_rate(&p, 0.89, VisibilityModel::default(), &rate_opts(), &[]).unwrap()
    })
}

fn at(op: &RateResult, n: f64) -> FiniteKeyResult {
    finite_key_rate(op, &FiniteKeyParams { rounds: n, ..Default::default() }).unwrap()
}

#[test]
fn tangent_touches_and_lies_below() {
    for q in [0.0, 0.1, 0.3, 0.45] {
        for s0 in [2.05, 2.3, 2.6, 2.8] {
            let t = tangent_min_tradeoff(s0, q).unwrap();
            assert!(t.slope > 0.0);
            assert!((t.eval(p_win(s0)) - eve_entropy_bound(s0, q).unwrap()).abs() < 1e-10);
            for i in 0..=1000 {
                let p = P_WIN_CLASSICAL + (P_WIN_MAX - P_WIN_CLASSICAL) * i as f64 / 1000.0;
                let gap = t.eval(p) - eve_entropy_bound(8.0 * p - 4.0, q).unwrap();
                assert!(gap <= 1e-12, "q={q} s0={s0} p={p} gap={gap}");
            }
        }
    }
}

#[test]
fn slope_matches_finite_difference() {
    for (s, q) in [(2.2, 0.0), (2.5, 0.2), (2.75, 0.4)] {
        let h = 1e-6;
        let fd = (eve_entropy_bound(s + h, q).unwrap() - eve_entropy_bound(s - h, q).unwrap()) / (2.0 * h);
        assert!((eve_entropy_slope(s, q).unwrap() - fd).abs() < 1e-6);
    }
}

#[test]
fn tangent_rejects_edges() {
    assert!(tangent_min_tradeoff(2.0, 0.0).is_err());
    assert!(tangent_min_tradeoff(1.5, 0.0).is_err());
    assert!(tangent_min_tradeoff(2.0 * SQRT_2, 0.0).is_err());
}

#[test]
fn variance_bound_dominates_samples() {
    let t = tangent_min_tradeoff(2.6, 0.1).unwrap();
    for gamma in [1.0, 0.3, 0.01] {
        let [w, l, k] = t.sampled_values(gamma);
        let bound = t.var_bound(gamma);
        for i in 0..=200 {
            let p = P_WIN_CLASSICAL + (P_WIN_MAX - P_WIN_CLASSICAL) * i as f64 / 200.0;
            let probs = [gamma * p, gamma * (1.0 - p), 1.0 - gamma];
            let mean: f64 = probs.iter().zip([w, l, k]).map(|(a, b)| a * b).sum();
            let var: f64 = probs.iter().zip([w, l, k]).map(|(a, b)| a * (b - mean).powi(2)).sum();
            assert!(var <= bound * (1.0 + 1e-12) + 1e-12);
        }
    }
    // at γ = 1 the extension is f itself
    let [w, l, k] = t.sampled_values(1.0);
    assert!((w - t.eval(1.0)).abs() < 1e-12 && (l - t.eval(0.0)).abs() < 1e-12 && k == t.max_f);
}

#[test]
fn params_validation() {
    let ok = FiniteKeyParams::default();
    assert!(ok.validate().is_ok());
    assert!(FiniteKeyParams { rounds: 0.5, ..ok }.validate().is_err());
    assert!(FiniteKeyParams { eps_sound: 0.0, ..ok }.validate().is_err());
    assert!(FiniteKeyParams { eps_ec: 1.0, ..ok }.validate().is_err());
    assert!(FiniteKeyParams { test_fraction: TestFraction::Fixed(0.0), ..ok }.validate().is_err());
    assert!(FiniteKeyParams { alphabet: 1.0, ..ok }.validate().is_err());
    // small-ε form agrees with the direct one where both are accurate
    let fk = FiniteKeyParams { eps_sound: 0.3, ..ok };
    let direct = -(1.0 - (1.0 - 0.09_f64).sqrt()).log2();
    assert!((fk.smoothing_cost() - direct).abs() < 1e-12);
}

#[test]
fn finite_rate_increases_to_asymptote() {
    let op = one_photon_op();
    let mut prev = f64::NEG_INFINITY;
    for n in [1e6, 1e7, 1e8, 1e9, 1e10, 1e12, 1e14] {
        let f = at(op, n);
        assert!(f.rate < op.r);
        assert!(f.rate > prev);
        prev = f.rate;
    }
    assert!((at(op, 1e16).rate - op.r).abs() <= 1e-6);
}

#[test]
fn correction_scales_as_inverse_root() {
    let op = one_photon_op();
    for n in [1e10, 1e12] {
        let ratio = (op.r - at(op, n).rate) / (op.r - at(op, 4.0 * n).rate);
        assert!((ratio - 2.0).abs() < 0.2, "N={n:e} ratio={ratio}");
    }
}

#[test]
fn one_photon_practical_block_size() {
    let op = one_photon_op();
    let f = at(op, 1e9);
    assert!(f.rate > 0.5 * op.r, "{} vs {}", f.rate, op.r);
    assert!((f.throughput - op.p_h * DEFAULT_REP_RATE * f.rate).abs() < 1e-9 * f.throughput);
}

#[test]
fn tighter_security_costs_key() {
    let op = one_photon_op();
    let base = FiniteKeyParams { rounds: 1e9, ..Default::default() };
    let loose = finite_key_rate(op, &base).unwrap().rate;
    let tight_s = finite_key_rate(op, &FiniteKeyParams { eps_sound: 1e-10, ..base }).unwrap().rate;
    let tight_ec = finite_key_rate(op, &FiniteKeyParams { eps_ec: 1e-10, ..base }).unwrap().rate;
    assert!(tight_s < loose && tight_ec < loose);
}

#[test]
fn test_fraction_choice() {
    let op = one_photon_op();
    let opt = at(op, 1e10);
    // sub-sampling only inflates the variance here, so full testing wins
    assert_eq!(opt.correction.gamma, 1.0);
    let fixed = finite_key_rate(op, &FiniteKeyParams { test_fraction: TestFraction::Fixed(0.1), ..Default::default() }).unwrap();
    assert!(fixed.rate < opt.rate);
}

#[test]
fn pulse_counting_uses_heralded_fraction() {
    let op = one_photon_op();
    let fk = FiniteKeyParams { rounds: 1e10, counting: RoundCounting::Pulses, ..Default::default() };
    let f = finite_key_rate(op, &fk).unwrap();
    assert!((f.heralded_rounds - 1e10 * op.p_h).abs() < 1e-6 * f.heralded_rounds);
    assert!(f.rate < at(op, 1e10).rate);
    // too few pulses for anything to survive
    let tiny = finite_key_rate(op, &FiniteKeyParams { rounds: 1e5, ..fk }).unwrap();
    assert!(tiny.rate <= 0.0 && tiny.throughput == 0.0);
}

#[test]
fn no_violation_gives_zero() {
    let mut op = one_photon_op().clone();
    op.s = 1.9;
    let f = at(&op, 1e10);
    assert_eq!(f.rate, 0.0);
    assert!(f.tradeoff.is_none() && f.correction.delta.is_nan());
}

#[test]
fn two_photon_finite_rate() {
    let op = two_photon_op();
    let f = at(op, 1e10);
    assert!(f.throughput > 10.0 / 3.0 && f.throughput < 30.0, "{} bps", f.throughput);
    assert!(f.throughput < op.throughput);
}

#[test]
fn sweep_shapes() {
    let p = ProtocolParams::OnePhoton(OnePhotonParams::new(0.1, ChannelModel::new(0.0)));
    let pts = finite_distance_sweep(&p, 0.95, VisibilityModel::default(), &[1e8, 1e12], &[0.0, 50.0], &FiniteKeyParams::default(), &rate_opts()).unwrap();
    assert_eq!(pts.len(), 2);
    for pt in &pts {
        assert_eq!(pt.finite.len(), 2);
        assert!(pt.finite[0].rate < pt.finite[1].rate);
    }
    assert_eq!(pts[1].distance_km, 50.0);
}
