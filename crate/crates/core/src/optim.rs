//! Derivative-free optimization helpers.
//!
//! Box constraints are handled by a smooth change of variables,
//! x = lo + (hi − lo)(1 + sin z)/2, so the simplex itself moves freely and
//! optima sitting on a bound remain reachable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box, `lo[i] ≤ x[i] ≤ hi[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "bound vectors differ in length");
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h), "empty box");
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn to_box(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &zi)| {
                let x = self.lo[i] + (self.hi[i] - self.lo[i]) * 0.5 * (1.0 + zi.sin());
                x.clamp(self.lo[i], self.hi[i])
            })
            .collect()
    }

    fn from_box(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| {
                let w = self.hi[i] - self.lo[i];
                if w == 0.0 {
                    0.0
                } else {
                    (2.0 * (xi - self.lo[i]) / w - 1.0).clamp(-1.0, 1.0).asin()
                }
            })
            .collect()
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(i, &ui)| self.lo[i] + (self.hi[i] - self.lo[i]) * ui).collect()
    }
}

/// Settings for a single Nelder–Mead run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values drops below `tol·|f_best|`
    /// and a fresh simplex around the best vertex cannot improve on it.
    /// The test is relative so that objectives living at the 1e-9 scale
    /// (key rates just above a threshold) are still resolved.
    pub tol: f64,
    /// Initial simplex edge in transformed coordinates.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 6000, tol: 1e-10, initial_step: 0.35 }
    }
}

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` inside `bounds` starting from `x0`.
///
/// Uses the dimension-adapted coefficients of Gao and Han, which behave
/// better than the classic ones beyond a handful of variables. A converged
/// run is restarted once from its best vertex to catch a collapsed simplex.
pub fn nelder_mead<F>(f: F, x0: &[f64], bounds: &Bounds, opts: &NelderMeadOptions) -> OptimResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = bounds.dim();
    assert_eq!(x0.len(), n);
    let evals = std::cell::Cell::new(0usize);
    let eval = |z: &[f64]| {
        evals.set(evals.get() + 1);
        let v = f(&bounds.to_box(z));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let v = eval(&[]);
        return OptimResult { x: vec![], value: v, evals: 1, converged: true };
    }
    let nf = n as f64;
    let (rho, chi, gam, sig) = if n > 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut best_z = bounds.from_box(x0);
    let mut best_f = eval(&best_z);
    let mut converged = false;
    let mut restarted = false;

    'outer: loop {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_z.clone(), best_f));
        for i in 0..n {
            let mut z = best_z.clone();
            // step away from the nearest fold of sin so the vertex moves x
            z[i] += if z[i].cos() >= 0.0 { opts.initial_step } else { -opts.initial_step };
            let v = eval(&z);
            simplex.push((z, v));
        }
        let start_f = best_f;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_lo = simplex[0].1;
            let f_hi = simplex[n].1;
            if (f_hi - f_lo) <= opts.tol * f_lo.abs() + f64::MIN_POSITIVE {
                best_z = simplex[0].0.clone();
                best_f = f_lo;
                // a restart that gains nothing confirms the optimum
                if restarted && best_f >= start_f - opts.tol * best_f.abs() {
                    converged = true;
                    break 'outer;
                }
                restarted = true;
                if evals.get() >= opts.max_evals {
                    break 'outer;
                }
                continue 'outer;
            }
            if evals.get() >= opts.max_evals {
                best_z = simplex[0].0.clone();
                best_f = f_lo;
                break 'outer;
            }
            let mut centroid = vec![0.0; n];
            for (z, _) in &simplex[..n] {
                for (c, zi) in centroid.iter_mut().zip(z) {
                    *c += zi / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (c - w)).collect()
            };
            let zr = along(rho);
            let fr = eval(&zr);
            if fr < simplex[0].1 {
                let ze = along(rho * chi);
                let fe = eval(&ze);
                simplex[n] = if fe < fr { (ze, fe) } else { (zr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (zr, fr);
            } else {
                let (zc, fc) = if fr < simplex[n].1 {
                    let zc = along(rho * gam);
                    let fc = eval(&zc);
                    (zc, fc)
                } else {
                    let zc = along(-gam);
                    let fc = eval(&zc);
                    (zc, fc)
                };
                if fc < fr.min(simplex[n].1) {
                    simplex[n] = (zc, fc);
                } else {
                    let z0 = simplex[0].0.clone();
                    for (z, v) in simplex[1..].iter_mut() {
                        for (zi, bi) in z.iter_mut().zip(&z0) {
                            *zi = bi + sig * (*zi - bi);
                        }
                        *v = eval(z);
                    }
                }
            }
        }
    }
    OptimResult { x: bounds.to_box(&best_z), value: best_f, evals: evals.get(), converged }
}

/// Radical-inverse Halton point `index` in `dim` dimensions.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    const PRIMES: [u64; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];
    assert!(dim <= PRIMES.len(), "Halton sequence supports at most {} dimensions", PRIMES.len());
    PRIMES[..dim]
        .iter()
        .map(|&b| {
            let (mut i, mut f, mut r) = (index, 1.0, 0.0);
            while i > 0 {
                f /= b as f64;
                r += f * (i % b) as f64;
                i /= b;
            }
            r
        })
        .collect()
}

/// Settings for a multi-start search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiStartOptions {
    pub starts: usize,
    pub seed: u64,
    pub local: NelderMeadOptions,
}

impl Default for MultiStartOptions {
    fn default() -> Self {
        Self { starts: 16, seed: 20_240_917, local: NelderMeadOptions::default() }
    }
}

/// Best point of a multi-start search plus the value reached from each start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiStartResult {
    pub best: OptimResult,
    pub best_start: usize,
    pub start_values: Vec<f64>,
}

/// Start points: `hints` first, then `opts.starts` Halton points shifted by
/// a seeded random offset (Cranley–Patterson rotation) and mapped onto
/// `start_box`, which may be smaller than the search box.
pub fn start_points(start_box: &Bounds, opts: &MultiStartOptions, hints: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let bounds = start_box;
    let dim = bounds.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut pts: Vec<Vec<f64>> = hints.to_vec();
    for k in 0..opts.starts {
        let u: Vec<f64> = halton(k as u64 + 1, dim).iter().zip(&shift).map(|(h, s)| (h + s).fract()).collect();
        pts.push(bounds.from_unit(&u));
    }
    pts
}

/// Maximizes `f` from every start point in parallel.
///
/// The winner is chosen by value, ties going to the lower start index, so
/// the result does not depend on thread scheduling.
pub fn maximize_multistart<F>(f: F, bounds: &Bounds, opts: &MultiStartOptions, hints: &[Vec<f64>]) -> MultiStartResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    maximize_multistart_in(f, bounds, bounds, opts, hints)
}

/// As [`maximize_multistart`], drawing the quasi-random starts from
/// `start_box` while searching all of `bounds`.
pub fn maximize_multistart_in<F>(
    f: F,
    bounds: &Bounds,
    start_box: &Bounds,
    opts: &MultiStartOptions,
    hints: &[Vec<f64>],
) -> MultiStartResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let starts = start_points(start_box, opts, hints);
    assert!(!starts.is_empty(), "multi-start search needs at least one start");
    let runs: Vec<OptimResult> = starts
        .par_iter()
        .map(|x0| {
            let mut r = nelder_mead(|x| -f(x), x0, bounds, &opts.local);
            r.value = -r.value;
            r
        })
        .collect();
    let mut best_start = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.value > runs[best_start].value {
            best_start = i;
        }
    }
    let start_values = runs.iter().map(|r| r.value).collect();
    let best = runs.into_iter().nth(best_start).expect("non-empty");
    MultiStartResult { best, best_start, start_values }
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid scan followed by golden-section refinement around the best node.
pub fn grid_golden_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: usize, tol: f64) -> (f64, f64) {
    assert!(nodes >= 2);
    let h = (b - a) / (nodes - 1) as f64;
    let (mut ib, mut fb) = (0, f64::NEG_INFINITY);
    for i in 0..nodes {
        let v = f(a + h * i as f64);
        if v > fb {
            ib = i;
            fb = v;
        }
    }
    let lo = (a + h * ib as f64 - h).max(a);
    let hi = (a + h * ib as f64 + h).min(b);
    let (x, v) = golden_section_max(&f, lo, hi, tol);
    if v >= fb {
        (x, v)
    } else {
        (a + h * ib as f64, fb)
    }
}

/// Locates the sign change of `pred` on `[lo, hi]` to within `tol`.
///
/// `pred(lo)` and `pred(hi)` must differ; the returned point is the midpoint
/// of the final bracket. The ends may come in either order, and `lo` is
/// always probed first.
pub fn bisect<F: FnMut(f64) -> Result<bool>>(mut pred: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let at_lo = pred(lo)?;
    let at_hi = pred(hi)?;
    if at_lo == at_hi {
        return Err(Error::Bracket(format!("no sign change on [{lo}, {hi}]")));
    }
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? == at_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
