//! Subcommand bodies. Each returns its rows in grid order; writing is left
//! to the caller so that a failure never leaves a partial file behind.

use rayon::prelude::*;
use tfqkd::bell::{self, ThresholdQuantity};
use tfqkd::finite_key::finite_key_rate;
use tfqkd::keyrate::{self, RateResult};
use tfqkd::measurement::VisibilityModel;
use tfqkd::validation::{run_validation, Perturbation, ValidationOptions, ValidationReport};

use crate::config::{RunConfig, ThresholdKind};
use crate::error::{config, CliError};
use crate::record::{CheckRecord, ResultRecord};

/// Block sizes used by `finite` when none are configured.
pub const DEFAULT_FINITE_ROUNDS: [f64; 5] = [1e8, 1e9, 1e10, 1e11, 1e12];

fn protocol_name(cfg: &RunConfig) -> String {
    cfg.protocol.to_string()
}

/// Cartesian product in row-major order (first factor slowest).
fn product<A: Copy, B: Copy>(xs: &[A], ys: &[B]) -> Vec<(A, B)> {
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect()
}

fn triples(cfg: &RunConfig, first: Vec<f64>) -> Result<Vec<(f64, VisibilityModel, f64)>, CliError> {
    let vis = cfg.visibilities()?;
    let dist = cfg.physics.distance_km.values()?;
    Ok(product(&product(&first, &vis), &dist).into_iter().map(|((a, v), l)| (a, v, l)).collect())
}

pub fn cmd_chsh(cfg: &RunConfig) -> Result<Vec<ResultRecord>, CliError> {
    let points = triples(cfg, cfg.physics.eta_d.values()?)?;
    let opts = cfg.optimize_options();
    points
        .par_iter()
        .map(|&(eta, vis, l)| {
            let res = bell::optimize_chsh(&cfg.base_params(l), eta, vis, &opts, &[])?;
            let mut rec = ResultRecord::new("chsh", &protocol_name(cfg), res.seed)
                .with_inputs(Some(eta), Some(vis.v), Some(l))
                .with_argmax(&res.params, &res.settings, false);
            ResultRecord::put(&mut rec.s, res.s);
            ResultRecord::put(&mut rec.p_h, res.params.herald_prob()?);
            rec.converged = res.converged;
            Ok(rec)
        })
        .collect()
}

fn rate_record(command: &str, cfg: &RunConfig, eta: f64, vis: VisibilityModel, l: f64, op: &RateResult) -> ResultRecord {
    let mut rec = ResultRecord::new(command, &protocol_name(cfg), op.seed)
        .with_inputs(Some(eta), Some(vis.v), Some(l))
        .with_argmax(&op.params, &op.settings, true);
    ResultRecord::put(&mut rec.rep_rate, op.rep_rate);
    ResultRecord::put(&mut rec.s, op.s);
    ResultRecord::put(&mut rec.r, op.r.max(0.0));
    ResultRecord::put(&mut rec.q_opt, op.q_opt);
    ResultRecord::put(&mut rec.p_h, op.p_h);
    ResultRecord::put(&mut rec.rate_bps, op.throughput);
    rec.converged = op.converged;
    rec
}

pub fn cmd_rate(cfg: &RunConfig) -> Result<Vec<ResultRecord>, CliError> {
    let points = triples(cfg, cfg.physics.eta_d.values()?)?;
    let opts = cfg.rate_options(false);
    points
        .par_iter()
        .map(|&(eta, vis, l)| {
            let op = keyrate::optimize_rate(&cfg.base_params(l), eta, vis, &opts, &[])?;
            Ok(rate_record("rate", cfg, eta, vis, l, &op))
        })
        .collect()
}

fn distance_rows(cfg: &RunConfig, command: &str, rounds: &[f64]) -> Result<Vec<ResultRecord>, CliError> {
    let eta = cfg.physics.eta_d.values()?;
    let vis = cfg.visibilities()?;
    let dist = cfg.physics.distance_km.values()?;
    let opts = cfg.rate_options(true);
    let fks = rounds.iter().map(|&n| cfg.finite_params(n)).collect::<tfqkd::Result<Vec<_>>>()?;
    let curves = product(&eta, &vis)
        .par_iter()
        .map(|&(e, v)| {
            let ops = keyrate::distance_sweep(&cfg.base_params(0.0), e, v, &dist, &opts)?;
            let mut rows = Vec::new();
            for (op, &l) in ops.iter().zip(&dist) {
                let base = rate_record(command, cfg, e, v, l, op);
                if fks.is_empty() {
                    rows.push(base);
                    continue;
                }
                for fk in &fks {
                    let f = finite_key_rate(op, fk)?;
                    let mut rec = base.clone();
                    ResultRecord::put(&mut rec.rounds, fk.rounds);
                    ResultRecord::put(&mut rec.finite_rate, f.rate);
                    ResultRecord::put(&mut rec.finite_bps, f.throughput);
                    rows.push(rec);
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(curves.into_iter().flatten().collect())
}

/// Distance sweep of the asymptotic operating point, with finite-size rows
/// for every configured block size.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<ResultRecord>, CliError> {
    distance_rows(cfg, "sweep", &cfg.finite.rounds)
}

/// Finite-size rates; falls back to [`DEFAULT_FINITE_ROUNDS`].
pub fn cmd_finite(cfg: &RunConfig) -> Result<Vec<ResultRecord>, CliError> {
    let rounds = if cfg.finite.rounds.is_empty() { DEFAULT_FINITE_ROUNDS.to_vec() } else { cfg.finite.rounds.clone() };
    distance_rows(cfg, "finite", &rounds)
}

pub fn cmd_threshold(cfg: &RunConfig) -> Result<Vec<ResultRecord>, CliError> {
    let kind = cfg.threshold.quantity;
    let opts = cfg.optimize_options();
    let name = protocol_name(cfg);
    let seed = cfg.optimizer.seed;
    if kind == ThresholdKind::Visibility {
        let points = product(&cfg.physics.eta_d.values()?, &cfg.physics.distance_km.values()?);
        return points
            .par_iter()
            .map(|&(eta, l)| {
                let t = bell::required_visibility(&cfg.base_params(l), eta, &opts, cfg.threshold.tol)?;
                let mut rec = ResultRecord::new("threshold_visibility", &name, seed).with_inputs(Some(eta), None, Some(l));
                ResultRecord::put(&mut rec.threshold, t.value);
                rec.converged = true;
                Ok(rec)
            })
            .collect();
    }
    let quantity = match kind {
        ThresholdKind::Bell => ThresholdQuantity::Bell,
        ThresholdKind::KeyRate => ThresholdQuantity::KeyRate { noisy_preprocessing: false },
        _ => ThresholdQuantity::KeyRate { noisy_preprocessing: true },
    };
    let command = match kind {
        ThresholdKind::Bell => "threshold_bell",
        ThresholdKind::KeyRate => "threshold_key_rate",
        _ => "threshold_key_rate_np",
    };
    let vis = cfg.visibilities()?;
    let dist = cfg.physics.distance_km.values()?;
    product(&vis, &dist)
        .par_iter()
        .map(|&(v, l)| {
            let t = bell::detection_threshold(&cfg.base_params(l), v, quantity, &opts, &cfg.threshold_options())?;
            let mut rec = ResultRecord::new(command, &name, seed).with_inputs(None, Some(v.v), Some(l));
            ResultRecord::put(&mut rec.threshold, t.value);
            rec.converged = true;
            Ok(rec)
        })
        .collect()
}

/// Parses `formula=eps` for fault injection.
pub fn parse_perturbation(s: &str) -> Result<Perturbation, String> {
    let (name, eps) = s.split_once('=').ok_or_else(|| format!("`{s}` is not formula=eps"))?;
    let eps: f64 = eps.trim().parse().map_err(|e| format!("`{eps}`: {e}"))?;
    Perturbation::new(name.trim(), eps).map_err(|e| e.to_string())
}

pub fn cmd_validate(cfg: &RunConfig, perturbation: Option<Perturbation>) -> Result<(Vec<CheckRecord>, ValidationReport), CliError> {
    let opts = ValidationOptions { draws: cfg.validate.draws, seed: cfg.validate.seed, perturbation };
    if opts.draws == 0 {
        return Err(config("validation needs at least one draw"));
    }
    let report = run_validation(&opts)?;
    let rows = report.checks.iter().map(CheckRecord::from).collect();
    Ok((rows, report))
}
