//! Monte-Carlo experiment orchestration: scenario setup, parallel
//! repetitions with pre-assigned random substreams, and deterministic
//! assembly of the report.

use std::time::Instant;

use fracdrift::apps;
use fracdrift::basis::BasisFamily;
use fracdrift::estimator::{self, BasisTable, GramMatrix, MiseNorm};
use fracdrift::fracops::{self, TransformGrid};
use fracdrift::simulate::{self, BlackScholesModel, FracStochVolModel, RngStream, TimeFn};
use fracdrift::{Error, QuadVarModel, TimeGrid};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Scenario};
use crate::report::{CurveSet, ExperimentReport, RepetitionFailure, RepetitionRow};
use crate::{CliError, CliResult};

/// Number of repetitions whose fitted curves are kept for `curves.csv`.
pub const CURVE_REPS: usize = 10;
const CURVE_POINTS: usize = 500;

/// Run every repetition of the configured experiment. Deterministic for a
/// fixed configuration and seed: repetition `r` draws from substreams
/// `r * copies + i` (one per copy, or stream `r` for single-path scenarios)
/// and the parallel reduction order is fixed.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<ExperimentReport> {
    let warnings = cfg.validate()?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let start = Instant::now();
    let outcome = match cfg.scenario {
        Scenario::MolchanJ => run_molchan(cfg)?,
        Scenario::BlackScholes => run_black_scholes(cfg)?,
        Scenario::Fsv => run_fsv(cfg)?,
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    let mut estimates = Vec::new();
    for (rep, result) in outcome.reps.into_iter().enumerate() {
        match result {
            Ok((row, curve)) => {
                rows.push(row);
                if let Some(curve) = curve {
                    estimates.push(curve);
                }
            }
            Err(e) => failures.push(RepetitionFailure { rep, error: e.to_string() }),
        }
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        rows,
        failures,
        curves: CurveSet { times: outcome.curve_times, truth: outcome.curve_truth, estimates },
        wall_clock: start.elapsed(),
    })
}

type RepOutcome = Result<(RepetitionRow, Option<Vec<f64>>), Error>;

struct ScenarioOutcome {
    reps: Vec<RepOutcome>,
    curve_times: Vec<f64>,
    curve_truth: Vec<f64>,
}

fn curve_times(lower: f64, upper: f64) -> Vec<f64> {
    (0..CURVE_POINTS)
        .map(|k| lower + (upper - lower) * k as f64 / (CURVE_POINTS - 1) as f64)
        .collect()
}

/// Gram factors for every candidate dimension, from one factorization of the
/// largest one.
fn gram_ladder(family: &BasisFamily, dims: &[usize], qv: &QuadVarModel) -> Result<Vec<GramMatrix>, Error> {
    let gram_max = GramMatrix::new(family, *dims.iter().max().unwrap(), qv)?;
    dims.iter().map(|m| gram_max.leading(*m)).collect()
}

fn run_molchan(cfg: &ExperimentConfig) -> CliResult<ScenarioOutcome> {
    let qv = QuadVarModel::molchan(cfg.hurst).map_err(CliError::from)?;
    let grid = TimeGrid::new(cfg.horizon, cfg.steps).map_err(CliError::from)?;
    let m_max = *cfg.dims.iter().max().unwrap();
    let family = cfg.basis.build(cfg.horizon, m_max).map_err(CliError::from)?;
    let grams = gram_ladder(&family, &cfg.dims, &qv).map_err(CliError::from)?;
    // the record starts at t_1 = T/n, but the initial increment is still
    // known because the observation process vanishes at 0 by definition
    let table = BasisTable::new(&family, grid, m_max).map_err(CliError::from)?;
    let drift: TimeFn = cfg.drift.as_fn();
    let drift_incs = simulate::drift_increments(&*drift, &qv, grid).map_err(CliError::from)?;
    let stds = simulate::martingale_step_stds(grid, &qv).map_err(CliError::from)?;
    let streams = RngStream::new(cfg.seed);

    let lower = grid.first_observation();
    let times = curve_times(lower, cfg.horizon);
    let truth: Vec<f64> = times.iter().map(|t| drift(*t)).collect();
    let n_copies = cfg.copies;
    let dims = cfg.dims.clone();
    let penalty = cfg.penalty.clone();
    let horizon = cfg.horizon;

    let reps: Vec<RepOutcome> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let z = estimator::project_simulated_paths(
                &table,
                &drift_incs,
                &stds,
                n_copies,
                &streams,
                (rep * n_copies) as u64,
            )?;
            let fit = estimator::select_from_parts(&grams, &z, &dims, n_copies, &penalty);
            let estimate = |t: f64| fit.eval(&family, t);
            let mise_qv =
                estimator::mise(&estimate, &*drift, &qv, MiseNorm::QuadVar, lower, horizon)?;
            let mise_l2 =
                estimator::mise(&estimate, &*drift, &qv, MiseNorm::Lebesgue, lower, horizon)?;
            let curve = (rep < CURVE_REPS).then(|| times.iter().map(|t| estimate(*t)).collect());
            let row = RepetitionRow {
                rep,
                m_hat: fit.dim,
                mise_qv,
                mise_l2,
                c_cal: fit.penalty_constant.unwrap_or(f64::NAN),
                sigma_hat: None,
            };
            Ok((row, curve))
        })
        .collect();
    Ok(ScenarioOutcome { reps, curve_times: times, curve_truth: truth })
}

fn run_black_scholes(cfg: &ExperimentConfig) -> CliResult<ScenarioOutcome> {
    let qv = QuadVarModel::Lebesgue;
    let n_copy = cfg.steps / cfg.copies;
    let long_grid =
        TimeGrid::new(cfg.horizon * cfg.copies as f64, cfg.steps).map_err(CliError::from)?;
    let copy_grid = TimeGrid::new(cfg.horizon, n_copy).map_err(CliError::from)?;
    let m_max = *cfg.dims.iter().max().unwrap();
    let family = cfg.basis.build(cfg.horizon, m_max).map_err(CliError::from)?;
    let grams = gram_ladder(&family, &cfg.dims, &qv).map_err(CliError::from)?;
    let table = BasisTable::new(&family, copy_grid, m_max).map_err(CliError::from)?;
    let drift: TimeFn = cfg.drift.as_fn();
    let model =
        BlackScholesModel { s0: cfg.s0, sigma: cfg.sigma, drift: drift.clone() };
    let streams = RngStream::new(cfg.seed);

    let lower = copy_grid.first_observation();
    let times = curve_times(lower, cfg.horizon);
    let truth: Vec<f64> = times.iter().map(|t| drift(*t)).collect();
    let n_copies = cfg.copies;
    let dims = cfg.dims.clone();
    let penalty = cfg.penalty.clone();
    let horizon = cfg.horizon;
    let estimate_sigma = cfg.estimate_sigma;

    let reps: Vec<RepOutcome> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = streams.stream(rep as u64);
            let path = simulate::simulate_black_scholes(&model, long_grid, &mut rng)?;
            let sigma_used =
                if estimate_sigma { apps::estimate_sigma(&path)? } else { model.sigma };
            let copies = apps::segment_series(&path, horizon, 0.0, n_copies)?.copies;
            let z_ens = apps::bs_build_z(&copies, sigma_used)?;
            let z = estimator::project_data_with_table(&z_ens, &table)?;
            let fit = estimator::select_from_parts(&grams, &z, &dims, n_copies, &penalty);
            let estimate = |t: f64| sigma_used * fit.eval(&family, t);
            // Brownian quadratic variation: both norms coincide
            let mise_l2 =
                estimator::mise(&estimate, &*drift, &qv, MiseNorm::Lebesgue, lower, horizon)?;
            let curve = (rep < CURVE_REPS).then(|| times.iter().map(|t| estimate(*t)).collect());
            let row = RepetitionRow {
                rep,
                m_hat: fit.dim,
                mise_qv: mise_l2,
                mise_l2,
                c_cal: fit.penalty_constant.unwrap_or(f64::NAN),
                sigma_hat: estimate_sigma.then_some(sigma_used),
            };
            Ok((row, curve))
        })
        .collect();
    Ok(ScenarioOutcome { reps, curve_times: times, curve_truth: truth })
}

fn run_fsv(cfg: &ExperimentConfig) -> CliResult<ScenarioOutcome> {
    let qv = QuadVarModel::molchan(cfg.hurst).map_err(CliError::from)?;
    let block_span = cfg.horizon + cfg.gap;
    let block_steps = (block_span / cfg.horizon * cfg.steps as f64).round() as usize;
    let long_grid = TimeGrid::new(block_span * cfg.copies as f64, block_steps * cfg.copies)
        .map_err(CliError::from)?;
    let copy_grid = TimeGrid::new(cfg.horizon, cfg.steps).map_err(CliError::from)?;
    let m_max = *cfg.dims.iter().max().unwrap();
    let family = cfg.basis.build(cfg.horizon, m_max).map_err(CliError::from)?;
    let grams = gram_ladder(&family, &cfg.dims, &qv).map_err(CliError::from)?;
    let table = BasisTable::new(&family, copy_grid, m_max).map_err(CliError::from)?;
    let rho: TimeFn = cfg.drift.as_fn();
    let model = FracStochVolModel {
        s0: cfg.s0,
        sigma0: cfg.sigma0,
        upsilon: cfg.upsilon,
        hurst: cfg.hurst,
        price_drift: std::sync::Arc::new(|_| 0.0),
        vol_drift: rho.clone(),
        gap: cfg.gap,
    };
    let streams = RngStream::new(cfg.seed);
    let transform = TransformGrid::default();

    let out_times = fracops::default_output_times(cfg.horizon);
    let lower = out_times[0];
    let times = curve_times(lower, cfg.horizon);
    let truth: Vec<f64> = times.iter().map(|t| rho(*t)).collect();
    let n_copies = cfg.copies;
    let dims = cfg.dims.clone();
    let penalty = cfg.penalty.clone();
    let horizon = cfg.horizon;
    let hurst = cfg.hurst;
    let upsilon = cfg.upsilon;
    let gap = cfg.gap;

    let reps: Vec<RepOutcome> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let mut rng = streams.stream(rep as u64);
            let paths = simulate::simulate_fsv(&model, long_grid, &mut rng)?;
            let copies = apps::segment_series(&paths.volatility, horizon, gap, n_copies)?.copies;
            let z_ens = apps::fsv_build_z(&copies, upsilon, hurst, 1)?;
            let z = estimator::project_data_with_table(&z_ens, &table)?;
            let fit = estimator::select_from_parts(&grams, &z, &dims, n_copies, &penalty);
            let q_hat = fracops::estimate_q(&fit, &family, hurst, &transform, &out_times)?;
            let estimate = |t: f64| upsilon * q_hat.eval(t);
            let mise_qv = estimator::mise(&estimate, &*rho, &qv, MiseNorm::QuadVar, lower, horizon)?;
            let mise_l2 =
                estimator::mise(&estimate, &*rho, &qv, MiseNorm::Lebesgue, lower, horizon)?;
            let curve = (rep < CURVE_REPS).then(|| times.iter().map(|t| estimate(*t)).collect());
            let row = RepetitionRow {
                rep,
                m_hat: fit.dim,
                mise_qv,
                mise_l2,
                c_cal: fit.penalty_constant.unwrap_or(f64::NAN),
                sigma_hat: None,
            };
            Ok((row, curve))
        })
        .collect();
    Ok(ScenarioOutcome { reps, curve_times: times, curve_truth: truth })
}
