//! Exact-in-distribution samplers for the driving noises and the observed
//! processes.
//!
//! The Molchan martingale is drawn directly from its Wiener-integral
//! representation: increments are independent centered Gaussians with
//! variance `t_{l+1}^(2-2H) - t_l^(2-2H)`, which is exact and `O(n)`.
//! Fractional Brownian motion is drawn either from a Cholesky factor of the
//! increment covariance or by circulant embedding (both exact in
//! distribution). All samplers are deterministic functions of an
//! [`RngStream`] substream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{SamplePath, TimeGrid};
use crate::quad::GaussLegendre;
use crate::qv::QuadVarModel;

/// A deterministic time-dependent coefficient.
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Reproducible family of independent random substreams: identical
/// `(seed, index)` pairs reproduce identical output, distinct indices are
/// statistically independent.
#[derive(Debug, Clone, Copy)]
pub struct RngStream {
    seed: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// Observation model `dZ = J0 d<M> + dM` with deterministic quadratic
/// variation.
#[derive(Clone)]
pub struct MartingaleModel {
    pub drift: TimeFn,
    pub qv: QuadVarModel,
}

/// Non-autonomous geometric price model `dS = S (b0 dt + sigma dW)`.
#[derive(Clone)]
pub struct BlackScholesModel {
    pub s0: f64,
    pub sigma: f64,
    pub drift: TimeFn,
}

/// Price/volatility system `dS = S (b dt + sigma_t dW)`,
/// `dsigma = sigma (rho0 dt + upsilon dB)` with `B` fractional of index `H`.
#[derive(Clone)]
pub struct FracStochVolModel {
    pub s0: f64,
    pub sigma0: f64,
    pub upsilon: f64,
    pub hurst: f64,
    pub price_drift: TimeFn,
    pub vol_drift: TimeFn,
    /// Separation inserted between estimation blocks when one long path is
    /// segmented into pseudo-copies.
    pub gap: f64,
}

/// Tagged union over the simulatable models.
#[derive(Clone)]
pub enum SdeConfig {
    Martingale(MartingaleModel),
    BlackScholes(BlackScholesModel),
    FracStochVol(FracStochVolModel),
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            SdeConfig::Martingale(_) => Ok(()),
            SdeConfig::BlackScholes(m) => {
                if !(m.s0 > 0.0 && m.sigma >= 0.0) {
                    return Err(Error::Domain("Black-Scholes needs S0 > 0 and sigma >= 0".into()));
                }
                Ok(())
            }
            SdeConfig::FracStochVol(m) => {
                if !(m.s0 > 0.0 && m.sigma0 > 0.0 && m.upsilon > 0.0 && m.gap >= 0.0) {
                    return Err(Error::Domain(
                        "stochastic-volatility model needs positive S0, sigma0, upsilon and gap >= 0".into(),
                    ));
                }
                check_hurst(m.hurst)
            }
        }
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if !(0.5..1.0).contains(&hurst) {
        return Err(Error::Domain(format!("Hurst index {hurst} outside [1/2, 1)")));
    }
    Ok(())
}

/// Standard deviations of the martingale increments on the grid:
/// `sqrt(<M>_{t_{l+1}} - <M>_{t_l})`.
pub fn martingale_step_stds(grid: TimeGrid, qv: &QuadVarModel) -> Result<Vec<f64>> {
    let mut stds = Vec::with_capacity(grid.steps());
    let mut prev = qv.quad_var(grid.node(0))?;
    for l in 1..=grid.steps() {
        let next = qv.quad_var(grid.node(l))?;
        let var = next - prev;
        if var < 0.0 {
            return Err(Error::Domain("quadratic variation must be nondecreasing".into()));
        }
        stds.push(var.sqrt());
        prev = next;
    }
    Ok(stds)
}

/// Exact draw of the Molchan martingale on the grid from its independent
/// Gaussian increments.
pub fn simulate_molchan(grid: TimeGrid, hurst: f64, rng: &mut ChaCha8Rng) -> Result<SamplePath> {
    check_hurst(hurst)?;
    let qv = QuadVarModel::MolchanPower { hurst };
    let stds = martingale_step_stds(grid, &qv)?;
    simulate_z_with_drift(&vec![0.0; grid.steps()], &stds, grid, rng)
}

/// Per-step drift increments `int_{t_l}^{t_{l+1}} J0(s) d<M>_s`, computed by
/// quadrature so that the simulated observation process is unbiased at the
/// grid nodes. Independent of the noise; compute once and share across
/// copies.
pub fn drift_increments(
    drift: &(dyn Fn(f64) -> f64 + Sync),
    qv: &QuadVarModel,
    grid: TimeGrid,
) -> Result<Vec<f64>> {
    (0..grid.steps())
        .map(|l| qv.integrate(drift, grid.node(l), grid.node(l + 1)))
        .collect()
}

/// Assemble an observation path from precomputed drift increments and
/// per-step noise standard deviations. Draws exactly one standard normal per
/// step, in node order.
pub fn simulate_z_with_drift(
    drift_increments: &[f64],
    step_stds: &[f64],
    grid: TimeGrid,
    rng: &mut ChaCha8Rng,
) -> Result<SamplePath> {
    let n = grid.steps();
    if drift_increments.len() != n || step_stds.len() != n {
        return Err(Error::Dimension("increment arrays must match the grid".into()));
    }
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(acc);
    for l in 0..n {
        let g: f64 = StandardNormal.sample(rng);
        acc += drift_increments[l] + step_stds[l] * g;
        values.push(acc);
    }
    SamplePath::new(grid, values)
}

/// Simulate the observation process `Z` of a [`MartingaleModel`].
pub fn simulate_z(model: &MartingaleModel, grid: TimeGrid, rng: &mut ChaCha8Rng) -> Result<SamplePath> {
    let drift = drift_increments(&*model.drift, &model.qv, grid)?;
    let stds = martingale_step_stds(grid, &model.qv)?;
    simulate_z_with_drift(&drift, &stds, grid, rng)
}

/// Per-step integrals `int_{t_l}^{t_{l+1}} f(s) ds` of a continuous
/// coefficient, by a fixed-order panel rule per step.
pub fn step_integrals(f: &(dyn Fn(f64) -> f64 + Sync), grid: TimeGrid) -> Vec<f64> {
    let rule = GaussLegendre::new(16);
    (0..grid.steps())
        .map(|l| rule.integrate(grid.node(l), grid.node(l + 1), f))
        .collect()
}

/// Exact log-scheme for the non-autonomous Black-Scholes price:
/// `S_{l+1} = S_l exp(int b0 - sigma^2/2 dt + sigma dW_l)`.
pub fn simulate_black_scholes(
    model: &BlackScholesModel,
    grid: TimeGrid,
    rng: &mut ChaCha8Rng,
) -> Result<SamplePath> {
    if !(model.s0 > 0.0) {
        return Err(Error::Domain("initial price must be positive".into()));
    }
    let drift = step_integrals(&*model.drift, grid);
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let half_var = 0.5 * model.sigma * model.sigma * dt;
    let mut values = Vec::with_capacity(grid.steps() + 1);
    let mut s = model.s0;
    values.push(s);
    for d in drift {
        let g: f64 = StandardNormal.sample(rng);
        s *= (d - half_var + model.sigma * sqrt_dt * g).exp();
        values.push(s);
    }
    SamplePath::new(grid, values)
}

/// Cost guard for the dense-Cholesky fractional Brownian sampler.
pub const FBM_CHOLESKY_MAX_STEPS: usize = 1 << 16;

/// Steps above which [`simulate_fsv`] switches to the circulant sampler.
const FBM_AUTO_SWITCH_STEPS: usize = 1024;

fn fgn_autocovariance(k: usize, hurst: f64, dt: f64) -> f64 {
    let two_h = 2.0 * hurst;
    let k = k as f64;
    0.5 * dt.powf(two_h) * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Exact fractional Brownian motion via a Cholesky factor of the increment
/// covariance `E[dB_i dB_j]`.
pub fn simulate_fbm(grid: TimeGrid, hurst: f64, rng: &mut ChaCha8Rng) -> Result<SamplePath> {
    check_hurst(hurst)?;
    let n = grid.steps();
    if n > FBM_CHOLESKY_MAX_STEPS {
        return Err(Error::Domain(format!(
            "Cholesky sampler limited to {FBM_CHOLESKY_MAX_STEPS} steps, got {n}; use the circulant sampler"
        )));
    }
    let dt = grid.dt();
    let cov = nalgebra::DMatrix::<f64>::from_fn(n, n, |i, j| {
        fgn_autocovariance(i.abs_diff(j), hurst, dt)
    });
    let Some(chol) = cov.cholesky() else {
        return Err(Error::Decomposition { hurst, steps: n });
    };
    let g = nalgebra::DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(rng));
    let increments = chol.l() * g;
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(acc);
    for inc in increments.iter() {
        acc += inc;
        values.push(acc);
    }
    SamplePath::new(grid, values)
}

/// Exact fractional Brownian motion by circulant embedding of the
/// stationary increment covariance; `O(n log n)`, matching the Cholesky
/// sampler in distribution.
pub fn simulate_fbm_circulant(grid: TimeGrid, hurst: f64, rng: &mut ChaCha8Rng) -> Result<SamplePath> {
    check_hurst(hurst)?;
    let n = grid.steps();
    let dt = grid.dt();
    if n == 1 {
        // circulant embedding needs at least two increments
        return simulate_fbm(grid, hurst, rng);
    }
    let m = 2 * n;
    let mut first_row: Vec<Complex<f64>> = Vec::with_capacity(m);
    for k in 0..=n {
        first_row.push(Complex::new(fgn_autocovariance(k, hurst, dt), 0.0));
    }
    for k in (1..n).rev() {
        first_row.push(Complex::new(fgn_autocovariance(k, hurst, dt), 0.0));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let mut eigenvalues = first_row;
    fft.process(&mut eigenvalues);
    let max_ev = eigenvalues.iter().map(|c| c.re).fold(f64::MIN, f64::max);
    let mut spectrum = Vec::with_capacity(m);
    for ev in &eigenvalues {
        let re = ev.re;
        if re < -1e-8 * max_ev.max(1.0) {
            return Err(Error::Decomposition { hurst, steps: n });
        }
        spectrum.push(re.max(0.0));
    }

    // hermitian-symmetric Gaussian load on the eigenbasis; fixed draw order
    let mut freq: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); m];
    let g0: f64 = StandardNormal.sample(rng);
    freq[0] = Complex::new((spectrum[0]).sqrt() * g0, 0.0);
    let gn: f64 = StandardNormal.sample(rng);
    freq[n] = Complex::new((spectrum[n]).sqrt() * gn, 0.0);
    for k in 1..n {
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        let scale = (spectrum[k] / 2.0).sqrt();
        freq[k] = Complex::new(scale * a, scale * b);
        freq[m - k] = freq[k].conj();
    }
    fft.process(&mut freq);
    let norm = 1.0 / (m as f64).sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(acc);
    for c in freq.iter().take(n) {
        acc += c.re * norm;
        values.push(acc);
    }
    SamplePath::new(grid, values)
}

/// Price and volatility paths of the fractional stochastic-volatility model.
#[derive(Debug, Clone)]
pub struct FsvPaths {
    pub price: SamplePath,
    pub volatility: SamplePath,
}

/// Simulate the stochastic-volatility system on the grid.
///
/// The volatility solves its equation in closed form:
/// `sigma_t = sigma_0 exp(int rho0 ds + upsilon B_t)` pathwise for `H > 1/2`
/// (no Ito correction under the Young chain rule), with the usual
/// `-upsilon^2 t / 2` correction at `H = 1/2`. The price uses the exact
/// log-scheme with the volatility frozen at the left node of each step. The
/// fractional driver `B` is drawn first, then the independent price noise.
pub fn simulate_fsv(model: &FracStochVolModel, grid: TimeGrid, rng: &mut ChaCha8Rng) -> Result<FsvPaths> {
    SdeConfig::FracStochVol(model.clone()).validate()?;
    let n = grid.steps();
    let fbm = if n <= FBM_AUTO_SWITCH_STEPS {
        simulate_fbm(grid, model.hurst, rng)?
    } else {
        simulate_fbm_circulant(grid, model.hurst, rng)?
    };
    let vol_drift = step_integrals(&*model.vol_drift, grid);
    let ito = if model.hurst == 0.5 { 0.5 * model.upsilon * model.upsilon } else { 0.0 };
    let mut vol = Vec::with_capacity(n + 1);
    let mut cum_drift = 0.0;
    vol.push(model.sigma0);
    for l in 0..n {
        cum_drift += vol_drift[l];
        let t = grid.node(l + 1);
        vol.push(model.sigma0 * (cum_drift + model.upsilon * fbm.value(l + 1) - ito * t).exp());
    }

    let price_drift = step_integrals(&*model.price_drift, grid);
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut price = Vec::with_capacity(n + 1);
    let mut s = model.s0;
    price.push(s);
    for l in 0..n {
        let sig = vol[l];
        let g: f64 = StandardNormal.sample(rng);
        s *= (price_drift[l] - 0.5 * sig * sig * dt + sig * sqrt_dt * g).exp();
        price.push(s);
    }
    Ok(FsvPaths {
        price: SamplePath::new(grid, price)?,
        volatility: SamplePath::new(grid, vol)?,
    })
}
