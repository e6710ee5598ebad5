//! Deterministic quadratic-variation models `<M>_t = int_0^t mu(s) ds` and
//! quadrature against `d<M>_t`.

use crate::error::{Error, Result};
use crate::quad::{integrate_adaptive, integrate_left_graded, DEFAULT_REL_TOL};

/// Deterministic quadratic variation of the driving martingale, given by its
/// density `mu`.
///
/// `MolchanPower(H)` is the Molchan-martingale case `<M>_t = t^(2-2H)` with
/// `mu(t) = (2-2H) t^(1-2H)`, singular at the origin for `H > 1/2`;
/// `Lebesgue` is the Brownian case `mu = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadVarModel {
    Lebesgue,
    MolchanPower { hurst: f64 },
    Tabulated { times: Vec<f64>, density: Vec<f64> },
}

impl QuadVarModel {
    /// Molchan-martingale model; requires `H` in `[1/2, 1)`.
    pub fn molchan(hurst: f64) -> Result<Self> {
        check_hurst(hurst)?;
        Ok(Self::MolchanPower { hurst })
    }

    /// Density sampled on a strictly increasing grid starting at `t >= 0`;
    /// evaluated by linear interpolation in between.
    pub fn tabulated(times: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if times.len() != density.len() || times.len() < 2 {
            return Err(Error::Dimension("tabulated density needs matching grids of length >= 2".into()));
        }
        if times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("tabulation times must be nonnegative and strictly increasing".into()));
        }
        if density.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Domain("tabulated density must be finite and positive".into()));
        }
        Ok(Self::Tabulated { times, density })
    }

    /// `<M>_t`, exact in closed form for `Lebesgue` and `MolchanPower`.
    pub fn quad_var(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Domain(format!("time {t} outside the model domain")));
        }
        match self {
            Self::Lebesgue => Ok(t),
            Self::MolchanPower { hurst } => Ok(t.powf(2.0 - 2.0 * hurst)),
            Self::Tabulated { times, density } => {
                if t > *times.last().unwrap() {
                    return Err(Error::Domain(format!("time {t} beyond the tabulated range")));
                }
                // exact integral of the piecewise-linear density
                let mut acc = 0.0;
                for (w, d) in times.windows(2).zip(density.windows(2)) {
                    if t <= w[0] {
                        break;
                    }
                    let hi = t.min(w[1]);
                    let d_hi = d[0] + (d[1] - d[0]) * (hi - w[0]) / (w[1] - w[0]);
                    acc += 0.5 * (d[0] + d_hi) * (hi - w[0]);
                }
                Ok(acc)
            }
        }
    }

    /// Density `mu(t)`; for `MolchanPower` with `H > 1/2` the origin is a
    /// domain error (the density diverges there).
    pub fn density(&self, t: f64) -> Result<f64> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::Domain(format!("time {t} outside the model domain")));
        }
        match self {
            Self::Lebesgue => Ok(1.0),
            Self::MolchanPower { hurst } => {
                if t == 0.0 && *hurst > 0.5 {
                    return Err(Error::Domain("density is singular at t = 0".into()));
                }
                Ok((2.0 - 2.0 * hurst) * t.powf(1.0 - 2.0 * hurst))
            }
            Self::Tabulated { times, density } => {
                if t < times[0] || t > *times.last().unwrap() {
                    return Err(Error::Domain(format!("time {t} beyond the tabulated range")));
                }
                let k = match times.binary_search_by(|x| x.total_cmp(&t)) {
                    Ok(k) => return Ok(density[k]),
                    Err(k) => k - 1,
                };
                let s = (t - times[k]) / (times[k + 1] - times[k]);
                Ok(density[k] + s * (density[k + 1] - density[k]))
            }
        }
    }

    /// `int_a^b f(s) mu(s) ds` at the default relative tolerance.
    ///
    /// An integrable singularity of `f` at the origin is allowed.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        self.integrate_with_tol(f, a, b, DEFAULT_REL_TOL)
    }

    pub fn integrate_with_tol<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
        if !(a.is_finite() && b.is_finite()) || a < 0.0 {
            return Err(Error::Domain(format!("bad integration bounds [{a}, {b}]")));
        }
        if a > b {
            return Err(Error::Domain(format!("reversed integration bounds [{a}, {b}]")));
        }
        if a == b {
            return Ok(0.0);
        }
        match self {
            // substitute u = s^(2-2H): the measure becomes du, so the density
            // singularity at 0 is removed exactly
            Self::MolchanPower { hurst } => {
                let p = 2.0 - 2.0 * hurst;
                let g = |u: f64| f(u.powf(1.0 / p));
                dispatch(g, a.powf(p), b.powf(p), rel_tol)
            }
            Self::Lebesgue => dispatch(f, a, b, rel_tol),
            Self::Tabulated { times, density } => {
                let times = times.clone();
                let density = density.clone();
                let g = move |s: f64| {
                    let k = match times.binary_search_by(|x| x.total_cmp(&s)) {
                        Ok(k) => return f(s) * density[k],
                        Err(0) => 0,
                        Err(k) if k >= times.len() => times.len() - 2,
                        Err(k) => k - 1,
                    };
                    let w = (s - times[k]) / (times[k + 1] - times[k]);
                    f(s) * (density[k] + w * (density[k + 1] - density[k]))
                };
                dispatch(g, a, b, rel_tol)
            }
        }
    }
}

fn dispatch<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    // grade towards the left endpoint whenever it is (relatively) close to
    // the origin, where drift functions are allowed to be singular
    if a == 0.0 || b / a > 16.0 {
        integrate_left_graded(f, a, b, rel_tol)
    } else {
        integrate_adaptive(f, a, b, rel_tol)
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if !(0.5..1.0).contains(&hurst) {
        return Err(Error::Domain(format!("Hurst index {hurst} outside [1/2, 1)")));
    }
    Ok(())
}
