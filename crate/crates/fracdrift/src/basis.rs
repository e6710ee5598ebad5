//! Nested orthonormal function families on `[0, T]`.
//!
//! Two families are provided: the trigonometric system (orthonormal in
//! `L2([0,T], dt)`, with closed-form derivatives) and a density-weighted
//! variant starting from `mu(t)^(-1/2)` times the trigonometric shapes,
//! orthonormalized in `L2(dt)` by a modified Gram-Schmidt recursion.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::qv::QuadVarModel;

/// `phi_1 = sqrt(1/T)`, `phi_2j = sqrt(2/T) cos(2 pi j t / T)`,
/// `phi_2j+1 = sqrt(2/T) sin(2 pi j t / T)`; indices are 1-based.
pub fn trig_eval(j: usize, t: f64, horizon: f64) -> f64 {
    debug_assert!(j >= 1);
    if j == 1 {
        return (1.0 / horizon).sqrt();
    }
    let k = (j / 2) as f64;
    let arg = 2.0 * PI * k * t / horizon;
    let amp = (2.0 / horizon).sqrt();
    if j % 2 == 0 {
        amp * arg.cos()
    } else {
        amp * arg.sin()
    }
}

/// Derivative of [`trig_eval`] in `t`.
pub fn trig_deriv(j: usize, t: f64, horizon: f64) -> f64 {
    debug_assert!(j >= 1);
    if j == 1 {
        return 0.0;
    }
    let k = (j / 2) as f64;
    let omega = 2.0 * PI * k / horizon;
    let arg = omega * t;
    let amp = (2.0 / horizon).sqrt();
    if j % 2 == 0 {
        -amp * omega * arg.sin()
    } else {
        amp * omega * arg.cos()
    }
}

/// Half-range cosine system: `phi_1 = sqrt(1/T)`,
/// `phi_j = sqrt(2/T) cos(pi (j-1) t / T)` for `j >= 2`; orthonormal in
/// `L2([0,T], dt)`.
///
/// Unlike the full Fourier system its even periodic extension is continuous,
/// so expansions of non-periodic targets converge without endpoint
/// oscillation; benchmark experiments use it for that reason.
pub fn cosine_eval(j: usize, t: f64, horizon: f64) -> f64 {
    debug_assert!(j >= 1);
    if j == 1 {
        return (1.0 / horizon).sqrt();
    }
    let k = (j - 1) as f64;
    (2.0 / horizon).sqrt() * (PI * k * t / horizon).cos()
}

/// Derivative of [`cosine_eval`] in `t`.
pub fn cosine_deriv(j: usize, t: f64, horizon: f64) -> f64 {
    debug_assert!(j >= 1);
    if j == 1 {
        return 0.0;
    }
    let k = (j - 1) as f64;
    let omega = PI * k / horizon;
    -(2.0 / horizon).sqrt() * omega * (omega * t).sin()
}

/// A nested orthonormal family `phi_1, ..., phi_{max_dim}` on `[0, T]`.
#[derive(Debug, Clone)]
pub enum BasisFamily {
    Trigonometric {
        horizon: f64,
        max_dim: usize,
    },
    Cosine {
        horizon: f64,
        max_dim: usize,
    },
    /// Weighted family: `phi_j = sum_k coeff[j][k] mu(t)^(-1/2) v_k(t)` with
    /// `v_k` the trigonometric shapes; `coeff` is lower triangular, so the
    /// spans are nested by construction.
    MuWeighted {
        horizon: f64,
        max_dim: usize,
        qv: QuadVarModel,
        coeff: Vec<Vec<f64>>,
    },
}

const BASIS_CONDITION_LIMIT: f64 = 1e12;

impl BasisFamily {
    pub fn trigonometric(horizon: f64, max_dim: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || max_dim == 0 {
            return Err(Error::Domain("basis needs a positive horizon and dimension".into()));
        }
        Ok(Self::Trigonometric { horizon, max_dim })
    }

    pub fn cosine(horizon: f64, max_dim: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || max_dim == 0 {
            return Err(Error::Domain("basis needs a positive horizon and dimension".into()));
        }
        Ok(Self::Cosine { horizon, max_dim })
    }

    /// Gram-Schmidt orthonormalization (in `L2(dt)`) of the family
    /// `mu^(-1/2) v_j`. For the Lebesgue density (or `H = 1/2`) the weight is
    /// 1 and the trigonometric family is returned unchanged.
    pub fn mu_weighted(qv: QuadVarModel, horizon: f64, max_dim: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) || max_dim == 0 {
            return Err(Error::Domain("basis needs a positive horizon and dimension".into()));
        }
        let unweighted = match &qv {
            QuadVarModel::Lebesgue => true,
            QuadVarModel::MolchanPower { hurst } => *hurst == 0.5,
            QuadVarModel::Tabulated { .. } => false,
        };
        if unweighted {
            return Self::trigonometric(horizon, max_dim);
        }

        // L2(dt) Gramian of the raw weighted shapes, written as an integral
        // against d<M> so the substitution quadrature absorbs the
        // singularity of mu at the origin.
        let m = max_dim;
        let mut gram = nalgebra::DMatrix::<f64>::zeros(m, m);
        for j in 0..m {
            for k in j..m {
                let qv_ref = &qv;
                let entry = qv.integrate(
                    |s| {
                        let mu = qv_ref.density(s).unwrap_or(f64::INFINITY);
                        trig_eval(j + 1, s, horizon) * trig_eval(k + 1, s, horizon) / (mu * mu)
                    },
                    0.0,
                    horizon,
                )?;
                gram[(j, k)] = entry;
                gram[(k, j)] = entry;
            }
        }
        let eig = gram.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min_ev = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        let condition = if min_ev > 0.0 { max_ev / min_ev } else { f64::INFINITY };
        if !(condition.is_finite() && condition <= BASIS_CONDITION_LIMIT) {
            return Err(Error::IllConditionedBasis { dim: m, condition });
        }

        // modified Gram-Schmidt with one re-orthogonalization pass, in the
        // inner product defined by the Gramian
        let inner = |a: &[f64], b: &[f64]| -> f64 {
            let mut acc = 0.0;
            for (j, aj) in a.iter().enumerate() {
                if *aj == 0.0 {
                    continue;
                }
                for (k, bk) in b.iter().enumerate() {
                    acc += aj * gram[(j, k)] * bk;
                }
            }
            acc
        };
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
        for j in 0..m {
            let mut q = vec![0.0; m];
            q[j] = 1.0;
            for _pass in 0..2 {
                for prev in rows.iter() {
                    let r = inner(prev, &q);
                    for (qk, pk) in q.iter_mut().zip(prev) {
                        *qk -= r * pk;
                    }
                }
            }
            let norm_sq = inner(&q, &q);
            if !(norm_sq.is_finite() && norm_sq > 0.0) {
                return Err(Error::IllConditionedBasis { dim: j + 1, condition });
            }
            let inv = 1.0 / norm_sq.sqrt();
            for qk in q.iter_mut() {
                *qk *= inv;
            }
            q.truncate(j + 1);
            rows.push(q);
        }
        Ok(Self::MuWeighted { horizon, max_dim, qv, coeff: rows })
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Self::Trigonometric { horizon, .. }
            | Self::Cosine { horizon, .. }
            | Self::MuWeighted { horizon, .. } => *horizon,
        }
    }

    pub fn max_dim(&self) -> usize {
        match self {
            Self::Trigonometric { max_dim, .. }
            | Self::Cosine { max_dim, .. }
            | Self::MuWeighted { max_dim, .. } => *max_dim,
        }
    }

    /// Evaluate `phi_j(t)`, `1 <= j <= max_dim`.
    pub fn eval(&self, j: usize, t: f64) -> f64 {
        debug_assert!(j >= 1 && j <= self.max_dim());
        match self {
            Self::Trigonometric { horizon, .. } => trig_eval(j, t, *horizon),
            Self::Cosine { horizon, .. } => cosine_eval(j, t, *horizon),
            Self::MuWeighted { horizon, qv, coeff, .. } => {
                let w = weight_inv_sqrt(qv, t);
                if w == 0.0 {
                    return 0.0;
                }
                let mut acc = 0.0;
                for (k, c) in coeff[j - 1].iter().enumerate() {
                    acc += c * trig_eval(k + 1, t, *horizon);
                }
                acc * w
            }
        }
    }

    /// Evaluate `phi_1(t), ..., phi_m(t)` into `out`.
    pub fn eval_into(&self, m: usize, t: f64, out: &mut [f64]) {
        debug_assert!(m <= self.max_dim() && out.len() >= m);
        match self {
            Self::Trigonometric { horizon, .. } => {
                for (j, slot) in out.iter_mut().take(m).enumerate() {
                    *slot = trig_eval(j + 1, t, *horizon);
                }
            }
            Self::Cosine { horizon, .. } => {
                for (j, slot) in out.iter_mut().take(m).enumerate() {
                    *slot = cosine_eval(j + 1, t, *horizon);
                }
            }
            _ => {
                for (j, slot) in out.iter_mut().take(m).enumerate() {
                    *slot = self.eval(j + 1, t);
                }
            }
        }
    }

    /// Derivative `phi_j'(t)`; not provided for the weighted family.
    pub fn deriv(&self, j: usize, t: f64) -> Result<f64> {
        match self {
            Self::Trigonometric { horizon, .. } => Ok(trig_deriv(j, t, *horizon)),
            Self::Cosine { horizon, .. } => Ok(cosine_deriv(j, t, *horizon)),
            Self::MuWeighted { .. } => Err(Error::Unsupported(
                "derivatives are not provided for the weighted basis".into(),
            )),
        }
    }

    /// `R(m) = sup_t sum_{j<=m} phi_j'(t)^2`.
    ///
    /// For the trigonometric family the sine/cosine pairs sum to a constant,
    /// so `R(m) = (8 pi^2 / T^3) sum_{j=1}^{floor(m/2)} j^2` in closed form.
    pub fn sup_deriv_sq(&self, m: usize) -> Result<f64> {
        if m == 0 || m > self.max_dim() {
            return Err(Error::Dimension(format!("dimension {m} outside 1..={}", self.max_dim())));
        }
        match self {
            Self::Trigonometric { horizon, .. } => {
                let p = m / 2;
                let sum_sq = (p * (p + 1) * (2 * p + 1) / 6) as f64;
                Ok(8.0 * PI * PI / horizon.powi(3) * sum_sq)
            }
            // the cosine terms do not pair into a constant, so no closed form
            Self::Cosine { .. } | Self::MuWeighted { .. } => Err(Error::Unsupported(
                "the derivative-energy closed form is only provided for the full Fourier family".into(),
            )),
        }
    }

    /// `L2(dt)` expansion coefficients of `f` on `phi_1..phi_m`, by
    /// quadrature.
    pub fn expand<F: Fn(f64) -> f64>(&self, f: F, m: usize) -> Result<Vec<f64>> {
        if m == 0 || m > self.max_dim() {
            return Err(Error::Dimension(format!("dimension {m} outside 1..={}", self.max_dim())));
        }
        let horizon = self.horizon();
        (1..=m)
            .map(|j| {
                crate::quad::integrate_left_graded(
                    |t| f(t) * self.eval(j, t),
                    0.0,
                    horizon,
                    1e-12,
                )
            })
            .collect()
    }
}

fn weight_inv_sqrt(qv: &QuadVarModel, t: f64) -> f64 {
    match qv {
        QuadVarModel::Lebesgue => 1.0,
        QuadVarModel::MolchanPower { hurst } => {
            if t <= 0.0 {
                // limit of t^((2H-1)/2) as t -> 0+ for H > 1/2
                return 0.0;
            }
            let mu = (2.0 - 2.0 * hurst) * t.powf(1.0 - 2.0 * hurst);
            1.0 / mu.sqrt()
        }
        QuadVarModel::Tabulated { .. } => match qv.density(t) {
            Ok(mu) if mu > 0.0 => 1.0 / mu.sqrt(),
            _ => 0.0,
        },
    }
}
