//! The singular Molchan kernel, the forward drift transform and its
//! Abel-type inverse.
//!
//! Both operators are weakly singular convolutions. After rescaling the
//! integration variable onto `[0, 1]`, the endpoint powers become exact
//! Gauss-Jacobi weights, so fixed-order rules reach spectral accuracy where
//! uniform panels would stall at the singular endpoints.

use statrs::function::gamma::gamma;

use crate::basis::BasisFamily;
use crate::error::{Error, Result};
use crate::estimator::FitResult;
use crate::quad::GaussJacobi;

/// Normalization constants attached to a Hurst index.
#[derive(Debug, Clone, Copy)]
pub struct HurstConstants {
    pub hurst: f64,
    /// Kernel normalization; equals 1 at `H = 1/2`.
    pub kernel_scale: f64,
    /// Scale of the inverse operator, defined for `H > 1/2` only.
    pub inverse_scale: Option<f64>,
}

impl HurstConstants {
    pub fn new(hurst: f64) -> Result<Self> {
        if !(0.5..1.0).contains(&hurst) {
            return Err(Error::Domain(format!("Hurst index {hurst} outside [1/2, 1)")));
        }
        let kernel_scale = (gamma(3.0 - 2.0 * hurst)
            / (2.0 * hurst * gamma(1.5 - hurst).powi(3) * gamma(hurst + 0.5)))
        .sqrt();
        let inverse_scale = if hurst > 0.5 {
            Some((2.0 - 2.0 * hurst) / (kernel_scale * gamma(1.5 - hurst) * gamma(hurst - 0.5)))
        } else {
            None
        };
        Ok(Self { hurst, kernel_scale, inverse_scale })
    }

    /// `c_H s^(1/2-H) (t-s)^(1/2-H)` on `0 < s < t`, zero elsewhere.
    pub fn kernel(&self, t: f64, s: f64) -> f64 {
        if s <= 0.0 || s >= t {
            return 0.0;
        }
        let e = 0.5 - self.hurst;
        self.kernel_scale * s.powf(e) * (t - s).powf(e)
    }
}

/// Kernel of the Molchan martingale representation; the indicator makes the
/// function total (out-of-range points return zero, never an error).
pub fn molchan_kernel(t: f64, s: f64, hurst: f64) -> Result<f64> {
    Ok(HurstConstants::new(hurst)?.kernel(t, s))
}

/// Function sampled on a strictly increasing grid, evaluated by linear
/// interpolation (linear extrapolation past the edges).
#[derive(Debug, Clone)]
pub struct FunctionOnGrid {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl FunctionOnGrid {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::Dimension("function grid needs matching arrays of length >= 2".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("function grid times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite function value".into()));
        }
        Ok(Self { times, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(times: Vec<f64>, f: F) -> Result<Self> {
        let values = times.iter().map(|t| f(*t)).collect();
        Self::new(times, values)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(k) => return self.values[k],
            Err(0) => 0,
            Err(k) if k >= self.times.len() => self.times.len() - 2,
            Err(k) => k - 1,
        };
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }
}

/// Discretization of the forward/inverse operators.
#[derive(Debug, Clone, Copy)]
pub struct TransformGrid {
    /// Gauss-Jacobi order for the singular convolutions.
    pub quad_order: usize,
    /// Number of uniform output/differentiation nodes on `(0, T]`.
    pub refine: usize,
}

impl Default for TransformGrid {
    fn default() -> Self {
        Self { quad_order: 64, refine: 2048 }
    }
}

/// Default evaluation grid for inverted drifts: the leading fraction of the
/// horizon is dropped because the `t^(H-1/2)` prefactor makes values there
/// noise-dominated.
pub fn default_output_times(horizon: f64) -> Vec<f64> {
    let count = 512;
    let lo = horizon / 50.0;
    (0..count)
        .map(|k| lo + (horizon - lo) * k as f64 / (count - 1) as f64)
        .collect()
}

/// Forward transform of a continuously differentiable function.
///
/// Writing the kernel convolution as `j(Q)(t) = t^(2-2H) g(t)` with
/// `g(t) = c_H int_0^1 x^(1/2-H) (1-x)^(1/2-H) Q(tx) dx`, the transform is
/// `g(t) + t g'(t) / (2-2H)`: the singular prefactor is differentiated in
/// closed form and only the smooth factor `g` by central differences, which
/// keeps the result accurate near the origin. `g` is evaluated by
/// Gauss-Jacobi quadrature. At `H = 1/2` the transform is the identity.
pub fn forward_transform(q: &FunctionOnGrid, hurst: f64, opts: &TransformGrid) -> Result<FunctionOnGrid> {
    if hurst == 0.5 {
        return Ok(q.clone());
    }
    forward_transform_fn(&|t| q.eval(t), q.horizon(), hurst, opts)
}

/// [`forward_transform`] for a directly evaluable function.
pub fn forward_transform_fn(
    q: &dyn Fn(f64) -> f64,
    horizon: f64,
    hurst: f64,
    opts: &TransformGrid,
) -> Result<FunctionOnGrid> {
    let constants = HurstConstants::new(hurst)?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    let refine = opts.refine.max(8);
    let h = horizon / refine as f64;
    if hurst == 0.5 {
        let times: Vec<f64> = (1..=refine).map(|k| k as f64 * h).collect();
        return FunctionOnGrid::from_fn(times, q);
    }
    let e = 0.5 - hurst;
    let rule = GaussJacobi::new(opts.quad_order, e, e)?;
    let g: Vec<f64> = (0..=refine)
        .map(|k| {
            let t = k as f64 * h;
            constants.kernel_scale * rule.integrate(|x| q(t * x))
        })
        .collect();
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("forward transform produced non-finite values".into()));
    }
    let scale = 1.0 / (2.0 - 2.0 * hurst);
    let mut times = Vec::with_capacity(refine);
    let mut values = Vec::with_capacity(refine);
    for k in 1..=refine {
        let t = k as f64 * h;
        let dg = if k < refine {
            (g[k + 1] - g[k - 1]) / (2.0 * h)
        } else {
            (3.0 * g[k] - 4.0 * g[k - 1] + g[k - 2]) / (2.0 * h)
        };
        times.push(t);
        values.push(g[k] + t * dg * scale);
    }
    FunctionOnGrid::new(times, values)
}

/// Abel-type inverse of the forward transform:
/// `cbar_H t^(H-1/2) int_0^t (t-s)^(H-3/2) s^(1-2H) iota(s) ds`, evaluated
/// per output point by Gauss-Jacobi quadrature with the exact endpoint
/// exponents. The input is interpolated linearly between its grid nodes.
///
/// `H = 1/2` is refused: the transform is the identity there and no inverse
/// integral is defined.
pub fn inverse_transform(
    iota: &FunctionOnGrid,
    hurst: f64,
    quad_order: usize,
    output_times: &[f64],
) -> Result<FunctionOnGrid> {
    let constants = HurstConstants::new(hurst)?;
    let Some(inverse_scale) = constants.inverse_scale else {
        return Err(Error::Unsupported(
            "the inverse integral is undefined at H = 1/2; the transform is the identity there".into(),
        ));
    };
    if output_times.is_empty() || output_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("output times must be nonempty and strictly increasing".into()));
    }
    if output_times[0] <= 0.0 {
        return Err(Error::Domain("output times must be positive".into()));
    }
    // s = t x: the prefactor t^(H-1/2) cancels against the kernel scaling,
    // leaving int_0^1 (1-x)^(H-3/2) x^(1-2H) iota(tx) dx
    let rule = GaussJacobi::new(quad_order, hurst - 1.5, 1.0 - 2.0 * hurst)?;
    let values: Vec<f64> = output_times
        .iter()
        .map(|t| inverse_scale * rule.integrate(|x| iota.eval(t * x)))
        .collect();
    FunctionOnGrid::new(output_times.to_vec(), values)
}

/// Drift recovery from a fitted projection estimator: invert the transform
/// on the fitted basis expansion. At `H = 1/2` the expansion itself is
/// already the drift and is sampled directly.
pub fn estimate_q(
    fit: &FitResult,
    family: &BasisFamily,
    hurst: f64,
    opts: &TransformGrid,
    output_times: &[f64],
) -> Result<FunctionOnGrid> {
    if !(0.5..1.0).contains(&hurst) {
        return Err(Error::Domain(format!("Hurst index {hurst} outside [1/2, 1)")));
    }
    if hurst == 0.5 {
        return FunctionOnGrid::from_fn(output_times.to_vec(), |t| fit.eval(family, t));
    }
    let horizon = family.horizon();
    let refine = opts.refine.max(8);
    let times: Vec<f64> = (0..=refine)
        .map(|k| k as f64 * horizon / refine as f64)
        .collect();
    let sampled = FunctionOnGrid::from_fn(times, |t| fit.eval(family, t))?;
    inverse_transform(&sampled, hurst, opts.quad_order, output_times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::beta::beta;

    #[test]
    fn constants_at_half_and_frozen_values() {
        let half = HurstConstants::new(0.5).unwrap();
        assert_relative_eq!(half.kernel_scale, 1.0, max_relative = 1e-14);
        assert!(half.inverse_scale.is_none());
        for (h, c, cbar) in [
            (0.6, 0.8176418668574047, 0.09624082943443596),
            (0.75, 0.5951694156335779, 0.18908824372273252),
            (0.9, 0.4172270556235258, 0.14511556111999798),
        ] {
            let k = HurstConstants::new(h).unwrap();
            assert_relative_eq!(k.kernel_scale, c, max_relative = 1e-12);
            assert_relative_eq!(k.inverse_scale.unwrap(), cbar, max_relative = 1e-12);
        }
        assert!(HurstConstants::new(0.4).is_err());
        assert!(HurstConstants::new(1.0).is_err());
    }

    #[test]
    fn gamma_identity_across_hurst_range() {
        // c_H B(3/2-H, 3/2-H) cbar_H B(2-2H, H-1/2) = 1
        let mut h = 0.55;
        while h < 0.96 {
            let k = HurstConstants::new(h).unwrap();
            let product = k.kernel_scale
                * beta(1.5 - h, 1.5 - h)
                * k.inverse_scale.unwrap()
                * beta(2.0 - 2.0 * h, h - 0.5);
            assert!((product - 1.0).abs() < 1e-10, "H = {h}: {product}");
            h += 0.05;
        }
    }

    #[test]
    fn kernel_values() {
        // flat kernel in the Brownian case
        for s in [0.1, 0.4, 0.9] {
            assert_relative_eq!(molchan_kernel(1.0, s, 0.5).unwrap(), 1.0, max_relative = 1e-14);
        }
        assert_eq!(molchan_kernel(1.0, 1.0, 0.75).unwrap(), 0.0);
        assert_eq!(molchan_kernel(1.0, 0.0, 0.75).unwrap(), 0.0);
        assert_eq!(molchan_kernel(0.5, 0.7, 0.75).unwrap(), 0.0);
        assert_relative_eq!(
            molchan_kernel(1.0, 0.5, 0.75).unwrap(),
            0.8416966594986754, // c_H 2^(1/2)
            max_relative = 1e-12
        );
        assert!(molchan_kernel(1.0, 0.5, 0.2).is_err());
    }

    #[test]
    fn function_grid_interpolates_and_extrapolates() {
        let f = FunctionOnGrid::new(vec![0.0, 1.0, 2.0], vec![0.0, 2.0, 2.0]).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(1.0), 2.0);
        assert_eq!(f.eval(-0.5), -1.0);
        assert_eq!(f.eval(2.5), 2.0);
        assert!(FunctionOnGrid::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(FunctionOnGrid::new(vec![0.0, 1.0], vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn forward_of_constants_is_constant() {
        let opts = TransformGrid { quad_order: 64, refine: 256 };
        for (h, expect) in [
            (0.6, 1.0025086399420412),
            (0.75, 1.0084706331879068),
            (0.9, 1.0077469522222082),
        ] {
            let out = forward_transform_fn(&|_| 5.0, 1.0, h, &opts).unwrap();
            for v in out.values() {
                assert_relative_eq!(*v, 5.0 * expect, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn forward_of_identity_is_linear() {
        let opts = TransformGrid { quad_order: 64, refine: 512 };
        let h = 0.7;
        let out = forward_transform_fn(&|t| t, 1.0, h, &opts).unwrap();
        let coeff = 1.342399549571615; // c_H B(5/2-H, 3/2-H) (3-2H)/(2-2H)
        for (t, v) in out.times().iter().zip(out.values()) {
            assert_relative_eq!(*v, coeff * t, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn forward_at_half_is_identity() {
        let q = FunctionOnGrid::from_fn((0..=64).map(|k| k as f64 / 64.0).collect(), |t| t * t).unwrap();
        let out = forward_transform(&q, 0.5, &TransformGrid::default()).unwrap();
        assert_eq!(out.times(), q.times());
        assert_eq!(out.values(), q.values());
    }

    #[test]
    fn forward_is_continuous_at_half() {
        let opts = TransformGrid { quad_order: 64, refine: 512 };
        let q = |t: f64| 1.0 + t + 0.5 * t * t;
        let out = forward_transform_fn(&q, 1.0, 0.5 + 1e-6, &opts).unwrap();
        let sup = out
            .times()
            .iter()
            .zip(out.values())
            .map(|(t, v)| (v - q(*t)).abs())
            .fold(0.0f64, f64::max);
        assert!(sup < 1e-3, "sup deviation {sup}");
    }

    #[test]
    fn inverse_of_constants() {
        let times: Vec<f64> = (0..=256).map(|k| k as f64 / 256.0).collect();
        let iota = FunctionOnGrid::from_fn(times, |_| 3.0).unwrap();
        for (h, unit) in [(0.6, 0.9974976375842644), (0.9, 0.9923126016852492)] {
            let out = inverse_transform(&iota, h, 64, &default_output_times(1.0)).unwrap();
            for v in out.values() {
                assert_relative_eq!(*v, 3.0 * unit, max_relative = 1e-10);
            }
            // consistency with the closed-form pairing of the two scales
            let k = HurstConstants::new(h).unwrap();
            assert_relative_eq!(
                out.values()[0],
                3.0 / (k.kernel_scale * beta(1.5 - h, 1.5 - h)),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn inverse_of_zero_is_zero() {
        let times: Vec<f64> = (0..=32).map(|k| k as f64 / 32.0).collect();
        let iota = FunctionOnGrid::from_fn(times, |_| 0.0).unwrap();
        let out = inverse_transform(&iota, 0.75, 64, &default_output_times(1.0)).unwrap();
        assert!(out.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inverse_refuses_half() {
        let times: Vec<f64> = (0..=32).map(|k| k as f64 / 32.0).collect();
        let iota = FunctionOnGrid::from_fn(times, |_| 1.0).unwrap();
        assert!(matches!(
            inverse_transform(&iota, 0.5, 64, &default_output_times(1.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn inverse_is_linear() {
        let times: Vec<f64> = (0..=128).map(|k| k as f64 / 128.0).collect();
        let f1 = FunctionOnGrid::from_fn(times.clone(), |t| 1.0 + t).unwrap();
        let f2 = FunctionOnGrid::from_fn(times.clone(), |t| (3.0 * t).sin()).unwrap();
        let combo = FunctionOnGrid::from_fn(times, |t| 2.5 * (1.0 + t) - 1.25 * (3.0 * t).sin()).unwrap();
        let out_times = default_output_times(1.0);
        let a = inverse_transform(&f1, 0.8, 48, &out_times).unwrap();
        let b = inverse_transform(&f2, 0.8, 48, &out_times).unwrap();
        let c = inverse_transform(&combo, 0.8, 48, &out_times).unwrap();
        for ((va, vb), vc) in a.values().iter().zip(b.values()).zip(c.values()) {
            assert_relative_eq!(2.5 * va - 1.25 * vb, *vc, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn round_trip_on_polynomials() {
        let opts = TransformGrid::default();
        let out_times = default_output_times(1.0);
        for h in [0.6, 0.75, 0.9] {
            for (q, name) in [
                (Box::new(|_: f64| 1.0) as Box<dyn Fn(f64) -> f64>, "1"),
                (Box::new(|t: f64| t), "t"),
                (Box::new(|t: f64| t * t), "t^2"),
            ] {
                let fwd = forward_transform_fn(&*q, 1.0, h, &opts).unwrap();
                let back = inverse_transform(&fwd, h, opts.quad_order, &out_times).unwrap();
                let sup = back
                    .times()
                    .iter()
                    .zip(back.values())
                    .map(|(t, v)| (v - q(*t)).abs())
                    .fold(0.0f64, f64::max);
                assert!(sup <= 1e-3, "H = {h}, Q = {name}: sup error {sup}");
            }
        }
    }

    #[test]
    fn round_trip_error_shrinks_with_order() {
        let out_times = default_output_times(1.0);
        let q = |t: f64| t * t;
        let h = 0.75;
        let mut last = f64::MAX;
        for order in [16, 32, 64] {
            let opts = TransformGrid { quad_order: order, refine: 2048 };
            let fwd = forward_transform_fn(&q, 1.0, h, &opts).unwrap();
            let back = inverse_transform(&fwd, h, order, &out_times).unwrap();
            let sup = back
                .times()
                .iter()
                .zip(back.values())
                .map(|(t, v)| (v - q(*t)).abs())
                .fold(0.0f64, f64::max);
            assert!(sup <= last * 1.05, "order {order}: {sup} vs {last}");
            last = sup;
        }
    }
}
