//! Property tests of the quadrature, kernel and inverse-operator invariants.

use fracdrift::basis::trig_eval;
use fracdrift::fracops::{self, FunctionOnGrid, HurstConstants};
use fracdrift::QuadVarModel;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quadrature_is_additive_in_the_interval(
        hurst in 0.5f64..0.95,
        split in 1e-6f64..0.999,
    ) {
        let qv = QuadVarModel::molchan(hurst).unwrap();
        let f = |s: f64| 1.0 + 3.0 * s;
        let whole = qv.integrate(f, 0.0, 1.0).unwrap();
        let left = qv.integrate(f, 0.0, split).unwrap();
        let right = qv.integrate(f, split, 1.0).unwrap();
        prop_assert!(((left + right) - whole).abs() <= 1e-12 * whole.abs());
    }

    #[test]
    fn kernel_is_zero_outside_the_open_interval(
        hurst in 0.5f64..0.95,
        t in 0.01f64..2.0,
        s in -1.0f64..3.0,
    ) {
        let k = fracops::molchan_kernel(t, s, hurst).unwrap();
        if s <= 0.0 || s >= t {
            prop_assert_eq!(k, 0.0);
        } else {
            prop_assert!(k > 0.0 && k.is_finite());
        }
    }

    #[test]
    fn inverse_operator_is_linear(
        hurst in 0.55f64..0.95,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let times: Vec<f64> = (0..=64).map(|k| k as f64 / 64.0).collect();
        let f1 = FunctionOnGrid::from_fn(times.clone(), |t| 1.0 + t).unwrap();
        let f2 = FunctionOnGrid::from_fn(times.clone(), |t| (2.0 * t).cos()).unwrap();
        let combo = FunctionOnGrid::from_fn(times, |t| a * (1.0 + t) + b * (2.0 * t).cos()).unwrap();
        let out: Vec<f64> = (1..=8).map(|k| k as f64 / 8.0).collect();
        let ia = fracops::inverse_transform(&f1, hurst, 32, &out).unwrap();
        let ib = fracops::inverse_transform(&f2, hurst, 32, &out).unwrap();
        let ic = fracops::inverse_transform(&combo, hurst, 32, &out).unwrap();
        for ((va, vb), vc) in ia.values().iter().zip(ib.values()).zip(ic.values()) {
            let lin = a * va + b * vb;
            prop_assert!((lin - vc).abs() <= 1e-12 * lin.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_scale_is_positive_and_continuous_in_hurst(hurst in 0.5f64..0.95) {
        let k = HurstConstants::new(hurst).unwrap();
        prop_assert!(k.kernel_scale > 0.0 && k.kernel_scale <= 1.0 + 1e-12);
        let k2 = HurstConstants::new((hurst + 1e-6).min(0.9999)).unwrap();
        prop_assert!((k.kernel_scale - k2.kernel_scale).abs() < 1e-4);
    }

    #[test]
    fn trig_family_is_bounded_by_its_amplitude(j in 1usize..40, t in 0.0f64..1.0) {
        let v = trig_eval(j, t, 1.0);
        prop_assert!(v.abs() <= 2f64.sqrt() + 1e-12);
    }
}
