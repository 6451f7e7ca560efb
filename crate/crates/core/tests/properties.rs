use bingham_kit::distribution::log_pdf;
use bingham_kit::loss::nll_grad;
use bingham_kit::normalizer::normalizing_constant;
use bingham_kit::parametrization::{encode, realize};
use bingham_kit::quaternion::delta_q;
use bingham_kit::{BinghamParams, QuadratureConfig, Quaternion, Repr, UnitQuaternion};
use nalgebra::Vector4;
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = UnitQuaternion> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("away from zero", |c| c.iter().map(|v| v * v).sum::<f64>() > 1e-2)
        .prop_map(|c| Quaternion::from(c).normalize().unwrap())
}

fn params() -> impl Strategy<Value = BinghamParams> {
    (unit(), unit(), prop::array::uniform3(-40.0f64..-0.05)).prop_map(|(u, v, l)| {
        let d = u.quaternion().omega_l() * v.quaternion().omega_r();
        BinghamParams::new(d, Vector4::new(0.0, l[0], l[1], l[2])).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_q_is_a_sign_invariant_metric(a in unit(), b in unit(), c in unit()) {
        let ab = delta_q(&a, &b);
        prop_assert!((0.0..=std::f64::consts::PI + 1e-12).contains(&ab));
        prop_assert_eq!(ab, delta_q(&b, &a));
        prop_assert_eq!(delta_q(&a, &a.negate()), 0.0);
        prop_assert!((delta_q(&a.negate(), &b) - ab).abs() < 1e-12);
        prop_assert!(delta_q(&a, &c) <= ab + delta_q(&b, &c) + 1e-9);
    }

    #[test]
    fn pdf_is_antipodally_symmetric(p in params(), q in unit()) {
        let c = normalizing_constant(p.lambda(), &QuadratureConfig::default()).unwrap().c;
        prop_assert_eq!(log_pdf(&p, &q, c).unwrap(), log_pdf(&p, &q.negate(), c).unwrap());
    }

    #[test]
    fn nll_ignores_lambda_shift(p in params(), q in unit(), shift in -50.0f64..50.0) {
        let cfg = QuadratureConfig::default();
        let moved = BinghamParams::new(*p.d(), p.lambda().add_scalar(shift)).unwrap();
        let a = nll_grad(&p, &q, &cfg).unwrap();
        let b = nll_grad(&moved, &q, &cfg).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-8 * a.value.abs().max(1.0));
    }

    #[test]
    fn lambda_gradient_sums_to_zero(p in params(), q in unit()) {
        let r = nll_grad(&p, &q, &QuadratureConfig::default()).unwrap();
        let scale = r.grad_lambda.iter().map(|g| g.abs()).fold(1.0, f64::max);
        prop_assert!(r.grad_lambda.sum().abs() <= 1e-6 * scale);
    }

    #[test]
    fn encode_then_realize_recovers_the_matrix(p in params()) {
        for repr in [Repr::P10, Repr::P6p3, Repr::P6p4] {
            if repr == Repr::P6p3 && (p.lambda()[1] - p.lambda()[2]).abs() < 1e-3 {
                continue;
            }
            let back = realize(&encode(&p, repr).unwrap()).unwrap();
            let err = (back.a_matrix() - p.a_matrix()).amax();
            prop_assert!(err <= 1e-8 * p.lambda().amax().max(1.0), "{} {}", repr, err);
        }
    }
}
