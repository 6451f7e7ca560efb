use std::f64::consts::PI;

use bingham_kit::acceptance::normalization_check;
use bingham_kit::normalizer::normalizing_constant;
use bingham_kit::quaternion::delta_q;
use bingham_kit::sampler::{delta_q_summary, sample, sample_uniform};
use bingham_kit::{BinghamParams, QuadratureConfig, Quaternion, UnitQuaternion};
use nalgebra::Vector4;

fn rotated(lambda: [f64; 4]) -> BinghamParams {
    let u = Quaternion::new(0.2, -0.7, 0.1, 0.4);
    let v = Quaternion::new(0.9, 0.1, -0.3, 0.2);
    let u = u.normalize().unwrap();
    let v = v.normalize().unwrap();
    let d = u.quaternion().omega_l() * v.quaternion().omega_r();
    BinghamParams::new(d, Vector4::from(lambda)).unwrap()
}

#[test]
fn second_moments_match_log_gradient() {
    let p = rotated([0.0, -2.0, -8.0, -30.0]);
    let n = 100_000;
    let batch = sample(&p, n, 17).unwrap();
    let expected = normalizing_constant(p.lambda(), &QuadratureConfig::default())
        .unwrap()
        .log_gradient();
    for i in 0..4 {
        let col = p.d().column(i);
        let vals: Vec<f64> = batch
            .quaternions
            .iter()
            .map(|q| col.dot(&q.to_vector()).powi(2))
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - expected[i]).abs() <= 4.0 * se, "axis {i}: {mean} vs {}", expected[i]);
    }
}

#[test]
fn density_integrates_to_one() {
    for l in [[0.0, -1.0, -2.0, -3.0], [0.0, -0.5, -4.0, -9.0], [0.0, 0.0, -1.0, -1.0]] {
        let (mass, se) = normalization_check(&rotated(l), 200_000, 5).unwrap();
        assert!((mass - 1.0).abs() <= 4.0 * se, "{l:?}: {mass} ± {se}");
    }
}

/// Mean rotation angle of a uniformly random rotation, from a 1-D Simpson
/// rule on the angle density (2/π) sin²(θ/2) over [0, π].
fn uniform_mean_angle() -> f64 {
    let n = 2000;
    let h = PI / n as f64;
    (0..=n)
        .map(|k| {
            let t = k as f64 * h;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            w * t * 2.0 / PI * (t / 2.0).sin().powi(2)
        })
        .sum::<f64>()
        * h
        / 3.0
}

#[test]
fn uniform_delta_q_mean() {
    let reference = uniform_mean_angle();
    assert!((reference - (PI / 2.0 + 2.0 / PI)).abs() < 1e-10);
    let qs = sample_uniform(200_000, 8);
    let stats = delta_q_summary(&qs, &UnitQuaternion::IDENTITY);
    assert!((stats.mean - reference).abs() <= 3.0 * stats.std_error);
    let uniform_params = sample(&BinghamParams::uniform(), 50_000, 8).unwrap();
    let stats = delta_q_summary(&uniform_params.quaternions, &UnitQuaternion::IDENTITY);
    assert!((stats.mean - reference).abs() <= 4.0 * stats.std_error);
}

#[test]
fn batches_are_reproducible_and_canonical() {
    let p = rotated([0.0, -5.0, -20.0, -40.0]);
    let a = sample(&p, 5000, 99).unwrap();
    let b = sample(&p, 5000, 99).unwrap();
    assert_eq!(a.quaternions, b.quaternions);
    let c = sample(&p, 5000, 100).unwrap();
    assert_ne!(a.quaternions, c.quaternions);
    for q in &a.quaternions {
        assert!(q.to_array()[0] >= 0.0);
        assert!((q.to_vector().norm() - 1.0).abs() < 1e-12);
    }
    let m = bingham_kit::distribution::mode(&p);
    let near = delta_q_summary(&a.quaternions, &m).mean;
    assert!(near < 0.5 * uniform_mean_angle(), "{near}");
    assert!(a.quaternions.iter().all(|q| delta_q(q, &m) <= std::f64::consts::PI));
}
