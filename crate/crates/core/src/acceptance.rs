//! The acceptance suite: numerical and statistical checks of the library's
//! headline claims, each reported as one pass/fail outcome.
//!
//! Every check is deterministic; random workloads come from fixed seeds.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{Matrix4, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::{
    classify_symmetry, log_pdf, mode, trace_indicator, BinghamParams, SymmetryKind,
    DEFAULT_SYMMETRY_TOL,
};
use crate::error::Result;
use crate::io::fmt12;
use crate::loss::check::{check_instance, GradCheck};
use crate::loss::{batch_loss, fit_mle, nll_expression, nll_grad, Execution, OptimizerSettings};
use crate::normalizer::{relative_change, Normalizer, QuadratureConfig};
use crate::oracle::{certified_c, finite_diff, GridSpec, OracleCache, CERTIFY_TOL};
use crate::parametrization::Repr;
use crate::quaternion::{delta_q, Quaternion, UnitQuaternion};
use crate::sampler::{delta_q_summary, sample, sample_uniform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CriterionOutcome {
    fn new(id: u32, name: &str, passed: bool, detail: String) -> Self {
        CriterionOutcome {
            id,
            name: name.into(),
            passed,
            detail,
        }
    }

    /// `[PASS] 1 uniform constant: ...`
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {:>2} {}: {}", self.id, self.name, self.detail)
    }

    fn from_error(id: u32, name: &str, err: crate::error::BinghamError) -> Self {
        CriterionOutcome::new(id, name, false, format!("error: {err}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceReport {
    pub outcomes: Vec<CriterionOutcome>,
}

impl AcceptanceReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for o in &self.outcomes {
            writeln!(s, "{}", o.line()).expect("writing to a String");
        }
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        writeln!(s, "{passed}/{} criteria passed", self.outcomes.len()).expect("writing to a String");
        s
    }
}

const NAMES: [&str; 11] = [
    "uniform constant",
    "oracle agreement",
    "convergence in N",
    "derivative identity",
    "loss gradients",
    "shift and antipodal invariance",
    "sampler moment identity",
    "MLE round trip",
    "uncertainty ordering",
    "symmetry classification",
    "throughput",
];

/// Runs criterion `id` (1 to 11).
pub fn run(id: u32) -> CriterionOutcome {
    let name = NAMES[(id as usize).saturating_sub(1).min(10)];
    let result = match id {
        1 => uniform_constant(),
        2 => oracle_agreement(None),
        3 => convergence_in_n(),
        4 => derivative_identity(),
        5 => loss_gradients(),
        6 => invariances(),
        7 => moment_identity(),
        8 => mle_round_trip(),
        9 => uncertainty_ordering(),
        10 => classification(),
        11 => throughput(),
        _ => panic!("no acceptance criterion {id}"),
    };
    match result {
        Ok((passed, detail)) => CriterionOutcome::new(id, name, passed, detail),
        Err(e) => CriterionOutcome::from_error(id, name, e),
    }
}

/// Criterion 2 using cached oracle values where available.
pub fn run_oracle_with_cache(cache: &OracleCache) -> CriterionOutcome {
    match oracle_agreement(Some(cache)) {
        Ok((passed, detail)) => CriterionOutcome::new(2, NAMES[1], passed, detail),
        Err(e) => CriterionOutcome::from_error(2, NAMES[1], e),
    }
}

pub fn run_all() -> AcceptanceReport {
    AcceptanceReport {
        outcomes: (1..=11).map(run).collect(),
    }
}

type Check = Result<(bool, String)>;

/// Seed of the shared set of 50 concentration vectors.
pub const LAMBDA_SEED: u64 = 20_240_501;

/// Canonical `λ` with `λ₂..λ₄` log-uniform in magnitude on `[10⁻², 10²]`.
pub fn random_lambda<R: Rng>(rng: &mut R) -> Vector4<f64> {
    let mut mags: [f64; 3] = std::array::from_fn(|_| 10f64.powf(rng.random_range(-2.0..2.0)));
    mags.sort_by(f64::total_cmp);
    Vector4::new(0.0, -mags[0], -mags[1], -mags[2])
}

/// The 50 draws used by criteria 2 to 4.
pub fn lambda_draws() -> Vec<Vector4<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(LAMBDA_SEED);
    (0..50).map(|_| random_lambda(&mut rng)).collect()
}

pub fn random_unit<R: Rng>(rng: &mut R) -> UnitQuaternion {
    loop {
        let v = Vector4::from_fn(|_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        if let Ok(q) = UnitQuaternion::from_vector(&v) {
            return q;
        }
    }
}

/// Uniformly random element of SO(4) as `Ω_L(u) Ω_R(v)`.
pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix4<f64> {
    random_unit(rng).quaternion().omega_l() * random_unit(rng).quaternion().omega_r()
}

pub fn random_params<R: Rng>(rng: &mut R) -> BinghamParams {
    BinghamParams::new(random_rotation(rng), random_lambda(rng)).expect("valid random parameters")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn uniform_constant() -> Check {
    let start = Instant::now();
    let out = Normalizer::new(QuadratureConfig::default())?.evaluate(&Vector4::zeros())?;
    let elapsed = start.elapsed().as_secs_f64();
    let err = rel(out.c, 2.0 * PI * PI);
    Ok((
        err <= 1e-8 && elapsed < 0.01,
        format!("C = {}, rel err {} (≤ 1e-8), {} ms (< 10 ms)", fmt12(out.c), fmt12(err), fmt12(elapsed * 1e3)),
    ))
}

fn oracle_agreement(cache: Option<&OracleCache>) -> Check {
    let norm = Normalizer::new(QuadratureConfig::default())?;
    let mut worst = 0.0f64;
    let mut worst_oracle = 0.0f64;
    let mut failures = 0;
    for l in lambda_draws() {
        let oracle = match cache.and_then(|c| c.get(&l)) {
            Some(r) => *r,
            None => certified_c(&l, GridSpec::default(), CERTIFY_TOL)?,
        };
        let c = norm.evaluate(&l)?.c;
        let err = rel(c, oracle.c);
        worst = worst.max(err);
        worst_oracle = worst_oracle.max(oracle.convergence_estimate);
        if err > 1e-6 || oracle.convergence_estimate >= CERTIFY_TOL {
            failures += 1;
        }
    }
    Ok((
        failures == 0,
        format!(
            "max rel err {} (≤ 1e-6), max oracle self-convergence {} (< 1e-8), {failures}/50 failing",
            fmt12(worst),
            fmt12(worst_oracle)
        ),
    ))
}

fn convergence_in_n() -> Check {
    let base = QuadratureConfig::default();
    let (coarse, fine) = (base.with_n(15), base.with_n(400));
    let mut worst = 0.0f64;
    let mut over = 0;
    let mut larger = 0;
    for l in lambda_draws() {
        let change = relative_change(&l, &base, &fine)?;
        let coarse_change = relative_change(&l, &coarse, &base)?;
        worst = worst.max(change);
        if change > 1e-10 {
            over += 1;
        }
        if coarse_change > change {
            larger += 1;
        }
    }
    Ok((
        over == 0 && larger >= 45,
        format!(
            "N=200→400 max rel change {} (≤ 1e-10, {over}/50 over); N=15→200 larger in {larger}/50 (≥ 45)",
            fmt12(worst)
        ),
    ))
}

fn derivative_identity() -> Check {
    let norm = Normalizer::new(QuadratureConfig::default())?;
    let (mut worst_sum, mut worst_fd) = (0.0f64, 0.0f64);
    let (mut sum_fail, mut fd_fail) = (0, 0);
    for l in lambda_draws() {
        let out = norm.evaluate(&l)?;
        let e = rel(out.dc_dlambda.sum(), out.c);
        worst_sum = worst_sum.max(e);
        if e > 1e-8 {
            sum_fail += 1;
        }
        let fd = finite_diff(
            |x| norm.evaluate_raw(&Vector4::from_column_slice(x)).map_or(f64::NAN, |o| o.c),
            l.as_slice(),
            1e-4,
        );
        let e = (0..4).map(|i| rel(fd[i], out.dc_dlambda[i])).fold(0.0, f64::max);
        worst_fd = worst_fd.max(e);
        if !(e <= 1e-5) {
            fd_fail += 1;
        }
    }
    Ok((
        sum_fail == 0 && fd_fail == 0,
        format!(
            "|Σ∂C/∂λ − C|/C max {} (≤ 1e-8, {sum_fail}/50 over); finite differences max rel {} (≤ 1e-5, {fd_fail}/50 over)",
            fmt12(worst_sum),
            fmt12(worst_fd)
        ),
    ))
}

fn loss_gradients() -> Check {
    let cfg = QuadratureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: Option<GradCheck> = None;
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let q = random_unit(&mut rng);
        let c = check_instance(&p, &q, &cfg, 1e-6)?;
        worst = Some(match worst {
            Some(w) => w.merge(&c),
            None => c,
        });
    }
    let w = worst.expect("at least one instance");
    let ok = w.max_error() <= 1e-4 && w.lambda_sum <= 1e-10;
    let theta_detail: Vec<String> = w.theta.iter().map(|(r, e)| format!("{r} {}", fmt12(*e))).collect();
    Ok((
        ok,
        format!(
            "max rel err (≤ 1e-4) λ {} D {} A {} θ [{}]; max |Σ grad_λ| {} (≤ 1e-10)",
            fmt12(w.lambda),
            fmt12(w.d),
            fmt12(w.a),
            theta_detail.join(", "),
            fmt12(w.lambda_sum)
        ),
    ))
}

fn invariances() -> Check {
    let cfg = QuadratureConfig::default();
    let norm = Normalizer::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut shift_pdf, mut shift_nll, mut anti, mut raw_nll) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..100 {
        let p = random_params(&mut rng);
        let q = random_unit(&mut rng);
        let c = rng.random_range(-3.0..2.0);
        let shifted = BinghamParams::new(*p.d(), p.lambda().add_scalar(c))?;

        let lp = log_pdf(&p, &q, norm.evaluate(p.lambda())?.c)?;
        let lp_shift = log_pdf(&shifted, &q, norm.evaluate(shifted.lambda())?.c)?;
        shift_pdf = shift_pdf.max(rel(lp_shift.exp(), lp.exp()));
        let v = nll_grad(&p, &q, &cfg)?.value;
        shift_nll = shift_nll.max((nll_grad(&shifted, &q, &cfg)?.value - v).abs());

        let neg = q.negate();
        let lp_neg = log_pdf(&p, &neg, norm.evaluate(p.lambda())?.c)?;
        let v_neg = nll_grad(&p, &neg, &cfg)?.value;
        anti = anti.max((lp_neg - lp).abs()).max((v_neg - v).abs());

        // The same identity through the uncanonicalized expression, which
        // leans on C(λ + c) = e^c C(λ) holding inside the quadrature.
        let raw = nll_expression(p.d(), &p.lambda().add_scalar(c), &q, &cfg)?;
        raw_nll = raw_nll.max((raw - v).abs());
    }
    Ok((
        shift_pdf <= 1e-8 && shift_nll <= 1e-8 && anti <= 1e-14,
        format!(
            "shift: pdf rel {} NLL abs {} (≤ 1e-8); antipodal max |Δ| {}; uncanonicalized NLL shift {} (informational)",
            fmt12(shift_pdf),
            fmt12(shift_nll),
            fmt12(anti),
            fmt12(raw_nll)
        ),
    ))
}

/// Orientation and concentrations shared by criteria 7 and 8.
pub fn reference_distribution() -> BinghamParams {
    let u = Quaternion::new(0.8, 0.3, -0.4, 0.33).normalize().expect("nonzero");
    BinghamParams::new(u.quaternion().omega_l(), Vector4::new(0.0, -5.0, -20.0, -40.0))
        .expect("valid reference parameters")
}

fn moment_identity() -> Check {
    let p = reference_distribution();
    let n = 100_000;
    let batch = sample(&p, n, 7)?;
    let expect = Normalizer::new(QuadratureConfig::default())?
        .evaluate(p.lambda())?
        .log_gradient();
    let mut worst_z = 0.0f64;
    for i in 0..4 {
        let vals: Vec<f64> = batch
            .quaternions
            .iter()
            .map(|q| (p.d().column(i).dot(&q.to_vector())).powi(2))
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let z = (mean - expect[i]).abs() / (var / n as f64).sqrt();
        worst_z = worst_z.max(z);
    }
    Ok((
        worst_z <= 4.0 && batch.acceptance_rate >= 0.1,
        format!(
            "max |z| {} (≤ 4), acceptance rate {} (≥ 0.1)",
            fmt12(worst_z),
            fmt12(batch.acceptance_rate)
        ),
    ))
}

fn mle_round_trip() -> Check {
    let truth = reference_distribution();
    let batch = sample(&truth, 10_000, 8)?;
    let cfg = QuadratureConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for repr in Repr::ALL {
        let start = Instant::now();
        let fit = fit_mle(&batch.quaternions, repr, &cfg, &OptimizerSettings::default())?;
        let secs = start.elapsed().as_secs_f64();
        let angle = delta_q(&mode(&fit.params), &mode(&truth)).to_degrees();
        let lambda_err = (1..4)
            .map(|i| rel(fit.params.lambda()[i], truth.lambda()[i]))
            .fold(0.0, f64::max);
        let pass = angle <= 5.0 && lambda_err <= 0.1 && secs < 300.0;
        ok &= pass;
        parts.push(format!(
            "{repr} {}° λ {} {}s",
            short(angle),
            short(lambda_err),
            short(secs)
        ));
    }
    Ok((ok, format!("mode (≤ 5°), λ rel (≤ 0.1), time (< 300 s): {}", parts.join("; "))))
}

fn short(x: f64) -> String {
    format!("{x:.4}")
}

/// Ranks starting at 1, ties averaged.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn uncertainty_ordering() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut traces, mut means) = (Vec::new(), Vec::new());
    for k in 0..20 {
        // concentration scale log-spaced over [0.5, 500], random shape
        let scale = 0.5 * 1000f64.powf(k as f64 / 19.0);
        let mut shape: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..1.0));
        shape.sort_by(f64::total_cmp);
        let lambda = Vector4::new(0.0, -scale * shape[0], -scale * shape[1], -scale * shape[2]);
        let p = BinghamParams::new(random_rotation(&mut rng), lambda)?;
        let batch = sample(&p, 10_000, 100 + k)?;
        traces.push(trace_indicator(&p));
        means.push(delta_q_summary(&batch.quaternions, &mode(&p)).mean);
    }
    let rho = spearman(&traces, &means);
    Ok((rho >= 0.9, format!("Spearman(trace, mean ΔQ) = {} (≥ 0.9) over 20 distributions", fmt12(rho))))
}

fn classification() -> Check {
    let cases = [
        ([0.0, -5.0, -10.0, -12.0], SymmetryKind::Bipolar),
        ([0.0, -1.0, -2.0, -3.0], SymmetryKind::Circular),
        ([0.0, -1.0, -2.0, -10.0], SymmetryKind::Spherical),
        ([0.0, 0.0, 0.0, 0.0], SymmetryKind::Uniform),
    ];
    let mut wrong = Vec::new();
    let mut checked = 0;
    for (l, expect) in cases {
        for combo in 0..27 {
            let mut v = Vector4::from(l);
            let mut c = combo;
            for i in 1..4 {
                v[i] += [0.0, 1e-9, -1e-9][c % 3];
                c /= 3;
            }
            let p = BinghamParams::with_lambda(v)?;
            let got = classify_symmetry(&p, DEFAULT_SYMMETRY_TOL).kind;
            checked += 1;
            if got != expect {
                wrong.push(format!("{:?} → {got}", v.as_slice()));
            }
        }
    }
    Ok((
        wrong.is_empty(),
        if wrong.is_empty() {
            format!("4 classes × 27 perturbations, {checked} inputs correct")
        } else {
            format!("misclassified: {}", wrong.join("; "))
        },
    ))
}

fn throughput() -> Check {
    let cfg = QuadratureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let items: Vec<(BinghamParams, UnitQuaternion)> =
        (0..10_000).map(|_| (random_params(&mut rng), random_unit(&mut rng))).collect();
    let start = Instant::now();
    let reports = batch_loss(&items, &cfg, Execution::Sequential)?;
    let secs = start.elapsed().as_secs_f64();
    let finite = reports.iter().all(|r| r.value.is_finite());
    Ok((
        secs <= 2.0 && finite,
        format!("10000 loss+gradient evaluations in {} s (≤ 2 s, one thread)", fmt12(secs)),
    ))
}

/// Monte Carlo estimate of `∫ B(q) dq` over S³ (ideally 1) and its
/// standard error, from `n` uniform points.
pub fn normalization_check(p: &BinghamParams, n: usize, seed: u64) -> Result<(f64, f64)> {
    let c = Normalizer::new(QuadratureConfig::default())?.evaluate(p.lambda())?.c;
    let vals: Vec<f64> = sample_uniform(n, seed)
        .iter()
        .map(|q| (p.exponent(q)).exp() / c * 2.0 * PI * PI)
        .collect();
    let nf = n as f64;
    let mean = vals.iter().sum::<f64>() / nf;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    Ok((mean, (var / nf).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn draws_are_canonical_and_in_range() {
        let draws = lambda_draws();
        assert_eq!(draws.len(), 50);
        for l in draws {
            assert_eq!(l[0], 0.0);
            assert!(l[1] >= l[2] && l[2] >= l[3] && l[3] >= -100.0 && l[1] <= -0.01);
        }
    }
}
