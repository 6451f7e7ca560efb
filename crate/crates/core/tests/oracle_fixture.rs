//! Frozen oracle values in `fixtures/oracle_cache.json`, regenerated with
//! `bingham-kit oracle-cache`.

use std::path::Path;

use bingham_kit::acceptance::lambda_draws;
use bingham_kit::normalizer::normalizing_constant;
use bingham_kit::oracle::{brute_force_c, OracleCache, CERTIFY_TOL};
use bingham_kit::QuadratureConfig;
use nalgebra::Vector4;

fn cache() -> OracleCache {
    OracleCache::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/oracle_cache.json")).unwrap()
}

#[test]
fn reference_concentration_is_certified() {
    let cache = cache();
    let l = Vector4::new(0.0, -1.0, -2.0, -3.0);
    let r = cache.get(&l).expect("fixture holds (0,-1,-2,-3)");
    assert!(r.convergence_estimate < CERTIFY_TOL);
    let again = brute_force_c(&l, &r.grid).unwrap();
    assert_eq!(again.c, r.c);
    let quad = normalizing_constant(&l, &QuadratureConfig::default()).unwrap().c;
    assert!((quad - r.c).abs() / r.c < 1e-6);
}

#[test]
fn permuted_reference_matches() {
    let cache = cache();
    let a = cache.get(&Vector4::new(0.0, -1.0, -2.0, -3.0)).unwrap();
    let b = cache.get(&Vector4::new(-3.0, -1.0, 0.0, -2.0)).unwrap();
    assert!((a.c - b.c).abs() / a.c < 1e-8);
}

#[test]
fn acceptance_draws_are_cached_and_agree() {
    let cache = cache();
    let cfg = QuadratureConfig::default();
    for l in lambda_draws() {
        let r = cache.get(&l).expect("every acceptance draw is cached");
        assert!(r.convergence_estimate < CERTIFY_TOL, "{l:?}");
        let quad = normalizing_constant(&l, &cfg).unwrap().c;
        assert!((quad - r.c).abs() / r.c <= 1e-6, "{l:?}");
    }
    let outcome = bingham_kit::acceptance::run_oracle_with_cache(&cache);
    assert!(outcome.passed, "{}", outcome.line());
}
