mod common;

use common::{dense, max_abs_diff, ridge_by_descent, ridge_channel_side, ridge_instance, rng};
use dara::pfa::ridge_reconstruct;

#[test]
fn closed_form_matches_descent_minimizer() {
    let mut r = rng(100);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (pool, query, lambda) = ridge_instance(&mut r);
        let closed = dense(&ridge_reconstruct(&pool, &query, lambda).unwrap());
        let gd = ridge_by_descent(&dense(&pool), &dense(&query), lambda);
        worst = worst.max(max_abs_diff(&closed, &gd));
    }
    assert!(worst <= 1e-6, "max abs difference {worst}");
}

#[test]
fn gram_side_matches_channel_side() {
    let mut r = rng(101);
    for _ in 0..50 {
        let (pool, query, lambda) = ridge_instance(&mut r);
        let a = dense(&ridge_reconstruct(&pool, &query, lambda).unwrap());
        let b = ridge_channel_side(&dense(&pool), &dense(&query), lambda);
        assert!(max_abs_diff(&a, &b) <= 1e-10);
    }
}
