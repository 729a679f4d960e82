//! Instances and evaluation points shared by the gradient and Monte-Carlo
//! checks.

#![allow(dead_code)]

use gmmcc_core::factory::{generate_instance, GenConfig};
use gmmcc_core::gmm::{chance_gradient, chance_probability, GmmInstance};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn instance(n: usize, k: usize, seed: u64) -> GmmInstance {
    generate_instance(&GenConfig::new(n, k, 0.95, seed)).expect("generator config is valid")
}

/// A random direction u scaled so the first component's margin equals a
/// target drawn from [-2.5, 2.5]; keeps p(x) and ∇p(x) away from 0 and 1
/// where finite differences and binomial errors lose all meaning.
pub fn moderate_point(inst: &GmmInstance, rng: &mut ChaCha8Rng) -> Array1<f64> {
    assert!(inst.b > 0.0, "needs b > 0, got {}", inst.b);
    let comp = &inst.components[0];
    loop {
        let u: Array1<f64> = (0..inst.n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target = rng.random_range(-2.5..2.5);
        let (m, s) = (comp.mean.dot(&u), comp.std_dev(u.view()).unwrap());
        let denom = m + target * s;
        if denom > 1e-9 {
            return u * (inst.b / denom);
        }
    }
}

pub fn points(inst: &GmmInstance, count: usize, seed: u64) -> Vec<Array1<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| moderate_point(inst, &mut rng)).collect()
}

/// Central differences with step 1e-5·max(1, |x_i|).
pub fn central_difference(inst: &GmmInstance, x: &Array1<f64>) -> Array1<f64> {
    let p = |v: &Array1<f64>| chance_probability(inst, v.view()).unwrap();
    (0..x.len())
        .map(|i| {
            let h = 1e-5 * x[i].abs().max(1.0);
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[i] += h;
            dn[i] -= h;
            (p(&up) - p(&dn)) / (up[i] - dn[i])
        })
        .collect()
}

/// Worst per-coordinate relative error of the analytic gradient. The
/// denominator is floored at 1e-6·‖g‖∞ so coordinates that are numerically
/// zero do not turn rounding noise into a relative error.
pub fn gradient_error(inst: &GmmInstance, x: &Array1<f64>) -> f64 {
    let g = chance_gradient(inst, x.view()).unwrap();
    let fd = central_difference(inst, x);
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    g.iter()
        .zip(&fd)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-6 * scale))
        .fold(0.0, f64::max)
}
