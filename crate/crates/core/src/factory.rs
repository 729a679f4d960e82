//! Synthetic instance generator.
//!
//! All randomness comes from one `ChaCha8Rng` seeded with `cfg.seed`, consumed
//! in a fixed order: means, covariances, polyhedron, objective, then the
//! decision samples behind b. The generated instance is therefore a pure
//! function of the configuration under either execution policy.

use std::f64::consts::TAU;

use ndarray::{array, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gmm::{GaussianComponent, GmmInstance, Polyhedron};

/// Relative floor on sampled eigenvalues, as a fraction of ς.
pub const EIGEN_FLOOR: f64 = 1e-6;

const WEIGHTS_5: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.35];
const WEIGHTS_10: [f64; 10] = [0.001, 0.009, 0.02, 0.05, 0.08, 0.09, 0.1, 0.15, 0.2, 0.3];
const WEIGHTS_15: [f64; 15] = [
    0.001, 0.005, 0.009, 0.01, 0.01, 0.015, 0.02, 0.05, 0.08, 0.09, 0.1, 0.12, 0.13, 0.17, 0.19,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    #[default]
    Equal,
    /// Fixed unequal tables, available for K ∈ {5, 10, 15}.
    Unequal,
}

impl WeightMode {
    pub fn weights(self, k: usize) -> Result<Vec<f64>> {
        match self {
            WeightMode::Equal if k > 0 => Ok(vec![1.0 / k as f64; k]),
            WeightMode::Equal => Err(Error::Config("K must be >= 1".into())),
            WeightMode::Unequal => match k {
                5 => Ok(WEIGHTS_5.to_vec()),
                10 => Ok(WEIGHTS_10.to_vec()),
                15 => Ok(WEIGHTS_15.to_vec()),
                _ => Err(Error::Config(format!("no unequal weight table for K = {k} (only 5, 10, 15)"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// ϱ, the mean-control parameter.
    pub varrho: f64,
    /// ς, the variance-control parameter.
    pub varsigma: f64,
    pub theta: f64,
    pub weight_mode: WeightMode,
    pub seed: u64,
    pub box_half_width: f64,
    /// `None` means n/10 for n ≤ 500 and n/20 above.
    pub ineq_rows: Option<usize>,
    pub b_samples: usize,
    pub b_stddev_multiplier: f64,
}

impl GenConfig {
    pub fn new(n: usize, k: usize, theta: f64, seed: u64) -> Self {
        Self {
            n,
            k,
            varrho: 2.0,
            varsigma: 2.0,
            theta,
            weight_mode: WeightMode::Equal,
            seed,
            box_half_width: 20.0,
            ineq_rows: None,
            b_samples: 1000,
            b_stddev_multiplier: 1.0,
        }
    }

    pub fn rows(&self) -> usize {
        self.ineq_rows.unwrap_or(default_ineq_rows(self.n))
    }

    pub fn check(&self) -> Result<()> {
        let positive = [self.varrho, self.varsigma, self.box_half_width, self.b_stddev_multiplier];
        if self.n == 0 || self.k == 0 || self.b_samples == 0 {
            return Err(Error::Config("n, K and b_samples must be positive".into()));
        }
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("varrho, varsigma, box half-width and multiplier must be positive".into()));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1), got {}", self.theta)));
        }
        self.weight_mode.weights(self.k).map(|_| ())
    }
}

pub fn default_ineq_rows(n: usize) -> usize {
    if n <= 500 {
        n / 10
    } else {
        n / 20
    }
}

/// Base-2 radical inverse of `index` (index 0 maps to 0).
pub fn van_der_corput(index: u64) -> f64 {
    let mut x = index;
    let mut v = 0.0;
    let mut scale = 0.5;
    while x > 0 {
        if x & 1 == 1 {
            v += scale;
        }
        x >>= 1;
        scale *= 0.5;
    }
    v
}

/// One plane rotation acting on coordinates (i, j) by angle with (cos, sin).
#[derive(Debug, Clone, Copy)]
struct Givens {
    i: usize,
    j: usize,
    c: f64,
    s: f64,
}

fn givens_sequence<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<Givens> {
    if n < 2 {
        return Vec::new();
    }
    (0..2 * n)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let angle = rng.random::<f64>() * TAU;
            Givens { i, j, c: angle.cos(), s: angle.sin() }
        })
        .collect()
}

/// Q ← Q·G.
fn rotate_columns(q: &mut Array2<f64>, g: Givens) {
    for mut row in q.rows_mut() {
        let (a, b) = (row[g.i], row[g.j]);
        row[g.i] = g.c * a - g.s * b;
        row[g.j] = g.s * a + g.c * b;
    }
}

/// A ← Gᵀ·A·G for symmetric A, keeping A exactly symmetric.
fn congruence(a: &mut Array2<f64>, g: Givens) {
    rotate_columns(a, g);
    let n = a.nrows();
    for k in 0..n {
        let (x, y) = (a[[g.i, k]], a[[g.j, k]]);
        a[[g.i, k]] = g.c * x - g.s * y;
        a[[g.j, k]] = g.s * x + g.c * y;
    }
    for k in 0..n {
        a[[k, g.i]] = a[[g.i, k]];
        a[[k, g.j]] = a[[g.j, k]];
    }
}

/// Product of 2n random Givens rotations (identity for n < 2).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
    let mut q = Array2::eye(n);
    for g in givens_sequence(n, rng) {
        rotate_columns(&mut q, g);
    }
    q
}

#[derive(Debug, Clone)]
pub struct RandomCovariance {
    pub sigma: Array2<f64>,
    pub eigenvalues: Array1<f64>,
    pub q: Array2<f64>,
}

/// Σ = QᵀDQ with eigenvalues uniform on (ες, ς·ℓ] and Q a random rotation
/// product. Σ is assembled by applying each rotation as a congruence, O(n²).
pub fn random_covariance<R: Rng + ?Sized>(n: usize, varsigma: f64, ell: f64, rng: &mut R) -> Result<RandomCovariance> {
    let lo = EIGEN_FLOOR * varsigma;
    let hi = varsigma * ell;
    if !(varsigma > 0.0 && ell <= 1.0 && hi > lo) {
        return Err(Error::Precondition(format!("need varsigma > 0 and ell in ({EIGEN_FLOOR}, 1], got {varsigma}, {ell}")));
    }
    // hi - u·(hi - lo) with u ∈ [0, 1) lands in (lo, hi].
    let eigenvalues: Array1<f64> = (0..n).map(|_| hi - rng.random::<f64>() * (hi - lo)).collect();
    let rotations = givens_sequence(n, rng);
    let mut sigma = Array2::from_diag(&eigenvalues);
    let mut q = Array2::eye(n);
    for &g in &rotations {
        congruence(&mut sigma, g);
        rotate_columns(&mut q, g);
    }
    Ok(RandomCovariance { sigma, eigenvalues, q })
}

/// Means inside [0, ϱ√n·ln n]^n: per coordinate two sorted uniforms give an
/// interval, then the mean entry is uniform on it.
pub fn random_means<R: Rng + ?Sized>(n: usize, k: usize, varrho: f64, rng: &mut R) -> Vec<Array1<f64>> {
    let top = varrho * (n as f64).sqrt() * (n as f64).ln();
    (0..k)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let (u, v) = (rng.random::<f64>() * top, rng.random::<f64>() * top);
                    let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
                    lo + rng.random::<f64>() * (hi - lo)
                })
                .collect()
        })
        .collect()
}

/// A ~ U[0,1], d ~ U[n/4, 3n/4], no equality rows, box ±`box_half_width`.
pub fn random_polyhedron<R: Rng + ?Sized>(n: usize, rows: usize, box_half_width: f64, rng: &mut R) -> Polyhedron {
    let a = Array2::from_shape_simple_fn((rows, n), || rng.random::<f64>());
    let (lo, hi) = (n as f64 / 4.0, 3.0 * n as f64 / 4.0);
    let d = Array1::from_shape_simple_fn(rows, || lo + rng.random::<f64>() * (hi - lo));
    Polyhedron {
        a,
        d,
        ..Polyhedron::boxed(Array1::from_elem(n, -box_half_width), Array1::from_elem(n, box_half_width))
    }
}

/// Mean over box samples x and components k of μ_kᵀx + m·√(xᵀΣ_k x).
pub fn compute_rhs<R: Rng + ?Sized>(
    components: &[GaussianComponent],
    region: &Polyhedron,
    b_samples: usize,
    multiplier: f64,
    rng: &mut R,
) -> Result<f64> {
    compute_rhs_with(components, region, b_samples, multiplier, rng, Exec::Sequential)
}

pub fn compute_rhs_with<R: Rng + ?Sized>(
    components: &[GaussianComponent],
    region: &Polyhedron,
    b_samples: usize,
    multiplier: f64,
    rng: &mut R,
    exec: Exec,
) -> Result<f64> {
    if b_samples == 0 || components.is_empty() {
        return Err(Error::Precondition("need at least one sample and one component".into()));
    }
    let n = region.box_lo.len();
    let mut xs = Array2::<f64>::zeros((b_samples, n));
    for mut row in xs.rows_mut() {
        for (i, v) in row.iter_mut().enumerate() {
            let (lo, hi) = (region.box_lo[i], region.box_hi[i]);
            *v = lo + rng.random::<f64>() * (hi - lo);
        }
    }
    // Per-component totals, summed in component order afterwards.
    let totals = exec.map_slice(components, |comp| -> Result<f64> {
        let sx = xs.dot(&comp.covariance);
        let quad = (&sx * &xs).sum_axis(Axis(1));
        let lin = xs.dot(&comp.mean);
        if quad.iter().any(|&q| q < 0.0) {
            return Err(Error::Invariant("negative quadratic form in rhs sampling".into()));
        }
        Ok(lin.iter().zip(&quad).map(|(l, q)| l + multiplier * q.sqrt()).sum())
    });
    let mut sum = 0.0;
    for t in totals {
        sum += t?;
    }
    Ok(sum / (b_samples * components.len()) as f64)
}

pub fn generate_instance(cfg: &GenConfig) -> Result<GmmInstance> {
    generate_instance_with(cfg, Exec::default())
}

pub fn generate_instance_with(cfg: &GenConfig, exec: Exec) -> Result<GmmInstance> {
    cfg.check()?;
    let weights = cfg.weight_mode.weights(cfg.k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n;

    let means = random_means(n, cfg.k, cfg.varrho, &mut rng);
    let mut covs = Vec::with_capacity(cfg.k);
    for k in 1..=cfg.k {
        covs.push(random_covariance(n, cfg.varsigma, van_der_corput(k as u64), &mut rng)?.sigma);
    }
    // Factorizations do not touch the generator, so they may run in parallel.
    let parts: Vec<_> = weights.into_iter().zip(means).zip(covs).collect();
    let components = exec.map_slice(&parts, |((w, mu), cov)| GaussianComponent::new(*w, mu.clone(), cov.clone()));
    drop(parts);

    let region = random_polyhedron(n, cfg.rows(), cfg.box_half_width, &mut rng);
    let c = Array1::from_shape_simple_fn(n, || rng.random_range(-1.0..=1.0));
    let b = compute_rhs_with(&components, &region, cfg.b_samples, cfg.b_stddev_multiplier, &mut rng, exec)?;
    GmmInstance { n, c, b, theta: cfg.theta, components, region }.validated()
}

/// Two-component planar instance whose chance probability is visibly
/// nonconvex: w = (0.5, 0.5), shared mean (0.875, 1.784), Σ_k = Q_k D_k Q_kᵀ
/// with Q_k = [[1, −e_k], [e_k, 1]], e = (0.08, 0.02), D₁ = diag(1.15, 0.65),
/// D₂ = diag(1.47, 0.33), b = 6.7, box [−15, 15]², c = (−1, −1), θ = 0.9.
pub fn planar_example() -> GmmInstance {
    let rot = |e: f64| array![[1.0, -e], [e, 1.0]];
    let cov = |q: Array2<f64>, d: [f64; 2]| {
        let dm = Array2::from_diag(&Array1::from(d.to_vec()));
        q.dot(&dm).dot(&q.t())
    };
    let mean = array![0.875, 1.784];
    GmmInstance {
        n: 2,
        c: array![-1.0, -1.0],
        b: 6.7,
        theta: 0.9,
        components: vec![
            GaussianComponent::new(0.5, mean.clone(), cov(rot(0.08), [1.15, 0.65])),
            GaussianComponent::new(0.5, mean, cov(rot(0.02), [1.47, 0.33])),
        ],
        region: Polyhedron::boxed(array![-15.0, -15.0], array![15.0, 15.0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::validate_instance;
    use crate::json::instance_to_json;
    use crate::linalg::frobenius;

    #[test]
    fn radical_inverse() {
        assert_eq!(van_der_corput(1), 0.5);
        assert_eq!(van_der_corput(2), 0.25);
        assert_eq!(van_der_corput(3), 0.75);
        let mut bins = [0usize; 16];
        for i in 1..=16 {
            bins[(van_der_corput(i) * 16.0) as usize] += 1;
        }
        assert!(bins.iter().all(|&c| c == 1));
    }

    #[test]
    fn orthogonal_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 10, 100] {
            let q = random_orthogonal(n, &mut rng);
            let resid = frobenius((q.t().dot(&q) - Array2::<f64>::eye(n)).view());
            assert!(resid <= 1e-10, "n = {n}: {resid}");
            let v = Array1::from_shape_fn(n, |i| (i as f64 + 1.0).sin());
            let (a, b) = (q.dot(&v).dot(&q.dot(&v)).sqrt(), v.dot(&v).sqrt());
            assert!((a - b).abs() <= 1e-12 * b);
        }
        let q = random_orthogonal(2, &mut rng);
        let det = q[[0, 0]] * q[[1, 1]] - q[[0, 1]] * q[[1, 0]];
        assert!((det - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, ell) in [(2, 0.5), (10, 0.25), (60, 1.0)] {
            let rc = random_covariance(n, 5.0, ell, &mut rng).unwrap();
            assert!(rc.eigenvalues.iter().all(|&v| v > 5e-6 && v <= 5.0 * ell));
            let d = Array2::from_diag(&rc.eigenvalues);
            let recon = rc.q.t().dot(&d).dot(&rc.q);
            let norm = frobenius(rc.sigma.view());
            assert!(frobenius((&recon - &rc.sigma).view()) <= 1e-8 * norm);
            let tr = rc.eigenvalues.sum();
            assert!((rc.sigma.diag().sum() - tr).abs() <= 1e-8 * tr);
            assert!(crate::linalg::cholesky(rc.sigma.view()).is_some());
        }
        assert!(random_covariance(3, 1.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn means_in_box() {
        let n = 30;
        let top = |r: f64| r * (n as f64).sqrt() * (n as f64).ln();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_means(n, 4, 2.0, &mut rng);
        assert!(m.iter().flatten().all(|&v| (0.0..=top(2.0)).contains(&v)));
        for i in 0..4 {
            for j in i + 1..4 {
                assert!((&m[i] - &m[j]).iter().any(|v| *v != 0.0));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m10 = random_means(n, 4, 20.0, &mut rng);
        for (a, b) in m.iter().flatten().zip(m10.iter().flatten()) {
            assert!((b - 10.0 * a).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rhs_single_sample() {
        // One component with μ = 0, Σ = I and a degenerate box pinning x.
        let comp = GaussianComponent::new(1.0, Array1::zeros(2), Array2::eye(2));
        let region = Polyhedron::boxed(array![3.0, 4.0], array![3.0, 4.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = compute_rhs(&[comp], &region, 1, 1.0, &mut rng).unwrap();
        assert!((b - 5.0).abs() < 1e-15);
    }

    #[test]
    fn polyhedron_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_polyhedron(100, default_ineq_rows(100), 20.0, &mut rng);
        assert_eq!(p.ineq_rows(), 10);
        assert_eq!(p.eq_rows(), 0);
        assert!(p.a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(p.d.iter().all(|v| (25.0..=75.0).contains(v)));
        assert_eq!(default_ineq_rows(1000), 50);
        assert_eq!(default_ineq_rows(500), 50);
    }

    #[test]
    fn weight_tables() {
        let w = WeightMode::Unequal.weights(10).unwrap();
        assert_eq!(w, vec![0.001, 0.009, 0.02, 0.05, 0.08, 0.09, 0.1, 0.15, 0.2, 0.3]);
        for k in [5, 10, 15] {
            let s: f64 = WeightMode::Unequal.weights(k).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let mut cfg = GenConfig::new(10, 7, 0.95, 1);
        cfg.weight_mode = WeightMode::Unequal;
        assert!(matches!(generate_instance(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_and_valid() {
        let mut cfg = GenConfig::new(20, 5, 0.95, 42);
        cfg.weight_mode = WeightMode::Unequal;
        let a = generate_instance_with(&cfg, Exec::Sequential).unwrap();
        let b = generate_instance_with(&cfg, Exec::Parallel).unwrap();
        assert!(validate_instance(&a).is_empty());
        assert_eq!(instance_to_json(&a).unwrap(), instance_to_json(&b).unwrap());
        assert_eq!(a.region.ineq_rows(), 2);
        assert!(a.c.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn rhs_nonnegative_for_nonnegative_samples() {
        // With μ ≥ 0 and samples drawn from a nonnegative box every term of
        // the average is nonnegative. (Over the symmetric default box xᵀμ has
        // mean zero and b can come out negative.)
        for seed in 0..100 {
            let inst = generate_instance(&GenConfig::new(20, 5, 0.95, seed)).unwrap();
            assert!(inst.components.iter().all(|c| c.mean.iter().all(|&v| v >= 0.0)));
            let region = Polyhedron::boxed(Array1::zeros(20), Array1::from_elem(20, 20.0));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = compute_rhs(&inst.components, &region, 1000, 1.0, &mut rng).unwrap();
            assert!(b >= 0.0, "seed {seed}: b = {b}");
        }
    }
}
