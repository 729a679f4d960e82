//! Problem data, the exact mixture chance probability and its gradient.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{asymmetry, cholesky};
use crate::special::{cdf, pdf};

/// Below this norm a decision vector is treated as the origin for gradients.
pub const ZERO_NORM: f64 = 1e-12;

pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Array1<f64>,
    pub covariance: Array2<f64>,
    factor: Option<Array2<f64>>,
}

impl GaussianComponent {
    /// Factorizes the covariance eagerly. A covariance that is not positive
    /// definite is kept (so it can be diagnosed) but every evaluation on the
    /// component fails.
    pub fn new(weight: f64, mean: Array1<f64>, covariance: Array2<f64>) -> Self {
        let factor = if asymmetry(covariance.view()) <= symmetry_tol(&covariance) {
            cholesky(covariance.view())
        } else {
            None
        };
        Self { weight, mean, covariance, factor }
    }

    /// Lower-triangular L with L·Lᵀ = Σ.
    pub fn factor(&self) -> Option<&Array2<f64>> {
        self.factor.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn factor_or_err(&self) -> Result<&Array2<f64>> {
        self.factor
            .as_ref()
            .ok_or_else(|| Error::Invariant("covariance is not positive definite".into()))
    }

    /// √(xᵀΣx) as ‖Lᵀx‖.
    pub fn std_dev(&self, x: ArrayView1<f64>) -> Result<f64> {
        let l = self.factor_or_err()?;
        Ok(l.t().dot(&x).dot(&l.t().dot(&x)).sqrt())
    }

    /// The standardized margin (b - μᵀx)/√(xᵀΣx), or `None` at x = 0.
    pub fn margin(&self, x: ArrayView1<f64>, b: f64) -> Result<Option<f64>> {
        if x.iter().all(|&v| v == 0.0) {
            return Ok(None);
        }
        let s = self.std_dev(x)?;
        if !(s > 0.0) {
            return Err(Error::Invariant(format!("x'Sigma x = {} for x != 0", s * s)));
        }
        Ok(Some((b - self.mean.dot(&x)) / s))
    }
}

fn symmetry_tol(a: &Array2<f64>) -> f64 {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    1e-12 * (1.0 + scale)
}

/// X = {x : A x ≥ d, H x = h, box_lo ≤ x ≤ box_hi}.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub a: Array2<f64>,
    pub d: Array1<f64>,
    pub h_mat: Array2<f64>,
    pub h: Array1<f64>,
    pub box_lo: Array1<f64>,
    pub box_hi: Array1<f64>,
}

impl Polyhedron {
    /// Box-only region.
    pub fn boxed(box_lo: Array1<f64>, box_hi: Array1<f64>) -> Self {
        let n = box_lo.len();
        Self {
            a: Array2::zeros((0, n)),
            d: Array1::zeros(0),
            h_mat: Array2::zeros((0, n)),
            h: Array1::zeros(0),
            box_lo,
            box_hi,
        }
    }

    pub fn ineq_rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn eq_rows(&self) -> usize {
        self.h_mat.nrows()
    }

    /// Largest violation over the box, inequality and equality rows
    /// (zero when feasible).
    pub fn max_violation(&self, x: ArrayView1<f64>) -> f64 {
        let mut worst = 0.0f64;
        for ((&v, &lo), &hi) in x.iter().zip(&self.box_lo).zip(&self.box_hi) {
            worst = worst.max(lo - v).max(v - hi);
        }
        for (row, &rhs) in self.a.rows().into_iter().zip(&self.d) {
            worst = worst.max(rhs - row.dot(&x));
        }
        for (row, &rhs) in self.h_mat.rows().into_iter().zip(&self.h) {
            worst = worst.max((row.dot(&x) - rhs).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmInstance {
    pub n: usize,
    pub c: Array1<f64>,
    pub b: f64,
    pub theta: f64,
    pub components: Vec<GaussianComponent>,
    pub region: Polyhedron,
}

impl GmmInstance {
    /// K
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    pub fn objective(&self, x: ArrayView1<f64>) -> f64 {
        self.c.dot(&x)
    }

    pub fn check_dim(&self, x: ArrayView1<f64>) -> Result<()> {
        if x.len() == self.n {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.n, got: x.len() })
        }
    }

    /// Runs [`validate_instance`] and turns any finding into an error.
    pub fn validated(self) -> Result<Self> {
        let diags = validate_instance(&self);
        if diags.is_empty() {
            Ok(self)
        } else {
            Err(Error::Validation(diags))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    EmptyInstance,
    Dimension,
    NonFinite,
    Theta,
    WeightSimplex,
    NegativeWeight,
    Asymmetric,
    NotPositiveDefinite,
    BoxOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Offending component index, when the finding is per-component.
    pub component: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.component {
            Some(k) => write!(f, "component {k}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

pub fn validate_instance(inst: &GmmInstance) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut push = |kind, component, message: String| out.push(Diagnostic { kind, component, message });
    let n = inst.n;
    if n == 0 || inst.components.is_empty() {
        push(DiagnosticKind::EmptyInstance, None, format!("need n >= 1 and K >= 1, got n = {n}, K = {}", inst.k()));
    }
    if !(inst.theta > 0.0 && inst.theta < 1.0) {
        push(DiagnosticKind::Theta, None, format!("theta must lie in (0, 1), got {}", inst.theta));
    }
    if !inst.b.is_finite() || inst.c.iter().any(|v| !v.is_finite()) {
        push(DiagnosticKind::NonFinite, None, "objective or rhs has non-finite entries".into());
    }
    if inst.c.len() != n {
        push(DiagnosticKind::Dimension, None, format!("c has length {}, expected {n}", inst.c.len()));
    }

    let mut weight_sum = 0.0;
    for (k, comp) in inst.components.iter().enumerate() {
        weight_sum += comp.weight;
        if !(comp.weight >= 0.0) {
            push(DiagnosticKind::NegativeWeight, Some(k), format!("weight {} is negative", comp.weight));
        }
        if comp.mean.len() != n || comp.covariance.dim() != (n, n) {
            push(
                DiagnosticKind::Dimension,
                Some(k),
                format!("mean/covariance shape {}/{:?} does not match n = {n}", comp.mean.len(), comp.covariance.dim()),
            );
            continue;
        }
        if comp.mean.iter().chain(comp.covariance.iter()).any(|v| !v.is_finite()) {
            push(DiagnosticKind::NonFinite, Some(k), "mean or covariance has non-finite entries".into());
            continue;
        }
        let asym = asymmetry(comp.covariance.view());
        if asym > symmetry_tol(&comp.covariance) {
            push(DiagnosticKind::Asymmetric, Some(k), format!("covariance asymmetric by {asym:e}"));
        } else if comp.factor.is_none() {
            push(DiagnosticKind::NotPositiveDefinite, Some(k), "covariance is not positive definite".into());
        }
    }
    if (weight_sum - 1.0).abs() > WEIGHT_SUM_TOL {
        push(DiagnosticKind::WeightSimplex, None, format!("weights sum to {weight_sum}, expected 1"));
    }

    let r = &inst.region;
    let shapes_ok = r.box_lo.len() == n
        && r.box_hi.len() == n
        && r.a.ncols() == n
        && r.a.nrows() == r.d.len()
        && r.h_mat.ncols() == n
        && r.h_mat.nrows() == r.h.len();
    if !shapes_ok {
        push(DiagnosticKind::Dimension, None, "region shapes do not match n".into());
    } else {
        let finite = r.a.iter().chain(&r.d).chain(&r.h_mat).chain(&r.h).chain(&r.box_lo).chain(&r.box_hi);
        if finite.into_iter().any(|v| !v.is_finite()) {
            push(DiagnosticKind::NonFinite, None, "region has non-finite entries".into());
        }
        for (i, (lo, hi)) in r.box_lo.iter().zip(&r.box_hi).enumerate() {
            if !(lo < hi) {
                push(DiagnosticKind::BoxOrder, None, format!("box bound {i}: {lo} >= {hi}"));
            }
        }
    }
    out
}

/// p_k(x) = Φ((b - μ_kᵀx)/√(xᵀΣ_k x)), and 1_{b ≥ 0} at x = 0.
pub fn component_probability(comp: &GaussianComponent, x: ArrayView1<f64>, b: f64) -> Result<f64> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("x must be finite".into()));
    }
    if x.len() != comp.dim() {
        return Err(Error::Dimension { expected: comp.dim(), got: x.len() });
    }
    Ok(match comp.margin(x, b)? {
        Some(z) => cdf(z),
        None => indicator(b),
    })
}

fn indicator(b: f64) -> f64 {
    if b >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// p(x) = Σ_k w_k p_k(x).
pub fn chance_probability(inst: &GmmInstance, x: ArrayView1<f64>) -> Result<f64> {
    inst.check_dim(x)?;
    let mut p = 0.0;
    for comp in &inst.components {
        p += comp.weight * component_probability(comp, x, inst.b)?;
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Margins z_k(x) for every component, or `None` at the origin.
pub fn margins(inst: &GmmInstance, x: ArrayView1<f64>) -> Result<Option<Vec<f64>>> {
    inst.check_dim(x)?;
    let mut out = Vec::with_capacity(inst.k());
    for comp in &inst.components {
        match comp.margin(x, inst.b)? {
            Some(z) => out.push(z),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}

/// ∇p(x) = Σ_k w_k ϕ(g_k) (-μ_k/s_k - (b - μ_kᵀx) Σ_k x / s_k³) with
/// s_k = √(xᵀΣ_k x) and g_k = (b - μ_kᵀx)/s_k.
pub fn chance_gradient(inst: &GmmInstance, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    inst.check_dim(x)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("x must be finite".into()));
    }
    let norm = x.dot(&x).sqrt();
    if norm < ZERO_NORM {
        return if inst.b > 0.0 {
            Ok(Array1::zeros(inst.n))
        } else {
            Err(Error::UndefinedGradient(format!("x = 0 with b = {} <= 0", inst.b)))
        };
    }
    let mut grad = Array1::<f64>::zeros(inst.n);
    for comp in &inst.components {
        let s = comp.std_dev(x)?;
        let slack = inst.b - comp.mean.dot(&x);
        let dens = pdf(slack / s);
        let sigma_x = comp.covariance.dot(&x);
        let coef_mu = -comp.weight * dens / s;
        let coef_sx = -comp.weight * dens * slack / (s * s * s);
        grad.scaled_add(coef_mu, &comp.mean);
        grad.scaled_add(coef_sx, &sigma_x);
    }
    Ok(grad)
}

/// Index of the component selected by a uniform draw `u` ∈ [0, 1).
pub(crate) fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap above the cumulative sum.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Draws `count` mixture samples as rows: one uniform to pick the component,
/// then n standard normals g, giving μ_k + L_k g.
pub fn sample<R: Rng + ?Sized>(inst: &GmmInstance, count: usize, rng: &mut R) -> Result<Array2<f64>> {
    if count == 0 {
        return Err(Error::Precondition("sample count must be >= 1".into()));
    }
    let factors = inst
        .components
        .iter()
        .map(|c| c.factor_or_err())
        .collect::<Result<Vec<_>>>()?;
    let weights = inst.weights();
    let mut out = Array2::<f64>::zeros((count, inst.n));
    let mut g = Array1::<f64>::zeros(inst.n);
    for mut row in out.rows_mut() {
        let k = pick_component(&weights, rng.random::<f64>());
        g.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        row.assign(&(&inst.components[k].mean + &factors[k].dot(&g)));
    }
    Ok(out)
}
