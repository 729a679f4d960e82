use std::ops::Range;

use rand::Rng;

use super::{MiqpModel, Sense, Sos2Group, VarKind};
use crate::error::{Error, Result};
use crate::gmm::{sample, validate_instance, GmmInstance};
use crate::numfmt::g17;
use crate::pwl::{breakpoints, build_pwl, ApproxKind, BreakpointArray, PwlApprox, DEFAULT_ENDPOINT};
use crate::special::cdf;

pub const DEFAULT_Z_BOUND: f64 = 1e4;
pub const DEFAULT_BIG_M: f64 = 1e6;

/// Bounds [z̲, z̄] on the auxiliary margin variables z_k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelBounds {
    pub z_lo: f64,
    pub z_hi: f64,
}

impl Default for ModelBounds {
    fn default() -> Self {
        Self { z_lo: -DEFAULT_Z_BOUND, z_hi: DEFAULT_Z_BOUND }
    }
}

impl ModelBounds {
    /// Requires z̲ ≤ ž_{-L} < ž_R ≤ z̄.
    pub fn check(&self, bp: &BreakpointArray) -> Result<()> {
        if self.z_lo <= bp.left_end() && bp.left_end() < bp.right_end() && bp.right_end() <= self.z_hi {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "z bounds [{}, {}] must contain the breakpoints [{}, {}]",
                self.z_lo,
                self.z_hi,
                bp.left_end(),
                bp.right_end()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildOptions {
    pub bounds: ModelBounds,
    /// Breakpoint endpoints are ±endpoint.
    pub endpoint: f64,
    /// Replace each SOS2 set by explicit adjacency binaries.
    pub sos2_as_binary: bool,
    /// Emit xᵀΣx = λ² as a ≤ and a ≥ row.
    pub split_quadratic_equality: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            bounds: ModelBounds::default(),
            endpoint: DEFAULT_ENDPOINT,
            sos2_as_binary: false,
            split_quadratic_equality: false,
        }
    }
}

/// τ = (1 - θ)/10, also the suggested relative MIP gap. Rounded to 12
/// significant digits so decimal θ gives the decimal τ (0.95 → 0.005 rather
/// than 0.0050000000000000044).
pub fn default_tau(theta: f64) -> f64 {
    let raw = (1.0 - theta) / 10.0;
    format!("{raw:.11e}").parse().unwrap_or(raw)
}

/// 100/(1 - θ) scenarios, or 20/(1 - θ) from θ = 0.999 upward.
pub fn default_sample_count(theta: f64) -> usize {
    let scale = if theta >= 0.999 - 1e-12 { 20.0 } else { 100.0 };
    (scale / (1.0 - theta)).round() as usize
}

fn check_instance(inst: &GmmInstance) -> Result<()> {
    let diags = validate_instance(inst);
    if diags.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(diags))
    }
}

fn add_x(model: &mut MiqpModel, inst: &GmmInstance) -> Result<Vec<usize>> {
    (0..inst.n)
        .map(|i| {
            let (lo, hi) = (inst.region.box_lo[i], inst.region.box_hi[i]);
            model.add_var(format!("x_{}", i + 1), VarKind::Continuous, Some(lo), Some(hi))
        })
        .collect()
}

fn add_region(model: &mut MiqpModel, inst: &GmmInstance, x: &[usize]) {
    let row_terms = |row: ndarray::ArrayView1<f64>| x.iter().zip(row).map(|(&j, &a)| (j, a)).collect::<Vec<_>>();
    for (i, (row, &d)) in inst.region.a.rows().into_iter().zip(&inst.region.d).enumerate() {
        model.add_linear(format!("reg_{}", i + 1), row_terms(row), Sense::Ge, d);
    }
    for (i, (row, &h)) in inst.region.h_mat.rows().into_iter().zip(&inst.region.h).enumerate() {
        model.add_linear(format!("eq_{}", i + 1), row_terms(row), Sense::Eq, h);
    }
}

fn set_common_meta(model: &mut MiqpModel, inst: &GmmInstance, kind: &str) {
    model.set_meta("model_kind", kind);
    model.set_meta("theta", g17(inst.theta));
    model.set_meta("K", inst.k());
    model.set_meta("n", inst.n);
    model.set_meta("suggested_mip_gap", g17(default_tau(inst.theta)));
}

pub fn build_skeleton(inst: &GmmInstance) -> Result<MiqpModel> {
    build_skeleton_with(inst, &BuildOptions::default())
}

/// Variables x (box-bounded), z_k ∈ [z̲, z̄], ζ_k ∈ [0, 1], λ_k ≥ 0; rows
/// Σ w_k ζ_k ≥ θ, the region, b - μ_kᵀx ≥ z_k λ_k and xᵀΣ_k x = λ_k². The
/// link Φ(z_k) ≥ ζ_k is left to an attached outer or inner block.
pub fn build_skeleton_with(inst: &GmmInstance, opts: &BuildOptions) -> Result<MiqpModel> {
    check_instance(inst)?;
    let ModelBounds { z_lo, z_hi } = opts.bounds;
    if !(z_lo < z_hi) {
        return Err(Error::Precondition(format!("z bounds [{z_lo}, {z_hi}] are empty")));
    }
    let mut m = MiqpModel::new();
    let x = add_x(&mut m, inst)?;
    let k_count = inst.k();
    let mut z = Vec::with_capacity(k_count);
    let mut zeta = Vec::with_capacity(k_count);
    let mut lam = Vec::with_capacity(k_count);
    for k in 1..=k_count {
        z.push(m.add_var(format!("z_{k}"), VarKind::Continuous, Some(z_lo), Some(z_hi))?);
        zeta.push(m.add_var(format!("zeta_{k}"), VarKind::Continuous, Some(0.0), Some(1.0))?);
        lam.push(m.add_var(format!("lam_{k}"), VarKind::Continuous, Some(0.0), None)?);
    }
    m.objective = x.iter().zip(&inst.c).map(|(&j, &c)| (j, c)).collect();
    let mix = zeta.iter().zip(&inst.components).map(|(&j, c)| (j, c.weight)).collect();
    m.add_linear("mix", mix, Sense::Ge, inst.theta);
    add_region(&mut m, inst, &x);

    let n = inst.n;
    for (k, comp) in inst.components.iter().enumerate() {
        let label = k + 1;
        let linear = x.iter().zip(&comp.mean).map(|(&j, &mu)| (j, -mu)).collect();
        m.add_quadratic(format!("bilin_{label}"), linear, vec![(z[k], lam[k], -1.0)], Sense::Ge, -inst.b);

        let sigma = &comp.covariance;
        let mut quad = Vec::with_capacity(n * (n + 1) / 2 + 1);
        for i in 0..n {
            quad.push((x[i], x[i], sigma[[i, i]]));
            for j in i + 1..n {
                quad.push((x[i], x[j], 2.0 * sigma[[i, j]]));
            }
        }
        quad.push((lam[k], lam[k], -1.0));
        if opts.split_quadratic_equality {
            m.add_quadratic(format!("quad_{label}_le"), vec![], quad.clone(), Sense::Le, 0.0);
            m.add_quadratic(format!("quad_{label}_ge"), vec![], quad, Sense::Ge, 0.0);
        } else {
            m.add_quadratic(format!("quad_{label}"), vec![], quad, Sense::Eq, 0.0);
        }
    }
    set_common_meta(&mut m, inst, "skeleton");
    Ok(m)
}

/// Where one component's block lives inside a model.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    /// 0-based component index; names use k + 1.
    pub k: usize,
    pub kind: ApproxKind,
    pub z: usize,
    pub zeta: usize,
    pub alpha: Vec<usize>,
    pub t: Vec<usize>,
    pub y: Vec<usize>,
    /// Inner blocks only.
    pub frakz: Vec<usize>,
    /// Adjacency binaries when SOS2 is binarized (outer blocks only).
    pub sos_binaries: Vec<usize>,
    /// Linear rows added by the block.
    pub rows: Range<usize>,
}

fn block_anchor(model: &MiqpModel, k: usize) -> Result<(usize, usize)> {
    let label = k + 1;
    let find = |name: String| {
        model
            .var_index(&name)
            .ok_or_else(|| Error::Precondition(format!("model has no variable {name} to attach to")))
    };
    Ok((find(format!("z_{label}"))?, find(format!("zeta_{label}"))?))
}

fn check_block(pwl: &PwlApprox, kind: ApproxKind, bounds: &ModelBounds) -> Result<()> {
    if pwl.kind != kind {
        return Err(Error::Usage(format!("expected an {kind} approximation, got {}", pwl.kind)));
    }
    bounds.check(&pwl.breakpoints)
}

pub fn attach_outer_block(model: &mut MiqpModel, k: usize, pwl: &PwlApprox, bounds: &ModelBounds) -> Result<BlockLayout> {
    attach_outer_block_with(model, k, pwl, &BuildOptions { bounds: *bounds, ..BuildOptions::default() })
}

/// Adds the mixed-integer description of Φ̄(z_k) ≥ ζ_k: α_0..α_L in an SOS2
/// set, binaries t_1..t_3 selecting z ≤ ž_{-L}, z ∈ (ž_{-L}, 0), z ≥ 0, and
/// the split z = y_1 + y_2 + y_3.
pub fn attach_outer_block_with(model: &mut MiqpModel, k: usize, pwl: &PwlApprox, opts: &BuildOptions) -> Result<BlockLayout> {
    let bounds = opts.bounds;
    check_block(pwl, ApproxKind::Outer, &bounds)?;
    let (z, zeta) = block_anchor(model, k)?;
    let bp = &pwl.breakpoints;
    let (l, r) = (bp.left_count(), bp.right_count());
    let label = k + 1;

    let alpha = (0..=l)
        .map(|i| model.add_var(format!("alpha_{label}_{i}"), VarKind::Continuous, Some(0.0), None))
        .collect::<Result<Vec<_>>>()?;
    let t = (1..=3).map(|j| model.add_binary(format!("t_{label}_{j}"))).collect::<Result<Vec<_>>>()?;
    let y = (1..=3).map(|j| model.add_free(format!("y_{label}_{j}"))).collect::<Result<Vec<_>>>()?;
    let floor = cdf(bp.left_end());
    let first_row = model.num_linear();

    for (i, p) in pwl.right_coeffs.iter().enumerate().take(r + 1) {
        model.add_linear(
            format!("tan_{label}_{i}"),
            vec![(t[0], floor), (t[1], 1.0), (y[2], p.slope), (t[2], p.intercept), (zeta, -1.0)],
            Sense::Ge,
            0.0,
        );
    }
    let mut sec = vec![(t[0], floor)];
    sec.extend(alpha.iter().enumerate().map(|(i, &a)| (a, cdf(bp.at(-(i as isize))))));
    sec.extend([(t[2], 1.0), (zeta, -1.0)]);
    model.add_linear(format!("sec_{label}"), sec, Sense::Ge, 0.0);
    model.add_linear(format!("tsum_{label}"), t.iter().map(|&j| (j, 1.0)).collect(), Sense::Eq, 1.0);
    model.add_linear(format!("zlink_{label}"), vec![(z, 1.0), (y[0], -1.0), (y[1], -1.0), (y[2], -1.0)], Sense::Eq, 0.0);
    model.add_linear(format!("y1lo_{label}"), vec![(y[0], 1.0), (t[0], -bounds.z_lo)], Sense::Ge, 0.0);
    model.add_linear(format!("y1hi_{label}"), vec![(y[0], 1.0), (t[0], -bp.left_end())], Sense::Le, 0.0);
    model.add_linear(format!("y3lo_{label}"), vec![(y[2], 1.0)], Sense::Ge, 0.0);
    model.add_linear(format!("y3hi_{label}"), vec![(y[2], 1.0), (t[2], -bounds.z_hi)], Sense::Le, 0.0);
    let mut y2 = vec![(y[1], 1.0)];
    y2.extend(alpha.iter().enumerate().map(|(i, &a)| (a, -bp.at(-(i as isize)))));
    model.add_linear(format!("y2link_{label}"), y2, Sense::Eq, 0.0);
    let mut t2 = vec![(t[1], 1.0)];
    t2.extend(alpha.iter().map(|&a| (a, -1.0)));
    model.add_linear(format!("t2link_{label}"), t2, Sense::Eq, 0.0);

    let mut sos_binaries = Vec::new();
    if opts.sos2_as_binary {
        // δ_j selects the segment [α_{j-1}, α_j].
        sos_binaries = (1..=l).map(|j| model.add_binary(format!("sosb_{label}_{j}"))).collect::<Result<Vec<_>>>()?;
        for (i, &a) in alpha.iter().enumerate() {
            let mut terms = vec![(a, 1.0)];
            if i >= 1 {
                terms.push((sos_binaries[i - 1], -1.0));
            }
            if i < l {
                terms.push((sos_binaries[i], -1.0));
            }
            model.add_linear(format!("sosadj_{label}_{i}"), terms, Sense::Le, 0.0);
        }
        model.add_linear(format!("sosone_{label}"), sos_binaries.iter().map(|&d| (d, 1.0)).collect(), Sense::Le, 1.0);
    } else {
        model.sos2_groups.push(Sos2Group { name: format!("sos2_{label}"), vars: alpha.clone() });
    }

    Ok(BlockLayout {
        k,
        kind: ApproxKind::Outer,
        z,
        zeta,
        alpha,
        t,
        y,
        frakz: Vec::new(),
        sos_binaries,
        rows: first_row..model.num_linear(),
    })
}

/// Adds the mixed-integer description of Φ̲(z_k) ≥ ζ_k: binaries α_0..α_{L-1}
/// picking a tangent, t_1..t_4 selecting z ≤ ž_{-L}, z ∈ (ž_{-L}, 0),
/// z ∈ [0, ž_R], z ≥ ž_R, the split z = y_1 + … + y_4, and 𝔷_i carrying z
/// within [ž_{-i-1}, 0] when α_i = 1.
pub fn attach_inner_block(model: &mut MiqpModel, k: usize, pwl: &PwlApprox, bounds: &ModelBounds) -> Result<BlockLayout> {
    check_block(pwl, ApproxKind::Inner, bounds)?;
    let (z, zeta) = block_anchor(model, k)?;
    let bp = &pwl.breakpoints;
    let l = bp.left_count();
    let label = k + 1;

    let alpha = (0..l).map(|i| model.add_binary(format!("alpha_{label}_{i}"))).collect::<Result<Vec<_>>>()?;
    let t = (1..=4).map(|j| model.add_binary(format!("t_{label}_{j}"))).collect::<Result<Vec<_>>>()?;
    let y = (1..=4).map(|j| model.add_free(format!("y_{label}_{j}"))).collect::<Result<Vec<_>>>()?;
    let frakz = (0..l).map(|i| model.add_free(format!("frakz_{label}_{i}"))).collect::<Result<Vec<_>>>()?;
    let cap = cdf(bp.right_end());
    let last = pwl.left_coeffs[l];
    let first_row = model.num_linear();

    for (i, p) in pwl.right_coeffs.iter().enumerate() {
        model.add_linear(
            format!("sec_{label}_{}", i + 1),
            vec![(t[0], 1.0), (t[1], 1.0), (y[2], p.slope), (t[2], p.intercept), (t[3], cap), (zeta, -1.0)],
            Sense::Ge,
            0.0,
        );
    }
    let mut tan = vec![(y[0], last.slope), (t[0], last.intercept)];
    for (i, p) in pwl.left_coeffs.iter().take(l).enumerate() {
        tan.push((frakz[i], p.slope));
        tan.push((alpha[i], p.intercept));
    }
    tan.extend([(t[2], 1.0), (t[3], cap), (zeta, -1.0)]);
    model.add_linear(format!("tan_{label}"), tan, Sense::Ge, 0.0);
    model.add_linear(format!("floor_{label}"), vec![(y[0], last.slope), (t[0], last.intercept)], Sense::Ge, 0.0);
    model.add_linear(format!("tsum_{label}"), t.iter().map(|&j| (j, 1.0)).collect(), Sense::Eq, 1.0);
    let mut zlink = vec![(z, 1.0)];
    zlink.extend(y.iter().map(|&j| (j, -1.0)));
    model.add_linear(format!("zlink_{label}"), zlink, Sense::Eq, 0.0);
    model.add_linear(format!("y1lo_{label}"), vec![(y[0], 1.0), (t[0], -bounds.z_lo)], Sense::Ge, 0.0);
    model.add_linear(format!("y1hi_{label}"), vec![(y[0], 1.0), (t[0], -bp.left_end())], Sense::Le, 0.0);
    let mut t2 = vec![(t[1], 1.0)];
    t2.extend(alpha.iter().map(|&a| (a, -1.0)));
    model.add_linear(format!("t2link_{label}"), t2, Sense::Eq, 0.0);
    for i in 0..l {
        let lo = bp.at(-(i as isize) - 1);
        model.add_linear(format!("frlo_{label}_{i}"), vec![(frakz[i], 1.0), (alpha[i], -lo)], Sense::Ge, 0.0);
        model.add_linear(format!("frhi_{label}_{i}"), vec![(frakz[i], 1.0)], Sense::Le, 0.0);
    }
    let mut y2 = vec![(y[1], 1.0)];
    y2.extend(frakz.iter().map(|&f| (f, -1.0)));
    model.add_linear(format!("y2link_{label}"), y2, Sense::Eq, 0.0);
    model.add_linear(format!("y3lo_{label}"), vec![(y[2], 1.0)], Sense::Ge, 0.0);
    model.add_linear(format!("y3hi_{label}"), vec![(y[2], 1.0), (t[2], -bp.right_end())], Sense::Le, 0.0);
    model.add_linear(format!("y4lo_{label}"), vec![(y[3], 1.0), (t[3], -bp.right_end())], Sense::Ge, 0.0);
    model.add_linear(format!("y4hi_{label}"), vec![(y[3], 1.0), (t[3], -bounds.z_hi)], Sense::Le, 0.0);

    Ok(BlockLayout {
        k,
        kind: ApproxKind::Inner,
        z,
        zeta,
        alpha,
        t,
        y,
        frakz,
        sos_binaries: Vec::new(),
        rows: first_row..model.num_linear(),
    })
}

pub fn build_pwl_outer(inst: &GmmInstance, tau: f64) -> Result<MiqpModel> {
    build_pwl_model(inst, ApproxKind::Outer, tau, &BuildOptions::default())
}

pub fn build_pwl_inner(inst: &GmmInstance, tau: f64) -> Result<MiqpModel> {
    build_pwl_model(inst, ApproxKind::Inner, tau, &BuildOptions::default())
}

/// Skeleton plus one block per component, all sharing one breakpoint array
/// of accuracy `tau` on [-endpoint, endpoint].
pub fn build_pwl_model(inst: &GmmInstance, kind: ApproxKind, tau: f64, opts: &BuildOptions) -> Result<MiqpModel> {
    let pwl = build_pwl(breakpoints(kind, tau, -opts.endpoint, opts.endpoint)?);
    opts.bounds.check(&pwl.breakpoints)?;
    let mut m = build_skeleton_with(inst, opts)?;
    for k in 0..inst.k() {
        match kind {
            ApproxKind::Outer => attach_outer_block_with(&mut m, k, &pwl, opts)?,
            ApproxKind::Inner => attach_inner_block(&mut m, k, &pwl, &opts.bounds)?,
        };
    }
    set_common_meta(&mut m, inst, model_kind_name(kind));
    m.set_meta("tau", g17(tau));
    m.set_meta("L", pwl.breakpoints.left_count());
    m.set_meta("R", pwl.breakpoints.right_count());
    m.set_meta("z_endpoint", g17(opts.endpoint));
    m.validate()?;
    Ok(m)
}

pub fn model_kind_name(kind: ApproxKind) -> &'static str {
    match kind {
        ApproxKind::Outer => "pwl-o",
        ApproxKind::Inner => "pwl-i",
    }
}

/// Scenario model: x, binaries y^s, rows ξ^sᵀx - M y^s ≤ b and
/// Σ y^s ≤ (1 - θ) S, plus the region.
pub fn build_saa<R: Rng + ?Sized>(inst: &GmmInstance, sample_count: usize, big_m: f64, rng: &mut R) -> Result<MiqpModel> {
    check_instance(inst)?;
    if sample_count == 0 {
        return Err(Error::Precondition("sample count must be >= 1".into()));
    }
    if !(big_m > 0.0 && big_m.is_finite()) {
        return Err(Error::Domain(format!("big-M must be positive and finite, got {big_m}")));
    }
    let xi = sample(inst, sample_count, rng)?;
    let mut m = MiqpModel::new();
    let x = add_x(&mut m, inst)?;
    let y = (1..=sample_count).map(|s| m.add_binary(format!("saa_y_{s}"))).collect::<Result<Vec<_>>>()?;
    m.objective = x.iter().zip(&inst.c).map(|(&j, &c)| (j, c)).collect();
    for (s, row) in xi.rows().into_iter().enumerate() {
        let mut terms: Vec<(usize, f64)> = x.iter().zip(row).map(|(&j, &v)| (j, v)).collect();
        terms.push((y[s], -big_m));
        m.add_linear(format!("scen_{}", s + 1), terms, Sense::Le, inst.b);
    }
    m.add_linear("card", y.iter().map(|&j| (j, 1.0)).collect(), Sense::Le, (1.0 - inst.theta) * sample_count as f64);
    add_region(&mut m, inst, &x);
    set_common_meta(&mut m, inst, "saa");
    m.set_meta("sample_count", sample_count);
    m.set_meta("big_m", g17(big_m));
    m.validate()?;
    Ok(m)
}
