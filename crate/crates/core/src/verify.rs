//! Checking candidate solutions against the exact chance constraint, the
//! inner/outer comparison metrics, and small ground-truth oracles.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{block_rng, blocks, Exec};
use crate::gmm::{chance_probability, margins, pick_component, GmmInstance};
use crate::pwl::{breakpoints, build_pwl, ApproxKind, PwlApprox, DEFAULT_ENDPOINT};
use crate::special::cdf;

/// Absolute tolerance on every region row.
pub const REGION_TOL: f64 = 1e-8;

/// Slack on the sandwich inequalities, covering rounding in the K-term sums.
pub const AUDIT_SLACK: f64 = 1e-12;

const MC_BLOCK: usize = 1 << 14;
const GRID_BLOCK: usize = 1 << 12;
const AUDIT_BLOCK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub objective: f64,
    /// θ̌, the exact mixture probability at x.
    pub theta_check: f64,
    pub theta: f64,
    pub region_ok: bool,
    pub worst_violation: f64,
    pub tau_hat: f64,
    pub tau_feasible: bool,
    pub notes: Vec<String>,
}

pub fn verify(inst: &GmmInstance, x: ArrayView1<f64>, tau_hat: f64) -> Result<VerificationReport> {
    inst.check_dim(x)?;
    if !(tau_hat >= 0.0) {
        return Err(Error::Domain(format!("tau_hat must be >= 0, got {tau_hat}")));
    }
    let theta_check = chance_probability(inst, x)?;
    let worst_violation = inst.region.max_violation(x);
    let region_ok = worst_violation <= REGION_TOL;
    let tau_feasible = region_ok && theta_check >= inst.theta - tau_hat;
    let mut notes = Vec::new();
    if !region_ok {
        notes.push(format!("region violated by {worst_violation:e}"));
    }
    if theta_check < inst.theta - tau_hat {
        notes.push(format!("chance level {theta_check} below theta - tau_hat = {}", inst.theta - tau_hat));
    }
    if x.iter().all(|&v| v == 0.0) {
        notes.push("x = 0: probability is the indicator of b >= 0".into());
    }
    Ok(VerificationReport {
        objective: inst.objective(x),
        theta_check,
        theta: inst.theta,
        region_ok,
        worst_violation,
        tau_hat,
        tau_feasible,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonMetrics {
    pub pct_obj: f64,
    pub pct_theta: f64,
    pub objective_inner: f64,
    pub objective_outer: f64,
    pub theta_inner: f64,
    pub theta_outer: f64,
    pub notes: Vec<String>,
}

/// %Obj = max(cᵀ(xᴵ − xᴼ), 0)/cᵀxᴵ·100 and %θ̌ = (θ̌ᴵ − θ̌ᴼ)/θ·100, taken
/// literally: a negative inner objective makes %Obj non-positive.
pub fn compare(inst: &GmmInstance, x_inner: ArrayView1<f64>, x_outer: ArrayView1<f64>) -> Result<ComparisonMetrics> {
    inst.check_dim(x_inner)?;
    inst.check_dim(x_outer)?;
    let (oi, oo) = (inst.objective(x_inner), inst.objective(x_outer));
    if oi == 0.0 {
        return Err(Error::UndefinedMetric("inner objective is zero".into()));
    }
    let (ti, to) = (chance_probability(inst, x_inner)?, chance_probability(inst, x_outer)?);
    let mut notes = Vec::new();
    if oi < 0.0 {
        notes.push("inner objective is negative, so pct_obj is <= 0 by construction".into());
    }
    Ok(ComparisonMetrics {
        pct_obj: (oi - oo).max(0.0) / oi * 100.0,
        pct_theta: (ti - to) / inst.theta * 100.0,
        objective_inner: oi,
        objective_outer: oo,
        theta_inner: ti,
        theta_outer: to,
        notes,
    })
}

/// Uniform tensor grid over the instance box: `resolution` cells, hence
/// `resolution + 1` nodes, per axis. Grids nest when the resolution doubles.
#[derive(Debug, Clone)]
pub struct BoxGrid {
    pub lo: Vec<f64>,
    pub step: Vec<f64>,
    pub nodes: usize,
}

impl BoxGrid {
    pub fn new(inst: &GmmInstance, resolution: usize) -> Self {
        let lo = inst.region.box_lo.to_vec();
        let step = lo.iter().zip(&inst.region.box_hi).map(|(l, h)| (h - l) / resolution as f64).collect();
        Self { lo, step, nodes: resolution + 1 }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a flat index, first axis slowest.
    pub fn index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.nodes;
            flat /= self.nodes;
        }
        idx
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.nodes + i)
    }

    pub fn point(&self, idx: &[usize]) -> Array1<f64> {
        idx.iter().zip(&self.lo).zip(&self.step).map(|((&i, l), s)| l + s * i as f64).collect()
    }
}

/// Chance probability at every node of a [`BoxGrid`], in flat order.
pub fn probability_grid(inst: &GmmInstance, grid: &BoxGrid, exec: Exec) -> Result<Vec<f64>> {
    let chunks = exec.map_slice(&blocks(grid.len(), GRID_BLOCK), |r| {
        r.clone()
            .map(|f| chance_probability(inst, grid.point(&grid.index(f)).view()))
            .collect::<Result<Vec<f64>>>()
    });
    let mut out = Vec::with_capacity(grid.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Points x_a, x_b with p(x_a), p(x_b) ≥ t > p((x_a + x_b)/2).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityWitness {
    pub x_a: Vec<f64>,
    pub x_b: Vec<f64>,
    pub midpoint: Vec<f64>,
    pub level: f64,
    pub p_a: f64,
    pub p_b: f64,
    pub p_mid: f64,
}

/// Scans grid-aligned triples (i − d, i, i + d) along every direction in
/// {−1, 0, 1}ⁿ and returns the triple with the largest margin
/// min(p_a, p_b) − p_mid, if any margin is positive. Ties keep the first
/// triple in scan order.
pub fn convexity_witness(grid: &BoxGrid, values: &[f64]) -> Option<ConvexityWitness> {
    let n = grid.dim();
    let dirs: Vec<Vec<i64>> = (0..3usize.pow(n as u32))
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let v = (code % 3) as i64 - 1;
                    code /= 3;
                    v
                })
                .collect::<Vec<i64>>()
        })
        // one of each ± pair: first nonzero entry positive
        .filter(|d| d.iter().find(|&&v| v != 0) == Some(&1))
        .collect();
    let nodes = grid.nodes as i64;
    let mut best: Option<(f64, usize, usize, usize)> = None;
    for mid in 0..grid.len() {
        let idx: Vec<i64> = grid.index(mid).into_iter().map(|v| v as i64).collect();
        for dir in &dirs {
            for d in 1.. {
                let shift = |sign: i64| -> Option<usize> {
                    let mut out = Vec::with_capacity(n);
                    for (i, v) in idx.iter().zip(dir) {
                        let p = i + sign * d * v;
                        if !(0..nodes).contains(&p) {
                            return None;
                        }
                        out.push(p as usize);
                    }
                    Some(grid.flat(&out))
                };
                let (Some(a), Some(b)) = (shift(-1), shift(1)) else { break };
                let margin = values[a].min(values[b]) - values[mid];
                if margin > 0.0 && best.is_none_or(|(m, ..)| margin > m) {
                    best = Some((margin, a, b, mid));
                }
            }
        }
    }
    best.map(|(_, a, b, mid)| {
        let pt = |f: usize| grid.point(&grid.index(f)).to_vec();
        ConvexityWitness {
            x_a: pt(a),
            x_b: pt(b),
            midpoint: pt(mid),
            level: values[a].min(values[b]),
            p_a: values[a],
            p_b: values[b],
            p_mid: values[mid],
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeskSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub theta_check: f64,
    /// Final grid spacing per axis.
    pub cell: Vec<f64>,
    pub cell_diameter: f64,
    pub evaluated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DeskOutcome {
    Solved(DeskSolution),
    InfeasibleAtResolution { resolution: usize },
}

pub const DESK_MAX_DIM: usize = 3;
pub const DESK_MIN_RESOLUTION: usize = 16;

pub fn desk_solve(inst: &GmmInstance, resolution: usize, refine_rounds: usize) -> Result<DeskOutcome> {
    desk_solve_with(inst, resolution, refine_rounds, Exec::default())
}

/// Exhaustive grid search for min cᵀx over the region ∩ {p(x) ≥ θ}, then
/// `refine_rounds` local searches on a half-spaced 9ⁿ grid centred on the
/// incumbent. Ties go to the lexicographically smallest point.
pub fn desk_solve_with(inst: &GmmInstance, resolution: usize, refine_rounds: usize, exec: Exec) -> Result<DeskOutcome> {
    if inst.n > DESK_MAX_DIM {
        return Err(Error::Precondition(format!("desk_solve handles n <= {DESK_MAX_DIM}, got {}", inst.n)));
    }
    if resolution < DESK_MIN_RESOLUTION {
        return Err(Error::Precondition(format!("resolution must be >= {DESK_MIN_RESOLUTION}, got {resolution}")));
    }
    let grid = BoxGrid::new(inst, resolution);
    let mut evaluated = grid.len();
    let found = best_feasible(inst, grid.len(), |f| grid.point(&grid.index(f)), exec)?;
    let Some((mut x, mut obj)) = found else {
        return Ok(DeskOutcome::InfeasibleAtResolution { resolution });
    };
    let mut cell = grid.step.clone();
    let offsets: Vec<Vec<i64>> = (0..9usize.pow(inst.n as u32))
        .map(|mut code| {
            (0..inst.n)
                .map(|_| {
                    let v = (code % 9) as i64 - 4;
                    code /= 9;
                    v
                })
                .rev()
                .collect()
        })
        .collect();
    for _ in 0..refine_rounds {
        cell.iter_mut().for_each(|c| *c /= 2.0);
        let centre = x.clone();
        let candidate = |f: usize| -> Array1<f64> {
            let p: Array1<f64> = offsets[f]
                .iter()
                .zip(&centre)
                .zip(&cell)
                .map(|((&o, &c), &h)| c + o as f64 * h)
                .collect();
            p
        };
        evaluated += offsets.len();
        // The centre is among the candidates, so the incumbent can only improve.
        if let Some((bx, bo)) = best_feasible(inst, offsets.len(), candidate, exec)? {
            if (bo, bx.as_slice().unwrap()) < (obj, x.as_slice().unwrap()) {
                x = bx;
                obj = bo;
            }
        }
    }
    let theta_check = chance_probability(inst, x.view())?;
    let cell_diameter = cell.iter().map(|c| c * c).sum::<f64>().sqrt();
    Ok(DeskOutcome::Solved(DeskSolution { x: x.to_vec(), objective: obj, theta_check, cell, cell_diameter, evaluated }))
}

type Incumbent = Option<(Array1<f64>, f64)>;

fn better(a: &Incumbent, b: &Incumbent) -> bool {
    match (a, b) {
        (Some((xa, oa)), Some((xb, ob))) => (oa, xa.as_slice().unwrap()) < (ob, xb.as_slice().unwrap()),
        (Some(_), None) => true,
        _ => false,
    }
}

/// Best feasible candidate among `point(0..count)` by (objective, x).
fn best_feasible<F>(inst: &GmmInstance, count: usize, point: F, exec: Exec) -> Result<Incumbent>
where
    F: Fn(usize) -> Array1<f64> + Sync + Send,
{
    let per_block = exec.map_slice(&blocks(count, GRID_BLOCK), |r| -> Result<Incumbent> {
        let mut best: Incumbent = None;
        for f in r.clone() {
            let x = point(f);
            let in_box = x.iter().zip(&inst.region.box_lo).zip(&inst.region.box_hi).all(|((v, l), h)| l <= v && v <= h);
            if !in_box || inst.region.max_violation(x.view()) > REGION_TOL {
                continue;
            }
            let obj = inst.objective(x.view());
            if best.as_ref().is_some_and(|(_, bo)| obj > *bo) {
                continue;
            }
            let cand = Some((x, obj));
            if better(&cand, &best) && chance_probability(inst, cand.as_ref().unwrap().0.view())? >= inst.theta {
                best = cand;
            }
        }
        Ok(best)
    });
    let mut best: Incumbent = None;
    for b in per_block {
        let b = b?;
        if better(&b, &best) {
            best = b;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub tau: f64,
    pub samples: usize,
    /// Samples at the origin, where the margins are undefined.
    pub skipped: usize,
    pub max_outer_gap: f64,
    pub max_inner_gap: f64,
}

/// The certified pair (OUTER, INNER) at tolerance τ with the default endpoints.
pub fn pwl_pair(tau: f64) -> Result<(PwlApprox, PwlApprox)> {
    let outer = build_pwl(breakpoints(ApproxKind::Outer, tau, -DEFAULT_ENDPOINT, DEFAULT_ENDPOINT)?);
    let inner = build_pwl(breakpoints(ApproxKind::Inner, tau, -DEFAULT_ENDPOINT, DEFAULT_ENDPOINT)?);
    Ok((outer, inner))
}

pub fn sandwich_audit<R: Rng + ?Sized>(inst: &GmmInstance, tau: f64, sample_count: usize, rng: &mut R) -> Result<AuditReport> {
    sandwich_audit_with(inst, tau, sample_count, rng, Exec::default())
}

/// Draws `sample_count` points uniformly from the box and checks
/// Σ w_k Φ̲(z_k) ≤ Σ w_k Φ(z_k) ≤ Σ w_k Φ̄(z_k) with both gaps at most τ.
/// One u64 is taken from `rng` as the base seed of the per-block streams.
pub fn sandwich_audit_with<R: Rng + ?Sized>(
    inst: &GmmInstance,
    tau: f64,
    sample_count: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<AuditReport> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("tau must be positive, got {tau}")));
    }
    let (outer, inner) = pwl_pair(tau)?;
    let weights = inst.weights();
    let base = rng.random::<u64>();
    let (lo, hi) = (&inst.region.box_lo, &inst.region.box_hi);

    struct Block {
        skipped: usize,
        outer_gap: f64,
        inner_gap: f64,
        failure: Option<(usize, Vec<f64>, String)>,
    }
    let results = exec.map_slice(&blocks(sample_count, AUDIT_BLOCK), |r| -> Result<Block> {
        let mut rng = block_rng(base, r.start / AUDIT_BLOCK);
        let mut out = Block { skipped: 0, outer_gap: 0.0, inner_gap: 0.0, failure: None };
        for index in r.clone() {
            let x: Array1<f64> = lo.iter().zip(hi).map(|(l, h)| l + rng.random::<f64>() * (h - l)).collect();
            let Some(z) = margins(inst, x.view())? else {
                out.skipped += 1;
                continue;
            };
            let (mut p_in, mut p, mut p_out) = (0.0, 0.0, 0.0);
            for (&w, &zk) in weights.iter().zip(&z) {
                p_in += w * inner.eval(zk);
                p += w * cdf(zk);
                p_out += w * outer.eval(zk);
            }
            let (go, gi) = (p_out - p, p - p_in);
            out.outer_gap = out.outer_gap.max(go);
            out.inner_gap = out.inner_gap.max(gi);
            let reason = if go < -AUDIT_SLACK || gi < -AUDIT_SLACK {
                Some(format!("order violated: inner {p_in}, exact {p}, outer {p_out}"))
            } else if go > tau + AUDIT_SLACK || gi > tau + AUDIT_SLACK {
                Some(format!("gap above tau: outer {go:e}, inner {gi:e}"))
            } else {
                None
            };
            if let Some(reason) = reason {
                out.failure = Some((index, x.to_vec(), reason));
                break;
            }
        }
        Ok(out)
    });
    let mut report = AuditReport { tau, samples: sample_count, skipped: 0, max_outer_gap: 0.0, max_inner_gap: 0.0 };
    for b in results {
        let b = b?;
        if let Some((index, x, reason)) = b.failure {
            return Err(Error::Audit { index, x, reason });
        }
        report.skipped += b.skipped;
        report.max_outer_gap = report.max_outer_gap.max(b.outer_gap);
        report.max_inner_gap = report.max_inner_gap.max(b.inner_gap);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub hits: u64,
    pub draws: u64,
}

pub const MC_MIN_DRAWS: usize = 100;

pub fn mc_probability<R: Rng + ?Sized>(inst: &GmmInstance, x: ArrayView1<f64>, draws: usize, rng: &mut R) -> Result<McEstimate> {
    mc_probability_with(inst, x, draws, rng, Exec::default())
}

/// Empirical P[ξᵀx ≤ b] from full mixture draws ξ = μ_k + L_k g, with the
/// binomial standard error. One u64 is taken from `rng` as the base seed of
/// the per-block streams; hit counts are summed as integers.
pub fn mc_probability_with<R: Rng + ?Sized>(
    inst: &GmmInstance,
    x: ArrayView1<f64>,
    draws: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<McEstimate> {
    inst.check_dim(x)?;
    if draws < MC_MIN_DRAWS {
        return Err(Error::Precondition(format!("need at least {MC_MIN_DRAWS} draws, got {draws}")));
    }
    let factors = inst
        .components
        .iter()
        .map(|c| c.factor().ok_or_else(|| Error::Invariant("covariance is not positive definite".into())))
        .collect::<Result<Vec<_>>>()?;
    let weights = inst.weights();
    let base = rng.random::<u64>();
    let n = inst.n;
    let hits = exec.map_slice(&blocks(draws, MC_BLOCK), |r| -> u64 {
        let mut rng = block_rng(base, r.start / MC_BLOCK);
        let mut g = vec![0.0; n];
        let mut hits = 0u64;
        for _ in r.clone() {
            let k = pick_component(&weights, rng.random::<f64>());
            g.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            let (mu, l) = (&inst.components[k].mean, factors[k]);
            let mut dot = 0.0;
            for i in 0..n {
                let mut xi = mu[i];
                for (j, gj) in g.iter().enumerate().take(i + 1) {
                    xi += l[[i, j]] * gj;
                }
                dot += xi * x[i];
            }
            if inst.b - dot >= 0.0 {
                hits += 1;
            }
        }
        hits
    });
    let hits: u64 = hits.into_iter().sum();
    let p = hits as f64 / draws as f64;
    Ok(McEstimate { estimate: p, stderr: (p * (1.0 - p) / draws as f64).sqrt(), hits, draws: draws as u64 })
}
