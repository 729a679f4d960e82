//! Breakpoint arrays and the tangent/secant piecewise-linear bounds on Φ.
//!
//! An OUTER approximation lies above Φ: tangents on z ≥ 0, secants on z < 0.
//! An INNER approximation lies below Φ: secants on z ≥ 0, tangents on z < 0.
//! Because secants tolerate twice the spacing of tangents for the same error,
//! the two kinds use mirror-image step rules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::special::{cdf, pdf, tail_endpoint};

/// Endpoint magnitude used by the experiments' default configuration.
pub const DEFAULT_ENDPOINT: f64 = 6.466;

/// Points closer than this are treated as one breakpoint.
pub const MERGE_TOL: f64 = 1e-12;

/// Rounding allowance when checking that an evaluator stays on its side of Φ.
pub const ONE_SIDED_SLACK: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ApproxKind {
    Outer,
    Inner,
}

impl ApproxKind {
    /// Step multipliers (left side, right side) relative to the tangent rule.
    fn multipliers(self) -> (f64, f64) {
        match self {
            ApproxKind::Outer => (2.0, 1.0),
            ApproxKind::Inner => (1.0, 2.0),
        }
    }
}

impl std::fmt::Display for ApproxKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ApproxKind::Outer => "OUTER",
            ApproxKind::Inner => "INNER",
        })
    }
}

/// Ordered breakpoints ž_{-L} < … < ž_0 = 0 < … < ž_R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BreakpointDoc", into = "BreakpointDoc")]
pub struct BreakpointArray {
    points: Vec<f64>,
    left_count: usize,
    right_count: usize,
    tau: f64,
    kind: ApproxKind,
}

#[derive(Serialize, Deserialize)]
struct BreakpointDoc {
    kind: ApproxKind,
    tau: f64,
    #[serde(rename = "L")]
    left_count: usize,
    #[serde(rename = "R")]
    right_count: usize,
    points: Vec<f64>,
}

impl From<BreakpointArray> for BreakpointDoc {
    fn from(b: BreakpointArray) -> Self {
        Self {
            kind: b.kind,
            tau: b.tau,
            left_count: b.left_count,
            right_count: b.right_count,
            points: b.points,
        }
    }
}

impl TryFrom<BreakpointDoc> for BreakpointArray {
    type Error = Error;

    fn try_from(doc: BreakpointDoc) -> Result<Self> {
        let bp = Self::from_points(doc.points, doc.tau, doc.kind)?;
        if bp.left_count != doc.left_count || bp.right_count != doc.right_count {
            return Err(Error::Invariant(format!(
                "declared L = {}, R = {} but points give L = {}, R = {}",
                doc.left_count, doc.right_count, bp.left_count, bp.right_count
            )));
        }
        Ok(bp)
    }
}

impl BreakpointArray {
    /// Wraps an explicit point list. Checks ordering, the zero knot and the
    /// tail-mass condition; gap conditions are left to [`Self::check_gaps`].
    pub fn from_points(points: Vec<f64>, tau: f64, kind: ApproxKind) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Domain(format!("tau must be positive and finite, got {tau}")));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invariant("breakpoints must be finite".into()));
        }
        if let Some(w) = points.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Invariant(format!(
                "breakpoints not strictly increasing at {} >= {}",
                w[0], w[1]
            )));
        }
        let zero = points
            .iter()
            .position(|&p| p == 0.0)
            .ok_or_else(|| Error::Invariant("breakpoint array lacks the knot 0".into()))?;
        let left_count = zero;
        let right_count = points.len() - zero - 1;
        if left_count == 0 || right_count == 0 {
            return Err(Error::Invariant("need at least one breakpoint on each side of 0".into()));
        }
        let bp = Self { points, left_count, right_count, tau, kind };
        let tail = bp.tail_mass();
        if tail > tau {
            return Err(Error::Invariant(format!(
                "tail mass {tail:e} beyond the endpoints exceeds tau = {tau:e}"
            )));
        }
        Ok(bp)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// L
    pub fn left_count(&self) -> usize {
        self.left_count
    }

    /// R
    pub fn right_count(&self) -> usize {
        self.right_count
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn kind(&self) -> ApproxKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// ž_i for i ∈ [-L, R].
    pub fn at(&self, i: isize) -> f64 {
        let idx = self.left_count as isize + i;
        assert!(
            idx >= 0 && (idx as usize) < self.points.len(),
            "breakpoint index {i} outside [-{}, {}]",
            self.left_count,
            self.right_count
        );
        self.points[idx as usize]
    }

    /// ž_{-L}
    pub fn left_end(&self) -> f64 {
        self.points[0]
    }

    /// ž_R
    pub fn right_end(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// max{1 - Φ(ž_R), Φ(ž_{-L})}
    pub fn tail_mass(&self) -> f64 {
        cdf(-self.right_end()).max(cdf(self.left_end()))
    }

    /// Largest gap each interval may have under this array's kind, indexed
    /// like `points.windows(2)`.
    pub fn allowed_gaps(&self) -> Vec<f64> {
        let (left_mult, right_mult) = self.kind.multipliers();
        self.points
            .windows(2)
            .map(|w| {
                let mult = if w[0] >= 0.0 { right_mult } else { left_mult };
                mult * (2.0 * self.tau / curvature_bound(w[0], w[1])).sqrt()
            })
            .collect()
    }

    /// Verifies every interval against the error-certifying gap condition.
    pub fn check_gaps(&self) -> Result<()> {
        for (w, allowed) in self.points.windows(2).zip(self.allowed_gaps()) {
            let gap = w[1] - w[0];
            if gap > allowed * (1.0 + 1e-9) {
                return Err(Error::Invariant(format!(
                    "gap {gap} on [{}, {}] exceeds allowed {allowed}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// C(a, b) = max |Φ''| on [a, b].
pub fn curvature_bound(a: f64, b: f64) -> f64 {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    if (a <= 1.0 && 1.0 <= b) || (a <= -1.0 && -1.0 <= b) {
        pdf(1.0)
    } else {
        (a.abs() * pdf(a)).max(b.abs() * pdf(b))
    }
}

/// Positive breakpoints of one side, mirrored to (0, end]: descend from 1
/// toward 0, then ascend from 1 to `end`, each step sized by the curvature at
/// the current point.
fn one_side(tau: f64, end: f64, mult: f64) -> Vec<f64> {
    let step = |z: f64| mult * (2.0 * tau / (pdf(z) * z.abs())).sqrt();
    let mut pts = vec![1.0];
    let mut z = 1.0;
    loop {
        let next = z - step(z);
        if next <= 0.0 {
            break;
        }
        pts.push(next);
        z = next;
    }
    z = 1.0;
    loop {
        let next = z + step(z);
        if next >= end {
            break;
        }
        pts.push(next);
        z = next;
    }
    pts.retain(|&p| p > MERGE_TOL && p < end - MERGE_TOL);
    pts.push(end);
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < MERGE_TOL);
    pts
}

fn build_array(tau: f64, z_left: f64, z_right: f64, kind: ApproxKind) -> Result<BreakpointArray> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("tau must be positive and finite, got {tau}")));
    }
    if !z_left.is_finite() || !z_right.is_finite() {
        return Err(Error::Domain("endpoints must be finite".into()));
    }
    if z_left > -1.0 || z_right < 1.0 {
        return Err(Error::Precondition(format!(
            "endpoints must satisfy z_left <= -1 and z_right >= 1, got [{z_left}, {z_right}]"
        )));
    }
    let tail = cdf(-z_right).max(cdf(z_left));
    if tail > tau {
        return Err(Error::Precondition(format!(
            "tail mass {tail:e} beyond [{z_left}, {z_right}] exceeds tau = {tau:e}"
        )));
    }
    let (left_mult, right_mult) = kind.multipliers();
    let right = one_side(tau, z_right, right_mult);
    let left = one_side(tau, -z_left, left_mult);
    let mut points: Vec<f64> = left.iter().rev().map(|p| -p).collect();
    points.push(0.0);
    points.extend(right);
    BreakpointArray::from_points(points, tau, kind)
}

pub fn outer_breakpoints(tau: f64, z_left: f64, z_right: f64) -> Result<BreakpointArray> {
    build_array(tau, z_left, z_right, ApproxKind::Outer)
}

pub fn inner_breakpoints(tau: f64, z_left: f64, z_right: f64) -> Result<BreakpointArray> {
    build_array(tau, z_left, z_right, ApproxKind::Inner)
}

pub fn breakpoints(kind: ApproxKind, tau: f64, z_left: f64, z_right: f64) -> Result<BreakpointArray> {
    build_array(tau, z_left, z_right, kind)
}

/// Slope/intercept pair of one linear piece.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub slope: f64,
    pub intercept: f64,
}

impl Piece {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        self.slope * z + self.intercept
    }

    fn tangent(at: f64) -> Self {
        let slope = pdf(at);
        Self { slope, intercept: cdf(at) - slope * at }
    }

    fn secant(a: f64, b: f64) -> Self {
        let slope = (cdf(b) - cdf(a)) / (b - a);
        Self { slope, intercept: cdf(a) - slope * a }
    }
}

/// Coefficients of Φ̄ (OUTER) or Φ̲ (INNER).
///
/// OUTER: `right[i]` is the tangent at ž_i for i = 0..=R; `left[i-1]` is the
/// secant over [ž_{-i}, ž_{-i+1}] for i = 1..=L.
/// INNER: `right[i-1]` is the secant over [ž_{i-1}, ž_i] for i = 1..=R;
/// `left[i]` is the tangent at ž_{-i} for i = 0..=L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwlApprox {
    pub breakpoints: BreakpointArray,
    pub right_coeffs: Vec<Piece>,
    pub left_coeffs: Vec<Piece>,
    pub kind: ApproxKind,
}

pub fn build_pwl(bp: BreakpointArray) -> PwlApprox {
    let (l, r) = (bp.left_count as isize, bp.right_count as isize);
    let (right_coeffs, left_coeffs) = match bp.kind {
        ApproxKind::Outer => (
            (0..=r).map(|i| Piece::tangent(bp.at(i))).collect(),
            (1..=l).map(|i| Piece::secant(bp.at(-i), bp.at(-i + 1))).collect(),
        ),
        ApproxKind::Inner => (
            (1..=r).map(|i| Piece::secant(bp.at(i - 1), bp.at(i))).collect(),
            (0..=l).map(|i| Piece::tangent(bp.at(-i))).collect(),
        ),
    };
    PwlApprox { kind: bp.kind, breakpoints: bp, right_coeffs, left_coeffs }
}

fn min_pieces(pieces: &[Piece], cap: f64, z: f64) -> f64 {
    pieces.iter().fold(cap, |m, p| m.min(p.eval(z)))
}

fn max_pieces(pieces: &[Piece], floor: f64, z: f64) -> f64 {
    pieces.iter().fold(floor, |m, p| m.max(p.eval(z)))
}

impl PwlApprox {
    /// Φ(ž_{-L}), the outer approximation's floor.
    pub fn left_floor(&self) -> f64 {
        cdf(self.breakpoints.left_end())
    }

    /// Φ(ž_R), the inner approximation's cap.
    pub fn right_cap(&self) -> f64 {
        cdf(self.breakpoints.right_end())
    }

    /// Evaluates whichever approximation this is.
    pub fn eval(&self, z: f64) -> f64 {
        match self.kind {
            ApproxKind::Outer => {
                if z >= 0.0 {
                    min_pieces(&self.right_coeffs, 1.0, z)
                } else {
                    max_pieces(&self.left_coeffs, self.left_floor(), z)
                }
            }
            ApproxKind::Inner => {
                if z >= 0.0 {
                    min_pieces(&self.right_coeffs, self.right_cap(), z)
                } else {
                    max_pieces(&self.left_coeffs, 0.0, z)
                }
            }
        }
    }

    /// Signed deviation from Φ in the certified direction (non-negative when
    /// the approximation is on its side).
    pub fn deviation(&self, z: f64) -> f64 {
        match self.kind {
            ApproxKind::Outer => self.eval(z) - cdf(z),
            ApproxKind::Inner => cdf(z) - self.eval(z),
        }
    }
}

fn check_kind(found: ApproxKind, wanted: ApproxKind) -> Result<()> {
    if found == wanted {
        Ok(())
    } else {
        Err(Error::Usage(format!("expected an {wanted} approximation, got {found}")))
    }
}

pub fn eval_outer(pwl: &PwlApprox, z: f64) -> Result<f64> {
    check_kind(pwl.kind, ApproxKind::Outer)?;
    if !z.is_finite() {
        return Err(Error::Domain(format!("argument must be finite, got {z}")));
    }
    Ok(pwl.eval(z))
}

pub fn eval_inner(pwl: &PwlApprox, z: f64) -> Result<f64> {
    check_kind(pwl.kind, ApproxKind::Inner)?;
    if !z.is_finite() {
        return Err(Error::Domain(format!("argument must be finite, got {z}")));
    }
    Ok(pwl.eval(z))
}

pub fn certify_error(pwl: &PwlApprox, grid_step: f64) -> Result<f64> {
    certify_error_with(pwl, grid_step, Exec::default())
}

/// Scans [ž_{-L} - 2, ž_R + 2] and returns the largest deviation, failing at
/// the first grid point (in z order) that is on the wrong side of Φ or more
/// than τ away.
pub fn certify_error_with(pwl: &PwlApprox, grid_step: f64, exec: Exec) -> Result<f64> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(Error::Domain(format!("grid step must be positive, got {grid_step}")));
    }
    let lo = pwl.breakpoints.left_end() - 2.0;
    let hi = pwl.breakpoints.right_end() + 2.0;
    let steps = ((hi - lo) / grid_step).floor() as usize;
    let tau = pwl.breakpoints.tau();
    let z_at = |j: usize| if j > steps { hi } else { lo + j as f64 * grid_step };
    let devs = exec.map_range(steps + 2, |j| pwl.deviation(z_at(j)));
    let mut max = f64::NEG_INFINITY;
    for (j, &d) in devs.iter().enumerate() {
        let z = z_at(j);
        if d < -ONE_SIDED_SLACK {
            return Err(Error::Certification {
                z,
                reason: format!("{} approximation crosses Phi by {:e}", pwl.kind, -d),
            });
        }
        if d > tau {
            return Err(Error::Certification {
                z,
                reason: format!("deviation {d:e} exceeds tau = {tau:e}"),
            });
        }
        max = max.max(d);
    }
    Ok(max)
}

/// One row of a breakpoint-count sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbePoint {
    pub tau: f64,
    pub count: usize,
    /// count / √((1/τ)·ln(1/τ))
    pub bound_ratio: f64,
}

/// Builds arrays with tail-matched endpoints for each τ and reports their size.
pub fn count_scaling_probe(taus: &[f64], kind: ApproxKind) -> Result<Vec<ProbePoint>> {
    if taus.iter().any(|&t| !(t > 0.0 && t < 0.5)) {
        return Err(Error::Domain("probe taus must lie in (0, 0.5)".into()));
    }
    if taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("probe taus must be strictly decreasing".into()));
    }
    taus.iter()
        .map(|&tau| {
            let end = tail_endpoint(tau)?.max(1.0);
            let count = breakpoints(kind, tau, -end, end)?.len();
            Ok(ProbePoint { tau, count, bound_ratio: count as f64 / scaling_bound(tau) })
        })
        .collect()
}

/// √((1/τ)·ln(1/τ))
pub fn scaling_bound(tau: f64) -> f64 {
    ((1.0 / tau) * (1.0 / tau).ln()).sqrt()
}
