use super::{BlockLayout, BuildOptions, MiqpModel, ModelBounds, VarKind};
use crate::error::{Error, Result};
use crate::pwl::{ApproxKind, PwlApprox};

/// Values for one block's variables, in the order of the matching
/// [`BlockLayout`] fields.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWitness {
    pub z: f64,
    pub zeta: f64,
    pub alpha: Vec<f64>,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub frakz: Vec<f64>,
}

impl BlockWitness {
    /// Writes the witness into a full assignment vector of the model that
    /// `layout` belongs to. Adjacency binaries, if present, are derived from α.
    pub fn scatter(&self, layout: &BlockLayout, values: &mut [f64]) {
        values[layout.z] = self.z;
        values[layout.zeta] = self.zeta;
        for (idx, v) in [(&layout.alpha, &self.alpha), (&layout.t, &self.t), (&layout.y, &self.y), (&layout.frakz, &self.frakz)] {
            for (&j, &x) in idx.iter().zip(v) {
                values[j] = x;
            }
        }
        if !layout.sos_binaries.is_empty() {
            for &d in &layout.sos_binaries {
                values[d] = 0.0;
            }
            if let Some(first) = self.alpha.iter().position(|&a| a != 0.0) {
                let segment = if self.alpha.get(first + 1).is_some_and(|&a| a != 0.0) || first == 0 {
                    first
                } else {
                    first - 1
                };
                values[layout.sos_binaries[segment]] = 1.0;
            }
        }
    }
}

fn check_range(z: f64, zeta: f64, bounds: &ModelBounds) -> Result<()> {
    if !z.is_finite() || !zeta.is_finite() {
        return Err(Error::Domain("z and zeta must be finite".into()));
    }
    if z < bounds.z_lo || z > bounds.z_hi {
        return Err(Error::Precondition(format!("z = {z} outside [{}, {}]", bounds.z_lo, bounds.z_hi)));
    }
    Ok(())
}

fn one_hot(len: usize, at: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[at] = 1.0;
    v
}

/// Builds an assignment of the outer block proving Φ̄(z) ≥ ζ, or `None` when
/// Φ̄(z) < ζ. Cases: z ≥ 0 uses t_3; ž_{-L} ≤ z < 0 interpolates between two
/// adjacent α; z < ž_{-L} uses t_1.
pub fn witness_outer(z: f64, zeta: f64, pwl: &PwlApprox, bounds: &ModelBounds) -> Result<Option<BlockWitness>> {
    if pwl.kind != ApproxKind::Outer {
        return Err(Error::Usage("witness_outer needs an OUTER approximation".into()));
    }
    check_range(z, zeta, bounds)?;
    if zeta > 1.0 || pwl.eval(z) < zeta {
        return Ok(None);
    }
    let bp = &pwl.breakpoints;
    let l = bp.left_count();
    let mut alpha = vec![0.0; l + 1];
    let (t, y) = if z >= 0.0 {
        (one_hot(3, 2), vec![0.0, 0.0, z])
    } else if z >= bp.left_end() {
        // ž_{-j} ≤ z < ž_{-j+1}
        let j = (1..=l).find(|&j| bp.at(-(j as isize)) <= z).expect("z lies above ž_{-L}");
        let (lo, hi) = (bp.at(-(j as isize)), bp.at(-(j as isize) + 1));
        let w = (hi - z) / (hi - lo);
        alpha[j] = w;
        alpha[j - 1] = 1.0 - w;
        let y2 = alpha.iter().enumerate().map(|(i, a)| a * bp.at(-(i as isize))).sum();
        (one_hot(3, 1), vec![0.0, y2, 0.0])
    } else {
        (one_hot(3, 0), vec![z, 0.0, 0.0])
    };
    Ok(Some(BlockWitness { z, zeta, alpha, t, y, frakz: Vec::new() }))
}

/// Best value the inner block can certify at z, with the branch achieving it:
/// (value, t index, tangent index for the α branch).
fn inner_value(pwl: &PwlApprox, z: f64) -> Option<(f64, usize, usize)> {
    let bp = &pwl.breakpoints;
    let l = bp.left_count();
    let mut best: Option<(f64, usize, usize)> = None;
    let mut offer = |v: f64, branch: usize, i: usize| {
        if best.is_none_or(|(b, _, _)| v > b) {
            best = Some((v, branch, i));
        }
    };
    if z >= bp.right_end() {
        offer(pwl.right_cap(), 3, 0);
    }
    if (0.0..=bp.right_end()).contains(&z) {
        let v = pwl.right_coeffs.iter().fold(f64::INFINITY, |m, p| m.min(p.eval(z)));
        offer(v, 2, 0);
    }
    if (bp.left_end()..=0.0).contains(&z) {
        for (i, p) in pwl.left_coeffs.iter().take(l).enumerate() {
            if z >= bp.at(-(i as isize) - 1) {
                offer(p.eval(z), 1, i);
            }
        }
    }
    if z <= bp.left_end() {
        let v = pwl.left_coeffs[l].eval(z);
        if v >= 0.0 {
            offer(v, 0, 0);
        }
    }
    best
}

/// Builds an assignment of the inner block proving ζ is attainable at z, or
/// `None` when no branch of the block reaches ζ. Cases: z ≥ ž_R uses t_4;
/// z ∈ [0, ž_R] uses t_3; z ∈ [ž_{-L}, 0] selects one tangent through a
/// single α_i = 1 with 𝔷_i = z; z ≤ ž_{-L} uses t_1 and the last tangent.
///
/// This decides by the block's own branches, which agree with Φ̲ except on
/// (ž_{-L}, ž_{-L+1}), where the block lacks the tangent at ž_{-L}, and
/// where every available tangent is negative while ζ ≤ 0. For ζ ∈ [0, 1] the
/// disagreement window has width at most Φ(ž_{-L+1}).
pub fn witness_inner(z: f64, zeta: f64, pwl: &PwlApprox, bounds: &ModelBounds) -> Result<Option<BlockWitness>> {
    if pwl.kind != ApproxKind::Inner {
        return Err(Error::Usage("witness_inner needs an INNER approximation".into()));
    }
    check_range(z, zeta, bounds)?;
    let l = pwl.breakpoints.left_count();
    let Some((value, branch, i)) = inner_value(pwl, z) else {
        return Ok(None);
    };
    if value < zeta {
        return Ok(None);
    }
    let mut alpha = vec![0.0; l];
    let mut frakz = vec![0.0; l];
    let mut y = vec![0.0; 4];
    if branch == 1 {
        alpha[i] = 1.0;
        frakz[i] = z;
    }
    y[branch] = z;
    Ok(Some(BlockWitness { z, zeta, alpha, t: one_hot(4, branch), y, frakz }))
}

/// A model holding only z_1, ζ_1 ∈ [0, 1] and one block, for checking
/// witnesses against the emitted rows.
pub fn block_model(pwl: &PwlApprox, opts: &BuildOptions) -> Result<(MiqpModel, BlockLayout)> {
    let mut m = MiqpModel::new();
    m.add_var("z_1", VarKind::Continuous, Some(opts.bounds.z_lo), Some(opts.bounds.z_hi))?;
    m.add_var("zeta_1", VarKind::Continuous, Some(0.0), Some(1.0))?;
    let layout = match pwl.kind {
        ApproxKind::Outer => super::attach_outer_block_with(&mut m, 0, pwl, opts)?,
        ApproxKind::Inner => super::attach_inner_block(&mut m, 0, pwl, &opts.bounds)?,
    };
    Ok((m, layout))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pwl::{build_pwl, inner_breakpoints, outer_breakpoints};

    fn check(model: &MiqpModel, layout: &BlockLayout, w: &BlockWitness) {
        let mut values = vec![0.0; model.num_vars()];
        w.scatter(layout, &mut values);
        let v = model.violations(&values, 1e-9).unwrap();
        assert!(v.is_empty(), "z = {}, zeta = {}: {v:?}", w.z, w.zeta);
    }

    #[test]
    fn outer_cases() {
        let pwl = build_pwl(outer_breakpoints(0.005, -6.466, 6.466).unwrap());
        let b = ModelBounds::default();
        let (m, layout) = block_model(&pwl, &BuildOptions::default()).unwrap();

        let w = witness_outer(0.5, 0.5, &pwl, &b).unwrap().unwrap();
        assert_eq!(w.t, vec![0.0, 0.0, 1.0]);
        assert_eq!(w.y[2], 0.5);
        check(&m, &layout, &w);

        let w = witness_outer(-2.345, 0.0, &pwl, &b).unwrap().unwrap();
        let nz: Vec<usize> = (0..w.alpha.len()).filter(|&i| w.alpha[i] > 0.0).collect();
        assert_eq!(nz.len(), 2);
        assert_eq!(nz[1], nz[0] + 1);
        check(&m, &layout, &w);

        assert!(witness_outer(-8.0, 0.5, &pwl, &b).unwrap().is_none());
        let w = witness_outer(-8.0, 0.0, &pwl, &b).unwrap().unwrap();
        check(&m, &layout, &w);
        assert!(witness_outer(1e5, 0.0, &pwl, &b).is_err());
    }

    #[test]
    fn outer_binarized() {
        let pwl = build_pwl(outer_breakpoints(0.005, -6.466, 6.466).unwrap());
        let opts = BuildOptions { sos2_as_binary: true, ..Default::default() };
        let (m, layout) = block_model(&pwl, &opts).unwrap();
        for z in [-6.466, -3.1, -1.0, -0.01, 0.0, 2.0] {
            let w = witness_outer(z, 0.0, &pwl, &opts.bounds).unwrap().unwrap();
            check(&m, &layout, &w);
        }
    }

    #[test]
    fn inner_cases() {
        let pwl = build_pwl(inner_breakpoints(0.005, -6.466, 6.466).unwrap());
        let b = ModelBounds::default();
        let (m, layout) = block_model(&pwl, &BuildOptions::default()).unwrap();

        let w = witness_inner(7.0, pwl.right_cap(), &pwl, &b).unwrap().unwrap();
        assert_eq!(w.t, vec![0.0, 0.0, 0.0, 1.0]);
        check(&m, &layout, &w);

        let w = witness_inner(-1.7, 0.01, &pwl, &b).unwrap().unwrap();
        assert_eq!(w.alpha.iter().filter(|&&a| a == 1.0).count(), 1);
        let i = w.alpha.iter().position(|&a| a == 1.0).unwrap();
        assert_eq!(w.frakz[i], -1.7);
        check(&m, &layout, &w);

        assert!(witness_inner(0.3, pwl.right_cap() + 1e-12, &pwl, &b).unwrap().is_none());
    }

    #[test]
    fn inner_corner_near_left_end() {
        // Between ž_{-L} and ž_{-L+1} only the tangent at ž_{-L+1} is
        // available to the block, so a ζ just above it is rejected although
        // Φ̲ (which also uses the tangent at ž_{-L}) may reach it.
        let pwl = build_pwl(inner_breakpoints(0.005, -6.466, 6.466).unwrap());
        let bp = &pwl.breakpoints;
        let l = bp.left_count() as isize;
        let z = bp.at(-l) + 1e-3;
        let block_best = pwl.left_coeffs[bp.left_count() - 1].eval(z);
        let phi_lower = pwl.eval(z);
        assert!(phi_lower >= block_best);
        // For ζ ≥ 0 the disagreement window is (max(0, block_best), Φ̲(z)].
        assert!(phi_lower - block_best.max(0.0) <= crate::special::cdf(bp.at(-l + 1)));
    }
}
