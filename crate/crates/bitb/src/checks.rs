//! Residual measurements for the martingale identities, shared by the
//! `properties` suite and the acceptance target.

use bitb_core::accretive::AccretivePair;
use bitb_core::grid_function::{DyadicRect, GridFunction};
use bitb_core::martingale::{decompose, double_diff, double_diff_adjoint, local_double_diff, reconstruct};
use bitb_core::{Result, C64};

/// `max |f − reconstruct(decompose(f))|`.
pub fn reconstruction_error(f: &GridFunction, pair: &AccretivePair) -> Result<f64> {
    reconstruct(&decompose(f, pair)?)?.max_abs_diff(f)
}

/// `(Σ ‖Δ_{p,q} f‖² + boundary terms) / ‖f‖²`.
pub fn frame_ratio(f: &GridFunction, pair: &AccretivePair) -> Result<f64> {
    let c = decompose(f, pair)?;
    let energy: f64 = c
        .double
        .iter()
        .chain(&c.row)
        .chain(&c.column)
        .chain(std::iter::once(&c.corner))
        .map(|g| g.norm_l2().powi(2))
        .sum();
    Ok(energy / f.norm_l2().powi(2))
}

/// Largest violations of the structural properties of the double differences.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Structural {
    /// `|∫_I b₁ Δ_{p,q} f dx₁|` over scale-`p` cubes `I` and second-axis cells,
    /// and the same in the second variable.
    pub cancellation: f64,
    /// `|Δ_{p',q'} Δ_{p,q} f − [p = p', q = q'] Δ_{p,q} f|`.
    pub orthogonality: f64,
    /// Spread of `Δ_{p,q} f` inside each rectangle of scale `(p+1, q+1)`.
    pub constancy: f64,
    /// `|Δ_R f|` outside `R`, one rectangle per scale pair.
    pub support: f64,
}

impl Structural {
    pub fn max(self, other: Structural) -> Structural {
        Structural {
            cancellation: self.cancellation.max(other.cancellation),
            orthogonality: self.orthogonality.max(other.orthogonality),
            constancy: self.constancy.max(other.constancy),
            support: self.support.max(other.support),
        }
    }
}

/// Every scale pair is checked; `rect_pick` selects which cube of each scale
/// the support check localises to.
pub fn structural_residuals(f: &GridFunction, pair: &AccretivePair, rect_pick: usize) -> Result<Structural> {
    let [a1, a2] = f.axes;
    let (n1, n2) = (a1.cells(), a2.cells());
    let b = pair.tensor();
    let mut out = Structural::default();
    for p in 0..a1.depth {
        for q in 0..a2.depth {
            let d = double_diff(f, pair, p, q)?;
            let bd = d.mul(&b)?;
            let (m1, m2) = (a1.cube_map(p), a2.cube_map(q));
            let mut s1 = vec![C64::new(0.0, 0.0); a1.cubes_at(p) * n2];
            let mut s2 = vec![C64::new(0.0, 0.0); n1 * a2.cubes_at(q)];
            for c1 in 0..n1 {
                for c2 in 0..n2 {
                    let v = bd.at(c1, c2);
                    s1[m1[c1] * n2 + c2] += v * a1.cell_volume();
                    s2[c1 * a2.cubes_at(q) + m2[c2]] += v * a2.cell_volume();
                }
            }
            out.cancellation = s1.iter().chain(&s2).map(|z| z.norm_sqr().sqrt()).fold(out.cancellation, f64::max);

            let (f1, f2) = (a1.cube_map(p + 1), a2.cube_map(q + 1));
            let k2 = a2.cubes_at(q + 1);
            let mut first: Vec<Option<C64>> = vec![None; a1.cubes_at(p + 1) * k2];
            for c1 in 0..n1 {
                for c2 in 0..n2 {
                    let v = d.at(c1, c2);
                    let slot = &mut first[f1[c1] * k2 + f2[c2]];
                    match slot {
                        None => *slot = Some(v),
                        Some(w) => out.constancy = out.constancy.max((v - *w).norm_sqr().sqrt()),
                    }
                }
            }

            for pp in 0..a1.depth {
                for qq in 0..a2.depth {
                    let dd = double_diff(&d, pair, pp, qq)?;
                    let r = if (pp, qq) == (p, q) { dd.max_abs_diff(&d)? } else { dd.norm_linf() };
                    out.orthogonality = out.orthogonality.max(r);
                }
            }

            let rect = DyadicRect {
                first: a1.cube(p, rect_pick % a1.cubes_at(p))?,
                second: a2.cube(q, rect_pick % a2.cubes_at(q))?,
            };
            let local = local_double_diff(f, pair, &rect)?;
            let inside = GridFunction::indicator(f.axes, &rect)?;
            for (v, chi) in local.values.iter().zip(&inside.values) {
                if chi.re == 0.0 {
                    out.support = out.support.max(v.norm_sqr().sqrt());
                }
            }
        }
    }
    Ok(out)
}

/// `max |b · Δ_{p,q} f − Δ*_{p,q}(b f)|` over all scale pairs, for `f`
/// scaled to unit `L²` norm.
pub fn intertwining_residual(f: &GridFunction, pair: &AccretivePair) -> Result<f64> {
    let f = f.scale(C64::new(1.0 / f.norm_l2(), 0.0));
    let b = pair.tensor();
    let bf = f.mul(&b)?;
    let mut worst = 0.0f64;
    for p in 0..f.axes[0].depth {
        for q in 0..f.axes[1].depth {
            let lhs = double_diff(&f, pair, p, q)?.mul(&b)?;
            let rhs = double_diff_adjoint(&bf, pair, p, q)?;
            worst = worst.max(lhs.max_abs_diff(&rhs)?);
        }
    }
    Ok(worst)
}
