//! Adapted conditional expectations and martingale differences.
//!
//! For a weight `b` on one axis,
//! `E_p^b f = Σ_{ℓ(I)=2^-p} (∫_I f b / ∫_I b) χ_I` and `Δ_p^b = E_{p+1}^b − E_p^b`
//! for `0 ≤ p < depth`. The bilinear adjoint is
//! `E_p^{b*} f = b Σ_I (∫_I f / ∫_I b) χ_I`, so that `⟨E^b f, g⟩ = ⟨f, E^{b*} g⟩`
//! without conjugation and `M_b Δ^b = Δ^{b*} M_b`.
//!
//! Two-parameter operators are tensor products: `E_{p,q} = E_p^{b₁} ⊗ E_q^{b₂}`,
//! `Δ_{p,q} = Δ_p^{b₁} ⊗ Δ_q^{b₂}`. Since `E_depth = I` and `E_0` is the
//! full average, `f = (E_0 + Σ_p Δ_p) ⊗ (E_0 + Σ_q Δ_q) f`, which is what
//! [`decompose`] stores.

use alloc::vec::Vec;

use crate::accretive::AccretivePair;
use crate::grid_function::{Axis, AxisFunction, DyadicRect, GridFunction, RealField, DEGENERATE_RATIO};
use crate::math;
use crate::{Error, Result, C64};

/// Which parameter an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    First,
    Second,
}

/// Applies `E_p^b` (or its adjoint) along one axis of data laid out as
/// `[outer][axis cell][inner]`.
#[allow(clippy::too_many_arguments)]
fn block_op(
    values: &[C64],
    outer: usize,
    inner: usize,
    axis: Axis,
    axis_id: u8,
    p: u32,
    w: &[C64],
    adjoint: bool,
) -> Result<Vec<C64>> {
    if p > axis.depth {
        return Err(Error::InvalidParameter(alloc::format!(
            "scale {p} exceeds the depth {} of axis {axis_id}",
            axis.depth
        )));
    }
    if p == axis.depth {
        return Ok(values.to_vec());
    }
    let n = axis.cells();
    let cubes = axis.cubes_at(p);
    let map = axis.cube_map(p);
    let zero = C64::new(0.0, 0.0);
    let mut wsum = alloc::vec![zero; cubes];
    let mut mass = alloc::vec![0.0; cubes];
    for c in 0..n {
        wsum[map[c]] += w[c];
        mass[map[c]] += math::cabs(w[c]);
    }
    let mut inv = Vec::with_capacity(cubes);
    for k in 0..cubes {
        if !(math::cabs(wsum[k]) > DEGENERATE_RATIO * mass[k]) {
            return Err(Error::DegenerateWeight { axis: axis_id, scale: p, cube: k });
        }
        inv.push(C64::new(1.0, 0.0) / wsum[k]);
    }
    let mut out = alloc::vec![zero; values.len()];
    let mut acc = alloc::vec![zero; cubes * inner];
    // The forward average is taken relative to the first value seen in each
    // cube, so that a function constant on a cube is reproduced bit for bit.
    let mut reference = alloc::vec![zero; cubes * inner];
    let mut seen = alloc::vec![false; cubes];
    for o in 0..outer {
        acc.iter_mut().for_each(|a| *a = zero);
        seen.iter_mut().for_each(|s| *s = false);
        for c in 0..n {
            let base = (o * n + c) * inner;
            let k = map[c];
            let src = &values[base..base + inner];
            let row = &mut acc[k * inner..(k + 1) * inner];
            if adjoint {
                for (a, v) in row.iter_mut().zip(src) {
                    *a += *v;
                }
            } else {
                if !seen[k] {
                    reference[k * inner..(k + 1) * inner].copy_from_slice(src);
                    seen[k] = true;
                }
                let wc = w[c];
                for ((a, v), r) in row.iter_mut().zip(src).zip(&reference[k * inner..(k + 1) * inner]) {
                    *a += (*v - *r) * wc;
                }
            }
        }
        for c in 0..n {
            let base = (o * n + c) * inner;
            let k = map[c];
            let row = &acc[k * inner..(k + 1) * inner];
            if adjoint {
                let factor = w[c] * inv[k];
                for (dst, a) in out[base..base + inner].iter_mut().zip(row) {
                    *dst = *a * factor;
                }
            } else {
                let refs = &reference[k * inner..(k + 1) * inner];
                for ((dst, a), r) in out[base..base + inner].iter_mut().zip(row).zip(refs) {
                    *dst = *a * inv[k] + *r;
                }
            }
        }
    }
    Ok(out)
}

fn check_weight(f_axis: Axis, b: &AxisFunction) -> Result<()> {
    if f_axis == b.axis {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(alloc::format!(
            "weight lives on {:?} but the function on {f_axis:?}",
            b.axis
        )))
    }
}

fn along(f: &GridFunction, var: Var, p: u32, b: &AxisFunction, adjoint: bool) -> Result<GridFunction> {
    let (n1, n2) = (f.axes[0].cells(), f.axes[1].cells());
    let values = match var {
        Var::First => {
            check_weight(f.axes[0], b)?;
            block_op(&f.values, 1, n2, f.axes[0], 1, p, &b.values, adjoint)?
        }
        Var::Second => {
            check_weight(f.axes[1], b)?;
            block_op(&f.values, n1, 1, f.axes[1], 2, p, &b.values, adjoint)?
        }
    };
    Ok(GridFunction { axes: f.axes, values })
}

fn check_diff_scale(axis: Axis, p: u32) -> Result<()> {
    if p >= axis.depth {
        Err(Error::InvalidParameter(alloc::format!(
            "martingale difference Δ_{p} needs p < depth {}",
            axis.depth
        )))
    } else {
        Ok(())
    }
}

/// `E_p^b` acting on one variable of a two-parameter function.
pub fn expect_axis(f: &GridFunction, var: Var, p: u32, b: &AxisFunction) -> Result<GridFunction> {
    along(f, var, p, b, false)
}

/// `E_p^{b*}` acting on one variable.
pub fn expect_axis_adjoint(f: &GridFunction, var: Var, p: u32, b: &AxisFunction) -> Result<GridFunction> {
    along(f, var, p, b, true)
}

/// `Δ_p^b` acting on one variable.
pub fn diff_axis(f: &GridFunction, var: Var, p: u32, b: &AxisFunction) -> Result<GridFunction> {
    check_diff_scale(b.axis, p)?;
    along(f, var, p + 1, b, false)?.sub(&along(f, var, p, b, false)?)
}

/// `Δ_p^{b*}` acting on one variable.
pub fn diff_axis_adjoint(f: &GridFunction, var: Var, p: u32, b: &AxisFunction) -> Result<GridFunction> {
    check_diff_scale(b.axis, p)?;
    along(f, var, p + 1, b, true)?.sub(&along(f, var, p, b, true)?)
}

/// `E_p^b` for a one-parameter function.
pub fn axis_expect(f: &AxisFunction, p: u32, b: &AxisFunction) -> Result<AxisFunction> {
    check_weight(f.axis, b)?;
    Ok(AxisFunction { axis: f.axis, values: block_op(&f.values, 1, 1, f.axis, 1, p, &b.values, false)? })
}

/// `E_p^{b*}` for a one-parameter function.
pub fn axis_expect_adjoint(f: &AxisFunction, p: u32, b: &AxisFunction) -> Result<AxisFunction> {
    check_weight(f.axis, b)?;
    Ok(AxisFunction { axis: f.axis, values: block_op(&f.values, 1, 1, f.axis, 1, p, &b.values, true)? })
}

/// `Δ_p^b` for a one-parameter function.
pub fn axis_diff(f: &AxisFunction, p: u32, b: &AxisFunction) -> Result<AxisFunction> {
    check_diff_scale(f.axis, p)?;
    let hi = axis_expect(f, p + 1, b)?;
    let lo = axis_expect(f, p, b)?;
    Ok(AxisFunction { axis: f.axis, values: hi.values.iter().zip(&lo.values).map(|(a, b)| a - b).collect() })
}

/// `Δ_p^{b*}` for a one-parameter function.
pub fn axis_diff_adjoint(f: &AxisFunction, p: u32, b: &AxisFunction) -> Result<AxisFunction> {
    check_diff_scale(f.axis, p)?;
    let hi = axis_expect_adjoint(f, p + 1, b)?;
    let lo = axis_expect_adjoint(f, p, b)?;
    Ok(AxisFunction { axis: f.axis, values: hi.values.iter().zip(&lo.values).map(|(a, b)| a - b).collect() })
}

/// `E_p^{b₁} E_q^{b₂} f`.
pub fn expect(f: &GridFunction, pair: &AccretivePair, p: u32, q: u32) -> Result<GridFunction> {
    pair.check_mesh(f.axes)?;
    expect_axis(&expect_axis(f, Var::Second, q, &pair.b2)?, Var::First, p, &pair.b1)
}

/// `E_p^{b₁*} E_q^{b₂*} f`.
pub fn adjoint_expect(f: &GridFunction, pair: &AccretivePair, p: u32, q: u32) -> Result<GridFunction> {
    pair.check_mesh(f.axes)?;
    expect_axis_adjoint(&expect_axis_adjoint(f, Var::Second, q, &pair.b2)?, Var::First, p, &pair.b1)
}

/// `Δ_p^{b₁} Δ_q^{b₂} f`.
pub fn double_diff(f: &GridFunction, pair: &AccretivePair, p: u32, q: u32) -> Result<GridFunction> {
    pair.check_mesh(f.axes)?;
    diff_axis(&diff_axis(f, Var::Second, q, &pair.b2)?, Var::First, p, &pair.b1)
}

/// `Δ_p^{b₁*} Δ_q^{b₂*} f`.
pub fn double_diff_adjoint(f: &GridFunction, pair: &AccretivePair, p: u32, q: u32) -> Result<GridFunction> {
    pair.check_mesh(f.axes)?;
    diff_axis_adjoint(&diff_axis_adjoint(f, Var::Second, q, &pair.b2)?, Var::First, p, &pair.b1)
}

/// `Δ_{I×J} f = χ_{I×J} Δ_{p,q} f` with `ℓ(I) = 2^-p`, `ℓ(J) = 2^-q`.
pub fn local_double_diff(f: &GridFunction, pair: &AccretivePair, rect: &DyadicRect) -> Result<GridFunction> {
    double_diff(f, pair, rect.first.scale, rect.second.scale)?.restrict(rect)
}

/// The projection onto `{f : E_0^{b₁} f = 0 and E_0^{b₂} f = 0}` along the
/// boundary terms, `(I − E_0^{b₁}) ⊗ (I − E_0^{b₂})`. Equals `Σ_{p,q} Δ_{p,q} f`.
pub fn mean_zero_projection(f: &GridFunction, pair: &AccretivePair) -> Result<GridFunction> {
    pair.check_mesh(f.axes)?;
    let g = f.sub(&expect_axis(f, Var::Second, 0, &pair.b2)?)?;
    g.sub(&expect_axis(&g, Var::First, 0, &pair.b1)?)
}

/// All pieces of the two-parameter telescoping expansion of a function.
#[derive(Clone, Debug, PartialEq)]
pub struct MartingaleCoefficients {
    pub axes: [Axis; 2],
    /// `Δ_p Δ_q f`, stored at `p · depth₂ + q`.
    pub double: Vec<GridFunction>,
    /// `Δ_p E_0 f` for `0 ≤ p < depth₁`.
    pub row: Vec<GridFunction>,
    /// `E_0 Δ_q f` for `0 ≤ q < depth₂`.
    pub column: Vec<GridFunction>,
    /// `E_0 E_0 f`.
    pub corner: GridFunction,
}

impl MartingaleCoefficients {
    pub fn depths(&self) -> [u32; 2] {
        [self.axes[0].depth, self.axes[1].depth]
    }

    pub fn get(&self, p: u32, q: u32) -> &GridFunction {
        &self.double[(p * self.axes[1].depth + q) as usize]
    }
}

/// Every `Δ_p Δ_q f`, `Δ_p E_0 f`, `E_0 Δ_q f` and `E_0 E_0 f`.
pub fn decompose(f: &GridFunction, pair: &AccretivePair) -> Result<MartingaleCoefficients> {
    pair.check_mesh(f.axes)?;
    let [a1, a2] = f.axes;
    // Second variable first: E_q^{b₂} f for every q, then differences.
    let e2: Vec<GridFunction> =
        (0..=a2.depth).map(|q| expect_axis(f, Var::Second, q, &pair.b2)).collect::<Result<_>>()?;
    let mut second_pieces = Vec::with_capacity(a2.depth as usize + 1);
    second_pieces.push(e2[0].clone());
    for q in 0..a2.depth as usize {
        second_pieces.push(e2[q + 1].sub(&e2[q])?);
    }
    let split_first = |g: &GridFunction| -> Result<(GridFunction, Vec<GridFunction>)> {
        let e1: Vec<GridFunction> =
            (0..=a1.depth).map(|p| expect_axis(g, Var::First, p, &pair.b1)).collect::<Result<_>>()?;
        let diffs = (0..a1.depth as usize).map(|p| e1[p + 1].sub(&e1[p])).collect::<Result<_>>()?;
        Ok((e1[0].clone(), diffs))
    };
    let (corner, row) = split_first(&second_pieces[0])?;
    let mut column = Vec::with_capacity(a2.depth as usize);
    let mut by_q = Vec::with_capacity(a2.depth as usize);
    for g in &second_pieces[1..] {
        let (c, d) = split_first(g)?;
        column.push(c);
        by_q.push(d);
    }
    let mut double = Vec::with_capacity((a1.depth * a2.depth) as usize);
    for p in 0..a1.depth as usize {
        double.extend(by_q.iter().map(|row| row[p].clone()));
    }
    Ok(MartingaleCoefficients { axes: f.axes, double, row, column, corner })
}

/// Sums every stored piece.
pub fn reconstruct(c: &MartingaleCoefficients) -> Result<GridFunction> {
    let mut out = c.corner.clone();
    for g in c.double.iter().chain(&c.row).chain(&c.column) {
        out.add_assign(g)?;
    }
    Ok(out)
}

/// `S_b f = (Σ_{p,q} |Δ_p Δ_q f|²)^{1/2}`, pointwise. Boundary pieces are not
/// included; on the mean-zero class they vanish anyway.
pub fn square_function(f: &GridFunction, pair: &AccretivePair) -> Result<RealField> {
    let c = decompose(f, pair)?;
    Ok(square_of(&c))
}

pub(crate) fn square_of(c: &MartingaleCoefficients) -> RealField {
    let mut acc = alloc::vec![0.0; c.corner.cells()];
    for g in &c.double {
        for (a, v) in acc.iter_mut().zip(&g.values) {
            *a += v.norm_sqr();
        }
    }
    RealField { axes: c.axes, values: acc.into_iter().map(math::sqrt).collect() }
}

/// `f*_b = sup_{p,q} |E_p E_q f|` over `0 ≤ p ≤ depth₁`, `0 ≤ q ≤ depth₂`.
pub fn maximal_function(f: &GridFunction, pair: &AccretivePair) -> Result<RealField> {
    pair.check_mesh(f.axes)?;
    let mut best = alloc::vec![0.0f64; f.cells()];
    for q in 0..=f.axes[1].depth {
        let g = expect_axis(f, Var::Second, q, &pair.b2)?;
        for p in 0..=f.axes[0].depth {
            let h = expect_axis(&g, Var::First, p, &pair.b1)?;
            for (m, v) in best.iter_mut().zip(&h.values) {
                *m = m.max(math::cabs(*v));
            }
        }
    }
    Ok(RealField { axes: f.axes, values: best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic_grid::DyadicCube;
    use crate::grid_function::random_grid_function;
    use proptest::prelude::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn setup(d1: u32, m1: u8, d2: u32, m2: u8, seed: u64, unit: bool) -> (GridFunction, AccretivePair) {
        let axes = [Axis::new(d1, m1).unwrap(), Axis::new(d2, m2).unwrap()];
        let pair = if unit { AccretivePair::unit(axes) } else { AccretivePair::random(axes, seed, 0.5, 2.0).unwrap() };
        (random_grid_function(axes, seed ^ 0xabcdef), pair)
    }

    /// Cell-by-cell oracle for E_p^b along the first variable.
    fn naive_expect_first(f: &GridFunction, p: u32, b: &AxisFunction) -> GridFunction {
        let a = f.axes[0];
        GridFunction::from_fn(f.axes, |c1, c2| {
            let k = a.cube_of(c1, p);
            let (mut num, mut den) = (c(0.0), c(0.0));
            for x in (0..a.cells()).filter(|&x| a.cube_of(x, p) == k) {
                num += f.at(x, c2) * b.values[x];
                den += b.values[x];
            }
            num / den
        })
        .unwrap()
    }

    #[test]
    fn one_axis_difference_example() {
        let a = Axis::new(1, 1).unwrap();
        let b = AxisFunction::from_real(a, &[1.0, 2.0]).unwrap();
        let f = AxisFunction::from_real(a, &[1.0, 0.0]).unwrap();
        let d = axis_diff(&f, 0, &b).unwrap();
        assert!((d.values[0] - c(2.0 / 3.0)).norm() < 1e-15);
        assert!((d.values[1] - c(-1.0 / 3.0)).norm() < 1e-15);
    }

    #[test]
    fn expectation_matches_cellwise_oracle() {
        for (m1, m2) in [(1u8, 1u8), (2, 1), (1, 2)] {
            let (f, pair) = setup(3, m1, 2, m2, 17, false);
            for p in 0..=3 {
                let e = expect_axis(&f, Var::First, p, &pair.b1).unwrap();
                assert!(e.max_abs_diff(&naive_expect_first(&f, p, &pair.b1)).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_weight_names_the_cube() {
        let a = Axis::new(2, 1).unwrap();
        let axes = [a, a];
        let b1 = AxisFunction::from_real(a, &[1.0, 1.0, 1.0, -1.0]).unwrap();
        let f = GridFunction::constant(axes, c(1.0));
        let err = expect_axis(&f, Var::First, 1, &b1).unwrap_err();
        assert_eq!(err, Error::DegenerateWeight { axis: 1, scale: 1, cube: 1 });
    }

    #[test]
    fn reconstruction_and_parseval() {
        let (f, pair) = setup(3, 1, 2, 2, 5, true);
        let coeffs = decompose(&f, &pair).unwrap();
        assert!(reconstruct(&coeffs).unwrap().max_abs_diff(&f).unwrap() < 1e-12);
        let energy: f64 = coeffs
            .double
            .iter()
            .chain(&coeffs.row)
            .chain(&coeffs.column)
            .chain(core::iter::once(&coeffs.corner))
            .map(|g| g.norm_l2().powi(2))
            .sum();
        assert!((energy - f.norm_l2().powi(2)).abs() <= 1e-9 * energy);
    }

    #[test]
    fn local_difference_of_a_double_haar_function() {
        // h_I ⊗ h_J with I = [0,1/2), J = [1/2,1) at depth (2,2), b = 1.
        let a = Axis::new(2, 1).unwrap();
        let axes = [a, a];
        let h1 = AxisFunction::from_real(a, &[1.0, -1.0, 0.0, 0.0]).unwrap();
        let h2 = AxisFunction::from_real(a, &[0.0, 0.0, 1.0, -1.0]).unwrap();
        let f = h1.tensor(&h2);
        let pair = AccretivePair::unit(axes);
        let rect = DyadicRect {
            first: DyadicCube::new(1, 1, [0, 0]).unwrap(),
            second: DyadicCube::new(1, 1, [1, 0]).unwrap(),
        };
        assert!(local_double_diff(&f, &pair, &rect).unwrap().max_abs_diff(&f).unwrap() < 1e-15);
        let coeffs = decompose(&f, &pair).unwrap();
        for p in 0..2 {
            for q in 0..2 {
                let n = coeffs.get(p, q).norm_l2();
                if (p, q) == (1, 1) {
                    assert!((n - f.norm_l2()).abs() < 1e-15);
                } else {
                    assert!(n < 1e-15);
                }
            }
        }
    }

    #[test]
    fn mean_zero_projection_is_the_double_difference_sum() {
        let (f, pair) = setup(2, 2, 3, 1, 8, false);
        let coeffs = decompose(&f, &pair).unwrap();
        let mut sum = GridFunction::zeros(f.axes);
        for g in &coeffs.double {
            sum.add_assign(g).unwrap();
        }
        let proj = mean_zero_projection(&f, &pair).unwrap();
        assert!(proj.max_abs_diff(&sum).unwrap() < 1e-12);
        let again = mean_zero_projection(&proj, &pair).unwrap();
        assert!(again.max_abs_diff(&proj).unwrap() < 1e-12);
    }

    #[test]
    fn square_function_of_a_haar_function() {
        let a = Axis::new(1, 1).unwrap();
        let h = AxisFunction::from_real(a, &[1.0, -1.0]).unwrap();
        let f = h.tensor(&h);
        let s = square_function(&f, &AccretivePair::unit([a, a])).unwrap();
        assert!(s.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let m = maximal_function(&f, &AccretivePair::unit([a, a])).unwrap();
        assert!(m.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn maximal_function_matches_rectangle_oracle() {
        let (f, pair) = setup(3, 1, 2, 2, 31, true);
        let m = maximal_function(&f, &pair).unwrap();
        let [a1, a2] = f.axes;
        for c1 in 0..a1.cells() {
            for c2 in 0..a2.cells() {
                let mut best = 0.0f64;
                for p in 0..=a1.depth {
                    for q in 0..=a2.depth {
                        let (k1, k2) = (a1.cube_of(c1, p), a2.cube_of(c2, q));
                        let mut sum = c(0.0);
                        let mut count = 0.0;
                        for x in (0..a1.cells()).filter(|&x| a1.cube_of(x, p) == k1) {
                            for y in (0..a2.cells()).filter(|&y| a2.cube_of(y, q) == k2) {
                                sum += f.at(x, y);
                                count += 1.0;
                            }
                        }
                        best = best.max((sum / count).norm());
                    }
                }
                let v = m.values[c1 * a2.cells() + c2];
                assert!((v - best).abs() < 1e-12);
                assert!(v >= f.at(c1, c2).norm() - 1e-15);
            }
        }
        let constant = GridFunction::constant(f.axes, C64::new(-3.0, 4.0));
        assert!(maximal_function(&constant, &pair).unwrap().values.iter().all(|&v| (v - 5.0).abs() < 1e-14));
    }

    #[test]
    fn zero_has_zero_coefficients() {
        let (f, pair) = setup(2, 1, 2, 1, 3, false);
        let coeffs = decompose(&GridFunction::zeros(f.axes), &pair).unwrap();
        assert!(reconstruct(&coeffs).unwrap().norm_linf() == 0.0);
        assert!(square_function(&GridFunction::zeros(f.axes), &pair).unwrap().max() == 0.0);
    }

    fn shape() -> impl Strategy<Value = (u32, u8, u32, u8, u64, bool)> {
        (1u32..=3, 1u8..=2, 1u32..=3, 1u8..=2, any::<u64>(), any::<bool>())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn telescoping_reconstruction((d1, m1, d2, m2, seed, unit) in shape()) {
            let (f, pair) = setup(d1, m1, d2, m2, seed, unit);
            let coeffs = decompose(&f, &pair).unwrap();
            prop_assert!(reconstruct(&coeffs).unwrap().max_abs_diff(&f).unwrap() < 1e-10);
        }

        #[test]
        fn expectations_commute_and_nest((d1, m1, d2, m2, seed, unit) in shape(), p in 0u32..=3, p2 in 0u32..=3) {
            let (f, pair) = setup(d1, m1, d2, m2, seed, unit);
            let (p, p2) = (p.min(d1), p2.min(d1));
            let q = p2.min(d2);
            let a = expect_axis(&expect_axis(&f, Var::First, p, &pair.b1).unwrap(), Var::Second, q, &pair.b2).unwrap();
            let b = expect_axis(&expect_axis(&f, Var::Second, q, &pair.b2).unwrap(), Var::First, p, &pair.b1).unwrap();
            prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-10);
            let nested = expect_axis(&expect_axis(&f, Var::First, p2, &pair.b1).unwrap(), Var::First, p, &pair.b1).unwrap();
            let direct = expect_axis(&f, Var::First, p.min(p2), &pair.b1).unwrap();
            prop_assert!(nested.max_abs_diff(&direct).unwrap() < 1e-10);
        }

        #[test]
        fn differences_are_orthogonal_projections((d1, m1, d2, m2, seed, unit) in shape(), p in 0u32..3, p2 in 0u32..3) {
            let (f, pair) = setup(d1, m1, d2, m2, seed, unit);
            let (p, p2) = (p % d1, p2 % d1);
            let once = diff_axis(&f, Var::First, p, &pair.b1).unwrap();
            let twice = diff_axis(&once, Var::First, p2, &pair.b1).unwrap();
            let scale = 1.0 + f.norm_linf();
            if p == p2 {
                prop_assert!(twice.max_abs_diff(&once).unwrap() < 1e-10 * scale);
            } else {
                prop_assert!(twice.norm_linf() < 1e-10 * scale);
            }
        }

        #[test]
        fn local_differences_are_supported_constant_and_cancel((d1, m1, d2, m2, seed, unit) in shape(), pick in any::<u64>()) {
            let (f, pair) = setup(d1, m1, d2, m2, seed, unit);
            let [a1, a2] = f.axes;
            let (p, q) = ((pick % d1 as u64) as u32, ((pick >> 8) % d2 as u64) as u32);
            let k1 = ((pick >> 16) as usize) % a1.cubes_at(p);
            let k2 = ((pick >> 32) as usize) % a2.cubes_at(q);
            let rect = DyadicRect { first: a1.cube(p, k1).unwrap(), second: a2.cube(q, k2).unwrap() };
            let g = local_double_diff(&f, &pair, &rect).unwrap();
            let scale = 1e-10 * (1.0 + f.norm_linf());
            for c1 in 0..a1.cells() {
                for c2 in 0..a2.cells() {
                    let inside = a1.cube_of(c1, p) == k1 && a2.cube_of(c2, q) == k2;
                    if !inside {
                        prop_assert!(g.at(c1, c2).norm() == 0.0);
                        continue;
                    }
                    // Constant on the children of I × J.
                    let rep1 = (0..a1.cells()).find(|&x| a1.cube_of(x, p + 1) == a1.cube_of(c1, p + 1)).unwrap();
                    let rep2 = (0..a2.cells()).find(|&y| a2.cube_of(y, q + 1) == a2.cube_of(c2, q + 1)).unwrap();
                    prop_assert!((g.at(c1, c2) - g.at(rep1, rep2)).norm() < scale);
                }
            }
            // b₁-weighted integral over I vanishes for every second coordinate,
            // and symmetrically.
            for c2 in 0..a2.cells() {
                let s: C64 = (0..a1.cells()).map(|x| g.at(x, c2) * pair.b1.values[x]).sum();
                prop_assert!(s.norm() < scale * a1.cells() as f64);
            }
            for c1 in 0..a1.cells() {
                let s: C64 = (0..a2.cells()).map(|y| g.at(c1, y) * pair.b2.values[y]).sum();
                prop_assert!(s.norm() < scale * a2.cells() as f64);
            }
        }

        #[test]
        fn adjoint_and_intertwining((d1, m1, d2, m2, seed, unit) in shape(), p in 0u32..3, q in 0u32..3) {
            let (f, pair) = setup(d1, m1, d2, m2, seed, unit);
            let g = random_grid_function(f.axes, seed.wrapping_add(99));
            let (p, q) = (p % d1, q % d2);
            let lhs = expect(&f, &pair, p, q).unwrap().pair_bilinear(&g).unwrap();
            let rhs = f.pair_bilinear(&adjoint_expect(&g, &pair, p, q).unwrap()).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
            let b = pair.tensor();
            let left = b.mul(&double_diff(&f, &pair, p, q).unwrap()).unwrap();
            let right = double_diff_adjoint(&b.mul(&f).unwrap(), &pair, p, q).unwrap();
            prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-12 * (1.0 + left.norm_linf()));
        }
    }
}
