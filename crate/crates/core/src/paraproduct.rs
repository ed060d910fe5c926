//! Adapted paraproducts, Carleson sequences, BMO-type norms and power
//! iteration for operator norms.
//!
//! Every paraproduct is applied scale by scale: with `u_{p,q} = b · Δ_p Δ_q a`
//! precomputed, the full paraproduct is `Σ_{p,q} (E'_{p,q} f) u_{p,q}`, which
//! sums the same terms as the rectangle-by-rectangle definition because
//! `E'_{p,q} f` is constant on each scale-`(p,q)` rectangle with value
//! `⟨f⟩'_{K×V}`. The cost is `O(N₁N₂ · cells)` rather than a sum over
//! pairs of rectangles.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::accretive::AccretivePair;
use crate::grid_function::{Axis, AxisFunction, GridFunction};
use crate::martingale::{
    axis_diff, axis_expect, axis_expect_adjoint, decompose, expect_axis, expect_axis_adjoint, MartingaleCoefficients,
    Var,
};
use crate::math;
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// A square linear map on `ℂ^dim`, with the bilinear transpose.
///
/// Vectors are cell values of a step function; since domain and codomain
/// share the mesh, the `ℓ²` operator norm equals the `L²` one.
pub trait LinearMap {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C64]) -> Result<Vec<C64>>;
    /// `Aᵀ`, i.e. `⟨Ax, y⟩ = ⟨x, Aᵀy⟩` for the bilinear pairing.
    fn apply_transpose(&self, y: &[C64]) -> Result<Vec<C64>>;
}

fn check_len(expected: usize, x: &[C64]) -> Result<()> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(alloc::format!("vector of length {} for a map of dimension {expected}", x.len())))
    }
}

// ---------------------------------------------------------------------------
// Partial paraproduct
// ---------------------------------------------------------------------------

/// `π(f) = Σ_V ⟨f⟩_V^{b_avg} b_diff Δ_V^{b_diff} a` on one axis.
#[derive(Clone, Debug)]
pub struct PartialParaproduct {
    pub b_avg: AxisFunction,
    /// `b_diff · Δ_p^{b_diff} a` for `0 ≤ p < depth`.
    pieces: Vec<AxisFunction>,
}

impl PartialParaproduct {
    pub fn new(a: &AxisFunction, b_avg: &AxisFunction, b_diff: &AxisFunction) -> Result<Self> {
        if a.axis != b_avg.axis || a.axis != b_diff.axis {
            return Err(Error::ShapeMismatch("symbol and weights live on different axes".into()));
        }
        let pieces = (0..a.axis.depth)
            .map(|p| {
                let d = axis_diff(a, p, b_diff)?;
                Ok(AxisFunction { axis: a.axis, values: d.values.iter().zip(&b_diff.values).map(|(x, w)| x * w).collect() })
            })
            .collect::<Result<_>>()?;
        Ok(Self { b_avg: b_avg.clone(), pieces })
    }

    pub fn axis(&self) -> Axis {
        self.b_avg.axis
    }

    pub fn apply_fn(&self, f: &AxisFunction) -> Result<AxisFunction> {
        let mut out = alloc::vec![ZERO; self.axis().cells()];
        for (p, u) in self.pieces.iter().enumerate() {
            let e = axis_expect(f, p as u32, &self.b_avg)?;
            for ((o, x), y) in out.iter_mut().zip(&e.values).zip(&u.values) {
                *o += x * y;
            }
        }
        Ok(AxisFunction { axis: self.axis(), values: out })
    }

    pub fn transpose_fn(&self, g: &AxisFunction) -> Result<AxisFunction> {
        let mut out = alloc::vec![ZERO; self.axis().cells()];
        for (p, u) in self.pieces.iter().enumerate() {
            let ug = AxisFunction { axis: g.axis, values: g.values.iter().zip(&u.values).map(|(x, y)| x * y).collect() };
            let e = axis_expect_adjoint(&ug, p as u32, &self.b_avg)?;
            out.iter_mut().zip(&e.values).for_each(|(o, x)| *o += x);
        }
        Ok(AxisFunction { axis: self.axis(), values: out })
    }
}

/// One-shot form of [`PartialParaproduct`].
pub fn partial_paraproduct(
    a: &AxisFunction,
    f: &AxisFunction,
    b_avg: &AxisFunction,
    b_diff: &AxisFunction,
) -> Result<AxisFunction> {
    PartialParaproduct::new(a, b_avg, b_diff)?.apply_fn(f)
}

impl LinearMap for PartialParaproduct {
    fn dim(&self) -> usize {
        self.axis().cells()
    }

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        check_len(self.dim(), x)?;
        Ok(self.apply_fn(&AxisFunction { axis: self.axis(), values: x.to_vec() })?.values)
    }

    fn apply_transpose(&self, y: &[C64]) -> Result<Vec<C64>> {
        check_len(self.dim(), y)?;
        Ok(self.transpose_fn(&AxisFunction { axis: self.axis(), values: y.to_vec() })?.values)
    }
}

// ---------------------------------------------------------------------------
// Full and mixed paraproducts
// ---------------------------------------------------------------------------

/// `b · Δ_p Δ_q a` for every `(p, q)`, stored at `p · N₂ + q`.
fn weighted_pieces(a: &GridFunction, pair_diff: &AccretivePair) -> Result<Vec<GridFunction>> {
    let coeffs = decompose(a, pair_diff)?;
    let b = pair_diff.tensor();
    coeffs.double.iter().map(|d| b.mul(d)).collect()
}

fn accumulate_product(acc: &mut [C64], x: &GridFunction, y: &GridFunction) {
    for ((o, s), t) in acc.iter_mut().zip(&x.values).zip(&y.values) {
        *o += s * t;
    }
}

/// `π_a(f) = Σ_{K,V} ⟨f⟩^{b'}_{K×V} b Δ_K^{b₁} Δ_V^{b₂} a`.
#[derive(Clone, Debug)]
pub struct FullParaproduct {
    pub pair_avg: AccretivePair,
    pieces: Vec<GridFunction>,
}

impl FullParaproduct {
    pub fn new(a: &GridFunction, pair_avg: &AccretivePair, pair_diff: &AccretivePair) -> Result<Self> {
        pair_avg.check_mesh(a.axes)?;
        Ok(Self { pair_avg: pair_avg.clone(), pieces: weighted_pieces(a, pair_diff)? })
    }

    pub fn axes(&self) -> [Axis; 2] {
        self.pair_avg.axes()
    }

    pub fn apply_fn(&self, f: &GridFunction) -> Result<GridFunction> {
        let [a1, a2] = self.axes();
        let mut out = GridFunction::zeros(self.axes());
        for q in 0..a2.depth {
            let g = expect_axis(f, Var::Second, q, &self.pair_avg.b2)?;
            for p in 0..a1.depth {
                let h = expect_axis(&g, Var::First, p, &self.pair_avg.b1)?;
                accumulate_product(&mut out.values, &h, &self.pieces[(p * a2.depth + q) as usize]);
            }
        }
        Ok(out)
    }

    pub fn transpose_fn(&self, g: &GridFunction) -> Result<GridFunction> {
        let [a1, a2] = self.axes();
        let mut out = GridFunction::zeros(self.axes());
        for p in 0..a1.depth {
            let mut inner = GridFunction::zeros(self.axes());
            for q in 0..a2.depth {
                let ug = g.mul(&self.pieces[(p * a2.depth + q) as usize])?;
                inner.add_assign(&expect_axis_adjoint(&ug, Var::Second, q, &self.pair_avg.b2)?)?;
            }
            out.add_assign(&expect_axis_adjoint(&inner, Var::First, p, &self.pair_avg.b1)?)?;
        }
        Ok(out)
    }
}

/// One-shot form of [`FullParaproduct`].
pub fn full_paraproduct(
    a: &GridFunction,
    f: &GridFunction,
    pair_avg: &AccretivePair,
    pair_diff: &AccretivePair,
) -> Result<GridFunction> {
    FullParaproduct::new(a, pair_avg, pair_diff)?.apply_fn(f)
}

/// `π̃_a(f) = Σ_{K,V} E_K^{b₁'*}((E_V^{b₂'} f) b Δ_K^{b₁} Δ_V^{b₂} a)`: averaged in
/// the second variable, differenced in the first.
#[derive(Clone, Debug)]
pub struct MixedParaproduct {
    pub pair_avg: AccretivePair,
    pieces: Vec<GridFunction>,
}

impl MixedParaproduct {
    pub fn new(a: &GridFunction, pair_avg: &AccretivePair, pair_diff: &AccretivePair) -> Result<Self> {
        pair_avg.check_mesh(a.axes)?;
        Ok(Self { pair_avg: pair_avg.clone(), pieces: weighted_pieces(a, pair_diff)? })
    }

    pub fn axes(&self) -> [Axis; 2] {
        self.pair_avg.axes()
    }

    pub fn apply_fn(&self, f: &GridFunction) -> Result<GridFunction> {
        let [a1, a2] = self.axes();
        // E_K^* is linear, so sum over V before applying it.
        let mut by_p = alloc::vec![GridFunction::zeros(self.axes()); a1.depth as usize];
        for q in 0..a2.depth {
            let g = expect_axis(f, Var::Second, q, &self.pair_avg.b2)?;
            for p in 0..a1.depth {
                accumulate_product(&mut by_p[p as usize].values, &g, &self.pieces[(p * a2.depth + q) as usize]);
            }
        }
        let mut out = GridFunction::zeros(self.axes());
        for (p, h) in by_p.iter().enumerate() {
            out.add_assign(&expect_axis_adjoint(h, Var::First, p as u32, &self.pair_avg.b1)?)?;
        }
        Ok(out)
    }

    pub fn transpose_fn(&self, g: &GridFunction) -> Result<GridFunction> {
        let [a1, a2] = self.axes();
        let mut by_q = alloc::vec![GridFunction::zeros(self.axes()); a2.depth as usize];
        for p in 0..a1.depth {
            let h = expect_axis(g, Var::First, p, &self.pair_avg.b1)?;
            for q in 0..a2.depth {
                accumulate_product(&mut by_q[q as usize].values, &h, &self.pieces[(p * a2.depth + q) as usize]);
            }
        }
        let mut out = GridFunction::zeros(self.axes());
        for (q, h) in by_q.iter().enumerate() {
            out.add_assign(&expect_axis_adjoint(h, Var::Second, q as u32, &self.pair_avg.b2)?)?;
        }
        Ok(out)
    }
}

/// One-shot form of [`MixedParaproduct`].
pub fn mixed_paraproduct(
    a: &GridFunction,
    f: &GridFunction,
    pair_avg: &AccretivePair,
    pair_diff: &AccretivePair,
) -> Result<GridFunction> {
    MixedParaproduct::new(a, pair_avg, pair_diff)?.apply_fn(f)
}

macro_rules! grid_linear_map {
    ($t:ty) => {
        impl LinearMap for $t {
            fn dim(&self) -> usize {
                let [a1, a2] = self.axes();
                a1.cells() * a2.cells()
            }

            fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
                check_len(self.dim(), x)?;
                Ok(self.apply_fn(&GridFunction { axes: self.axes(), values: x.to_vec() })?.values)
            }

            fn apply_transpose(&self, y: &[C64]) -> Result<Vec<C64>> {
                check_len(self.dim(), y)?;
                Ok(self.transpose_fn(&GridFunction { axes: self.axes(), values: y.to_vec() })?.values)
            }
        }
    };
}

grid_linear_map!(FullParaproduct);
grid_linear_map!(MixedParaproduct);

// ---------------------------------------------------------------------------
// Norms and Carleson sequences
// ---------------------------------------------------------------------------

/// Dyadic BMO of a one-parameter function in quadratic-mean form,
/// `(sup_J (1/|J|) ∫_J |a − ⟨a⟩_J|²)^{1/2}` over every dyadic cube `J`.
pub fn bmo_norm_1p(a: &AxisFunction) -> f64 {
    let axis = a.axis;
    let mut best = 0.0f64;
    for p in 0..=axis.depth {
        let map = axis.cube_map(p);
        let cubes = axis.cubes_at(p);
        let per = (axis.cells() / cubes) as f64;
        let mut mean = alloc::vec![ZERO; cubes];
        for (c, v) in a.values.iter().enumerate() {
            mean[map[c]] += *v;
        }
        mean.iter_mut().for_each(|m| *m /= per);
        let mut osc = alloc::vec![0.0; cubes];
        for (c, v) in a.values.iter().enumerate() {
            osc[map[c]] += (v - mean[map[c]]).norm_sqr();
        }
        best = osc.iter().map(|o| o / per).fold(best, f64::max);
    }
    math::sqrt(best)
}

/// The same quadratic-mean oscillation taken over dyadic rectangles.
pub fn rect_oscillation_norm(a: &GridFunction) -> f64 {
    let [a1, a2] = a.axes;
    let mut best = 0.0f64;
    for p in 0..=a1.depth {
        let m1 = a1.cube_map(p);
        for q in 0..=a2.depth {
            let m2 = a2.cube_map(q);
            let n2 = a2.cubes_at(q);
            let rects = a1.cubes_at(p) * n2;
            let per = (a.cells() / rects) as f64;
            let bin = |c1: usize, c2: usize| m1[c1] * n2 + m2[c2];
            let mut mean = alloc::vec![ZERO; rects];
            for c1 in 0..a1.cells() {
                for c2 in 0..a2.cells() {
                    mean[bin(c1, c2)] += a.at(c1, c2);
                }
            }
            mean.iter_mut().for_each(|m| *m /= per);
            let mut osc = alloc::vec![0.0; rects];
            for c1 in 0..a1.cells() {
                for c2 in 0..a2.cells() {
                    let k = bin(c1, c2);
                    osc[k] += (a.at(c1, c2) - mean[k]).norm_sqr();
                }
            }
            best = osc.iter().map(|o| o / per).fold(best, f64::max);
        }
    }
    math::sqrt(best)
}

/// Rectangular BMO surrogate
/// `(sup_R (1/|R|) Σ_{R'⊆R} ‖Δ^b_{R'} a‖²)^{1/2}` over dyadic rectangles `R`.
///
/// This is only a lower bound for product BMO, which is a supremum over
/// open sets rather than rectangles.
pub fn rect_bmo_norm(a: &GridFunction, pair: &AccretivePair) -> Result<f64> {
    Ok(rect_bmo_from(&decompose(a, pair)?))
}

fn rect_bmo_from(coeffs: &MartingaleCoefficients) -> f64 {
    let [a1, a2] = coeffs.axes;
    let (n1, n2) = (a1.depth as usize, a2.depth as usize);
    let cells = a1.cells() * a2.cells();
    let vol = a1.cell_volume() * a2.cell_volume();
    // suffix[p][q](cell) = Σ_{p' ≥ p, q' ≥ q} |Δ_{p'} Δ_{q'} a|² · cell volume
    let mut suffix = alloc::vec![alloc::vec![0.0f64; cells]; (n1 + 1) * (n2 + 1)];
    let at = |p: usize, q: usize| p * (n2 + 1) + q;
    for p in (0..n1).rev() {
        for q in (0..n2).rev() {
            let d = &coeffs.double[p * n2 + q].values;
            let (below, right, diag) = (at(p + 1, q), at(p, q + 1), at(p + 1, q + 1));
            let mut row = alloc::vec![0.0; cells];
            for c in 0..cells {
                row[c] = d[c].norm_sqr() * vol + suffix[below][c] + suffix[right][c] - suffix[diag][c];
            }
            suffix[at(p, q)] = row;
        }
    }
    let mut best = 0.0f64;
    for p in 0..n1 {
        let m1 = a1.cube_map(p as u32);
        for q in 0..n2 {
            let m2 = a2.cube_map(q as u32);
            let k2 = a2.cubes_at(q as u32);
            let mut bins = alloc::vec![0.0; a1.cubes_at(p as u32) * k2];
            let s = &suffix[at(p, q)];
            for c1 in 0..a1.cells() {
                for c2 in 0..a2.cells() {
                    bins[m1[c1] * k2 + m2[c2]] += s[c1 * a2.cells() + c2];
                }
            }
            let area = a1.cube_volume(p as u32) * a2.cube_volume(q as u32);
            best = bins.iter().map(|e| e / area).fold(best, f64::max);
        }
    }
    math::sqrt(best)
}

/// Norms reported for a paraproduct symbol. `rect_bmo` is the labelled
/// surrogate of product BMO; `oscillation` is the rectangle mean-oscillation
/// norm; neither is asserted to be the norm the boundedness theory needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymbolNorms {
    pub oscillation: f64,
    pub rect_bmo: f64,
    pub linf: f64,
}

/// A symbol with its martingale coefficients and norms.
#[derive(Clone, Debug)]
pub struct ParaproductSymbol {
    pub a: GridFunction,
    pub coefficients: MartingaleCoefficients,
    pub norms: SymbolNorms,
}

impl ParaproductSymbol {
    pub fn new(a: GridFunction, pair: &AccretivePair) -> Result<Self> {
        let coefficients = decompose(&a, pair)?;
        let norms = SymbolNorms {
            oscillation: rect_oscillation_norm(&a),
            rect_bmo: rect_bmo_from(&coefficients),
            linf: a.norm_linf(),
        };
        Ok(Self { a, coefficients, norms })
    }
}

/// Nonnegative weights `c_I` on the dyadic cubes of one axis, scales
/// `0..=depth`, stored coarsest first.
#[derive(Clone, Debug, PartialEq)]
pub struct CarlesonSequence {
    pub axis: Axis,
    pub levels: Vec<Vec<f64>>,
}

impl CarlesonSequence {
    pub fn new(axis: Axis, levels: Vec<Vec<f64>>) -> Result<Self> {
        if levels.len() != axis.depth as usize + 1
            || levels.iter().enumerate().any(|(p, l)| l.len() != axis.cubes_at(p as u32))
        {
            return Err(Error::ShapeMismatch("Carleson sequence does not match the dyadic tree of the axis".into()));
        }
        if levels.iter().flatten().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter("Carleson weights must be finite and nonnegative".into()));
        }
        Ok(Self { axis, levels })
    }

    pub fn zeros(axis: Axis) -> Self {
        Self { axis, levels: (0..=axis.depth).map(|p| alloc::vec![0.0; axis.cubes_at(p)]).collect() }
    }

    /// `c_V = ‖Δ_V^b a‖²`, the sequence whose Carleson constant the BMO
    /// norm of `a` controls. Finest-scale cubes get `0`.
    pub fn of_differences(a: &AxisFunction, b: &AxisFunction) -> Result<Self> {
        let axis = a.axis;
        let mut out = Self::zeros(axis);
        for p in 0..axis.depth {
            let d = axis_diff(a, p, b)?;
            let map = axis.cube_map(p);
            for (c, v) in d.values.iter().enumerate() {
                out.levels[p as usize][map[c]] += v.norm_sqr() * axis.cell_volume();
            }
        }
        Ok(out)
    }
}

/// `sup_J (1/|J|) Σ_{I⊆J} c_I`, by subtree sums.
pub fn carleson_constant(c: &CarlesonSequence) -> f64 {
    let axis = c.axis;
    let mut sums = c.levels[axis.depth as usize].clone();
    let mut best = sums.iter().map(|s| s / axis.cube_volume(axis.depth)).fold(0.0, f64::max);
    for p in (0..axis.depth).rev() {
        let next: Vec<f64> = (0..axis.cubes_at(p))
            .map(|k| c.levels[p as usize][k] + axis.children(p, k).map(|ch| sums[ch]).sum::<f64>())
            .collect();
        best = next.iter().map(|s| s / axis.cube_volume(p)).fold(best, f64::max);
        sums = next;
    }
    best
}

/// `Σ_I |⟨f⟩_I|² c_I`, plain (unweighted) averages.
pub fn carleson_embedding_sum(f: &AxisFunction, c: &CarlesonSequence) -> Result<f64> {
    if f.axis != c.axis {
        return Err(Error::ShapeMismatch("function and sequence live on different axes".into()));
    }
    let averages = crate::accretive::dyadic_averages(f);
    Ok(averages.iter().zip(&c.levels).flat_map(|(a, l)| a.iter().zip(l)).map(|(a, w)| a.norm_sqr() * w).sum())
}

// ---------------------------------------------------------------------------
// Operator norms
// ---------------------------------------------------------------------------

/// Power-iteration result: a lower bound for `‖A‖₂→₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    /// `|σ_k − σ_{k−1}|` for the last two iterates of the winning start.
    pub gap: f64,
    pub trials: u32,
    pub iters: u32,
}

pub const DEFAULT_TRIALS: u32 = 8;
pub const DEFAULT_ITERS: u32 = 100;

fn l2(x: &[C64]) -> f64 {
    math::sqrt(x.iter().map(|z| z.norm_sqr()).sum())
}

fn random_unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let mut x: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let s = l2(&x);
    x.iter_mut().for_each(|z| *z /= s);
    x
}

fn finite(x: &[C64]) -> Result<()> {
    if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericFailure("non-finite value during power iteration".into()))
    }
}

/// Max over `trials` random starts of power iteration on `A^H A`, where
/// `A^H y = conj(Aᵀ conj(y))`. Linearity is spot-checked on one random pair
/// first.
pub fn operator_norm_estimate(a: &dyn LinearMap, trials: u32, iters: u32, seed: u64) -> Result<NormEstimate> {
    let n = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x, y) = (random_unit(&mut rng, n), random_unit(&mut rng, n));
    let combo: Vec<C64> = x.iter().zip(&y).map(|(s, t)| s + t * 2.0).collect();
    let (ax, ay, ac) = (a.apply(&x)?, a.apply(&y)?, a.apply(&combo)?);
    let residual = l2(&ac.iter().zip(&ax).zip(&ay).map(|((c, s), t)| c - s - t * 2.0).collect::<Vec<_>>());
    if residual > 1e-9 * (1.0 + l2(&ax) + 2.0 * l2(&ay)) {
        return Err(Error::InvalidParameter(alloc::format!("map fails the linearity spot check ({residual:e})")));
    }
    let mut best = NormEstimate { value: 0.0, gap: 0.0, trials, iters };
    for _ in 0..trials {
        let mut v = random_unit(&mut rng, n);
        let (mut est, mut prev) = (0.0, 0.0);
        for _ in 0..iters {
            let av = a.apply(&v)?;
            finite(&av)?;
            prev = est;
            est = l2(&av);
            let conj: Vec<C64> = av.iter().map(|z| z.conj()).collect();
            let mut w = a.apply_transpose(&conj)?;
            w.iter_mut().for_each(|z| *z = z.conj());
            finite(&w)?;
            let nw = l2(&w);
            if nw == 0.0 {
                break;
            }
            w.iter_mut().for_each(|z| *z /= nw);
            v = w;
        }
        if est > best.value {
            best.value = est;
            best.gap = (est - prev).abs();
        }
    }
    Ok(best)
}

/// A random trigonometric polynomial with frequencies in `[-2, 2]` per
/// coordinate, scaled by the sum of its coefficient moduli so that
/// `‖a‖∞ ≤ 1` on every mesh. The same seed gives samples of the same
/// function at every depth.
pub fn random_smooth_symbol(axes: [Axis; 2], seed: u64) -> Result<GridFunction> {
    let coords = axes.iter().map(|a| a.dim as usize).sum::<usize>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<([i32; 4], C64)> = (0..6)
        .map(|_| {
            let mut k = [0i32; 4];
            for slot in k.iter_mut().take(coords) {
                *slot = rng.gen_range(-2..=2);
            }
            (k, C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        })
        .collect();
    let total: f64 = terms.iter().map(|(_, c)| math::cabs(*c)).sum();
    GridFunction::from_fn(axes, |c1, c2| {
        let (x, y) = (axes[0].midpoint(c1), axes[1].midpoint(c2));
        let mut pts = [0.0; 4];
        for (slot, v) in pts.iter_mut().zip(x.iter().take(axes[0].dim as usize).chain(y.iter().take(axes[1].dim as usize))) {
            *slot = *v;
        }
        terms
            .iter()
            .map(|(k, c)| {
                let phase = 2.0 * core::f64::consts::PI * k.iter().zip(&pts).map(|(k, x)| *k as f64 * x).sum::<f64>();
                c * C64::new(math::cos(phase), math::sin(phase))
            })
            .sum::<C64>()
            / total
    })
}
