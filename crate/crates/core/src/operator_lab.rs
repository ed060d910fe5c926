//! Singular kernels on the unit square and the quantities the bi-parameter
//! `T(b)` argument is built from: quadrature bilinear forms, partial kernels,
//! projection pairings, the fixed-grid expansion, weak boundedness, `T(b)`
//! probes, and the decay of separated pairings.
//!
//! All kernels here act on `n = m = 1`: both axes of every mesh must be
//! one-dimensional. Points are cell midpoints and the kernel is not
//! periodised; the torus only enters through the dyadic geometry used to
//! classify cube pairs.
//!
//! Quadrature convention: a cell pair contributes `K(x, y) F(y) G(x) · vol²`
//! unless the two cells share their first-axis cell or their second-axis
//! cell. For kernels antisymmetric in both variables the skipped set is the
//! principal-value limit region and contributes nothing; for other kernels it
//! is a truncation of width one cell.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::accretive::AccretivePair;
use crate::dyadic_grid::{is_good, join, relative_position, DyadicCube, GoodnessParams, PositionClass};
use crate::grid_function::{Axis, AxisFunction, DyadicRect, GridFunction};
use crate::martingale::{decompose, local_double_diff};
use crate::paraproduct::rect_bmo_norm;
use crate::{math, Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest product mesh (in cells) for which a dense kernel table is built.
const DENSE_TABLE_CELLS: usize = 1024;

/// Largest axis depth accepted by [`expansion_check`].
pub const EXPANSION_MAX_DEPTH: u32 = 4;

/// Sampling cap per `(i₁, j₁)` bucket in [`decay_scan`] for non-separable kernels.
pub const DECAY_SAMPLE_CAP: usize = 512;

/// A one-variable factor `φ(x, y)` of a separable kernel.
pub type Profile = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// A full kernel `K(x, y)` with `x = (x₁, x₂)` and `y = (y₁, y₂)`.
pub type KernelFn = Arc<dyn Fn([f64; 2], [f64; 2]) -> f64 + Send + Sync>;
/// A closed-form symbol `A(x₁, x₂)` for the bicommutator.
pub type Symbol = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Form {
    Zero,
    Separable(Profile, Profile),
    General(KernelFn),
}

/// A real kernel with its declared constants.
#[derive(Clone)]
pub struct KernelSpec {
    pub name: String,
    /// Declared `C` in `|K(x,y)| ≤ C |x₁−y₁|⁻¹ |x₂−y₂|⁻¹`.
    pub size_constant: f64,
    /// Declared Hölder exponent.
    pub delta: f64,
    /// `K(x,y) = −K((y₁,x₂),(x₁,y₂))` and the same in the second variable.
    pub antisymmetric: [bool; 2],
    scale: f64,
    form: Form,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("size_constant", &self.size_constant)
            .field("delta", &self.delta)
            .field("antisymmetric", &self.antisymmetric)
            .field("scale", &self.scale)
            .finish_non_exhaustive()
    }
}

impl KernelSpec {
    pub fn zero() -> Self {
        Self {
            name: "zero".into(),
            size_constant: 0.0,
            delta: 1.0,
            antisymmetric: [true, true],
            scale: 1.0,
            form: Form::Zero,
        }
    }

    /// `K(x, y) = 1 / ((x₁ − y₁)(x₂ − y₂))`.
    pub fn product_hilbert() -> Self {
        let h: Profile = Arc::new(|x, y| 1.0 / (x - y));
        Self {
            name: "product_hilbert".into(),
            size_constant: 1.0,
            delta: 1.0,
            antisymmetric: [true, true],
            scale: 1.0,
            form: Form::Separable(h.clone(), h),
        }
    }

    /// `K(x, y) = φ(x₁, y₁) ψ(x₂, y₂)`.
    pub fn separable(
        name: &str,
        first: Profile,
        second: Profile,
        size_constant: f64,
        delta: f64,
        antisymmetric: [bool; 2],
    ) -> Self {
        Self { name: name.into(), size_constant, delta, antisymmetric, scale: 1.0, form: Form::Separable(first, second) }
    }

    pub fn general(name: &str, eval: KernelFn, size_constant: f64, delta: f64, antisymmetric: [bool; 2]) -> Self {
        Self { name: name.into(), size_constant, delta, antisymmetric, scale: 1.0, form: Form::General(eval) }
    }

    /// The Calderón–Coifman type bicommutator `L Ã` with
    /// `Ã(x,y) = (A(x₁,x₂) + A(y₁,y₂) − A(y₁,x₂) − A(x₁,y₂)) / ((x₁−y₁)(x₂−y₂))`
    /// and `L` the product Hilbert kernel. `mixed_bound` is `‖∂₁∂₂A‖∞`.
    pub fn bicommutator(a: Symbol, mixed_bound: f64) -> Self {
        let eval: KernelFn = Arc::new(move |x, y| {
            let (d1, d2) = (x[0] - y[0], x[1] - y[1]);
            (a(x[0], x[1]) + a(y[0], y[1]) - a(y[0], x[1]) - a(x[0], y[1])) / (d1 * d1 * d2 * d2)
        });
        Self::general("bicommutator", eval, mixed_bound, 1.0, [true, true])
    }

    /// `A(x₁, x₂) = sin(2πx₁) sin(2πx₂) / (4π²)`, whose mixed derivative is
    /// bounded by 1.
    pub fn default_symbol() -> Symbol {
        Arc::new(|x1, x2| {
            let tau = 2.0 * core::f64::consts::PI;
            math::sin(tau * x1) * math::sin(tau * x2) / (tau * tau)
        })
    }

    /// `c · K`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut k = self.clone();
        k.scale *= c;
        k.size_constant *= c.abs();
        k
    }

    pub fn is_separable(&self) -> bool {
        matches!(self.form, Form::Separable(..))
    }

    pub fn eval(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        self.scale
            * match &self.form {
                Form::Zero => 0.0,
                Form::Separable(p, q) => p(x[0], y[0]) * q(x[1], y[1]),
                Form::General(k) => k(x, y),
            }
    }

    /// Kernel of the adjoint, `K*(x, y) = K(y, x)`.
    pub fn adjoint(&self) -> Self {
        let mut k = self.clone();
        k.name = alloc::format!("{}*", self.name);
        k.form = match &self.form {
            Form::Zero => Form::Zero,
            Form::Separable(p, q) => {
                let (p, q) = (p.clone(), q.clone());
                Form::Separable(Arc::new(move |x, y| p(y, x)), Arc::new(move |x, y| q(y, x)))
            }
            Form::General(g) => {
                let g = g.clone();
                Form::General(Arc::new(move |x, y| g(y, x)))
            }
        };
        k
    }

    /// Kernel of the partial adjoint in the first variable,
    /// `K₁(x, y) = K((y₁, x₂), (x₁, y₂))`.
    pub fn partial_adjoint(&self) -> Self {
        let mut k = self.clone();
        k.name = alloc::format!("{}_1", self.name);
        k.form = match &self.form {
            Form::Zero => Form::Zero,
            Form::Separable(p, q) => {
                let p = p.clone();
                Form::Separable(Arc::new(move |x, y| p(y, x)), q.clone())
            }
            Form::General(g) => {
                let g = g.clone();
                Form::General(Arc::new(move |x, y| g([y[0], x[1]], [x[0], y[1]])))
            }
        };
        k
    }
}

/// `product_hilbert`, `bicommutator` (default symbol) or `zero`.
pub fn builtin_kernel(name: &str) -> Result<KernelSpec> {
    match name {
        "product_hilbert" => Ok(KernelSpec::product_hilbert()),
        "bicommutator" => Ok(KernelSpec::bicommutator(KernelSpec::default_symbol(), 1.0)),
        "zero" => Ok(KernelSpec::zero()),
        other => Err(Error::InvalidParameter(alloc::format!(
            "unknown kernel '{other}' (expected product_hilbert, bicommutator or zero)"
        ))),
    }
}

fn check_axes(axes: [Axis; 2]) -> Result<()> {
    if axes[0].dim == 1 && axes[1].dim == 1 {
        Ok(())
    } else {
        Err(Error::InvalidParameter("kernels are implemented for one-dimensional axes only".into()))
    }
}

fn mid(axis: Axis, cell: usize) -> f64 {
    axis.midpoint(cell)[0]
}

/// `M[x][y] = φ(x, y) · vol^k` with a zero diagonal, where `k` counts the
/// integrated variables.
fn profile_matrix(p: &Profile, axis: Axis, k: i32) -> Vec<f64> {
    let n = axis.cells();
    let v = math::powf(axis.cell_volume(), k as f64);
    let mut m = alloc::vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            if x != y {
                m[x * n + y] = p(mid(axis, x), mid(axis, y)) * v;
            }
        }
    }
    m
}

/// A kernel bound to a mesh, with a dense table when the mesh is small.
struct Prepared<'a> {
    kernel: &'a KernelSpec,
    axes: [Axis; 2],
    table: Option<Vec<f64>>,
}

impl<'a> Prepared<'a> {
    fn new(kernel: &'a KernelSpec, axes: [Axis; 2]) -> Self {
        let cells = axes[0].cells() * axes[1].cells();
        let mut p = Prepared { kernel, axes, table: None };
        if cells <= DENSE_TABLE_CELLS && !matches!(kernel.form, Form::Zero) {
            let mut t = alloc::vec![0.0; cells * cells];
            for x in 0..cells {
                for y in 0..cells {
                    t[x * cells + y] = p.raw(x, y);
                }
            }
            p.table = Some(t);
        }
        p
    }

    /// `K(x, y) · vol²`, or 0 on the skipped set.
    fn raw(&self, x: usize, y: usize) -> f64 {
        let n2 = self.axes[1].cells();
        let (x1, x2, y1, y2) = (x / n2, x % n2, y / n2, y % n2);
        if x1 == y1 || x2 == y2 {
            return 0.0;
        }
        let [a1, a2] = self.axes;
        let vol = a1.cell_volume() * a2.cell_volume();
        self.kernel.eval([mid(a1, x1), mid(a2, x2)], [mid(a1, y1), mid(a2, y2)]) * vol * vol
    }

    fn entry(&self, x: usize, y: usize) -> f64 {
        match &self.table {
            Some(t) => t[x * self.axes[0].cells() * self.axes[1].cells() + y],
            None => self.raw(x, y),
        }
    }
}

fn support(values: &[C64]) -> Vec<(usize, C64)> {
    values.iter().copied().enumerate().filter(|(_, v)| *v != ZERO).collect()
}

/// `Σ_{x,y} K(x,y) F(y) G(x) vol²` for already weighted `F`, `G`.
fn weighted_form(prepared: &Prepared<'_>, big_f: &[C64], big_g: &[C64]) -> C64 {
    let kernel = prepared.kernel;
    match &kernel.form {
        Form::Zero => ZERO,
        Form::Separable(p, q) => {
            let [a1, a2] = prepared.axes;
            let (n1, n2) = (a1.cells(), a2.cells());
            let (m1, m2) = (profile_matrix(p, a1, 2), profile_matrix(q, a2, 2));
            // H = M₁ F, then Σ G[x₁][x₂] Σ_{y₂} M₂[x₂][y₂] H[x₁][y₂].
            let mut h = alloc::vec![ZERO; n1 * n2];
            for x1 in 0..n1 {
                for y1 in 0..n1 {
                    let w = m1[x1 * n1 + y1];
                    if w != 0.0 {
                        for y2 in 0..n2 {
                            h[x1 * n2 + y2] += big_f[y1 * n2 + y2] * w;
                        }
                    }
                }
            }
            let mut total = ZERO;
            for x1 in 0..n1 {
                for x2 in 0..n2 {
                    let g = big_g[x1 * n2 + x2];
                    if g == ZERO {
                        continue;
                    }
                    let s: C64 = (0..n2).map(|y2| h[x1 * n2 + y2] * m2[x2 * n2 + y2]).sum();
                    total += g * s;
                }
            }
            total * kernel.scale
        }
        Form::General(_) => {
            let (fs, gs) = (support(big_f), support(big_g));
            let mut total = ZERO;
            for &(x, g) in &gs {
                let mut inner = ZERO;
                for &(y, f) in &fs {
                    inner += f * prepared.entry(x, y);
                }
                total += g * inner;
            }
            total
        }
    }
}

/// `⟨M_{b'} T M_b f, g⟩` by midpoint quadrature.
pub fn bilinear_form(
    kernel: &KernelSpec,
    f: &GridFunction,
    g: &GridFunction,
    pair_b: &AccretivePair,
    pair_b2: &AccretivePair,
) -> Result<C64> {
    f.check_same_mesh(g)?;
    check_axes(f.axes)?;
    pair_b.check_mesh(f.axes)?;
    pair_b2.check_mesh(f.axes)?;
    let big_f = f.mul(&pair_b.tensor())?;
    let big_g = g.mul(&pair_b2.tensor())?;
    Ok(weighted_form(&Prepared::new(kernel, f.axes), &big_f.values, &big_g.values))
}

/// The partial kernel `K_{f₂,g₂}(x₁, y₁)` of a full kernel.
pub struct PartialKernel<'a> {
    kernel: &'a KernelSpec,
    axis2: Axis,
    /// `f₂ b₂` and `g₂ b₂'` on the second axis.
    f2: Vec<C64>,
    g2: Vec<C64>,
}

pub fn partial_kernel_from_full<'a>(
    kernel: &'a KernelSpec,
    f2: &AxisFunction,
    g2: &AxisFunction,
    b2: &AxisFunction,
    b2_prime: &AxisFunction,
) -> Result<PartialKernel<'a>> {
    if f2.axis != g2.axis || f2.axis != b2.axis || f2.axis != b2_prime.axis {
        return Err(Error::ShapeMismatch("second-variable inputs live on different axes".into()));
    }
    check_axes([f2.axis, f2.axis])?;
    Ok(PartialKernel {
        kernel,
        axis2: f2.axis,
        f2: f2.values.iter().zip(&b2.values).map(|(a, b)| a * b).collect(),
        g2: g2.values.iter().zip(&b2_prime.values).map(|(a, b)| a * b).collect(),
    })
}

impl PartialKernel<'_> {
    /// `Σ_{x₂ ≠ y₂} K((x₁,x₂),(y₁,y₂)) f₂(y₂) g₂(x₂) b₂(y₂) b₂'(x₂) vol²`.
    pub fn eval(&self, x1: f64, y1: f64) -> Result<C64> {
        if x1 == y1 {
            return Err(Error::InvalidParameter("partial kernels are not defined on x₁ = y₁".into()));
        }
        let a = self.axis2;
        let vol = a.cell_volume();
        let mut total = ZERO;
        for x2 in 0..a.cells() {
            if self.g2[x2] == ZERO {
                continue;
            }
            let mut inner = ZERO;
            for y2 in (0..a.cells()).filter(|&y2| y2 != x2) {
                inner += self.f2[y2] * self.kernel.eval([x1, mid(a, x2)], [y1, mid(a, y2)]);
            }
            total += self.g2[x2] * inner;
        }
        Ok(total * vol * vol)
    }

    /// `Σ_{x₁ ≠ y₁} K_{f₂,g₂}(x₁, y₁) f₁(y₁) g₁(x₁) b₁(y₁) b₁'(x₁) vol²`.
    pub fn form(&self, f1: &AxisFunction, g1: &AxisFunction, b1: &AxisFunction, b1_prime: &AxisFunction) -> Result<C64> {
        let a = f1.axis;
        let vol = a.cell_volume();
        let mut total = ZERO;
        for x1 in 0..a.cells() {
            let g = g1.values[x1] * b1_prime.values[x1];
            if g == ZERO {
                continue;
            }
            for y1 in (0..a.cells()).filter(|&y| y != x1) {
                let f = f1.values[y1] * b1.values[y1];
                if f != ZERO {
                    total += g * f * self.eval(mid(a, x1), mid(a, y1))?;
                }
            }
        }
        Ok(total * vol * vol)
    }
}

/// One pairing of localized double differences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairingReport {
    pub rect1: DyadicRect,
    pub rect2: DyadicRect,
    /// Position of the smaller cube relative to the larger, per parameter.
    pub classes: [PositionClass; 2],
    /// `[i₁, i₂, j₁, j₂]`: `ℓ(I_k) = 2^{-i_k} ℓ(I₁ ∨ I₂)` and likewise for `J`.
    pub gaps: [u32; 4],
    pub value: C64,
    /// `‖Δ_{R₁} f‖₂` and `‖Δ_{R₂} g‖₂`.
    pub norms: [f64; 2],
    /// `(|I₁|^{1/2}|I₂|^{1/2}/|K|)(|J₁|^{1/2}|J₂|^{1/2}/|V|)`.
    pub geometry: f64,
    /// `|value| / (geometry · norms)`, `None` if a projection vanishes.
    pub normalized: Option<f64>,
}

struct AxisGeometry {
    class: PositionClass,
    gaps: [u32; 2],
    factor: f64,
}

fn axis_geometry(c1: &DyadicCube, c2: &DyadicCube, depth: u32, params: &GoodnessParams) -> Result<AxisGeometry> {
    let grid = crate::dyadic_grid::ShiftedGrid::standard(depth, 1)?;
    let (small, large) = if c1.scale >= c2.scale { (c1, c2) } else { (c2, c1) };
    let class = relative_position(small, large, &grid, params)?.class;
    let k = join(c1, c2, &grid)?;
    Ok(AxisGeometry {
        class,
        gaps: [c1.scale - k.scale, c2.scale - k.scale],
        factor: math::sqrt(c1.volume() * c2.volume()) / k.volume(),
    })
}

/// `⟨M_{b'} T M_b Δ^b_{R₁} f, Δ^{b'}_{R₂} g⟩` with its geometry.
#[allow(clippy::too_many_arguments)]
pub fn projection_pairing(
    kernel: &KernelSpec,
    f: &GridFunction,
    g: &GridFunction,
    rect1: &DyadicRect,
    rect2: &DyadicRect,
    pair_b: &AccretivePair,
    pair_b2: &AccretivePair,
    params: &GoodnessParams,
) -> Result<PairingReport> {
    let p = local_double_diff(f, pair_b, rect1)?;
    let q = local_double_diff(g, pair_b2, rect2)?;
    let value = bilinear_form(kernel, &p, &q, pair_b, pair_b2)?;
    let [d1, d2] = [f.axes[0].depth, f.axes[1].depth];
    let first = axis_geometry(&rect1.first, &rect2.first, d1, params)?;
    let second = axis_geometry(&rect1.second, &rect2.second, d2, params)?;
    let norms = [p.norm_l2(), q.norm_l2()];
    let geometry = first.factor * second.factor;
    let denom = geometry * norms[0] * norms[1];
    Ok(PairingReport {
        rect1: *rect1,
        rect2: *rect2,
        classes: [first.class, second.class],
        gaps: [first.gaps[0], first.gaps[1], second.gaps[0], second.gaps[1]],
        value,
        norms,
        geometry,
        normalized: if denom > 0.0 { Some(math::cabs(value) / denom) } else { None },
    })
}

/// A localized component of a function, stored sparsely and already
/// multiplied by the weight.
struct Piece {
    cells: Vec<usize>,
    values: Vec<C64>,
}

/// Splits `f` into `Δ_{I×J} f`, `(Δ_I E_0 f) χ_I`, `(E_0 Δ_J f) χ_J` and
/// `E_0 E_0 f`, one piece per dyadic localisation. There are exactly as many
/// pieces as cells.
fn pieces(f: &GridFunction, pair: &AccretivePair) -> Result<Vec<Piece>> {
    let coeffs = decompose(f, pair)?;
    let b = pair.tensor();
    let [a1, a2] = f.axes;
    let n2 = a2.cells();
    let mut out = Vec::with_capacity(f.cells());
    // (scale or None for the whole axis) per parameter, with the function.
    let mut push = |p: Option<u32>, q: Option<u32>, g: &GridFunction| {
        let k1 = p.map_or(1, |p| a1.cubes_at(p));
        let k2 = q.map_or(1, |q| a2.cubes_at(q));
        let mut buckets: Vec<Piece> = (0..k1 * k2).map(|_| Piece { cells: Vec::new(), values: Vec::new() }).collect();
        for c1 in 0..a1.cells() {
            let i = p.map_or(0, |p| a1.cube_of(c1, p));
            for c2 in 0..n2 {
                let j = q.map_or(0, |q| a2.cube_of(c2, q));
                let cell = c1 * n2 + c2;
                let piece = &mut buckets[i * k2 + j];
                piece.cells.push(cell);
                piece.values.push(g.values[cell] * b.values[cell]);
            }
        }
        out.extend(buckets);
    };
    push(None, None, &coeffs.corner);
    for (p, g) in coeffs.row.iter().enumerate() {
        push(Some(p as u32), None, g);
    }
    for (q, g) in coeffs.column.iter().enumerate() {
        push(None, Some(q as u32), g);
    }
    for p in 0..a1.depth {
        for q in 0..a2.depth {
            push(Some(p), Some(q), coeffs.get(p, q));
        }
    }
    Ok(out)
}

/// Both sides of the fixed-grid expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionReport {
    pub lhs: C64,
    pub rhs: C64,
    /// `|lhs − rhs| / |lhs|`, or `|rhs|` when `lhs = 0`.
    pub gap: f64,
    /// Number of component pairs summed.
    pub terms: usize,
}

/// `⟨M_{b'} T M_b f, g⟩` against the sum, over every pair of localized
/// components of `f` (adapted to `b`) and `g` (adapted to `b'`), of their
/// pairings. The components include the boundary terms, so the two sides
/// agree up to rounding; this is the deterministic single-grid version of
/// the averaged expansion.
pub fn expansion_check(
    kernel: &KernelSpec,
    f: &GridFunction,
    g: &GridFunction,
    pair_b: &AccretivePair,
    pair_b2: &AccretivePair,
) -> Result<ExpansionReport> {
    f.check_same_mesh(g)?;
    check_axes(f.axes)?;
    if f.axes[0].depth > EXPANSION_MAX_DEPTH || f.axes[1].depth > EXPANSION_MAX_DEPTH {
        return Err(Error::TooLarge(alloc::format!(
            "the expansion has one term per pair of cells; depth is limited to {EXPANSION_MAX_DEPTH} per axis"
        )));
    }
    let lhs = bilinear_form(kernel, f, g, pair_b, pair_b2)?;
    let prepared = Prepared::new(kernel, f.axes);
    let cells = f.cells();
    let (pf, pg) = (pieces(f, pair_b)?, pieces(g, pair_b2)?);
    let mut rhs = ZERO;
    let mut dense = alloc::vec![ZERO; cells];
    for p in &pf {
        // T M_b applied to the piece, then paired with each piece of g.
        dense.iter_mut().for_each(|v| *v = ZERO);
        if prepared.kernel.is_separable() {
            let mut full = alloc::vec![ZERO; cells];
            for (&c, &v) in p.cells.iter().zip(&p.values) {
                full[c] = v;
            }
            for x in 0..cells {
                let mut unit = alloc::vec![ZERO; cells];
                unit[x] = C64::new(1.0, 0.0);
                dense[x] = weighted_form(&prepared, &full, &unit);
            }
        } else {
            for (x, d) in dense.iter_mut().enumerate() {
                *d = p.cells.iter().zip(&p.values).map(|(&y, &v)| v * prepared.entry(x, y)).sum();
            }
        }
        for q in &pg {
            rhs += q.cells.iter().zip(&q.values).map(|(&x, &v)| v * dense[x]).sum::<C64>();
        }
    }
    let diff = math::cabs(lhs - rhs);
    let gap = if lhs == ZERO { diff } else { diff / math::cabs(lhs) };
    Ok(ExpansionReport { lhs, rhs, gap, terms: pf.len() * pg.len() })
}

/// The supremum in the weak boundedness property.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WbpReport {
    /// `sup_R |⟨M_{b'} T M_b χ_R, χ_R⟩| / |R|`.
    pub sup: f64,
    pub witness: DyadicRect,
}

/// Exhaustive over all dyadic rectangles of the mesh.
pub fn wbp_scan(kernel: &KernelSpec, pair_b: &AccretivePair, pair_b2: &AccretivePair) -> Result<WbpReport> {
    let axes = pair_b.axes();
    pair_b2.check_mesh(axes)?;
    check_axes(axes)?;
    let [a1, a2] = axes;
    let whole = DyadicRect { first: a1.cube(0, 0)?, second: a2.cube(0, 0)? };
    let mut best = WbpReport { sup: 0.0, witness: whole };
    let prepared = Prepared::new(kernel, axes);
    let (b, b2) = (pair_b.tensor(), pair_b2.tensor());
    // For separable kernels the form factorises over the two axes.
    let axis_forms = |p: &Profile, axis: Axis, w: &AxisFunction, w2: &AxisFunction| -> Vec<Vec<C64>> {
        let m = profile_matrix(p, axis, 2);
        let n = axis.cells();
        (0..=axis.depth)
            .map(|s| {
                (0..axis.cubes_at(s))
                    .map(|k| {
                        let inside: Vec<usize> = (0..n).filter(|&c| axis.cube_of(c, s) == k).collect();
                        let mut t = ZERO;
                        for &x in &inside {
                            for &y in &inside {
                                t += w2.values[x] * w.values[y] * m[x * n + y];
                            }
                        }
                        t
                    })
                    .collect()
            })
            .collect()
    };
    let separable = match &kernel.form {
        Form::Separable(p, q) => Some((
            axis_forms(p, a1, &pair_b.b1, &pair_b2.b1),
            axis_forms(q, a2, &pair_b.b2, &pair_b2.b2),
        )),
        _ => None,
    };
    for p in 0..=a1.depth {
        for q in 0..=a2.depth {
            for k1 in 0..a1.cubes_at(p) {
                for k2 in 0..a2.cubes_at(q) {
                    let rect = DyadicRect { first: a1.cube(p, k1)?, second: a2.cube(q, k2)? };
                    let value = match &separable {
                        Some((f1, f2)) => f1[p as usize][k1] * f2[q as usize][k2] * kernel.scale,
                        None => {
                            let chi = GridFunction::indicator(axes, &rect)?;
                            let big_f = chi.mul(&b)?;
                            let big_g = chi.mul(&b2)?;
                            weighted_form(&prepared, &big_f.values, &big_g.values)
                        }
                    };
                    let ratio = math::cabs(value) / rect.volume();
                    if ratio > best.sup {
                        best = WbpReport { sup: ratio, witness: rect };
                    }
                }
            }
        }
    }
    Ok(best)
}

/// `T b`, `T* b'`, `T₁ d'` and `T₁* d` with `d = b₁ ⊗ b₂'`, `d' = b₁' ⊗ b₂`,
/// and the rectangular BMO surrogate of each (unit weights).
#[derive(Clone, Debug, PartialEq)]
pub struct TbProbe {
    pub functions: [GridFunction; 4],
    pub rect_bmo: [f64; 4],
}

pub const PROBE_NAMES: [&str; 4] = ["Tb", "T*b'", "T1d'", "T1*d"];

/// `(T u)(x) = Σ_y K(x, y) u(y) vol` for a tensor `u = u₁ ⊗ u₂`.
pub fn apply_to_tensor(kernel: &KernelSpec, u1: &AxisFunction, u2: &AxisFunction) -> Result<GridFunction> {
    let axes = [u1.axis, u2.axis];
    check_axes(axes)?;
    let [a1, a2] = axes;
    let (n1, n2) = (a1.cells(), a2.cells());
    match &kernel.form {
        Form::Zero => Ok(GridFunction::zeros(axes)),
        Form::Separable(p, q) => {
            let (m1, m2) = (profile_matrix(p, a1, 1), profile_matrix(q, a2, 1));
            let t1: Vec<C64> = (0..n1).map(|x| (0..n1).map(|y| u1.values[y] * m1[x * n1 + y]).sum()).collect();
            let t2: Vec<C64> = (0..n2).map(|x| (0..n2).map(|y| u2.values[y] * m2[x * n2 + y]).sum()).collect();
            Ok(AxisFunction { axis: a1, values: t1 }.tensor(&AxisFunction { axis: a2, values: t2 }).scale(C64::new(kernel.scale, 0.0)))
        }
        Form::General(_) => {
            let prepared = Prepared::new(kernel, axes);
            let u = u1.tensor(u2);
            let us = support(&u.values);
            let vol = a1.cell_volume() * a2.cell_volume();
            let values = (0..n1 * n2).map(|x| us.iter().map(|&(y, v)| v * prepared.entry(x, y)).sum::<C64>() / vol).collect();
            GridFunction::new(axes, values)
        }
    }
}

pub fn tb_probe(kernel: &KernelSpec, pair_b: &AccretivePair, pair_b2: &AccretivePair) -> Result<TbProbe> {
    let axes = pair_b.axes();
    pair_b2.check_mesh(axes)?;
    let t1 = kernel.partial_adjoint();
    let functions = [
        apply_to_tensor(kernel, &pair_b.b1, &pair_b.b2)?,
        apply_to_tensor(&kernel.adjoint(), &pair_b2.b1, &pair_b2.b2)?,
        apply_to_tensor(&t1, &pair_b2.b1, &pair_b.b2)?,
        apply_to_tensor(&t1.adjoint(), &pair_b.b1, &pair_b2.b2)?,
    ];
    let unit = AccretivePair::unit(axes);
    let mut rect_bmo = [0.0; 4];
    for (r, f) in rect_bmo.iter_mut().zip(&functions) {
        *r = rect_bmo_norm(f, &unit)?;
    }
    Ok(TbProbe { functions, rect_bmo })
}

/// One cell of the decay table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRow {
    pub i1: u32,
    pub j1: u32,
    pub n_pairs: usize,
    /// `None` when no pair qualifies.
    pub max_normalized: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayScan {
    pub depth: u32,
    pub rows: Vec<DecayRow>,
    /// Least-squares slopes of `log₂ max_normalized` against `i₁` and `j₁`
    /// (plane fit over the non-empty, nonzero cells); `None` when the fit is
    /// underdetermined.
    pub slope_i: Option<f64>,
    pub slope_j: Option<f64>,
}

/// The `b`-adapted Haar function of a cube on a one-dimensional axis:
/// `χ_L / ∫_L b − χ_R / ∫_R b`. It spans the range of `Δ_I^b`.
fn adapted_haar(axis: Axis, cube: &DyadicCube, b: &AxisFunction) -> Result<Vec<C64>> {
    let k = axis.locate(cube)?;
    let s = cube.scale;
    let mut out = alloc::vec![ZERO; axis.cells()];
    let mut mass = [ZERO; 2];
    let children: Vec<usize> = axis.children(s, k).collect();
    for c in (0..axis.cells()).filter(|&c| axis.cube_of(c, s) == k) {
        let side = (axis.cube_of(c, s + 1) == children[1]) as usize;
        mass[side] += b.values[c] * axis.cell_volume();
    }
    for (m, (side, _)) in mass.iter().zip([(0usize, ()), (1, ())]) {
        if math::cabs(*m) == 0.0 {
            return Err(Error::DegenerateWeight { axis: 1, scale: s + 1, cube: children[side] });
        }
    }
    for c in (0..axis.cells()).filter(|&c| axis.cube_of(c, s) == k) {
        let side = (axis.cube_of(c, s + 1) == children[1]) as usize;
        out[c] = if side == 0 { C64::new(1.0, 0.0) / mass[0] } else { -C64::new(1.0, 0.0) / mass[1] };
    }
    Ok(out)
}

struct AxisPair {
    small: DyadicCube,
    large: DyadicCube,
    factor: f64,
}

/// Separated pairs `(I₁, I₂)` with `ℓ(I₁) ≤ ℓ(I₂)`, `I₁` good, both of
/// scale below `depth` so that the differences exist, grouped by `i₁`.
fn separated_pairs(axis: Axis, params: &GoodnessParams) -> Result<Vec<Vec<AxisPair>>> {
    let grid = crate::dyadic_grid::ShiftedGrid::standard(axis.depth, 1)?;
    let mut by_gap: Vec<Vec<AxisPair>> = (0..=axis.depth).map(|_| Vec::new()).collect();
    for s1 in 0..axis.depth {
        for k1 in 0..axis.cubes_at(s1) {
            let small = axis.cube(s1, k1)?;
            if !is_good(&small, &grid, params)? {
                continue;
            }
            for s2 in 0..=s1 {
                for k2 in 0..axis.cubes_at(s2) {
                    let large = axis.cube(s2, k2)?;
                    if relative_position(&small, &large, &grid, params)?.class != PositionClass::Separated {
                        continue;
                    }
                    let k = join(&small, &large, &grid)?;
                    let gap = small.scale - k.scale;
                    let factor = math::sqrt(small.volume() * large.volume()) / k.volume();
                    by_gap[gap as usize].push(AxisPair { small, large, factor });
                }
            }
        }
    }
    Ok(by_gap)
}

fn l2_axis(axis: Axis, v: &[C64]) -> f64 {
    math::sqrt(v.iter().map(|z| z.norm_sqr()).sum::<f64>() * axis.cell_volume())
}

/// Pairing of adapted Haar functions for one axis pair under a profile,
/// normalized by the geometry factor and the two `L²` norms.
fn axis_normalized(p: &Profile, axis: Axis, pair: &AxisPair, b: &AxisFunction, b2: &AxisFunction) -> Result<f64> {
    let h1 = adapted_haar(axis, &pair.small, b)?;
    let h2 = adapted_haar(axis, &pair.large, b2)?;
    let vol = axis.cell_volume();
    let mut total = ZERO;
    for x in (0..axis.cells()).filter(|&x| h2[x] != ZERO) {
        for y in (0..axis.cells()).filter(|&y| y != x && h1[y] != ZERO) {
            total += h2[x] * b2.values[x] * h1[y] * b.values[y] * p(mid(axis, x), mid(axis, y));
        }
    }
    Ok(math::cabs(total) * vol * vol / (pair.factor * l2_axis(axis, &h1) * l2_axis(axis, &h2)))
}

/// For every `(i₁, j₁)`, the largest normalized Separated/Separated pairing
/// `|⟨M_{b'} T M_b h_{I₁×J₁}, h_{I₂×J₂}⟩| / (geometry · ‖h‖ ‖h'‖)`, where
/// `h` are the adapted Haar functions spanning the ranges of the localized
/// double differences. Goodness of the smaller cubes is judged on the
/// standard grid.
///
/// For separable kernels the normalized pairing factorises over the axes
/// and so does the set of qualifying pairs, so the maximum is exact. Other
/// kernels sample at most [`DECAY_SAMPLE_CAP`] pairs per cell, in index order.
pub fn decay_scan(
    kernel: &KernelSpec,
    pair_b: &AccretivePair,
    pair_b2: &AccretivePair,
    params: &GoodnessParams,
) -> Result<DecayScan> {
    let axes = pair_b.axes();
    pair_b2.check_mesh(axes)?;
    check_axes(axes)?;
    if axes[0].depth != axes[1].depth {
        return Err(Error::InvalidParameter("decay scans use the same depth on both axes".into()));
    }
    let depth = axes[0].depth;
    let [a1, a2] = axes;
    let pairs1 = separated_pairs(a1, params)?;
    let pairs2 = separated_pairs(a2, params)?;
    let mut rows = Vec::new();
    match &kernel.form {
        Form::Separable(p, q) => {
            let best = |pairs: &Vec<AxisPair>, prof: &Profile, axis: Axis, b: &AxisFunction, b2: &AxisFunction| {
                pairs.iter().try_fold(0.0f64, |m, pr| Ok::<f64, Error>(m.max(axis_normalized(prof, axis, pr, b, b2)?)))
            };
            for i1 in 1..=depth {
                let m1 = best(&pairs1[i1 as usize], p, a1, &pair_b.b1, &pair_b2.b1)?;
                for j1 in 1..=depth {
                    let m2 = best(&pairs2[j1 as usize], q, a2, &pair_b.b2, &pair_b2.b2)?;
                    let n_pairs = pairs1[i1 as usize].len() * pairs2[j1 as usize].len();
                    let max_normalized = (n_pairs > 0).then(|| m1 * m2 * kernel.scale.abs());
                    rows.push(DecayRow { i1, j1, n_pairs, max_normalized });
                }
            }
        }
        _ => {
            let prepared = Prepared::new(kernel, axes);
            let (b, b2) = (pair_b.tensor(), pair_b2.tensor());
            for i1 in 1..=depth {
                for j1 in 1..=depth {
                    let (l1, l2) = (&pairs1[i1 as usize], &pairs2[j1 as usize]);
                    let mut best = 0.0f64;
                    let mut count = 0;
                    'outer: for x in l1 {
                        for y in l2 {
                            if count == DECAY_SAMPLE_CAP {
                                break 'outer;
                            }
                            count += 1;
                            let h1 = AxisFunction { axis: a1, values: adapted_haar(a1, &x.small, &pair_b.b1)? }
                                .tensor(&AxisFunction { axis: a2, values: adapted_haar(a2, &y.small, &pair_b.b2)? });
                            let h2 = AxisFunction { axis: a1, values: adapted_haar(a1, &x.large, &pair_b2.b1)? }
                                .tensor(&AxisFunction { axis: a2, values: adapted_haar(a2, &y.large, &pair_b2.b2)? });
                            let v = weighted_form(&prepared, &h1.mul(&b)?.values, &h2.mul(&b2)?.values);
                            let denom = x.factor * y.factor * h1.norm_l2() * h2.norm_l2();
                            best = best.max(math::cabs(v) / denom);
                        }
                    }
                    let n_pairs = l1.len() * l2.len();
                    rows.push(DecayRow { i1, j1, n_pairs: n_pairs.min(DECAY_SAMPLE_CAP), max_normalized: (count > 0).then_some(best) });
                }
            }
        }
    }
    let (slope_i, slope_j) = plane_fit(&rows);
    Ok(DecayScan { depth, rows, slope_i, slope_j })
}

/// Least-squares fit `log₂ m = c + s_i i₁ + s_j j₁`.
fn plane_fit(rows: &[DecayRow]) -> (Option<f64>, Option<f64>) {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| r.max_normalized.filter(|m| *m > 0.0).map(|m| (r.i1 as f64, r.j1 as f64, math::log2(m))))
        .collect();
    if pts.len() < 3 {
        return (None, None);
    }
    let n = pts.len() as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| pts.iter().map(f).sum::<f64>() / n;
    let (mi, mj, mz) = (mean(|p| p.0), mean(|p| p.1), mean(|p| p.2));
    let (mut sii, mut sjj, mut sij, mut siz, mut sjz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(i, j, z) in &pts {
        let (di, dj, dz) = (i - mi, j - mj, z - mz);
        sii += di * di;
        sjj += dj * dj;
        sij += di * dj;
        siz += di * dz;
        sjz += dj * dz;
    }
    let det = sii * sjj - sij * sij;
    if det.abs() < 1e-12 {
        return (None, None);
    }
    (Some((siz * sjj - sjz * sij) / det), Some((sjz * sii - siz * sij) / det))
}
