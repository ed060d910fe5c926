//! Step functions on the finest dyadic mesh.
//!
//! An [`Axis`] is one parameter: the torus `[0,1)^d` (`d ∈ {1,2}`) cut into
//! `2^(d·depth)` cells. Cells of a two-dimensional axis are numbered
//! `k_a · 2^depth + k_b`. A [`GridFunction`] lives on the product of two axes
//! and stores its values row-major, the first-axis cell being the slow index.
//!
//! Integrals are exact sums: `∫ f = Σ f(cell) · |cell|`.

use alloc::vec::Vec;

use crate::dyadic_grid::{exp2i, DyadicCube, ShiftedGrid};
use crate::math;
use crate::{Error, Result, C64};

/// Finest cells per axis are capped at `2^MAX_AXIS_BITS`.
pub const MAX_AXIS_BITS: u32 = 20;

/// Relative size below which a weight integral counts as zero.
pub const DEGENERATE_RATIO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Axis {
    pub depth: u32,
    pub dim: u8,
}

impl Axis {
    pub fn new(depth: u32, dim: u8) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(alloc::format!("axis dimension {dim} is not 1 or 2")));
        }
        if depth * dim as u32 > MAX_AXIS_BITS {
            return Err(Error::TooLarge(alloc::format!(
                "axis with depth {depth} and dimension {dim} has more than 2^{MAX_AXIS_BITS} cells"
            )));
        }
        Ok(Self { depth, dim })
    }

    pub fn cells(&self) -> usize {
        1 << (self.depth * self.dim as u32)
    }

    /// Number of dyadic cubes of scale `p`.
    pub fn cubes_at(&self, p: u32) -> usize {
        1 << (p * self.dim as u32)
    }

    /// Flattened index of the scale-`p` cube containing `cell`.
    #[inline]
    pub fn cube_of(&self, cell: usize, p: u32) -> usize {
        let shift = self.depth - p;
        if self.dim == 1 {
            cell >> shift
        } else {
            let ka = cell >> self.depth;
            let kb = cell & ((1 << self.depth) - 1);
            ((ka >> shift) << p) | (kb >> shift)
        }
    }

    /// Table of [`Axis::cube_of`] for every cell.
    pub fn cube_map(&self, p: u32) -> Vec<usize> {
        (0..self.cells()).map(|c| self.cube_of(c, p)).collect()
    }

    /// The scale-`p+1` children of cube `cube` at scale `p`.
    pub fn children(&self, p: u32, cube: usize) -> impl Iterator<Item = usize> {
        let dim = self.dim;
        let (ka, kb) = if dim == 1 { (cube, 0) } else { (cube >> p, cube & ((1 << p) - 1)) };
        (0..(1usize << dim)).map(move |i| {
            if dim == 1 {
                2 * ka + i
            } else {
                ((2 * ka + (i >> 1)) << (p + 1)) | (2 * kb + (i & 1))
            }
        })
    }

    pub fn cell_volume(&self) -> f64 {
        exp2i(-((self.depth * self.dim as u32) as i32))
    }

    pub fn cube_volume(&self, p: u32) -> f64 {
        exp2i(-((p * self.dim as u32) as i32))
    }

    /// Midpoint of a finest cell, one coordinate per spatial dimension.
    pub fn midpoint(&self, cell: usize) -> [f64; 2] {
        let h = exp2i(-(self.depth as i32));
        if self.dim == 1 {
            [(cell as f64 + 0.5) * h, 0.0]
        } else {
            let ka = cell >> self.depth;
            let kb = cell & ((1 << self.depth) - 1);
            [(ka as f64 + 0.5) * h, (kb as f64 + 0.5) * h]
        }
    }

    pub fn cube(&self, p: u32, flat: usize) -> Result<DyadicCube> {
        if p > self.depth {
            return Err(Error::GridMismatch(alloc::format!("scale {p} is finer than depth {}", self.depth)));
        }
        DyadicCube::from_flat(self.dim, p, flat)
    }

    /// Validates that a cube lives on this axis and returns its flat index.
    pub fn locate(&self, cube: &DyadicCube) -> Result<usize> {
        if cube.dim != self.dim || cube.scale > self.depth {
            return Err(Error::GridMismatch(alloc::format!(
                "cube {cube:?} does not live on an axis of depth {} and dimension {}",
                self.depth, self.dim
            )));
        }
        Ok(cube.flat())
    }

    pub fn grid(&self) -> ShiftedGrid {
        ShiftedGrid::standard(self.depth, self.dim).expect("axis parameters already validated")
    }
}

/// A dyadic rectangle `I × J`, one cube per parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicRect {
    pub first: DyadicCube,
    pub second: DyadicCube,
}

impl DyadicRect {
    pub fn volume(&self) -> f64 {
        self.first.volume() * self.second.volume()
    }
}

/// Which variables a weighted average integrates out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AverageAxes {
    First,
    Second,
    Both,
}

/// Result of [`GridFunction::b_average`].
#[derive(Clone, Debug, PartialEq)]
pub enum Average {
    /// Averaging over both variables gives a number.
    Scalar(C64),
    /// Averaging over one variable leaves a function of the other.
    Section(AxisFunction),
}

fn check_finite(values: &[C64], what: &str) -> Result<()> {
    if values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn degenerate(sum: C64, mass: f64) -> bool {
    !(math::cabs(sum) > DEGENERATE_RATIO * mass)
}

/// A step function of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisFunction {
    pub axis: Axis,
    pub values: Vec<C64>,
}

impl AxisFunction {
    pub fn new(axis: Axis, values: Vec<C64>) -> Result<Self> {
        if values.len() != axis.cells() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} values for an axis with {} cells",
                values.len(),
                axis.cells()
            )));
        }
        check_finite(&values, "axis function")?;
        Ok(Self { axis, values })
    }

    pub fn from_real(axis: Axis, values: &[f64]) -> Result<Self> {
        Self::new(axis, values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn constant(axis: Axis, c: C64) -> Self {
        Self { axis, values: alloc::vec![c; axis.cells()] }
    }

    pub fn from_fn(axis: Axis, f: impl Fn(usize) -> C64) -> Result<Self> {
        Self::new(axis, (0..axis.cells()).map(f).collect())
    }

    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.axis.cell_volume()
    }

    /// `∫_I f b / ∫_I b`.
    pub fn b_average(&self, cube: &DyadicCube, b: &AxisFunction) -> Result<C64> {
        if b.axis != self.axis {
            return Err(Error::ShapeMismatch("weight and function live on different axes".into()));
        }
        let k = self.axis.locate(cube)?;
        let (mut num, mut den, mut mass) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), 0.0);
        for cell in (0..self.axis.cells()).filter(|&c| self.axis.cube_of(c, cube.scale) == k) {
            num += self.values[cell] * b.values[cell];
            den += b.values[cell];
            mass += math::cabs(b.values[cell]);
        }
        if degenerate(den, mass) {
            return Err(Error::DegenerateWeight { axis: 1, scale: cube.scale, cube: k });
        }
        Ok(num / den)
    }

    pub fn tensor(&self, other: &AxisFunction) -> GridFunction {
        let values = self
            .values
            .iter()
            .flat_map(|&a| other.values.iter().map(move |&b| a * b))
            .collect();
        GridFunction { axes: [self.axis, other.axis], values }
    }

    pub fn pair_bilinear(&self, g: &AxisFunction) -> Result<C64> {
        same_axis(self.axis, g.axis)?;
        Ok(self.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<C64>() * self.axis.cell_volume())
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|z| math::cabs(*z)).sum::<f64>() * self.axis.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        math::sqrt(self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.axis.cell_volume())
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().map(|z| math::cabs(*z)).fold(0.0, f64::max)
    }

    /// The same step function on a finer mesh.
    pub fn refine(&self, depth: u32) -> Result<AxisFunction> {
        if depth < self.axis.depth {
            return Err(Error::InvalidParameter("refinement cannot reduce depth".into()));
        }
        let fine = Axis::new(depth, self.axis.dim)?;
        AxisFunction::from_fn(fine, |c| self.values[fine.cube_of(c, self.axis.depth)])
    }
}

fn same_axis(a: Axis, b: Axis) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch(alloc::format!("axes {a:?} and {b:?} differ")))
    }
}

/// A step function on the product of two axes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub axes: [Axis; 2],
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn new(axes: [Axis; 2], values: Vec<C64>) -> Result<Self> {
        let cells = axes[0].cells() * axes[1].cells();
        if values.len() != cells {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} values for a mesh with {cells} cells",
                values.len()
            )));
        }
        check_finite(&values, "grid function")?;
        Ok(Self { axes, values })
    }

    pub fn zeros(axes: [Axis; 2]) -> Self {
        Self::constant(axes, C64::new(0.0, 0.0))
    }

    pub fn constant(axes: [Axis; 2], c: C64) -> Self {
        Self { axes, values: alloc::vec![c; axes[0].cells() * axes[1].cells()] }
    }

    /// Builds a function from its value on each `(first cell, second cell)` pair.
    pub fn from_fn(axes: [Axis; 2], f: impl Fn(usize, usize) -> C64) -> Result<Self> {
        let n2 = axes[1].cells();
        Self::new(axes, (0..axes[0].cells() * n2).map(|i| f(i / n2, i % n2)).collect())
    }

    pub fn from_real(axes: [Axis; 2], values: &[f64]) -> Result<Self> {
        Self::new(axes, values.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Indicator of a dyadic rectangle.
    pub fn indicator(axes: [Axis; 2], rect: &DyadicRect) -> Result<Self> {
        let (k1, k2) = (axes[0].locate(&rect.first)?, axes[1].locate(&rect.second)?);
        let (p, q) = (rect.first.scale, rect.second.scale);
        Self::from_fn(axes, |c1, c2| {
            let inside = axes[0].cube_of(c1, p) == k1 && axes[1].cube_of(c2, q) == k2;
            C64::new(inside as u8 as f64, 0.0)
        })
    }

    pub fn cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes[0].cell_volume() * self.axes[1].cell_volume()
    }

    #[inline]
    pub fn at(&self, c1: usize, c2: usize) -> C64 {
        self.values[c1 * self.axes[1].cells() + c2]
    }

    pub fn check_same_mesh(&self, other: &GridFunction) -> Result<()> {
        if self.axes == other.axes {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(alloc::format!(
                "meshes {:?} and {:?} differ",
                self.axes, other.axes
            )))
        }
    }

    fn zip_with(&self, other: &GridFunction, op: impl Fn(C64, C64) -> C64) -> Result<GridFunction> {
        self.check_same_mesh(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect();
        Ok(GridFunction { axes: self.axes, values })
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product, the multiplication operator `M_g`.
    pub fn mul(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: C64) -> GridFunction {
        GridFunction { axes: self.axes, values: self.values.iter().map(|&a| a * c).collect() }
    }

    pub fn conj(&self) -> GridFunction {
        GridFunction { axes: self.axes, values: self.values.iter().map(|a| a.conj()).collect() }
    }

    pub fn add_assign(&mut self, other: &GridFunction) -> Result<()> {
        self.check_same_mesh(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += *b;
        }
        Ok(())
    }

    /// Restriction to a rectangle (zero outside).
    pub fn restrict(&self, rect: &DyadicRect) -> Result<GridFunction> {
        let chi = GridFunction::indicator(self.axes, rect)?;
        self.mul(&chi)
    }

    pub fn integral(&self) -> C64 {
        self.values.iter().sum::<C64>() * self.cell_volume()
    }

    /// `∫ f g` without conjugation.
    pub fn pair_bilinear(&self, g: &GridFunction) -> Result<C64> {
        self.check_same_mesh(g)?;
        Ok(self.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<C64>() * self.cell_volume())
    }

    /// `∫ f ḡ`.
    pub fn pair_sesquilinear(&self, g: &GridFunction) -> Result<C64> {
        self.check_same_mesh(g)?;
        Ok(self.values.iter().zip(&g.values).map(|(a, b)| a * b.conj()).sum::<C64>()
            * self.cell_volume())
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|z| math::cabs(*z)).sum::<f64>() * self.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        math::sqrt(self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_volume())
    }

    pub fn norm_linf(&self) -> f64 {
        self.values.iter().map(|z| math::cabs(*z)).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_mesh(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| math::cabs(a - b)).fold(0.0, f64::max))
    }

    /// Weighted average `∫ f b / ∫ b` over the chosen variables of `rect`.
    ///
    /// With [`AverageAxes::First`] only `rect.first` matters and the result is a
    /// function of the second variable, and symmetrically for `Second`.
    pub fn b_average(&self, rect: &DyadicRect, b: &GridFunction, axes: AverageAxes) -> Result<Average> {
        self.check_same_mesh(b)?;
        let (k1, k2) = (self.axes[0].locate(&rect.first)?, self.axes[1].locate(&rect.second)?);
        let (p, q) = (rect.first.scale, rect.second.scale);
        let (n1, n2) = (self.axes[0].cells(), self.axes[1].cells());
        let in1 = |c1: usize| self.axes[0].cube_of(c1, p) == k1;
        let in2 = |c2: usize| self.axes[1].cube_of(c2, q) == k2;
        let zero = C64::new(0.0, 0.0);
        match axes {
            AverageAxes::Both => {
                let (mut num, mut den, mut mass) = (zero, zero, 0.0);
                for c1 in (0..n1).filter(|&c| in1(c)) {
                    for c2 in (0..n2).filter(|&c| in2(c)) {
                        let w = b.at(c1, c2);
                        num += self.at(c1, c2) * w;
                        den += w;
                        mass += math::cabs(w);
                    }
                }
                if degenerate(den, mass) {
                    return Err(Error::DegenerateRectangle { scales: [p, q], cubes: [k1, k2] });
                }
                Ok(Average::Scalar(num / den))
            }
            AverageAxes::First | AverageAxes::Second => {
                let first = axes == AverageAxes::First;
                let (outer, inner) = if first { (n2, n1) } else { (n1, n2) };
                let mut out = Vec::with_capacity(outer);
                for o in 0..outer {
                    let (mut num, mut den, mut mass) = (zero, zero, 0.0);
                    for i in 0..inner {
                        let (c1, c2) = if first { (i, o) } else { (o, i) };
                        if (first && !in1(c1)) || (!first && !in2(c2)) {
                            continue;
                        }
                        let w = b.at(c1, c2);
                        num += self.at(c1, c2) * w;
                        den += w;
                        mass += math::cabs(w);
                    }
                    if degenerate(den, mass) {
                        return Err(if first {
                            Error::DegenerateWeight { axis: 1, scale: p, cube: k1 }
                        } else {
                            Error::DegenerateWeight { axis: 2, scale: q, cube: k2 }
                        });
                    }
                    out.push(num / den);
                }
                let axis = if first { self.axes[1] } else { self.axes[0] };
                Ok(Average::Section(AxisFunction::new(axis, out)?))
            }
        }
    }

    /// The same step function on a finer product mesh.
    pub fn refine(&self, depths: [u32; 2]) -> Result<GridFunction> {
        if depths[0] < self.axes[0].depth || depths[1] < self.axes[1].depth {
            return Err(Error::InvalidParameter("refinement cannot reduce depth".into()));
        }
        let fine = [Axis::new(depths[0], self.axes[0].dim)?, Axis::new(depths[1], self.axes[1].dim)?];
        GridFunction::from_fn(fine, |c1, c2| {
            self.at(fine[0].cube_of(c1, self.axes[0].depth), fine[1].cube_of(c2, self.axes[1].depth))
        })
    }
}

/// A real, typically non-negative, field on the product mesh: square and
/// maximal functions, indicator weights.
#[derive(Clone, Debug, PartialEq)]
pub struct RealField {
    pub axes: [Axis; 2],
    pub values: Vec<f64>,
}

impl RealField {
    pub fn cell_volume(&self) -> f64 {
        self.axes[0].cell_volume() * self.axes[1].cell_volume()
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        math::sqrt(self.values.iter().map(|v| v * v).sum::<f64>() * self.cell_volume())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest strictly positive value, if any.
    pub fn min_positive(&self) -> Option<f64> {
        self.values.iter().copied().filter(|&v| v > 0.0).reduce(f64::min)
    }

    /// `{x : value(x) > level}`.
    pub fn superlevel(&self, level: f64) -> CellSet {
        CellSet { axes: self.axes, cells: self.values.iter().map(|&v| v > level).collect() }
    }
}

/// A union of finest cells of the product mesh.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellSet {
    pub axes: [Axis; 2],
    pub cells: Vec<bool>,
}

impl CellSet {
    pub fn empty(axes: [Axis; 2]) -> Self {
        Self { axes, cells: alloc::vec![false; axes[0].cells() * axes[1].cells()] }
    }

    pub fn full(axes: [Axis; 2]) -> Self {
        Self { axes, cells: alloc::vec![true; axes[0].cells() * axes[1].cells()] }
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.axes[0].cell_volume() * self.axes[1].cell_volume()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.cells.iter().enumerate().filter(|(_, &c)| c).map(|(i, _)| i).collect()
    }

    pub fn is_subset_of(&self, other: &CellSet) -> bool {
        self.cells.iter().zip(&other.cells).all(|(&a, &b)| !a || b)
    }

    pub fn indicator(&self) -> GridFunction {
        GridFunction {
            axes: self.axes,
            values: self.cells.iter().map(|&c| C64::new(c as u8 as f64, 0.0)).collect(),
        }
    }
}

/// Cell values with independent real and imaginary parts uniform in `[-1, 1)`.
pub fn random_grid_function(axes: [Axis; 2], seed: u64) -> GridFunction {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = (0..axes[0].cells() * axes[1].cells())
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    GridFunction { axes, values }
}

/// Like [`random_grid_function`] with zero imaginary part.
pub fn random_real_grid_function(axes: [Axis; 2], seed: u64) -> GridFunction {
    let mut f = random_grid_function(axes, seed);
    f.values.iter_mut().for_each(|z| z.im = 0.0);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn axis(depth: u32, dim: u8) -> Axis {
        Axis::new(depth, dim).unwrap()
    }

    fn pseudo(seed: u64, n: usize) -> Vec<C64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let a = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let b = (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
                C64::new(a, b)
            })
            .collect()
    }

    #[test]
    fn weighted_average_example() {
        let a = axis(1, 1);
        let b = AxisFunction::from_real(a, &[1.0, 2.0]).unwrap();
        let f = AxisFunction::from_real(a, &[1.0, 0.0]).unwrap();
        let root = DyadicCube::new(1, 0, [0, 0]).unwrap();
        let avg = f.b_average(&root, &b).unwrap();
        assert!((avg - c(1.0 / 3.0)).norm() < 1e-15);
    }

    #[test]
    fn vanishing_weight_is_reported_with_its_cube() {
        let a = axis(1, 1);
        let b = AxisFunction::from_real(a, &[1.0, -1.0]).unwrap();
        let f = AxisFunction::from_real(a, &[1.0, 0.0]).unwrap();
        let root = DyadicCube::new(1, 0, [0, 0]).unwrap();
        assert_eq!(
            f.b_average(&root, &b),
            Err(Error::DegenerateWeight { axis: 1, scale: 0, cube: 0 })
        );
        let g = f.tensor(&AxisFunction::constant(a, c(1.0)));
        let w = b.tensor(&AxisFunction::constant(a, c(1.0)));
        let rect = DyadicRect { first: root, second: root };
        assert!(matches!(
            g.b_average(&rect, &w, AverageAxes::First),
            Err(Error::DegenerateWeight { axis: 1, scale: 0, cube: 0 })
        ));
        assert_eq!(
            g.b_average(&rect, &w, AverageAxes::Both),
            Err(Error::DegenerateRectangle { scales: [0, 0], cubes: [0, 0] })
        );
    }

    #[test]
    fn tensor_example_and_norm_factorisation() {
        let a = axis(1, 1);
        let f1 = AxisFunction::from_real(a, &[1.0, 2.0]).unwrap();
        let f2 = AxisFunction::from_real(a, &[3.0, 4.0]).unwrap();
        let t = f1.tensor(&f2);
        assert_eq!(t.values, vec![c(3.0), c(4.0), c(6.0), c(8.0)]);
        let g1 = AxisFunction::new(axis(3, 2), pseudo(1, 64)).unwrap();
        let g2 = AxisFunction::new(axis(4, 1), pseudo(2, 16)).unwrap();
        let g = g1.tensor(&g2);
        for (lhs, rhs) in [
            (g.norm_l1(), g1.norm_l1() * g2.norm_l1()),
            (g.norm_l2(), g1.norm_l2() * g2.norm_l2()),
            (g.norm_linf(), g1.norm_linf() * g2.norm_linf()),
        ] {
            assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        }
    }

    #[test]
    fn indicator_norms() {
        let axes = [axis(2, 1), axis(2, 1)];
        let mut v = vec![0.0; 16];
        v[5] = 1.0;
        let f = GridFunction::from_real(axes, &v).unwrap();
        assert_eq!(f.norm_l1(), 1.0 / 16.0);
        assert_eq!(f.norm_l2(), 0.25);
        assert_eq!(f.norm_linf(), 1.0);
    }

    #[test]
    fn pairings_match_naive_loops() {
        let axes = [axis(2, 2), axis(3, 1)];
        let n = axes[0].cells() * axes[1].cells();
        let f = GridFunction::new(axes, pseudo(3, n)).unwrap();
        let g = GridFunction::new(axes, pseudo(4, n)).unwrap();
        let vol = 1.0 / n as f64;
        let (mut bil, mut ses) = (c(0.0), c(0.0));
        for c1 in 0..axes[0].cells() {
            for c2 in 0..axes[1].cells() {
                bil += f.at(c1, c2) * g.at(c1, c2) * vol;
                ses += f.at(c1, c2) * g.at(c1, c2).conj() * vol;
            }
        }
        assert!((f.pair_bilinear(&g).unwrap() - bil).norm() < 1e-12);
        assert!((f.pair_sesquilinear(&g).unwrap() - ses).norm() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_and_wrong_lengths() {
        let a = axis(1, 1);
        assert!(matches!(AxisFunction::from_real(a, &[1.0, f64::NAN]), Err(Error::NonFinite(_))));
        assert!(matches!(AxisFunction::from_real(a, &[1.0]), Err(Error::ShapeMismatch(_))));
        assert!(Axis::new(11, 2).is_err());
        assert!(Axis::new(3, 3).is_err());
    }

    #[test]
    fn cube_maps_agree_with_dyadic_cube_geometry() {
        for (depth, dim) in [(3u32, 1u8), (3, 2)] {
            let a = axis(depth, dim);
            let grid = a.grid();
            for p in 0..=depth {
                for cell in 0..a.cells() {
                    let finest = DyadicCube::from_flat(dim, depth, cell).unwrap();
                    let anc = grid.ancestor(&finest, p).unwrap();
                    assert_eq!(anc.flat(), a.cube_of(cell, p));
                }
                if p < depth {
                    for k in 0..a.cubes_at(p) {
                        let parent = a.cube(p, k).unwrap();
                        for ch in a.children(p, k) {
                            let child = a.cube(p + 1, ch).unwrap();
                            assert!(grid.contains(&parent, &child).unwrap());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn section_averages_match_scalar_average_of_tensors() {
        let (a1, a2) = (axis(3, 1), axis(2, 2));
        let f1 = AxisFunction::new(a1, pseudo(5, 8)).unwrap();
        let f2 = AxisFunction::new(a2, pseudo(6, 16)).unwrap();
        let b1 = AxisFunction::from_fn(a1, |i| c(1.0 + 0.1 * i as f64)).unwrap();
        let b2 = AxisFunction::from_fn(a2, |i| C64::new(1.0, 0.05 * i as f64)).unwrap();
        let f = f1.tensor(&f2);
        let b = b1.tensor(&b2);
        let rect = DyadicRect {
            first: DyadicCube::new(1, 2, [1, 0]).unwrap(),
            second: DyadicCube::new(2, 1, [0, 1]).unwrap(),
        };
        let Average::Scalar(both) = f.b_average(&rect, &b, AverageAxes::Both).unwrap() else {
            panic!()
        };
        let expected = f1.b_average(&rect.first, &b1).unwrap() * f2.b_average(&rect.second, &b2).unwrap();
        assert!((both - expected).norm() < 1e-12);
        let Average::Section(sec) = f.b_average(&rect, &b, AverageAxes::First).unwrap() else { panic!() };
        let a = f1.b_average(&rect.first, &b1).unwrap();
        for (i, v) in sec.values.iter().enumerate() {
            assert!((v - a * f2.values[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn refinement_preserves_integrals_and_norms() {
        let axes = [axis(2, 1), axis(1, 2)];
        let f = GridFunction::new(axes, pseudo(8, 16)).unwrap();
        let g = f.refine([4, 3]).unwrap();
        assert!((f.integral() - g.integral()).norm() < 1e-14);
        assert!((f.norm_l2() - g.norm_l2()).abs() < 1e-14);
    }
}
