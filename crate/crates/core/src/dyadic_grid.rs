//! Dyadic cubes on the torus `[0,1)^d`, randomly shifted dyadic grids,
//! good and bad cubes, and the four-way relative-position taxonomy.
//!
//! Positions are tracked as integers in units of `2^-depth`, so containment,
//! joins and distances are exact. Only the goodness threshold
//! `ℓ(I)^γ ℓ(J)^(1-γ)` involves floating point.
//!
//! A grid of depth `N` carries shift bits `ω_1, ..., ω_N ∈ {0,1}^d`. The cube of
//! scale `j` (side `2^-j`) with index `k` occupies
//! `2^-j k + Σ_{i>j} 2^-i ω_i + [0, 2^-j)^d`, reduced mod 1. The all-zero
//! pattern is the standard grid.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;
use crate::{Error, Result};

/// Deepest grid we accept. Keeps every unit count inside a `u64`.
pub const MAX_DEPTH: u32 = 40;

/// Exhaustive goodness enumeration visits `2^(d·depth)` shift patterns.
pub const EXHAUSTIVE_LIMIT: u32 = 20;

/// A dyadic cube identified by its scale and per-coordinate index.
///
/// For `dim == 1` only `index[0]` is meaningful and `index[1]` must be 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DyadicCube {
    pub dim: u8,
    pub scale: u32,
    pub index: [u64; 2],
}

impl DyadicCube {
    pub fn new(dim: u8, scale: u32, index: [u64; 2]) -> Result<Self> {
        check_dim(dim)?;
        if scale > MAX_DEPTH {
            return Err(Error::InvalidParameter(alloc::format!(
                "cube scale {scale} exceeds {MAX_DEPTH}"
            )));
        }
        let side = 1u64 << scale;
        if index[0] >= side || (dim == 2 && index[1] >= side) || (dim == 1 && index[1] != 0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "index {index:?} out of range for a {dim}-dimensional cube of scale {scale}"
            )));
        }
        Ok(Self { dim, scale, index })
    }

    /// Builds a cube from the flattened index used by grid functions
    /// (`k_a · 2^scale + k_b` in two dimensions).
    pub fn from_flat(dim: u8, scale: u32, flat: usize) -> Result<Self> {
        let flat = flat as u64;
        let index = if dim == 2 {
            [flat >> scale, flat & ((1u64 << scale) - 1)]
        } else {
            [flat, 0]
        };
        Self::new(dim, scale, index)
    }

    pub fn flat(&self) -> usize {
        if self.dim == 2 {
            ((self.index[0] << self.scale) | self.index[1]) as usize
        } else {
            self.index[0] as usize
        }
    }

    pub fn side_length(&self) -> f64 {
        exp2i(-(self.scale as i32))
    }

    pub fn volume(&self) -> f64 {
        exp2i(-((self.scale * self.dim as u32) as i32))
    }
}

/// A dyadic grid on the torus, possibly translated by shift bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftedGrid {
    dim: u8,
    depth: u32,
    /// `bits[i - 1]` is `ω_i`.
    bits: Vec<[bool; 2]>,
}

impl ShiftedGrid {
    /// The unshifted grid, used by every martingale operator in the crate.
    pub fn standard(depth: u32, dim: u8) -> Result<Self> {
        check_depth(depth)?;
        check_dim(dim)?;
        Ok(Self { dim, depth, bits: alloc::vec![[false; 2]; depth as usize] })
    }

    pub fn from_bits(dim: u8, bits: Vec<[bool; 2]>) -> Result<Self> {
        check_dim(dim)?;
        check_depth(bits.len() as u32)?;
        if dim == 1 && bits.iter().any(|b| b[1]) {
            return Err(Error::InvalidParameter("second shift coordinate set on a 1-d grid".into()));
        }
        Ok(Self { dim, depth: bits.len() as u32, bits })
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn bits(&self) -> &[[bool; 2]] {
        &self.bits
    }

    pub fn is_standard(&self) -> bool {
        self.bits.iter().all(|b| !b[0] && !b[1])
    }

    fn units(&self) -> u64 {
        1u64 << self.depth
    }

    /// Side length of a scale-`j` cube in units of `2^-depth`.
    pub fn len_units(&self, scale: u32) -> u64 {
        1u64 << (self.depth - scale)
    }

    /// `Σ_{i>j} ω_i 2^-i` for one coordinate, in units of `2^-depth`.
    pub fn offset_units(&self, scale: u32, coord: usize) -> u64 {
        offset_units(&self.bits, self.depth, scale, coord)
    }

    /// Left endpoint of the cube along one coordinate, in `[0, 2^depth)`.
    pub fn start_units(&self, cube: &DyadicCube, coord: usize) -> u64 {
        (cube.index[coord] * self.len_units(cube.scale) + self.offset_units(cube.scale, coord))
            % self.units()
    }

    /// Real half-open intervals `[lo, lo + ℓ)` per coordinate, with `lo ∈ [0,1)`.
    /// On the torus the interval may extend past 1, meaning it wraps.
    pub fn interval(&self, cube: &DyadicCube) -> Result<Vec<(f64, f64)>> {
        self.check(cube)?;
        let scale = exp2i(-(self.depth as i32));
        Ok((0..self.dim as usize)
            .map(|c| {
                let lo = self.start_units(cube, c) as f64 * scale;
                (lo, lo + cube.side_length())
            })
            .collect())
    }

    pub fn check(&self, cube: &DyadicCube) -> Result<()> {
        if cube.dim != self.dim {
            return Err(Error::GridMismatch(alloc::format!(
                "cube has dimension {} but the grid has dimension {}",
                cube.dim, self.dim
            )));
        }
        if cube.scale > self.depth {
            return Err(Error::GridMismatch(alloc::format!(
                "cube scale {} is finer than the grid depth {}",
                cube.scale, self.depth
            )));
        }
        Ok(())
    }

    /// All cubes of one scale. They partition the torus.
    pub fn cubes_at(&self, scale: u32) -> impl Iterator<Item = DyadicCube> + '_ {
        let dim = self.dim;
        let count = 1usize << (scale * dim as u32);
        (0..count).map(move |flat| DyadicCube::from_flat(dim, scale, flat).expect("in range"))
    }

    /// The unique cube of the next coarser scale containing `cube`.
    pub fn parent(&self, cube: &DyadicCube) -> Result<Option<DyadicCube>> {
        self.check(cube)?;
        if cube.scale == 0 {
            return Ok(None);
        }
        Ok(Some(parent_with_bits(&self.bits, cube)))
    }

    /// The ancestor of `cube` at a coarser (or equal) scale.
    pub fn ancestor(&self, cube: &DyadicCube, scale: u32) -> Result<DyadicCube> {
        self.check(cube)?;
        if scale > cube.scale {
            return Err(Error::InvalidParameter(alloc::format!(
                "ancestor scale {scale} is finer than the cube scale {}",
                cube.scale
            )));
        }
        Ok(ancestor_with_bits(&self.bits, cube, scale))
    }

    /// Whether `big ⊇ small` as subsets of the torus.
    pub fn contains(&self, big: &DyadicCube, small: &DyadicCube) -> Result<bool> {
        self.check(big)?;
        self.check(small)?;
        Ok(big.scale <= small.scale && ancestor_with_bits(&self.bits, small, big.scale) == *big)
    }

    /// Torus `L^∞` distance between the closures of two cubes.
    pub fn distance(&self, a: &DyadicCube, b: &DyadicCube) -> Result<f64> {
        self.check(a)?;
        self.check(b)?;
        let m = self.units();
        let mut gap = 0u64;
        for c in 0..self.dim as usize {
            let (sa, la) = (self.start_units(a, c), self.len_units(a.scale));
            let (sb, lb) = (self.start_units(b, c), self.len_units(b.scale));
            gap = gap.max(circle_gap(sa, la, sb, lb, m));
        }
        Ok(gap as f64 * exp2i(-(self.depth as i32)))
    }

    /// `L^∞` distance from `inner` to the boundary of `outer`, for `inner ⊆ outer`.
    ///
    /// The scale-0 cube of a shifted grid is the whole torus cut open at its
    /// offset, so its boundary is that seam.
    pub fn boundary_distance(&self, inner: &DyadicCube, outer: &DyadicCube) -> Result<f64> {
        if !self.contains(outer, inner)? {
            return Err(Error::InvalidParameter("boundary distance needs inner ⊆ outer".into()));
        }
        let units = boundary_gap_units(&self.bits, self.depth, inner, outer);
        Ok(units as f64 * exp2i(-(self.depth as i32)))
    }
}

/// Draws shift bits uniformly from `{0,1}^(d·depth)`.
pub fn sample_shift(seed: u64, depth: u32, d: u8) -> Result<ShiftedGrid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_shift_with(&mut rng, depth, d)
}

fn sample_shift_with<R: Rng>(rng: &mut R, depth: u32, d: u8) -> Result<ShiftedGrid> {
    if depth < 1 {
        return Err(Error::InvalidParameter("shifted grid depth must be at least 1".into()));
    }
    check_dim(d)?;
    check_depth(depth)?;
    let bits = (0..depth).map(|_| [rng.gen::<bool>(), d == 2 && rng.gen::<bool>()]).collect();
    ShiftedGrid::from_bits(d, bits)
}

/// Minimal common ancestor of two cubes of the same grid.
pub fn join(a: &DyadicCube, b: &DyadicCube, grid: &ShiftedGrid) -> Result<DyadicCube> {
    grid.check(a)?;
    grid.check(b)?;
    let s = a.scale.min(b.scale);
    let mut x = ancestor_with_bits(&grid.bits, a, s);
    let mut y = ancestor_with_bits(&grid.bits, b, s);
    while x != y {
        x = parent_with_bits(&grid.bits, &x);
        y = parent_with_bits(&grid.bits, &y);
    }
    Ok(x)
}

/// Parameters of the good/bad classification. `γ = δ / (2n + 2δ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoodnessParams {
    pub r: u32,
    pub delta: f64,
    pub n: u8,
}

impl GoodnessParams {
    pub fn new(r: u32, delta: f64, n: u8) -> Result<Self> {
        if r < 1 {
            return Err(Error::InvalidParameter("goodness parameter r must be at least 1".into()));
        }
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParameter(alloc::format!(
                "smoothness exponent δ = {delta} must lie in (0, 1]"
            )));
        }
        check_dim(n)?;
        Ok(Self { r, delta, n })
    }

    pub fn gamma(&self) -> f64 {
        self.delta / (2.0 * self.n as f64 + 2.0 * self.delta)
    }
}

/// A cube `I` is bad when some grid cube `Ĩ` with `ℓ(Ĩ) ≥ 2^r ℓ(I)` has
/// `d(I, ∂Ĩ) ≤ 2 ℓ(I)^γ ℓ(Ĩ)^(1-γ)`. Only the ancestors of `I` can be that
/// close, so the scan walks the ancestors of scale `0 ..= scale(I) - r`.
pub fn is_good(cube: &DyadicCube, grid: &ShiftedGrid, params: &GoodnessParams) -> Result<bool> {
    grid.check(cube)?;
    check_params_dim(params, grid.dim)?;
    Ok(is_good_bits(&grid.bits, grid.depth, cube, params))
}

fn is_good_bits(bits: &[[bool; 2]], depth: u32, cube: &DyadicCube, params: &GoodnessParams) -> bool {
    if cube.scale < params.r {
        return true;
    }
    let gamma = params.gamma();
    let unit = exp2i(-(depth as i32));
    let l_small = cube.side_length();
    let mut outer = *cube;
    for s in (0..=cube.scale - params.r).rev() {
        outer = ancestor_with_bits(bits, &outer, s);
        let dist = boundary_gap_units(bits, depth, cube, &outer) as f64 * unit;
        let threshold =
            2.0 * math::powf(l_small, gamma) * math::powf(outer.side_length(), 1.0 - gamma);
        if dist <= threshold {
            return false;
        }
    }
    true
}

/// How the goodness probability is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoodnessMode {
    /// Visit every shift pattern. Exact, limited to `d · depth ≤ 20`.
    Exhaustive,
    /// Sample shift patterns from a seeded stream.
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoodnessEstimate {
    pub value: f64,
    /// Zero in exhaustive mode.
    pub std_error: f64,
    pub good: u64,
    pub total: u64,
    pub exact: bool,
}

/// Probability that a fixed cube of scale `scale_of_i` is good in a uniformly
/// random grid of the given depth.
///
/// On the torus the answer depends on `scale_of_i`, because only ancestors down
/// to scale 0 exist. In exhaustive mode the count is repeated for several base
/// cubes and an error is returned if they disagree, since the probability must
/// not depend on which cube is chosen.
pub fn goodness_probability(
    params: &GoodnessParams,
    depth: u32,
    d: u8,
    scale_of_i: u32,
    mode: GoodnessMode,
) -> Result<GoodnessEstimate> {
    check_dim(d)?;
    check_depth(depth)?;
    check_params_dim(params, d)?;
    if scale_of_i > depth {
        return Err(Error::InvalidParameter(alloc::format!(
            "cube scale {scale_of_i} exceeds grid depth {depth}"
        )));
    }
    match mode {
        GoodnessMode::Exhaustive => {
            if d as u32 * depth > EXHAUSTIVE_LIMIT {
                return Err(Error::TooLarge(alloc::format!(
                    "exhaustive enumeration of 2^{} shift patterns (limit 2^{EXHAUSTIVE_LIMIT})",
                    d as u32 * depth
                )));
            }
            let per_coord = 1u64 << scale_of_i;
            let bases: Vec<DyadicCube> = base_cube_sample(d, scale_of_i, per_coord);
            let total = 1u64 << (d as u32 * depth);
            let mut counts = Vec::with_capacity(bases.len());
            let mut bits = alloc::vec![[false; 2]; depth as usize];
            for base in &bases {
                let mut good = 0u64;
                for pattern in 0..total {
                    fill_bits(&mut bits, pattern, d);
                    if is_good_bits(&bits, depth, base, params) {
                        good += 1;
                    }
                }
                counts.push(good);
            }
            if counts.iter().any(|&c| c != counts[0]) {
                return Err(Error::NumericFailure(alloc::format!(
                    "goodness count depends on the base cube: {counts:?}"
                )));
            }
            Ok(GoodnessEstimate {
                value: counts[0] as f64 / total as f64,
                std_error: 0.0,
                good: counts[0],
                total,
                exact: true,
            })
        }
        GoodnessMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidParameter("Monte Carlo needs at least one sample".into()));
            }
            if depth < 1 {
                return Err(Error::InvalidParameter("shifted grid depth must be at least 1".into()));
            }
            let base = DyadicCube::new(d, scale_of_i, [0, 0])?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut good = 0u64;
            for _ in 0..samples {
                let grid = sample_shift_with(&mut rng, depth, d)?;
                if is_good_bits(&grid.bits, depth, &base, params) {
                    good += 1;
                }
            }
            let p = good as f64 / samples as f64;
            Ok(GoodnessEstimate {
                value: p,
                std_error: math::sqrt(p * (1.0 - p) / samples as f64),
                good,
                total: samples,
                exact: false,
            })
        }
    }
}

/// Relative position of two cubes, from the point of view of the smaller one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PositionClass {
    /// `d(I₁, I₂) > ℓ(I₁)^γ ℓ(I₂)^(1-γ)`.
    Separated,
    /// `I₁ ⊊ I₂`.
    Inside,
    Equal,
    /// Everything else, including a distance exactly at the threshold.
    Nearby,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativePosition {
    pub class: PositionClass,
    pub distance: f64,
    pub threshold: f64,
}

/// Classifies `(I₁, I₂)` with `ℓ(I₁) ≤ ℓ(I₂)`.
pub fn relative_position(
    small: &DyadicCube,
    large: &DyadicCube,
    grid: &ShiftedGrid,
    params: &GoodnessParams,
) -> Result<RelativePosition> {
    grid.check(small)?;
    grid.check(large)?;
    check_params_dim(params, grid.dim)?;
    if small.scale < large.scale {
        return Err(Error::InvalidParameter(
            "relative_position expects the first cube to be the smaller one".into(),
        ));
    }
    let gamma = params.gamma();
    let threshold = math::powf(small.side_length(), gamma)
        * math::powf(large.side_length(), 1.0 - gamma);
    let distance = grid.distance(small, large)?;
    let class = if small == large {
        PositionClass::Equal
    } else if grid.contains(large, small)? {
        PositionClass::Inside
    } else if distance > threshold {
        PositionClass::Separated
    } else {
        PositionClass::Nearby
    };
    Ok(RelativePosition { class, distance, threshold })
}

fn check_dim(d: u8) -> Result<()> {
    if d == 1 || d == 2 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(alloc::format!("dimension {d} is not 1 or 2")))
    }
}

fn check_depth(depth: u32) -> Result<()> {
    if depth > MAX_DEPTH {
        Err(Error::TooLarge(alloc::format!("depth {depth} exceeds {MAX_DEPTH}")))
    } else {
        Ok(())
    }
}

fn check_params_dim(params: &GoodnessParams, d: u8) -> Result<()> {
    if params.n != d {
        return Err(Error::InvalidParameter(alloc::format!(
            "goodness parameters are for dimension {} but the grid has dimension {d}",
            params.n
        )));
    }
    Ok(())
}

pub(crate) fn exp2i(e: i32) -> f64 {
    libm::ldexp(1.0, e)
}

fn offset_units(bits: &[[bool; 2]], depth: u32, scale: u32, coord: usize) -> u64 {
    ((scale + 1)..=depth)
        .filter(|&i| bits[(i - 1) as usize][coord])
        .map(|i| 1u64 << (depth - i))
        .sum()
}

fn parent_with_bits(bits: &[[bool; 2]], cube: &DyadicCube) -> DyadicCube {
    // A child of index k sits in the parent of index ((k - ω_j) mod 2^j) / 2.
    let j = cube.scale;
    let mask = (1u64 << j) - 1;
    let mut index = [0u64; 2];
    for c in 0..cube.dim as usize {
        let w = bits[(j - 1) as usize][c] as u64;
        index[c] = ((cube.index[c] + (1u64 << j) - w) & mask) >> 1;
    }
    DyadicCube { dim: cube.dim, scale: j - 1, index }
}

fn ancestor_with_bits(bits: &[[bool; 2]], cube: &DyadicCube, scale: u32) -> DyadicCube {
    let mut x = *cube;
    while x.scale > scale {
        x = parent_with_bits(bits, &x);
    }
    x
}

fn start_units(bits: &[[bool; 2]], depth: u32, cube: &DyadicCube, coord: usize) -> u64 {
    (cube.index[coord] * (1u64 << (depth - cube.scale)) + offset_units(bits, depth, cube.scale, coord))
        % (1u64 << depth)
}

fn boundary_gap_units(bits: &[[bool; 2]], depth: u32, inner: &DyadicCube, outer: &DyadicCube) -> u64 {
    let m = 1u64 << depth;
    let (li, lo) = (1u64 << (depth - inner.scale), 1u64 << (depth - outer.scale));
    (0..inner.dim as usize)
        .map(|c| {
            let rel = (start_units(bits, depth, inner, c) + m - start_units(bits, depth, outer, c)) % m;
            rel.min(lo - li - rel)
        })
        .min()
        .unwrap_or(0)
}

/// Gap between the closed arcs `[a, a+la]` and `[b, b+lb]` on a circle of
/// circumference `m`. Zero when they touch or overlap.
fn circle_gap(a: u64, la: u64, b: u64, lb: u64, m: u64) -> u64 {
    let ab = (b + m - a) % m;
    if ab <= la {
        return 0;
    }
    let ba = (a + m - b) % m;
    if ba <= lb {
        return 0;
    }
    (ab - la).min(ba - lb)
}

fn fill_bits(bits: &mut [[bool; 2]], pattern: u64, d: u8) {
    for (i, b) in bits.iter_mut().enumerate() {
        let base = i as u32 * d as u32;
        b[0] = (pattern >> base) & 1 == 1;
        b[1] = d == 2 && (pattern >> (base + 1)) & 1 == 1;
    }
}

fn base_cube_sample(d: u8, scale: u32, per_coord: u64) -> Vec<DyadicCube> {
    let picks: Vec<u64> = [0, per_coord / 3, per_coord / 2, per_coord - 1]
        .into_iter()
        .fold(Vec::new(), |mut v, k| {
            if !v.contains(&k) {
                v.push(k);
            }
            v
        });
    picks
        .iter()
        .map(|&k| DyadicCube { dim: d, scale, index: [k, if d == 2 { (k * 5 + 1) % per_coord } else { 0 }] })
        .collect()
}
