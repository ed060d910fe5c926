//! Accretive weights: bounded functions whose dyadic averages stay away from 0.
//!
//! The certified constant is `c₀ = min_I |⟨b⟩_I|`, the minimum over every
//! dyadic cube of every scale. Taking the modulus rather than the real part
//! is the weaker of the two usual conventions, and it is the one the
//! adapted expectations need: they divide by `⟨b⟩_I`.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid_function::{Axis, AxisFunction, GridFunction};
use crate::math;
use crate::{Error, Result, C64};

/// Rounds of shrinking the noise level before giving up.
pub const MAX_ROUNDS: u32 = 64;

/// Per-round shrink factor for the noise level.
const SHRINK: f64 = 0.8;

/// Dyadic averages of `b` for every scale, coarsest first: `out[p][k]` is the
/// average over cube `k` of scale `p`.
pub fn dyadic_averages(b: &AxisFunction) -> Vec<Vec<C64>> {
    let axis = b.axis;
    let mut levels = Vec::with_capacity(axis.depth as usize + 1);
    levels.push(b.values.clone());
    for p in (0..axis.depth).rev() {
        let finer: &Vec<C64> = levels.last().expect("non-empty");
        let coarse: Vec<C64> = (0..axis.cubes_at(p))
            .map(|k| axis.children(p, k).map(|ch| finer[ch]).sum::<C64>() / (1u32 << axis.dim) as f64)
            .collect();
        levels.push(coarse);
    }
    levels.reverse();
    levels
}

/// `min_I |⟨b⟩_I|` over all dyadic cubes, finest cells included.
pub fn accretivity_constant(b: &AxisFunction) -> f64 {
    dyadic_averages(b)
        .iter()
        .flat_map(|level| level.iter().map(|z| math::cabs(*z)))
        .fold(f64::INFINITY, f64::min)
}

/// A weight with its certificate and the parameters that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct AccretiveWeight {
    pub function: AxisFunction,
    /// Requested lower bound on dyadic averages.
    pub c0: f64,
    /// Requested upper bound on `|b|`.
    pub bound: f64,
    pub seed: u64,
    /// Measured `min_I |⟨b⟩_I|`.
    pub certified_c0: f64,
    /// Measured `max |b|`.
    pub certified_bound: f64,
    /// Noise level of the accepted draw.
    pub epsilon: f64,
}

/// Draws `b = 1 + ε·z` with `z` uniform in the unit disk, cell by cell,
/// shrinking `ε` until the draw certifies `min |⟨b⟩_I| ≥ c₀` and `|b| ≤ B`.
///
/// `c₀ = 1` forces `ε = 0`, i.e. `b ≡ 1`.
pub fn random_accretive(seed: u64, depth: u32, d: u8, c0: f64, bound: f64) -> Result<AccretiveWeight> {
    if !(c0 > 0.0 && c0 <= 1.0) || !(bound >= 1.0) || !bound.is_finite() {
        return Err(Error::InvalidParameter(alloc::format!(
            "accretive weights need 0 < c0 ≤ 1 ≤ B, got c0 = {c0}, B = {bound}"
        )));
    }
    let axis = Axis::new(depth, d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps = (bound - 1.0).min(1.5 * (1.0 - c0));
    for _ in 0..MAX_ROUNDS {
        let values: Vec<C64> = (0..axis.cells()).map(|_| C64::new(1.0, 0.0) + unit_disk(&mut rng) * eps).collect();
        let function = AxisFunction::new(axis, values)?;
        let certified_c0 = accretivity_constant(&function);
        let certified_bound = function.norm_linf();
        if certified_c0 >= c0 && certified_bound <= bound {
            return Ok(AccretiveWeight { function, c0, bound, seed, certified_c0, certified_bound, epsilon: eps });
        }
        eps *= SHRINK;
    }
    Err(Error::GenerationFailed { rounds: MAX_ROUNDS })
}

fn unit_disk<R: Rng>(rng: &mut R) -> C64 {
    loop {
        let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if z.norm_sqr() < 1.0 {
            return z;
        }
    }
}

/// Measured constants of one weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    pub c0: f64,
    pub bound: f64,
}

impl Certificate {
    pub fn of(b: &AxisFunction) -> Self {
        Self { c0: accretivity_constant(b), bound: b.norm_linf() }
    }
}

/// Weights `(b₁, b₂)` for the two parameters, with certificates.
#[derive(Clone, Debug, PartialEq)]
pub struct AccretivePair {
    pub b1: AxisFunction,
    pub b2: AxisFunction,
    pub cert: [Certificate; 2],
}

impl AccretivePair {
    /// Rejects weights that are not accretive (some dyadic average vanishes).
    pub fn new(b1: AxisFunction, b2: AxisFunction) -> Result<Self> {
        let cert = [Certificate::of(&b1), Certificate::of(&b2)];
        for (i, c) in cert.iter().enumerate() {
            if !(c.c0 > 0.0) {
                return Err(Error::InvalidParameter(alloc::format!(
                    "weight for axis {} has a vanishing dyadic average",
                    i + 1
                )));
            }
        }
        Ok(Self { b1, b2, cert })
    }

    /// `b ≡ 1` on both axes: the classical (Haar) martingale structure.
    pub fn unit(axes: [Axis; 2]) -> Self {
        let one = C64::new(1.0, 0.0);
        let b1 = AxisFunction::constant(axes[0], one);
        let b2 = AxisFunction::constant(axes[1], one);
        let c = Certificate { c0: 1.0, bound: 1.0 };
        Self { b1, b2, cert: [c, c] }
    }

    /// Independent random weights on both axes, seeds `seed` and `seed + 1`.
    pub fn random(axes: [Axis; 2], seed: u64, c0: f64, bound: f64) -> Result<Self> {
        let w1 = random_accretive(seed, axes[0].depth, axes[0].dim, c0, bound)?;
        let w2 = random_accretive(seed.wrapping_add(1), axes[1].depth, axes[1].dim, c0, bound)?;
        Self::new(w1.function, w2.function)
    }

    pub fn axes(&self) -> [Axis; 2] {
        [self.b1.axis, self.b2.axis]
    }

    /// `b₁ ⊗ b₂` on the product mesh.
    pub fn tensor(&self) -> GridFunction {
        self.b1.tensor(&self.b2)
    }

    /// Certificate of the product weight: `(c₁c₂, B₁B₂)`.
    pub fn tensor_certificate(&self) -> Certificate {
        Certificate { c0: self.cert[0].c0 * self.cert[1].c0, bound: self.cert[0].bound * self.cert[1].bound }
    }

    pub fn check_mesh(&self, axes: [Axis; 2]) -> Result<()> {
        if self.axes() == axes {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(alloc::format!(
                "weights live on {:?} but the function on {axes:?}",
                self.axes()
            )))
        }
    }

    /// Same weights on a finer mesh (piecewise-constant refinement), which keeps
    /// every certificate.
    pub fn refine(&self, depths: [u32; 2]) -> Result<Self> {
        Ok(Self { b1: self.b1.refine(depths[0])?, b2: self.b2.refine(depths[1])?, cert: self.cert })
    }
}
