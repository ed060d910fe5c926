//! Stopping times, atoms, and the constructive atomic decomposition of
//! functions in the adapted Hardy space.
//!
//! Scale pairs `t = (p, q)` run over `[0, N₁] × [0, N₂]`. A stopped function
//! keeps the double differences whose shifted index lies in the stopping time:
//! `f^τ(x) = Σ_{t ∈ τ(x), t ≥ (1,1)} Δ_{t−1} f(x)`. For a function with no
//! boundary terms and `τ` full, this is `f` itself.
//!
//! Two rules build `τ` from a set `F`, both using plain dyadic averages
//! `E_t χ_F`:
//!
//! * [`StoppingRule::Literal`]: `t ∈ τ(x)` iff `E_{t'} χ_F(x) ≤ 1/2` for
//!   every `t' ≤ t`.
//! * [`StoppingRule::Predictable`]: `t ∈ τ(x)` iff `E_{t'} χ_F(x) ≤ c` for
//!   every `t' ≤ t − (1,1)`, with `c = 2^{-(d₁+d₂)-1}`.
//!
//! The literal rule looks at scale `t` to decide whether the difference
//! `Δ_{t−1}` is kept, which is one scale too late: the atom cancellation
//! `E_t a = 0 wherever t+1 ∈ τ` then fails (see the tests for a
//! counterexample). The predictable rule decides from scales up to `t − 1`
//! only, and the smaller threshold means a stopped rectangle never has a
//! child inside `F`, so the bottom level of the decomposition is exactly
//! zero. [`atomic_decompose`] uses the predictable rule.

use alloc::string::String;
use alloc::vec::Vec;

use crate::accretive::AccretivePair;
use crate::grid_function::{Axis, CellSet, GridFunction, RealField};
use crate::martingale::{self, decompose, mean_zero_projection, MartingaleCoefficients, Var};
use crate::math;
use crate::{Error, Result, C64};

/// How a stopping time is derived from a set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StoppingRule {
    Literal,
    Predictable,
}

impl StoppingRule {
    /// The average threshold for product axes of dimensions `d₁, d₂`.
    pub fn threshold(self, dims: [u8; 2]) -> f64 {
        match self {
            StoppingRule::Literal => 0.5,
            StoppingRule::Predictable => crate::dyadic_grid::exp2i(-(dims[0] as i32 + dims[1] as i32) - 1),
        }
    }
}

/// A stopping time on the finite scale set, stored as one cell bitmask per
/// scale pair. Each mask is a union of rectangles of the matching generation;
/// [`StoppingTime::is_measurable`] checks this.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StoppingTime {
    pub axes: [Axis; 2],
    pub rule: StoppingRule,
    /// `members[p · (N₂+1) + q][cell]`.
    members: Vec<Vec<bool>>,
}

impl StoppingTime {
    /// `τ(x)` equal to every scale pair.
    pub fn full(axes: [Axis; 2], rule: StoppingRule) -> Self {
        let pairs = (axes[0].depth as usize + 1) * (axes[1].depth as usize + 1);
        Self { axes, rule, members: alloc::vec![alloc::vec![true; axes[0].cells() * axes[1].cells()]; pairs] }
    }

    fn slot(&self, t: [u32; 2]) -> usize {
        (t[0] * (self.axes[1].depth + 1) + t[1]) as usize
    }

    pub fn contains(&self, t: [u32; 2], cell: usize) -> bool {
        self.members[self.slot(t)][cell]
    }

    /// `{x : t ∈ τ(x)}`.
    pub fn level_set(&self, t: [u32; 2]) -> CellSet {
        CellSet { axes: self.axes, cells: self.members[self.slot(t)].clone() }
    }

    /// `{x : τ(x) is not every scale pair}`.
    pub fn stopped_set(&self) -> CellSet {
        let n = self.axes[0].cells() * self.axes[1].cells();
        CellSet { axes: self.axes, cells: (0..n).map(|c| self.members.iter().any(|m| !m[c])).collect() }
    }

    /// Setwise inclusion for every scale pair.
    pub fn is_subset_of(&self, other: &StoppingTime) -> bool {
        self.members.iter().zip(&other.members).all(|(a, b)| a.iter().zip(b).all(|(&x, &y)| !x || y))
    }

    /// Every level set is a union of rectangles of its own generation.
    pub fn is_measurable(&self) -> bool {
        let [a1, a2] = self.axes;
        (0..=a1.depth).all(|p| {
            (0..=a2.depth).all(|q| {
                let m = &self.members[self.slot([p, q])];
                let mut rep = alloc::vec![None; a1.cubes_at(p) * a2.cubes_at(q)];
                (0..a1.cells()).all(|c1| {
                    (0..a2.cells()).all(|c2| {
                        let k = a1.cube_of(c1, p) * a2.cubes_at(q) + a2.cube_of(c2, q);
                        let v = m[c1 * a2.cells() + c2];
                        *rep[k].get_or_insert(v) == v
                    })
                })
            })
        })
    }

    /// Downward closed in each cell: `t ∈ τ(x)` and `t' ≤ t` give `t' ∈ τ(x)`.
    pub fn is_downward_closed(&self) -> bool {
        let [a1, a2] = self.axes;
        (0..=a1.depth).all(|p| {
            (0..=a2.depth).all(|q| {
                let m = &self.members[self.slot([p, q])];
                let below = |t: [u32; 2]| &self.members[self.slot(t)];
                (0..m.len()).all(|c| {
                    !m[c] || ((p == 0 || below([p - 1, q])[c]) && (q == 0 || below([p, q - 1])[c]))
                })
            })
        })
    }
}

/// Plain dyadic averages `E_t χ_F` for every scale pair, same slot order as
/// [`StoppingTime`].
fn indicator_averages(set: &CellSet) -> Result<Vec<Vec<f64>>> {
    let unit = AccretivePair::unit(set.axes);
    let chi = set.indicator();
    let mut out = Vec::new();
    for p in 0..=set.axes[0].depth {
        let g = martingale::expect_axis(&chi, Var::First, p, &unit.b1)?;
        for q in 0..=set.axes[1].depth {
            let h = martingale::expect_axis(&g, Var::Second, q, &unit.b2)?;
            out.push(h.values.iter().map(|z| z.re).collect());
        }
    }
    Ok(out)
}

/// Builds `τ` from `F` under `rule`.
pub fn build_stopping_time(set: &CellSet, rule: StoppingRule) -> Result<StoppingTime> {
    let axes = set.axes;
    let (n1, n2) = (axes[0].depth as usize, axes[1].depth as usize);
    let cells = axes[0].cells() * axes[1].cells();
    let threshold = rule.threshold([axes[0].dim, axes[1].dim]);
    let averages = indicator_averages(set)?;
    let slot = |p: usize, q: usize| p * (n2 + 1) + q;
    // closure[t][x]: E_{t'} χ_F(x) ≤ threshold for every t' ≤ t.
    let mut closure = alloc::vec![alloc::vec![false; cells]; (n1 + 1) * (n2 + 1)];
    for p in 0..=n1 {
        for q in 0..=n2 {
            let row: Vec<bool> = (0..cells)
                .map(|c| {
                    averages[slot(p, q)][c] <= threshold
                        && (p == 0 || closure[slot(p - 1, q)][c])
                        && (q == 0 || closure[slot(p, q - 1)][c])
                })
                .collect();
            closure[slot(p, q)] = row;
        }
    }
    let members = match rule {
        StoppingRule::Literal => closure,
        StoppingRule::Predictable => {
            let mut m = alloc::vec![alloc::vec![true; cells]; (n1 + 1) * (n2 + 1)];
            for p in 1..=n1 {
                for q in 1..=n2 {
                    m[slot(p, q)] = closure[slot(p - 1, q - 1)].clone();
                }
            }
            m
        }
    };
    Ok(StoppingTime { axes, rule, members })
}

/// `f^τ = Σ_{t ∈ τ, t ≥ (1,1)} Δ_{t−1} f`, from precomputed coefficients.
pub fn stopped_function(coeffs: &MartingaleCoefficients, tau: &StoppingTime) -> Result<GridFunction> {
    if coeffs.axes != tau.axes {
        return Err(Error::ShapeMismatch("coefficients and stopping time live on different meshes".into()));
    }
    let [d1, d2] = coeffs.depths();
    let mut out = GridFunction::zeros(coeffs.axes);
    for p in 1..=d1 {
        for q in 1..=d2 {
            let d = coeffs.get(p - 1, q - 1);
            let mask = &tau.members[tau.slot([p, q])];
            for ((o, v), &keep) in out.values.iter_mut().zip(&d.values).zip(mask) {
                if keep {
                    *o += *v;
                }
            }
        }
    }
    Ok(out)
}

/// A candidate atom with the stopping time that is supposed to certify it.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub function: GridFunction,
    pub tau: StoppingTime,
}

/// Outcome of [`verify_atom`].
#[derive(Clone, Debug, PartialEq)]
pub struct AtomReport {
    /// `|F|` for `F = {x : τ(x) ≠ all}`.
    pub support_measure: f64,
    /// `0 < |F| < 1`; on a finite torus this replaces the finiteness of `|F|`.
    pub nontrivial: bool,
    /// Largest `|E_t a(x)|` over cells with `t + 1 ∈ τ(x)`.
    pub cancellation_residual: f64,
    pub cancellation_ok: bool,
    /// `‖a*_b‖₂ |F|^{1/2}`.
    pub maximal_constant: f64,
    pub maximal_l1: f64,
    pub square_l1: f64,
    /// Largest value of `a*_b` or `S_b a` outside `F`.
    pub off_support: f64,
    pub support_ok: bool,
    pub failures: Vec<String>,
}

impl AtomReport {
    pub fn passes(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks the cancellation, size and support properties of an atom.
///
/// Cancellation is checked for `t ∈ [−1, N₁−1] × [−1, N₂−1]` with `E_{−1}`
/// read as `E_0`; the tolerance is `1e-10 · max(1, ‖a‖∞)`.
pub fn verify_atom(atom: &Atom, pair: &AccretivePair) -> Result<AtomReport> {
    let a = &atom.function;
    pair.check_mesh(a.axes)?;
    if atom.tau.axes != a.axes {
        return Err(Error::ShapeMismatch("atom and stopping time live on different meshes".into()));
    }
    let tol = 1e-10 * a.norm_linf().max(1.0);
    let [d1, d2] = [a.axes[0].depth, a.axes[1].depth];
    let mut residual = 0.0f64;
    for p in 0..=d1 {
        let g = martingale::expect_axis(a, Var::First, p.saturating_sub(1), &pair.b1)?;
        for q in 0..=d2 {
            let h = martingale::expect_axis(&g, Var::Second, q.saturating_sub(1), &pair.b2)?;
            let mask = &atom.tau.members[atom.tau.slot([p, q])];
            for (v, &inside) in h.values.iter().zip(mask) {
                if inside {
                    residual = residual.max(math::cabs(*v));
                }
            }
        }
    }
    let support = atom.tau.stopped_set();
    let measure = support.measure();
    let maximal = martingale::maximal_function(a, pair)?;
    let square = martingale::square_function(a, pair)?;
    let off = |field: &RealField| {
        field.values.iter().zip(&support.cells).filter(|(_, &s)| !s).map(|(v, _)| *v).fold(0.0, f64::max)
    };
    let off_support = off(&maximal).max(off(&square));
    let mut failures = Vec::new();
    let cancellation_ok = residual <= tol;
    if !cancellation_ok {
        failures.push(alloc::format!("cancellation residual {residual:e} exceeds {tol:e}"));
    }
    let support_ok = off_support <= tol;
    if !support_ok {
        failures.push(alloc::format!("maximal or square function is {off_support:e} outside the stopped set"));
    }
    Ok(AtomReport {
        support_measure: measure,
        nontrivial: measure > 0.0 && measure < 1.0,
        cancellation_residual: residual,
        cancellation_ok,
        maximal_constant: maximal.norm_l2() * math::sqrt(measure),
        maximal_l1: maximal.norm_l1(),
        square_l1: square.norm_l1(),
        off_support,
        support_ok,
        failures,
    })
}

/// One level `n` of the decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub n: i32,
    /// `2ⁿ |{x : τ_n(x) ≠ all}|`.
    pub lambda: f64,
    pub atom: Atom,
    /// `F_n = {S_b f > 2ⁿ}`.
    pub level_set: CellSet,
    /// `‖f^{τ_{n+1}} − f^{τ_n}‖₂²`.
    pub energy: f64,
}

/// `f = Σ λ_n aⁿ` for a function without boundary terms.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicDecomposition {
    pub axes: [Axis; 2],
    pub rule: StoppingRule,
    pub levels: Vec<Level>,
    /// Every `n` scanned, including those dropped because `λ_n = 0` or
    /// `τ_{n+1} = τ_n`.
    pub window: [i32; 2],
    pub square_l1: f64,
    /// `|F_n|` for each scanned `n`, lowest first.
    pub level_measures: Vec<(i32, f64)>,
    /// Whether `τ_n ⊆ τ_{n+1}` held for every scanned pair.
    pub monotone: bool,
}

impl AtomicDecomposition {
    pub fn lambda_sum(&self) -> f64 {
        self.levels.iter().map(|l| l.lambda.abs()).sum()
    }

    pub fn reconstruct(&self) -> GridFunction {
        let mut out = GridFunction::zeros(self.axes);
        for l in &self.levels {
            out.add_assign(&l.atom.function.scale(C64::new(l.lambda, 0.0))).expect("same mesh");
        }
        out
    }
}

/// Rejects input whose boundary terms do not vanish.
pub fn check_mean_zero(f: &GridFunction, pair: &AccretivePair) -> Result<()> {
    let residual = mean_zero_projection(f, pair)?.max_abs_diff(f)?;
    if residual > 1e-10 * f.norm_linf().max(1.0) {
        Err(Error::NotMeanZero { residual })
    } else {
        Ok(())
    }
}

/// The decomposition with the predictable stopping rule.
pub fn atomic_decompose(f: &GridFunction, pair: &AccretivePair) -> Result<AtomicDecomposition> {
    atomic_decompose_with(f, pair, StoppingRule::Predictable)
}

/// The level construction `F_n = {S_b f > 2ⁿ}`, `τ_n` from `F_n`, and
/// `aⁿ = (f^{τ_{n+1}} − f^{τ_n}) / λ_n`, under either stopping rule.
pub fn atomic_decompose_with(f: &GridFunction, pair: &AccretivePair, rule: StoppingRule) -> Result<AtomicDecomposition> {
    check_mean_zero(f, pair)?;
    let coeffs = decompose(f, pair)?;
    let square = martingale::square_of(&coeffs);
    let square_l1 = square.norm_l1();
    let mut out = AtomicDecomposition {
        axes: f.axes,
        rule,
        levels: Vec::new(),
        window: [0, 0],
        square_l1,
        level_measures: Vec::new(),
        monotone: true,
    };
    let Some(low) = square.min_positive() else {
        return Ok(out);
    };
    let lo = math::floor(math::log2(low)) as i32 - 1;
    let hi = math::ceil(math::log2(square.max())) as i32;
    out.window = [lo, hi];
    let level_data = |n: i32| -> Result<(CellSet, StoppingTime, GridFunction)> {
        let set = square.superlevel(crate::dyadic_grid::exp2i(n));
        let tau = build_stopping_time(&set, rule)?;
        let stopped = stopped_function(&coeffs, &tau)?;
        Ok((set, tau, stopped))
    };
    let (mut set, mut tau, mut stopped) = level_data(lo)?;
    for n in lo..hi {
        let (next_set, next_tau, next_stopped) = level_data(n + 1)?;
        out.level_measures.push((n, set.measure()));
        out.monotone &= tau.is_subset_of(&next_tau);
        let lambda = crate::dyadic_grid::exp2i(n) * tau.stopped_set().measure();
        if lambda > 0.0 && tau != next_tau {
            let diff = next_stopped.sub(&stopped)?;
            let energy = diff.norm_l2() * diff.norm_l2();
            let function = diff.scale(C64::new(1.0 / lambda, 0.0));
            out.levels.push(Level { n, lambda, atom: Atom { function, tau: tau.clone() }, level_set: set, energy });
        }
        (set, tau, stopped) = (next_set, next_tau, next_stopped);
    }
    out.level_measures.push((hi, set.measure()));
    Ok(out)
}

/// `‖f*_b‖₁` against `‖S_b f‖₁`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct H1Report {
    pub maximal_l1: f64,
    pub square_l1: f64,
    /// `None` when `‖S_b f‖₁ = 0`.
    pub ratio: Option<f64>,
}

pub fn h1_report(f: &GridFunction, pair: &AccretivePair) -> Result<H1Report> {
    check_mean_zero(f, pair)?;
    let maximal_l1 = martingale::maximal_function(f, pair)?.norm_l1();
    let square_l1 = martingale::square_function(f, pair)?.norm_l1();
    let ratio = if square_l1 > 0.0 { Some(maximal_l1 / square_l1) } else { None };
    Ok(H1Report { maximal_l1, square_l1, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_function::{random_grid_function, AxisFunction};

    fn axes(d1: u32, d2: u32) -> [Axis; 2] {
        [Axis::new(d1, 1).unwrap(), Axis::new(d2, 1).unwrap()]
    }

    fn projected(ax: [Axis; 2], seed: u64, pair: &AccretivePair) -> GridFunction {
        mean_zero_projection(&random_grid_function(ax, seed), pair).unwrap()
    }

    #[test]
    fn trivial_sets() {
        let ax = axes(2, 2);
        for rule in [StoppingRule::Literal, StoppingRule::Predictable] {
            let empty = build_stopping_time(&CellSet::empty(ax), rule).unwrap();
            assert_eq!(empty, StoppingTime::full(ax, rule));
            assert_eq!(empty.stopped_set().count(), 0);
        }
        let all = build_stopping_time(&CellSet::full(ax), StoppingRule::Literal).unwrap();
        assert!(all.members.iter().all(|m| m.iter().all(|&x| !x)));
        let all = build_stopping_time(&CellSet::full(ax), StoppingRule::Predictable).unwrap();
        for p in 0..=2 {
            for q in 0..=2 {
                assert_eq!(all.level_set([p, q]).count() == 16, p == 0 || q == 0);
            }
        }
    }

    /// Brute-force oracle: averages straight from rectangle enumeration.
    fn oracle(set: &CellSet, rule: StoppingRule) -> StoppingTime {
        let ax = set.axes;
        let [a1, a2] = ax;
        let avg = |t: [u32; 2], c1: usize, c2: usize| {
            let (k1, k2) = (a1.cube_of(c1, t[0]), a2.cube_of(c2, t[1]));
            let (mut hit, mut total) = (0.0, 0.0);
            for x in 0..a1.cells() {
                for y in 0..a2.cells() {
                    if a1.cube_of(x, t[0]) == k1 && a2.cube_of(y, t[1]) == k2 {
                        total += 1.0;
                        hit += set.cells[x * a2.cells() + y] as u8 as f64;
                    }
                }
            }
            hit / total
        };
        let c = rule.threshold([a1.dim, a2.dim]);
        let mut tau = StoppingTime::full(ax, rule);
        for p in 0..=a1.depth {
            for q in 0..=a2.depth {
                let slot = tau.slot([p, q]);
                for c1 in 0..a1.cells() {
                    for c2 in 0..a2.cells() {
                        let bound = match rule {
                            StoppingRule::Literal => Some([p, q]),
                            StoppingRule::Predictable if p > 0 && q > 0 => Some([p - 1, q - 1]),
                            StoppingRule::Predictable => None,
                        };
                        tau.members[slot][c1 * a2.cells() + c2] = match bound {
                            None => true,
                            Some(b) => (0..=b[0]).all(|s| (0..=b[1]).all(|r| avg([s, r], c1, c2) <= c)),
                        };
                    }
                }
            }
        }
        tau
    }

    #[test]
    fn left_half_matches_oracle() {
        let ax = axes(2, 2);
        let set = CellSet { axes: ax, cells: (0..16).map(|c| c / 4 < 2).collect() };
        for rule in [StoppingRule::Literal, StoppingRule::Predictable] {
            let tau = build_stopping_time(&set, rule).unwrap();
            assert_eq!(tau, oracle(&set, rule));
            assert!(tau.is_measurable() && tau.is_downward_closed());
        }
        // E_{(0,0)} χ_F = 1/2 is not above 1/2, E_{(1,q)} is 1 on the left half.
        let tau = build_stopping_time(&set, StoppingRule::Literal).unwrap();
        assert_eq!(tau.level_set([0, 2]).count(), 16);
        assert_eq!(tau.level_set([1, 0]).count(), 8);
    }

    #[test]
    fn random_sets_match_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let ax = [Axis::new(3, 1).unwrap(), Axis::new(2, 1).unwrap()];
        for _ in 0..20 {
            let density = rng.gen_range(0.0..0.6);
            let set = CellSet { axes: ax, cells: (0..32).map(|_| rng.gen_bool(density)).collect() };
            for rule in [StoppingRule::Literal, StoppingRule::Predictable] {
                assert_eq!(build_stopping_time(&set, rule).unwrap(), oracle(&set, rule));
            }
        }
    }

    #[test]
    fn empty_decomposition_for_zero() {
        let ax = axes(3, 3);
        let d = atomic_decompose(&GridFunction::zeros(ax), &AccretivePair::unit(ax)).unwrap();
        assert!(d.levels.is_empty());
        assert_eq!(d.square_l1, 0.0);
    }

    #[test]
    fn boundary_terms_are_rejected() {
        let ax = axes(2, 2);
        let f = GridFunction::from_fn(ax, |c1, _| C64::new(c1 as f64, 0.0)).unwrap();
        assert!(matches!(atomic_decompose(&f, &AccretivePair::unit(ax)), Err(Error::NotMeanZero { .. })));
    }

    #[test]
    fn single_double_haar_function() {
        let ax = axes(3, 3);
        let pair = AccretivePair::unit(ax);
        let h1 = AxisFunction::from_real(ax[0], &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, -1.0, -1.0]).unwrap();
        let h2 = AxisFunction::from_real(ax[1], &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let f = h1.tensor(&h2).scale(C64::new(3.0, 0.0));
        let d = atomic_decompose(&f, &pair).unwrap();
        assert_eq!(d.levels.len(), 1);
        assert_eq!(d.levels[0].n, 1);
        assert!(d.reconstruct().max_abs_diff(&f).unwrap() < 1e-12);
        assert!(verify_atom(&d.levels[0].atom, &pair).unwrap().passes());
        // |f| = 3 on R = [1/2,1) × [0,1/4), |R| = 1/8; f* = S f = 3 χ_R.
        let r = h1_report(&f, &pair).unwrap();
        assert!((r.square_l1 - 3.0 / 8.0).abs() < 1e-15);
        assert!((r.maximal_l1 - 3.0 / 8.0).abs() < 1e-15);
        assert_eq!(r.ratio, Some(1.0));
        let zero = h1_report(&GridFunction::zeros(ax), &pair).unwrap();
        assert_eq!(zero.ratio, None);
    }

    #[test]
    fn random_decompositions_reconstruct_and_certify() {
        let ax = axes(4, 4);
        let mut worst = 0.0f64;
        for seed in 0..12 {
            let pair = AccretivePair::random(ax, seed, 0.5, 2.0).unwrap();
            let f = projected(ax, seed + 100, &pair);
            let d = atomic_decompose(&f, &pair).unwrap();
            assert!(d.reconstruct().max_abs_diff(&f).unwrap() < 1e-9);
            assert!(d.monotone);
            for (n, m) in &d.level_measures {
                assert!(*m <= crate::dyadic_grid::exp2i(-n) * d.square_l1);
            }
            for level in &d.levels {
                let report = verify_atom(&level.atom, &pair).unwrap();
                assert!(report.passes(), "seed {seed}, level {}: {:?}", level.n, report.failures);
                assert!(level.atom.tau.is_measurable() && level.atom.tau.is_downward_closed());
            }
            worst = worst.max(d.lambda_sum() / d.square_l1);
        }
        assert!(worst <= 128.0, "Σ|λ| / ‖S f‖₁ reached {worst}");
    }

    #[test]
    fn unit_weight_level_energy_is_bounded_by_the_input() {
        let ax = axes(4, 3);
        let pair = AccretivePair::unit(ax);
        for seed in 0..5 {
            let f = projected(ax, seed, &pair);
            let e = f.norm_l2() * f.norm_l2();
            for level in atomic_decompose(&f, &pair).unwrap().levels {
                assert!(level.energy <= e * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn literal_rule_breaks_cancellation() {
        let ax = axes(4, 4);
        let pair = AccretivePair::unit(ax);
        let mut broken = 0;
        for seed in 0..10 {
            let f = projected(ax, seed, &pair);
            let d = atomic_decompose_with(&f, &pair, StoppingRule::Literal).unwrap();
            broken += d.levels.iter().filter(|l| !verify_atom(&l.atom, &pair).unwrap().cancellation_ok).count();
        }
        assert!(broken > 0);
    }

    #[test]
    fn corrupted_atom_fails_cancellation() {
        let ax = axes(3, 3);
        let pair = AccretivePair::unit(ax);
        let zero = Atom { function: GridFunction::zeros(ax), tau: StoppingTime::full(ax, StoppingRule::Predictable) };
        let report = verify_atom(&zero, &pair).unwrap();
        assert!(report.passes() && !report.nontrivial);
        let f = projected(ax, 4, &pair);
        let d = atomic_decompose(&f, &pair).unwrap();
        let mut atom = d.levels[0].atom.clone();
        let cell = atom.tau.stopped_set().indices().first().copied().unwrap_or(0);
        atom.function.values[cell] += C64::new(0.5, 0.0);
        assert!(!verify_atom(&atom, &pair).unwrap().cancellation_ok);
    }
}
