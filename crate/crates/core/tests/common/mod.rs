//! Independent oracles shared by the integration tests. Nothing here calls
//! into the code under test except for plain data types.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;

use infotamp::grid::{Cell, Grid, Idx};
use infotamp::ltl::{LtlFormula, Predicate, Symbol};
use infotamp::orchestrator::ScenarioConfig;
use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn scenario(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.cfg"));
    ScenarioConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub const SCENARIOS: [&str; 7] =
    ["sequencing", "rearrange3", "replan_a", "replan_b", "replan_c", "extreme_small", "extreme_large"];

// ---------------------------------------------------------------------------
// LTL: direct semantics on lasso words

/// Truth of `f` at every position of `prefix · cycle^ω`. Position `n - 1`
/// is followed by the first cycle position.
fn eval(f: &LtlFormula, word: &[&Symbol], loop_start: usize) -> Vec<bool> {
    let n = word.len();
    let succ = |i: usize| if i + 1 < n { i + 1 } else { loop_start };
    let until = |a: &[bool], b: &[bool]| -> Vec<bool> {
        (0..n)
            .map(|i| {
                let mut j = i;
                // n steps from any position visit every position it can reach
                for _ in 0..=n {
                    if b[j] {
                        return true;
                    }
                    if !a[j] {
                        return false;
                    }
                    j = succ(j);
                }
                false
            })
            .collect()
    };
    match f {
        LtlFormula::True => vec![true; n],
        LtlFormula::Atom(p) => word.iter().map(|s| s.contains(p)).collect(),
        LtlFormula::And(a, b) => {
            let (a, b) = (eval(a, word, loop_start), eval(b, word, loop_start));
            a.iter().zip(&b).map(|(x, y)| *x && *y).collect()
        }
        LtlFormula::Or(a, b) => {
            let (a, b) = (eval(a, word, loop_start), eval(b, word, loop_start));
            a.iter().zip(&b).map(|(x, y)| *x || *y).collect()
        }
        LtlFormula::Until(a, b) => until(&eval(a, word, loop_start), &eval(b, word, loop_start)),
        LtlFormula::Eventually(a) => until(&vec![true; n], &eval(a, word, loop_start)),
        LtlFormula::Always(a) => {
            let a = eval(a, word, loop_start);
            (0..n)
                .map(|i| {
                    let mut j = i;
                    (0..=n).all(|_| {
                        let ok = a[j];
                        j = succ(j);
                        ok
                    })
                })
                .collect()
        }
    }
}

pub fn holds_on_lasso(f: &LtlFormula, prefix: &[Symbol], cycle: &[Symbol]) -> bool {
    assert!(!cycle.is_empty());
    let word: Vec<&Symbol> = prefix.iter().chain(cycle).collect();
    eval(f, &word, prefix.len())[0]
}

pub fn test_predicates() -> Vec<Predicate> {
    vec![Predicate::grasp(1), Predicate::grasp(2), Predicate::release(1, 1)]
}

pub fn random_formula<R: Rng>(rng: &mut R, preds: &[Predicate], depth: usize) -> LtlFormula {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.08) {
            LtlFormula::True
        } else {
            LtlFormula::atom(preds[rng.random_range(0..preds.len())])
        };
    }
    let d = depth - 1;
    match rng.random_range(0..5) {
        0 => LtlFormula::and(random_formula(rng, preds, d), random_formula(rng, preds, d)),
        1 => LtlFormula::or(random_formula(rng, preds, d), random_formula(rng, preds, d)),
        2 => LtlFormula::eventually(random_formula(rng, preds, d)),
        3 => LtlFormula::always(random_formula(rng, preds, d)),
        _ => LtlFormula::until(random_formula(rng, preds, d), random_formula(rng, preds, d)),
    }
}

pub fn random_symbol<R: Rng>(rng: &mut R, preds: &[Predicate]) -> Symbol {
    preds.iter().copied().filter(|_| rng.random_bool(0.3)).collect()
}

pub fn random_lasso<R: Rng>(rng: &mut R, preds: &[Predicate]) -> (Vec<Symbol>, Vec<Symbol>) {
    let prefix = (0..rng.random_range(0..4)).map(|_| random_symbol(rng, preds)).collect();
    let cycle = (0..rng.random_range(1..4)).map(|_| random_symbol(rng, preds)).collect();
    (prefix, cycle)
}

pub fn corpus(seed: u64, formulas: usize, words_per_formula: usize) -> Vec<(LtlFormula, Vec<Symbol>, Vec<Symbol>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds = test_predicates();
    let mut out = Vec::new();
    for _ in 0..formulas {
        let f = random_formula(&mut rng, &preds, 3);
        for _ in 0..words_per_formula {
            let (p, c) = random_lasso(&mut rng, &preds);
            out.push((f.clone(), p, c));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Kalman filter

/// `(Σ₀⁻¹ + k R⁻¹)⁻¹` for a full observation of every coordinate.
pub fn repeated_full_observation(sigma0: &DMatrix<f64>, r_diag: &[f64], k: usize) -> DMatrix<f64> {
    let r_inv = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(r_diag.len(), r_diag.iter().map(|r| 1.0 / r)));
    let info = sigma0.clone().try_inverse().expect("invertible prior") + r_inv * k as f64;
    info.try_inverse().expect("invertible information")
}

// ---------------------------------------------------------------------------
// Informative planning: exhaustive search on a lattice

/// One target object, no occluders, a rectangular workspace.
#[derive(Debug, Clone)]
pub struct LatticeProblem {
    pub lo: Vector2<f64>,
    pub hi: Vector2<f64>,
    pub start: Vector2<f64>,
    pub step: f64,
    pub robot_radius: f64,
    pub object: Vector2<f64>,
    pub object_radius: f64,
    pub prior: Matrix2<f64>,
    pub range: f64,
    pub noise_scale: f64,
    pub noise_floor: f64,
    pub epsilon: f64,
}

impl LatticeProblem {
    fn free(&self, p: Vector2<f64>) -> bool {
        let r = self.robot_radius;
        p.x - self.lo.x >= r
            && self.hi.x - p.x >= r
            && p.y - self.lo.y >= r
            && self.hi.y - p.y >= r
            && (p - self.object).norm() >= r + self.object_radius
    }

    fn sweep_free(&self, a: Vector2<f64>, b: Vector2<f64>) -> bool {
        let ab = b - a;
        let t = ((self.object - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        (a + ab * t - self.object).norm() >= self.robot_radius + self.object_radius
    }

    fn update(&self, cov: &Matrix2<f64>, w: Vector2<f64>) -> Matrix2<f64> {
        if (w - self.object).norm() > self.range {
            return *cov;
        }
        let r = |c: f64| (self.noise_scale * c.abs()).powi(2).max(self.noise_floor);
        let info = cov.try_inverse().unwrap() + Matrix2::new(1.0 / r(self.object.x), 0.0, 0.0, 1.0 / r(self.object.y));
        info.try_inverse().unwrap()
    }

    /// Cheapest sum of target determinants over `w(1) .. w(F)` among paths
    /// of at most `max_len` moves whose last waypoint meets `epsilon`.
    pub fn brute_force(&self, max_len: usize) -> Option<f64> {
        let h = self.step;
        let moves: Vec<Vector2<f64>> = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
            .iter()
            .map(|&(a, b)| Vector2::new(a as f64 * h, b as f64 * h))
            .collect();
        if self.prior.determinant() <= self.epsilon {
            return Some(0.0);
        }
        let mut best = f64::INFINITY;
        let mut stack = vec![(self.start, self.prior, 0.0_f64, 0usize)];
        while let Some((x, cov, cost, len)) = stack.pop() {
            if len == max_len {
                continue;
            }
            for m in &moves {
                let y = x + m;
                if !self.free(y) || !self.sweep_free(x, y) {
                    continue;
                }
                let c = self.update(&cov, y);
                let det = c.determinant();
                let total = cost + det;
                if total >= best {
                    continue;
                }
                if det <= self.epsilon {
                    best = total;
                } else {
                    stack.push((y, c, total, len + 1));
                }
            }
        }
        best.is_finite().then_some(best)
    }
}

// ---------------------------------------------------------------------------
// Mission graph

/// Hand-written two-region patrol automaton, with
/// `grasp(1)` and `grasp(2)` standing in for the two region predicates.
pub const PATROL_NBA: &str = "\
states: 3
initial: 0
final: 2
trans: 0 true 0
trans: 0 grasp(1) 1
trans: 0 grasp(1) & grasp(2) 2
trans: 1 true 1
trans: 1 grasp(2) 2
trans: 2 true 0
trans: 2 grasp(1) 1
trans: 2 grasp(1) & grasp(2) 2
";

// ---------------------------------------------------------------------------
// Topology: subset removal and flood fill

#[derive(Debug, Clone)]
pub struct GridWorld {
    pub grid: Grid,
    pub objects: usize,
    pub start: Idx,
    pub goal: Idx,
}

/// Random grid with fixed cells and square object blobs that never touch
/// each other (not even diagonally).
pub fn random_grid_world<R: Rng>(rng: &mut R) -> GridWorld {
    let nx = rng.random_range(10..18);
    let ny = rng.random_range(10..18);
    let mut grid = Grid::new(Vector2::zeros(), 1.0, nx, ny, Cell::Free);
    for j in 0..ny {
        for i in 0..nx {
            if rng.random_bool(0.12) {
                grid.set((i, j), Cell::Fixed);
            }
        }
    }
    // full walls; object blobs dropped onto them become doorways
    let mut walls: Vec<(bool, usize)> = Vec::new();
    for _ in 0..rng.random_range(1..3) {
        if rng.random_bool(0.5) {
            let i = rng.random_range(2..nx - 2);
            for j in 0..ny {
                grid.set((i, j), Cell::Fixed);
            }
            walls.push((true, i));
        } else {
            let j = rng.random_range(2..ny - 2);
            for i in 0..nx {
                grid.set((i, j), Cell::Fixed);
            }
            walls.push((false, j));
        }
    }
    let mut objects = 0;
    let mut taken: BTreeSet<Idx> = BTreeSet::new();
    for _ in 0..rng.random_range(1..7) {
        let size = rng.random_range(1..3);
        let (mut i0, mut j0) = (rng.random_range(0..nx - size), rng.random_range(0..ny - size));
        if rng.random_bool(0.5) {
            match walls[rng.random_range(0..walls.len())] {
                (true, i) => i0 = i.min(nx - size),
                (false, j) => j0 = j.min(ny - size),
            }
        }
        let cells: Vec<Idx> = (0..size).flat_map(|a| (0..size).map(move |b| (i0 + a, j0 + b))).collect();
        let clash = cells.iter().any(|&(i, j)| {
            (-1i64..=1).any(|a| {
                (-1i64..=1).any(|b| taken.contains(&((i as i64 + a).max(0) as usize, (j as i64 + b).max(0) as usize)))
            })
        });
        if clash {
            continue;
        }
        for &c in &cells {
            grid.set(c, Cell::Object(1 << objects));
            taken.insert(c);
        }
        objects += 1;
    }
    let free: Vec<Idx> =
        (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).filter(|&c| grid.get(c) == Cell::Free).collect();
    let start = free[rng.random_range(0..free.len())];
    let goal = free[rng.random_range(0..free.len())];
    GridWorld { grid, objects, start, goal }
}

/// Flood fill from start over free cells and the cells of `removed` objects.
pub fn reachable_without(w: &GridWorld, removed: u64) -> bool {
    let passable = |c: Cell| match c {
        Cell::Free => true,
        Cell::Fixed => false,
        Cell::Object(mask) => mask & !removed == 0,
    };
    let (nx, ny) = (w.grid.nx, w.grid.ny);
    let mut seen = vec![false; nx * ny];
    let mut queue = VecDeque::from([w.start]);
    seen[w.start.1 * nx + w.start.0] = true;
    while let Some((i, j)) = queue.pop_front() {
        if (i, j) == w.goal {
            return true;
        }
        let mut next = Vec::new();
        if i > 0 {
            next.push((i - 1, j));
        }
        if j > 0 {
            next.push((i, j - 1));
        }
        if i + 1 < nx {
            next.push((i + 1, j));
        }
        if j + 1 < ny {
            next.push((i, j + 1));
        }
        for c in next {
            if !seen[c.1 * nx + c.0] && passable(w.grid.get(c)) {
                seen[c.1 * nx + c.0] = true;
                queue.push_back(c);
            }
        }
    }
    false
}

/// Every removal set of minimum size that connects start and goal, or
/// `None` when even removing all objects does not.
pub fn minimal_blocking_sets(w: &GridWorld) -> Option<Vec<BTreeSet<usize>>> {
    let all = (1u64 << w.objects) - 1;
    if !reachable_without(w, all) {
        return None;
    }
    for size in 0..=w.objects {
        let sets: Vec<BTreeSet<usize>> = (0..=all)
            .filter(|m| m.count_ones() as usize == size && reachable_without(w, *m))
            .map(|m| (0..w.objects).filter(|k| m & (1 << k) != 0).collect())
            .collect();
        if !sets.is_empty() {
            return Some(sets);
        }
    }
    unreachable!("removing every object connects start and goal")
}

/// A 5x5 lattice room with the object in one corner and the robot in the
/// opposite one. Six close-range looks are needed to reach `epsilon`.
pub fn corner_lattice() -> LatticeProblem {
    LatticeProblem {
        lo: Vector2::new(0.0, 0.0),
        hi: Vector2::new(2.5, 2.5),
        start: Vector2::new(0.25, 0.25),
        step: 0.5,
        robot_radius: 0.2,
        object: Vector2::new(2.25, 2.25),
        object_radius: 0.05,
        prior: Matrix2::identity() * 0.25,
        range: 0.9,
        noise_scale: 0.2,
        noise_floor: 1e-6,
        epsilon: 1e-3,
    }
}
