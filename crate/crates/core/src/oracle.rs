//! Exhaustive reference computations on tiny spaces.
//!
//! Nothing here shares code with the fast paths beyond the space types and
//! the tie tolerance. Maximal functions enumerate every (center, radius)
//! pair, overlap norms are summed atom by atom with compensated addition,
//! and constants are searched over value and weight grids followed by a
//! pattern search with shrinking steps. A bracket's upper end adds the
//! largest change of the objective over one final step; it is an estimate,
//! not a certificate.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::boman::{BallFamily, Realization, SearchMode};
use crate::maximal::{OperatorSpec, TestFunction, Variant};
use crate::normlab::interpolation_bound;
use crate::rng;
use crate::space::{AtomicSpace, Ball, Center, Closure, Metric, MetricMeasureSpace};
use crate::tol;
use crate::{Error, Result};

/// Random weight vectors refined alongside the best grid starts.
const MULTISTARTS: usize = 24;
const MULTISTART_SEED: u64 = 0x0b0a_5eed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_atoms: usize,
    pub weight_grid: Vec<f64>,
    pub value_grid: Vec<f64>,
    /// Cap on the number of grid functions enumerated.
    pub max_functions: usize,
    /// Cap on the number of distinct balls.
    pub max_balls: usize,
    /// Segment breakpoints allowed per segment.
    pub max_breakpoints: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        OracleBudget {
            max_atoms: 12,
            weight_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            value_grid: vec![0.0, 0.5, 1.0, 2.0],
            max_functions: 1 << 16,
            max_balls: 64,
            max_breakpoints: 64,
        }
    }
}

impl OracleBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_atoms > 12 {
            return Err(Error::InvalidParameter("oracle budgets allow at most 12 atoms".into()));
        }
        if self.weight_grid.is_empty() || self.weight_grid.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("weight grid must be nonempty and positive".into()));
        }
        if self.value_grid.is_empty() || self.value_grid.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("value grid must be nonempty and nonnegative".into()));
        }
        Ok(())
    }

    fn admit(&self, space: &AtomicSpace) -> Result<()> {
        self.validate()?;
        if space.len() > self.max_atoms {
            return Err(Error::TooLarge { what: "oracle atoms", got: space.len(), limit: self.max_atoms });
        }
        Ok(())
    }
}

/// Lower and estimated upper end of a searched constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    /// Gap above half the lower end: too coarse to be informative.
    pub coarse: bool,
    pub witness: Value,
    pub evaluations: usize,
}

impl Bracket {
    fn new(lower: f64, slack: f64, witness: Value, evaluations: usize) -> Self {
        let upper = lower + slack.max(0.0);
        Bracket { lower, upper, coarse: upper > 1.5 * lower, witness, evaluations }
    }
}

/// Neumaier summation.
pub fn ksum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in values {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn inside(d: f64, r: f64, closure: Closure) -> bool {
    match closure {
        Closure::Closed => tol::le(d, r),
        Closure::Open => tol::lt(d, r),
    }
}

fn weighted_norm(values: &[f64], masses: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().copied().fold(0.0, f64::max);
    }
    ksum(values.iter().zip(masses).map(|(v, m)| v.powf(p) * m)).powf(1.0 / p)
}

/// Maximal function by enumerating every center and every radius at which
/// an average can change: the distances `d`, the values `d / t`, the lower
/// radius bound, midpoints between them and one radius past all of them.
pub fn brute_maximal(space: &AtomicSpace, g: &TestFunction, spec: &OperatorSpec, budget: &OracleBudget) -> Result<TestFunction> {
    budget.admit(space)?;
    spec.validate()?;
    if g.len() != space.len() {
        return Err(Error::InvalidParameter("test function length does not match the space".into()));
    }
    let g = TestFunction::new(g.0.clone())?;
    let n = space.len();
    let t = spec.expansion;
    let mut out = vec![0.0f64; n];
    for y in 0..n {
        let dist: Vec<f64> = (0..n).map(|z| space.distance(y, z)).collect();
        let mut cuts: Vec<f64> = dist.iter().flat_map(|&d| [d, d / t]).collect();
        cuts.push(spec.r_min);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut radii: Vec<f64> = cuts.clone();
        radii.extend(cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        radii.push(cuts.last().unwrap() + 1.0);
        for r in radii.into_iter().filter(|&r| r > spec.r_min) {
            let den = ksum((0..n).filter(|&z| inside(dist[z], r, spec.closure)).map(|z| space.mass(z)));
            if den == 0.0 {
                continue;
            }
            let num = ksum((0..n).filter(|&z| inside(dist[z], t * r, spec.closure)).map(|z| g.0[z] * space.mass(z)));
            let avg = num / den;
            match spec.variant {
                Variant::Centered => out[y] = out[y].max(avg),
                Variant::Uncentered => {
                    for x in 0..n {
                        if tol::lt(dist[x], t * r) {
                            out[x] = out[x].max(avg);
                        }
                    }
                }
            }
        }
    }
    Ok(TestFunction(out))
}

fn realization_allowed(family: &BallFamily, realization: Realization) -> Result<()> {
    let bad = match realization {
        Realization::Dilated => family.dilations.iter().any(|&t| t < 1.0),
        Realization::Contracted => family.dilations.iter().any(|&t| t > 1.0),
        Realization::BaseSets => family.base_sets.is_none(),
        Realization::Base => false,
    };
    if bad {
        Err(Error::InvalidFamily(format!("family does not admit the {realization:?} realization")))
    } else {
        Ok(())
    }
}

/// Overlap norm recomputed atom by atom (or elementary interval by
/// elementary interval) with compensated sums.
pub fn exact_overlap(space: &MetricMeasureSpace, family: &BallFamily, realization: Realization, p: f64, budget: &OracleBudget) -> Result<f64> {
    family.validate()?;
    realization_allowed(family, realization)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("exponent must be >= 1, got {p}")));
    }
    match space {
        MetricMeasureSpace::Atomic(s) => {
            budget.admit(s)?;
            let n = s.len();
            let mut parts: Vec<Vec<f64>> = vec![Vec::new(); n];
            for k in 0..family.len() {
                let base = &family.balls[k];
                let c = s.resolve(&base.center)?;
                let set: Vec<usize> = match realization {
                    Realization::BaseSets => {
                        let e = &family.base_sets.as_ref().unwrap()[k];
                        let set: BTreeSet<usize> = e.iter().copied().collect();
                        for &i in &set {
                            if i >= n || !tol::le(s.distance(c, i), base.radius) {
                                return Err(Error::NotContained { index: k });
                            }
                        }
                        set.into_iter().collect()
                    }
                    _ => {
                        let b = family.realized_ball(k, realization);
                        (0..n).filter(|&z| inside(s.distance(c, z), b.radius, b.closure)).collect()
                    }
                };
                let mass = ksum(set.iter().map(|&z| s.mass(z)));
                if mass == 0.0 {
                    return Err(Error::ZeroMeasure { index: k });
                }
                for &z in &set {
                    parts[z].push(family.weights[k] / mass);
                }
            }
            let values: Vec<f64> = parts.into_iter().map(ksum).collect();
            Ok(weighted_norm(&values, s.masses(), p))
        }
        MetricMeasureSpace::Segments(s) => {
            if realization == Realization::BaseSets {
                return Err(Error::WrongBackend("atomic"));
            }
            let mut traces = Vec::new();
            let mut cuts: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for k in 0..family.len() {
                let ts = s.traces(&family.realized_ball(k, realization))?;
                for t in &ts {
                    cuts.entry(t.segment).or_default().extend([t.lo, t.hi]);
                }
                let mass = ksum(ts.iter().map(|t| s.segments()[t.segment].density * (t.hi - t.lo)));
                if mass == 0.0 {
                    return Err(Error::ZeroMeasure { index: k });
                }
                traces.push((ts, family.weights[k] / mass));
            }
            let mut values = Vec::new();
            let mut masses = Vec::new();
            for (seg, mut xs) in cuts {
                xs.sort_by(f64::total_cmp);
                xs.dedup();
                if xs.len() > budget.max_breakpoints {
                    return Err(Error::TooLarge { what: "segment breakpoints", got: xs.len(), limit: budget.max_breakpoints });
                }
                let density = s.segments()[seg].density;
                for w in xs.windows(2) {
                    let mid = 0.5 * (w[0] + w[1]);
                    let v = ksum(traces.iter().filter_map(|(ts, c)| {
                        ts.iter().any(|t| t.segment == seg && t.lo <= mid && mid <= t.hi).then_some(*c)
                    }));
                    values.push(v);
                    masses.push(density * (w[1] - w[0]));
                }
            }
            Ok(weighted_norm(&values, &masses, p))
        }
    }
}

/// Distinct closed balls: `(center, radius, members)`, one per member set.
fn distinct_balls(space: &AtomicSpace) -> Vec<(usize, f64, Vec<usize>)> {
    let n = space.len();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for c in 0..n {
        for (r, members) in center_levels(space, c) {
            if seen.insert(members.clone()) {
                out.push((c, r, members));
            }
        }
    }
    out
}

/// Closed balls around `c` at every distinct distance; the singleton gets
/// half the nearest distance (or 1 in a one-point space).
fn center_levels(space: &AtomicSpace, c: usize) -> Vec<(f64, Vec<usize>)> {
    let n = space.len();
    let mut ds: Vec<f64> = (0..n).map(|z| space.distance(c, z)).filter(|&d| d > 0.0).collect();
    ds.sort_by(f64::total_cmp);
    let mut radii: Vec<f64> = Vec::new();
    for d in ds {
        if radii.last().is_none_or(|&l| !tol::tied(l, d)) {
            radii.push(d);
        }
    }
    let first = radii.first().map_or(1.0, |d| 0.5 * d);
    std::iter::once(first)
        .chain(radii)
        .map(|r| (r, (0..n).filter(|&z| tol::le(space.distance(c, z), r)).collect()))
        .collect()
}

/// One term of a candidate family: a ball with a realized top set and
/// bottom set.
#[derive(Debug, Clone)]
struct Pair {
    center: usize,
    radius: f64,
    dilation: f64,
    base_set: Option<usize>,
    top: Vec<usize>,
    bottom: Vec<usize>,
}

fn pairs_for(space: &AtomicSpace, mode: SearchMode) -> Vec<Pair> {
    let n = space.len();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut push = |pair: Pair, out: &mut Vec<Pair>| {
        if seen.insert((pair.top.clone(), pair.bottom.clone())) {
            out.push(pair);
        }
    };
    for c in 0..n {
        let levels = center_levels(space, c);
        for (j, (r, members)) in levels.iter().enumerate() {
            match mode {
                SearchMode::Expand => {
                    for (big, big_members) in levels.iter().skip(j) {
                        let t = big / r;
                        push(Pair { center: c, radius: *r, dilation: t, base_set: None, top: big_members.clone(), bottom: members.clone() }, &mut out);
                    }
                }
                SearchMode::Generalized => {
                    for &e in members {
                        push(Pair { center: c, radius: *r, dilation: 1.0, base_set: Some(e), top: members.clone(), bottom: vec![e] }, &mut out);
                    }
                }
                SearchMode::WeakContract => {
                    let t = (levels[0].0 / r).min(1.0);
                    push(Pair { center: c, radius: *r, dilation: t, base_set: None, top: members.clone(), bottom: vec![c] }, &mut out);
                }
            }
        }
    }
    out
}

struct PairProblem<'a> {
    space: &'a AtomicSpace,
    pairs: Vec<Pair>,
    top_mass: Vec<f64>,
    bottom_mass: Vec<f64>,
    p: f64,
}

impl<'a> PairProblem<'a> {
    fn new(space: &'a AtomicSpace, pairs: Vec<Pair>, p: f64) -> Self {
        let top_mass = pairs.iter().map(|q| ksum(q.top.iter().map(|&z| space.mass(z)))).collect();
        let bottom_mass = pairs.iter().map(|q| ksum(q.bottom.iter().map(|&z| space.mass(z)))).collect();
        PairProblem { space, pairs, top_mass, bottom_mass, p }
    }

    fn ratio(&self, w: &[f64]) -> f64 {
        let n = self.space.len();
        let mut top = vec![0.0; n];
        let mut bottom = vec![0.0; n];
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let q = &self.pairs[i];
            q.top.iter().for_each(|&z| top[z] += wi / self.top_mass[i]);
            q.bottom.iter().for_each(|&z| bottom[z] += wi / self.bottom_mass[i]);
        }
        let b = weighted_norm(&bottom, self.space.masses(), self.p);
        if b == 0.0 {
            return 0.0;
        }
        weighted_norm(&top, self.space.masses(), self.p) / b
    }

    fn family(&self, w: &[f64]) -> BallFamily {
        let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
        let scale = keep.iter().map(|&i| w[i]).fold(0.0, f64::max);
        let base_sets = self.pairs[0].base_set.map(|_| keep.iter().map(|&i| vec![self.pairs[i].base_set.unwrap()]).collect());
        BallFamily {
            balls: keep.iter().map(|&i| Ball::atom(self.pairs[i].center, self.pairs[i].radius)).collect(),
            weights: keep.iter().map(|&i| w[i] / scale).collect(),
            dilations: keep.iter().map(|&i| self.pairs[i].dilation).collect(),
            base_sets,
        }
    }
}

/// Coordinate pattern search with a final step size and the largest
/// one-step change seen at the optimum.
fn pattern_search<F: Fn(&[f64]) -> f64>(f: &F, mut x: Vec<f64>, steps: &[f64], to_point: fn(f64, f64) -> f64, evals: &mut usize) -> (f64, Vec<f64>, f64) {
    let mut best = f(&x);
    *evals += 1;
    for &s in steps {
        for _ in 0..40 {
            let mut improved = false;
            for i in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let old = x[i];
                    x[i] = to_point(old, dir * s);
                    let v = f(&x);
                    *evals += 1;
                    if v > best * (1.0 + 1e-14) {
                        best = v;
                        improved = true;
                    } else {
                        x[i] = old;
                    }
                }
            }
            if !improved {
                break;
            }
        }
    }
    let s = *steps.last().unwrap();
    let mut change = 0.0f64;
    for i in 0..x.len() {
        for dir in [1.0, -1.0] {
            let old = x[i];
            x[i] = to_point(old, dir * s);
            change = change.max((f(&x) - best).abs());
            *evals += 1;
            x[i] = old;
        }
    }
    (best, x, change)
}

fn log_step(x: f64, s: f64) -> f64 {
    (x + s).max(-60.0)
}

fn additive_step(x: f64, s: f64) -> f64 {
    (x + s).max(0.0)
}

/// Generalized-mode assignment search: every atom picks the ball
/// maximizing the average of `g`, then `g` takes a power step for the
/// frozen averaging operator. Returns pair weights certifying the ratio.
fn assignment_seed(space: &AtomicSpace, balls: &[(usize, f64, Vec<usize>)], pairs: &[Pair], p: f64, g0: &[f64]) -> Vec<f64> {
    let n = space.len();
    let dual = p / (p - 1.0);
    let ball_mass: Vec<f64> = balls.iter().map(|b| ksum(b.2.iter().map(|&z| space.mass(z)))).collect();
    let index: BTreeMap<(Vec<usize>, usize), usize> =
        pairs.iter().enumerate().map(|(i, q)| ((q.top.clone(), q.bottom[0]), i)).collect();
    let mut g = g0.to_vec();
    let mut best_w = vec![0.0; pairs.len()];
    let mut best = 0.0;
    let problem = PairProblem::new(space, pairs.to_vec(), p);
    for _ in 0..12 {
        let avg: Vec<f64> = balls.iter().zip(&ball_mass).map(|(b, m)| ksum(b.2.iter().map(|&z| g[z] * space.mass(z))) / m).collect();
        let sigma: Vec<usize> = (0..n)
            .map(|e| {
                (0..balls.len())
                    .filter(|&b| balls[b].2.contains(&e))
                    .fold(None::<usize>, |acc, b| match acc {
                        Some(a) if avg[a] >= avg[b] => Some(a),
                        _ => Some(b),
                    })
                    .unwrap()
            })
            .collect();
        let tg: Vec<f64> = (0..n).map(|e| avg[sigma[e]]).collect();
        let h: Vec<f64> = if dual.is_infinite() { tg.iter().map(|_| 1.0).collect() } else { tg.iter().map(|v| v.powf(dual - 1.0)).collect() };
        let mut w = vec![0.0; pairs.len()];
        for e in 0..n {
            if h[e] > 0.0 {
                w[index[&(balls[sigma[e]].2.clone(), e)]] += space.mass(e) * h[e];
            }
        }
        let r = problem.ratio(&w);
        if r > best {
            best = r;
            best_w = w;
        }
        let mut adj = vec![0.0; n];
        for e in 0..n {
            let b = sigma[e];
            for &z in &balls[b].2 {
                adj[z] += space.mass(e) * h[e] / ball_mass[b];
            }
        }
        let peak = adj.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 || p.is_infinite() {
            break;
        }
        g = adj.iter().map(|v| (v / peak).powf(p - 1.0)).collect();
    }
    best_w
}

fn grid_functions(space: &AtomicSpace, budget: &OracleBudget) -> Result<Vec<Vec<f64>>> {
    let n = space.len();
    let levels = budget.value_grid.len();
    let count = (levels as f64).powi(n as i32);
    if count > budget.max_functions as f64 {
        return Err(Error::TooLarge { what: "grid functions", got: count.min(usize::MAX as f64) as usize, limit: budget.max_functions });
    }
    let count = count as usize;
    Ok((0..count)
        .map(|mut code| {
            (0..n)
                .map(|_| {
                    let v = budget.value_grid[code % levels];
                    code /= levels;
                    v
                })
                .collect()
        })
        .filter(|g: &Vec<f64>| g.iter().any(|&v| v > 0.0))
        .collect())
}

/// Best constant `C` in the Boman inequality of the given mode, over
/// families built from distinct balls, with an estimated upper end.
pub fn brute_boman_constant(space: &AtomicSpace, p: f64, mode: SearchMode, budget: &OracleBudget) -> Result<Bracket> {
    brute_boman_seeded(space, p, mode, budget, &[])
}

/// As [`brute_boman_constant`], with extra functions whose maximizing
/// assignments seed the generalized search.
pub fn brute_boman_seeded(space: &AtomicSpace, p: f64, mode: SearchMode, budget: &OracleBudget, seeds: &[Vec<f64>]) -> Result<Bracket> {
    budget.admit(space)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("exponent must be >= 1, got {p}")));
    }
    let balls = distinct_balls(space);
    if balls.len() > budget.max_balls {
        return Err(Error::TooLarge { what: "distinct balls", got: balls.len(), limit: budget.max_balls });
    }
    let pairs = pairs_for(space, mode);
    let m = pairs.len();
    let problem = PairProblem::new(space, pairs.clone(), p);
    let mut evals = 0usize;
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    let unit = |i: usize| {
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        w
    };
    for i in 0..m {
        let w = unit(i);
        starts.push((problem.ratio(&w), w));
    }
    let duo: Vec<(f64, Vec<f64>)> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let problem = &problem;
            let grid = &budget.weight_grid;
            (i + 1..m).flat_map(move |j| {
                grid.iter().map(move |&rho| {
                    let mut w = vec![0.0; m];
                    w[i] = 1.0;
                    w[j] = rho;
                    (problem.ratio(&w), w)
                })
            })
        })
        .collect();
    evals += m + duo.len();
    starts.extend(duo);
    let grid = &budget.weight_grid;
    if m >= 3 && m * (m - 1) * (m - 2) / 6 * grid.len() * grid.len() <= budget.max_functions {
        let trio: Vec<(f64, Vec<f64>)> = (0..m)
            .into_par_iter()
            .flat_map_iter(|i| {
                let problem = &problem;
                (i + 1..m).flat_map(move |j| {
                    (j + 1..m).flat_map(move |k| {
                        grid.iter().flat_map(move |&a| {
                            grid.iter().map(move |&b| {
                                let mut w = vec![0.0; m];
                                w[i] = 1.0;
                                w[j] = a;
                                w[k] = b;
                                (problem.ratio(&w), w)
                            })
                        })
                    })
                })
            })
            .collect();
        evals += trio.len();
        starts.extend(trio);
    }
    if mode == SearchMode::Generalized {
        let mut gs: Vec<Vec<f64>> = seeds.iter().filter(|g| g.len() == space.len()).cloned().collect();
        for b in &balls {
            let mut ind = vec![0.0; space.len()];
            b.2.iter().for_each(|&z| ind[z] = 1.0);
            gs.push(ind.iter().map(|v| 1.0 - v).collect());
            gs.push(ind);
        }
        gs.retain(|g| g.iter().any(|&v| v > 0.0));
        let found: Vec<(f64, Vec<f64>)> = gs
            .par_iter()
            .map(|g| {
                let w = assignment_seed(space, &balls, &pairs, p, g);
                (problem.ratio(&w), w)
            })
            .collect();
        evals += found.len() * 12;
        starts.extend(found);
    }
    starts.push((problem.ratio(&vec![1.0; m]), vec![1.0; m]));
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut picked: Vec<Vec<f64>> = Vec::new();
    for (_, w) in &starts {
        if picked.len() >= 12 {
            break;
        }
        if !picked.contains(w) {
            picked.push(w.clone());
        }
    }
    picked.push(vec![1.0; m]);
    let mut rng = rng::stream(MULTISTART_SEED, m as u64);
    for _ in 0..MULTISTARTS {
        let w: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { (-4.0 * rng.gen::<f64>()).exp() } else { 0.0 }).collect();
        if w.iter().any(|&v| v > 0.0) {
            picked.push(w);
        }
    }
    let objective = |x: &[f64]| {
        let w: Vec<f64> = x.iter().map(|v| if *v <= -60.0 { 0.0 } else { v.exp() }).collect();
        problem.ratio(&w)
    };
    let steps = [std::f64::consts::LN_2, std::f64::consts::LN_2 / 4.0, std::f64::consts::LN_2 / 16.0, std::f64::consts::LN_2 / 64.0];
    let refined: Vec<(f64, Vec<f64>, f64, usize)> = picked
        .par_iter()
        .map(|w| {
            let peak = w.iter().copied().fold(0.0, f64::max);
            let x: Vec<f64> = w.iter().map(|&v| if v > 0.0 { (v / peak).ln() } else { (1e-6f64).ln() }).collect();
            let mut count = 0;
            let (v, x, change) = pattern_search(&objective, x, &steps, log_step, &mut count);
            (v, x, change, count)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut slack = 0.0;
    for (v, x, change, count) in refined {
        evals += count;
        if v > best.0 {
            best = (v, x.iter().map(|v| if *v <= -60.0 { 0.0 } else { v.exp() }).collect());
            slack = change;
        }
    }
    let family = problem.family(&best.1);
    let (top, bottom) = match mode {
        SearchMode::Expand => (Realization::Dilated, Realization::Base),
        SearchMode::Generalized => (Realization::Base, Realization::BaseSets),
        SearchMode::WeakContract => (Realization::Base, Realization::Contracted),
    };
    let whole: MetricMeasureSpace = space.clone().into();
    let lower = exact_overlap(&whole, &family, top, p, budget)? / exact_overlap(&whole, &family, bottom, p, budget)?;
    Ok(Bracket::new(lower, slack, json!({ "family": family, "pairs": m }), evals))
}

fn weak_value(space: &AtomicSpace, tg: &[f64], g_norm: f64, p: f64) -> (f64, f64) {
    let mut levels: Vec<f64> = tg.iter().copied().filter(|&v| v > 0.0).collect();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let mut best = (0.0, 0.0);
    for v in levels {
        let alpha = v - tol::tie_eps(v);
        if alpha <= 0.0 {
            continue;
        }
        let mass = ksum((0..tg.len()).filter(|&i| tg[i] > alpha).map(|i| space.mass(i)));
        let score = alpha * mass.powf(1.0 / p) / g_norm;
        if score > best.0 {
            best = (score, alpha);
        }
    }
    best
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Weak,
    Strong,
}

fn brute_operator(space: &AtomicSpace, spec: &OperatorSpec, p: f64, budget: &OracleBudget, kind: Kind) -> Result<Bracket> {
    budget.admit(space)?;
    let score = |g: &[f64]| -> Result<(f64, f64)> {
        let gn = weighted_norm(g, space.masses(), p);
        if gn == 0.0 {
            return Ok((0.0, 0.0));
        }
        let tg = brute_maximal(space, &TestFunction(g.to_vec()), spec, budget)?;
        Ok(match kind {
            Kind::Weak => weak_value(space, &tg.0, gn, p),
            Kind::Strong => (weighted_norm(&tg.0, space.masses(), p) / gn, 0.0),
        })
    };
    let grid = grid_functions(space, budget)?;
    let scored: Vec<(f64, usize)> = grid
        .par_iter()
        .enumerate()
        .map(|(i, g)| score(g).map(|s| (s.0, i)))
        .collect::<Result<_>>()?;
    let mut evals = scored.len();
    let (mut best, idx) = scored.iter().fold((f64::NEG_INFINITY, 0), |acc, &(v, i)| if v > acc.0 { (v, i) } else { acc });
    let mut g = grid[idx].clone();
    let objective = |x: &[f64]| score(x).map_or(0.0, |s| s.0);
    let step = budget.value_grid.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max).max(0.5);
    let (refined, x, change) = pattern_search(&objective, g.clone(), &[step, step / 4.0, step / 16.0], additive_step, &mut evals);
    let mut slack = 0.0;
    if refined > best {
        best = refined;
        g = x;
        slack = change;
    }
    let (value, alpha) = score(&g)?;
    let mut witness = json!({ "g": g, "p": p });
    if kind == Kind::Weak {
        witness["alpha"] = json!(alpha);
    }
    debug_assert!((value - best).abs() <= 1e-12 * best.max(1.0));
    Ok(Bracket::new(value, slack, witness, evals))
}

/// Weak-type `(p, p)` constant over grid functions and all levels.
pub fn brute_weak_constant(space: &AtomicSpace, spec: &OperatorSpec, p: f64, budget: &OracleBudget) -> Result<Bracket> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("weak type needs 1 <= p < inf, got {p}")));
    }
    brute_operator(space, spec, p, budget, Kind::Weak)
}

/// Strong-type `(p, p)` constant over grid functions.
pub fn brute_strong_constant(space: &AtomicSpace, spec: &OperatorSpec, p: f64, budget: &OracleBudget) -> Result<Bracket> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("strong type needs 1 < p < inf, got {p}")));
    }
    brute_operator(space, spec, p, budget, Kind::Strong)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    pub s: f64,
    pub boman_s: Bracket,
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub atoms: usize,
    pub p: f64,
    pub q: f64,
    pub weak_centered: Bracket,
    pub generalized_boman_q: Bracket,
    pub generalized_boman_p: Bracket,
    /// `upper(Boman at q) / lower(weak)`; at least 1 when consistent.
    pub weak_margin: f64,
    pub interpolation: Vec<InterpolationCheck>,
    pub violations: Vec<String>,
    pub flags: Vec<String>,
}

impl ConsistencyReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks two proved chains on a tiny space: the weak-type constant of the
/// centered operator at `p` is at most the generalized Boman constant at the
/// dual exponent, and the generalized Boman constant at `s` in `{1.25, 1.5}`
/// is at most the interpolation bound built from the constant at `p`.
pub fn theorem_consistency_suite(space: &AtomicSpace, p: f64, budget: &OracleBudget) -> Result<ConsistencyReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("suite needs 1 < p < inf, got {p}")));
    }
    let q = p / (p - 1.0);
    let weak = brute_weak_constant(space, &OperatorSpec::centered(), p, budget)?;
    let g_star: Vec<f64> = serde_json::from_value(weak.witness["g"].clone())?;
    let boman_q = brute_boman_seeded(space, q, SearchMode::Generalized, budget, std::slice::from_ref(&g_star))?;
    let boman_p = if (p - q).abs() < 1e-15 {
        boman_q.clone()
    } else {
        brute_boman_seeded(space, p, SearchMode::Generalized, budget, std::slice::from_ref(&g_star))?
    };
    let mut violations = Vec::new();
    let mut flags = Vec::new();
    if weak.lower > boman_q.upper * (1.0 + 1e-9) {
        violations.push(format!("weak constant {} exceeds Boman upper end {} at q = {q}", weak.lower, boman_q.upper));
    }
    for (name, b) in [("weak", &weak), ("boman_q", &boman_q), ("boman_p", &boman_p)] {
        if b.coarse {
            flags.push(format!("{name} bracket is coarse: [{}, {}]", b.lower, b.upper));
        }
    }
    let mut interpolation = Vec::new();
    for s in [1.25, 1.5] {
        if s > p {
            continue;
        }
        let boman_s = brute_boman_seeded(space, s, SearchMode::Generalized, budget, std::slice::from_ref(&g_star))?;
        let bound = interpolation_bound(boman_p.upper.max(1.0), p, s)?;
        let holds = boman_s.lower <= bound * (1.0 + 1e-9);
        if !holds {
            violations.push(format!("s = {s}: Boman lower end {} exceeds interpolation bound {bound}", boman_s.lower));
        }
        if boman_s.coarse {
            flags.push(format!("boman_s({s}) bracket is coarse"));
        }
        interpolation.push(InterpolationCheck { s, margin: bound / boman_s.lower, boman_s, bound, holds });
    }
    Ok(ConsistencyReport {
        atoms: space.len(),
        p,
        q,
        weak_margin: boman_q.upper / weak.lower,
        weak_centered: weak,
        generalized_boman_q: boman_q,
        generalized_boman_p: boman_p,
        interpolation,
        violations,
        flags,
    })
}

/// Seeded random space with `n` atoms: points on a line or in the plane
/// under `l1`, `l2` or `linf`, masses in `[0.25, 2]`.
pub fn random_space(seed: u64, n: usize) -> Result<AtomicSpace> {
    let mut rng = rng::stream(seed, 0);
    let metric = [Metric::L1, Metric::L2, Metric::Linf][rng.gen_range(0..3)];
    let dim = rng.gen_range(1..=2);
    let points: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| (rng.gen::<f64>() * 64.0).round() / 8.0).collect()).collect();
    let mut uniq: Vec<Vec<f64>> = Vec::new();
    for pt in points {
        if !uniq.contains(&pt) {
            uniq.push(pt);
        }
    }
    let masses = uniq.iter().map(|_| 0.25 + 1.75 * rng.gen::<f64>()).collect();
    AtomicSpace::new(uniq, masses, metric)
}

/// Seeded random family of closed balls around atoms.
pub fn random_family(space: &AtomicSpace, seed: u64, size: usize, t_max: f64) -> Result<BallFamily> {
    let mut rng = rng::stream(seed, 1);
    let n = space.len();
    let mut balls = Vec::with_capacity(size);
    for _ in 0..size {
        let c = rng.gen_range(0..n);
        let far = (0..n).map(|z| space.distance(c, z)).fold(0.0, f64::max).max(1.0);
        balls.push(Ball::closed(Center::Atom(c), far * (0.05 + rng.gen::<f64>())));
    }
    let weights = (0..size).map(|_| 0.1 + rng.gen::<f64>() * 3.0).collect();
    let dilations = (0..size).map(|_| 1.0 + rng.gen::<f64>() * (t_max - 1.0)).collect();
    BallFamily::new(balls, weights, dilations)
}

/// Pinned reference values, regenerated on request and compared in tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixtures {
    pub seed: u64,
    pub budget: OracleBudget,
    pub values: BTreeMap<String, f64>,
}

fn counting_line(n: usize) -> Result<AtomicSpace> {
    AtomicSpace::new((0..n).map(|i| vec![i as f64]).collect(), vec![1.0; n], Metric::L1)
}

pub fn generate_fixtures(seed: u64) -> Result<Fixtures> {
    let budget = OracleBudget::default();
    let mut values = BTreeMap::new();
    let line4 = counting_line(4)?;
    let delta = TestFunction(vec![1.0, 0.0, 0.0, 0.0]);
    let m = brute_maximal(&line4, &delta, &OperatorSpec::centered(), &budget)?;
    let mu = brute_maximal(&line4, &delta, &OperatorSpec::uncentered(), &budget)?;
    for x in 0..4 {
        values.insert(format!("line4.delta0.centered[{x}]"), m.0[x]);
        values.insert(format!("line4.delta0.uncentered[{x}]"), mu.0[x]);
    }
    values.insert("line4.distinct_balls".into(), distinct_balls(&line4).len() as f64);
    values.insert("line2.distinct_balls".into(), distinct_balls(&counting_line(2)?).len() as f64);
    values.insert("line1.distinct_balls".into(), distinct_balls(&counting_line(1)?).len() as f64);
    let weak = brute_weak_constant(&line4, &OperatorSpec::centered(), 2.0, &budget)?;
    values.insert("line4.weak_centered_p2.lower".into(), weak.lower);
    let strong = brute_strong_constant(&line4, &OperatorSpec::centered(), 2.0, &budget)?;
    values.insert("line4.strong_centered_p2.lower".into(), strong.lower);
    let pair = counting_line(2)?;
    for mode in [SearchMode::Expand, SearchMode::Generalized, SearchMode::WeakContract] {
        let b = brute_boman_constant(&pair, 2.0, mode, &budget)?;
        values.insert(format!("line2.boman_{}_p2.lower", serde_json::to_value(mode)?.as_str().unwrap_or("")), b.lower);
    }
    let suite = theorem_consistency_suite(&line4, 2.0, &budget)?;
    values.insert("line4.suite_p2.weak_margin".into(), suite.weak_margin);
    for c in &suite.interpolation {
        values.insert(format!("line4.suite_p2.interpolation_margin[{}]", c.s), c.margin);
    }
    let random = random_space(seed, 6)?;
    let g = TestFunction((0..random.len()).map(|i| (i % 3) as f64).collect());
    let mu = brute_maximal(&random, &g, &OperatorSpec::uncentered().with_expansion(2.0), &budget)?;
    values.insert("random6.mod3.expanded_uncentered.sum".into(), ksum(mu.0.iter().copied()));
    Ok(Fixtures { seed, budget, values })
}

/// Keys whose values differ by more than `rel` (relative), or are missing.
pub fn compare_fixtures(stored: &Fixtures, fresh: &Fixtures, rel: f64) -> Vec<String> {
    let mut bad = Vec::new();
    for (k, v) in &stored.values {
        match fresh.values.get(k) {
            Some(w) if (v - w).abs() <= rel * v.abs().max(w.abs()).max(1e-300) => {}
            Some(w) => bad.push(format!("{k}: stored {v}, computed {w}")),
            None => bad.push(format!("{k}: missing")),
        }
    }
    for k in fresh.values.keys() {
        if !stored.values.contains_key(k) {
            bad.push(format!("{k}: not pinned"));
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_fixed() {
        let s = counting_line(5).unwrap();
        let g = TestFunction::constant(5, 1.5);
        let out = brute_maximal(&s, &g, &OperatorSpec::uncentered(), &OracleBudget::default()).unwrap();
        assert!(out.0.iter().all(|&v| (v - 1.5).abs() < 1e-15));
    }

    #[test]
    fn counting_line_by_enumeration() {
        let s = counting_line(4).unwrap();
        let g = TestFunction(vec![1.0, 0.0, 0.0, 0.0]);
        let b = OracleBudget::default();
        assert!((brute_maximal(&s, &g, &OperatorSpec::centered(), &b).unwrap().0[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((brute_maximal(&s, &g, &OperatorSpec::uncentered(), &b).unwrap().0[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn size_caps() {
        let s = counting_line(13).unwrap();
        let g = TestFunction::constant(13, 1.0);
        assert!(matches!(
            brute_maximal(&s, &g, &OperatorSpec::centered(), &OracleBudget::default()),
            Err(Error::TooLarge { .. })
        ));
        let bad = OracleBudget { max_atoms: 13, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn distinct_ball_enumeration() {
        assert_eq!(distinct_balls(&counting_line(1).unwrap()).len(), 1);
        assert_eq!(distinct_balls(&counting_line(2).unwrap()).len(), 3);
        assert_eq!(distinct_balls(&counting_line(4).unwrap()).len(), 9);
    }

    #[test]
    fn one_ball_bracket() {
        let s = counting_line(1).unwrap();
        let b = OracleBudget::default();
        for mode in [SearchMode::Expand, SearchMode::Generalized, SearchMode::WeakContract] {
            let br = brute_boman_constant(&s, 2.0, mode, &b).unwrap();
            assert!((br.lower - 1.0).abs() < 1e-15 && (br.upper - 1.0).abs() < 1e-12, "{mode:?} {br:?}");
        }
        let w = brute_weak_constant(&s, &OperatorSpec::centered(), 2.0, &b).unwrap();
        assert!((w.lower - 1.0).abs() < 1e-6);
    }

    #[test]
    fn two_atom_bracket() {
        let s = counting_line(2).unwrap();
        let br = brute_boman_constant(&s, 2.0, SearchMode::Expand, &OracleBudget::default()).unwrap();
        assert!(br.lower >= 1.0 && br.lower <= br.upper);
    }

    #[test]
    fn unit_ball_overlap() {
        let s: MetricMeasureSpace = AtomicSpace::new(vec![vec![0.0], vec![5.0]], vec![1.0, 3.0], Metric::L1).unwrap().into();
        let f = BallFamily::plain(vec![Ball::atom(0, 1.0)]).unwrap();
        assert!((exact_overlap(&s, &f, Realization::Base, 2.0, &OracleBudget::default()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum() {
        assert_eq!(ksum([1e16, 1.0, -1e16]), 1.0);
    }

    #[test]
    fn weak_below_strong_on_grid() {
        let s = counting_line(4).unwrap();
        let b = OracleBudget::default();
        let w = brute_weak_constant(&s, &OperatorSpec::centered(), 2.0, &b).unwrap();
        let st = brute_strong_constant(&s, &OperatorSpec::centered(), 2.0, &b).unwrap();
        assert!(w.lower <= st.lower * (1.0 + 1e-12));
    }

    #[test]
    fn single_atom_suite() {
        let s = counting_line(1).unwrap();
        let r = theorem_consistency_suite(&s, 2.0, &OracleBudget::default()).unwrap();
        assert!(r.passed(), "{:?}", r.violations);
    }
}
