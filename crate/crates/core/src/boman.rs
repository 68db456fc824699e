//! Overlap functionals and Boman-type ratios.
//!
//! A family of balls `B_n` with weights `w_n` defines the overlap function
//! `sum_n w_n 1_{S_n} / mu(S_n)`, where `S_n` is the base ball, its dilation,
//! its contraction or a chosen subset `E_n`. The ratios compare `L^p` norms
//! of two realizations of the same family.
//!
//! Both backends reduce to a common arrangement: disjoint cells with masses
//! and, for each realized set, the cells it covers. On atoms the cells are
//! the atoms; on segments they are the elementary intervals cut out by the
//! traces of all sets.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::maximal::{enumerate_distinct_balls, lp_norm};
use crate::num::{exponent, Real};
use crate::report::EstimateReport;
use crate::rng;
use crate::space::{AtomicSpace, Ball, Closure, MetricMeasureSpace, SegmentSpace, Trace};
use crate::tol;
use crate::{Error, Result};

/// Largest family accepted by any ratio or search.
pub const MAX_FAMILY: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BallFamily {
    pub balls: Vec<Ball>,
    pub weights: Vec<f64>,
    pub dilations: Vec<f64>,
    pub base_sets: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    Base,
    Dilated,
    Contracted,
    BaseSets,
}

impl BallFamily {
    pub fn new(balls: Vec<Ball>, weights: Vec<f64>, dilations: Vec<f64>) -> Result<Self> {
        let f = BallFamily { balls, weights, dilations, base_sets: None };
        f.validate()?;
        Ok(f)
    }

    pub fn with_base_sets(mut self, sets: Vec<Vec<usize>>) -> Result<Self> {
        self.base_sets = Some(sets);
        self.validate()?;
        Ok(self)
    }

    /// Unit weights and no dilation.
    pub fn plain(balls: Vec<Ball>) -> Result<Self> {
        let n = balls.len();
        BallFamily::new(balls, vec![1.0; n], vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.balls.len();
        if n == 0 {
            return Err(Error::InvalidFamily("family is empty".into()));
        }
        if n > MAX_FAMILY {
            return Err(Error::TooLarge { what: "family size", got: n, limit: MAX_FAMILY });
        }
        if self.weights.len() != n || self.dilations.len() != n {
            return Err(Error::InvalidFamily(format!(
                "{n} balls, {} weights, {} dilations",
                self.weights.len(),
                self.dilations.len()
            )));
        }
        if let Some(i) = self.weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidFamily(format!("weight {i} is not positive")));
        }
        if let Some(i) = self.dilations.iter().position(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidFamily(format!("dilation {i} is not positive")));
        }
        if let Some(sets) = &self.base_sets {
            if sets.len() != n {
                return Err(Error::InvalidFamily(format!("{n} balls but {} base sets", sets.len())));
            }
            if let Some(i) = sets.iter().position(Vec::is_empty) {
                return Err(Error::ZeroMeasure { index: i });
            }
        }
        Ok(())
    }

    fn check_realization(&self, realization: Realization) -> Result<()> {
        match realization {
            Realization::Dilated => {
                if let Some(i) = self.dilations.iter().position(|&t| t < 1.0) {
                    return Err(Error::InvalidFamily(format!("dilation {i} is below 1")));
                }
            }
            Realization::Contracted => {
                if let Some(i) = self.dilations.iter().position(|&t| t > 1.0) {
                    return Err(Error::InvalidFamily(format!("contraction {i} exceeds 1")));
                }
            }
            Realization::BaseSets if self.base_sets.is_none() => {
                return Err(Error::InvalidFamily("family has no base sets".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// The set `S_n` of a realization, as a ball.
    pub fn realized_ball(&self, n: usize, realization: Realization) -> Ball {
        match realization {
            Realization::Dilated | Realization::Contracted => self.balls[n].scaled(self.dilations[n]),
            _ => self.balls[n].clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FamilyJson {
    balls: Vec<Ball>,
    #[serde(default)]
    weights: Option<Vec<Real>>,
    #[serde(default)]
    dilations: Option<Vec<Real>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base_sets: Option<Vec<Vec<usize>>>,
}

impl Serialize for BallFamily {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let wrap = |v: &[f64]| Some(v.iter().map(|&x| Real(x)).collect());
        FamilyJson {
            balls: self.balls.clone(),
            weights: wrap(&self.weights),
            dilations: wrap(&self.dilations),
            base_sets: self.base_sets.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BallFamily {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FamilyJson::deserialize(d)?;
        let n = raw.balls.len();
        let unwrap = |v: Option<Vec<Real>>| v.map_or(vec![1.0; n], |v| v.into_iter().map(f64::from).collect());
        let family = BallFamily {
            balls: raw.balls,
            weights: unwrap(raw.weights),
            dilations: unwrap(raw.dilations),
            base_sets: raw.base_sets,
        };
        family.validate().map_err(serde::de::Error::custom)?;
        Ok(family)
    }
}

/// Disjoint cells with masses; each realized set covers a list of cells
/// and has measure `set_mass`.
#[derive(Debug, Clone)]
pub(crate) struct Arrangement {
    pub mass: Vec<f64>,
    pub members: Vec<Vec<usize>>,
    pub set_mass: Vec<f64>,
}

impl Arrangement {
    fn atomic(space: &AtomicSpace, sets: Vec<Vec<usize>>) -> Self {
        let set_mass = sets.iter().map(|s| space.set_mass(s)).collect();
        Arrangement { mass: space.masses().to_vec(), members: sets, set_mass }
    }

    fn segments(space: &SegmentSpace, traces: &[Vec<Trace>]) -> Self {
        let mut per_segment: HashMap<usize, Vec<f64>> = HashMap::new();
        for t in traces.iter().flatten() {
            let cuts = per_segment.entry(t.segment).or_default();
            cuts.push(t.lo);
            cuts.push(t.hi);
        }
        let mut keys: Vec<usize> = per_segment.keys().copied().collect();
        keys.sort_unstable();
        let mut mass = Vec::new();
        let mut cell_range = HashMap::new();
        let mut cuts_of = HashMap::new();
        for k in keys {
            let mut cuts = per_segment.remove(&k).unwrap();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let start = mass.len();
            let density = space.segments()[k].density;
            for w in cuts.windows(2) {
                mass.push(density * (w[1] - w[0]));
            }
            cell_range.insert(k, start);
            cuts_of.insert(k, cuts);
        }
        let members = traces
            .iter()
            .map(|ts| {
                let mut cells = Vec::new();
                for t in ts {
                    let cuts = &cuts_of[&t.segment];
                    let start = cell_range[&t.segment];
                    let a = cuts.partition_point(|&c| c < t.lo);
                    let b = cuts.partition_point(|&c| c < t.hi);
                    cells.extend((a..b).map(|c| start + c));
                }
                cells
            })
            .collect();
        let set_mass = traces.iter().map(|ts| space.trace_mass(ts)).collect();
        Arrangement { mass, members, set_mass }
    }

    /// Merges cells covered by exactly the same sets.
    pub fn compress(&self) -> Arrangement {
        let mut covering: Vec<Vec<u32>> = vec![Vec::new(); self.mass.len()];
        for (s, cells) in self.members.iter().enumerate() {
            for &c in cells {
                covering[c].push(s as u32);
            }
        }
        let mut id: HashMap<&[u32], usize> = HashMap::new();
        let mut mass = Vec::new();
        let mut members = vec![Vec::new(); self.members.len()];
        for (c, sets) in covering.iter().enumerate() {
            if sets.is_empty() || self.mass[c] == 0.0 {
                continue;
            }
            let next = id.len();
            let k = *id.entry(sets.as_slice()).or_insert_with(|| {
                mass.push(0.0);
                for &s in sets {
                    members[s as usize].push(next);
                }
                next
            });
            mass[k] += self.mass[c];
        }
        Arrangement { mass, members, set_mass: self.set_mass.clone() }
    }

    /// Overlap values per cell for sets `offset..offset + w.len()`.
    pub fn values(&self, offset: usize, w: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.mass.len()];
        for (n, &wn) in w.iter().enumerate() {
            let coef = wn / self.set_mass[offset + n];
            for &c in &self.members[offset + n] {
                v[c] += coef;
            }
        }
        v
    }

    /// `L^p` norm over cells of positive mass.
    pub fn norm(&self, values: &[f64], p: f64) -> f64 {
        if p.is_infinite() {
            return values.iter().zip(&self.mass).filter(|(_, m)| **m > 0.0).map(|(v, _)| *v).fold(0.0, f64::max);
        }
        lp_norm(values, &self.mass, p)
    }
}

fn check_p(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("exponent must be in [1, inf], got {p}")))
    }
}

fn atomic_sets(space: &AtomicSpace, family: &BallFamily, realization: Realization) -> Result<Vec<Vec<usize>>> {
    family.check_realization(realization)?;
    (0..family.len())
        .map(|n| {
            let members = space.ball_members(&family.balls[n])?;
            let set = match realization {
                Realization::BaseSets => {
                    let set = &family.base_sets.as_ref().unwrap()[n];
                    if set.iter().any(|&i| i >= space.len()) {
                        return Err(Error::InvalidFamily(format!("base set {n} has an atom out of range")));
                    }
                    let closed = space.ball_members(&Ball { closure: Closure::Closed, ..family.balls[n].clone() })?;
                    if set.iter().any(|i| closed.binary_search(i).is_err()) {
                        return Err(Error::NotContained { index: n });
                    }
                    let mut set = set.clone();
                    set.sort_unstable();
                    set.dedup();
                    set
                }
                Realization::Base => members,
                _ => space.ball_members(&family.realized_ball(n, realization))?,
            };
            if set.is_empty() {
                return Err(Error::ZeroMeasure { index: n });
            }
            Ok(set)
        })
        .collect()
}

fn segment_traces(space: &SegmentSpace, family: &BallFamily, realization: Realization) -> Result<Vec<Vec<Trace>>> {
    family.check_realization(realization)?;
    if realization == Realization::BaseSets {
        return Err(Error::WrongBackend("atomic"));
    }
    (0..family.len())
        .map(|n| {
            let traces = space.traces(&family.realized_ball(n, realization))?;
            if space.trace_mass(&traces) <= 0.0 {
                return Err(Error::ZeroMeasure { index: n });
            }
            Ok(traces)
        })
        .collect()
}

/// Arrangement holding the sets of each realization in turn.
pub(crate) fn arrangement(
    space: &MetricMeasureSpace,
    family: &BallFamily,
    realizations: &[Realization],
) -> Result<Arrangement> {
    family.validate()?;
    match space {
        MetricMeasureSpace::Atomic(s) => {
            let mut sets = Vec::new();
            for &r in realizations {
                sets.extend(atomic_sets(s, family, r)?);
            }
            Ok(Arrangement::atomic(s, sets))
        }
        MetricMeasureSpace::Segments(s) => {
            let mut traces = Vec::new();
            for &r in realizations {
                traces.extend(segment_traces(s, family, r)?);
            }
            Ok(Arrangement::segments(s, &traces))
        }
    }
}

/// Per-atom values of the overlap function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OverlapFunction(pub Vec<f64>);

pub fn overlap_function(space: &AtomicSpace, family: &BallFamily, realization: Realization) -> Result<OverlapFunction> {
    family.validate()?;
    let a = Arrangement::atomic(space, atomic_sets(space, family, realization)?);
    Ok(OverlapFunction(a.values(0, &family.weights)))
}

/// `|| sum_n w_n 1_{S_n} / mu(S_n) ||_p`. On segments `p = inf` is the
/// essential supremum.
pub fn overlap_norm(space: &MetricMeasureSpace, family: &BallFamily, realization: Realization, p: f64) -> Result<f64> {
    check_p(p)?;
    let a = arrangement(space, family, &[realization])?;
    Ok(a.norm(&a.values(0, &family.weights), p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    #[serde(with = "exponent")]
    pub p: f64,
    pub realization: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn ratio_of(
    space: &MetricMeasureSpace,
    family: &BallFamily,
    top: Realization,
    bottom: Realization,
    p: f64,
    label: &str,
) -> Result<RatioReport> {
    check_p(p)?;
    let lhs = overlap_norm(space, family, top, p)?;
    let rhs = overlap_norm(space, family, bottom, p)?;
    Ok(RatioReport { lhs, rhs, ratio: lhs / rhs, p, realization: label.to_string(), seed: None })
}

/// Dilated over base: the normalized Boman ratio.
pub fn boman_ratio(space: &MetricMeasureSpace, family: &BallFamily, p: f64) -> Result<RatioReport> {
    ratio_of(space, family, Realization::Dilated, Realization::Base, p, "dilated/base")
}

/// Balls over the base sets `E_n`.
pub fn generalized_boman_ratio(space: &MetricMeasureSpace, family: &BallFamily, p: f64) -> Result<RatioReport> {
    ratio_of(space, family, Realization::Base, Realization::BaseSets, p, "base/base_sets")
}

/// Base over dilated.
pub fn reverse_boman_ratio(space: &MetricMeasureSpace, family: &BallFamily, p: f64) -> Result<RatioReport> {
    ratio_of(space, family, Realization::Base, Realization::Dilated, p, "base/dilated")
}

/// Base over contracted.
pub fn contracted_boman_ratio(space: &MetricMeasureSpace, family: &BallFamily, p: f64) -> Result<RatioReport> {
    ratio_of(space, family, Realization::Base, Realization::Contracted, p, "base/contracted")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionThreshold {
    /// `T` with `mu B(x, (1 + T) r) < 2 mu B(x, r)`; `None` when no positive
    /// growth keeps the measure below the double.
    pub threshold: Option<f64>,
    pub base_measure: f64,
    pub grown_measure: Option<f64>,
    /// Smallest distance beyond `r` at which the measure doubles.
    pub doubling_distance: Option<f64>,
}

/// For each closed ball, the largest relative growth `T < 1` (shrunk by
/// `margin`) keeping the measure strictly below twice the original.
pub fn find_contraction_thresholds(space: &AtomicSpace, balls: &[Ball], margin: f64) -> Result<Vec<ContractionThreshold>> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidParameter(format!("margin must lie in (0, 1), got {margin}")));
    }
    balls
        .iter()
        .map(|ball| {
            if ball.closure != Closure::Closed {
                return Err(Error::InvalidBall("thresholds are defined for closed balls".into()));
            }
            let members = space.ball_members(ball)?;
            let c = space.resolve(&ball.center)?;
            let r = ball.radius;
            let base = space.set_mass(&members);
            let nb = space.neighborhood(c);
            let mut star = None;
            let mut mass = 0.0;
            let mut k = 0;
            for j in 0..nb.levels() {
                while k < nb.level_end[j] {
                    mass += space.mass(nb.order[k]);
                    k += 1;
                }
                if !tol::le(nb.level_radius[j], r) && mass >= 2.0 * base {
                    star = Some(nb.level_radius[j]);
                    break;
                }
            }
            let raw = match star {
                Some(d) => (1.0 - margin) * (d - r).min(r) / r,
                None => 1.0 - margin,
            };
            let grown = space.set_mass(&space.members(c, (1.0 + raw) * r, Closure::Closed));
            let ok = raw > 0.0 && grown < 2.0 * base;
            Ok(ContractionThreshold {
                threshold: ok.then_some(raw),
                base_measure: base,
                grown_measure: ok.then_some(grown),
                doubling_distance: star,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Expand,
    Generalized,
    WeakContract,
}

impl SearchMode {
    fn realizations(self) -> (Realization, Realization) {
        match self {
            SearchMode::Expand => (Realization::Dilated, Realization::Base),
            SearchMode::Generalized => (Realization::Base, Realization::BaseSets),
            SearchMode::WeakContract => (Realization::Base, Realization::Contracted),
        }
    }

    fn evaluate(self, space: &MetricMeasureSpace, family: &BallFamily, p: f64) -> Result<RatioReport> {
        match self {
            SearchMode::Expand => boman_ratio(space, family, p),
            SearchMode::Generalized => generalized_boman_ratio(space, family, p),
            SearchMode::WeakContract => contracted_boman_ratio(space, family, p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Number of random families tried.
    pub families: usize,
    pub max_family_size: usize,
    pub iterations: usize,
    pub restarts: usize,
    pub t_max: f64,
    pub seed: u64,
    /// Pool of balls to draw from; all distinct balls of an atomic space
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<Ball>>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { families: 200, max_family_size: 6, iterations: 200, restarts: 5, t_max: 8.0, seed: 0, candidates: None }
    }
}

/// Weighted ratio `||A w||_p / ||B w||_p` on a compressed arrangement whose
/// first `n` sets form `A` and next `n` sets form `B`.
pub(crate) struct WeightProblem {
    arr: Arrangement,
    n: usize,
    p: f64,
}

impl WeightProblem {
    pub fn new(arr: &Arrangement, n: usize, p: f64) -> Self {
        WeightProblem { arr: arr.compress(), n, p }
    }

    pub fn ratio_at(&self, w: &[f64], p: f64) -> f64 {
        let top = self.arr.norm(&self.arr.values(0, w), p);
        let bottom = self.arr.norm(&self.arr.values(self.n, w), p);
        top / bottom
    }

    pub fn ratio(&self, w: &[f64]) -> f64 {
        self.ratio_at(w, self.p)
    }

    /// `d log ||S w||_p / d w_i` up to the common factor, for sets at
    /// `offset`.
    fn gradient(&self, offset: usize, w: &[f64], p: f64) -> Vec<f64> {
        let v = self.arr.values(offset, w);
        let peak = v.iter().copied().fold(0.0, f64::max);
        let u: Vec<f64> = v.iter().map(|x| x / peak).collect();
        let total: f64 = u.iter().zip(&self.arr.mass).map(|(x, m)| x.powf(p) * m).sum();
        (0..self.n)
            .map(|i| {
                let s = offset + i;
                let acc: f64 = self.arr.members[s].iter().map(|&c| u[c].powf(p - 1.0) * self.arr.mass[c]).sum();
                acc / (self.arr.set_mass[s] * total)
            })
            .collect()
    }

    /// Multiplicative ascent `w_i <- w_i (a_i / b_i)^eta` with backtracking.
    /// `p = inf` is approached through a large finite exponent while the
    /// true ratio is tracked.
    pub fn ascend(&self, mut w: Vec<f64>, iterations: usize) -> (f64, Vec<f64>) {
        let p_eff = if self.p.is_infinite() { 64.0 } else { self.p };
        normalize(&mut w);
        let mut best = (self.ratio(&w), w.clone());
        if self.p == 1.0 {
            return best;
        }
        let mut current = self.ratio_at(&w, p_eff);
        let mut eta = 1.0;
        for _ in 0..iterations {
            let a = self.gradient(0, &w, p_eff);
            let b = self.gradient(self.n, &w, p_eff);
            let mut accepted = false;
            for _ in 0..20 {
                let mut next: Vec<f64> = w
                    .iter()
                    .zip(a.iter().zip(&b))
                    .map(|(wi, (ai, bi))| if *wi > 0.0 { wi * (ai / bi).powf(eta) } else { 0.0 })
                    .collect();
                if next.iter().any(|x| !x.is_finite()) {
                    eta *= 0.5;
                    continue;
                }
                normalize(&mut next);
                let value = self.ratio_at(&next, p_eff);
                if value >= current {
                    accepted = value > current * (1.0 + 1e-15);
                    w = next;
                    current = value;
                    eta = (eta * 2.0).min(4.0);
                    break;
                }
                eta *= 0.5;
            }
            let truth = self.ratio(&w);
            if truth > best.0 {
                best = (truth, w.clone());
            }
            if !accepted {
                break;
            }
        }
        best
    }
}

fn normalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|x| *x /= s);
    }
}

fn draw_family(
    space: &MetricMeasureSpace,
    pool: &[Ball],
    mode: SearchMode,
    config: &SearchConfig,
    rng: &mut rng::Rng,
) -> Result<BallFamily> {
    let size = rng.gen_range(1..=config.max_family_size.min(pool.len()).max(1));
    let picks = sample(rng, pool.len(), size);
    let balls: Vec<Ball> = picks.iter().map(|i| pool[i].clone()).collect();
    let mut dilations = vec![1.0; size];
    let mut base_sets = None;
    match mode {
        SearchMode::Expand => {
            for t in dilations.iter_mut() {
                *t = config.t_max.powf(rng.gen::<f64>());
            }
        }
        SearchMode::Generalized => {
            let atomic = space.as_atomic()?;
            let mut sets = Vec::with_capacity(size);
            for b in &balls {
                let members = atomic.ball_members(b)?;
                sets.push(vec![members[rng.gen_range(0..members.len())]]);
            }
            base_sets = Some(sets);
        }
        SearchMode::WeakContract => {
            let atomic = space.as_atomic()?;
            for (t, b) in dilations.iter_mut().zip(&balls) {
                let c = atomic.resolve(&b.center)?;
                let nearest = atomic.neighborhood(c).level_radius.get(1).copied().unwrap_or(b.radius);
                *t = (0.5 * nearest / b.radius).min(1.0);
            }
        }
    }
    Ok(BallFamily { balls, weights: vec![1.0; size], dilations, base_sets })
}

struct Trial {
    ratio: f64,
    family: BallFamily,
}

fn run_trial(space: &MetricMeasureSpace, pool: &[Ball], mode: SearchMode, p: f64, config: &SearchConfig, index: usize) -> Result<Trial> {
    let mut rng = rng::stream(config.seed, index as u64);
    let mut family = draw_family(space, pool, mode, config, &mut rng)?;
    let (top, bottom) = mode.realizations();
    let arr = arrangement(space, &family, &[top, bottom])?;
    let problem = WeightProblem::new(&arr, family.len(), p);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..config.restarts.max(1) {
        let start: Vec<f64> = if restart == 0 {
            vec![1.0; family.len()]
        } else {
            (0..family.len()).map(|_| (4.0 * (rng.gen::<f64>() - 0.5)).exp()).collect()
        };
        let found = problem.ascend(start, config.iterations);
        if best.as_ref().is_none_or(|b| found.0 > b.0) {
            best = Some(found);
        }
    }
    let (_, w) = best.unwrap();
    let keep: Vec<usize> = (0..family.len()).filter(|&i| w[i] > 0.0).collect();
    family = BallFamily {
        balls: keep.iter().map(|&i| family.balls[i].clone()).collect(),
        weights: keep.iter().map(|&i| w[i]).collect(),
        dilations: keep.iter().map(|&i| family.dilations[i]).collect(),
        base_sets: family.base_sets.map(|s| keep.iter().map(|&i| s[i].clone()).collect()),
    };
    let ratio = mode.evaluate(space, &family, p)?.ratio;
    Ok(Trial { ratio, family })
}

/// Lower bound on the best Boman constant by random families and weight
/// ascent. Deterministic for a fixed seed.
pub fn estimate_boman_constant(space: &MetricMeasureSpace, p: f64, mode: SearchMode, config: &SearchConfig) -> Result<EstimateReport> {
    check_p(p)?;
    if config.families == 0 || config.max_family_size == 0 {
        return Err(Error::ZeroBudget);
    }
    if !(config.t_max >= 1.0) {
        return Err(Error::InvalidParameter("t_max must be at least 1".into()));
    }
    let pool = match (&config.candidates, space) {
        (Some(c), _) => c.clone(),
        (None, MetricMeasureSpace::Atomic(s)) => enumerate_distinct_balls(s),
        (None, MetricMeasureSpace::Segments(_)) => {
            return Err(Error::InvalidParameter("segment spaces need explicit candidate balls".into()))
        }
    };
    if pool.is_empty() {
        return Err(Error::InvalidFamily("no candidate balls".into()));
    }
    if pool.len() > MAX_FAMILY {
        return Err(Error::TooLarge { what: "candidate pool", got: pool.len(), limit: MAX_FAMILY });
    }
    let trials: Vec<Trial> = (0..config.families)
        .into_par_iter()
        .map(|i| run_trial(space, &pool, mode, p, config, i))
        .collect::<Result<_>>()?;
    let (index, best) = trials
        .iter()
        .enumerate()
        .fold(None::<(usize, &Trial)>, |acc, (i, t)| match acc {
            Some((_, b)) if b.ratio >= t.ratio => acc,
            _ => Some((i, t)),
        })
        .unwrap();
    Ok(EstimateReport {
        quantity: format!("boman_constant_lower_bound[{}]", serde_json::to_value(mode)?.as_str().unwrap_or("")),
        value: best.ratio,
        witness: json!({ "family": best.family, "trial": index }),
        params: json!({ "p": if p.is_infinite() { json!("inf") } else { json!(p) }, "mode": mode, "t_max": config.t_max }),
        seed: config.seed,
        budget: json!({
            "families": config.families,
            "max_family_size": config.max_family_size,
            "iterations": config.iterations,
            "restarts": config.restarts,
            "pool": pool.len(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{Center, Metric, Segment};

    fn line(n: usize) -> AtomicSpace {
        AtomicSpace::new((0..n).map(|i| vec![i as f64]).collect(), vec![1.0; n], Metric::L1).unwrap()
    }

    fn real_line() -> MetricMeasureSpace {
        SegmentSpace::new(vec![Segment { height: 0.0, x_lo: -64.0, x_hi: 64.0, density: 1.0 }]).unwrap().into()
    }

    fn origin(r: f64) -> Ball {
        Ball::closed(Center::Point(vec![0.0, 0.0]), r)
    }

    #[test]
    fn unit_ball_norm_is_one() {
        let s: MetricMeasureSpace =
            AtomicSpace::new(vec![vec![0.0], vec![3.0]], vec![1.0, 1.0], Metric::L1).unwrap().into();
        let f = BallFamily::plain(vec![Ball::atom(0, 1.0)]).unwrap();
        for p in [1.0, 1.5, 2.0, 7.0, f64::INFINITY] {
            assert!((overlap_norm(&s, &f, Realization::Base, p).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn segment_line_ball_norms() {
        let s = real_line();
        let f = BallFamily::new(vec![origin(1.0)], vec![1.0], vec![8.0]).unwrap();
        let base = overlap_norm(&s, &f, Realization::Base, 2.0).unwrap();
        let dil = overlap_norm(&s, &f, Realization::Dilated, 2.0).unwrap();
        assert!((base - 0.5f64.sqrt()).abs() <= 1e-15);
        assert!((dil - 0.25).abs() <= 1e-15);
        let rev = reverse_boman_ratio(&s, &f, 2.0).unwrap();
        assert!((rev.ratio - 2f64.powf(1.5)).abs() <= 1e-12 * rev.ratio);
        let fwd = boman_ratio(&s, &f, 2.0).unwrap();
        assert!((fwd.ratio - 2f64.powf(-1.5)).abs() <= 1e-12);
    }

    #[test]
    fn unit_dilations_give_ratio_one() {
        let s: MetricMeasureSpace = line(5).into();
        let f = BallFamily::new(vec![Ball::atom(0, 1.0), Ball::atom(3, 2.0)], vec![0.5, 2.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(boman_ratio(&s, &f, 2.0).unwrap().ratio, 1.0);
        let g = f.clone().with_base_sets(vec![vec![0, 1], vec![1, 2, 3, 4]]).unwrap();
        assert_eq!(generalized_boman_ratio(&s, &g, 3.0).unwrap().ratio, 1.0);
    }

    #[test]
    fn p_one_sums_weights() {
        let s: MetricMeasureSpace = line(6).into();
        let f = BallFamily::new(vec![Ball::atom(0, 1.0), Ball::atom(4, 1.0)], vec![0.25, 3.0], vec![3.0, 2.0]).unwrap();
        for r in [Realization::Base, Realization::Dilated] {
            assert!((overlap_norm(&s, &f, r, 1.0).unwrap() - 3.25).abs() < 1e-15);
        }
    }

    #[test]
    fn base_sets_must_be_contained() {
        let s: MetricMeasureSpace = line(5).into();
        let f = BallFamily::plain(vec![Ball::atom(0, 1.0)]).unwrap().with_base_sets(vec![vec![3]]).unwrap();
        assert!(matches!(generalized_boman_ratio(&s, &f, 2.0), Err(Error::NotContained { index: 0 })));
        assert!(BallFamily::plain(vec![Ball::atom(0, 1.0)]).unwrap().with_base_sets(vec![vec![]]).is_err());
    }

    #[test]
    fn contraction_missing_all_atoms_is_an_error() {
        let s: MetricMeasureSpace = line(3).into();
        let f = BallFamily::new(vec![Ball::open(Center::Atom(0), 1.0)], vec![1.0], vec![1e-12]).unwrap();
        assert!(matches!(overlap_norm(&s, &f, Realization::Contracted, 2.0), Err(Error::ZeroMeasure { index: 0 })));
    }

    #[test]
    fn dilation_mode_is_checked() {
        let s: MetricMeasureSpace = line(3).into();
        let f = BallFamily::new(vec![Ball::atom(0, 1.0)], vec![1.0], vec![0.5]).unwrap();
        assert!(boman_ratio(&s, &f, 2.0).is_err());
    }

    #[test]
    fn thresholds_on_integer_line() {
        let s = line(7);
        let t = find_contraction_thresholds(&s, &[Ball::atom(3, 0.5)], 0.1).unwrap();
        assert!((t[0].threshold.unwrap() - 0.9).abs() < 1e-12);
        let far = AtomicSpace::new(vec![vec![0.0], vec![10.0]], vec![1.0, 1.0], Metric::L1).unwrap();
        let t = find_contraction_thresholds(&far, &[Ball::atom(0, 1.0)], 0.25).unwrap();
        assert!((t[0].threshold.unwrap() - 0.75).abs() < 1e-12);
        assert!(find_contraction_thresholds(&s, &[Ball::atom(0, 1.0)], 1.0).is_err());
    }

    #[test]
    fn single_ball_space_has_constant_one() {
        let s: MetricMeasureSpace = AtomicSpace::new(vec![vec![0.0]], vec![2.0], Metric::L1).unwrap().into();
        let cfg = SearchConfig { families: 4, ..Default::default() };
        let r = estimate_boman_constant(&s, 2.0, SearchMode::Expand, &cfg).unwrap();
        assert!((r.value - 1.0).abs() < 1e-15);
        let zero = SearchConfig { families: 0, ..Default::default() };
        assert!(matches!(estimate_boman_constant(&s, 2.0, SearchMode::Expand, &zero), Err(Error::ZeroBudget)));
    }

    #[test]
    fn search_witness_reproduces() {
        let s: MetricMeasureSpace = line(6).into();
        let cfg = SearchConfig { families: 12, seed: 7, ..Default::default() };
        for mode in [SearchMode::Expand, SearchMode::Generalized, SearchMode::WeakContract] {
            let r = estimate_boman_constant(&s, 2.0, mode, &cfg).unwrap();
            let fam: BallFamily = serde_json::from_value(r.witness["family"].clone()).unwrap();
            let again = mode.evaluate(&s, &fam, 2.0).unwrap().ratio;
            assert!((again - r.value).abs() <= 1e-12 * r.value, "{mode:?}");
            assert!(r.value >= 1.0 - 1e-12);
            let twice = estimate_boman_constant(&s, 2.0, mode, &cfg).unwrap();
            assert_eq!(twice, r);
        }
    }

    #[test]
    fn family_json_with_fractions() {
        let json = r#"{"balls":[{"center":[0,0],"radius":"1/2"}],"weights":["3/4"],"dilations":[2]}"#;
        let f: BallFamily = serde_json::from_str(json).unwrap();
        assert_eq!(f.balls[0].radius, 0.5);
        assert_eq!(f.weights, vec![0.75]);
        let back: BallFamily = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<BallFamily>(r#"{"balls":[]}"#).is_err());
    }
}
