//! Doubling constants, operator-norm lower bounds and closed-form bounds.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::maximal::{
    enumerate_distinct_balls, k_for_expansion, lp_norm, maximal_function, maximal_with_argmax, Argmax, OperatorSpec,
    TestFunction,
};
use crate::report::EstimateReport;
use crate::rng;
use crate::space::{AtomicSpace, Ball, Center, Closure};
use crate::tol;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub constant: f64,
    pub witness_center: usize,
    pub witness_radius: f64,
    pub r_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subset: Option<Vec<usize>>,
    pub closure: Closure,
}

impl DoublingReport {
    /// Recomputes `mu B(x, 2r) / mu B(x, r)` at the witness.
    pub fn reevaluate(&self, space: &AtomicSpace) -> f64 {
        doubling_ratio(space, self.witness_center, self.witness_radius, self.closure)
    }
}

pub fn doubling_ratio(space: &AtomicSpace, center: usize, r: f64, closure: Closure) -> f64 {
    let m = |radius| space.set_mass(&space.members(center, radius, closure));
    m(2.0 * r) / m(r)
}

/// `sup mu B(x, 2r) / mu B(x, r)` over centers (in `subset` when given) and
/// radii `r > r_min`.
///
/// The ratio is piecewise constant in `r` with breaks at the distances
/// `d` and at `d / 2`; one radius inside each piece is examined.
pub fn doubling_constant(space: &AtomicSpace, r_min: f64, subset: Option<&[usize]>, closure: Closure) -> Result<DoublingReport> {
    if !(r_min >= 0.0 && r_min.is_finite()) {
        return Err(Error::InvalidParameter(format!("r_min must be finite and >= 0, got {r_min}")));
    }
    let centers: Vec<usize> = match subset {
        Some([]) => return Err(Error::InvalidParameter("subset is empty".into())),
        Some(s) => {
            if let Some(&i) = s.iter().find(|&&i| i >= space.len()) {
                return Err(Error::InvalidParameter(format!("subset atom {i} out of range")));
            }
            let mut s = s.to_vec();
            s.sort_unstable();
            s.dedup();
            s
        }
        None => (0..space.len()).collect(),
    };
    let (constant, witness_center, witness_radius) = centers
        .par_iter()
        .map(|&x| best_radius(space, x, r_min, closure))
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX, 0.0),
            |a, b| if a.0 > b.0 || (a.0 == b.0 && (a.1, a.2) <= (b.1, b.2)) { a } else { b },
        );
    Ok(DoublingReport {
        constant,
        witness_center,
        witness_radius,
        r_min,
        subset: subset.map(|_| centers),
        closure,
    })
}

fn best_radius(space: &AtomicSpace, x: usize, r_min: f64, closure: Closure) -> (f64, usize, f64) {
    let nb = space.neighborhood(x);
    let mut prefix = Vec::with_capacity(nb.order.len() + 1);
    prefix.push(0.0);
    for &i in &nb.order {
        prefix.push(prefix.last().unwrap() + space.mass(i));
    }
    let mut cuts: Vec<f64> = nb.level_radius.iter().filter(|&&d| d > 0.0).flat_map(|&d| [d, 0.5 * d]).collect();
    cuts.push(r_min);
    cuts.retain(|&c| c >= r_min);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut probes: Vec<f64> = cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    probes.push(cuts.last().unwrap() + 1.0);
    let mut best = (f64::NEG_INFINITY, x, 0.0);
    for r in probes {
        if !(r > r_min) {
            continue;
        }
        let ratio = prefix[nb.count(2.0 * r, closure)] / prefix[nb.count(r, closure)];
        if ratio > best.0 || (ratio == best.0 && r < best.2) {
            best = (ratio, x, r);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    IndicatorSweep,
    Random,
    Ascent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSearch {
    pub strategy: Strategy,
    /// Test functions per strategy: sampled balls for the sweep, random
    /// functions for the random strategy.
    pub budget: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Extra sets whose indicators the sweep always tries.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<Vec<usize>>,
}

impl Default for NormSearch {
    fn default() -> Self {
        NormSearch { strategy: Strategy::IndicatorSweep, budget: 64, restarts: 8, iterations: 300, seed: 0, candidates: Vec::new() }
    }
}

impl NormSearch {
    pub fn sweep(budget: usize, seed: u64) -> Self {
        NormSearch { budget, seed, ..Default::default() }
    }

    pub fn with_strategy(self, strategy: Strategy) -> Self {
        NormSearch { strategy, ..self }
    }

    pub fn with_candidates(self, candidates: Vec<Vec<usize>>) -> Self {
        NormSearch { candidates, ..self }
    }
}

/// `||T g||_p / ||g||_p`.
pub fn strong_ratio(space: &AtomicSpace, spec: &OperatorSpec, g: &TestFunction, p: f64) -> Result<f64> {
    let tg = maximal_function(space, g, spec)?;
    Ok(lp_norm(&tg.0, space.masses(), p) / g.norm(space, p))
}

/// `alpha mu{T g > alpha}^(1/p) / ||g||_p`.
pub fn weak_score(space: &AtomicSpace, spec: &OperatorSpec, g: &TestFunction, alpha: f64, p: f64) -> Result<f64> {
    let tg = maximal_function(space, g, spec)?;
    Ok(weak_from_values(space, &tg.0, alpha, p) / g.norm(space, p))
}

fn weak_from_values(space: &AtomicSpace, tg: &[f64], alpha: f64, p: f64) -> f64 {
    let level: f64 = tg.iter().zip(space.masses()).filter(|(v, _)| **v > alpha).map(|(_, m)| m).sum();
    alpha * level.powf(1.0 / p)
}

/// Best level `alpha` for fixed values of `T g`: just below one of them.
fn best_alpha(space: &AtomicSpace, tg: &[f64], p: f64) -> (f64, f64) {
    let mut order: Vec<usize> = (0..tg.len()).collect();
    order.sort_by(|&a, &b| tg[b].total_cmp(&tg[a]));
    let mut best = (0.0, 0.0);
    let mut k = 0;
    while k < order.len() {
        let v = tg[order[k]];
        if v <= 0.0 {
            break;
        }
        while k < order.len() && tg[order[k]] >= v {
            k += 1;
        }
        let alpha = v - tol::tie_eps(v);
        if alpha > 0.0 {
            let score = weak_from_values(space, tg, alpha, p);
            if score > best.0 {
                best = (score, alpha);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Strong,
    Weak,
}

struct Tried {
    score: f64,
    alpha: Option<f64>,
    g: Vec<f64>,
    source: &'static str,
    index: usize,
}

fn evaluate(space: &AtomicSpace, spec: &OperatorSpec, p: f64, kind: Kind, g: Vec<f64>, source: &'static str, index: usize) -> Result<Option<Tried>> {
    let gf = TestFunction::new(g)?;
    let norm = gf.norm(space, p);
    if norm == 0.0 {
        return Ok(None);
    }
    let tg = maximal_function(space, &gf, spec)?;
    let (score, alpha) = match kind {
        Kind::Strong => (lp_norm(&tg.0, space.masses(), p) / norm, None),
        Kind::Weak => {
            let (s, a) = best_alpha(space, &tg.0, p);
            (s / norm, Some(a))
        }
    };
    Ok(Some(Tried { score, alpha, g: gf.0, source, index }))
}

fn keep_best(best: &mut Option<Tried>, t: Option<Tried>) {
    if let Some(t) = t {
        if best.as_ref().is_none_or(|b| t.score > b.score) {
            *best = Some(t);
        }
    }
}

/// Above this size the sweep samples balls instead of listing them all.
const EXHAUSTIVE_SWEEP_ATOMS: usize = 2000;

/// Seeded draws of (center, level) pairs, without repeats.
fn sampled_balls(space: &AtomicSpace, budget: usize, seed: u64) -> Vec<Ball> {
    let mut rng = rng::stream(seed, u64::MAX);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for _ in 0..budget.saturating_mul(4) {
        if out.len() >= budget {
            break;
        }
        let c = rng.gen_range(0..space.len());
        let nb = space.neighborhood(c);
        let j = rng.gen_range(0..nb.levels());
        if seen.insert((c, j)) {
            let r = if j == 0 { nb.level_radius.get(1).map_or(1.0, |d| 0.5 * d) } else { nb.level_radius[j] };
            out.push(Ball::closed(Center::Atom(c), r));
        }
    }
    out
}

fn sweep_sets(space: &AtomicSpace, config: &NormSearch) -> Result<Vec<Vec<usize>>> {
    let n = space.len();
    let mut sets = vec![(0..n).collect::<Vec<_>>()];
    sets.extend(config.candidates.iter().cloned());
    if let Some(bad) = sets.iter().flatten().find(|&&i| i >= n) {
        return Err(Error::InvalidParameter(format!("candidate atom {bad} out of range")));
    }
    let balls = if n <= EXHAUSTIVE_SWEEP_ATOMS {
        let mut balls = enumerate_distinct_balls(space);
        balls.shuffle(&mut rng::stream(config.seed, u64::MAX));
        balls
    } else {
        sampled_balls(space, config.budget, config.seed)
    };
    for ball in balls.iter().take(config.budget) {
        let members = space.ball_members(ball)?;
        let mut inside = vec![false; n];
        members.iter().for_each(|&i| inside[i] = true);
        sets.push(members);
        let complement: Vec<usize> = (0..n).filter(|&i| !inside[i]).collect();
        if !complement.is_empty() {
            sets.push(complement);
        }
    }
    Ok(sets)
}

fn random_function(n: usize, rng: &mut rng::Rng) -> Vec<f64> {
    match rng.gen_range(0..3) {
        0 => (0..n).map(|_| rng.gen::<f64>()).collect(),
        1 => {
            let density = rng.gen::<f64>().max(1.0 / n as f64);
            (0..n).map(|_| if rng.gen::<f64>() < density { rng.gen::<f64>() + 0.5 } else { 0.0 }).collect()
        }
        _ => (0..n).map(|_| (6.0 * (rng.gen::<f64>() - 0.5)).exp()).collect(),
    }
}

/// Adjoint of the linear operator frozen at the current maximizing balls.
fn frozen_adjoint(space: &AtomicSpace, argmax: &[Argmax], h: &[f64]) -> Vec<f64> {
    let mut coef: std::collections::BTreeMap<(usize, usize), (f64, f64, f64)> = std::collections::BTreeMap::new();
    for (x, a) in argmax.iter().enumerate() {
        if a.center == usize::MAX {
            continue;
        }
        let entry = coef.entry((a.center, a.level)).or_insert((0.0, a.radius, a.reach));
        entry.0 += space.mass(x) * h[x];
    }
    let mut out = vec![0.0; space.len()];
    for ((center, _), (acc, radius, reach)) in coef {
        if acc == 0.0 {
            continue;
        }
        let denom = space.set_mass(&space.members(center, radius, Closure::Closed));
        for (z, o) in out.iter_mut().enumerate() {
            let d = space.distance(center, z);
            if reach.is_infinite() || tol::lt(d, reach) {
                *o += acc / denom;
            }
        }
    }
    out
}

/// Nonlinear power iteration `g <- (T* (T g)^(p-1))^(q-1)` on the operator
/// linearized at the current maximizing balls; each iterate is kept only if
/// it improves the score.
fn ascend(space: &AtomicSpace, spec: &OperatorSpec, p: f64, kind: Kind, start: Vec<f64>, iterations: usize, index: usize) -> Result<Option<Tried>> {
    let q = p / (p - 1.0);
    let mut best = evaluate(space, spec, p, kind, start, "ascent", index)?;
    let Some(mut current) = best.as_ref().map(|b| b.g.clone()) else {
        return Ok(None);
    };
    for _ in 0..iterations {
        let out = maximal_with_argmax(space, &TestFunction(current.clone()), spec)?;
        let h: Vec<f64> = out.values.iter().map(|v| v.powf(p - 1.0)).collect();
        let adj = frozen_adjoint(space, &out.argmax, &h);
        let peak = adj.iter().copied().fold(0.0, f64::max);
        if peak == 0.0 {
            break;
        }
        let next: Vec<f64> = adj.iter().map(|v| (v / peak).powf(q - 1.0)).collect();
        let tried = evaluate(space, spec, p, kind, next.clone(), "ascent", index)?;
        let improved = matches!((&tried, &best), (Some(t), Some(b)) if t.score > b.score * (1.0 + 1e-13));
        if !improved {
            break;
        }
        current = next;
        best = tried;
    }
    Ok(best)
}

fn search(space: &AtomicSpace, spec: &OperatorSpec, p: f64, config: &NormSearch, kind: Kind) -> Result<(Tried, usize)> {
    spec.validate()?;
    let mut best = None;
    let sets = sweep_sets(space, config)?;
    let mut tried = sets.len();
    let sweep: Vec<Option<Tried>> = sets
        .into_par_iter()
        .enumerate()
        .map(|(i, s)| evaluate(space, spec, p, kind, TestFunction::indicator(space.len(), &s).0, "indicator-sweep", i))
        .collect::<Result<_>>()?;
    sweep.into_iter().for_each(|t| keep_best(&mut best, t));
    match config.strategy {
        Strategy::IndicatorSweep => {}
        Strategy::Random => {
            let found: Vec<Option<Tried>> = (0..config.budget)
                .into_par_iter()
                .map(|i| {
                    let g = random_function(space.len(), &mut rng::stream(config.seed, i as u64));
                    evaluate(space, spec, p, kind, g, "random", i)
                })
                .collect::<Result<_>>()?;
            tried += found.len();
            found.into_iter().for_each(|t| keep_best(&mut best, t));
        }
        Strategy::Ascent => {
            if p.is_infinite() || p <= 1.0 {
                return Err(Error::InvalidParameter("ascent needs a finite exponent above 1".into()));
            }
            let seed_g = best.as_ref().map(|b| b.g.clone());
            let found: Vec<Option<Tried>> = (0..config.restarts)
                .into_par_iter()
                .map(|i| {
                    let start = match (i, &seed_g) {
                        (0, Some(g)) => g.clone(),
                        _ => random_function(space.len(), &mut rng::stream(config.seed, i as u64)),
                    };
                    ascend(space, spec, p, kind, start, config.iterations, i)
                })
                .collect::<Result<_>>()?;
            tried += found.len();
            found.into_iter().for_each(|t| keep_best(&mut best, t));
        }
    }
    Ok((best.expect("the constant function is always tried"), tried))
}

fn check_budget(config: &NormSearch) -> Result<()> {
    let empty = match config.strategy {
        Strategy::IndicatorSweep | Strategy::Random => config.budget == 0,
        Strategy::Ascent => config.restarts == 0 || config.iterations == 0,
    };
    if empty {
        Err(Error::ZeroBudget)
    } else {
        Ok(())
    }
}

fn report(kind: Kind, spec: &OperatorSpec, p: f64, config: &NormSearch, best: Tried, tried: usize) -> EstimateReport {
    let quantity = match kind {
        Kind::Strong => "strong_norm_lower_bound",
        Kind::Weak => "weak_norm_lower_bound",
    };
    let mut witness = json!({ "g": best.g, "source": best.source, "index": best.index });
    if let Some(a) = best.alpha {
        witness["alpha"] = json!(a);
    }
    EstimateReport {
        quantity: quantity.to_string(),
        value: best.score,
        witness,
        params: json!({ "operator": spec, "p": p }),
        seed: config.seed,
        budget: json!({
            "strategy": config.strategy,
            "budget": config.budget,
            "restarts": config.restarts,
            "iterations": config.iterations,
            "functions_tried": tried,
        }),
    }
}

/// Lower bound on `||T||_{L^p -> L^p}` with a witness function.
pub fn strong_norm_lower_bound(space: &AtomicSpace, spec: &OperatorSpec, p: f64, config: &NormSearch) -> Result<EstimateReport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("strong type needs 1 < p < inf, got {p}")));
    }
    check_budget(config)?;
    let (best, tried) = search(space, spec, p, config, Kind::Strong)?;
    Ok(report(Kind::Strong, spec, p, config, best, tried))
}

/// Lower bound on the weak-type `(p, p)` constant with a witness `(g, alpha)`.
pub fn weak_norm_lower_bound(space: &AtomicSpace, spec: &OperatorSpec, p: f64, config: &NormSearch) -> Result<EstimateReport> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("weak type needs 1 <= p < inf, got {p}")));
    }
    check_budget(config)?;
    let (best, tried) = search(space, spec, p, config, Kind::Weak)?;
    Ok(report(Kind::Weak, spec, p, config, best, tried))
}

/// Best weak-type score of one function, optimizing the level.
pub fn weak_score_of(space: &AtomicSpace, spec: &OperatorSpec, g: &TestFunction, p: f64) -> Result<(f64, f64)> {
    let tg = maximal_function(space, g, spec)?;
    let (s, a) = best_alpha(space, &tg.0, p);
    Ok((s / g.norm(space, p), a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalBounds {
    pub doubling: f64,
    pub p: f64,
    pub expansion: f64,
    pub k: u32,
    pub weak11_uncentered: f64,
    pub weak11_centered: f64,
    pub strong_p_uncentered: f64,
    pub strong_p_centered: f64,
    pub expanded_weak11_uncentered: f64,
    pub expanded_weak11_centered: f64,
    pub expanded_strong_p_uncentered: f64,
    pub expanded_strong_p_centered: f64,
}

/// Upper bounds implied by a doubling constant `c`.
pub fn theoretical_bounds(c: f64, p: f64, t: f64) -> Result<TheoreticalBounds> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("doubling constant must be >= 1, got {c}")));
    }
    if !(p > 1.0) {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    let k = k_for_expansion(t)?;
    let kf = k as f64;
    let factor = if p.is_infinite() { 1.0 } else { p / (p - 1.0) };
    Ok(TheoreticalBounds {
        doubling: c,
        p,
        expansion: t,
        k,
        weak11_uncentered: c.powi(3),
        weak11_centered: c.powi(2),
        strong_p_uncentered: c.powf(3.0 / p) * factor,
        strong_p_centered: c.powf(2.0 / p) * factor,
        expanded_weak11_uncentered: c.powf(3.0 + kf),
        expanded_weak11_centered: c.powf(2.0 + kf),
        expanded_strong_p_uncentered: factor * c.powf((3.0 + kf) / p),
        expanded_strong_p_centered: factor * c.powf((2.0 + kf) / p),
    })
}

/// `c_p^((s - 1) p / (s (p - 1)))`: the constant at exponent `s` obtained
/// by interpolating between `1` (where it is 1) and `p`.
pub fn interpolation_bound(c_p: f64, p: f64, s: f64) -> Result<f64> {
    if !(c_p >= 1.0) {
        return Err(Error::InvalidParameter(format!("constant must be >= 1, got {c_p}")));
    }
    if !(p > 1.0) || !(1.0..=p).contains(&s) {
        return Err(Error::InvalidParameter(format!("need 1 <= s <= p and p > 1, got s = {s}, p = {p}")));
    }
    let e = if p.is_infinite() { (s - 1.0) / s } else { (s - 1.0) * p / (s * (p - 1.0)) };
    Ok(c_p.powf(e))
}

/// Dimension-free bound on the centered maximal operator on `L^2` of
/// Lebesgue measure for norm balls.
pub const LEBESGUE_L2_CENTERED: f64 = 140.0;

/// Centered Boman constant for Lebesgue measure and norm balls: `280` at
/// `p = 2`, `2 * 140^(2/q)` for `1 < p < 2`.
pub fn lebesgue_centered_boman(p: f64) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::InvalidParameter(format!("defined for 1 < p <= 2, got {p}")));
    }
    let q = p / (p - 1.0);
    Ok(2.0 * LEBESGUE_L2_CENTERED.powf(2.0 / q))
}

/// Constants of the comb space's Boman bound at dual exponent `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub total: f64,
}

pub fn comb_boman_constants(q: f64) -> Result<CombConstants> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("q must lie in (1, inf), got {q}")));
    }
    let c1 = 8f64.powf(3.0 / q) * q / (q - 1.0);
    let c2 = 2.0 * c1;
    let c4 = 2f64.powf(1.0 / q) * 4.0 * q / (q - 1.0);
    let c3 = c4 + 4.0 * c2 + 4.0 * c2 * c4;
    Ok(CombConstants { c1, c2, c3, c4, total: c1 + c2 + c3 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetWeakReport {
    pub doubling: f64,
    pub levels_checked: usize,
    pub violations: usize,
    /// Largest `mu(E & {M^u g > t}) * t / (C^3 ||g||_1)`; at most 1 when
    /// the inequality holds.
    pub max_ratio: f64,
    pub worst_level: f64,
}

/// Checks `mu(E & {M^u g > t}) <= C^3 ||g||_1 / t` at every value `t` of
/// `M^u g`.
pub fn subset_weak_check(space: &AtomicSpace, subset: &[usize], g: &TestFunction, c: f64) -> Result<SubsetWeakReport> {
    if !(c >= 1.0) {
        return Err(Error::InvalidParameter(format!("doubling constant must be >= 1, got {c}")));
    }
    if let Some(&i) = subset.iter().find(|&&i| i >= space.len()) {
        return Err(Error::InvalidParameter(format!("subset atom {i} out of range")));
    }
    let mu = maximal_function(space, g, &OperatorSpec::uncentered())?;
    let l1 = g.norm(space, 1.0);
    let bound = c.powi(3) * l1;
    let mut in_e = vec![false; space.len()];
    subset.iter().for_each(|&i| in_e[i] = true);
    let mut levels: Vec<f64> = mu.0.iter().copied().filter(|&v| v > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut out = SubsetWeakReport { doubling: c, levels_checked: levels.len(), violations: 0, max_ratio: 0.0, worst_level: 0.0 };
    for &t in &levels {
        let lhs: f64 = (0..space.len()).filter(|&i| in_e[i] && mu.0[i] > t).map(|i| space.mass(i)).sum();
        let ratio = lhs * t / bound;
        if ratio > out.max_ratio {
            out.max_ratio = ratio;
            out.worst_level = t;
        }
        if lhs * t > bound * (1.0 + 1e-12) {
            out.violations += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Metric;

    fn line(points: impl Iterator<Item = i32>) -> AtomicSpace {
        let pts: Vec<Vec<f64>> = points.map(|i| vec![i as f64]).collect();
        let n = pts.len();
        AtomicSpace::new(pts, vec![1.0; n], Metric::L1).unwrap()
    }

    #[test]
    fn single_atom_doubles_trivially() {
        let s = line(0..1);
        assert_eq!(doubling_constant(&s, 0.0, None, Closure::Open).unwrap().constant, 1.0);
    }

    #[test]
    fn integer_window_doubling() {
        let s = line(-10..=10);
        let r = doubling_constant(&s, 0.0, None, Closure::Closed).unwrap();
        assert_eq!(r.constant, 3.0);
        assert_eq!(r.reevaluate(&s), 3.0);
        let open = doubling_constant(&s, 0.0, None, Closure::Open).unwrap();
        assert_eq!(open.constant, 3.0);
        let sub = doubling_constant(&s, 0.0, Some(&[0]), Closure::Closed).unwrap();
        assert_eq!(sub.constant, 2.0);
        assert!(doubling_constant(&s, 0.0, Some(&[]), Closure::Closed).is_err());
        let large = doubling_constant(&s, 100.0, None, Closure::Closed).unwrap();
        assert_eq!(large.constant, 1.0);
    }

    #[test]
    fn closed_form_bounds() {
        let b = theoretical_bounds(1.0, 3.0, 1.0).unwrap();
        assert_eq!(b.strong_p_uncentered, 1.5);
        assert_eq!(b.weak11_uncentered, 1.0);
        let b = theoretical_bounds(2.0, 2.0, 1.0).unwrap();
        assert!((b.strong_p_uncentered - 2.0 * 2f64.powf(1.5)).abs() < 1e-12);
        let b = theoretical_bounds(2.0, 2.0, 3.0).unwrap();
        assert_eq!(b.k, 2);
        assert_eq!(b.expanded_weak11_uncentered, 32.0);
        assert!(theoretical_bounds(2.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn interpolation_endpoints() {
        assert_eq!(interpolation_bound(7.0, 2.0, 1.0).unwrap(), 1.0);
        assert!((interpolation_bound(7.0, 2.0, 2.0).unwrap() - 7.0).abs() < 1e-12);
        assert!((interpolation_bound(10.0, 2.0, 1.5).unwrap() - 4.641588833612779).abs() < 1e-12);
        assert!(interpolation_bound(10.0, 2.0, 3.0).is_err());
    }

    #[test]
    fn comb_constants_at_two() {
        let c = comb_boman_constants(2.0).unwrap();
        assert!((c.c1 - 45.254833995939045).abs() < 1e-9);
        assert!((c.c3 - 4469.35).abs() < 0.01, "{}", c.c3);
        assert!((c.total - 4605.117).abs() < 0.01, "{}", c.total);
        assert_eq!(lebesgue_centered_boman(2.0).unwrap(), 280.0);
    }

    #[test]
    fn constant_function_bounds() {
        let s = AtomicSpace::uniform_grid(11, 0.0, 1.0).unwrap();
        let cfg = NormSearch::sweep(4, 1);
        let r = strong_norm_lower_bound(&s, &OperatorSpec::uncentered(), 2.0, &cfg).unwrap();
        assert!(r.value >= 1.0 - 1e-12);
        let w = weak_norm_lower_bound(&s, &OperatorSpec::centered(), 1.0, &cfg).unwrap();
        assert!(w.value >= 1.0 - 1e-6);
        let zero = NormSearch::sweep(0, 1);
        assert!(matches!(strong_norm_lower_bound(&s, &OperatorSpec::uncentered(), 2.0, &zero), Err(Error::ZeroBudget)));
    }

    #[test]
    fn witnesses_reproduce() {
        let s = line([0, 1, 3, 4, 9, 10, 11].into_iter());
        let spec = OperatorSpec::uncentered();
        for strategy in [Strategy::IndicatorSweep, Strategy::Random, Strategy::Ascent] {
            let cfg = NormSearch { strategy, budget: 16, restarts: 3, iterations: 50, seed: 5, candidates: vec![] };
            let strong = strong_norm_lower_bound(&s, &spec, 2.0, &cfg).unwrap();
            let g = TestFunction(serde_json::from_value(strong.witness["g"].clone()).unwrap());
            assert!((strong_ratio(&s, &spec, &g, 2.0).unwrap() - strong.value).abs() <= 1e-12 * strong.value);
            let weak = weak_norm_lower_bound(&s, &spec, 2.0, &cfg).unwrap();
            let g = TestFunction(serde_json::from_value(weak.witness["g"].clone()).unwrap());
            let alpha = weak.witness["alpha"].as_f64().unwrap();
            assert!((weak_score(&s, &spec, &g, alpha, 2.0).unwrap() - weak.value).abs() <= 1e-12 * weak.value);
            assert!(weak.value <= strong_ratio(&s, &spec, &g, 2.0).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn subset_check_zero_function() {
        let s = AtomicSpace::uniform_grid(5, 0.0, 1.0).unwrap();
        let r = subset_weak_check(&s, &[0, 1], &TestFunction::constant(5, 0.0), 3.0).unwrap();
        assert_eq!(r.violations, 0);
        assert_eq!(r.max_ratio, 0.0);
    }
}
