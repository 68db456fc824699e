//! Hardy–Littlewood maximal operators on atomic spaces.
//!
//! All variants share one kernel. Around a center `y` the atoms are sorted
//! by distance and grouped into levels; on `[D_j, D_{j+1})` the closed ball
//! `B(y, r)` is level `j`, so the supremum over that interval of
//!
//! ```text
//!     (1 / mu B(y, r)) * sum over B(y, t r) of g mu
//! ```
//!
//! is the left limit at `D_{j+1}`: the numerator collects atoms with
//! `d(y, .) < t D_{j+1}`. The uncentered operator assigns that value to every
//! `x` with `d(x, y) < t D_{j+1}`. Open balls give the same values on atoms.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::space::{AtomicSpace, Ball, Center, Closure, Neighborhood};
use crate::tol;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Centered,
    Uncentered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub variant: Variant,
    /// Only radii strictly above `r_min` count.
    #[serde(default)]
    pub r_min: f64,
    /// Numerator ball is `t` times larger than the normalizing ball.
    #[serde(default = "one")]
    pub expansion: f64,
    #[serde(default, alias = "ball_closure")]
    pub closure: Closure,
}

fn one() -> f64 {
    1.0
}

impl OperatorSpec {
    pub fn centered() -> Self {
        OperatorSpec { variant: Variant::Centered, r_min: 0.0, expansion: 1.0, closure: Closure::Closed }
    }

    pub fn uncentered() -> Self {
        OperatorSpec { variant: Variant::Uncentered, ..Self::centered() }
    }

    pub fn with_r_min(self, r_min: f64) -> Self {
        OperatorSpec { r_min, ..self }
    }

    pub fn with_expansion(self, expansion: f64) -> Self {
        OperatorSpec { expansion, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_min >= 0.0 && self.r_min.is_finite()) {
            return Err(Error::InvalidParameter(format!("r_min must be finite and >= 0, got {}", self.r_min)));
        }
        if !(self.expansion >= 1.0 && self.expansion.is_finite()) {
            return Err(Error::InvalidParameter(format!("expansion must be >= 1, got {}", self.expansion)));
        }
        Ok(())
    }
}

/// Nonnegative values, one per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestFunction(pub Vec<f64>);

impl TestFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("test function value {} at atom {i}", values[i])));
        }
        Ok(TestFunction(values))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        TestFunction(vec![c; n])
    }

    pub fn indicator(n: usize, set: &[usize]) -> Self {
        let mut v = vec![0.0; n];
        for &i in set {
            v[i] = 1.0;
        }
        TestFunction(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_against(&self, space: &AtomicSpace) -> Result<()> {
        if self.len() != space.len() {
            return Err(Error::InvalidParameter(format!(
                "test function has {} values for {} atoms",
                self.len(),
                space.len()
            )));
        }
        TestFunction::new(self.0.clone()).map(|_| ())
    }

    /// `L^p` norm; `p = inf` gives the maximum.
    pub fn norm(&self, space: &AtomicSpace, p: f64) -> f64 {
        lp_norm(&self.0, space.masses(), p)
    }
}

/// `L^p(mu)` norm of nonnegative atom values.
pub fn lp_norm(values: &[f64], masses: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().copied().fold(0.0, f64::max);
    }
    if p == 1.0 {
        return values.iter().zip(masses).map(|(v, m)| v * m).sum();
    }
    let peak = values.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let s: f64 = values.iter().zip(masses).map(|(v, m)| (v / peak).powf(p) * m).sum();
    peak * s.powf(1.0 / p)
}

/// The ball realizing the supremum at an atom: the normalizing ball is
/// level `level` around `center` (closed radius `radius`), the numerator
/// runs over atoms with `d(center, .) < reach`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Argmax {
    pub center: usize,
    pub level: usize,
    pub radius: f64,
    pub reach: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalOutput {
    pub values: Vec<f64>,
    pub argmax: Vec<Argmax>,
}

struct Level {
    value: f64,
    radius: f64,
    reach: f64,
    valid: bool,
}

fn levels(nb: &Neighborhood, space: &AtomicSpace, g: &[f64], spec: &OperatorSpec) -> Vec<Level> {
    let n = nb.order.len();
    let mut gm = Vec::with_capacity(n + 1);
    let mut mu = Vec::with_capacity(n + 1);
    gm.push(0.0);
    mu.push(0.0);
    for &i in &nb.order {
        gm.push(gm.last().unwrap() + g[i] * space.mass(i));
        mu.push(mu.last().unwrap() + space.mass(i));
    }
    let t = spec.expansion;
    (0..nb.levels())
        .map(|j| {
            let end = nb.level_end[j];
            let next = nb.level_radius.get(j + 1).copied().unwrap_or(f64::INFINITY);
            let reach = t * next;
            let covered = if reach.is_finite() { nb.count_lt(reach) } else { n };
            Level {
                value: gm[covered] / mu[end],
                radius: nb.level_radius[j],
                reach,
                valid: !tol::le(next, spec.r_min),
            }
        })
        .collect()
}

fn better(a: (f64, Argmax), b: (f64, Argmax)) -> (f64, Argmax) {
    let key = |x: &(f64, Argmax)| (x.1.center, x.1.level);
    if a.0 > b.0 || (a.0 == b.0 && key(&a) <= key(&b)) {
        a
    } else {
        b
    }
}

const NONE: Argmax = Argmax { center: usize::MAX, level: usize::MAX, radius: 0.0, reach: 0.0 };

/// Maximal function with the ball realizing the supremum at every atom.
pub fn maximal_with_argmax(space: &AtomicSpace, g: &TestFunction, spec: &OperatorSpec) -> Result<MaximalOutput> {
    spec.validate()?;
    g.check_against(space)?;
    let n = space.len();
    let g = g.values();
    let best: Vec<(f64, Argmax)> = match spec.variant {
        Variant::Centered => (0..n)
            .into_par_iter()
            .map(|y| {
                let nb = space.neighborhood(y);
                levels(&nb, space, g, spec)
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| l.valid)
                    .map(|(j, l)| (l.value, Argmax { center: y, level: j, radius: l.radius, reach: l.reach }))
                    .fold((f64::NEG_INFINITY, NONE), better)
            })
            .collect(),
        Variant::Uncentered => (0..n)
            .into_par_iter()
            .fold(
                || vec![(f64::NEG_INFINITY, NONE); n],
                |mut acc, y| {
                    let nb = space.neighborhood(y);
                    let lv = levels(&nb, space, g, spec);
                    let mut suffix = vec![(f64::NEG_INFINITY, NONE); lv.len() + 1];
                    for j in (0..lv.len()).rev() {
                        suffix[j] = suffix[j + 1];
                        if lv[j].valid {
                            let here = (lv[j].value, Argmax { center: y, level: j, radius: lv[j].radius, reach: lv[j].reach });
                            suffix[j] = better(here, suffix[j]);
                        }
                    }
                    let mut j = 0;
                    for (k, &x) in nb.order.iter().enumerate() {
                        let d = nb.dist[k];
                        while j < lv.len() && !(lv[j].reach.is_infinite() || tol::lt(d, lv[j].reach)) {
                            j += 1;
                        }
                        if j < lv.len() {
                            acc[x] = better(acc[x], suffix[j]);
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![(f64::NEG_INFINITY, NONE); n],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x = better(*x, y);
                    }
                    a
                },
            ),
    };
    let (values, argmax) = best.into_iter().map(|(v, a)| (v.max(0.0), a)).unzip();
    Ok(MaximalOutput { values, argmax })
}

pub fn maximal_function(space: &AtomicSpace, g: &TestFunction, spec: &OperatorSpec) -> Result<TestFunction> {
    Ok(TestFunction(maximal_with_argmax(space, g, spec)?.values))
}

/// `k` with `2^(k-1) < t <= 2^k`; 0 for `t = 1`.
pub fn k_for_expansion(t: f64) -> Result<u32> {
    if !(t >= 1.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("expansion must be >= 1, got {t}")));
    }
    let mut k = 0u32;
    while 2f64.powi(k as i32) < t {
        k += 1;
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub expansion: f64,
    pub k: u32,
    pub doubling: f64,
    pub bound: f64,
    /// Largest `M^{ut} g / M^u g` and `M^t g / M^u g` over atoms.
    pub max_ratio_uncentered: f64,
    pub max_ratio_centered: f64,
    pub witness_atom: usize,
    pub violations: usize,
}

impl DominationReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `M^{ut} g <= C^k M^u g` and `M^t g <= C^k M^u g` atom by atom.
pub fn pointwise_domination_check(space: &AtomicSpace, g: &TestFunction, t: f64, c: f64) -> Result<DominationReport> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("doubling constant must be >= 1, got {c}")));
    }
    let k = k_for_expansion(t)?;
    let bound = c.powi(k as i32);
    let base = maximal_function(space, g, &OperatorSpec::uncentered())?;
    let exp_u = maximal_function(space, g, &OperatorSpec::uncentered().with_expansion(t))?;
    let exp_c = maximal_function(space, g, &OperatorSpec::centered().with_expansion(t))?;
    let ratio = |num: f64, den: f64| if num == 0.0 { 0.0 } else { num / den };
    let mut report = DominationReport {
        expansion: t,
        k,
        doubling: c,
        bound,
        max_ratio_uncentered: 0.0,
        max_ratio_centered: 0.0,
        witness_atom: 0,
        violations: 0,
    };
    let mut worst = f64::NEG_INFINITY;
    for x in 0..space.len() {
        let (m, u, ce) = (base.0[x], exp_u.0[x], exp_c.0[x]);
        let ru = ratio(u, m);
        let rc = ratio(ce, m);
        report.max_ratio_uncentered = report.max_ratio_uncentered.max(ru);
        report.max_ratio_centered = report.max_ratio_centered.max(rc);
        if ru.max(rc) > worst {
            worst = ru.max(rc);
            report.witness_atom = x;
        }
        let limit = bound * m * (1.0 + 1e-12);
        if u > limit || ce > limit {
            report.violations += 1;
        }
    }
    Ok(report)
}

fn fingerprint(i: usize) -> u64 {
    let mut z = (i as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One closed ball per distinct member set, ordered by (center, radius).
/// A singleton realized only below the nearest neighbour gets half that
/// distance as radius.
pub fn enumerate_distinct_balls(space: &AtomicSpace) -> Vec<Ball> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for y in 0..space.len() {
        let nb = space.neighborhood(y);
        let mut hash = 0u64;
        let mut k = 0;
        for j in 0..nb.levels() {
            while k < nb.level_end[j] {
                hash = hash.wrapping_add(fingerprint(nb.order[k]));
                k += 1;
            }
            if seen.insert((k, hash)) {
                let radius = if nb.level_radius[j] > 0.0 {
                    nb.level_radius[j]
                } else {
                    nb.level_radius.get(1).map_or(1.0, |d| 0.5 * d)
                };
                out.push(Ball::closed(Center::Atom(y), radius));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Metric;

    fn line(n: usize) -> AtomicSpace {
        AtomicSpace::new((0..n).map(|i| vec![i as f64]).collect(), vec![1.0; n], Metric::L1).unwrap()
    }

    #[test]
    fn constants_are_fixed_points() {
        let s = line(5);
        let g = TestFunction::constant(5, 2.5);
        for spec in [OperatorSpec::centered(), OperatorSpec::uncentered()] {
            assert!(maximal_function(&s, &g, &spec).unwrap().0.iter().all(|&v| (v - 2.5).abs() < 1e-15));
        }
    }

    #[test]
    fn counting_line_values() {
        let s = line(4);
        let g = TestFunction(vec![1.0, 0.0, 0.0, 0.0]);
        let m = maximal_function(&s, &g, &OperatorSpec::centered()).unwrap();
        let mu = maximal_function(&s, &g, &OperatorSpec::uncentered()).unwrap();
        assert!((m.0[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((mu.0[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn argmax_reproduces_value() {
        let s = line(6);
        let g = TestFunction(vec![0.3, 2.0, 0.0, 1.0, 0.0, 4.0]);
        let out = maximal_with_argmax(&s, &g, &OperatorSpec::uncentered().with_expansion(2.0)).unwrap();
        for (x, a) in out.argmax.iter().enumerate() {
            let den: f64 = s.members(a.center, a.radius, Closure::Closed).iter().map(|&i| s.mass(i)).sum();
            let num: f64 = (0..6).filter(|&i| a.reach.is_infinite() || tol::lt(s.distance(a.center, i), a.reach)).map(|i| g.0[i]).sum();
            assert!((num / den - out.values[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn localization_keeps_whole_space() {
        let s = line(4);
        let g = TestFunction(vec![1.0, 0.0, 0.0, 0.0]);
        let m = maximal_function(&s, &g, &OperatorSpec::centered().with_r_min(100.0)).unwrap();
        assert!(m.0.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_spec() {
        let s = line(2);
        let g = TestFunction::constant(2, 1.0);
        assert!(maximal_function(&s, &g, &OperatorSpec::centered().with_expansion(0.5)).is_err());
        assert!(maximal_function(&s, &TestFunction::constant(3, 1.0), &OperatorSpec::centered()).is_err());
        assert!(TestFunction::new(vec![-1.0]).is_err());
    }

    #[test]
    fn expansion_exponent() {
        assert_eq!(k_for_expansion(1.0).unwrap(), 0);
        assert_eq!(k_for_expansion(2.0).unwrap(), 1);
        assert_eq!(k_for_expansion(3.0).unwrap(), 2);
        assert_eq!(k_for_expansion(4.0).unwrap(), 2);
        assert_eq!(k_for_expansion(4.5).unwrap(), 3);
        assert!(k_for_expansion(0.9).is_err());
    }

    #[test]
    fn domination_at_unit_expansion() {
        let s = line(5);
        let g = TestFunction(vec![0.0, 1.0, 3.0, 0.0, 2.0]);
        let r = pointwise_domination_check(&s, &g, 1.0, 3.0).unwrap();
        assert_eq!(r.k, 0);
        assert!((r.max_ratio_uncentered - 1.0).abs() < 1e-15);
        assert!(r.holds());
        assert!(pointwise_domination_check(&s, &g, 2.0, 0.5).is_err());
    }

    #[test]
    fn distinct_ball_counts() {
        let one = AtomicSpace::new(vec![vec![0.0]], vec![1.0], Metric::L1).unwrap();
        assert_eq!(enumerate_distinct_balls(&one).len(), 1);
        assert_eq!(enumerate_distinct_balls(&line(4)).len(), 9);
        assert_eq!(enumerate_distinct_balls(&line(2)).len(), 3);
    }

    #[test]
    fn norms() {
        let m = [1.0, 3.0];
        assert_eq!(lp_norm(&[2.0, 1.0], &m, 1.0), 5.0);
        assert!((lp_norm(&[2.0, 1.0], &m, 2.0) - 7f64.sqrt()).abs() < 1e-15);
        assert_eq!(lp_norm(&[2.0, 1.0], &m, f64::INFINITY), 2.0);
        assert_eq!(lp_norm(&[0.0, 0.0], &m, 2.0), 0.0);
    }
}
