//! Finite metric measure spaces.
//!
//! Two backends share one type: [`AtomicSpace`] holds finitely many atoms
//! with positive masses, [`SegmentSpace`] holds horizontal segments of the
//! `l1` plane carrying a constant density each. Ball measures on segments
//! are computed exactly by interval intersection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::tol;
use crate::{Error, Result};

/// Largest explicit matrix validated for the triangle inequality.
pub const MATRIX_VALIDATION_LIMIT: usize = 2000;

const MAX_CELLS: usize = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L1,
    L2,
    Linf,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Closure {
    Open,
    #[default]
    Closed,
}

/// Where a ball is centered: an atom index or a coordinate tuple.
#[derive(Debug, Clone, PartialEq)]
pub enum Center {
    Atom(usize),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Center,
    pub radius: f64,
    pub closure: Closure,
}

impl Ball {
    pub fn closed(center: Center, radius: f64) -> Self {
        Ball { center, radius, closure: Closure::Closed }
    }

    pub fn open(center: Center, radius: f64) -> Self {
        Ball { center, radius, closure: Closure::Open }
    }

    pub fn atom(index: usize, radius: f64) -> Self {
        Ball::closed(Center::Atom(index), radius)
    }

    /// Same center and closure, radius multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Ball {
        Ball { center: self.center.clone(), radius: self.radius * factor, closure: self.closure }
    }

    fn check_radius(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidBall(format!("radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }
}

/// Horizontal segment `[x_lo, x_hi] x {height}` carrying `density` times
/// linear Lebesgue measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub height: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    pub density: f64,
}

impl Segment {
    pub fn mass(&self) -> f64 {
        self.density * (self.x_hi - self.x_lo)
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: &str| Err(Error::InvalidSegment { index, reason: reason.to_string() });
        if !(self.height.is_finite() && self.x_lo.is_finite() && self.x_hi.is_finite()) {
            return bad("coordinates must be finite");
        }
        if !(self.x_lo < self.x_hi) {
            return bad("x_lo must be smaller than x_hi");
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad("density must be positive");
        }
        Ok(())
    }
}

/// Finitely many atoms with positive masses.
#[derive(Debug, Clone)]
pub struct AtomicSpace {
    metric: Metric,
    dim: usize,
    coords: Vec<f64>,
    masses: Vec<f64>,
    matrix: Vec<f64>,
}

/// Atoms around one center, sorted by distance and grouped into levels of
/// tied distances. Level `j` is the closed ball of radius `level_radius[j]`
/// and holds the first `level_end[j]` atoms of `order`.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub order: Vec<usize>,
    pub dist: Vec<f64>,
    pub level_end: Vec<usize>,
    pub level_radius: Vec<f64>,
}

impl Neighborhood {
    pub fn levels(&self) -> usize {
        self.level_end.len()
    }

    /// Number of atoms at distance `<= r` (tie tolerant).
    pub fn count_le(&self, r: f64) -> usize {
        self.dist.partition_point(|&d| tol::le(d, r))
    }

    /// Number of atoms at distance `< r` (tie tolerant).
    pub fn count_lt(&self, r: f64) -> usize {
        self.dist.partition_point(|&d| tol::lt(d, r))
    }

    pub fn count(&self, r: f64, closure: Closure) -> usize {
        match closure {
            Closure::Closed => self.count_le(r),
            Closure::Open => self.count_lt(r),
        }
    }
}

impl AtomicSpace {
    /// Atoms at coordinate tuples under an `l1`, `l2` or `linf` metric.
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>, metric: Metric) -> Result<Self> {
        if metric == Metric::Matrix {
            return Err(Error::InvalidSpace("use from_matrix for explicit distances".into()));
        }
        if points.is_empty() {
            return Err(Error::EmptySpace);
        }
        if points.len() != masses.len() {
            return Err(Error::InvalidSpace(format!(
                "{} points but {} masses",
                points.len(),
                masses.len()
            )));
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidSpace("points need at least one coordinate".into()));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::InvalidSpace(format!("point {i} has dimension {}, expected {dim}", p.len())));
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidSpace(format!("point {i} has a non-finite coordinate")));
            }
            coords.extend_from_slice(p);
        }
        check_masses(&masses)?;
        let space = AtomicSpace { metric, dim, coords, masses, matrix: Vec::new() };
        space.check_distinct_points()?;
        Ok(space)
    }

    /// Atoms with an explicit symmetric distance matrix. The metric axioms
    /// are validated in `O(n^3)` unless `validate` is false.
    pub fn from_matrix(matrix: Vec<Vec<f64>>, masses: Vec<f64>, validate: bool) -> Result<Self> {
        let n = matrix.len();
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        if masses.len() != n {
            return Err(Error::InvalidSpace(format!("{n} rows but {} masses", masses.len())));
        }
        check_masses(&masses)?;
        let mut flat = Vec::with_capacity(n * n);
        for (i, row) in matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotAMetric(format!("row {i} has {} entries, expected {n}", row.len())));
            }
            flat.extend_from_slice(row);
        }
        for i in 0..n {
            if flat[i * n + i] != 0.0 {
                return Err(Error::NotAMetric(format!("d({i},{i}) = {} is not zero", flat[i * n + i])));
            }
            for j in 0..n {
                let d = flat[i * n + j];
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::NotAMetric(format!("d({i},{j}) = {d} is not a nonnegative real")));
                }
                if i != j && d == 0.0 {
                    return Err(Error::NotAMetric(format!("distinct atoms {i} and {j} at distance 0")));
                }
                if !tol::tied(d, flat[j * n + i]) {
                    return Err(Error::NotAMetric(format!("d({i},{j}) != d({j},{i})")));
                }
            }
        }
        if validate {
            if n > MATRIX_VALIDATION_LIMIT {
                return Err(Error::TooLarge { what: "validated matrix size", got: n, limit: MATRIX_VALIDATION_LIMIT });
            }
            for i in 0..n {
                for j in 0..n {
                    let dij = flat[i * n + j];
                    for k in 0..n {
                        let dik = flat[i * n + k];
                        let djk = flat[j * n + k];
                        if !tol::le(dik, dij + djk) {
                            return Err(Error::NotAMetric(format!(
                                "triangle inequality fails: d({i},{k}) = {dik} > d({i},{j}) + d({j},{k}) = {}",
                                dij + djk
                            )));
                        }
                    }
                }
            }
        }
        Ok(AtomicSpace { metric: Metric::Matrix, dim: 0, coords: Vec::new(), masses, matrix: flat })
    }

    /// `n` equally spaced atoms on `[lo, hi]` (endpoints included), each of
    /// mass `(hi - lo) / n`.
    pub fn uniform_grid(n: usize, lo: f64, hi: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        if !(lo < hi) {
            return Err(Error::InvalidParameter("uniform grid needs lo < hi".into()));
        }
        let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        let points = (0..n).map(|i| vec![lo + step * i as f64]).collect();
        AtomicSpace::new(points, vec![(hi - lo) / n as f64; n], Metric::L1)
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Coordinates of atom `i`; empty for explicit-matrix spaces.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match self.metric {
            Metric::Matrix => self.matrix[i * self.len() + j],
            _ => self.coord_distance(self.point(i), self.point(j)),
        }
    }

    fn coord_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self.metric {
            Metric::L1 => diffs.sum(),
            Metric::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Metric::Linf => diffs.fold(0.0, f64::max),
            Metric::Matrix => unreachable!("matrix spaces have no coordinates"),
        }
    }

    /// Resolves a ball center to an atom index.
    pub fn resolve(&self, center: &Center) -> Result<usize> {
        match center {
            Center::Atom(i) if *i < self.len() => Ok(*i),
            Center::Atom(i) => Err(Error::InvalidBall(format!("atom {i} out of range ({} atoms)", self.len()))),
            Center::Point(p) => {
                if self.metric == Metric::Matrix || p.len() != self.dim {
                    return Err(Error::InvalidBall("coordinate center does not fit the space".into()));
                }
                (0..self.len())
                    .find(|&i| tol::le(self.coord_distance(self.point(i), p), 0.0))
                    .ok_or_else(|| Error::InvalidBall(format!("center {p:?} is not an atom")))
            }
        }
    }

    pub fn neighborhood(&self, center: usize) -> Neighborhood {
        let mut pairs: Vec<(f64, usize)> = (0..self.len()).map(|j| (self.distance(center, j), j)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let order: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let dist: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut level_end = Vec::new();
        let mut level_radius = Vec::new();
        for (k, &d) in dist.iter().enumerate() {
            match level_radius.last_mut() {
                Some(last) if d - *last <= tol::tie_eps(d) => {
                    *last = d;
                    *level_end.last_mut().unwrap() = k + 1;
                }
                _ => {
                    level_radius.push(d);
                    level_end.push(k + 1);
                }
            }
        }
        Neighborhood { order, dist, level_end, level_radius }
    }

    /// Atoms of the ball around atom `center`, in index order.
    pub fn members(&self, center: usize, radius: f64, closure: Closure) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| {
                let d = self.distance(center, j);
                match closure {
                    Closure::Closed => tol::le(d, radius),
                    Closure::Open => tol::lt(d, radius),
                }
            })
            .collect()
    }

    pub fn ball_members(&self, ball: &Ball) -> Result<Vec<usize>> {
        ball.check_radius()?;
        let c = self.resolve(&ball.center)?;
        Ok(self.members(c, ball.radius, ball.closure))
    }

    pub fn set_mass(&self, atoms: &[usize]) -> f64 {
        atoms.iter().map(|&i| self.masses[i]).sum()
    }

    fn check_distinct_points(&self) -> Result<()> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in idx.windows(2) {
            if self.point(w[0]) == self.point(w[1]) {
                return Err(Error::NotAMetric(format!("atoms {} and {} coincide", w[0], w[1])));
            }
        }
        Ok(())
    }
}

fn check_masses(masses: &[f64]) -> Result<()> {
    for (index, &mass) in masses.iter().enumerate() {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::NonPositiveMass { index, mass });
        }
    }
    Ok(())
}

/// Horizontal segments of the `l1` plane with piecewise constant density.
#[derive(Debug, Clone)]
pub struct SegmentSpace {
    segments: Vec<Segment>,
}

/// Part of a ball lying on one segment: the closed interval `[lo, hi]` of
/// x-coordinates, possibly degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trace {
    pub segment: usize,
    pub lo: f64,
    pub hi: f64,
}

impl SegmentSpace {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptySpace);
        }
        for (i, s) in segments.iter().enumerate() {
            s.validate(i)?;
        }
        let mut idx: Vec<usize> = (0..segments.len()).collect();
        idx.sort_by(|&a, &b| {
            segments[a].height.total_cmp(&segments[b].height).then(segments[a].x_lo.total_cmp(&segments[b].x_lo))
        });
        for w in idx.windows(2) {
            let (s, t) = (&segments[w[0]], &segments[w[1]]);
            if s.height == t.height && t.x_lo < s.x_hi {
                return Err(Error::InvalidSegment {
                    index: w[1],
                    reason: format!("overlaps segment {}", w[0]),
                });
            }
        }
        Ok(SegmentSpace { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_mass(&self) -> f64 {
        self.segments.iter().map(Segment::mass).sum()
    }

    /// Index of a segment containing the point, if any.
    pub fn locate(&self, point: [f64; 2]) -> Option<usize> {
        let [x, y] = point;
        self.segments.iter().position(|s| {
            tol::tied(s.height, y) && x >= s.x_lo - tol::tie_eps(x) && x <= s.x_hi + tol::tie_eps(x)
        })
    }

    fn center_point(center: &Center) -> Result<[f64; 2]> {
        match center {
            Center::Point(p) if p.len() == 2 => Ok([p[0], p[1]]),
            _ => Err(Error::InvalidBall("segment balls need a two-dimensional center".into())),
        }
    }

    /// Intersections of an `l1` ball with every segment it meets.
    ///
    /// A ball around `(a, b)` of radius `r` meets the segment at height `c`
    /// in `|x - a| <= r - |b - c|` when `r >= |b - c|`. Open and closed balls
    /// differ only on sets of measure zero; an open ball tangent to a
    /// segment yields no trace.
    pub fn traces(&self, ball: &Ball) -> Result<Vec<Trace>> {
        ball.check_radius()?;
        let [a, b] = Self::center_point(&ball.center)?;
        if self.locate([a, b]).is_none() {
            return Err(Error::InvalidBall(format!("center ({a}, {b}) is not in the support")));
        }
        let r = ball.radius;
        let mut out = Vec::new();
        for (k, s) in self.segments.iter().enumerate() {
            let gap = (b - s.height).abs();
            let reaches = match ball.closure {
                Closure::Closed => r >= gap,
                Closure::Open => r > gap,
            };
            if !reaches {
                continue;
            }
            let half = r - gap;
            let lo = (a - half).max(s.x_lo);
            let hi = (a + half).min(s.x_hi);
            if lo <= hi {
                out.push(Trace { segment: k, lo, hi });
            }
        }
        Ok(out)
    }

    pub fn trace_mass(&self, traces: &[Trace]) -> f64 {
        traces.iter().map(|t| self.segments[t.segment].density * (t.hi - t.lo)).sum()
    }

    pub fn ball_measure(&self, ball: &Ball) -> Result<f64> {
        Ok(self.trace_mass(&self.traces(ball)?))
    }
}

/// A metric measure space with one of the two backends.
#[derive(Debug, Clone)]
pub enum MetricMeasureSpace {
    Atomic(AtomicSpace),
    Segments(SegmentSpace),
}

impl MetricMeasureSpace {
    pub fn as_atomic(&self) -> Result<&AtomicSpace> {
        match self {
            MetricMeasureSpace::Atomic(s) => Ok(s),
            MetricMeasureSpace::Segments(_) => Err(Error::WrongBackend("atomic")),
        }
    }

    pub fn as_segments(&self) -> Result<&SegmentSpace> {
        match self {
            MetricMeasureSpace::Segments(s) => Ok(s),
            MetricMeasureSpace::Atomic(_) => Err(Error::WrongBackend("segments")),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            MetricMeasureSpace::Atomic(s) => s.total_mass(),
            MetricMeasureSpace::Segments(s) => s.total_mass(),
        }
    }
}

impl From<AtomicSpace> for MetricMeasureSpace {
    fn from(s: AtomicSpace) -> Self {
        MetricMeasureSpace::Atomic(s)
    }
}

impl From<SegmentSpace> for MetricMeasureSpace {
    fn from(s: SegmentSpace) -> Self {
        MetricMeasureSpace::Segments(s)
    }
}

/// Measure of a ball. Atomic: sum of member masses under the tie
/// tolerance. Segments: exact interval arithmetic.
pub fn ball_measure(space: &MetricMeasureSpace, ball: &Ball) -> Result<f64> {
    match space {
        MetricMeasureSpace::Atomic(s) => Ok(s.set_mass(&s.ball_members(ball)?)),
        MetricMeasureSpace::Segments(s) => s.ball_measure(ball),
    }
}

/// Radii at which every distinct ball around `center` is realized.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateRadii {
    /// Distinct positive distances; closed balls at these radii cover every
    /// member set except the singleton `{center}`, realized by any radius
    /// below the first entry.
    pub closed: Vec<f64>,
    /// Radii just beyond each distance, where open balls reach the same
    /// member sets.
    pub open: Vec<f64>,
}

pub fn candidate_radii(space: &AtomicSpace, center: usize) -> CandidateRadii {
    let nb = space.neighborhood(center);
    let closed: Vec<f64> = nb.level_radius.iter().copied().filter(|&r| r > 0.0).collect();
    let open = closed
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            let shifted = r + 2.0 * tol::tie_eps(r);
            match closed.get(k + 1) {
                Some(&next) => shifted.min(0.5 * (r + next)),
                None => shifted,
            }
        })
        .collect();
    CandidateRadii { closed, open }
}

/// The comb: the `x` axis `A` (truncated to `[-a_halfwidth, a_halfwidth]`,
/// density 1) and teeth `A_n = [4n, 4n + 2^-n] x {2^-n}` with density
/// `2^-n`, for `0 <= n <= n_max`, under the `l1` metric.
///
/// Segment 0 is `A`, segment `n + 1` is `A_n`.
pub fn build_comb_space(n_max: usize, a_halfwidth: Option<f64>) -> Result<SegmentSpace> {
    let need = 4.0 * n_max as f64 + 2.0;
    let half = a_halfwidth.unwrap_or(4.0 * n_max as f64 + 16.0);
    if !(half >= need) {
        return Err(Error::InvalidParameter(format!(
            "a_halfwidth {half} does not contain [-1, {need}]"
        )));
    }
    if n_max > 60 {
        return Err(Error::InvalidParameter("n_max must be at most 60".into()));
    }
    let mut segments = vec![Segment { height: 0.0, x_lo: -half, x_hi: half, density: 1.0 }];
    for n in 0..=n_max {
        let s = dyadic(n);
        let x = 4.0 * n as f64;
        segments.push(Segment { height: s, x_lo: x, x_hi: x + s, density: s });
    }
    SegmentSpace::new(segments)
}

/// `2^-n`, exact.
pub fn dyadic(n: usize) -> f64 {
    2f64.powi(-(n as i32))
}

/// Uniformly refined x-interval of a segment, with graded cells around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refinement {
    /// Segment the refinement applies to; `None` applies it to every segment.
    #[serde(default)]
    pub segment: Option<usize>,
    pub lo: f64,
    pub hi: f64,
    /// Cell width inside `[lo, hi]`.
    pub spacing: f64,
    /// Outside `[lo, hi]` cells are at most `distance / grading` wide.
    pub grading: f64,
}

impl Refinement {
    fn width_at(&self, x: f64) -> f64 {
        let dist = if x < self.lo {
            self.lo - x
        } else if x > self.hi {
            x - self.hi
        } else {
            0.0
        };
        self.spacing.max(dist / self.grading)
    }

    fn applies_to(&self, segment: usize) -> bool {
        self.segment.is_none_or(|s| s == segment)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationPolicy {
    pub points_per_segment: usize,
    /// Per-segment overrides of `points_per_segment`.
    #[serde(default)]
    pub segment_points: BTreeMap<usize, usize>,
    #[serde(default)]
    pub refinements: Vec<Refinement>,
}

impl DiscretizationPolicy {
    pub fn uniform(points_per_segment: usize) -> Self {
        DiscretizationPolicy { points_per_segment, segment_points: BTreeMap::new(), refinements: Vec::new() }
    }

    /// Comb policy with refinement at every foot `[4n, 4n + 2^-n]`.
    ///
    /// Tooth `A_n` and the foot interval below it share a uniform grid of
    /// `points_per_segment` cells, so every tooth atom sits exactly above an
    /// axis atom. Away from the foot, axis cells grow linearly with the
    /// distance, at most `distance / (4 * refine_factor)` wide.
    pub fn comb(n_max: usize, points_per_segment: usize, refine_factor: usize) -> Self {
        let cells = vec![points_per_segment; n_max + 1];
        Self::comb_with_feet(points_per_segment, &cells, refine_factor)
    }

    /// Comb policy with an individual cell count across each foot.
    pub fn comb_with_feet(points_per_segment: usize, foot_cells: &[usize], refine_factor: usize) -> Self {
        let mut policy = Self::uniform(points_per_segment);
        let grading = 4.0 * refine_factor.max(1) as f64;
        for (n, &cells) in foot_cells.iter().enumerate() {
            let s = dyadic(n);
            let x = 4.0 * n as f64;
            policy.segment_points.insert(n + 1, cells);
            policy.refinements.push(Refinement {
                segment: None,
                lo: x,
                hi: x + s,
                spacing: s / cells.max(1) as f64,
                grading,
            });
        }
        policy
    }

    fn points_for(&self, segment: usize) -> usize {
        self.segment_points.get(&segment).copied().unwrap_or(self.points_per_segment)
    }
}

/// An atomic approximation of a segment space.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub space: AtomicSpace,
    /// Segment each atom was sampled from.
    pub segment_of: Vec<usize>,
}

impl Discretization {
    pub fn atoms_on(&self, segment: usize) -> Vec<usize> {
        (0..self.segment_of.len()).filter(|&i| self.segment_of[i] == segment).collect()
    }
}

/// Replaces every segment by atoms at cell midpoints, each carrying
/// `density * cell width`. Cell widths on a segment sum to its length.
pub fn discretize(space: &SegmentSpace, policy: &DiscretizationPolicy) -> Result<Discretization> {
    let mut points = Vec::new();
    let mut masses = Vec::new();
    let mut segment_of = Vec::new();
    for (k, seg) in space.segments().iter().enumerate() {
        let count = policy.points_for(k);
        if count == 0 {
            return Err(Error::InvalidParameter(format!("segment {k} has zero points")));
        }
        let refinements: Vec<&Refinement> = policy.refinements.iter().filter(|r| r.applies_to(k)).collect();
        for r in &refinements {
            if !(r.spacing > 0.0 && r.grading > 0.0 && r.lo <= r.hi) {
                return Err(Error::InvalidParameter("refinement needs positive spacing and grading".into()));
            }
        }
        let base = (seg.x_hi - seg.x_lo) / count as f64;
        for (lo, width) in segment_cells(seg.x_lo, seg.x_hi, base, &refinements)? {
            points.push(vec![lo + 0.5 * width, seg.height]);
            masses.push(seg.density * width);
            segment_of.push(k);
        }
    }
    let space = AtomicSpace::new(points, masses, Metric::L1)?;
    Ok(Discretization { space, segment_of })
}

fn segment_cells(a: f64, b: f64, base: f64, refinements: &[&Refinement]) -> Result<Vec<(f64, f64)>> {
    let mut cuts = vec![a, b];
    for r in refinements {
        for x in [r.lo, r.hi] {
            if x > a && x < b {
                cuts.push(x);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut cells = Vec::new();
    for w in cuts.windows(2) {
        let (u, v) = (w[0], w[1]);
        let inside = refinements.iter().filter(|r| r.lo <= u && v <= r.hi).map(|r| r.spacing).fold(f64::INFINITY, f64::min);
        if inside.is_finite() {
            let h = inside.min(base);
            let m = ((v - u) / h - 1e-9).ceil().max(1.0) as usize;
            if m > MAX_CELLS {
                return Err(Error::TooLarge { what: "cells per piece", got: m, limit: MAX_CELLS });
            }
            let width = (v - u) / m as f64;
            cells.extend((0..m).map(|i| (u + width * i as f64, width)));
            continue;
        }
        let width_at = |x: f64| refinements.iter().map(|r| r.width_at(x)).fold(base, f64::min);
        let mut raw = Vec::new();
        let mut x = u;
        while x < v {
            let mut h = width_at(x);
            h = h.min(width_at((x + h).min(v)));
            if v - x < 1.5 * h {
                h = v - x;
            }
            raw.push(h);
            x += h;
            if raw.len() > MAX_CELLS {
                return Err(Error::TooLarge { what: "cells per piece", got: raw.len(), limit: MAX_CELLS });
            }
        }
        let scale = (v - u) / raw.iter().sum::<f64>();
        let mut start = u;
        for h in raw {
            let h = h * scale;
            cells.push((start, h));
            start += h;
        }
    }
    Ok(cells)
}

// JSON -------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Atomic,
    Segments,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub height: Real,
    pub x_lo: Real,
    pub x_hi: Real,
    pub density: Real,
}

/// JSON description of a space. Numbers may be exact fraction strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub points: Vec<Vec<Real>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masses: Vec<Real>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matrix: Vec<Vec<Real>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentSpec>,
    /// Skip the triangle-inequality check of an explicit matrix.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub skip_validation: bool,
}

fn reals(v: &[Real]) -> Vec<f64> {
    v.iter().map(|r| r.0).collect()
}

impl SpaceSpec {
    pub fn build(&self) -> Result<MetricMeasureSpace> {
        match self.backend {
            BackendKind::Atomic => {
                let masses = reals(&self.masses);
                let space = match self.metric.unwrap_or(Metric::L2) {
                    Metric::Matrix => {
                        let m = self.matrix.iter().map(|row| reals(row)).collect();
                        AtomicSpace::from_matrix(m, masses, !self.skip_validation)?
                    }
                    metric => {
                        let points = self.points.iter().map(|p| reals(p)).collect();
                        AtomicSpace::new(points, masses, metric)?
                    }
                };
                Ok(space.into())
            }
            BackendKind::Segments => {
                if let Some(m) = self.metric {
                    if m != Metric::L1 {
                        return Err(Error::InvalidSpace("segment spaces use the l1 metric".into()));
                    }
                }
                let segs = self
                    .segments
                    .iter()
                    .map(|s| Segment { height: s.height.0, x_lo: s.x_lo.0, x_hi: s.x_hi.0, density: s.density.0 })
                    .collect();
                Ok(SegmentSpace::new(segs)?.into())
            }
        }
    }

    pub fn from_space(space: &MetricMeasureSpace) -> SpaceSpec {
        let wrap = |v: &[f64]| v.iter().map(|&x| Real(x)).collect::<Vec<_>>();
        match space {
            MetricMeasureSpace::Atomic(s) => {
                let n = s.len();
                let (points, matrix) = if s.metric == Metric::Matrix {
                    (Vec::new(), (0..n).map(|i| wrap(&s.matrix[i * n..(i + 1) * n])).collect())
                } else {
                    ((0..n).map(|i| wrap(s.point(i))).collect(), Vec::new())
                };
                SpaceSpec {
                    backend: BackendKind::Atomic,
                    metric: Some(s.metric),
                    points,
                    masses: wrap(&s.masses),
                    matrix,
                    segments: Vec::new(),
                    skip_validation: false,
                }
            }
            MetricMeasureSpace::Segments(s) => SpaceSpec {
                backend: BackendKind::Segments,
                metric: Some(Metric::L1),
                points: Vec::new(),
                masses: Vec::new(),
                matrix: Vec::new(),
                segments: s
                    .segments
                    .iter()
                    .map(|g| SegmentSpec {
                        height: Real(g.height),
                        x_lo: Real(g.x_lo),
                        x_hi: Real(g.x_hi),
                        density: Real(g.density),
                    })
                    .collect(),
                skip_validation: false,
            },
        }
    }
}

/// Parses a space description and validates it. Only the atomic backend
/// is accepted.
pub fn build_atomic_space(spec: &SpaceSpec) -> Result<AtomicSpace> {
    match spec.build()? {
        MetricMeasureSpace::Atomic(s) => Ok(s),
        MetricMeasureSpace::Segments(_) => Err(Error::WrongBackend("atomic")),
    }
}

impl Serialize for Center {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Center::Atom(i) => s.serialize_u64(*i as u64),
            Center::Point(p) => p.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Center {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Atom(usize),
            Point(Vec<Real>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Atom(i) => Center::Atom(i),
            Raw::Point(p) => Center::Point(reals(&p)),
        })
    }
}

impl Serialize for Ball {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a> {
            center: &'a Center,
            radius: f64,
            closure: Closure,
        }
        Out { center: &self.center, radius: self.radius, closure: self.closure }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Ball {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            center: Center,
            radius: Real,
            #[serde(default)]
            closure: Closure,
        }
        let raw = Raw::deserialize(d)?;
        Ok(Ball { center: raw.center, radius: raw.radius.0, closure: raw.closure })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> AtomicSpace {
        AtomicSpace::new((0..n).map(|i| vec![i as f64]).collect(), vec![1.0; n], Metric::L1).unwrap()
    }

    #[test]
    fn counting_line_total_mass() {
        assert_eq!(line(4).total_mass(), 4.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(AtomicSpace::new(vec![], vec![], Metric::L1), Err(Error::EmptySpace)));
        assert!(matches!(
            AtomicSpace::new(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0], Metric::L1),
            Err(Error::NonPositiveMass { index: 1, .. })
        ));
        assert!(matches!(
            AtomicSpace::new(vec![vec![0.0], vec![0.0]], vec![1.0, 1.0], Metric::L1),
            Err(Error::NotAMetric(_))
        ));
    }

    #[test]
    fn triangle_violation_is_rejected() {
        let m = vec![vec![0.0, 5.0, 1.0], vec![5.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let err = AtomicSpace::from_matrix(m.clone(), vec![1.0; 3], true).unwrap_err();
        assert!(matches!(err, Error::NotAMetric(ref s) if s.contains("triangle")));
        assert!(AtomicSpace::from_matrix(m, vec![1.0; 3], false).is_ok());
        let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(AtomicSpace::from_matrix(asym, vec![1.0; 2], true).is_err());
    }

    #[test]
    fn uniform_grid_normalized() {
        let g = AtomicSpace::uniform_grid(1001, 0.0, 1.0).unwrap();
        assert!((g.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(g.point(1000), &[1.0]);
    }

    #[test]
    fn open_and_closed_balls_on_counting_line() {
        let s: MetricMeasureSpace = line(4).into();
        assert_eq!(ball_measure(&s, &Ball::atom(1, 1.0)).unwrap(), 3.0);
        assert_eq!(ball_measure(&s, &Ball::open(Center::Atom(1), 1.0)).unwrap(), 1.0);
        assert!(ball_measure(&s, &Ball::atom(1, 0.0)).is_err());
        assert!(ball_measure(&s, &Ball::atom(9, 1.0)).is_err());
    }

    #[test]
    fn candidate_radii_on_counting_line() {
        let c = candidate_radii(&line(4), 1);
        assert_eq!(c.closed, vec![1.0, 2.0]);
        assert!(c.open[0] > 1.0 && c.open[0] < 1.5);
        let single = AtomicSpace::new(vec![vec![0.0]], vec![1.0], Metric::L1).unwrap();
        assert!(candidate_radii(&single, 0).closed.is_empty());
        let pair = AtomicSpace::new(vec![vec![0.0], vec![5.0]], vec![1.0, 1.0], Metric::L1).unwrap();
        assert_eq!(candidate_radii(&pair, 0).closed, vec![5.0]);
    }

    #[test]
    fn candidate_radii_cover_every_ball() {
        let pts = [0.0, 0.3, 1.1, 1.7, 4.0, 4.05];
        let s = AtomicSpace::new(pts.iter().map(|&x| vec![x]).collect(), vec![1.0; 6], Metric::L1).unwrap();
        for c in 0..s.len() {
            let radii = candidate_radii(&s, c);
            for k in 1..500 {
                let r = k as f64 * 0.01;
                let direct = s.members(c, r, Closure::Closed);
                let listed = match radii.closed.iter().rev().find(|&&x| x <= r) {
                    Some(&x) => s.members(c, x, Closure::Closed),
                    None => vec![c],
                };
                assert_eq!(direct, listed, "center {c} radius {r}");
                let open = s.members(c, r, Closure::Open);
                if let Some(k) = radii.open.iter().position(|&x| x >= r) {
                    if k > 0 {
                        assert!(s.members(c, radii.open[k - 1], Closure::Open).len() <= open.len());
                    }
                }
            }
        }
    }

    #[test]
    fn comb_tooth_masses() {
        let comb = build_comb_space(8, None).unwrap();
        for n in 0..=8 {
            assert_eq!(comb.segments()[n + 1].mass(), 4f64.powi(-(n as i32)));
        }
        assert_eq!(build_comb_space(0, Some(10.0)).unwrap().segments().len(), 2);
        assert!(build_comb_space(3, Some(5.0)).is_err());
    }

    #[test]
    fn comb_ball_measures_are_exact() {
        let comb = build_comb_space(2, None).unwrap();
        let c = Center::Point(vec![8.0, 0.25]);
        assert_eq!(comb.ball_measure(&Ball::closed(c.clone(), 0.25)).unwrap(), 1.0 / 16.0);
        assert_eq!(comb.ball_measure(&Ball::closed(c, 0.5)).unwrap(), 9.0 / 16.0);
        let off = Center::Point(vec![3.0, 0.5]);
        assert!(comb.ball_measure(&Ball::closed(off, 1.0)).is_err());
    }

    #[test]
    fn overlapping_segments_rejected() {
        let s = |lo, hi| Segment { height: 0.0, x_lo: lo, x_hi: hi, density: 1.0 };
        assert!(SegmentSpace::new(vec![s(0.0, 1.0), s(1.0, 2.0)]).is_ok());
        assert!(SegmentSpace::new(vec![s(0.0, 1.0), s(0.5, 2.0)]).is_err());
        assert!(SegmentSpace::new(vec![s(1.0, 1.0)]).is_err());
    }

    #[test]
    fn discretization_preserves_mass() {
        let comb = build_comb_space(2, None).unwrap();
        let d = discretize(&comb, &DiscretizationPolicy::uniform(256)).unwrap();
        let exact = 2.0 * 24.0 + 1.0 + 0.25 + 0.0625;
        assert!((d.space.total_mass() - exact).abs() <= 1e-12 * exact);
        let unit = SegmentSpace::new(vec![Segment { height: 0.0, x_lo: 0.0, x_hi: 1.0, density: 1.0 }]).unwrap();
        let d = discretize(&unit, &DiscretizationPolicy::uniform(1000)).unwrap();
        assert!(d.space.masses().iter().all(|&m| (m - 1e-3).abs() < 1e-15));
        assert!(discretize(&unit, &DiscretizationPolicy::uniform(0)).is_err());
    }

    #[test]
    fn refined_comb_tracks_exact_foot_measures() {
        let n_max = 4;
        let comb = build_comb_space(n_max, None).unwrap();
        let d = discretize(&comb, &DiscretizationPolicy::comb(n_max, 256, 8)).unwrap();
        let exact = d.space.total_mass();
        assert!((exact - comb.total_mass()).abs() <= 1e-12 * exact);
        for n in 0..=n_max {
            let x = 4.0 * n as f64;
            let foot = d.space.resolve(&Center::Point(vec![x + 0.5 / 256.0 * dyadic(n), 0.0])).unwrap();
            let c = d.space.point(foot).to_vec();
            let mut r = dyadic(n_max);
            while r <= 4.0 {
                let approx = d.space.set_mass(&d.space.members(foot, r, Closure::Closed));
                let truth = comb.ball_measure(&Ball::closed(Center::Point(c.clone()), r)).unwrap();
                assert!((approx - truth).abs() <= 0.02 * truth, "n={n} r={r}: {approx} vs {truth}");
                r *= 1.37;
            }
        }
    }

    #[test]
    fn tooth_atoms_sit_above_axis_atoms() {
        let comb = build_comb_space(3, None).unwrap();
        let d = discretize(&comb, &DiscretizationPolicy::comb(3, 64, 4)).unwrap();
        for n in 0..=3 {
            for i in d.atoms_on(n + 1) {
                let p = d.space.point(i);
                assert!(d.space.resolve(&Center::Point(vec![p[0], 0.0])).is_ok());
            }
        }
    }

    #[test]
    fn spec_json_roundtrip_with_fractions() {
        let json = r#"{"backend":"segments","segments":[{"height":"1/4","x_lo":8,"x_hi":"33/4","density":"1/4"}]}"#;
        let spec: SpaceSpec = serde_json::from_str(json).unwrap();
        let space = spec.build().unwrap();
        let seg = space.as_segments().unwrap().segments()[0];
        assert_eq!(seg.x_hi, 8.25);
        let back: SpaceSpec = serde_json::from_str(&serde_json::to_string(&SpaceSpec::from_space(&space)).unwrap()).unwrap();
        assert_eq!(back.build().unwrap().as_segments().unwrap().segments()[0], seg);
        let bad = r#"{"backend":"atomic","metric":"matrix","matrix":[[0,5,1],[5,0,1],[1,1,0]],"masses":[1,1,1]}"#;
        let spec: SpaceSpec = serde_json::from_str(bad).unwrap();
        assert!(build_atomic_space(&spec).is_err());
    }
}
