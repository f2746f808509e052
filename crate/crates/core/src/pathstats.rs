//! Regularity statistics of paths: box counting, doublebacks, repeated
//! visits, multi-arm annulus events and the weighted curve distance.
//!
//! Paths are polylines given by their vertices, in whatever units the
//! caller uses; all radii and scales are in the same units.

use crate::error::{Error, Result};
use crate::lattice::{CellKind, Domain};
use crate::measure::FlowerLaw;
use crate::observable::{estimate_observables, Observable};
use crate::sampler::{edge_blue, half, Scratch};
use crate::stats::{linear_fit, Estimate, LineFit};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet, VecDeque};

pub type Point = [f64; 2];

fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    /// Fit of `ln N` against `ln(1 / scale)`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub residuals: Vec<f64>,
}

/// Box-counting slope: the number of grid squares of side `s` (anchored at
/// the origin) met by the polyline, fitted against `1/s` on log scales.
pub fn box_dimension(path: &[Point], scales: &[f64]) -> Result<DimensionReport> {
    if scales.len() < 4 {
        return Err(Error::Invalid(format!("need at least 4 scales, got {}", scales.len())));
    }
    let (lo, hi) = scales.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
    if !(lo > 0.0) || hi / lo < 4.0 {
        return Err(Error::Invalid("scales must be positive and span at least two octaves".into()));
    }
    if path.is_empty() || path.iter().all(|&p| p == path[0]) {
        return Err(Error::Degenerate("path is a single point".into()));
    }
    let counts: Vec<usize> = scales.iter().map(|&s| covering_boxes(path, s)).collect();
    let xs: Vec<f64> = scales.iter().map(|s| -s.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let fit = linear_fit(&xs, &ys).ok_or_else(|| Error::Degenerate("scales are all equal".into()))?;
    let residuals = xs.iter().zip(&ys).map(|(x, y)| y - (fit.intercept + fit.slope * x)).collect();
    Ok(DimensionReport {
        scales: scales.to_vec(),
        counts,
        slope: fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        residuals,
    })
}

fn covering_boxes(path: &[Point], s: f64) -> usize {
    let cell = |p: Point| ((p[0] / s).floor() as i64, (p[1] / s).floor() as i64);
    let mut boxes = HashSet::new();
    boxes.insert(cell(path[0]));
    for w in path.windows(2) {
        // walk each segment in a fixed orientation so reversal cannot change the count
        let (p, q) = if (w[0][0], w[0][1]) <= (w[1][0], w[1][1]) { (w[0], w[1]) } else { (w[1], w[0]) };
        let steps = (dist(p, q) / (s / 8.0)).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let u = k as f64 / steps as f64;
            boxes.insert(cell([p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1])]));
        }
    }
    boxes.len()
}

/// Discrete Fréchet distance between two polylines (vertex couplings).
pub fn frechet(a: &[Point], b: &[Point]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, &p) in a.iter().enumerate() {
        for j in 0..m {
            let d = dist(p, b[j]);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

// Uniform bucket grid over path vertices.
struct Buckets {
    size: f64,
    map: HashMap<(i64, i64), Vec<u32>>,
}

impl Buckets {
    fn new(path: &[Point], size: f64) -> Buckets {
        let mut map: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, &p) in path.iter().enumerate() {
            map.entry(Self::key(p, size)).or_default().push(i as u32);
        }
        Buckets { size, map }
    }

    fn key(p: Point, size: f64) -> (i64, i64) {
        ((p[0] / size).floor() as i64, (p[1] / size).floor() as i64)
    }

    /// Indices of vertices within `r <= size` of `z`, sorted.
    fn near(&self, path: &[Point], z: Point, r: f64, out: &mut Vec<u32>) {
        out.clear();
        let (kx, ky) = Self::key(z, self.size);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = self.map.get(&(kx + dx, ky + dy)) {
                    out.extend(v.iter().copied().filter(|&i| dist(path[i as usize], z) <= r));
                }
            }
        }
        out.sort_unstable();
    }
}

/// Number of disjoint pairs of stretches of the path, each of diameter at
/// least `delta`, within Fréchet distance `eta` of each other (in either
/// direction). First stretches are scanned in order and taken minimal: from
/// a vertex to the first vertex at distance `delta` from it.
pub fn detect_doubleback(path: &[Point], delta: f64, eta: f64) -> Result<usize> {
    if !(eta > 0.0 && eta < delta) {
        return Err(Error::Invalid(format!("need 0 < eta < delta, got eta {eta}, delta {delta}")));
    }
    let n = path.len();
    let buckets = Buckets::new(path, eta);
    let mut near = Vec::new();
    let mut count = 0;
    let mut i = 0;
    while i < n {
        let Some(j) = (i + 1..n).find(|&j| dist(path[i], path[j]) >= delta) else { break };
        if matched_stretch(path, &buckets, &mut near, i, j, delta, eta) {
            count += 1;
            i = j + 1;
        } else {
            i += 1;
        }
    }
    Ok(count)
}

fn diameter(pts: &[Point]) -> f64 {
    let mut d = 0.0f64;
    for (k, &p) in pts.iter().enumerate() {
        for &q in &pts[k + 1..] {
            d = d.max(dist(p, q));
        }
    }
    d
}

fn matched_stretch(
    path: &[Point],
    buckets: &Buckets,
    near: &mut Vec<u32>,
    i: usize,
    j: usize,
    delta: f64,
    eta: f64,
) -> bool {
    let first = &path[i..=j];
    buckets.near(path, path[i], eta, near);
    let starts: Vec<usize> = near.iter().map(|&k| k as usize).filter(|&k| k < i || k > j).collect();
    let close_to_first = |p: Point| first.iter().any(|&q| dist(p, q) <= eta);
    for k in starts {
        // parallel: second stretch runs forward from k
        let mut l = k;
        while l + 1 < path.len() && close_to_first(path[l + 1]) && !(k < i && l + 1 >= i) {
            l += 1;
            if dist(path[l], path[j]) <= eta {
                let second = &path[k..=l];
                if diameter(second) >= delta && frechet(first, second) <= eta {
                    return true;
                }
            }
        }
        // antiparallel: second stretch runs backward from k
        let mut l = k;
        while l > 0 && close_to_first(path[l - 1]) && !(k > j && l - 1 <= j) {
            l -= 1;
            if dist(path[l], path[j]) <= eta {
                let second: Vec<Point> = path[l..=k].iter().rev().copied().collect();
                if diameter(&second) >= delta && frechet(first, &second) <= eta {
                    return true;
                }
            }
        }
    }
    false
}

// Binary tree of bounding boxes over index ranges, for "is some vertex in
// this range far from z" queries.
struct BoxTree {
    leaves: usize,
    boxes: Vec<[f64; 4]>,
}

impl BoxTree {
    fn new(path: &[Point]) -> BoxTree {
        let leaves = path.len().next_power_of_two();
        let empty = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        let mut boxes = vec![empty; 2 * leaves];
        for (i, p) in path.iter().enumerate() {
            boxes[leaves + i] = [p[0], p[1], p[0], p[1]];
        }
        for v in (1..leaves).rev() {
            let (a, b) = (boxes[2 * v], boxes[2 * v + 1]);
            boxes[v] = [a[0].min(b[0]), a[1].min(b[1]), a[2].max(b[2]), a[3].max(b[3])];
        }
        BoxTree { leaves, boxes }
    }

    fn max_dist(b: &[f64; 4], z: Point) -> f64 {
        if b[0] > b[2] {
            return f64::NEG_INFINITY;
        }
        let dx = (z[0] - b[0]).abs().max((b[2] - z[0]).abs());
        let dy = (z[1] - b[1]).abs().max((b[3] - z[1]).abs());
        dx.hypot(dy)
    }

    /// First index in `from..` whose vertex is at distance `>= r` from `z`.
    fn first_far(&self, z: Point, r: f64, from: usize) -> Option<usize> {
        self.descend(1, 0, self.leaves, z, r, from)
    }

    fn descend(&self, v: usize, lo: usize, hi: usize, z: Point, r: f64, from: usize) -> Option<usize> {
        if hi <= from || Self::max_dist(&self.boxes[v], z) < r {
            return None;
        }
        if hi - lo == 1 {
            let b = &self.boxes[v];
            return (dist([b[0], b[1]], z) >= r).then_some(lo);
        }
        let mid = (lo + hi) / 2;
        self.descend(2 * v, lo, mid, z, r, from).or_else(|| self.descend(2 * v + 1, mid, hi, z, r, from))
    }
}

/// Whether the path visits the disk of radius `r1` about some center
/// `visits` times, with excursions to distance `r2` from the center before,
/// between and after the visits. Centers range over `centers`.
fn repeated_visit(path: &[Point], centers: impl Iterator<Item = Point>, r1: f64, r2: f64, visits: usize) -> bool {
    let n = path.len();
    if n < 2 * visits + 1 {
        return false;
    }
    let tree = BoxTree::new(path);
    let buckets = Buckets::new(path, r1);
    let max_step = path.windows(2).map(|w| dist(w[0], w[1])).fold(0.0f64, f64::max).max(1e-12);
    // a far excursion between two visits needs this many vertices
    let min_gap = ((2.0 * (r2 - r1) / max_step).floor() as usize).max(1);
    let mut near = Vec::new();
    let mut seen = HashSet::new();
    for z in centers {
        if !seen.insert((z[0].to_bits(), z[1].to_bits())) {
            continue;
        }
        buckets.near(path, z, r1, &mut near);
        let clusters = 1 + near.windows(2).filter(|w| (w[1] - w[0]) as usize >= min_gap).count();
        if near.is_empty() || clusters < visits {
            continue;
        }
        let mut pos = 0;
        let mut ok = true;
        for _ in 0..visits {
            let Some(f) = tree.first_far(z, r2, pos) else {
                ok = false;
                break;
            };
            let k = near.partition_point(|&i| (i as usize) <= f);
            let Some(&v) = near.get(k) else {
                ok = false;
                break;
            };
            pos = v as usize + 1;
        }
        if ok && tree.first_far(z, r2, pos).is_some() {
            return true;
        }
    }
    false
}

/// Three visits to one disk of radius `d1` centered at a path vertex,
/// separated by four excursions to distance `d2` from the center.
pub fn detect_triple_visit(path: &[Point], d1: f64, d2: f64) -> Result<bool> {
    if !(d1 > 0.0 && d1 < d2) {
        return Err(Error::Invalid(format!("need 0 < d1 < d2, got {d1}, {d2}")));
    }
    Ok(repeated_visit(path, path.iter().copied(), d1, d2, 3))
}

/// Two visits to one disk of radius `d1` centered at a path vertex within
/// `d1` of the boundary, separated by three excursions to distance `d2`.
/// `boundary_distance` gives the distance of a point to the boundary.
pub fn detect_boundary_double_visit(
    path: &[Point],
    boundary_distance: &dyn Fn(Point) -> f64,
    d1: f64,
    d2: f64,
) -> Result<bool> {
    if !(d1 > 0.0 && d1 < d2) {
        return Err(Error::Invalid(format!("need 0 < d1 < d2, got {d1}, {d2}")));
    }
    let centers = path.iter().copied().filter(|&p| boundary_distance(p) <= d1);
    Ok(repeated_visit(path, centers, d1, d2, 2))
}

/// Distance to the boundary of a domain's shape, in lattice units.
pub fn lattice_boundary_distance(d: &Domain) -> Result<impl Fn(Point) -> f64 + '_> {
    let shape = d.shape.as_ref().ok_or_else(|| Error::Invalid("domain has no shape".into()))?;
    Ok(move |p: Point| shape.boundary_distance(d.to_shape(p)) / d.scale)
}

/// Two curves from `a` to `c` and the neighborhoods cut out around the ends.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePair {
    pub first: Vec<Point>,
    pub second: Vec<Point>,
    pub a: Point,
    pub c: Point,
    /// Radius of the level-1 balls about `a` and `c`; level `l` uses
    /// `radius / 2^(l-1)`.
    pub radius: f64,
}

// from the first exit of the ball about a to the next entry into the ball about c
fn middle(curve: &[Point], a: Point, c: Point, r: f64) -> &[Point] {
    let Some(s) = curve.iter().position(|&p| dist(p, a) > r) else {
        return &curve[curve.len() - 1..];
    };
    let e = (s..curve.len()).find(|&k| dist(curve[k], c) < r).unwrap_or(curve.len() - 1);
    &curve[s..=e.max(s)]
}

/// Weighted sum over levels of the Fréchet distance between the parts of
/// the two curves outside the level's balls about `a` and `c`.
pub fn dist_metric(pair: &CurvePair, weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 || weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Invalid(format!("weights must be non-negative and sum to 1, sum is {total}")));
    }
    if pair.first.is_empty() || pair.second.is_empty() {
        return Err(Error::Invalid("curves must be non-empty".into()));
    }
    let mut acc = 0.0;
    let mut r = pair.radius;
    for &w in weights {
        if w > 0.0 {
            acc += w * frechet(middle(&pair.first, pair.a, pair.c, r), middle(&pair.second, pair.a, pair.c, r));
        }
        r /= 2.0;
    }
    Ok(acc)
}

/// Which colors the arms may have.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArmPattern {
    /// Any colors, at least one arm of each.
    NotAllSame,
    Monochrome {
        blue: bool,
    },
    /// Exactly this many arms of each color, in any cyclic order.
    Counts {
        blue: usize,
        yellow: usize,
    },
}

impl ArmPattern {
    pub fn parse(s: &str) -> Result<ArmPattern> {
        match s {
            "mixed" | "not-all-same" => Ok(ArmPattern::NotAllSame),
            "blue" => Ok(ArmPattern::Monochrome { blue: true }),
            "yellow" => Ok(ArmPattern::Monochrome { blue: false }),
            _ => {
                let bad = || Error::Invalid(format!("unknown arm pattern {s:?}"));
                if s.is_empty() || !s.chars().all(|ch| ch == 'B' || ch == 'Y') {
                    return Err(bad());
                }
                let blue = s.chars().filter(|&ch| ch == 'B').count();
                Ok(ArmPattern::Counts { blue, yellow: s.len() - blue })
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            ArmPattern::NotAllSame => "mixed".into(),
            ArmPattern::Monochrome { blue: true } => "blue".into(),
            ArmPattern::Monochrome { blue: false } => "yellow".into(),
            ArmPattern::Counts { blue, yellow } => "B".repeat(*blue) + &"Y".repeat(*yellow),
        }
    }

    /// Color-swapped pattern.
    pub fn swapped(&self) -> ArmPattern {
        match *self {
            ArmPattern::NotAllSame => ArmPattern::NotAllSame,
            ArmPattern::Monochrome { blue } => ArmPattern::Monochrome { blue: !blue },
            ArmPattern::Counts { blue, yellow } => ArmPattern::Counts { blue: yellow, yellow: blue },
        }
    }

    fn holds(&self, k: usize, fb: usize, fy: usize) -> bool {
        match *self {
            ArmPattern::NotAllSame => fb >= 1 && fy >= 1 && fb + fy >= k,
            ArmPattern::Monochrome { blue } => (if blue { fb } else { fy }) >= k,
            ArmPattern::Counts { blue, yellow } => fb >= blue && fy >= yellow,
        }
    }
}

/// Annulus about `center` (shape coordinates) with radii in lattice units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    pub center: Point,
    pub inner: f64,
    pub outer: f64,
    pub arms: usize,
    pub pattern: ArmPattern,
}

impl AnnulusSpec {
    pub fn new(center: Point, inner: f64, outer: f64, arms: usize, pattern: ArmPattern) -> Result<AnnulusSpec> {
        if !(inner > 0.0 && inner < outer) {
            return Err(Error::Invalid(format!("need 0 < inner < outer, got {inner}, {outer}")));
        }
        if arms == 0 {
            return Err(Error::Invalid("at least one arm".into()));
        }
        match pattern {
            ArmPattern::Counts { blue, yellow } if blue + yellow != arms => {
                return Err(Error::Invalid(format!("pattern has {} arms, expected {arms}", blue + yellow)))
            }
            ArmPattern::NotAllSame if arms < 2 => return Err(Error::Invalid("mixed pattern needs two arms".into())),
            _ => {}
        }
        Ok(AnnulusSpec { center, inner, outer, arms, pattern })
    }
}

/// The event of `arms` disjoint crossings of an annulus. Arms of one color
/// are vertex-disjoint paths of same-colored shapes (a unit-capacity flow);
/// arms of different colors never share a shape, though they may pass
/// through the two halves of one split iris.
#[derive(Clone, Debug)]
pub struct ArmEvent {
    pub spec: AnnulusSpec,
    /// Interior cells with centers in the closed annulus.
    cells: Vec<u32>,
    /// Local index of each grid cell, `u32::MAX` outside the annulus.
    local: Vec<u32>,
    /// 1 inner ring, 2 outer ring.
    ring: Vec<u8>,
}

impl ArmEvent {
    pub fn new(d: &Domain, spec: AnnulusSpec) -> Result<ArmEvent> {
        let z = d.to_lattice(spec.center);
        let mut cells = Vec::new();
        let mut local = vec![u32::MAX; d.grid.len()];
        let mut ring = Vec::new();
        for i in 0..d.grid.len() {
            let r = dist(d.grid.hex(i).center(), z);
            if r > spec.outer + 1.0 {
                continue;
            }
            if d.kind[i] != CellKind::Interior {
                return Err(Error::Invalid(format!(
                    "annulus of radius {} about {:?} leaves the interior (half-annulus mode is not supported)",
                    spec.outer, spec.center
                )));
            }
            if r >= spec.inner && r <= spec.outer {
                local[i] = cells.len() as u32;
                cells.push(i as u32);
                ring.push(if r < spec.inner + 1.0 {
                    1
                } else if r > spec.outer - 1.0 {
                    2
                } else {
                    0
                });
            }
        }
        if cells.is_empty() {
            return Err(Error::Invalid("annulus contains no cells".into()));
        }
        Ok(ArmEvent { spec, cells, local, ring })
    }

    /// Maximal numbers of disjoint blue and yellow crossings, each capped at
    /// `limit`.
    pub fn crossings(&self, d: &Domain, states: &[u8], limit: usize) -> [usize; 2] {
        [self.color_flow(d, states, true, limit), self.color_flow(d, states, false, limit)]
    }

    fn color_flow(&self, d: &Domain, states: &[u8], blue: bool, limit: usize) -> usize {
        // shape x = 2 * local + half; node 2x is its entry, 2x + 1 its exit
        let shapes = 2 * self.cells.len();
        let (src, snk) = (2 * shapes, 2 * shapes + 1);
        let mut net = FlowNet::new(2 * shapes + 2);
        let present = |li: usize, h: usize| {
            let s = states[self.cells[li] as usize];
            match s {
                0 => h == 0 && blue,
                1 => h == 0 && !blue,
                _ => (h == 0) == blue,
            }
        };
        for li in 0..self.cells.len() {
            for h in 0..2 {
                if !present(li, h) {
                    continue;
                }
                let x = 2 * li + h;
                net.add(2 * x, 2 * x + 1);
                match self.ring[li] {
                    1 => net.add(src, 2 * x),
                    2 => net.add(2 * x + 1, snk),
                    _ => {}
                }
            }
            let i = self.cells[li] as usize;
            for e in 0..3 {
                let Some(j) = d.grid.neighbor(i, e) else { continue };
                let lj = self.local[j];
                if lj == u32::MAX {
                    continue;
                }
                if edge_blue(states[i], e) == blue && edge_blue(states[j], e + 3) == blue {
                    let x = 2 * li + half(states[i], e);
                    let y = 2 * lj as usize + half(states[j], e + 3);
                    net.add(2 * x + 1, 2 * y);
                    net.add(2 * y + 1, 2 * x);
                }
            }
        }
        net.max_flow(src, snk, limit)
    }

    pub fn holds(&self, d: &Domain, states: &[u8]) -> bool {
        let [fb, fy] = self.crossings(d, states, self.spec.arms);
        self.spec.pattern.holds(self.spec.arms, fb, fy)
    }
}

impl Observable for ArmEvent {
    fn id(&self) -> String {
        format!("arms-{}-{}-{}-{}", self.spec.arms, self.spec.pattern.label(), self.spec.inner, self.spec.outer)
    }

    fn eval(&self, d: &Domain, states: &[u8], _scratch: &mut Scratch) -> f64 {
        self.holds(d, states) as u8 as f64
    }
}

// Unit-capacity flow network.
struct FlowNet {
    head: Vec<u32>,
    next: Vec<u32>,
    to: Vec<u32>,
    cap: Vec<u8>,
}

impl FlowNet {
    const NONE: u32 = u32::MAX;

    fn new(n: usize) -> FlowNet {
        FlowNet { head: vec![Self::NONE; n], next: Vec::new(), to: Vec::new(), cap: Vec::new() }
    }

    fn add(&mut self, u: usize, v: usize) {
        for (a, b, c) in [(u, v, 1), (v, u, 0)] {
            self.to.push(b as u32);
            self.cap.push(c);
            self.next.push(self.head[a]);
            self.head[a] = (self.to.len() - 1) as u32;
        }
    }

    fn max_flow(&mut self, s: usize, t: usize, limit: usize) -> usize {
        let n = self.head.len();
        let mut via = vec![Self::NONE; n];
        let mut queue = VecDeque::new();
        let mut flow = 0;
        while flow < limit {
            via.iter_mut().for_each(|v| *v = Self::NONE);
            queue.clear();
            queue.push_back(s);
            let mut reached = false;
            'bfs: while let Some(u) = queue.pop_front() {
                let mut e = self.head[u];
                while e != Self::NONE {
                    let v = self.to[e as usize] as usize;
                    if self.cap[e as usize] > 0 && v != s && via[v] == Self::NONE {
                        via[v] = e;
                        if v == t {
                            reached = true;
                            break 'bfs;
                        }
                        queue.push_back(v);
                    }
                    e = self.next[e as usize];
                }
            }
            if !reached {
                break;
            }
            let mut v = t;
            while v != s {
                let e = via[v] as usize;
                self.cap[e] -= 1;
                self.cap[e ^ 1] += 1;
                v = self.to[e ^ 1] as usize;
            }
            flow += 1;
        }
        flow
    }
}

pub fn estimate_arm_event(d: &Domain, law: &FlowerLaw, spec: AnnulusSpec, n: usize, seed: u64) -> Result<Estimate> {
    let ev = ArmEvent::new(d, spec)?;
    Ok(estimate_observables(d, law, &[&ev], n, seed)?[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmRow {
    pub k: usize,
    pub pattern: String,
    pub eta: f64,
    pub l: f64,
    pub est: f64,
    pub stderr: f64,
    pub n: usize,
}

impl ArmRow {
    pub const CSV_HEADER: &'static str = "k,pattern,eta,l,est,stderr,n";

    pub fn to_csv(&self) -> String {
        format!("{},{},{},{},{},{},{}", self.k, self.pattern, self.eta, self.l, self.est, self.stderr, self.n)
    }
}

/// Several annulus events estimated on the same configurations.
pub fn arm_scan(d: &Domain, law: &FlowerLaw, specs: &[AnnulusSpec], n: usize, seed: u64) -> Result<Vec<ArmRow>> {
    let events = specs.iter().map(|&s| ArmEvent::new(d, s)).collect::<Result<Vec<_>>>()?;
    let obs: Vec<&dyn Observable> = events.iter().map(|e| e as &dyn Observable).collect();
    let est = estimate_observables(d, law, &obs, n, seed)?;
    Ok(specs
        .iter()
        .zip(est)
        .map(|(s, e)| ArmRow {
            k: s.arms,
            pattern: s.pattern.label(),
            eta: s.inner,
            l: s.outer,
            est: e.mean,
            stderr: e.stderr,
            n: e.n,
        })
        .collect())
}

/// Decay exponent of an arm probability: minus the slope of `ln P` against
/// `ln(eta / l)` reversed, so that `P ~ (eta / l)^slope` gives `slope`.
pub fn arm_exponent(rows: &[ArmRow]) -> Option<LineFit> {
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.est > 0.0).map(|r| ((r.eta / r.l).ln(), r.est.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_domain, FloralArrangement, ShapeSpec};
    use crate::measure::ModelParams;

    fn line(n: usize, h: f64) -> Vec<Point> {
        (0..=n).map(|k| [k as f64 * h, 0.3 * k as f64 * h]).collect()
    }

    #[test]
    fn box_counting_controls() {
        let seg = line(1000, 0.256);
        let rep = box_dimension(&seg, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap();
        assert!((rep.slope - 1.0).abs() < 0.05, "{rep:?}");
        // boustrophedon through every unit cell of a 256 square
        let mut snake = Vec::new();
        for row in 0..256 {
            let y = row as f64 + 0.5;
            let (x0, x1) = if row % 2 == 0 { (0.5, 255.5) } else { (255.5, 0.5) };
            snake.push([x0, y]);
            snake.push([x1, y]);
        }
        let rep = box_dimension(&snake, &[1.0, 2.0, 4.0, 8.0, 16.0]).unwrap();
        assert!((rep.slope - 2.0).abs() < 0.05, "{rep:?}");
        let mut rev = snake.clone();
        rev.reverse();
        assert_eq!(box_dimension(&rev, &[1.0, 2.0, 4.0, 8.0, 16.0]).unwrap().counts, rep.counts);
        assert!(box_dimension(&[[1.0, 1.0], [1.0, 1.0]], &[1.0, 2.0, 4.0, 8.0]).is_err());
        assert!(box_dimension(&seg, &[1.0, 2.0, 3.0]).is_err());
        assert!(box_dimension(&seg, &[1.0, 1.5, 2.0, 3.0]).is_err());
    }

    #[test]
    fn frechet_oracle() {
        let a = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let b = [[0.0, 1.0], [2.0, 1.0]];
        assert_eq!(frechet(&a, &a), 0.0);
        // the middle vertex of a must pair with an end of b
        assert!((frechet(&a, &b) - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(frechet(&a, &b), frechet(&b, &a));
    }

    #[test]
    fn doublebacks() {
        assert_eq!(detect_doubleback(&line(200, 0.1), 2.0, 0.3).unwrap(), 0);
        // out along y = 0, U-turn, back along y = 0.2
        let mut s: Vec<Point> = (0..=50).map(|k| [k as f64 * 0.1, 0.0]).collect();
        s.extend((0..=50).rev().map(|k| [k as f64 * 0.1, 0.2]));
        assert!(detect_doubleback(&s, 2.0, 0.4).unwrap() >= 1);
        assert_eq!(detect_doubleback(&s, 2.0, 0.1).unwrap(), 0);
        // parallel strands joined by a wide detour
        let mut p: Vec<Point> = (0..=50).map(|k| [k as f64 * 0.1, 0.0]).collect();
        p.extend((1..=30).map(|k| [5.0, -(k as f64) * 0.1]));
        p.extend((0..=60).map(|k| [5.0 - k as f64 * 0.1, -3.0]));
        p.extend((1..=28).map(|k| [-1.0, -3.0 + k as f64 * 0.1]));
        p.extend((0..=50).map(|k| [-1.0 + k as f64 * 0.1, -0.2]));
        assert!(detect_doubleback(&p, 3.0, 0.3).unwrap() >= 1);
        assert!(detect_doubleback(&p, 1.0, 2.0).is_err());
    }

    fn loop_at(c: Point, r: f64, n: usize) -> Vec<Point> {
        // excursion from the point c out to radius r and back
        let mut v = Vec::new();
        for k in 0..n {
            let th = std::f64::consts::TAU * k as f64 / n as f64;
            let rad = r * (th / 2.0).sin();
            v.push([c[0] + rad * th.cos(), c[1] + rad * th.sin()]);
        }
        v
    }

    #[test]
    fn triple_visits() {
        assert!(!detect_triple_visit(&line(500, 0.1), 0.5, 5.0).unwrap());
        // come in from far, two loops through the origin, leave far
        let mut p: Vec<Point> = (0..=100).map(|k| [-10.0 + k as f64 * 0.1, 0.0]).collect();
        p.extend(loop_at([0.0, 0.0], 8.0, 200));
        p.extend(loop_at([0.0, 0.0], 8.0, 200).iter().map(|q| [q[0], -q[1]]));
        p.extend((0..=100).map(|k| [0.0, -(k as f64) * 0.1]));
        assert!(detect_triple_visit(&p, 0.5, 5.0).unwrap());
        assert!(!detect_triple_visit(&p, 0.5, 9.0).unwrap());
        assert!(detect_triple_visit(&p, 5.0, 0.5).is_err());
        // one loop only: two visits, no triple
        let mut q: Vec<Point> = (0..=100).map(|k| [-10.0 + k as f64 * 0.1, 0.0]).collect();
        q.extend(loop_at([0.0, 0.0], 8.0, 200));
        q.extend((0..=100).map(|k| [0.0, -(k as f64) * 0.1]));
        assert!(!detect_triple_visit(&q, 0.5, 5.0).unwrap());
    }

    #[test]
    fn boundary_double_visits() {
        // boundary is the line y = 0; the path lives in y > 0
        let bd = |p: Point| p[1];
        let mut p: Vec<Point> = (0..=100).map(|k| [-10.0 + k as f64 * 0.1, 10.0 - k as f64 * 0.0999]).collect();
        let pinch = *p.last().unwrap();
        p.extend(loop_at(pinch, 6.0, 200).iter().map(|q| [q[0], pinch[1] + (q[1] - pinch[1]).abs()]));
        p.extend((1..=100).map(|k| [pinch[0] + k as f64 * 0.1, pinch[1] + k as f64 * 0.1]));
        assert!(pinch[1] < 0.05);
        assert!(detect_boundary_double_visit(&p, &bd, 0.3, 4.0).unwrap());
        // the same path lifted away from the boundary
        let lifted: Vec<Point> = p.iter().map(|q| [q[0], q[1] + 5.0]).collect();
        assert!(!detect_boundary_double_visit(&lifted, &bd, 0.3, 4.0).unwrap());
    }

    #[test]
    fn dist_metric_examples() {
        // up, across, down
        let mut base: Vec<Point> = (0..=30).map(|k| [0.0, k as f64 * 0.1]).collect();
        base.extend((1..=100).map(|k| [k as f64 * 0.1, 3.0]));
        base.extend((1..=30).map(|k| [10.0, 3.0 - k as f64 * 0.1]));
        let (a, c) = ([0.0, 0.0], [10.0, 0.0]);
        let w: Vec<f64> = (1..=20).map(|l| 0.5f64.powi(l)).chain([0.5f64.powi(20)]).collect();
        let same = CurvePair { first: base.clone(), second: base.clone(), a, c, radius: 1.0 };
        assert_eq!(dist_metric(&same, &w).unwrap(), 0.0);
        // the middle run moved up by 0.5
        let mut moved: Vec<Point> = (0..=35).map(|k| [0.0, k as f64 * 0.1]).collect();
        moved.extend((1..=100).map(|k| [k as f64 * 0.1, 3.5]));
        moved.extend((1..=35).map(|k| [10.0, 3.5 - k as f64 * 0.1]));
        let pair = CurvePair { first: base.clone(), second: moved, a, c, radius: 1.0 };
        assert!((dist_metric(&pair, &w).unwrap() - 0.5).abs() < 1e-9);
        // differences only inside the level-3 ball about c
        let mut tip = base.clone();
        let last = tip.len() - 1;
        tip[last - 1] = [10.1, 0.1];
        let pair = CurvePair { first: base.clone(), second: tip, a, c, radius: 1.0 };
        let v = dist_metric(&pair, &w).unwrap();
        let tail: f64 = w[2..].iter().sum();
        assert!(v <= tail * 0.2 + 1e-12, "{v}");
        assert!(dist_metric(&same, &[0.5, 0.4]).is_err());
    }

    #[test]
    fn arm_flows_on_fixed_patterns() {
        let shape = ShapeSpec::new("rectangle").with("width", 1.0).with("height", 1.0).build().unwrap();
        let d = build_domain(shape, 1.0 / 40.0, &FloralArrangement::periodic(3).unwrap()).unwrap();
        let spec = AnnulusSpec::new([0.5, 0.5], 3.0, 10.0, 1, ArmPattern::Monochrome { blue: true }).unwrap();
        let ev = ArmEvent::new(&d, spec).unwrap();
        let all_blue = vec![0u8; d.grid.len()];
        let [fb, fy] = ev.crossings(&d, &all_blue, 100);
        assert_eq!(fy, 0);
        // as many disjoint radial paths as cells on the inner ring
        let inner = ev.ring.iter().filter(|&&r| r == 1).count();
        assert!(fb >= 6 && fb <= inner, "{fb} {inner}");
        // a yellow circle at radius 6 blocks every blue crossing
        let z = d.to_lattice([0.5, 0.5]);
        let ringed: Vec<u8> = (0..d.grid.len())
            .map(|i| if (dist(d.grid.hex(i).center(), z) - 6.0).abs() < 0.9 { 1 } else { 0 })
            .collect();
        assert_eq!(ev.crossings(&d, &ringed, 100), [0, 0]);
        let big = AnnulusSpec::new([0.5, 0.5], 3.0, 30.0, 1, ArmPattern::NotAllSame);
        assert!(big.is_err());
        let wide = AnnulusSpec::new([0.5, 0.5], 3.0, 30.0, 2, ArmPattern::NotAllSame).unwrap();
        assert!(ArmEvent::new(&d, wide).is_err());
        assert!(AnnulusSpec::new([0.5, 0.5], 3.0, 10.0, 5, ArmPattern::Counts { blue: 3, yellow: 1 }).is_err());
        assert_eq!(ArmPattern::parse("BBYBY").unwrap(), ArmPattern::Counts { blue: 3, yellow: 2 });
        assert_eq!(ArmPattern::parse("BBYBY").unwrap().swapped().label(), "BBYYY");
    }

    #[test]
    fn arm_probabilities_are_nontrivial_and_color_symmetric() {
        let shape = ShapeSpec::new("rectangle").with("width", 1.0).with("height", 1.0).build().unwrap();
        let d = build_domain(shape, 1.0 / 48.0, &FloralArrangement::periodic(3).unwrap()).unwrap();
        let law = FlowerLaw::new(ModelParams::default());
        let one = AnnulusSpec::new([0.5, 0.5], 2.0, 14.0, 1, ArmPattern::Monochrome { blue: true }).unwrap();
        let two = AnnulusSpec::new([0.5, 0.5], 2.0, 14.0, 2, ArmPattern::NotAllSame).unwrap();
        let yellow = AnnulusSpec { pattern: ArmPattern::Monochrome { blue: false }, ..one };
        let rows = arm_scan(&d, &law, &[one, two, yellow], 2000, 3).unwrap();
        eprintln!("{rows:?}");
        assert!(rows[0].est > 0.5 && rows[0].est < 1.0, "{rows:?}");
        assert!(rows[1].est > 0.1 && rows[1].est < rows[0].est, "{rows:?}");
        let se = rows[0].stderr.hypot(rows[2].stderr).max(1e-3);
        assert!((rows[0].est - rows[2].est).abs() < 4.0 * se, "{rows:?}");
        assert_eq!(ArmRow::CSV_HEADER.split(',').count(), rows[0].to_csv().split(',').count());
    }
}
