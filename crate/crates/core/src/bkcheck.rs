//! Exact checks of the disjoint-occurrence inequality for path events on a
//! single flower and its surroundings.
//!
//! Event probabilities on a scene are affine in the iris weights, so each
//! event is enumerated once into integer counts and then evaluated exactly
//! at any parameter point, including irrational points on the admissibility
//! boundary, in the field of rationals extended by the square root of two.

use crate::error::{Error, Result};
use crate::lattice::Hex;
use crate::measure::{is_trigger, sample_iris, ModelParams, IRIS_STATES};
use crate::sampler::{edge_blue, half};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};

/// `rat + irr * sqrt(2)` with rational parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QSqrt2 {
    pub rat: BigRational,
    pub irr: BigRational,
}

impl QSqrt2 {
    pub fn rational(r: BigRational) -> QSqrt2 {
        QSqrt2 { rat: r, irr: BigRational::zero() }
    }

    pub fn int(n: i64) -> QSqrt2 {
        QSqrt2::rational(BigRational::from_integer(n.into()))
    }

    pub fn ratio(n: i64, d: i64) -> QSqrt2 {
        QSqrt2::rational(BigRational::new(n.into(), d.into()))
    }

    pub fn signum(&self) -> Ordering {
        let p = self.rat.cmp(&BigRational::zero());
        let q = self.irr.cmp(&BigRational::zero());
        if q == Ordering::Equal || p == q {
            return if p == Ordering::Equal { q } else { p };
        }
        if p == Ordering::Equal {
            return q;
        }
        // opposite signs: compare rat^2 with 2 irr^2
        let two = BigRational::from_integer(2.into());
        let c = (&self.rat * &self.rat).cmp(&(two * &self.irr * &self.irr));
        if p == Ordering::Greater {
            c
        } else {
            c.reverse()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.rat.is_zero() && self.irr.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.rat.to_f64().unwrap_or(f64::NAN) + self.irr.to_f64().unwrap_or(f64::NAN) * std::f64::consts::SQRT_2
    }
}

impl Add for &QSqrt2 {
    type Output = QSqrt2;
    fn add(self, o: &QSqrt2) -> QSqrt2 {
        QSqrt2 { rat: &self.rat + &o.rat, irr: &self.irr + &o.irr }
    }
}

impl Sub for &QSqrt2 {
    type Output = QSqrt2;
    fn sub(self, o: &QSqrt2) -> QSqrt2 {
        QSqrt2 { rat: &self.rat - &o.rat, irr: &self.irr - &o.irr }
    }
}

impl Mul for &QSqrt2 {
    type Output = QSqrt2;
    fn mul(self, o: &QSqrt2) -> QSqrt2 {
        let two = BigRational::from_integer(2.into());
        QSqrt2 { rat: &self.rat * &o.rat + two * &self.irr * &o.irr, irr: &self.rat * &o.irr + &self.irr * &o.rat }
    }
}

impl fmt::Display for QSqrt2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.irr.is_zero() {
            write!(f, "{}", self.rat)
        } else {
            write!(f, "{} + {}*sqrt2", self.rat, self.irr)
        }
    }
}

/// Iris weights held exactly; `2a + 3s = 1` by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExactParams {
    a: QSqrt2,
    s: QSqrt2,
}

impl ExactParams {
    /// Any `0 <= s <= 1/3`; points with `a^2 < 2 s^2` are allowed so that
    /// the inequality can be probed outside the admissible region.
    pub fn from_s(s: BigRational) -> Result<ExactParams> {
        let s = QSqrt2::rational(s);
        let a = QSqrt2::rational((BigRational::one() - BigRational::from_integer(3.into()) * &s.rat) / BigInt::from(2));
        if s.signum() == Ordering::Less || a.signum() == Ordering::Less {
            return Err(Error::InvalidParams(format!("split weight {s} outside [0, 1/3]")));
        }
        Ok(ExactParams { a, s })
    }

    /// The admissible point with `a^2 = 2 s^2`: `s = 3 - 2 sqrt2`.
    pub fn boundary() -> ExactParams {
        let q = |r: i64, i: i64| QSqrt2 {
            rat: BigRational::from_integer(r.into()),
            irr: BigRational::from_integer(i.into()),
        };
        ExactParams { a: q(-4, 3), s: q(3, -2) }
    }

    /// Exact value of the binary64 split weight.
    pub fn from_model(p: &ModelParams) -> Result<ExactParams> {
        let s = BigRational::from_float(p.s()).ok_or_else(|| Error::InvalidParams("non-finite split weight".into()))?;
        ExactParams::from_s(s)
    }

    pub fn a(&self) -> &QSqrt2 {
        &self.a
    }

    pub fn s(&self) -> &QSqrt2 {
        &self.s
    }

    pub fn admissible(&self) -> bool {
        let two = QSqrt2::int(2);
        (&(&self.a * &self.a) - &(&two * &(&self.s * &self.s))).signum() != Ordering::Less
    }

    pub fn is_site(&self) -> bool {
        self.s.is_zero()
    }

    pub fn to_model(&self) -> Result<ModelParams> {
        ModelParams::new(self.a.to_f64(), self.s.to_f64())
    }
}

impl fmt::Display for ExactParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={} s={}", self.a, self.s)
    }
}

/// `s = k/120` for `k = 0..=20` and the boundary point.
pub fn default_grid() -> Vec<ExactParams> {
    let mut g: Vec<ExactParams> = (0..=20)
        .map(|k| ExactParams::from_s(BigRational::new(k.into(), 120.into())).expect("inside [0, 1/3]"))
        .collect();
    g.push(ExactParams::boundary());
    g
}

fn parse_rational(tok: &str) -> Option<BigRational> {
    if let Some((n, d)) = tok.split_once('/') {
        let (n, d): (BigInt, BigInt) = (n.trim().parse().ok()?, d.trim().parse().ok()?);
        return (!d.is_zero()).then(|| BigRational::new(n, d));
    }
    let (int, frac) = tok.split_once('.').unwrap_or((tok, ""));
    if frac.chars().any(|c| !c.is_ascii_digit()) {
        return None;
    }
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    Some(BigRational::new(digits, BigInt::from(10).pow(frac.len() as u32)))
}

/// Exact parameter grid, one point per line: a split weight written as a
/// fraction or a decimal, optionally preceded by the matching pure weight,
/// or the word `boundary`. `#` starts a comment.
pub fn parse_exact_grid(text: &str) -> Result<Vec<ExactParams>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Error::Config(format!("grid line {}: {msg}", ln + 1));
        if line == "boundary" {
            out.push(ExactParams::boundary());
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let vals =
            toks.iter().map(|t| parse_rational(t)).collect::<Option<Vec<_>>>().ok_or_else(|| bad("not a number"))?;
        let p = match vals.as_slice() {
            [s] => ExactParams::from_s(s.clone()),
            [a, s] => {
                let p = ExactParams::from_s(s.clone())?;
                if p.a != QSqrt2::rational(a.clone()) {
                    return Err(bad("weights do not satisfy 2a + 3s = 1"));
                }
                Ok(p)
            }
            _ => return Err(bad("expected `s` or `a s`")),
        }
        .map_err(|e| bad(&e.to_string()))?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(Error::Config("empty parameter grid".into()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneCell {
    Iris,
    /// Petal in neighbor direction `d` of the iris (petal number `d + 1`).
    Petal(u8),
    /// Independent fair cell.
    Free,
    /// Cell of fixed color; `true` is blue.
    Fixed(bool),
}

/// One flower at the origin and a few cells around it.
#[derive(Clone, Debug)]
pub struct Scene {
    hexes: Vec<Hex>,
    kinds: Vec<SceneCell>,
    index: HashMap<Hex, usize>,
    free: Vec<usize>,
}

/// Scenes are enumerated exhaustively up to this many joint states.
pub const MAX_SCENE_STATES: u64 = 1 << 20;

impl Scene {
    pub const IRIS: Hex = Hex::new(0, 0);

    /// Petal number `n` in `1..=6`.
    pub fn petal(n: usize) -> Hex {
        Self::IRIS.neighbor(n - 1)
    }

    /// The filler cell touching petals `n` and `n + 1` (mod 6).
    pub fn ring(n: usize) -> Hex {
        Self::petal(n).neighbor(n % 6)
    }

    pub fn flower() -> Scene {
        let mut s = Scene { hexes: Vec::new(), kinds: Vec::new(), index: HashMap::new(), free: Vec::new() };
        s.push(Self::IRIS, SceneCell::Iris);
        for d in 0..6 {
            s.push(Self::IRIS.neighbor(d), SceneCell::Petal(d as u8));
        }
        s
    }

    /// The flower and the six filler cells that touch two petals.
    pub fn flower_with_ring() -> Scene {
        let mut s = Self::flower();
        for n in 1..=6 {
            s.push(Self::ring(n), SceneCell::Free);
        }
        s
    }

    fn push(&mut self, h: Hex, kind: SceneCell) {
        self.index.insert(h, self.hexes.len());
        if kind == SceneCell::Free {
            self.free.push(self.hexes.len());
        }
        self.hexes.push(h);
        self.kinds.push(kind);
    }

    /// Add a free or fixed cell outside the flower.
    pub fn with_cell(mut self, h: Hex, kind: SceneCell) -> Result<Scene> {
        if matches!(kind, SceneCell::Iris | SceneCell::Petal(_)) {
            return Err(Error::Invalid("only free or fixed cells can be added".into()));
        }
        if self.index.contains_key(&h) {
            return Err(Error::Invalid(format!("cell {h:?} already in the scene")));
        }
        if self.hexes.len() >= 32 {
            return Err(Error::TooLarge("scenes hold at most 32 cells".into()));
        }
        self.push(h, kind);
        Ok(self)
    }

    pub fn cells(&self) -> &[Hex] {
        &self.hexes
    }

    pub fn kind(&self, h: Hex) -> Option<SceneCell> {
        self.index.get(&h).map(|&i| self.kinds[i])
    }

    /// Number of joint states of flower and free cells.
    pub fn states(&self) -> u64 {
        320u64.saturating_mul(1u64.checked_shl(self.free.len() as u32).unwrap_or(u64::MAX))
    }

    pub fn name(&self, h: Hex) -> String {
        if h == Self::IRIS {
            return "i".into();
        }
        if let Some(n) = (1..=6).find(|&n| Self::petal(n) == h) {
            return format!("p{n}");
        }
        if let Some(n) = (1..=6).find(|&n| Self::ring(n) == h) {
            return format!("r{n}");
        }
        format!("({},{})", h.q, h.r)
    }

    fn neighbor(&self, c: usize, e: usize) -> Option<usize> {
        self.index.get(&self.hexes[c].neighbor(e)).copied()
    }

    /// Cell states of joint state `idx`, and its weight class: 0 for a
    /// triggered iris (weight 1/2), 1 for a pure iris otherwise (weight a),
    /// 2 for a split iris (weight s). `None` for impossible states.
    fn decode(&self, idx: u64, states: &mut Vec<u8>) -> Option<usize> {
        let iris = (idx % 5) as usize;
        let petals = ((idx / 5) % 64) as u8;
        let mut free = idx / 320;
        let trig = is_trigger(petals);
        if trig && iris >= 2 {
            return None;
        }
        states.clear();
        states.resize(self.hexes.len(), 0);
        for (c, k) in self.kinds.iter().enumerate() {
            states[c] = match *k {
                SceneCell::Iris => IRIS_STATES[iris].code(),
                SceneCell::Petal(d) => (petals >> d & 1 == 0) as u8,
                SceneCell::Fixed(b) => !b as u8,
                SceneCell::Free => {
                    let v = (free & 1 == 0) as u8;
                    free >>= 1;
                    v
                }
            };
        }
        Some(if trig {
            0
        } else if iris < 2 {
            1
        } else {
            2
        })
    }

    /// Draw cell states from the flower law and fair free cells.
    pub fn sample<R: Rng + ?Sized>(&self, params: &ModelParams, rng: &mut R) -> Vec<u8> {
        let petals: u8 = rng.random_range(0..64);
        let iris = sample_iris(params, petals, rng).code();
        self.kinds
            .iter()
            .map(|k| match *k {
                SceneCell::Iris => iris,
                SceneCell::Petal(d) => (petals >> d & 1 == 0) as u8,
                SceneCell::Fixed(b) => !b as u8,
                SceneCell::Free => rng.random_bool(0.5) as u8,
            })
            .collect()
    }
}

/// Blue (or yellow) path connecting two iris-free cell sets, all of whose
/// cells must have the path's color. The path may pass through the iris.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PathEvent {
    pub blue: bool,
    pub from: Vec<Hex>,
    pub to: Vec<Hex>,
}

impl PathEvent {
    pub fn new(blue: bool, from: Vec<Hex>, to: Vec<Hex>) -> Result<PathEvent> {
        if from.is_empty() || to.is_empty() {
            return Err(Error::Spec("endpoint sets must be non-empty".into()));
        }
        if from.iter().any(|h| to.contains(h)) {
            return Err(Error::Spec("endpoint sets must be disjoint".into()));
        }
        Ok(PathEvent { blue, from, to })
    }

    fn cells(&self) -> impl Iterator<Item = &Hex> {
        self.from.iter().chain(&self.to)
    }
}

/// Events that can be combined by disjoint occurrence on a scene.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SceneEvent {
    Path(PathEvent),
    /// The cells are joined by paths of one color through the cells of
    /// `via`; the colors of the linked cells themselves do not matter.
    Linked {
        blue: bool,
        cells: Vec<Hex>,
        via: Vec<Hex>,
    },
    AllColor {
        blue: bool,
        cells: Vec<Hex>,
    },
    NotAllColor {
        blue: bool,
        cells: Vec<Hex>,
    },
}

impl SceneEvent {
    pub fn path(blue: bool, from: Vec<Hex>, to: Vec<Hex>) -> Result<SceneEvent> {
        PathEvent::new(blue, from, to).map(SceneEvent::Path)
    }

    pub fn label(&self, scene: &Scene) -> String {
        let names = |v: &[Hex]| v.iter().map(|&h| scene.name(h)).collect::<Vec<_>>().join("+");
        let col = |b: bool| if b { 'B' } else { 'Y' };
        match self {
            SceneEvent::Path(p) => format!("{}[{}|{}]", col(p.blue), names(&p.from), names(&p.to)),
            SceneEvent::Linked { blue, cells, via } => format!("{}~[{}|{}]", col(*blue), names(cells), names(via)),
            SceneEvent::AllColor { blue, cells } => format!("{}=[{}]", col(*blue), names(cells)),
            SceneEvent::NotAllColor { blue, cells } => format!("{}!=[{}]", col(*blue), names(cells)),
        }
    }

    fn compile(&self, scene: &Scene) -> Result<Compiled> {
        let idx =
            |h: &Hex| scene.index.get(h).copied().ok_or_else(|| Error::Spec(format!("cell {h:?} is not in the scene")));
        let list = |v: &[Hex]| v.iter().map(idx).collect::<Result<Vec<usize>>>();
        Ok(match self {
            SceneEvent::Path(p) => {
                if p.cells().any(|&h| scene.kind(h) == Some(SceneCell::Iris)) {
                    return Err(Error::Spec("endpoint sets may not contain an iris".into()));
                }
                Compiled::Path { blue: p.blue, from: list(&p.from)?, to: list(&p.to)? }
            }
            SceneEvent::Linked { blue, cells, via } => {
                if cells.len() < 2 || cells.iter().any(|&h| scene.kind(h) == Some(SceneCell::Iris)) {
                    return Err(Error::Spec("linked cells: at least two, no iris".into()));
                }
                if via.iter().any(|h| cells.contains(h)) || via.len() > 12 {
                    return Err(Error::Spec("linking cells: at most 12, disjoint from the linked ones".into()));
                }
                Compiled::Linked { blue: *blue, cells: list(cells)?, via: list(via)? }
            }
            SceneEvent::AllColor { blue, cells } => Compiled::All { blue: *blue, cells: list(cells)? },
            SceneEvent::NotAllColor { blue, cells } => Compiled::NotAll { blue: *blue, cells: list(cells)? },
        })
    }

    /// Cells whose shapes the event may claim through its endpoints.
    fn endpoints(&self) -> Vec<Hex> {
        match self {
            SceneEvent::Path(p) => p.cells().copied().collect(),
            SceneEvent::Linked { cells, .. }
            | SceneEvent::AllColor { cells, .. }
            | SceneEvent::NotAllColor { cells, .. } => cells.clone(),
        }
    }
}

#[derive(Clone, Debug)]
enum Compiled {
    Path { blue: bool, from: Vec<usize>, to: Vec<usize> },
    Linked { blue: bool, cells: Vec<usize>, via: Vec<usize> },
    All { blue: bool, cells: Vec<usize> },
    NotAll { blue: bool, cells: Vec<usize> },
}

// A split iris has two shapes, 2c (blue half) and 2c + 1 (yellow half);
// any other cell is the single shape 2c.
fn shape_bit(c: usize, h: usize) -> u64 {
    1u64 << (2 * c + h)
}

fn cell_blue(states: &[u8], c: usize) -> bool {
    states[c] == 0
}

/// Shapes of `blue` color reachable in one step from shape (c, h).
fn steps(scene: &Scene, states: &[u8], c: usize, h: usize, blue: bool, out: &mut Vec<(usize, usize)>) {
    out.clear();
    for e in 0..6 {
        if half(states[c], e) != h || edge_blue(states[c], e) != blue {
            continue;
        }
        if let Some(d) = scene.neighbor(c, e) {
            if edge_blue(states[d], e + 3) == blue {
                out.push((d, half(states[d], e + 3)));
            }
        }
    }
}

fn keep_minimal(mut masks: Vec<u64>) -> Vec<u64> {
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks.dedup();
    let mut out: Vec<u64> = Vec::new();
    for m in masks {
        if !out.iter().any(|&k| k & m == k) {
            out.push(m);
        }
    }
    out
}

impl Compiled {
    /// Minimal sets of shapes that certify the event, empty if it fails.
    fn witnesses(&self, scene: &Scene, states: &[u8]) -> Vec<u64> {
        match self {
            Compiled::All { blue, cells } => {
                if cells.iter().all(|&c| edge_blue(states[c], 0) == *blue && states[c] <= 1) {
                    vec![cells.iter().fold(0, |m, &c| m | shape_bit(c, 0))]
                } else {
                    Vec::new()
                }
            }
            Compiled::NotAll { blue, cells } => cells
                .iter()
                .filter(|&&c| !(states[c] <= 1 && cell_blue(states, c) == *blue))
                .map(|&c| shape_bit(c, 0))
                .collect(),
            Compiled::Path { blue, from, to } => {
                if from.iter().chain(to).any(|&c| states[c] > 1 || cell_blue(states, c) != *blue) {
                    return Vec::new();
                }
                let base = from.iter().chain(to).fold(0, |m, &c| m | shape_bit(c, 0));
                let target: u64 = to.iter().fold(0, |m, &c| m | shape_bit(c, 0));
                let mut found = Vec::new();
                let mut buf = Vec::new();
                for &s in from {
                    path_search(scene, states, *blue, (s, 0), shape_bit(s, 0), target, base, &mut found, &mut buf);
                }
                keep_minimal(found)
            }
            Compiled::Linked { blue, cells, via } => linked_witnesses(scene, states, *blue, cells, via),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn path_search(
    scene: &Scene,
    states: &[u8],
    blue: bool,
    at: (usize, usize),
    used: u64,
    target: u64,
    base: u64,
    found: &mut Vec<u64>,
    buf: &mut Vec<(usize, usize)>,
) {
    steps(scene, states, at.0, at.1, blue, buf);
    let next: Vec<(usize, usize)> = buf.clone();
    for (d, h) in next {
        let b = shape_bit(d, h);
        if used & b != 0 {
            continue;
        }
        if target & b != 0 {
            found.push(base | used | b);
        } else {
            path_search(scene, states, blue, (d, h), used | b, target, base, found, buf);
        }
    }
}

fn linked_witnesses(scene: &Scene, states: &[u8], blue: bool, terminals: &[usize], via: &[usize]) -> Vec<u64> {
    let is_term = |c: usize| terminals.contains(&c);
    // shapes of the event's color among the linking cells
    let mut cand: Vec<(usize, usize)> = Vec::new();
    for &c in via {
        if states[c] > 1 {
            cand.push((c, !blue as usize));
        } else if cell_blue(states, c) == blue {
            cand.push((c, 0));
        }
    }
    // adjacency between terminals and candidates, as bit masks over
    // terminal positions and candidate positions
    let nt = terminals.len();
    let node = |c: usize, h: usize| -> Option<usize> {
        terminals.iter().position(|&t| t == c).or_else(|| cand.iter().position(|&x| x == (c, h)).map(|k| nt + k))
    };
    let n = nt + cand.len();
    if n > 24 {
        return Vec::new();
    }
    let mut adj = vec![0u32; n];
    for (k, &t) in terminals.iter().enumerate() {
        for e in 0..6 {
            let Some(d) = scene.neighbor(t, e) else { continue };
            if is_term(d) || edge_blue(states[d], e + 3) == blue {
                if let Some(j) = node(d, half(states[d], e + 3)) {
                    adj[k] |= 1 << j;
                    adj[j] |= 1 << k;
                }
            }
        }
    }
    let mut buf = Vec::new();
    for (k, &(c, h)) in cand.iter().enumerate() {
        steps(scene, states, c, h, blue, &mut buf);
        for &(d, hd) in &buf {
            if let Some(j) = node(d, hd) {
                adj[nt + k] |= 1 << j;
            }
        }
    }
    let term_mask: u32 = (1 << nt) - 1;
    let mut out = Vec::new();
    for sub in 0u32..(1 << cand.len()) {
        let allowed = term_mask | (sub << nt);
        let mut seen = 1u32;
        let mut frontier = 1u32;
        while frontier != 0 {
            let k = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let new = adj[k] & allowed & !seen;
            seen |= new;
            frontier |= new;
        }
        if seen & term_mask == term_mask {
            let mask =
                (0..cand.len()).filter(|k| sub >> k & 1 == 1).fold(0, |m, k| m | shape_bit(cand[k].0, cand[k].1));
            out.push(mask);
        }
    }
    keep_minimal(out)
}

fn disjoint_choice(lists: &[&[u64]], used: u64) -> bool {
    match lists.split_first() {
        None => true,
        Some((first, rest)) => first.iter().any(|&m| m & used == 0 && disjoint_choice(rest, used | m)),
    }
}

/// Probability as an affine function of the iris weights:
/// `(trig / 2 + pure * a + split * s) / 2^den_log2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Affine {
    pub trig: u64,
    pub pure: u64,
    pub split: u64,
    pub den_log2: u32,
}

impl Affine {
    pub fn eval(&self, p: &ExactParams) -> QSqrt2 {
        let num = &(&QSqrt2::ratio(self.trig as i64, 2) + &(&QSqrt2::int(self.pure as i64) * &p.a))
            + &(&QSqrt2::int(self.split as i64) * &p.s);
        let den = QSqrt2::rational(BigRational::new(BigInt::one(), BigInt::one() << self.den_log2));
        &num * &den
    }

    pub fn eval_f64(&self, a: f64, s: f64) -> f64 {
        (self.trig as f64 / 2.0 + self.pure as f64 * a + self.split as f64 * s) / 2f64.powi(self.den_log2 as i32)
    }
}

/// Exhaustive tables of witnesses for a list of events on one scene.
pub struct Enumeration {
    scene: Scene,
    labels: Vec<String>,
    class: Vec<u8>,
    /// Per event: offsets into `masks`, one range per joint state.
    offsets: Vec<Vec<u32>>,
    masks: Vec<Vec<u64>>,
}

const IMPOSSIBLE: u8 = u8::MAX;

impl Enumeration {
    pub fn new(scene: &Scene, events: &[SceneEvent]) -> Result<Enumeration> {
        let total = scene.states();
        if total > MAX_SCENE_STATES {
            return Err(Error::TooLarge(format!("scene has {total} joint states, limit {MAX_SCENE_STATES}")));
        }
        let compiled = events.iter().map(|e| e.compile(scene)).collect::<Result<Vec<_>>>()?;
        let mut class = Vec::with_capacity(total as usize);
        let mut offsets = vec![vec![0u32]; events.len()];
        let mut masks = vec![Vec::new(); events.len()];
        let mut states = Vec::new();
        for idx in 0..total {
            let cl = scene.decode(idx, &mut states);
            class.push(cl.map_or(IMPOSSIBLE, |c| c as u8));
            for (k, ev) in compiled.iter().enumerate() {
                if cl.is_some() {
                    masks[k].extend(ev.witnesses(scene, &states));
                }
                offsets[k].push(masks[k].len() as u32);
            }
        }
        Ok(Enumeration {
            scene: scene.clone(),
            labels: events.iter().map(|e| e.label(scene)).collect(),
            class,
            offsets,
            masks,
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn witnesses(&self, k: usize, idx: usize) -> &[u64] {
        &self.masks[k][self.offsets[k][idx] as usize..self.offsets[k][idx + 1] as usize]
    }

    fn count(&self, mut hit: impl FnMut(usize) -> bool) -> Affine {
        let mut c = [0u64; 3];
        for (idx, &cl) in self.class.iter().enumerate() {
            if cl != IMPOSSIBLE && hit(idx) {
                c[cl as usize] += 1;
            }
        }
        Affine { trig: c[0], pure: c[1], split: c[2], den_log2: 6 + self.scene.free.len() as u32 }
    }

    /// Probability that the listed events occur disjointly.
    pub fn disjoint(&self, tuple: &[usize]) -> Affine {
        let mut lists: Vec<&[u64]> = Vec::with_capacity(tuple.len());
        self.count(|idx| {
            lists.clear();
            lists.extend(tuple.iter().map(|&k| self.witnesses(k, idx)));
            disjoint_choice(&lists, 0)
        })
    }

    /// Probability that the listed events all occur.
    pub fn intersection(&self, tuple: &[usize]) -> Affine {
        self.count(|idx| tuple.iter().all(|&k| !self.witnesses(k, idx).is_empty()))
    }

    /// Total mass of the scene's joint law.
    pub fn total(&self) -> Affine {
        self.count(|_| true)
    }
}

/// Exact probability of the disjoint occurrence of `events` on `scene`.
pub fn event_expectation(scene: &Scene, events: &[SceneEvent]) -> Result<Affine> {
    let en = Enumeration::new(scene, events)?;
    Ok(en.disjoint(&(0..events.len()).collect::<Vec<_>>()))
}

/// Whether the events occur disjointly on the given cell states.
pub fn occurs_disjointly(scene: &Scene, events: &[SceneEvent], states: &[u8]) -> Result<bool> {
    let compiled = events.iter().map(|e| e.compile(scene)).collect::<Result<Vec<_>>>()?;
    let w: Vec<Vec<u64>> = compiled.iter().map(|c| c.witnesses(scene, states)).collect();
    let lists: Vec<&[u64]> = w.iter().map(|v| v.as_slice()).collect();
    Ok(disjoint_choice(&lists, 0))
}

/// Events and the tuples of them to test.
pub struct Catalog {
    pub scene: Scene,
    pub events: Vec<SceneEvent>,
    pub tuples: Vec<Vec<usize>>,
}

impl Catalog {
    /// Rejects tuples whose path endpoint sets overlap or contain an iris.
    pub fn new(scene: Scene, events: Vec<SceneEvent>, tuples: Vec<Vec<usize>>) -> Result<Catalog> {
        for e in &events {
            if !matches!(e, SceneEvent::Path(_)) {
                return Err(Error::Spec(format!("{} is not a path event", e.label(&scene))));
            }
            e.compile(&scene)?;
        }
        for t in &tuples {
            if t.len() < 2 || t.iter().any(|&k| k >= events.len()) {
                return Err(Error::Spec(format!("bad tuple {t:?}")));
            }
            for (i, &x) in t.iter().enumerate() {
                for &y in &t[i + 1..] {
                    let ex = events[x].endpoints();
                    if events[y].endpoints().iter().any(|h| ex.contains(h)) {
                        return Err(Error::Spec(format!(
                            "{} and {} share an endpoint",
                            events[x].label(&scene),
                            events[y].label(&scene)
                        )));
                    }
                }
            }
        }
        Ok(Catalog { scene, events, tuples })
    }

    /// Two-point path events among petals and the filler ring, both colors:
    /// every pair and triple built from petal pairs, and pairs mixing petal
    /// and ring endpoints drawn with a fixed seed.
    pub fn standard() -> Catalog {
        let scene = Scene::flower_with_ring();
        let ends: Vec<Hex> = (1..=6).map(Scene::petal).chain((1..=6).map(Scene::ring)).collect();
        let mut events = Vec::new();
        let mut pairs = Vec::new();
        for blue in [true, false] {
            for i in 0..ends.len() {
                for j in i + 1..ends.len() {
                    pairs.push((i, j, blue));
                    events.push(SceneEvent::path(blue, vec![ends[i]], vec![ends[j]]).expect("distinct cells"));
                }
            }
        }
        let petal_only = |k: usize| pairs[k].1 < 6;
        let disjoint = |x: usize, y: usize| {
            let (a, b, _) = pairs[x];
            let (c, d, _) = pairs[y];
            a != c && a != d && b != c && b != d
        };
        let n = events.len();
        let mut tuples = Vec::new();
        for x in 0..n {
            for y in x + 1..n {
                if petal_only(x) && petal_only(y) && disjoint(x, y) {
                    tuples.push(vec![x, y]);
                }
            }
        }
        for x in 0..n {
            for y in x + 1..n {
                for z in y + 1..n {
                    if petal_only(x)
                        && petal_only(y)
                        && petal_only(z)
                        && disjoint(x, y)
                        && disjoint(x, z)
                        && disjoint(y, z)
                    {
                        tuples.push(vec![x, y, z]);
                    }
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut mixed = 0;
        while mixed < 120 {
            let x = rng.random_range(0..n);
            let y = rng.random_range(0..n);
            if x < y && (!petal_only(x) || !petal_only(y)) && disjoint(x, y) && !tuples.contains(&vec![x, y]) {
                tuples.push(vec![x, y]);
                mixed += 1;
            }
        }
        Catalog::new(scene, events, tuples).expect("standard catalog is valid")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BkRow {
    pub tuple_id: String,
    pub a: f64,
    pub s: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// Exact sign of `rhs - lhs`.
    pub holds: bool,
    pub tight: bool,
}

impl BkRow {
    pub const CSV_HEADER: &'static str = "tuple_id,a,s,lhs,rhs,margin,verdict";

    pub fn to_csv(&self) -> String {
        let verdict = if !self.holds {
            "violated"
        } else if self.tight {
            "equal"
        } else {
            "holds"
        };
        format!("{},{},{},{},{},{},{}", self.tuple_id, self.a, self.s, self.lhs, self.rhs, self.margin, verdict)
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct BkReport {
    pub rows: Vec<BkRow>,
    pub tuples: usize,
    pub points: usize,
}

impl BkReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.holds).count()
    }

    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }
}

/// Checks `P(X1 o ... o Xn) <= P(X1)...P(Xn)` exactly for every tuple at
/// every grid point. A violation at an admissible point is an error.
pub fn verify_bk_catalog(catalog: &Catalog, grid: &[ExactParams]) -> Result<BkReport> {
    let en = Enumeration::new(&catalog.scene, &catalog.events)?;
    let singles: Vec<Affine> = (0..catalog.events.len()).map(|k| en.disjoint(&[k])).collect();
    let mut rows = Vec::new();
    for t in &catalog.tuples {
        let joint = en.disjoint(t);
        let id = t.iter().map(|&k| en.label(k)).collect::<Vec<_>>().join("*");
        for p in grid {
            let lhs = joint.eval(p);
            let rhs = t.iter().fold(QSqrt2::int(1), |acc, &k| &acc * &singles[k].eval(p));
            let margin = &rhs - &lhs;
            let sign = margin.signum();
            if sign == Ordering::Less && p.admissible() {
                return Err(Error::Violation(format!("{id} at {p}: lhs {lhs} > rhs {rhs}")));
            }
            rows.push(BkRow {
                tuple_id: id.clone(),
                a: p.a.to_f64(),
                s: p.s.to_f64(),
                lhs: lhs.to_f64(),
                rhs: rhs.to_f64(),
                margin: margin.to_f64(),
                holds: sign != Ordering::Less,
                tight: sign == Ordering::Equal,
            });
        }
    }
    Ok(BkReport { rows, tuples: catalog.tuples.len(), points: grid.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterexample {
    /// Disjoint occurrence of the link event and the complement.
    pub lhs: f64,
    /// Product of their probabilities.
    pub rhs: f64,
    pub strict: bool,
    /// `lhs == rhs` exactly: the product-measure regime.
    pub equality: bool,
    /// Disjoint occurrence and plain intersection agree exactly.
    pub coincide: bool,
}

/// The link between petals 1, 4 and 5 through the iris against the
/// complement of "petals 1, 4, 5 all blue".
pub fn counterexample_check(params: &ExactParams) -> Result<Counterexample> {
    let scene = Scene::flower();
    let cells = vec![Scene::petal(1), Scene::petal(4), Scene::petal(5)];
    let events = [
        SceneEvent::Linked { blue: true, cells: cells.clone(), via: vec![Scene::IRIS] },
        SceneEvent::NotAllColor { blue: true, cells },
    ];
    let en = Enumeration::new(&scene, &events)?;
    let lhs = en.disjoint(&[0, 1]);
    let inter = en.intersection(&[0, 1]);
    let l = lhs.eval(params);
    let r = &en.disjoint(&[0]).eval(params) * &en.disjoint(&[1]).eval(params);
    let diff = (&l - &r).signum();
    Ok(Counterexample {
        lhs: l.to_f64(),
        rhs: r.to_f64(),
        strict: diff == Ordering::Greater,
        equality: diff == Ordering::Equal,
        coincide: lhs == inter,
    })
}
