//! Sampling full configurations, cluster connectivity and crossing events.

use crate::error::{Error, Result};
use crate::lattice::domain::{CellKind, CellRole, Domain, NO_STATE};
use crate::lattice::shapes::Point;
use crate::measure::{sample_iris, FlowerLaw, HexState, PartialFlower};
use crate::rng::{replica_stream, Stream};
use crate::stats::Estimate;
use crate::union_find::UnionFind;
use rand::Rng;
use rayon::prelude::*;

/// States of all cells of a domain (`NO_STATE` outside).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub states: Vec<u8>,
}

impl Configuration {
    /// Boundary states only; interior cells undetermined.
    pub fn boundary_only(d: &Domain) -> Configuration {
        Configuration { states: d.fixed.clone() }
    }

    #[inline]
    pub fn state(&self, i: usize) -> Option<HexState> {
        HexState::from_code(self.states[i])
    }

    /// Run-length encoding of the states of all non-outside cells, in grid order.
    pub fn to_rle(&self, d: &Domain) -> String {
        let mut out = String::new();
        let mut run: Option<(char, usize)> = None;
        let flush = |out: &mut String, r: (char, usize)| {
            if r.1 > 1 {
                out.push_str(&r.1.to_string());
            }
            out.push(r.0);
        };
        for i in 0..d.grid.len() {
            if d.kind[i] == CellKind::Outside {
                continue;
            }
            let c = rle_symbol(self.states[i]);
            run = match run {
                Some((x, n)) if x == c => Some((x, n + 1)),
                Some(r) => {
                    flush(&mut out, r);
                    Some((c, 1))
                }
                None => Some((c, 1)),
            };
        }
        if let Some(r) = run {
            flush(&mut out, r);
        }
        out
    }

    pub fn from_rle(d: &Domain, text: &str) -> Result<Configuration> {
        let mut syms = Vec::new();
        let mut num = String::new();
        for ch in text.trim().chars() {
            if ch.is_ascii_digit() {
                num.push(ch);
                continue;
            }
            let code = rle_code(ch).ok_or_else(|| Error::Parse(format!("bad state symbol {ch:?}")))?;
            let n: usize = if num.is_empty() { 1 } else { num.parse().map_err(|_| Error::Parse("bad run".into()))? };
            num.clear();
            syms.extend(std::iter::repeat_n(code, n));
        }
        let cells: Vec<usize> = (0..d.grid.len()).filter(|&i| d.kind[i] != CellKind::Outside).collect();
        if syms.len() != cells.len() {
            return Err(Error::Configuration(format!("{} states for {} cells", syms.len(), cells.len())));
        }
        let mut states = vec![NO_STATE; d.grid.len()];
        for (&i, &c) in cells.iter().zip(&syms) {
            states[i] = c;
        }
        let cfg = Configuration { states };
        validate(d, &cfg)?;
        Ok(cfg)
    }
}

// Run-length symbols: B, Y, splits as a, b, c, and '-' for no state.
fn rle_symbol(code: u8) -> char {
    match HexState::from_code(code) {
        None => '-',
        Some(HexState::Split(k)) => (b'a' + k) as char,
        Some(s) => s.symbol(),
    }
}

fn rle_code(ch: char) -> Option<u8> {
    match ch {
        '-' => Some(NO_STATE),
        'a'..='c' => Some(HexState::Split(ch as u8 - b'a').code()),
        'B' | 'Y' => HexState::from_symbol(ch).map(HexState::code),
        _ => None,
    }
}

/// Check that a configuration agrees with the domain's boundary, has every
/// interior cell determined, and gives each flower positive probability.
pub fn validate(d: &Domain, cfg: &Configuration) -> Result<()> {
    if cfg.states.len() != d.grid.len() {
        return Err(Error::Configuration("size mismatch".into()));
    }
    for i in 0..d.grid.len() {
        match d.kind[i] {
            CellKind::Boundary if cfg.states[i] != d.fixed[i] => {
                return Err(Error::Configuration(format!("boundary cell {:?} changed", d.grid.hex(i))))
            }
            CellKind::Interior => {
                let s = cfg.state(i).ok_or_else(|| Error::Configuration("undetermined interior cell".into()))?;
                if s.is_split() && !matches!(d.role[i], CellRole::Iris(_)) {
                    return Err(Error::Configuration(format!("split state on non-iris {:?}", d.grid.hex(i))));
                }
            }
            _ => {}
        }
    }
    let law = FlowerLaw::support();
    for f in &d.flowers {
        if flower_partial(d, &cfg.states, f.cells()).is_some_and(|p| law.mass(&p) <= 0.0) {
            return Err(Error::Configuration(format!("flower at {:?} is impossible", d.grid.hex(f.iris as usize))));
        }
    }
    Ok(())
}

/// Known states of a flower's cells (boundary or given in `states`).
pub fn flower_partial(d: &Domain, states: &[u8], cells: [u32; 7]) -> Option<PartialFlower> {
    let mut p = PartialFlower::default();
    let mut any = false;
    for (k, &c) in cells.iter().enumerate() {
        let c = c as usize;
        let code = if d.kind[c] == CellKind::Boundary { d.fixed[c] } else { states[c] };
        if let Some(s) = HexState::from_code(code) {
            any = true;
            if k == 0 {
                p.iris = Some(s);
            } else {
                p.petals[k - 1] = Some(s == HexState::Blue);
            }
        }
    }
    any.then_some(p)
}

/// Fresh sample of all interior cells: petals and fillers first, then
/// irises flower by flower. Flowers cut by the boundary are completed from
/// their conditional law.
pub fn sample_configuration<R: Rng + ?Sized>(d: &Domain, law: &FlowerLaw, rng: &mut R) -> Configuration {
    let mut cfg = Configuration::boundary_only(d);
    sample_into(d, law, rng, &mut cfg);
    cfg
}

pub fn sample_into<R: Rng + ?Sized>(d: &Domain, law: &FlowerLaw, rng: &mut R, cfg: &mut Configuration) {
    if cfg.states.len() != d.grid.len() {
        cfg.states = d.fixed.clone();
    }
    let mut bits = 0u64;
    let mut left = 0u32;
    for &i in &d.interior {
        let i = i as usize;
        match d.role[i] {
            CellRole::Iris(_) => continue,
            CellRole::Petal(f, _) if d.kind[d.flowers[f as usize].iris as usize] != CellKind::Interior => {
                cfg.states[i] = NO_STATE;
                continue;
            }
            _ => {}
        }
        if left == 0 {
            bits = rng.next_u64();
            left = 64;
        }
        cfg.states[i] = (bits & 1) as u8;
        bits >>= 1;
        left -= 1;
    }
    for f in &d.flowers {
        let iris = f.iris as usize;
        if d.kind[iris] != CellKind::Interior {
            if f.petals.iter().any(|&p| d.kind[p as usize] == CellKind::Interior) {
                complete_flower(d, law, f.cells(), rng, &mut cfg.states).expect("admissible boundary");
            }
            continue;
        }
        let mut pattern = 0u8;
        for (k, &p) in f.petals.iter().enumerate() {
            if cfg.states[p as usize] == HexState::Blue.code() {
                pattern |= 1 << k;
            }
        }
        cfg.states[iris] = sample_iris(law.params(), pattern, rng).code();
    }
}

// Sample the undetermined (`NO_STATE`) interior cells of one flower, petals
// first, then the iris.
fn complete_flower<R: Rng + ?Sized>(
    d: &Domain,
    law: &FlowerLaw,
    cells: [u32; 7],
    rng: &mut R,
    states: &mut [u8],
) -> Result<()> {
    let mut partial = flower_partial(d, states, cells).unwrap_or_default();
    for k in [1usize, 2, 3, 4, 5, 6, 0] {
        let c = cells[k] as usize;
        if d.kind[c] != CellKind::Interior || states[c] != NO_STATE {
            continue;
        }
        let s = law.sample_cell(&partial, k, rng)?;
        states[c] = s.code();
        if k == 0 {
            partial.iris = Some(s);
        } else {
            partial.petals[k - 1] = Some(s == HexState::Blue);
        }
    }
    Ok(())
}

/// Sample the undetermined interior cells conditionally on the determined
/// ones in `known` (`NO_STATE` = undetermined). Exact: fillers are fair
/// coins, flowers are completed cell by cell from their conditional law.
pub fn complete_into<R: Rng + ?Sized>(
    d: &Domain,
    law: &FlowerLaw,
    known: &[u8],
    rng: &mut R,
    cfg: &mut Configuration,
) -> Result<()> {
    cfg.states.clear();
    cfg.states.extend_from_slice(&d.fixed);
    for &i in &d.interior {
        let i = i as usize;
        if known[i] != NO_STATE {
            cfg.states[i] = known[i];
        } else if d.role[i] == CellRole::Filler {
            cfg.states[i] = rng.random_bool(0.5) as u8 ^ 1;
        }
    }
    for f in &d.flowers {
        let cells = f.cells();
        if cells.iter().any(|&c| d.kind[c as usize] == CellKind::Interior && known[c as usize] == NO_STATE) {
            complete_flower(d, law, cells, rng, &mut cfg.states)?;
        }
    }
    Ok(())
}

/// Half of a hexagon touching edge `e`: 0 for a pure hexagon or the blue
/// half of a split, 1 for the yellow half.
#[inline]
pub fn half(state: u8, e: usize) -> usize {
    match HexState::from_code(state) {
        Some(s @ HexState::Split(_)) => !s.edge_blue(e) as usize,
        _ => 0,
    }
}

#[inline]
pub fn edge_blue(state: u8, e: usize) -> bool {
    match state {
        0 => true,
        1 => false,
        _ => HexState::from_code(state).is_some_and(|s| s.edge_blue(e)),
    }
}

/// Reusable buffers for cluster computations.
#[derive(Clone, Debug)]
pub struct Scratch {
    pub uf: UnionFind,
    pub marks: Vec<u8>,
    pub stack: Vec<u32>,
}

impl Scratch {
    pub fn new(d: &Domain) -> Scratch {
        Scratch { uf: UnionFind::new(2 * d.interior.len()), marks: vec![0; 2 * d.interior.len()], stack: Vec::new() }
    }
}

/// Interior shape id of the part of interior cell `i` touching edge `e`.
#[inline]
pub fn shape_id(d: &Domain, states: &[u8], i: usize, e: usize) -> usize {
    2 * d.interior_pos[i] as usize + half(states[i], e)
}

/// Union the interior shapes of one color that share an edge.
pub fn color_clusters(d: &Domain, states: &[u8], blue: bool, uf: &mut UnionFind) {
    uf.reset(2 * d.interior.len());
    for &i in &d.interior {
        let i = i as usize;
        for e in 0..3 {
            let Some(j) = d.grid.neighbor(i, e) else { continue };
            if d.kind[j] != CellKind::Interior {
                continue;
            }
            if edge_blue(states[i], e) == blue && edge_blue(states[j], e + 3) == blue {
                uf.union(shape_id(d, states, i, e), shape_id(d, states, j, e + 3));
            }
        }
    }
}

/// Cluster ids of the interior shapes of a configuration, numbered
/// separately for each color in order of first appearance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterLabels {
    /// Indexed by shape id; `u32::MAX` for the unused second half of a pure cell.
    pub id: Vec<u32>,
    pub blue: Vec<bool>,
    pub count: [usize; 2],
}

impl ClusterLabels {
    /// Cluster of the part of interior cell `i` touching edge `e`, with its color.
    pub fn of(&self, d: &Domain, states: &[u8], i: usize, e: usize) -> (bool, u32) {
        let k = shape_id(d, states, i, e);
        (self.blue[k], self.id[k])
    }

    pub fn clusters(&self, blue: bool) -> usize {
        self.count[!blue as usize]
    }
}

/// Label the same-color clusters of all interior shapes.
pub fn build_clusters(d: &Domain, cfg: &Configuration) -> Result<ClusterLabels> {
    let states = &cfg.states;
    let n = d.interior.len();
    let mut blue = vec![false; 2 * n];
    let mut used = vec![false; 2 * n];
    for (k, &i) in d.interior.iter().enumerate() {
        match HexState::from_code(states[i as usize]) {
            None => return Err(Error::Configuration(format!("undetermined cell {:?}", d.grid.hex(i as usize)))),
            Some(HexState::Split(_)) => {
                used[2 * k] = true;
                used[2 * k + 1] = true;
                blue[2 * k] = true;
            }
            Some(s) => {
                used[2 * k] = true;
                blue[2 * k] = s == HexState::Blue;
            }
        }
    }
    let mut uf = UnionFind::new(2 * n);
    color_clusters(d, states, true, &mut uf);
    let mut yellow = uf.clone();
    color_clusters(d, states, false, &mut yellow);
    let mut id = vec![u32::MAX; 2 * n];
    let mut root_id = vec![u32::MAX; 2 * n];
    let mut count = [0usize; 2];
    for k in 0..2 * n {
        if !used[k] {
            continue;
        }
        let r = if blue[k] { uf.find(k) } else { yellow.find(k) };
        let c = !blue[k] as usize;
        if root_id[r] == u32::MAX {
            root_id[r] = count[c] as u32;
            count[c] += 1;
        }
        id[k] = root_id[r];
    }
    Ok(ClusterLabels { id, blue, count })
}

/// Two boundary arcs and a color: does an interior cluster of that color
/// touch both arcs? Arcs are given as contour edge indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingSpec {
    pub id: String,
    pub blue: bool,
    pub arc1: Vec<usize>,
    pub arc2: Vec<usize>,
    /// The arcs share an endpoint.
    pub touching: bool,
}

/// Largest allowed distance (lattice units) from a marked point to the
/// shape boundary; the contour may be up to twice as far.
pub const ARC_SNAP: f64 = 4.0;

impl CrossingSpec {
    /// Crossing between arcs `[p1, p2]` and `[p3, p4]` (shape coordinates),
    /// the four points counter-clockwise on the boundary.
    pub fn from_points(d: &Domain, id: &str, blue: bool, p: [Point; 4]) -> Result<CrossingSpec> {
        let mut idx = [0usize; 4];
        for (k, pt) in p.iter().enumerate() {
            let i = d.contour_index_near(*pt);
            let v = d.to_shape(d.contour[i].start.position());
            let dist = ((v[0] - pt[0]).powi(2) + (v[1] - pt[1]).powi(2)).sqrt() / d.scale;
            let off = d.shape.as_ref().map_or(0.0, |s| s.boundary_distance(*pt) / d.scale);
            if off > ARC_SNAP || dist > 2.0 * ARC_SNAP {
                return Err(Error::Spec(format!("marked point {k} at {pt:?} is not on the boundary")));
            }
            idx[k] = i;
        }
        Self::from_indices(d, id, blue, idx)
    }

    /// Crossing between contour arcs `[i0, i1)` and `[i2, i3)`, the indices in
    /// counter-clockwise order. When `i1 == i2` the arcs meet and the
    /// crossing always occurs.
    pub fn from_indices(d: &Domain, id: &str, blue: bool, idx: [usize; 4]) -> Result<CrossingSpec> {
        let n = d.contour.len();
        if idx.iter().any(|&i| i >= n) {
            return Err(Error::Spec("contour index out of range".into()));
        }
        let rel: Vec<usize> = idx.iter().map(|&i| (i + n - idx[0]) % n).collect();
        if !(rel[1] > 0 && rel[1] <= rel[2] && rel[2] < rel[3]) {
            return Err(Error::Spec("arcs overlap or points are not counter-clockwise".into()));
        }
        Ok(CrossingSpec {
            id: id.to_string(),
            blue,
            arc1: d.arc(idx[0], idx[1]),
            arc2: d.arc(idx[2], idx[3]),
            touching: idx[1] == idx[2],
        })
    }

    /// Crossing between the arcs of a shape's named marks.
    pub fn from_marks(d: &Domain, blue: bool, names: [&str; 4]) -> Result<CrossingSpec> {
        let shape = d.shape.as_ref().ok_or_else(|| Error::Spec("domain has no shape".into()))?;
        let pts = [shape.mark(names[0])?, shape.mark(names[1])?, shape.mark(names[2])?, shape.mark(names[3])?];
        let id = format!("{}{}-{}{}", names[0], names[1], names[2], names[3]);
        Self::from_points(d, &id, blue, pts)
    }

    pub fn occurs(&self, d: &Domain, states: &[u8], scratch: &mut Scratch) -> bool {
        if self.touching {
            return true;
        }
        color_clusters(d, states, self.blue, &mut scratch.uf);
        scratch.marks.iter_mut().for_each(|m| *m = 0);
        for &k in &self.arc1 {
            let e = d.contour[k];
            let i = e.interior as usize;
            if edge_blue(states[i], e.dir as usize) == self.blue {
                let r = scratch.uf.find(shape_id(d, states, i, e.dir as usize));
                scratch.marks[r] = 1;
            }
        }
        for &k in &self.arc2 {
            let e = d.contour[k];
            let i = e.interior as usize;
            if edge_blue(states[i], e.dir as usize) == self.blue {
                let r = scratch.uf.find(shape_id(d, states, i, e.dir as usize));
                if scratch.marks[r] == 1 {
                    return true;
                }
            }
        }
        false
    }
}

/// Replica results in replica order; replica `i` uses stream `(seed, i)`,
/// so the output does not depend on the number of worker threads.
pub fn replicas<T, S, I, F>(n: usize, seed: u64, init: I, f: F) -> Vec<T>
where
    T: Send,
    I: Fn() -> S + Sync,
    F: Fn(usize, &mut Stream, &mut S) -> T + Sync,
{
    const CHUNK: usize = 64;
    let chunks: Vec<usize> = (0..n.div_ceil(CHUNK)).collect();
    let parts: Vec<Vec<T>> = chunks
        .par_iter()
        .map(|&c| {
            let mut s = init();
            (c * CHUNK..((c + 1) * CHUNK).min(n))
                .map(|i| {
                    let mut rng = replica_stream(seed, i as u64);
                    f(i, &mut rng, &mut s)
                })
                .collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

pub fn estimate_crossing(d: &Domain, law: &FlowerLaw, spec: &CrossingSpec, n: usize, seed: u64) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::Invalid("sample count must be positive".into()));
    }
    let hits = replicas(
        n,
        seed,
        || (Scratch::new(d), Configuration::boundary_only(d)),
        |_, rng, (scratch, cfg)| {
            sample_into(d, law, rng, cfg);
            spec.occurs(d, &cfg.states, scratch)
        },
    );
    Ok(Estimate::from_counts(hits.iter().filter(|&&h| h).count(), n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_domain, FloralArrangement, ShapeSpec};
    use crate::measure::FlowerState;
    use crate::measure::{flower_prob, ModelParams};
    use crate::rng::replica_stream;
    use rand::RngCore;

    fn rect(eps: f64) -> Domain {
        let shape = ShapeSpec::new("rectangle").with("width", 1.0).with("height", 1.0).build().unwrap();
        build_domain(shape, eps, &FloralArrangement::periodic(3).unwrap()).unwrap()
    }

    #[test]
    fn samples_are_valid_and_reproducible() {
        let d = rect(1.0 / 20.0);
        let p = ModelParams::default();
        let law = FlowerLaw::new(p);
        let a = sample_configuration(&d, &law, &mut replica_stream(3, 0));
        let b = sample_configuration(&d, &law, &mut replica_stream(3, 0));
        assert_eq!(a, b);
        validate(&d, &a).unwrap();
        let rle = a.to_rle(&d);
        assert_eq!(Configuration::from_rle(&d, &rle).map_err(|e| e.to_string()), Ok(a));
    }

    #[test]
    fn iris_frequencies_follow_the_law() {
        let d = rect(1.0 / 24.0);
        let p = ModelParams::default();
        let law = FlowerLaw::new(p);
        let inner: Vec<_> = d.flowers.iter().filter(|f| d.kind[f.iris as usize] == CellKind::Interior).collect();
        let mut split = 0usize;
        let mut total = 0usize;
        let mut expect = 0.0;
        for i in 0..400 {
            let cfg = sample_configuration(&d, &law, &mut replica_stream(11, i));
            for f in &inner {
                let s = cfg.state(f.iris as usize).unwrap();
                let mut pat = 0;
                for (k, &c) in f.petals.iter().enumerate() {
                    if cfg.states[c as usize] == 0 {
                        pat |= 1 << k;
                    }
                }
                let fs = FlowerState { petals: pat, iris: s };
                assert!(flower_prob(&p, &fs) > 0.0);
                total += 1;
                split += s.is_split() as usize;
                expect += if crate::measure::is_trigger(pat) { 0.0 } else { 3.0 * p.s() };
            }
        }
        let f = split as f64 / total as f64;
        let e = expect / total as f64;
        assert!((f - e).abs() < 4.0 * (e * (1.0 - e) / total as f64).sqrt(), "{f} vs {e}");
    }

    #[test]
    fn completion_keeps_known_cells() {
        let d = rect(1.0 / 16.0);
        let law = FlowerLaw::new(ModelParams::default());
        let full = sample_configuration(&d, &law, &mut replica_stream(1, 0));
        let mut known = vec![NO_STATE; d.grid.len()];
        for (k, &i) in d.interior.iter().enumerate() {
            if k % 3 == 0 {
                known[i as usize] = full.states[i as usize];
            }
        }
        let mut out = Configuration::boundary_only(&d);
        complete_into(&d, &law, &known, &mut replica_stream(2, 0), &mut out).unwrap();
        validate(&d, &out).unwrap();
        for &i in &d.interior {
            if known[i as usize] != NO_STATE {
                assert_eq!(out.states[i as usize], known[i as usize]);
            }
        }
    }

    #[test]
    fn crossing_spec_validation() {
        let d = rect(1.0 / 16.0);
        assert!(CrossingSpec::from_marks(&d, true, ["a", "b", "c", "d"]).is_ok());
        assert!(CrossingSpec::from_marks(&d, true, ["a", "c", "b", "d"]).is_err());
        assert!(CrossingSpec::from_points(&d, "x", true, [[0.5, 0.5], [1.0, 0.5], [0.5, 1.0], [0.0, 0.5]]).is_err());
    }

    #[test]
    fn monochrome_crossings() {
        let d = rect(1.0 / 16.0);
        let spec = CrossingSpec::from_marks(&d, true, ["a", "b", "c", "d"]).unwrap();
        let mut s = Scratch::new(&d);
        let mut cfg = Configuration::boundary_only(&d);
        for &i in &d.interior {
            cfg.states[i as usize] = 0;
        }
        assert!(spec.occurs(&d, &cfg.states, &mut s));
        for &i in &d.interior {
            cfg.states[i as usize] = 1;
        }
        assert!(!spec.occurs(&d, &cfg.states, &mut s));
    }

    #[test]
    fn replicas_ignore_thread_count() {
        let run = || replicas(300, 9, || (), |i, rng, _| (i, rng.next_u64()));
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(run);
        assert_eq!(a, b);
    }

    // Independent labelling by breadth-first search over (cell, half) shapes.
    fn flood_labels(d: &Domain, states: &[u8]) -> Vec<Vec<(usize, usize)>> {
        let shapes_of = |i: usize| -> Vec<usize> {
            if HexState::from_code(states[i]).unwrap().is_split() {
                vec![0, 1]
            } else {
                vec![0]
            }
        };
        let color = |i: usize, h: usize| -> bool {
            match HexState::from_code(states[i]).unwrap() {
                HexState::Split(_) => h == 0,
                s => s == HexState::Blue,
            }
        };
        let touches = |i: usize, h: usize, e: usize| -> bool {
            match HexState::from_code(states[i]).unwrap() {
                s @ HexState::Split(_) => s.edge_blue(e) == (h == 0),
                _ => true,
            }
        };
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for &i in &d.interior {
            for h in shapes_of(i as usize) {
                if !seen.insert((i as usize, h)) {
                    continue;
                }
                let mut comp = vec![(i as usize, h)];
                let mut k = 0;
                while k < comp.len() {
                    let (c, ch) = comp[k];
                    k += 1;
                    for e in 0..6 {
                        if !touches(c, ch, e) {
                            continue;
                        }
                        let Some(j) = d.grid.neighbor(c, e) else { continue };
                        if d.kind[j] != CellKind::Interior {
                            continue;
                        }
                        for jh in shapes_of(j) {
                            if touches(j, jh, (e + 3) % 6) && color(j, jh) == color(c, ch) && seen.insert((j, jh)) {
                                comp.push((j, jh));
                            }
                        }
                    }
                }
                comp.sort();
                out.push(comp);
            }
        }
        out.sort();
        out
    }

    #[test]
    fn cluster_labels_match_flood_fill() {
        let d = rect(1.0 / 12.0);
        let law = FlowerLaw::new(ModelParams::boundary());
        for i in 0..100 {
            let cfg = sample_configuration(&d, &law, &mut replica_stream(21, i));
            let labels = build_clusters(&d, &cfg).unwrap();
            let mut groups: std::collections::BTreeMap<(bool, u32), Vec<(usize, usize)>> = Default::default();
            for &c in &d.interior {
                let c = c as usize;
                let halves: &[usize] = if cfg.state(c).unwrap().is_split() { &[0, 1] } else { &[0] };
                for &h in halves {
                    let k = 2 * d.interior_pos[c] as usize + h;
                    groups.entry((labels.blue[k], labels.id[k])).or_default().push((c, h));
                }
            }
            let mut ours: Vec<Vec<(usize, usize)>> = groups.into_values().collect();
            ours.iter_mut().for_each(|g| g.sort());
            ours.sort();
            assert_eq!(ours, flood_labels(&d, &cfg.states));
            assert_eq!(labels.clusters(true) + labels.clusters(false), ours.len());
        }
    }

    #[test]
    fn split_iris_in_a_blue_sea() {
        let d = rect(1.0 / 12.0);
        let mut cfg = Configuration::boundary_only(&d);
        for &i in &d.interior {
            cfg.states[i as usize] = 0;
        }
        let iris = d.flowers.iter().find(|f| d.kind[f.iris as usize] == CellKind::Interior).unwrap().iris as usize;
        cfg.states[iris] = HexState::Split(0).code();
        let labels = build_clusters(&d, &cfg).unwrap();
        assert_eq!((labels.clusters(true), labels.clusters(false)), (1, 1));
        cfg.states[iris - 1] = NO_STATE;
        assert!(build_clusters(&d, &cfg).is_err());
    }

    #[test]
    fn checkerboard_patch_cluster_count() {
        // alternate colors by row: every row is one cluster of its color
        let d = rect(1.0 / 8.0);
        let mut cfg = Configuration::boundary_only(&d);
        for &i in &d.interior {
            cfg.states[i as usize] = (d.grid.hex(i as usize).r.rem_euclid(2)) as u8;
        }
        let rows: std::collections::BTreeSet<i32> = d.interior.iter().map(|&i| d.grid.hex(i as usize).r).collect();
        let labels = build_clusters(&d, &cfg).unwrap();
        assert_eq!(labels.clusters(true) + labels.clusters(false), flood_labels(&d, &cfg.states).len());
        assert_eq!(labels.clusters(true) + labels.clusters(false), rows.len());
    }

    // Does some split cell have a diagonal end where the colors alternate?
    fn alternating_vertex(d: &Domain, states: &[u8]) -> bool {
        d.interior.iter().any(|&i| {
            let i = i as usize;
            if !HexState::from_code(states[i]).unwrap().is_split() {
                return false;
            }
            (0..6).any(|e| {
                let f = (e + 1) % 6;
                let (he, hf) = (edge_blue(states[i], e), edge_blue(states[i], f));
                let nb = |k: usize| d.grid.neighbor(i, k).map(|j| edge_blue(states[j], (k + 3) % 6));
                he != hf && nb(e) == Some(hf) && nb(f) == Some(he)
            })
        })
    }

    #[test]
    fn crossing_duality_on_a_strip() {
        let d = crate::explorer::tests::strip();
        let n = d.contour.len();
        let (a, c) = (d.a_index, d.c_index);
        let b = (a + ((c + n - a) % n) / 2) % n;
        let dd = (c + ((a + n - c) % n) / 2) % n;
        let blue = CrossingSpec::from_indices(&d, "b", true, [a, b, c, dd]).unwrap();
        let yellow = CrossingSpec::from_indices(&d, "y", false, [b, c, dd, a]).unwrap();
        let mut s = Scratch::new(&d);
        for (params, exact) in [(ModelParams::site(), true), (ModelParams::default(), false)] {
            let law = FlowerLaw::new(params);
            let (mut both, mut neither, mut total) = (0.0, 0.0, 0.0);
            crate::explorer::for_each_configuration(&d, &law, |st, p| {
                let (x, y) = (blue.occurs(&d, st, &mut s), yellow.occurs(&d, st, &mut s));
                assert!(!(x && y));
                if !x && !y {
                    assert!(alternating_vertex(&d, st), "duality fails without an alternating vertex");
                    neither += p;
                }
                both += (x && y) as u8 as f64 * p;
                total += p;
                Ok(())
            })
            .unwrap();
            assert!((total - 1.0).abs() < 1e-12);
            assert_eq!(both, 0.0);
            assert_eq!(neither == 0.0, exact);
        }
    }
}
