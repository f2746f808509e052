//! The exploration process: the interface from `a` to `c` grown by revealing
//! hexagons on demand, with blue kept on the right.
//!
//! A step ends when the walker arrives at a vertex along a hexagon edge and
//! the third hexagon at that vertex is still unrevealed, or when it reaches
//! `c`. Arrivals through the center of a split iris never end a step, so the
//! iris / petal traversal counts as one step.

use crate::error::{Error, Result};
use crate::lattice::domain::{component, CellKind, CellRole, Domain, RoleHint, NO_STATE};
use crate::lattice::walker::{third_hex, Lookup, Move, Node, Walker};
use crate::lattice::{Hex, VertexId};
use crate::measure::{enumerate_flower, FlowerLaw, HexState, PartialFlower, IRIS_STATES};
use crate::rng::{derive_seed, replica_stream};
use crate::sampler::{
    complete_into, flower_partial, replicas, sample_into, validate, Configuration, CrossingSpec, Scratch,
};
use crate::stats::Estimate;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Moves allowed per non-outside cell before a run is declared runaway.
pub const BUDGET_PER_CELL: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepMark {
    /// Index in the node list of the node ending the step.
    pub node: usize,
    /// Number of revealed cells at the end of the step.
    pub reveals: usize,
    pub multistep: bool,
}

/// What the exploration needs next.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Event {
    /// The state of this cell must be supplied.
    Need(usize),
    StepDone,
    Finished,
}

#[derive(Clone, Debug)]
pub struct Exploration<'d> {
    d: &'d Domain,
    revealed: Vec<u8>,
    order: Vec<u32>,
    walker: Walker,
    nodes: Vec<Node>,
    steps: Vec<StepMark>,
    through_center: bool,
    finished: bool,
    moves: usize,
    budget: usize,
}

fn lookup(d: &Domain, revealed: &[u8], h: Hex) -> Lookup {
    match d.cell(h) {
        None => Lookup::Outside,
        Some(i) => match d.kind[i] {
            CellKind::Boundary => Lookup::Known(HexState::from_code(d.fixed[i]).expect("boundary state")),
            CellKind::Interior => HexState::from_code(revealed[i]).map_or(Lookup::Unknown, Lookup::Known),
            _ => Lookup::Outside,
        },
    }
}

impl<'d> Exploration<'d> {
    pub fn new(d: &'d Domain) -> Self {
        let budget = BUDGET_PER_CELL * d.kind.iter().filter(|k| **k != CellKind::Outside).count();
        Exploration {
            d,
            revealed: vec![NO_STATE; d.grid.len()],
            order: Vec::new(),
            walker: d.start_walker(),
            nodes: vec![Node::Vertex(d.a)],
            steps: Vec::new(),
            through_center: false,
            finished: false,
            moves: 0,
            budget,
        }
    }

    pub fn domain(&self) -> &'d Domain {
        self.d
    }
    pub fn revealed(&self) -> &[u8] {
        &self.revealed
    }
    /// Revealed cells in order of revelation.
    pub fn order(&self) -> &[u32] {
        &self.order
    }
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }
    pub fn steps(&self) -> &[StepMark] {
        &self.steps
    }
    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Current tip of the path.
    pub fn tip(&self) -> Node {
        self.walker.node
    }

    fn close_step(&mut self) {
        self.steps.push(StepMark {
            node: self.nodes.len() - 1,
            reveals: self.order.len(),
            multistep: self.through_center,
        });
        self.through_center = false;
    }

    /// Move until a cell is needed, a step ends or `c` is reached.
    pub fn resume(&mut self) -> Result<Event> {
        if self.finished {
            return Ok(Event::Finished);
        }
        loop {
            let (d, rev) = (self.d, &self.revealed);
            match self.walker.advance(|h| lookup(d, rev, h)) {
                Move::Need(h) => return Ok(Event::Need(d.cell(h).expect("needed cell is in the grid"))),
                Move::Outside(h) => return Err(Error::WalkedOff(format!("{h:?}"))),
                Move::Moved { from, to, left, right } => {
                    self.moves += 1;
                    if self.moves > self.budget {
                        return Err(Error::Invalid(format!("step budget of {} moves exceeded", self.budget)));
                    }
                    self.nodes.push(to);
                    match to {
                        Node::Center(_) => self.through_center = true,
                        Node::Vertex(v) if v == d.c => {
                            self.finished = true;
                            self.close_step();
                            return Ok(Event::Finished);
                        }
                        Node::Vertex(v) => {
                            if matches!(from, Node::Vertex(_))
                                && lookup(d, rev, third_hex(v, left.hex, right.hex)) == Lookup::Unknown
                            {
                                self.close_step();
                                return Ok(Event::StepDone);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Reveal an interior cell. Fails if the cell is not pending or the state
    /// makes its flower impossible.
    pub fn supply(&mut self, cell: usize, state: u8) -> Result<()> {
        if self.d.kind[cell] != CellKind::Interior || self.revealed[cell] != NO_STATE {
            return Err(Error::Invalid(format!("cell {:?} cannot be revealed", self.d.grid.hex(cell))));
        }
        let s = HexState::from_code(state).ok_or_else(|| Error::Invalid(format!("bad state code {state}")))?;
        match self.d.role[cell] {
            CellRole::Filler | CellRole::Petal(..) if s.is_split() => {
                return Err(Error::Invalid("split state on a non-iris cell".into()))
            }
            _ => {}
        }
        self.revealed[cell] = state;
        if let Some((f, _)) = self.d.flower_of(cell) {
            let p = flower_partial(self.d, &self.revealed, self.d.flowers[f as usize].cells()).unwrap_or_default();
            let law = FlowerLaw::support();
            if law.mass(&p) <= 0.0 {
                self.revealed[cell] = NO_STATE;
                return Err(Error::ZeroProbability(format!("{p:?}")));
            }
        }
        self.order.push(cell as u32);
        Ok(())
    }

    /// Conditional law of a pending cell given everything revealed, indexed
    /// like [`IRIS_STATES`].
    pub fn cell_law(&self, law: &FlowerLaw, cell: usize) -> Result<[f64; 5]> {
        match self.d.flower_of(cell) {
            None => Ok([0.5, 0.5, 0.0, 0.0, 0.0]),
            Some((f, k)) => {
                let p = flower_partial(self.d, &self.revealed, self.d.flowers[f as usize].cells()).unwrap_or_default();
                law.conditional(&p, k)
            }
        }
    }

    /// Continue with conditionally sampled cells for at most `max_steps`
    /// more steps (all the way to `c` if `None`).
    pub fn run_dynamic<R: Rng + ?Sized>(
        &mut self,
        law: &FlowerLaw,
        rng: &mut R,
        max_steps: Option<usize>,
    ) -> Result<()> {
        let stop = max_steps.map(|m| self.steps.len() + m);
        loop {
            if stop.is_some_and(|s| self.steps.len() >= s) {
                return Ok(());
            }
            match self.resume()? {
                Event::Need(c) => {
                    let w = self.cell_law(law, c)?;
                    let s = crate::measure::pick(&w, rng);
                    self.supply(c, s.code())?;
                }
                Event::StepDone => {}
                Event::Finished => return Ok(()),
            }
        }
    }

    /// Continue reading states from a configuration.
    pub fn run_static(&mut self, states: &[u8], max_steps: Option<usize>) -> Result<()> {
        let stop = max_steps.map(|m| self.steps.len() + m);
        loop {
            if stop.is_some_and(|s| self.steps.len() >= s) {
                return Ok(());
            }
            match self.resume()? {
                Event::Need(c) => self.supply(c, states[c])?,
                Event::StepDone => {}
                Event::Finished => return Ok(()),
            }
        }
    }

    pub fn to_path(&self) -> ExplorationPath {
        ExplorationPath {
            nodes: self.nodes.clone(),
            steps: self.steps.clone(),
            reveals: self.order.iter().map(|&c| (c, self.revealed[c as usize])).collect(),
            finished: self.finished,
        }
    }
}

/// A finished (or truncated) exploration.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationPath {
    /// All nodes visited, starting at `a`, including split centers.
    pub nodes: Vec<Node>,
    pub steps: Vec<StepMark>,
    /// Revealed cells and their states in order of revelation.
    pub reveals: Vec<(u32, u8)>,
    pub finished: bool,
}

/// One line of the path file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Position of the vertex ending the step, in lattice units.
    pub vertex: [f64; 2],
    pub node: Node,
    /// Nodes traversed during the step, ending with `node`.
    pub nodes: Vec<Node>,
    /// Cells revealed during the step as `(q, r, state)`.
    pub revealed: Vec<(i32, i32, String)>,
    pub multistep: bool,
}

impl ExplorationPath {
    /// Vertices `X_0 = a, X_1, ...` at the ends of steps.
    pub fn vertices(&self) -> Vec<VertexId> {
        std::iter::once(0)
            .chain(self.steps.iter().map(|s| s.node))
            .map(|i| match self.nodes[i] {
                Node::Vertex(v) => v,
                Node::Center(h) => unreachable!("step ends at center {h:?}"),
            })
            .collect()
    }

    /// Positions of all nodes in lattice units.
    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.nodes.iter().map(|&n| crate::lattice::walker::node_position(n)).collect()
    }

    /// Positions of all nodes in shape coordinates.
    pub fn shape_positions(&self, d: &Domain) -> Vec<[f64; 2]> {
        self.positions().into_iter().map(|p| d.to_shape(p)).collect()
    }

    pub fn records(&self, d: &Domain) -> Vec<StepRecord> {
        let mut out = Vec::with_capacity(self.steps.len());
        let (mut n0, mut r0) = (0usize, 0usize);
        for (k, s) in self.steps.iter().enumerate() {
            let node = self.nodes[s.node];
            out.push(StepRecord {
                step: k + 1,
                vertex: crate::lattice::walker::node_position(node),
                node,
                nodes: self.nodes[n0 + 1..=s.node].to_vec(),
                revealed: self.reveals[r0..s.reveals]
                    .iter()
                    .map(|&(c, st)| {
                        let h = d.grid.hex(c as usize);
                        (h.q, h.r, HexState::from_code(st).expect("revealed state").symbol().to_string())
                    })
                    .collect(),
                multistep: s.multistep,
            });
            n0 = s.node;
            r0 = s.reveals;
        }
        out
    }

    pub fn to_ndjson(&self, d: &Domain) -> String {
        let mut s = String::new();
        for r in self.records(d) {
            s.push_str(&serde_json::to_string(&r).expect("step record serializes"));
            s.push('\n');
        }
        s
    }

    /// Rebuild a path from its records, checking that the revealed cells
    /// reproduce every recorded step.
    pub fn replay(d: &Domain, ndjson: &str) -> Result<ExplorationPath> {
        let mut states = vec![NO_STATE; d.grid.len()];
        let mut records = Vec::new();
        for (ln, line) in ndjson.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let r: StepRecord =
                serde_json::from_str(line).map_err(|e| Error::Parse(format!("path line {}: {e}", ln + 1)))?;
            for (q, rr, st) in &r.revealed {
                let i = d
                    .cell(Hex::new(*q, *rr))
                    .ok_or_else(|| Error::Parse(format!("path line {}: cell outside domain", ln + 1)))?;
                let s = st
                    .chars()
                    .next()
                    .and_then(HexState::from_symbol)
                    .ok_or_else(|| Error::Parse(format!("path line {}: bad state {st:?}", ln + 1)))?;
                states[i] = s.code();
            }
            records.push(r);
        }
        let mut e = Exploration::new(d);
        e.run_static(&states, Some(records.len()))?;
        let path = e.to_path();
        let again = path.records(d);
        if again.len() != records.len() || again.iter().zip(&records).any(|(a, b)| a.nodes != b.nodes) {
            return Err(Error::Invalid("path file does not replay".into()));
        }
        Ok(path)
    }
}

/// Dynamic exploration from `a` to `c`.
pub fn run_exploration<R: Rng + ?Sized>(d: &Domain, law: &FlowerLaw, rng: &mut R) -> Result<ExplorationPath> {
    let mut e = Exploration::new(d);
    e.run_dynamic(law, rng, None)?;
    Ok(e.to_path())
}

/// The interface of a full configuration, from `a` to `c`.
pub fn trace_interface(d: &Domain, cfg: &Configuration) -> Result<ExplorationPath> {
    validate(d, cfg)?;
    let mut e = Exploration::new(d);
    e.run_static(&cfg.states, None)?;
    Ok(e.to_path())
}

/// Exact law of the node sequence of the dynamic exploration, by branching
/// on every revelation.
pub fn exact_exploration_law(d: &Domain, law: &FlowerLaw) -> Result<BTreeMap<Vec<Node>, f64>> {
    fn rec(mut e: Exploration, p: f64, law: &FlowerLaw, out: &mut BTreeMap<Vec<Node>, f64>) -> Result<()> {
        loop {
            match e.resume()? {
                Event::StepDone => continue,
                Event::Finished => {
                    *out.entry(e.nodes.clone()).or_default() += p;
                    return Ok(());
                }
                Event::Need(c) => {
                    let w = e.cell_law(law, c)?;
                    for (k, &pk) in w.iter().enumerate() {
                        if pk > 0.0 {
                            let mut next = e.clone();
                            next.supply(c, IRIS_STATES[k].code())?;
                            rec(next, p * pk, law, out)?;
                        }
                    }
                    return Ok(());
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    rec(Exploration::new(d), 1.0, law, &mut out)?;
    Ok(out)
}

/// Largest number of configurations [`exact_interface_law`] will enumerate.
pub const MAX_ENUMERATION: usize = 1 << 22;

/// Exact law of the static interface, by enumerating every configuration.
pub fn exact_interface_law(d: &Domain, law: &FlowerLaw) -> Result<BTreeMap<Vec<Node>, f64>> {
    let mut out = BTreeMap::new();
    for_each_configuration(d, law, |states, p| {
        let mut e = Exploration::new(d);
        e.run_static(states, None)?;
        *out.entry(e.nodes).or_default() += p;
        Ok(())
    })?;
    Ok(out)
}

/// Call `f` with every interior configuration of positive probability and
/// its probability.
pub fn for_each_configuration(d: &Domain, law: &FlowerLaw, mut f: impl FnMut(&[u8], f64) -> Result<()>) -> Result<()> {
    let fillers: Vec<usize> =
        d.interior.iter().map(|&i| i as usize).filter(|&i| d.role[i] == CellRole::Filler).collect();
    // per flower: interior cells and their joint states with probabilities
    let mut groups: Vec<(Vec<(usize, usize)>, Vec<(Vec<u8>, f64)>)> = Vec::new();
    let all = enumerate_flower(law.params());
    for fl in &d.flowers {
        let cells = fl.cells();
        let free: Vec<(usize, usize)> = cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| d.kind[c as usize] == CellKind::Interior)
            .map(|(k, &c)| (k, c as usize))
            .collect();
        if free.is_empty() {
            continue;
        }
        let fixed = flower_partial(d, &d.fixed, cells).unwrap_or_default();
        let mass = law.mass(&fixed);
        let mut opts: BTreeMap<Vec<u8>, f64> = BTreeMap::new();
        for (st, p) in &all {
            if *p > 0.0 && fixed.consistent(st) {
                let key: Vec<u8> = free
                    .iter()
                    .map(|&(k, _)| if k == 0 { st.iris.code() } else { (!st.petal_blue(k - 1)) as u8 })
                    .collect();
                *opts.entry(key).or_default() += p / mass;
            }
        }
        groups.push((free, opts.into_iter().collect()));
    }
    let total = groups
        .iter()
        .try_fold(1usize << fillers.len().min(63), |acc, g| acc.checked_mul(g.1.len()))
        .filter(|_| fillers.len() < 63)
        .unwrap_or(usize::MAX);
    if total > MAX_ENUMERATION {
        return Err(Error::Invalid(format!("{total} configurations exceed the enumeration limit")));
    }
    let mut states = d.fixed.clone();
    let mut idx = vec![0usize; groups.len()];
    let pf = 0.5f64.powi(fillers.len() as i32);
    loop {
        let mut pg = pf;
        for (g, &k) in groups.iter().zip(&idx) {
            let (key, p) = &g.1[k];
            pg *= p;
            for (&(_, c), &s) in g.0.iter().zip(key) {
                states[c] = s;
            }
        }
        for bits in 0..(1u64 << fillers.len()) {
            for (j, &c) in fillers.iter().enumerate() {
                states[c] = ((bits >> j) & 1) as u8;
            }
            f(&states, pg)?;
        }
        // next flower combination
        let mut g = 0;
        loop {
            if g == groups.len() {
                return Ok(());
            }
            idx[g] += 1;
            if idx[g] < groups[g].1.len() {
                break;
            }
            idx[g] = 0;
            g += 1;
        }
    }
}

/// Total variation distance between two laws.
pub fn total_variation<K: Ord>(p: &BTreeMap<K, f64>, q: &BTreeMap<K, f64>) -> f64 {
    let mut s = 0.0;
    for (k, a) in p {
        s += (a - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, b) in q {
        if !p.contains_key(k) {
            s += b.abs();
        }
    }
    s / 2.0
}

/// The domain left after an exploration prefix: revealed cells join the
/// boundary with their states, the tip becomes the new `a`, and only the
/// component containing the unrevealed cell at the tip is kept.
pub fn slit_domain(d: &Domain, e: &Exploration) -> Result<Domain> {
    if !std::ptr::eq(d, e.d) {
        return Err(Error::Invalid("exploration belongs to another domain".into()));
    }
    if e.steps.is_empty() {
        return Ok(d.clone());
    }
    if e.finished {
        return Err(Error::Finished);
    }
    let Node::Vertex(tip) = e.tip() else {
        return Err(Error::Invalid("exploration is not at the end of a step".into()));
    };
    let mut kind = d.kind.clone();
    let mut fixed = d.fixed.clone();
    for &c in &e.order {
        kind[c as usize] = CellKind::Boundary;
        fixed[c as usize] = e.revealed[c as usize];
    }
    let touching = |v: VertexId, kind: &[CellKind]| {
        v.hexes().iter().filter_map(|(h, _)| d.cell(*h)).find(|&i| kind[i] == CellKind::Interior)
    };
    let seed = touching(d.c, &kind).ok_or_else(|| Error::NotAdmissible("the cell at c has been revealed".into()))?;
    let comp = component(&d.grid, seed, |i| kind[i] == CellKind::Interior);
    for i in 0..kind.len() {
        if kind[i] == CellKind::Interior && !comp[i] {
            kind[i] = CellKind::Detached;
        }
    }
    if touching(tip, &kind).is_none() {
        return Err(Error::NotAdmissible("the tip is cut off from c".into()));
    }
    let role = &d.role;
    Domain::from_cells(
        d.grid,
        kind,
        |i| match role[i] {
            CellRole::Filler => RoleHint::Filler,
            CellRole::Iris(_) => RoleHint::Iris,
            CellRole::Petal(..) => RoleHint::Petal,
        },
        fixed,
        tip,
        d.c,
        d.scale,
        d.shape.clone(),
    )
}

/// Contour index of every `(interior cell, direction)` pair.
fn contour_lookup(d: &Domain) -> HashMap<(u32, u8), usize> {
    d.contour.iter().enumerate().map(|(i, e)| ((e.interior, e.dir), i)).collect()
}

#[inline]
fn in_arc(i: usize, from: usize, to: usize, n: usize) -> bool {
    (i + n - from) % n < (to + n - from) % n
}

/// Blue crossing from `[a, b]` to `[c, d]`, where `a` and `c` are the
/// domain's own marked points and `b`, `d` are contour indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuadMarks {
    pub b: usize,
    pub d: usize,
}

impl QuadMarks {
    pub fn from_points(d: &Domain, b: [f64; 2], dd: [f64; 2]) -> Result<QuadMarks> {
        let spec = CrossingSpec::from_points(
            d,
            "markov",
            true,
            [d.to_shape(d.a.position()), b, d.to_shape(d.c.position()), dd],
        )?;
        let n = d.contour.len();
        let ib = (d.a_index + spec.arc1.len()) % n;
        let id = (d.c_index + spec.arc2.len()) % n;
        Ok(QuadMarks { b: ib, d: id })
    }

    pub fn spec(&self, d: &Domain) -> Result<CrossingSpec> {
        CrossingSpec::from_indices(d, "markov", true, [d.a_index, self.b, d.c_index, self.d])
    }
}

/// Where a prefix first touched the boundary arcs `[b, c]` and `[c, d]`:
/// `Some(true)` if `[c, d]` came first, `Some(false)` if `[b, c]` did.
pub fn first_arc_hit(d: &Domain, nodes: &[Node], m: QuadMarks) -> Option<bool> {
    let map = contour_lookup(d);
    let n = d.contour.len();
    for w in nodes.windows(2) {
        let (Node::Vertex(u), Node::Vertex(v)) = (w[0], w[1]) else { continue };
        let hu = u.hexes();
        let shared: Vec<Hex> = v.hexes().iter().map(|x| x.0).filter(|h| hu.iter().any(|y| y.0 == *h)).collect();
        if shared.len() != 2 {
            continue;
        }
        for (x, y) in [(shared[0], shared[1]), (shared[1], shared[0])] {
            let (Some(i), Some(j)) = (d.cell(x), d.cell(y)) else { continue };
            if d.kind[i] != CellKind::Interior || d.kind[j] != CellKind::Boundary {
                continue;
            }
            let dir = x.direction_to(y).expect("adjacent") as u8;
            if let Some(&k) = map.get(&(i as u32, dir)) {
                if in_arc(k, m.b, d.c_index, n) {
                    return Some(false);
                }
                if in_arc(k, d.c_index, m.d, n) {
                    return Some(true);
                }
            }
        }
    }
    None
}

/// How the crossing of a slit domain was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlitCase {
    /// `b` and `d` remain on the boundary: estimated in the slit domain.
    Open,
    /// Settled by which arc the prefix hit first.
    Settled(bool),
    /// Marked points could not be placed on the slit contour; estimated by
    /// conditional completion in the original domain.
    Completed,
}

/// The slit crossing value of a prefix: the crossing probability in the
/// slit domain, or the hit-order 0/1 value once `b` or `d` is cut off.
pub fn slit_crossing<R: Rng + ?Sized>(
    d: &Domain,
    law: &FlowerLaw,
    e: &Exploration,
    m: QuadMarks,
    n_inner: usize,
    rng: &mut R,
) -> Result<(f64, SlitCase)> {
    let settled = || first_arc_hit(d, e.nodes(), m);
    if e.is_finished() {
        return match settled() {
            Some(v) => Ok((v as u8 as f64, SlitCase::Settled(v))),
            None => completion_crossing(d, law, e, m, n_inner, rng),
        };
    }
    // a pinched or exhausted slit domain leaves no connected region
    // from the tip to c; condition in the original domain instead
    let slit = match slit_domain(d, e) {
        Ok(s) => s,
        Err(Error::NotAdmissible(_)) => {
            return match settled() {
                Some(v) => Ok((v as u8 as f64, SlitCase::Settled(v))),
                None => completion_crossing(d, law, e, m, n_inner, rng),
            }
        }
        Err(err) => return Err(err),
    };
    let map = contour_lookup(&slit);
    let find = |k: usize| {
        let ce = d.contour[k];
        map.get(&(ce.interior, ce.dir)).copied().filter(|&j| slit.contour[j].boundary == ce.boundary)
    };
    let (b, dd) = (find(m.b), find(m.d));
    let (Some(b), Some(dd)) = (b, dd) else {
        return match settled() {
            Some(v) => Ok((v as u8 as f64, SlitCase::Settled(v))),
            None => completion_crossing(d, law, e, m, n_inner, rng),
        };
    };
    let Ok(spec) = CrossingSpec::from_indices(&slit, "slit", true, [slit.a_index, b, slit.c_index, dd]) else {
        return completion_crossing(d, law, e, m, n_inner, rng);
    };
    let mut scratch = Scratch::new(&slit);
    let mut cfg = Configuration::boundary_only(&slit);
    let mut hits = 0usize;
    for _ in 0..n_inner {
        sample_into(&slit, law, rng, &mut cfg);
        hits += spec.occurs(&slit, &cfg.states, &mut scratch) as usize;
    }
    Ok((hits as f64 / n_inner as f64, SlitCase::Open))
}

fn completion_crossing<R: Rng + ?Sized>(
    d: &Domain,
    law: &FlowerLaw,
    e: &Exploration,
    m: QuadMarks,
    n_inner: usize,
    rng: &mut R,
) -> Result<(f64, SlitCase)> {
    let spec = m.spec(d)?;
    let mut scratch = Scratch::new(d);
    let mut cfg = Configuration::boundary_only(d);
    let mut hits = 0usize;
    for _ in 0..n_inner {
        complete_into(d, law, e.revealed(), rng, &mut cfg)?;
        hits += spec.occurs(d, &cfg.states, &mut scratch) as usize;
    }
    Ok((hits as f64 / n_inner as f64, SlitCase::Completed))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub steps: usize,
    /// Mean over explorations of the slit crossing value.
    pub nested: Estimate,
    pub unconditional: Estimate,
    pub z: f64,
    pub open: usize,
    pub settled: usize,
    pub completed: usize,
}

/// Compare the mean slit crossing value after `t` steps with the crossing
/// probability of the original domain. The unconditional estimate uses
/// `n_outer * n_inner` fresh configurations.
pub fn markov_crossing_test(
    d: &Domain,
    law: &FlowerLaw,
    m: QuadMarks,
    t: usize,
    n_outer: usize,
    n_inner: usize,
    seed: u64,
) -> Result<MarkovReport> {
    if n_outer < 2 || n_inner == 0 {
        return Err(Error::Invalid("need at least two explorations and one inner sample".into()));
    }
    let spec = m.spec(d)?;
    let outer_seed = derive_seed(seed, "markov-outer");
    let values = replicas(
        n_outer,
        outer_seed,
        || (),
        |_, rng, _| -> Result<(f64, SlitCase)> {
            let mut e = Exploration::new(d);
            e.run_dynamic(law, rng, Some(t))?;
            slit_crossing(d, law, &e, m, n_inner, rng)
        },
    );
    let mut xs = Vec::with_capacity(n_outer);
    let (mut open, mut settled, mut completed) = (0, 0, 0);
    for v in values {
        let (x, case) = v?;
        xs.push(x);
        match case {
            SlitCase::Open => open += 1,
            SlitCase::Settled(_) => settled += 1,
            SlitCase::Completed => completed += 1,
        }
    }
    let nested = Estimate::from_samples(&xs);
    let unconditional =
        crate::sampler::estimate_crossing(d, law, &spec, n_outer * n_inner, derive_seed(seed, "markov-uncond"))?;
    let se = (nested.stderr.powi(2) + unconditional.stderr.powi(2)).sqrt();
    let diff = nested.mean - unconditional.mean;
    let z = if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY * diff.signum()
    };
    Ok(MarkovReport { steps: t, nested, unconditional, z, open, settled, completed })
}

/// Conditional crossing probability given a prefix, by completing the
/// revealed cells in the original domain.
pub fn conditional_crossing(
    d: &Domain,
    law: &FlowerLaw,
    e: &Exploration,
    spec: &CrossingSpec,
    n: usize,
    seed: u64,
) -> Result<Estimate> {
    let hits = replicas(
        n,
        seed,
        || (Scratch::new(d), Configuration::boundary_only(d)),
        |_, rng, (scratch, cfg)| -> Result<bool> {
            complete_into(d, law, e.revealed(), rng, cfg)?;
            Ok(spec.occurs(d, &cfg.states, scratch))
        },
    );
    let mut k = 0;
    for h in hits {
        k += h? as usize;
    }
    Ok(Estimate::from_counts(k, n))
}

/// Seeded dynamic exploration `i` of a batch.
pub fn explore_replica(d: &Domain, law: &FlowerLaw, seed: u64, i: u64) -> Result<ExplorationPath> {
    run_exploration(d, law, &mut replica_stream(seed, i))
}

/// Partial flower of revealed and fixed cells around an iris (diagnostics).
pub fn revealed_flower(e: &Exploration, flower: usize) -> PartialFlower {
    flower_partial(e.d, &e.revealed, e.d.flowers[flower].cells()).unwrap_or_default()
}
