//! Lattice domains: interior cells, a colored boundary layer, and two marked
//! boundary vertices `a` and `c`. The boundary is blue counter-clockwise from
//! `a` to `c` and yellow from `c` back to `a`.

use super::arrangement::{FloralArrangement, Role};
use super::hex::{Hex, VertexId, Wedge, DIRS, SQRT3};
use super::shapes::{Point, Shape};
use super::walker::{Lookup, Move, Node, Walker};
use crate::error::{Error, Result};
use crate::measure::{FlowerLaw, HexState, PartialFlower};
use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

pub const NO_STATE: u8 = u8::MAX;

/// Dense storage over an axial parallelogram.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    pub q0: i32,
    pub r0: i32,
    pub nq: usize,
    pub nr: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nq * self.nr
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, h: Hex) -> Option<usize> {
        let dq = h.q - self.q0;
        let dr = h.r - self.r0;
        if dq < 0 || dr < 0 || dq as usize >= self.nq || dr as usize >= self.nr {
            None
        } else {
            Some(dr as usize * self.nq + dq as usize)
        }
    }

    #[inline]
    pub fn hex(&self, i: usize) -> Hex {
        Hex::new(self.q0 + (i % self.nq) as i32, self.r0 + (i / self.nq) as i32)
    }

    /// Neighbor index in direction `d`, if inside the grid.
    #[inline]
    pub fn neighbor(&self, i: usize, d: usize) -> Option<usize> {
        self.index(self.hex(i).neighbor(d))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellKind {
    Outside,
    Interior,
    Boundary,
    /// Cut off from the interior by revealed cells; not used any more.
    Detached,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CellRole {
    Filler,
    Iris(u32),
    Petal(u32, u8),
}

/// Cell indices of one flower.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Flower {
    pub iris: u32,
    pub petals: [u32; 6],
}

impl Flower {
    pub fn cells(&self) -> [u32; 7] {
        let p = self.petals;
        [self.iris, p[0], p[1], p[2], p[3], p[4], p[5]]
    }
}

/// A hexagon edge separating an interior cell from a boundary cell,
/// listed counter-clockwise around the interior.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContourEdge {
    pub interior: u32,
    pub boundary: u32,
    /// Direction from the interior cell to the boundary cell.
    pub dir: u8,
    pub start: VertexId,
}

#[derive(Clone, Debug)]
pub struct Domain {
    pub grid: Grid,
    pub kind: Vec<CellKind>,
    pub role: Vec<CellRole>,
    pub flowers: Vec<Flower>,
    /// Boundary states (`NO_STATE` elsewhere).
    pub fixed: Vec<u8>,
    pub a: VertexId,
    pub c: VertexId,
    pub contour: Vec<ContourEdge>,
    pub a_index: usize,
    pub c_index: usize,
    pub interior: Vec<u32>,
    /// Position of each cell in `interior` (`u32::MAX` if not interior).
    pub interior_pos: Vec<u32>,
    /// Lattice spacing in shape units.
    pub scale: f64,
    pub shape: Option<Arc<dyn Shape>>,
}

impl Domain {
    #[inline]
    pub fn cell(&self, h: Hex) -> Option<usize> {
        self.grid.index(h)
    }

    #[inline]
    pub fn kind_of(&self, h: Hex) -> CellKind {
        self.grid.index(h).map_or(CellKind::Outside, |i| self.kind[i])
    }

    pub fn fixed_state(&self, i: usize) -> Option<HexState> {
        HexState::from_code(self.fixed[i])
    }

    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn flower_of(&self, i: usize) -> Option<(u32, usize)> {
        match self.role[i] {
            CellRole::Filler => None,
            CellRole::Iris(f) => Some((f, 0)),
            CellRole::Petal(f, k) => Some((f, k as usize + 1)),
        }
    }

    /// Lattice-unit point to shape coordinates.
    pub fn to_shape(&self, p: Point) -> Point {
        [p[0] * self.scale, p[1] * self.scale]
    }

    pub fn to_lattice(&self, p: Point) -> Point {
        [p[0] / self.scale, p[1] / self.scale]
    }

    /// Cell containing a point given in shape coordinates.
    pub fn cell_at(&self, p: Point) -> Option<usize> {
        self.cell(Hex::nearest(self.to_lattice(p)))
    }

    /// Contour index whose start vertex is nearest to a point in shape coordinates.
    pub fn contour_index_near(&self, p: Point) -> usize {
        let q = self.to_lattice(p);
        let mut best = (0, f64::INFINITY);
        for (i, e) in self.contour.iter().enumerate() {
            let v = e.start.position();
            let d = (v[0] - q[0]).powi(2) + (v[1] - q[1]).powi(2);
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }

    /// Contour edges from index `from` (inclusive) counter-clockwise to `to` (exclusive).
    pub fn arc(&self, from: usize, to: usize) -> Vec<usize> {
        let n = self.contour.len();
        let len = (to + n - from) % n;
        (0..len).map(|k| (from + k) % n).collect()
    }

    /// Whether a contour edge belongs to the blue arc.
    pub fn is_blue_edge(&self, i: usize) -> bool {
        let n = self.contour.len();
        (i + n - self.a_index) % n < (self.c_index + n - self.a_index) % n
    }

    /// Walker state at `a`: entering from outside between the yellow and blue
    /// boundary hexagons, yellow on the left.
    pub fn start_walker(&self) -> Walker {
        let n = self.contour.len();
        let yellow = self.contour[(self.a_index + n - 1) % n].boundary as usize;
        let blue = self.contour[self.a_index].boundary as usize;
        let (hy, hb) = (self.grid.hex(yellow), self.grid.hex(blue));
        let d = hy.direction_to(hb).expect("boundary hexagons at a are adjacent");
        Walker::new(Node::Vertex(self.a), Wedge { hex: hy, edge: d as u8 })
    }

    /// Color lookup using only fixed (boundary) states.
    pub fn lookup_fixed(&self, h: Hex) -> Lookup {
        match self.grid.index(h) {
            None => Lookup::Outside,
            Some(i) => match self.kind[i] {
                CellKind::Boundary => Lookup::Known(HexState::from_code(self.fixed[i]).expect("boundary state")),
                CellKind::Interior => Lookup::Unknown,
                _ => Lookup::Outside,
            },
        }
    }

    /// Assemble a domain from cell kinds, roles and boundary states; computes
    /// flowers, the contour and the position of the marked vertices on it.
    pub fn from_cells(
        grid: Grid,
        kind: Vec<CellKind>,
        role_of: impl Fn(usize) -> RoleHint,
        fixed: Vec<u8>,
        a: VertexId,
        c: VertexId,
        scale: f64,
        shape: Option<Arc<dyn Shape>>,
    ) -> Result<Domain> {
        let (role, flowers) = resolve_flowers(&grid, &kind, role_of)?;
        let interior: Vec<u32> = (0..grid.len()).filter(|&i| kind[i] == CellKind::Interior).map(|i| i as u32).collect();
        if interior.is_empty() {
            return Err(Error::Domain("domain has no interior cells".into()));
        }
        let mut interior_pos = vec![u32::MAX; grid.len()];
        for (k, &i) in interior.iter().enumerate() {
            interior_pos[i as usize] = k as u32;
        }
        for (i, k) in kind.iter().enumerate() {
            if *k == CellKind::Boundary && HexState::from_code(fixed[i]).is_none() {
                return Err(Error::Domain(format!("boundary cell {:?} has no state", grid.hex(i))));
            }
        }
        let contour = walk_contour(&grid, &kind, Some(a))?;
        let a_index = junction_index(&contour, a)
            .ok_or_else(|| Error::NotAdmissible(format!("a = {a:?} is not a boundary junction")))?;
        let c_index = junction_index(&contour, c)
            .ok_or_else(|| Error::NotAdmissible(format!("c = {c:?} is not a boundary junction")))?;
        if a_index == c_index {
            return Err(Error::Domain("marked points a and c coincide".into()));
        }
        Ok(Domain {
            grid,
            kind,
            role,
            flowers,
            fixed,
            a,
            c,
            contour,
            a_index,
            c_index,
            interior,
            interior_pos,
            scale,
            shape,
        })
    }

    /// Plain-text snapshot: one line per non-outside cell.
    pub fn to_snapshot(&self) -> String {
        let mut s = String::new();
        writeln!(s, "floret-domain 1").unwrap();
        writeln!(s, "scale {:e}", self.scale).unwrap();
        writeln!(s, "a {} {} {}", self.a.q, self.a.r, self.a.kind).unwrap();
        writeln!(s, "c {} {} {}", self.c.q, self.c.r, self.c.kind).unwrap();
        for i in 0..self.grid.len() {
            let kind = match self.kind[i] {
                CellKind::Outside => continue,
                CellKind::Interior => "interior",
                CellKind::Boundary => "boundary",
                CellKind::Detached => "detached",
            };
            let role = match self.role[i] {
                CellRole::Filler => "filler",
                CellRole::Iris(_) => "iris",
                CellRole::Petal(..) => "petal",
            };
            let st = HexState::from_code(self.fixed[i]).map_or('-', |s| s.symbol());
            let h = self.grid.hex(i);
            writeln!(s, "{} {} {} {} {}", h.q, h.r, role, kind, st).unwrap();
        }
        s
    }

    pub fn from_snapshot(text: &str) -> Result<Domain> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let perr = |m: &str| Error::Parse(format!("domain snapshot: {m}"));
        if lines.next().map(str::trim) != Some("floret-domain 1") {
            return Err(perr("missing header"));
        }
        let mut scale = None;
        let mut a = None;
        let mut c = None;
        let mut cells: Vec<(Hex, RoleHint, CellKind, u8)> = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<i32>().map_err(|_| perr(&format!("bad integer {s:?}")));
            match f.as_slice() {
                ["scale", v] => scale = Some(v.parse::<f64>().map_err(|_| perr("bad scale"))?),
                ["a", q, r, k] => a = Some(VertexId::new(num(q)?, num(r)?, num(k)? as u8)),
                ["c", q, r, k] => c = Some(VertexId::new(num(q)?, num(r)?, num(k)? as u8)),
                [q, r, role, kind, st] => {
                    let role = match *role {
                        "filler" => RoleHint::Filler,
                        "iris" => RoleHint::Iris,
                        "petal" => RoleHint::Petal,
                        _ => return Err(perr(&format!("bad role {role:?}"))),
                    };
                    let kind = match *kind {
                        "interior" => CellKind::Interior,
                        "boundary" => CellKind::Boundary,
                        "detached" => CellKind::Detached,
                        _ => return Err(perr(&format!("bad kind {kind:?}"))),
                    };
                    let st = match *st {
                        "-" => NO_STATE,
                        x if x.len() == 1 => HexState::from_symbol(x.chars().next().unwrap())
                            .ok_or_else(|| perr(&format!("bad state {x:?}")))?
                            .code(),
                        x => return Err(perr(&format!("bad state {x:?}"))),
                    };
                    cells.push((Hex::new(num(q)?, num(r)?), role, kind, st));
                }
                _ => return Err(perr(&format!("unrecognized line {line:?}"))),
            }
        }
        let (scale, a, c) =
            (scale.ok_or_else(|| perr("no scale"))?, a.ok_or_else(|| perr("no a"))?, c.ok_or_else(|| perr("no c"))?);
        if cells.is_empty() {
            return Err(perr("no cells"));
        }
        let q0 = cells.iter().map(|x| x.0.q).min().unwrap() - 2;
        let q1 = cells.iter().map(|x| x.0.q).max().unwrap() + 2;
        let r0 = cells.iter().map(|x| x.0.r).min().unwrap() - 2;
        let r1 = cells.iter().map(|x| x.0.r).max().unwrap() + 2;
        let grid = Grid { q0, r0, nq: (q1 - q0 + 1) as usize, nr: (r1 - r0 + 1) as usize };
        let mut kind = vec![CellKind::Outside; grid.len()];
        let mut roles = vec![RoleHint::Filler; grid.len()];
        let mut fixed = vec![NO_STATE; grid.len()];
        for (h, role, k, st) in cells {
            let i = grid.index(h).unwrap();
            kind[i] = k;
            roles[i] = role;
            fixed[i] = st;
        }
        Domain::from_cells(grid, kind, |i| roles[i], fixed, a, c, scale, None)
    }
}

/// Role of a cell before flowers are numbered.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoleHint {
    Filler,
    Iris,
    Petal,
}

fn resolve_flowers(
    grid: &Grid,
    kind: &[CellKind],
    role_of: impl Fn(usize) -> RoleHint,
) -> Result<(Vec<CellRole>, Vec<Flower>)> {
    let mut role = vec![CellRole::Filler; grid.len()];
    let mut flowers = Vec::new();
    for i in 0..grid.len() {
        if kind[i] == CellKind::Outside || role_of(i) != RoleHint::Iris {
            continue;
        }
        let h = grid.hex(i);
        let id = flowers.len() as u32;
        let mut petals = [0u32; 6];
        for (k, p) in petals.iter_mut().enumerate() {
            let j = grid
                .index(h.neighbor(k))
                .filter(|&j| kind[j] != CellKind::Outside && role_of(j) == RoleHint::Petal)
                .ok_or_else(|| Error::NotAdmissible(format!("partial flower at iris {h:?}")))?;
            *p = j as u32;
            role[j] = CellRole::Petal(id, k as u8);
        }
        role[i] = CellRole::Iris(id);
        flowers.push(Flower { iris: i as u32, petals });
    }
    for i in 0..grid.len() {
        if kind[i] != CellKind::Outside && role_of(i) == RoleHint::Petal && role[i] == CellRole::Filler {
            return Err(Error::NotAdmissible(format!("petal {:?} without iris", grid.hex(i))));
        }
    }
    Ok((role, flowers))
}

/// Walk the interface between interior cells (on the left) and boundary
/// cells (on the right). Starts next to `near` if it is a contour vertex.
pub fn walk_contour(grid: &Grid, kind: &[CellKind], near: Option<VertexId>) -> Result<Vec<ContourEdge>> {
    // start on an edge whose boundary side is known to lie on the outer contour
    let mut start: Option<(usize, usize)> = None;
    if let Some(v) = near {
        for (h, c) in v.hexes() {
            if let Some(i) = grid.index(h) {
                if kind[i] == CellKind::Interior {
                    for d in [c, (c + 1) % 6] {
                        if grid.neighbor(i, d).is_some_and(|j| kind[j] == CellKind::Boundary) {
                            start = Some((i, d));
                        }
                    }
                }
            }
        }
    }
    if start.is_none() {
        let i = (0..grid.len())
            .find(|&i| kind[i] == CellKind::Interior)
            .ok_or_else(|| Error::Domain("no interior".into()))?;
        // lowest row: the neighbor below is not interior
        let j = grid.neighbor(i, 4);
        if !j.is_some_and(|j| kind[j] == CellKind::Boundary) {
            return Err(Error::NotAdmissible(format!("interior cell {:?} touches the outside", grid.hex(i))));
        }
        start = Some((i, 4));
    }
    let (i0, d0) = start.unwrap();
    let h0 = grid.hex(i0);
    let init = Walker::new(Node::Vertex(h0.vertex(d0)), Wedge { hex: h0, edge: d0 as u8 });
    let mut w = init;
    let mut out = Vec::new();
    let limit = 6 * grid.len() + 16;
    loop {
        let m = w.advance(|h| match grid.index(h).map(|i| kind[i]) {
            Some(CellKind::Interior) => Lookup::Known(HexState::Yellow),
            Some(CellKind::Boundary) => Lookup::Known(HexState::Blue),
            _ => Lookup::Outside,
        });
        match m {
            Move::Moved { from: Node::Vertex(v), left, right, .. } => {
                out.push(ContourEdge {
                    interior: grid.index(left.hex).unwrap() as u32,
                    boundary: grid.index(right.hex).unwrap() as u32,
                    dir: left.edge,
                    start: v,
                });
            }
            Move::Outside(h) => {
                return Err(Error::NotAdmissible(format!("interior cell next to outside hexagon {h:?}")))
            }
            m => unreachable!("{m:?}"),
        }
        if w == init {
            break;
        }
        if out.len() > limit {
            return Err(Error::Domain("contour walk did not close".into()));
        }
    }
    Ok(out)
}

/// Index of the contour edge leaving junction vertex `v`.
fn junction_index(contour: &[ContourEdge], v: VertexId) -> Option<usize> {
    let n = contour.len();
    (0..n).find(|&i| {
        let p = contour[(i + n - 1) % n];
        let e = contour[i];
        e.start == v && p.boundary != e.boundary && p.interior == e.interior
    })
}

fn junctions(contour: &[ContourEdge]) -> Vec<usize> {
    let n = contour.len();
    (0..n)
        .filter(|&i| {
            let p = contour[(i + n - 1) % n];
            let e = contour[i];
            p.boundary != e.boundary && p.interior == e.interior
        })
        .collect()
}

/// Discretize `shape` at lattice spacing `eps` and color its boundary.
pub fn build_domain(shape: Arc<dyn Shape>, eps: f64, arrangement: &FloralArrangement) -> Result<Domain> {
    build_domain_marked(shape.clone(), eps, arrangement, shape.mark("a")?, shape.mark("c")?)
}

/// As [`build_domain`], with explicit marked points in shape coordinates.
pub fn build_domain_marked(
    shape: Arc<dyn Shape>,
    eps: f64,
    arrangement: &FloralArrangement,
    mark_a: Point,
    mark_c: Point,
) -> Result<Domain> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("lattice spacing {eps} must be positive")));
    }
    let b = shape.bbox();
    let (xmin, ymin, xmax, ymax) = (b[0] / eps, b[1] / eps, b[2] / eps, b[3] / eps);
    let r0 = (ymin * 2.0 / SQRT3).floor() as i32 - 2;
    let r1 = (ymax * 2.0 / SQRT3).ceil() as i32 + 2;
    let q0 = (xmin - r1 as f64 / 2.0).floor() as i32 - 2;
    let q1 = (xmax - r0 as f64 / 2.0).ceil() as i32 + 2;
    let grid = Grid { q0, r0, nq: (q1 - q0 + 1) as usize, nr: (r1 - r0 + 1) as usize };
    if grid.len() > 50_000_000 {
        return Err(Error::Domain("domain too large".into()));
    }
    let inside_pt = |p: Point| shape.contains([p[0] * eps, p[1] * eps]);
    let closure_inside: Vec<bool> = (0..grid.len())
        .map(|i| {
            let h = grid.hex(i);
            inside_pt(h.center()) && (0..6).all(|k| inside_pt(h.corner_position(k)))
        })
        .collect();
    let roles: Vec<Role> = (0..grid.len()).map(|i| arrangement.role(grid.hex(i))).collect();
    let member: Vec<bool> = (0..grid.len())
        .map(|i| {
            if !closure_inside[i] {
                return false;
            }
            let iris = match roles[i] {
                Role::Filler => return true,
                Role::Iris => grid.hex(i),
                Role::Petal { iris, .. } => iris,
            };
            std::iter::once(iris).chain(iris.neighbors()).all(|h| grid.index(h).is_some_and(|j| closure_inside[j]))
        })
        .collect();
    let a_lat = [mark_a[0] / eps, mark_a[1] / eps];
    let c_lat = [mark_c[0] / eps, mark_c[1] / eps];
    finish_domain(grid, roles, member, a_lat, c_lat, eps, Some(shape))
}

/// Domain whose cells (interior and boundary) are exactly `cells`; the
/// marked points are the junctions nearest `mark_a` and `mark_c`, given in
/// lattice units.
pub fn domain_from_cells(
    cells: &[Hex],
    arrangement: &FloralArrangement,
    mark_a: Point,
    mark_c: Point,
) -> Result<Domain> {
    if cells.is_empty() {
        return Err(Error::Domain("no cells".into()));
    }
    let q0 = cells.iter().map(|h| h.q).min().unwrap() - 2;
    let q1 = cells.iter().map(|h| h.q).max().unwrap() + 2;
    let r0 = cells.iter().map(|h| h.r).min().unwrap() - 2;
    let r1 = cells.iter().map(|h| h.r).max().unwrap() + 2;
    let grid = Grid { q0, r0, nq: (q1 - q0 + 1) as usize, nr: (r1 - r0 + 1) as usize };
    let mut member = vec![false; grid.len()];
    for h in cells {
        member[grid.index(*h).unwrap()] = true;
    }
    let roles: Vec<Role> = (0..grid.len()).map(|i| arrangement.role(grid.hex(i))).collect();
    finish_domain(grid, roles, member, mark_a, mark_c, 1.0, None)
}

fn finish_domain(
    grid: Grid,
    roles: Vec<Role>,
    mut member: Vec<bool>,
    a_lat: Point,
    c_lat: Point,
    eps: f64,
    shape: Option<Arc<dyn Shape>>,
) -> Result<Domain> {
    // largest lattice component
    let comp = largest_component(&grid, |j| member[j])
        .ok_or_else(|| Error::Domain("no lattice cell fits inside the shape".into()))?;
    for (i, m) in member.iter_mut().enumerate() {
        *m = *m && comp[i];
    }
    let flower_cells = |i: usize| -> Option<[usize; 7]> {
        let iris = match roles[i] {
            Role::Filler => return None,
            Role::Iris => grid.hex(i),
            Role::Petal { iris, .. } => iris,
        };
        let mut out = [0; 7];
        out[0] = grid.index(iris)?;
        for k in 0..6 {
            out[k + 1] = grid.index(iris.neighbor(k))?;
        }
        Some(out)
    };
    let mut kind = vec![CellKind::Outside; grid.len()];
    for i in 0..grid.len() {
        if member[i] {
            let edge = (0..6).any(|d| !grid.neighbor(i, d).is_some_and(|j| member[j]));
            kind[i] = if edge { CellKind::Boundary } else { CellKind::Interior };
        }
    }
    for i in 0..grid.len() {
        if kind[i] == CellKind::Boundary {
            if let Some(cells) = flower_cells(i) {
                for j in cells {
                    kind[j] = CellKind::Boundary;
                }
            }
        }
    }
    // keep the largest interior component; enclosed pockets join the boundary
    let best = largest_component(&grid, |j| kind[j] == CellKind::Interior);
    let main = best.ok_or_else(|| Error::Domain("shape too small for an interior at this spacing".into()))?;
    for i in 0..grid.len() {
        if kind[i] == CellKind::Interior && !main[i] {
            kind[i] = CellKind::Boundary;
        }
    }

    let contour = walk_contour(&grid, &kind, None)?;
    let js = junctions(&contour);
    let pick = |p: Point, avoid: Option<usize>| -> Option<usize> {
        let mut best = None;
        let mut bd = f64::INFINITY;
        for &i in &js {
            if Some(i) == avoid {
                continue;
            }
            let v = contour[i].start.position();
            let n = contour.len();
            let filler = |j: usize| matches!(roles[j], Role::Filler);
            let prefer = if filler(contour[i].boundary as usize) && filler(contour[(i + n - 1) % n].boundary as usize) {
                0.0
            } else {
                0.25
            };
            let d = ((v[0] - p[0]).powi(2) + (v[1] - p[1]).powi(2)).sqrt() + prefer;
            if d < bd {
                bd = d;
                best = Some(i);
            }
        }
        best
    };
    let ia = pick(a_lat, None).ok_or_else(|| Error::NotAdmissible("no junction vertex for a".into()))?;
    let ic = pick(c_lat, Some(ia)).ok_or_else(|| Error::NotAdmissible("no junction vertex for c".into()))?;

    // arc colors on the inner layer, then spread outwards
    let n = contour.len();
    let mut color: Vec<u8> = vec![NO_STATE; grid.len()];
    let blue_len = (ic + n - ia) % n;
    for k in 0..n {
        let e = contour[(ia + k) % n];
        let want = if k < blue_len { HexState::Blue } else { HexState::Yellow }.code();
        let b = e.boundary as usize;
        if color[b] != NO_STATE && color[b] != want {
            return Err(Error::NotAdmissible(format!("boundary hexagon {:?} touches both arcs", grid.hex(b))));
        }
        color[b] = want;
    }
    let mut queue: VecDeque<usize> = (0..grid.len()).filter(|&i| color[i] != NO_STATE).collect();
    while let Some(i) = queue.pop_front() {
        for d in 0..6 {
            if let Some(j) = grid.neighbor(i, d) {
                if kind[j] == CellKind::Boundary && color[j] == NO_STATE {
                    color[j] = color[i];
                    queue.push_back(j);
                }
            }
        }
    }
    for i in 0..grid.len() {
        if kind[i] == CellKind::Boundary && color[i] == NO_STATE {
            return Err(Error::NotAdmissible(format!("boundary hexagon {:?} unreachable", grid.hex(i))));
        }
        if kind[i] != CellKind::Boundary {
            color[i] = NO_STATE;
        }
    }
    let a = contour[ia].start;
    let c = contour[ic].start;
    let hint = |i: usize| match roles[i] {
        Role::Filler => RoleHint::Filler,
        Role::Iris => RoleHint::Iris,
        Role::Petal { .. } => RoleHint::Petal,
    };
    Domain::from_cells(grid, kind, hint, color, a, c, eps, shape)
}

fn largest_component(grid: &Grid, ok: impl Fn(usize) -> bool) -> Option<Vec<bool>> {
    let mut best: Option<Vec<bool>> = None;
    let mut best_size = 0;
    let mut seen = vec![false; grid.len()];
    for i in 0..grid.len() {
        if ok(i) && !seen[i] {
            let comp = component(grid, i, &ok);
            let size = comp.iter().filter(|&&x| x).count();
            for (s, c) in seen.iter_mut().zip(&comp) {
                *s |= *c;
            }
            if size > best_size {
                best_size = size;
                best = Some(comp);
            }
        }
    }
    best
}

/// Lattice component of `seed` among cells accepted by `ok`.
pub fn component(grid: &Grid, seed: usize, ok: impl Fn(usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; grid.len()];
    let mut stack = vec![seed];
    seen[seed] = true;
    while let Some(i) = stack.pop() {
        for d in 0..DIRS.len() {
            if let Some(j) = grid.neighbor(i, d) {
                if !seen[j] && ok(j) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    seen
}

/// Check the admissibility conditions: whole flowers, one connected
/// boundary class per color with positive probability, arc colors changing
/// only at the marked points, and correctly oriented junctions there.
pub fn check_admissible(d: &Domain, law: &FlowerLaw) -> Result<()> {
    let g = &d.grid;
    // whole flowers with positive probability of their fixed cells
    for (fi, f) in d.flowers.iter().enumerate() {
        let cells = f.cells();
        if cells.iter().any(|&c| d.kind[c as usize] == CellKind::Outside) {
            return Err(Error::NotAdmissible(format!("flower {fi} is partial")));
        }
        let mut partial = PartialFlower::default();
        for (k, &c) in cells.iter().enumerate() {
            if let Some(s) = d.fixed_state(c as usize) {
                if k == 0 {
                    partial.iris = Some(s);
                } else if s.is_split() {
                    return Err(Error::NotAdmissible(format!("split petal in flower {fi}")));
                } else {
                    partial.petals[k - 1] = Some(s == HexState::Blue);
                }
            }
        }
        if law.mass(&partial) <= 0.0 {
            return Err(Error::NotAdmissible(format!("boundary flower {fi} has probability zero")));
        }
    }
    // colors along the contour; a split boundary iris may show its other
    // half across an arc
    for (i, e) in d.contour.iter().enumerate() {
        let s = d.fixed_state(e.boundary as usize).unwrap();
        let blue = s.edge_blue((e.dir as usize + 3) % 6);
        if blue != d.is_blue_edge(i) && !s.is_split() {
            return Err(Error::NotAdmissible(format!("boundary color changes away from a and c at {:?}", e.start)));
        }
    }
    // each color class of boundary hexagons is lattice connected
    for blue in [true, false] {
        let has = |i: usize| {
            d.kind[i] == CellKind::Boundary && d.fixed_state(i).is_some_and(|s| (0..6).any(|e| s.edge_blue(e) == blue))
        };
        let first = (0..g.len()).find(|&i| has(i));
        if let Some(f) = first {
            let comp = component(g, f, has);
            if (0..g.len()).any(|i| has(i) && !comp[i]) {
                let name = if blue { "blue" } else { "yellow" };
                return Err(Error::NotAdmissible(format!("{name} boundary is not connected")));
            }
        }
    }
    // junction orientation at a and c
    let n = d.contour.len();
    for (idx, name, want_after_blue) in [(d.a_index, "a", true), (d.c_index, "c", false)] {
        let before = d.contour[(idx + n - 1) % n].boundary as usize;
        let after = d.contour[idx].boundary as usize;
        let (hb, ha) = (g.hex(before), g.hex(after));
        let dd = hb.direction_to(ha).ok_or_else(|| Error::NotAdmissible(format!("{name} is not a junction")))?;
        let sb = d.fixed_state(before).unwrap().edge_blue(dd);
        let sa = d.fixed_state(after).unwrap().edge_blue((dd + 3) % 6);
        if sa != want_after_blue || sb == want_after_blue {
            return Err(Error::NotAdmissible(format!("colors at {name} are not one blue and one yellow")));
        }
    }
    Ok(())
}
