//! Axial hex coordinates, corner vertices and the wedge structure around them.
//!
//! Hexagons are pointy-top. Neighbor direction `d` points at angle `60 * d`
//! degrees; edge `d` of a hexagon faces neighbor `d`, and corner `k` sits at
//! angle `60 * k + 30` between edges `k` and `k + 1`.

use serde::{Deserialize, Serialize};

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Neighbor offsets, counter-clockwise starting east.
pub const DIRS: [(i32, i32); 6] = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hex {
    pub q: i32,
    pub r: i32,
}

impl Hex {
    pub const fn new(q: i32, r: i32) -> Self {
        Hex { q, r }
    }

    pub fn neighbor(self, d: usize) -> Hex {
        let (dq, dr) = DIRS[d % 6];
        Hex::new(self.q + dq, self.r + dr)
    }

    pub fn neighbors(self) -> [Hex; 6] {
        std::array::from_fn(|d| self.neighbor(d))
    }

    /// Direction index of an adjacent hexagon.
    pub fn direction_to(self, other: Hex) -> Option<usize> {
        let d = (other.q - self.q, other.r - self.r);
        DIRS.iter().position(|&x| x == d)
    }

    pub fn distance(self, other: Hex) -> i32 {
        let dq = self.q - other.q;
        let dr = self.r - other.r;
        (dq.abs() + dr.abs() + (dq + dr).abs()) / 2
    }

    /// Center in lattice units (neighboring centers are at distance 1).
    pub fn center(self) -> [f64; 2] {
        [self.q as f64 + 0.5 * self.r as f64, self.r as f64 * SQRT3 / 2.0]
    }

    pub fn corner_position(self, k: usize) -> [f64; 2] {
        let c = self.center();
        let ang = (60.0 * (k % 6) as f64 + 30.0).to_radians();
        let rad = 1.0 / SQRT3;
        [c[0] + rad * ang.cos(), c[1] + rad * ang.sin()]
    }

    /// Canonical id of corner `k`.
    pub fn vertex(self, k: usize) -> VertexId {
        let (q, r) = (self.q, self.r);
        match k % 6 {
            0 => VertexId::new(q, r, 0),
            1 => VertexId::new(q, r, 1),
            2 => VertexId::new(q - 1, r, 0),
            3 => VertexId::new(q, r - 1, 1),
            4 => VertexId::new(q, r - 1, 0),
            _ => VertexId::new(q + 1, r - 1, 1),
        }
    }

    /// Hexagon whose center is nearest to a point given in lattice units.
    pub fn nearest(p: [f64; 2]) -> Hex {
        let rf = p[1] * 2.0 / SQRT3;
        let qf = p[0] - 0.5 * rf;
        let base = Hex::new(qf.round() as i32, rf.round() as i32);
        let mut best = base;
        let mut bd = f64::INFINITY;
        for h in std::iter::once(base).chain(base.neighbors()) {
            let c = h.center();
            let d = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
            if d < bd {
                bd = d;
                best = h;
            }
        }
        best
    }
}

/// A wedge is the triangle spanned by a hexagon center and one of its edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Wedge {
    pub hex: Hex,
    pub edge: u8,
}

/// A lattice vertex: `kind` 0 is corner 0 of hex `(q, r)`, kind 1 is corner 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexId {
    pub q: i32,
    pub r: i32,
    pub kind: u8,
}

// Wedges around each vertex kind in counter-clockwise order, as
// (hex offset, edge, corner of that hex sitting at the vertex).
const AROUND0: [((i32, i32), u8, u8); 6] =
    [((0, 1), 5, 4), ((0, 1), 4, 4), ((0, 0), 1, 0), ((0, 0), 0, 0), ((1, 0), 3, 2), ((1, 0), 2, 2)];
const AROUND1: [((i32, i32), u8, u8); 6] =
    [((0, 1), 4, 3), ((0, 1), 3, 3), ((-1, 1), 0, 5), ((-1, 1), 5, 5), ((0, 0), 2, 1), ((0, 0), 1, 1)];

impl VertexId {
    pub const fn new(q: i32, r: i32, kind: u8) -> Self {
        VertexId { q, r, kind }
    }

    fn table(self) -> &'static [((i32, i32), u8, u8); 6] {
        if self.kind == 0 {
            &AROUND0
        } else {
            &AROUND1
        }
    }

    /// The six wedges at this vertex, counter-clockwise. Entries `2i` and
    /// `2i + 1` belong to the same hexagon; entries `2i + 1` and `2i + 2`
    /// are separated by a hexagon edge.
    pub fn wedges(self) -> [Wedge; 6] {
        let t = self.table();
        std::array::from_fn(|i| {
            let ((dq, dr), e, _) = t[i];
            Wedge { hex: Hex::new(self.q + dq, self.r + dr), edge: e }
        })
    }

    /// The three hexagons at this vertex, counter-clockwise, with their corner index.
    pub fn hexes(self) -> [(Hex, usize); 3] {
        let t = self.table();
        std::array::from_fn(|i| {
            let ((dq, dr), _, c) = t[2 * i];
            (Hex::new(self.q + dq, self.r + dr), c as usize)
        })
    }

    pub fn corner_in(self, hex: Hex) -> Option<usize> {
        self.hexes().iter().find(|(h, _)| *h == hex).map(|&(_, c)| c)
    }

    pub fn position(self) -> [f64; 2] {
        let (h, c) = self.hexes()[0];
        h.corner_position(c)
    }
}

/// Endpoints of edge `e` of a hexagon, in counter-clockwise order around it.
pub fn edge_vertices(hex: Hex, e: usize) -> (VertexId, VertexId) {
    (hex.vertex((e + 5) % 6), hex.vertex(e % 6))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: [f64; 2], b: [f64; 2]) -> bool {
        (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12
    }

    #[test]
    fn vertex_ids_agree_on_position() {
        let h = Hex::new(3, -2);
        for k in 0..6 {
            let v = h.vertex(k);
            assert!(close(v.position(), h.corner_position(k)));
            assert_eq!(v.corner_in(h), Some(k));
            for (hh, c) in v.hexes() {
                assert!(close(hh.corner_position(c), h.corner_position(k)));
                assert_eq!(hh.vertex(c), v);
            }
        }
    }

    #[test]
    fn wedge_tables_are_counter_clockwise() {
        for kind in 0..2 {
            let v = VertexId::new(1, 1, kind);
            let p = v.position();
            let ang: Vec<f64> = v
                .wedges()
                .iter()
                .map(|w| {
                    let c = w.hex.center();
                    let mid = w.hex.center();
                    let a = (w.edge as f64 * 60.0).to_radians();
                    let m = [mid[0] + 0.5 * a.cos(), mid[1] + 0.5 * a.sin()];
                    let x = (c[0] + m[0] + p[0]) / 3.0 - p[0];
                    let y = (c[1] + m[1] + p[1]) / 3.0 - p[1];
                    y.atan2(x).to_degrees().rem_euclid(360.0)
                })
                .collect();
            for i in 0..6 {
                let d = (ang[(i + 1) % 6] - ang[i]).rem_euclid(360.0);
                assert!(d > 30.0 && d < 90.0, "kind {kind}: {ang:?}");
            }
            // separating segments
            let w = v.wedges();
            for i in 0..3 {
                assert_eq!(w[2 * i].hex, w[2 * i + 1].hex);
                let (a, b) = (w[2 * i + 1], w[(2 * i + 2) % 6]);
                assert_eq!(a.hex.neighbor(a.edge as usize), b.hex);
                assert_eq!(b.hex.neighbor(b.edge as usize), a.hex);
            }
        }
    }

    #[test]
    fn nearest_hex_roundtrip() {
        for q in -4..4 {
            for r in -4..4 {
                let h = Hex::new(q, r);
                let c = h.center();
                assert_eq!(Hex::nearest([c[0] + 0.3, c[1] - 0.2]), h);
            }
        }
    }

    #[test]
    fn distance_matches_rings() {
        let o = Hex::new(0, 0);
        for d in 0..6 {
            assert_eq!(o.distance(o.neighbor(d)), 1);
            assert_eq!(o.distance(o.neighbor(d).neighbor(d)), 2);
        }
        assert_eq!(o.distance(Hex::new(3, -3)), 3);
    }
}
