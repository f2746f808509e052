//! Interface walker on the wedge triangulation: moves along wedge sides,
//! keeping a blue wedge on its right and a yellow wedge on its left.

use super::hex::{Hex, VertexId, Wedge};
use crate::measure::HexState;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Node {
    Vertex(VertexId),
    Center(Hex),
}

/// Answer of a color oracle for one hexagon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lookup {
    Known(HexState),
    Unknown,
    Outside,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    /// Crossed one segment; `right` is the blue wedge across it.
    Moved { from: Node, to: Node, left: Wedge, right: Wedge },
    /// The state of this hexagon is needed before moving.
    Need(Hex),
    /// The walk would enter a hexagon outside the domain.
    Outside(Hex),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Walker {
    pub node: Node,
    /// Yellow wedge on the left of the last segment.
    pub left: Wedge,
}

impl Walker {
    pub fn new(node: Node, left: Wedge) -> Self {
        Walker { node, left }
    }

    /// Sweep clockwise from the left wedge to the first blue wedge and move
    /// along the segment in front of it.
    pub fn advance(&mut self, mut color: impl FnMut(Hex) -> Lookup) -> Move {
        match self.node {
            Node::Vertex(v) => {
                let w = v.wedges();
                let i = w.iter().position(|x| *x == self.left).expect("left wedge must touch the current vertex");
                for step in 1..6 {
                    let j = (i + 6 - step) % 6;
                    let cand = w[j];
                    let blue = match color(cand.hex) {
                        Lookup::Known(s) => s.edge_blue(cand.edge as usize),
                        Lookup::Unknown => return Move::Need(cand.hex),
                        Lookup::Outside => return Move::Outside(cand.hex),
                    };
                    if !blue {
                        continue;
                    }
                    let prev = w[(j + 1) % 6];
                    let to = if prev.hex == cand.hex {
                        Node::Center(cand.hex)
                    } else {
                        let c = v.corner_in(prev.hex).expect("wedge hex at vertex");
                        let e = prev.edge as usize;
                        let other = if c == e { (e + 5) % 6 } else { e };
                        Node::Vertex(prev.hex.vertex(other))
                    };
                    let from = self.node;
                    self.node = to;
                    self.left = prev;
                    return Move::Moved { from, to, left: prev, right: cand };
                }
                panic!("no blue wedge around {v:?}");
            }
            Node::Center(h) => {
                let s = match color(h) {
                    Lookup::Known(s) => s,
                    Lookup::Unknown => return Move::Need(h),
                    Lookup::Outside => return Move::Outside(h),
                };
                let e0 = self.left.edge as usize;
                for step in 1..6 {
                    let e = (e0 + 6 - step) % 6;
                    if s.edge_blue(e) {
                        let prev = Wedge { hex: h, edge: ((e + 1) % 6) as u8 };
                        let to = Node::Vertex(h.vertex(e));
                        let from = self.node;
                        self.node = to;
                        self.left = prev;
                        return Move::Moved { from, to, left: prev, right: Wedge { hex: h, edge: e as u8 } };
                    }
                }
                panic!("no blue wedge inside {h:?}");
            }
        }
    }
}

/// Position of a walker node in lattice units.
pub fn node_position(n: Node) -> [f64; 2] {
    match n {
        Node::Vertex(v) => v.position(),
        Node::Center(h) => h.center(),
    }
}

/// The hexagon at a vertex that is neither of the two given ones.
pub fn third_hex(v: VertexId, a: Hex, b: Hex) -> Hex {
    v.hexes().iter().map(|x| x.0).find(|&h| h != a && h != b).expect("three hexagons at a vertex")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    // Single blue hexagon in a yellow sea: the walker circles it clockwise
    // (blue on the right), visiting its six corners.
    #[test]
    fn circles_single_blue_hex() {
        let blue = Hex::new(0, 0);
        let color = |h: Hex| Lookup::Known(HexState::pure(h == blue));
        // heading south along edge 0: the east neighbor is on the left
        let east = blue.neighbor(0);
        let start = Node::Vertex(blue.vertex(5));
        let mut w = Walker::new(start, Wedge { hex: east, edge: 3 });
        let mut seen = HashSet::new();
        for _ in 0..6 {
            match w.advance(color) {
                Move::Moved { to, right, .. } => {
                    assert_eq!(right.hex, blue);
                    if let Node::Vertex(v) = to {
                        assert!(v.corner_in(blue).is_some());
                        seen.insert(v);
                    }
                }
                m => panic!("{m:?}"),
            }
        }
        assert_eq!(seen.len(), 6);
        assert_eq!(w.node, start);
    }

    #[test]
    fn passes_through_split_center() {
        // Split(0) with matching neighbors: blue on directions 0..=2. The
        // interface runs along the diagonal from corner 5 to corner 2.
        let h = Hex::new(0, 0);
        let color = |x: Hex| {
            if x == h {
                Lookup::Known(HexState::Split(0))
            } else {
                Lookup::Known(HexState::pure(h.direction_to(x).is_some_and(|d| d <= 2)))
            }
        };
        let (n0, n5) = (h.neighbor(0), h.neighbor(5));
        let left = Wedge { hex: n5, edge: n5.direction_to(n0).unwrap() as u8 };
        let mut w = Walker::new(Node::Vertex(h.vertex(5)), left);
        match w.advance(color) {
            Move::Moved { to, .. } => assert_eq!(to, Node::Center(h)),
            m => panic!("{m:?}"),
        }
        match w.advance(color) {
            Move::Moved { to, .. } => assert_eq!(to, Node::Vertex(h.vertex(2))),
            m => panic!("{m:?}"),
        }
        match w.advance(color) {
            Move::Moved { right, left, .. } => {
                assert_eq!(right.hex, h.neighbor(2));
                assert_eq!(left.hex, h.neighbor(3));
            }
            m => panic!("{m:?}"),
        }
    }
}
