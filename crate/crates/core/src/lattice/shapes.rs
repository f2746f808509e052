//! Continuum domains. Each shape kind is registered by name and built from a
//! [`ShapeSpec`] at runtime.

use super::hex::SQRT3;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

pub type Point = [f64; 2];

/// A simply connected polygonal domain with named marked boundary points.
pub trait Shape: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;
    /// Boundary vertices, counter-clockwise.
    fn polygon(&self) -> &[Point];
    fn marks(&self) -> BTreeMap<String, Point>;

    fn contains(&self, p: Point) -> bool {
        point_in_polygon(self.polygon(), p) && self.boundary_distance(p) > 0.0
    }

    fn boundary_distance(&self, p: Point) -> f64 {
        let poly = self.polygon();
        (0..poly.len()).map(|i| segment_distance(p, poly[i], poly[(i + 1) % poly.len()])).fold(f64::INFINITY, f64::min)
    }

    /// Index of the polygon side nearest to `p` (side `i` joins vertex `i`
    /// to vertex `i + 1`).
    fn nearest_side(&self, p: Point) -> usize {
        let poly = self.polygon();
        (0..poly.len())
            .map(|i| (i, segment_distance(p, poly[i], poly[(i + 1) % poly.len()])))
            .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
            .0
    }

    fn bbox(&self) -> [f64; 4] {
        let poly = self.polygon();
        let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for p in poly {
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        }
        b
    }

    fn mark(&self, name: &str) -> Result<Point> {
        self.marks()
            .get(name)
            .copied()
            .ok_or_else(|| Error::Domain(format!("shape {} has no marked point {name:?}", self.kind())))
    }
}

pub fn point_in_polygon(poly: &[Point], p: Point) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / l2).clamp(0.0, 1.0) };
    let (x, y) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - x).powi(2) + (p[1] - y).powi(2)).sqrt()
}

fn signed_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i][0] * poly[(i + 1) % n][1] - poly[(i + 1) % n][0] * poly[i][1]).sum::<f64>() / 2.0
}

#[derive(Clone, Debug)]
struct PolyShape {
    kind: &'static str,
    poly: Vec<Point>,
    marks: BTreeMap<String, Point>,
}

impl Shape for PolyShape {
    fn kind(&self) -> &'static str {
        self.kind
    }
    fn polygon(&self) -> &[Point] {
        &self.poly
    }
    fn marks(&self) -> BTreeMap<String, Point> {
        self.marks.clone()
    }
}

fn named(points: &[(&str, Point)]) -> BTreeMap<String, Point> {
    points.iter().map(|(n, p)| (n.to_string(), *p)).collect()
}

/// Shape kind plus its numeric parameters; polygons also carry vertices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShapeSpec {
    pub kind: String,
    pub params: BTreeMap<String, f64>,
    pub vertices: Vec<Point>,
}

impl ShapeSpec {
    pub fn new(kind: &str) -> Self {
        ShapeSpec { kind: kind.to_string(), ..Default::default() }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }

    fn get(&self, key: &str) -> Result<f64> {
        let v = *self
            .params
            .get(key)
            .ok_or_else(|| Error::Domain(format!("shape {} needs parameter {key:?}", self.kind)))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("shape parameter {key} = {v} must be positive")));
        }
        Ok(v)
    }

    pub fn build(&self) -> Result<Arc<dyn Shape>> {
        let entry = SHAPES
            .iter()
            .find(|e| e.name == self.kind)
            .ok_or_else(|| Error::Domain(format!("unknown shape kind {:?}", self.kind)))?;
        (entry.build)(self)
    }
}

struct ShapeEntry {
    name: &'static str,
    build: fn(&ShapeSpec) -> Result<Arc<dyn Shape>>,
}

/// Registered shape kinds.
static SHAPES: &[ShapeEntry] = &[
    ShapeEntry { name: "halfplane_box", build: build_halfplane_box },
    ShapeEntry { name: "triangle", build: build_triangle },
    ShapeEntry { name: "rectangle", build: build_rectangle },
    ShapeEntry { name: "rhombus", build: build_rhombus },
    ShapeEntry { name: "polygon", build: build_polygon },
];

pub fn shape_kinds() -> Vec<&'static str> {
    SHAPES.iter().map(|e| e.name).collect()
}

// Box standing on the real axis: bottom side [-w/2, w/2], a at the origin,
// c at the top middle.
fn build_halfplane_box(spec: &ShapeSpec) -> Result<Arc<dyn Shape>> {
    let (w, h) = (spec.get("width")?, spec.get("height")?);
    Ok(Arc::new(PolyShape {
        kind: "halfplane_box",
        poly: vec![[-w / 2.0, 0.0], [w / 2.0, 0.0], [w / 2.0, h], [-w / 2.0, h]],
        marks: named(&[("a", [0.0, 0.0]), ("b", [w / 2.0, h / 2.0]), ("c", [0.0, h]), ("d", [-w / 2.0, h / 2.0])]),
    }))
}

// Equilateral triangle with base [0, side] on the real axis.
fn build_triangle(spec: &ShapeSpec) -> Result<Arc<dyn Shape>> {
    let l = spec.params.get("side").copied().unwrap_or(1.0);
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::Domain(format!("triangle side {l} must be positive")));
    }
    let apex = [l / 2.0, l * SQRT3 / 2.0];
    Ok(Arc::new(PolyShape {
        kind: "triangle",
        poly: vec![[0.0, 0.0], [l, 0.0], apex],
        marks: named(&[("a", [0.0, 0.0]), ("b", [l, 0.0]), ("c", apex)]),
    }))
}

fn build_rectangle(spec: &ShapeSpec) -> Result<Arc<dyn Shape>> {
    let (w, h) = (spec.get("width")?, spec.get("height")?);
    Ok(Arc::new(PolyShape {
        kind: "rectangle",
        poly: vec![[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]],
        marks: named(&[("a", [w / 2.0, 0.0]), ("b", [w, h / 2.0]), ("c", [w / 2.0, h]), ("d", [0.0, h / 2.0])]),
    }))
}

// Rhombus with a 60 degree angle at the origin, corners a, b, c, d
// counter-clockwise. It is symmetric under the lattice reflection q <-> r.
fn build_rhombus(spec: &ShapeSpec) -> Result<Arc<dyn Shape>> {
    let l = spec.get("side")?;
    let (a, b) = ([0.0, 0.0], [l, 0.0]);
    let (c, d) = ([1.5 * l, l * SQRT3 / 2.0], [0.5 * l, l * SQRT3 / 2.0]);
    Ok(Arc::new(PolyShape {
        kind: "rhombus",
        poly: vec![a, b, c, d],
        marks: named(&[("a", a), ("b", b), ("c", c), ("d", d)]),
    }))
}

fn build_polygon(spec: &ShapeSpec) -> Result<Arc<dyn Shape>> {
    let mut poly = spec.vertices.clone();
    if poly.len() < 3 {
        return Err(Error::Domain("polygon needs at least three vertices".into()));
    }
    let area = signed_area(&poly);
    if area.abs() < 1e-14 {
        return Err(Error::Domain("degenerate polygon".into()));
    }
    if area < 0.0 {
        poly.reverse();
    }
    let names = ["a", "b", "c", "d"];
    let marks = poly.iter().zip(names).map(|(p, n)| (n.to_string(), *p)).collect();
    Ok(Arc::new(PolyShape { kind: "polygon", poly, marks }))
}
