//! Cardy's crossing formula, half-plane cross ratios and separation events
//! on the equilateral triangle.

use crate::error::{Error, Result};
use crate::lattice::shapes::Point;
use crate::lattice::{CellKind, Domain};
use crate::measure::FlowerLaw;
use crate::observable::{estimate_observables, Observable};
use crate::sampler::{edge_blue, half, shape_id, CrossingSpec, Scratch};
use crate::stats::Estimate;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(z) and its derivative
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                z
            } else {
                p1
            };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

const PANELS: usize = 8;

fn rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(24))
}

// Integral of (s(1-s))^(-2/3) over [0, x] for x <= 1/2. With s = t^3 the
// integrand becomes 3 (1 - t^3)^(-2/3), smooth on the whole range.
fn lower_integral(x: f64) -> f64 {
    let top = x.cbrt();
    let (nodes, weights) = rule();
    let h = top / PANELS as f64;
    let mut sum = 0.0;
    for p in 0..PANELS {
        let mid = (p as f64 + 0.5) * h;
        for (u, w) in nodes.iter().zip(weights) {
            let t = mid + 0.5 * h * u;
            sum += w * 3.0 * (1.0 - t * t * t).powf(-2.0 / 3.0);
        }
    }
    sum * 0.5 * h
}

fn half_integral() -> f64 {
    static HALF: OnceLock<f64> = OnceLock::new();
    *HALF.get_or_init(|| lower_integral(0.5))
}

/// Cardy's formula: the normalized integral of `(s(1-s))^(-2/3)` over `[0, x]`.
pub fn cardy_f(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Invalid(format!("cross ratio {x} outside [0, 1]")));
    }
    if x > 0.5 {
        return Ok(1.0 - cardy_f(1.0 - x)?);
    }
    Ok(lower_integral(x) / (2.0 * half_integral()))
}

// Position of an extended real on the circle; infinity sits at angle pi.
fn boundary_angle(p: f64) -> f64 {
    if p.is_infinite() {
        PI
    } else {
        2.0 * p.atan()
    }
}

/// Cross ratio of four points on the extended real line, counter-clockwise
/// on the boundary of the upper half-plane (`f64::INFINITY` for infinity):
/// the `x` in `(0, 1)` such that the Möbius map taking `(pb, pc, pd)` to
/// `(1, ∞, 0)` takes `pa` to `1 - x`.
pub fn halfplane_cross_ratio(pa: f64, pb: f64, pc: f64, pd: f64) -> Result<f64> {
    let pts = [pa, pb, pc, pd];
    if pts.iter().any(|p| p.is_nan() || *p == f64::NEG_INFINITY) {
        return Err(Error::Invalid("points must be real or +infinity".into()));
    }
    for i in 0..4 {
        for j in i + 1..4 {
            if pts[i] == pts[j] {
                return Err(Error::Invalid(format!("repeated boundary point {}", pts[i])));
            }
        }
    }
    let th: Vec<f64> = pts.iter().map(|&p| (boundary_angle(p) - boundary_angle(pa)).rem_euclid(2.0 * PI)).collect();
    if !(th[1] < th[2] && th[2] < th[3]) {
        return Err(Error::Invalid("points are not in counter-clockwise order".into()));
    }
    // m(z) = (z - pd)(pb - pc) / ((z - pc)(pb - pd)), with infinite factors dropped
    let factor = |u: f64, v: f64| if u.is_infinite() || v.is_infinite() { None } else { Some(u - v) };
    let num = [factor(pa, pd), factor(pb, pc)];
    let den = [factor(pa, pc), factor(pb, pd)];
    let prod = |fs: [Option<f64>; 2]| fs.iter().flatten().product::<f64>();
    let m = prod(num) / prod(den);
    Ok(1.0 - m)
}

/// Which boundary arcs a separation event connects: `U` joins the arcs
/// opposite `a` and `b`... counter-clockwise the triangle boundary reads
/// side A (from b to c), side B (from c to a), side C (from a to b).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeparationKind {
    /// A path from side A to side B separating the target from side C.
    U,
    /// Side B to side C, separating from side A.
    V,
    /// Side C to side A, separating from side B.
    W,
}

impl SeparationKind {
    pub fn parse(s: &str) -> Result<SeparationKind> {
        match s {
            "u" | "U" => Ok(SeparationKind::U),
            "v" | "V" => Ok(SeparationKind::V),
            "w" | "W" => Ok(SeparationKind::W),
            _ => Err(Error::Invalid(format!("unknown separation function {s:?}"))),
        }
    }

    fn sides(self) -> (usize, usize, usize) {
        match self {
            SeparationKind::U => (0, 1, 2),
            SeparationKind::V => (1, 2, 0),
            SeparationKind::W => (2, 0, 1),
        }
    }
}

/// Contour arcs of the sides A, B, C of a triangle-like domain with marks a, b, c.
pub fn triangle_sides(d: &Domain) -> Result<[Vec<usize>; 3]> {
    let shape = d.shape.as_ref().ok_or_else(|| Error::Spec("domain has no shape".into()))?;
    let idx = |name: &str| -> Result<usize> { Ok(d.contour_index_near(shape.mark(name)?)) };
    let (a, b, c) = (idx("a")?, idx("b")?, idx("c")?);
    let n = d.contour.len();
    let (rb, rc) = ((b + n - a) % n, (c + n - a) % n);
    if !(0 < rb && rb < rc) {
        return Err(Error::Spec("marks a, b, c are not counter-clockwise".into()));
    }
    Ok([d.arc(b, c), d.arc(c, a), d.arc(a, b)])
}

/// Closest allowed distance of a target point to the boundary, in lattice units.
pub const SEPARATION_MARGIN: f64 = 3.0;

/// A path of one color joining two sides whose clusters cut the target cell
/// off from the third side.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparationEvent {
    pub id: String,
    pub kind: SeparationKind,
    pub blue: bool,
    pub target: usize,
    connect: [Vec<usize>; 2],
    shield: Vec<usize>,
}

impl SeparationEvent {
    /// `z` in shape coordinates.
    pub fn new(d: &Domain, kind: SeparationKind, blue: bool, z: Point) -> Result<SeparationEvent> {
        let shape = d.shape.as_ref().ok_or_else(|| Error::Spec("domain has no shape".into()))?;
        if !shape.contains(z) || shape.boundary_distance(z) < SEPARATION_MARGIN * d.scale {
            return Err(Error::Spec(format!("target {z:?} is within the boundary margin")));
        }
        let target = d
            .cell_at(z)
            .filter(|&i| d.kind[i] == CellKind::Interior)
            .ok_or_else(|| Error::Spec(format!("target {z:?} is not in an interior cell")))?;
        let sides = triangle_sides(d)?;
        let (x, y, w) = kind.sides();
        let name = format!("{:?}{}({:.4},{:.4})", kind, if blue { "b" } else { "y" }, z[0], z[1]).to_lowercase();
        Ok(SeparationEvent {
            id: name,
            kind,
            blue,
            target,
            connect: [sides[x].clone(), sides[y].clone()],
            shield: sides[w].clone(),
        })
    }

    pub fn occurs(&self, d: &Domain, states: &[u8], scratch: &mut Scratch) -> bool {
        let z = self.target;
        let blue = self.blue;
        let n = d.interior.len();
        let Scratch { uf, marks, stack } = scratch;
        uf.reset(2 * n);
        for &i in &d.interior {
            let i = i as usize;
            if i == z {
                continue;
            }
            for e in 0..3 {
                let Some(j) = d.grid.neighbor(i, e) else { continue };
                if j == z || d.kind[j] != CellKind::Interior {
                    continue;
                }
                if edge_blue(states[i], e) == blue && edge_blue(states[j], e + 3) == blue {
                    uf.union(shape_id(d, states, i, e), shape_id(d, states, j, e + 3));
                }
            }
        }
        marks.clear();
        marks.resize(2 * n, 0);
        for (bit, arc) in [(1u8, &self.connect[0]), (2u8, &self.connect[1])] {
            for &k in arc {
                let e = d.contour[k];
                let i = e.interior as usize;
                if i != z && edge_blue(states[i], e.dir as usize) == blue {
                    let r = uf.find(shape_id(d, states, i, e.dir as usize));
                    marks[r] |= bit;
                }
            }
        }
        if !marks.contains(&3) {
            return false;
        }
        // flood the complement of the joining clusters from the shielded side
        const SEEN: u8 = 4;
        let mut blocked = |s: usize, marks: &mut Vec<u8>| marks[uf.find(s)] & 3 == 3;
        stack.clear();
        for &k in &self.shield {
            let e = d.contour[k];
            let s = shape_id(d, states, e.interior as usize, e.dir as usize);
            if marks[s] & SEEN == 0 && !blocked(s, marks) {
                marks[s] |= SEEN;
                stack.push(s as u32);
            }
        }
        while let Some(s) = stack.pop() {
            let s = s as usize;
            let i = d.interior[s / 2] as usize;
            if i == z {
                return false;
            }
            let h = s % 2;
            let mut next = |t: usize, marks: &mut Vec<u8>, stack: &mut Vec<u32>| {
                if marks[t] & SEEN == 0 && !blocked(t, marks) {
                    marks[t] |= SEEN;
                    stack.push(t as u32);
                }
            };
            if crate::measure::HexState::from_code(states[i]).is_some_and(|st| st.is_split()) {
                next(s ^ 1, marks, stack);
            }
            for e in 0..6 {
                if half(states[i], e) != h {
                    continue;
                }
                let Some(j) = d.grid.neighbor(i, e) else { continue };
                if d.kind[j] == CellKind::Interior {
                    next(shape_id(d, states, j, (e + 3) % 6), marks, stack);
                }
            }
        }
        true
    }
}

impl Observable for SeparationEvent {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn eval(&self, d: &Domain, states: &[u8], scratch: &mut Scratch) -> f64 {
        self.occurs(d, states, scratch) as u8 as f64
    }
}

pub fn estimate_separation(d: &Domain, law: &FlowerLaw, ev: &SeparationEvent, n: usize, seed: u64) -> Result<Estimate> {
    Ok(estimate_observables(d, law, &[ev], n, seed)?[0])
}

/// Limit of the `U` separation probability on an equilateral triangle with
/// base on the real axis: the height normalized by the apex height.
pub fn triangle_u(side: f64, y: f64) -> f64 {
    2.0 * y / (3f64.sqrt() * side)
}

/// One entry of a Cardy scan.
#[derive(Clone, Debug)]
pub enum ScanTarget {
    /// A crossing with its cross ratio, if one is computable for the shape.
    Crossing { spec: CrossingSpec, x: Option<f64> },
    /// A `U` separation event with its predicted probability.
    Separation { event: SeparationEvent, predicted: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub spec_id: String,
    /// Cross ratio; for separation rows the predicted value itself.
    pub x: Option<f64>,
    #[serde(rename = "F")]
    pub f: Option<f64>,
    pub est: f64,
    pub stderr: f64,
    pub n: usize,
    pub z: Option<f64>,
}

impl ScanRow {
    pub const CSV_HEADER: &'static str = "spec_id,x,F,est,stderr,n,z";

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("unsupported".to_string(), |v| format!("{v:.10}"));
        format!(
            "{},{},{},{:.10},{:.10},{},{}",
            self.spec_id,
            opt(self.x),
            opt(self.f),
            self.est,
            self.stderr,
            self.n,
            opt(self.z)
        )
    }
}

/// Cross ratio of a crossing spec on a half-plane box, treating the box as
/// the half-plane itself; `None` unless all four points lie on the base.
pub fn box_cross_ratio(d: &Domain, points: [Point; 4]) -> Option<f64> {
    let shape = d.shape.as_ref()?;
    if shape.kind() != "halfplane_box" || points.iter().any(|p| p[1].abs() > 1e-12) {
        return None;
    }
    halfplane_cross_ratio(points[0][0], points[1][0], points[2][0], points[3][0]).ok()
}

/// Estimates for all targets from shared samples, compared with predictions.
pub fn cardy_scan(d: &Domain, law: &FlowerLaw, targets: &[ScanTarget], n: usize, seed: u64) -> Result<Vec<ScanRow>> {
    let obs: Vec<&dyn Observable> = targets
        .iter()
        .map(|t| match t {
            ScanTarget::Crossing { spec, .. } => spec as &dyn Observable,
            ScanTarget::Separation { event, .. } => event as &dyn Observable,
        })
        .collect();
    let est = estimate_observables(d, law, &obs, n, seed)?;
    let mut rows = Vec::new();
    for (t, e) in targets.iter().zip(est) {
        let (id, x, f) = match t {
            ScanTarget::Crossing { spec, x } => (spec.id.clone(), *x, x.map(cardy_f).transpose()?),
            ScanTarget::Separation { event, predicted } => (event.id.clone(), Some(*predicted), Some(*predicted)),
        };
        let z = f.map(|f| if e.stderr > 0.0 { (e.mean - f) / e.stderr } else { f64::NAN });
        rows.push(ScanRow { spec_id: id, x, f, est: e.mean, stderr: e.stderr, n: e.n, z });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_domain, FloralArrangement, ShapeSpec};
    use crate::measure::ModelParams;
    use statrs::function::beta::beta_reg;

    // regularized incomplete beta I_x(1/3, 1/3), evaluated once with an
    // independent arbitrary-precision integrator
    const F_QUARTER: f64 = 0.373548791334230454433171155817;
    const F_TENTH: f64 = 0.267337006850383421019462172355;

    #[test]
    fn formula_values() {
        assert_eq!(cardy_f(0.5).unwrap(), 0.5);
        assert_eq!(cardy_f(0.0).unwrap(), 0.0);
        assert_eq!(cardy_f(1.0).unwrap(), 1.0);
        assert!((cardy_f(0.25).unwrap() - F_QUARTER).abs() < 1e-12);
        assert!((cardy_f(0.1).unwrap() - F_TENTH).abs() < 1e-12);
        for k in 1..100 {
            let x = k as f64 / 100.0;
            assert!((cardy_f(x).unwrap() - beta_reg(1.0 / 3.0, 1.0 / 3.0, x)).abs() < 1e-10, "{x}");
        }
        assert!(cardy_f(-0.1).is_err());
        assert!(cardy_f(1.5).is_err());
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(7);
        let m: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((m - 2.0 / 13.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn cross_ratios() {
        let x = halfplane_cross_ratio(0.7, 1.0, f64::INFINITY, 0.0).unwrap();
        assert!((x - 0.3).abs() < 1e-15);
        // Möbius invariance: translate and scale all points
        let pts = [-3.0, -1.0, 0.5, 4.0];
        let x1 = halfplane_cross_ratio(pts[0], pts[1], pts[2], pts[3]).unwrap();
        let x2 = halfplane_cross_ratio(2.0 * pts[0] + 1.0, 2.0 * pts[1] + 1.0, 2.0 * pts[2] + 1.0, 2.0 * pts[3] + 1.0)
            .unwrap();
        assert!((x1 - x2).abs() < 1e-14);
        // direct evaluation of the map (z - d)(b - c) / ((z - c)(b - d)) at a
        let m = (pts[0] - pts[3]) * (pts[1] - pts[2]) / ((pts[0] - pts[2]) * (pts[1] - pts[3]));
        assert!((x1 - (1.0 - m)).abs() < 1e-15);
        // symmetric configuration
        let s = halfplane_cross_ratio(-2.0, -1.0, 1.0, 2.0).unwrap();
        assert!(s > 0.0 && s < 1.0);
        assert!(halfplane_cross_ratio(-1.0, 1.0, f64::INFINITY, 0.0).is_err());
        assert!(halfplane_cross_ratio(1.0, 1.0, f64::INFINITY, 0.0).is_err());
        assert!(halfplane_cross_ratio(0.0, 2.0, 1.0, 3.0).is_err());
    }

    fn triangle(eps: f64) -> Domain {
        let shape = ShapeSpec::new("triangle").build().unwrap();
        build_domain(shape, eps, &FloralArrangement::periodic(3).unwrap()).unwrap()
    }

    #[test]
    fn separation_in_monochrome_configurations() {
        let d = triangle(1.0 / 32.0);
        let mut s = Scratch::new(&d);
        let ev = SeparationEvent::new(&d, SeparationKind::U, true, [0.5, 0.3]).unwrap();
        let mut states = d.fixed.clone();
        for &i in &d.interior {
            states[i as usize] = 0;
        }
        // the target's own cell is left out, the rest still surrounds it
        assert!(ev.occurs(&d, &states, &mut s));
        for &i in &d.interior {
            states[i as usize] = 1;
        }
        assert!(!ev.occurs(&d, &states, &mut s));
        assert!(SeparationEvent::new(&d, SeparationKind::U, true, [0.5, 0.05]).is_err());
        assert!(SeparationEvent::new(&d, SeparationKind::U, true, [0.5, -0.3]).is_err());
    }

    #[test]
    fn separation_at_the_centroid_is_symmetric() {
        let d = triangle(1.0 / 32.0);
        let law = FlowerLaw::new(ModelParams::site());
        let z = [0.5, 3f64.sqrt() / 6.0];
        let evs: Vec<SeparationEvent> = [SeparationKind::U, SeparationKind::V, SeparationKind::W]
            .iter()
            .map(|&k| SeparationEvent::new(&d, k, true, z).unwrap())
            .collect();
        let obs: Vec<&dyn Observable> = evs.iter().map(|e| e as &dyn Observable).collect();
        let est = estimate_observables(&d, &law, &obs, 4000, 3).unwrap();
        // coarse mesh: the three agree with each other well before they reach 1/3
        let mean = est.iter().map(|e| e.mean).sum::<f64>() / 3.0;
        for e in &est {
            assert!((e.mean - mean).abs() < 0.04, "{e:?}");
        }
        assert!(mean > 0.22 && mean < 0.34, "{mean}");
    }

    #[test]
    fn scan_rows_and_csv() {
        let shape = ShapeSpec::new("halfplane_box").with("width", 4.0).with("height", 2.0).build().unwrap();
        let d = build_domain(shape, 1.0 / 8.0, &FloralArrangement::periodic(3).unwrap()).unwrap();
        let pts = [[-0.75, 0.0], [-0.25, 0.0], [0.25, 0.0], [0.75, 0.0]];
        let spec = CrossingSpec::from_points(&d, "base", true, pts).unwrap();
        let x = box_cross_ratio(&d, pts);
        assert!(x.is_some());
        let t = triangle(1.0 / 32.0);
        assert_eq!(box_cross_ratio(&t, pts), None);
        let rows =
            cardy_scan(&d, &FlowerLaw::new(ModelParams::site()), &[ScanTarget::Crossing { spec, x }], 200, 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].to_csv().starts_with("base,"));
        assert_eq!(ScanRow::CSV_HEADER.split(',').count(), rows[0].to_csv().split(',').count());
    }
}
