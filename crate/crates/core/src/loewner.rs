//! Chordal Loewner chains in the upper half-plane: capacity and driving
//! functions of curves by the vertical-slit zipper, the Loewner flow, and
//! the statistics used to compare explorer drivings with Brownian motion.
//!
//! Time is normalized so that the hull at time `t` has capacity `2t`
//! (`g_t(z) = z + 2t/z + ...`).

use crate::error::{Error, Result};
use crate::explorer::Exploration;
use crate::lattice::hex::SQRT3;
use crate::lattice::walker::node_position;
use crate::lattice::Domain;
use crate::measure::FlowerLaw;
use crate::stats::{linear_fit, Estimate, LineFit, Moments};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const AXIS_TOL: f64 = 1e-12;

/// A curve in the closed upper half-plane starting on the real axis.
#[derive(Clone, Debug, PartialEq)]
pub struct HCurve {
    points: Vec<Complex64>,
    mesh: f64,
}

impl HCurve {
    /// `mesh` is the sampling scale, used as the tolerance of geometric checks.
    pub fn new(points: Vec<Complex64>, mesh: f64) -> Result<HCurve> {
        let mut points = points;
        let Some(first) = points.first_mut() else {
            return Err(Error::Degenerate("curve has no base point".into()));
        };
        if first.im.abs() > AXIS_TOL {
            return Err(Error::Degenerate(format!("base point {first} is not on the real axis")));
        }
        first.im = 0.0;
        if !(mesh.is_finite() && mesh > 0.0) {
            return Err(Error::Invalid(format!("mesh {mesh} must be positive")));
        }
        for (k, z) in points.iter().enumerate() {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::Degenerate(format!("point {k} is not finite")));
            }
            if z.im < -AXIS_TOL {
                return Err(Error::Degenerate(format!("point {k} = {z} leaves the upper half-plane")));
            }
        }
        if let Some(k) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::Degenerate(format!("points {k} and {} coincide", k + 1)));
        }
        for z in points.iter_mut() {
            z.im = z.im.max(0.0);
        }
        Ok(HCurve { points, mesh })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn base(&self) -> f64 {
        self.points[0].re
    }

    /// `[x0, x0 + ih]` sampled at `n` equal steps after the base.
    pub fn vertical_slit(x0: f64, h: f64, n: usize) -> Result<HCurve> {
        if n == 0 {
            return Err(Error::Invalid("slit needs at least one step".into()));
        }
        let pts = (0..=n).map(|k| Complex64::new(x0, h * k as f64 / n as f64)).collect();
        HCurve::new(pts, h / n as f64)
    }

    /// Arc of the circle of radius `r` centered at `r` on the real axis,
    /// leaving 0 vertically, up to angle `theta`, at arc-length spacing `mesh`.
    pub fn circular_arc(r: f64, theta: f64, mesh: f64) -> Result<HCurve> {
        let n = ((r * theta / mesh).ceil() as usize).max(1);
        let pts = (0..=n)
            .map(|k| {
                let a = theta * k as f64 / n as f64;
                Complex64::new(r * (1.0 - a.cos()), r * a.sin())
            })
            .collect();
        HCurve::new(pts, r * theta / n as f64)
    }

    pub fn translated(&self, x0: f64) -> HCurve {
        HCurve { points: self.points.iter().map(|z| z + x0).collect(), mesh: self.mesh }
    }

    pub fn scaled(&self, rho: f64) -> HCurve {
        HCurve { points: self.points.iter().map(|z| z * rho).collect(), mesh: self.mesh * rho }
    }

    /// Insert the midpoint of every segment.
    pub fn with_midpoints(&self) -> HCurve {
        let mut pts = Vec::with_capacity(2 * self.points.len());
        pts.push(self.points[0]);
        for w in self.points.windows(2) {
            pts.push((w[0] + w[1]) * 0.5);
            pts.push(w[1]);
        }
        HCurve { points: pts, mesh: self.mesh / 2.0 }
    }

    /// Resample the polyline at equal arc-length `spacing`, keeping both ends.
    pub fn resampled(&self, spacing: f64) -> Result<HCurve> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::Invalid(format!("spacing {spacing} must be positive")));
        }
        let mut pts = vec![self.points[0]];
        let mut carry = 0.0;
        for w in self.points.windows(2) {
            let len = (w[1] - w[0]).norm();
            let mut s = spacing - carry;
            while s < len {
                pts.push(w[0] + (w[1] - w[0]) * (s / len));
                s += spacing;
            }
            carry = len - (s - spacing);
        }
        let last = *self.points.last().expect("non-empty");
        if pts.last().is_some_and(|p| (p - last).norm() < 0.25 * spacing) && pts.len() > 1 {
            pts.pop();
        }
        if pts.last() != Some(&last) {
            pts.push(last);
        }
        HCurve::new(pts, spacing)
    }
}

/// Driving function sampled at the capacity times of a curve's points.
/// `lambda[k]` is the driving value on `(t[k-1], t[k]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingSample {
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Index of the curve point reached at `t[k]`.
    pub source: Vec<usize>,
}

impl DrivingSample {
    pub fn constant(x: f64, times: &[f64]) -> DrivingSample {
        let mut t = vec![0.0];
        t.extend(times.iter().copied().filter(|&s| s > 0.0));
        let n = t.len();
        DrivingSample { t, lambda: vec![x; n], source: (0..n).collect() }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.len() <= 1
    }

    pub fn final_time(&self) -> f64 {
        *self.t.last().expect("driving has a base entry")
    }

    pub fn base(&self) -> f64 {
        self.lambda[0]
    }

    /// Index of the interval `(t[k-1], t[k]]` containing `t`, 0 for `t = 0`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        if t <= 0.0 {
            return Some(0);
        }
        if t > self.final_time() {
            return None;
        }
        Some(self.t.partition_point(|&s| s < t))
    }

    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.index_at(t).map(|k| self.lambda[k])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,lambda\n");
        for (t, l) in self.t.iter().zip(&self.lambda) {
            s.push_str(&format!("{t},{l}\n"));
        }
        s
    }
}

/// Conformal map removing the vertical slit `[x, x + iy]`.
#[inline]
fn slit_map(z: Complex64, x: f64, y: f64) -> Complex64 {
    let w = z - x;
    // (w - iy)(w + iy) keeps precision near the tip
    let u = Complex64::new(w.re, w.im - y) * Complex64::new(w.re, w.im + y);
    let mut r = fast_sqrt(u);
    if r.im < 0.0 || (r.im == 0.0 && w.re < 0.0) {
        r = -r;
    }
    x + r
}

// principal square root
#[inline]
fn fast_sqrt(u: Complex64) -> Complex64 {
    let m = (u.re * u.re + u.im * u.im).sqrt();
    if m == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if u.re >= 0.0 {
        let re = ((m + u.re) / 2.0).sqrt();
        Complex64::new(re, u.im / (2.0 * re))
    } else {
        let im = ((m - u.re) / 2.0).sqrt().copysign(u.im);
        Complex64::new(u.im / (2.0 * im), im)
    }
}

/// Incremental vertical-slit zipper. Each pushed point is mapped through the
/// slit maps of all earlier points.
#[derive(Clone, Debug)]
pub struct Zipper {
    maps: Vec<(f64, f64)>,
    sample: DrivingSample,
    pushed: usize,
    contacts: usize,
}

impl Zipper {
    pub fn new(base: f64) -> Zipper {
        Zipper {
            maps: Vec::new(),
            sample: DrivingSample { t: vec![0.0], lambda: vec![base], source: vec![0] },
            pushed: 0,
            contacts: 0,
        }
    }

    pub fn time(&self) -> f64 {
        self.sample.final_time()
    }

    /// Image of `z` under the current map, without zipping it.
    pub fn image(&self, z: Complex64) -> Complex64 {
        let mut w = z;
        for &(x, y) in &self.maps {
            w = slit_map(w, x, y);
        }
        w
    }

    /// Zip the next curve point. Points on the real axis carry no capacity
    /// and are skipped; returns whether a driving entry was added. A point
    /// mapping onto the real axis from inside the half-plane is an error.
    pub fn push(&mut self, z: Complex64) -> Result<bool> {
        self.advance(z, false)
    }

    /// As [`Zipper::push`], but a point landing on the real axis is taken as
    /// a contact of the curve with its own past and skipped.
    pub fn push_touching(&mut self, z: Complex64) -> Result<bool> {
        self.advance(z, true)
    }

    fn advance(&mut self, z: Complex64, touching: bool) -> Result<bool> {
        let w = self.image(z);
        self.settle(z, w, touching)
    }

    /// Zip points in order until the time reaches `t_max`; returns how many
    /// were consumed. Points are mapped in small blocks through the existing
    /// slit maps, which is much faster than one at a time.
    pub fn extend(&mut self, zs: &[Complex64], t_max: f64, touching: bool) -> Result<usize> {
        const BLOCK: usize = 8;
        let mut done = 0;
        while done < zs.len() && self.time() < t_max {
            let block = &zs[done..(done + BLOCK).min(zs.len())];
            let known = self.maps.len();
            let mut ws = [Complex64::new(0.0, 1.0); BLOCK];
            ws[..block.len()].copy_from_slice(block);
            for &(x, y) in &self.maps {
                for w in ws.iter_mut() {
                    *w = slit_map(*w, x, y);
                }
            }
            for (i, &z) in block.iter().enumerate() {
                if self.time() >= t_max {
                    return Ok(done + i);
                }
                let mut w = ws[i];
                for &(x, y) in &self.maps[known..] {
                    w = slit_map(w, x, y);
                }
                self.settle(z, w, touching)?;
            }
            done += block.len();
        }
        Ok(done)
    }

    fn settle(&mut self, z: Complex64, w: Complex64, touching: bool) -> Result<bool> {
        self.pushed += 1;
        let k = self.pushed;
        if z.im <= AXIS_TOL {
            return Ok(false);
        }
        if w.im <= 1e-9 * (1.0 + w.norm()) {
            if touching {
                self.contacts += 1;
                return Ok(false);
            }
            return Err(Error::Degenerate(format!("point {k} maps onto the real axis")));
        }
        self.maps.push((w.re, w.im));
        let t = self.time() + w.im * w.im / 4.0;
        self.sample.t.push(t);
        self.sample.lambda.push(w.re);
        self.sample.source.push(k);
        Ok(true)
    }

    /// Points skipped by [`Zipper::push_touching`].
    pub fn contacts(&self) -> usize {
        self.contacts
    }

    pub fn into_sample(self) -> DrivingSample {
        self.sample
    }
}

/// Driving function of a curve, capacity-parameterized.
pub fn zipper_extract(curve: &HCurve) -> Result<DrivingSample> {
    zipper_extract_until(curve, f64::INFINITY)
}

/// As [`zipper_extract`], stopping at the first point whose time reaches `t_max`.
pub fn zipper_extract_until(curve: &HCurve, t_max: f64) -> Result<DrivingSample> {
    let mut zip = Zipper::new(curve.base());
    zip.extend(&curve.points[1..], t_max, false)?;
    Ok(zip.into_sample())
}

/// Half-plane capacity: the `1/z` coefficient of the normalized map
/// removing the curve. Equals twice the final Loewner time.
pub fn hcap(curve: &HCurve) -> Result<f64> {
    Ok(2.0 * zipper_extract(curve)?.final_time())
}

/// How the driving is read between its sample times.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Interp {
    /// Constant on each `(t[k-1], t[k]]`: the exact driving of the zipper.
    Step,
    Linear,
}

fn driving_on(d: &DrivingSample, interp: Interp, k: usize, t: f64) -> f64 {
    match interp {
        Interp::Step => d.lambda[k],
        Interp::Linear => {
            let (t0, t1) = (d.t[k - 1], d.t[k]);
            let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            d.lambda[k - 1] + u * (d.lambda[k] - d.lambda[k - 1])
        }
    }
}

/// Solution `g_t(z)` of `dg/dt = 2 / (g - lambda_t)` at the driving times.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Time at which `g_t(z)` met the driving, if it did.
    pub swallowed: Option<f64>,
}

// relative step control for the RK4 integrators
const STEP_FRACTION: f64 = 0.005;
const SWALLOW_TOL: f64 = 1e-7;

fn rk4<F: Fn(f64, Complex64) -> Complex64>(f: &F, t: f64, g: Complex64, h: f64) -> Complex64 {
    let k1 = f(t, g);
    let k2 = f(t + h / 2.0, g + k1 * (h / 2.0));
    let k3 = f(t + h / 2.0, g + k2 * (h / 2.0));
    let k4 = f(t + h, g + k3 * h);
    g + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrate the Loewner flow of `z` from 0 to `t_end`.
pub fn forward_loewner(d: &DrivingSample, z: Complex64, t_end: f64, interp: Interp) -> Result<Trajectory> {
    if !(z.im > 0.0) {
        return Err(Error::Invalid(format!("start point {z} must lie in the upper half-plane")));
    }
    if !(t_end >= 0.0) || t_end > d.final_time() * (1.0 + 1e-12) {
        return Err(Error::Invalid(format!("time {t_end} outside the driving range [0, {}]", d.final_time())));
    }
    let mut traj = Trajectory { times: vec![0.0], values: vec![z], swallowed: None };
    let mut g = z;
    let mut t = 0.0;
    for k in 1..d.len() {
        let end = d.t[k].min(t_end);
        let f = |s: f64, g: Complex64| 2.0 / (g - driving_on(d, interp, k, s));
        while t < end {
            let gap = (g - driving_on(d, interp, k, t)).norm();
            if gap < SWALLOW_TOL * (1.0 + g.norm()) {
                traj.swallowed = Some(t);
                traj.times.push(t);
                traj.values.push(g);
                return Ok(traj);
            }
            let h = (end - t).min(STEP_FRACTION * gap * gap);
            g = rk4(&f, t, g, h);
            t = if end - t - h <= 0.0 { end } else { t + h };
        }
        traj.times.push(t);
        traj.values.push(g);
        if t >= t_end {
            break;
        }
    }
    Ok(traj)
}

/// Tip of the hull at time `t_k`, by running the Loewner flow backwards from
/// the driving value `lambda[k]`.
pub fn loewner_tip(d: &DrivingSample, k: usize, interp: Interp) -> Result<Complex64> {
    if k >= d.len() {
        return Err(Error::Invalid(format!("index {k} beyond the driving ({} entries)", d.len())));
    }
    let big_t = d.t[k];
    if k == 0 || big_t == 0.0 {
        return Ok(Complex64::new(d.lambda[0], 0.0));
    }
    // start just off the singularity, where the hull looks like a vertical slit
    let s0 = 1e-14 * big_t;
    let mut h = Complex64::new(d.lambda[k], 2.0 * s0.sqrt());
    let mut s = s0;
    for j in (1..=k).rev() {
        let end = big_t - d.t[j - 1];
        let f = |s: f64, h: Complex64| -2.0 / (h - driving_on(d, interp, j, big_t - s));
        while s < end {
            let gap = (h - driving_on(d, interp, j, big_t - s)).norm();
            let step = (end - s).min(STEP_FRACTION * gap * gap).max(1e-300);
            h = rk4(&f, s, h, step);
            s = if end - s - step <= 0.0 { end } else { s + step };
        }
    }
    Ok(h)
}

/// Driving values on a uniform time grid from `sqrt(kappa) B_t`, `B` a
/// standard Brownian motion started at 0.
pub fn brownian_driving<R: Rng + ?Sized>(kappa: f64, t_max: f64, steps: usize, rng: &mut R) -> DrivingSample {
    let dt = t_max / steps as f64;
    let mut t = vec![0.0];
    let mut lambda = vec![0.0];
    let mut x = 0.0;
    for k in 1..=steps {
        let g: f64 = rng.sample(StandardNormal);
        x += (kappa * dt).sqrt() * g;
        t.push(dt * k as f64);
        lambda.push(x);
    }
    DrivingSample { t, lambda, source: (0..=steps).collect() }
}

/// The curve traced by a driving: hull tips at every driving time.
pub fn trace_curve(d: &DrivingSample, interp: Interp) -> Result<HCurve> {
    let mut pts = Vec::with_capacity(d.len());
    for k in 0..d.len() {
        pts.push(loewner_tip(d, k, interp)?);
    }
    pts.dedup();
    let mesh = pts.windows(2).map(|w| (w[1] - w[0]).norm()).fold(0.0, f64::max).max(1e-12);
    HCurve::new(pts, mesh)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingRow {
    pub t: f64,
    pub n: usize,
    /// Mean of `lambda_t - lambda_0`.
    pub mean: Estimate,
    /// Mean of `(lambda_t - lambda_0)^2 / t`.
    pub second: Estimate,
    /// Correlation of the driving increments ending at this grid time and
    /// the next one.
    pub lag1_corr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrivingReport {
    pub rows: Vec<DrivingRow>,
}

impl DrivingReport {
    /// `|mean| <= k stderr` at every grid time.
    pub fn drift_ok(&self, k: f64) -> bool {
        self.rows.iter().all(|r| r.mean.mean.abs() <= k * r.mean.stderr)
    }

    /// Second moment over `t` within `kappa (1 +- rel)` at every grid time.
    pub fn variance_ok(&self, kappa: f64, rel: f64) -> bool {
        self.rows.iter().all(|r| (r.second.mean / kappa - 1.0).abs() <= rel)
    }

    pub fn to_ndjson(&self) -> String {
        self.rows
            .iter()
            .map(|r| {
                let mut v = serde_json::to_value(r).expect("row serializes");
                v["schema"] = "floret.driving_stats.v1".into();
                v.to_string() + "\n"
            })
            .collect()
    }
}

pub const MIN_DRIVING_SAMPLES: usize = 30;

/// Drift, variance and increment-correlation statistics of driving
/// functions on a grid of times.
pub fn driving_stats(samples: &[DrivingSample], t_grid: &[f64]) -> Result<DrivingReport> {
    if samples.len() < MIN_DRIVING_SAMPLES {
        return Err(Error::TooFewSamples { need: MIN_DRIVING_SAMPLES, got: samples.len() });
    }
    if t_grid.is_empty() || t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("time grid must be positive and increasing".into()));
    }
    let t_top = *t_grid.last().expect("non-empty grid");
    // values[i][j] = lambda at grid time j minus lambda_0 for sample i
    let mut values = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.final_time() < t_top {
            return Err(Error::Invalid(format!("sample {i} stops at t = {} before {t_top}", s.final_time())));
        }
        values.push(t_grid.iter().map(|&t| s.value_at(t).expect("covered") - s.base()).collect::<Vec<f64>>());
    }
    let increment = |row: &[f64], j: usize| if j == 0 { row[0] } else { row[j] - row[j - 1] };
    let mut rows = Vec::with_capacity(t_grid.len());
    for (j, &t) in t_grid.iter().enumerate() {
        let mut m1 = Moments::default();
        let mut m2 = Moments::default();
        for v in &values {
            m1.push(v[j]);
            m2.push(v[j] * v[j] / t);
        }
        let lag1_corr = (j + 1 < t_grid.len()).then(|| {
            let xs: Vec<f64> = values.iter().map(|v| increment(v, j)).collect();
            let ys: Vec<f64> = values.iter().map(|v| increment(v, j + 1)).collect();
            correlation(&xs, &ys)
        });
        rows.push(DrivingRow { t, n: values.len(), mean: m1.estimate(), second: m2.estimate(), lag1_corr });
    }
    Ok(DrivingReport { rows })
}

fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub t: f64,
    pub n: usize,
    /// `(x, P[|lambda_t - lambda_0| > x sqrt(t)])` for thresholds with at
    /// least `MIN_TAIL_COUNT` exceedances.
    pub exceedance: Vec<(f64, f64)>,
    /// Least-squares line through `(x, ln P)`.
    pub fit: Option<LineFit>,
    /// Pairs with some `Im gamma(s) > 2 sqrt(s) + mesh`, `s <= t`.
    pub height_violations: usize,
    /// Pairs with `sup_{s <= t} |gamma(s) - gamma(0)| < |lambda_t - lambda_0| / 4 - mesh`.
    pub spread_violations: usize,
    /// Largest `Im gamma(s) - 2 sqrt(s)` seen.
    pub worst_height: f64,
    /// Largest `|lambda_t - lambda_0| / 4 - sup |gamma - gamma(0)|` seen.
    pub worst_spread: f64,
}

impl TailReport {
    pub fn geometry_ok(&self) -> bool {
        self.height_violations == 0 && self.spread_violations == 0
    }

    /// Decreasing and close to linear on the log scale.
    pub fn tail_ok(&self, min_r2: f64) -> bool {
        self.fit.is_some_and(|f| f.slope < 0.0 && f.r2 >= min_r2)
    }
}

pub const MIN_TAIL_COUNT: usize = 5;
const TAIL_STEP: f64 = 0.25;

/// Exponential tail of `|lambda_t|` and the two geometric bounds relating
/// a curve to its driving. `curves[i]` must be the curve of `samples[i]`.
pub fn tail_and_geometry_check(samples: &[DrivingSample], curves: &[HCurve], t: f64) -> Result<TailReport> {
    if samples.len() != curves.len() {
        return Err(Error::Invalid(format!("{} drivings but {} curves", samples.len(), curves.len())));
    }
    if !(t > 0.0) {
        return Err(Error::Invalid(format!("time {t} must be positive")));
    }
    let mut scaled = Vec::with_capacity(samples.len());
    let mut rep = TailReport {
        t,
        n: samples.len(),
        exceedance: Vec::new(),
        fit: None,
        height_violations: 0,
        spread_violations: 0,
        worst_height: f64::NEG_INFINITY,
        worst_spread: f64::NEG_INFINITY,
    };
    for (i, (s, c)) in samples.iter().zip(curves).enumerate() {
        let k = s.index_at(t).ok_or_else(|| Error::Invalid(format!("sample {i} stops before t = {t}")))?;
        let lam = s.lambda[k] - s.base();
        scaled.push(lam.abs() / t.sqrt());
        let pts = c.points();
        let last = s.source[k];
        if last >= pts.len() {
            return Err(Error::Invalid(format!("sample {i} does not belong to its curve")));
        }
        let mut height = f64::NEG_INFINITY;
        for j in 1..=k {
            height = height.max(pts[s.source[j]].im - 2.0 * s.t[j].sqrt());
        }
        let spread = pts[..=last].iter().map(|z| (z - pts[0]).norm()).fold(0.0, f64::max);
        let deficit = lam.abs() / 4.0 - spread;
        rep.worst_height = rep.worst_height.max(height);
        rep.worst_spread = rep.worst_spread.max(deficit);
        rep.height_violations += (height > c.mesh()) as usize;
        rep.spread_violations += (deficit > c.mesh()) as usize;
    }
    let mut x = TAIL_STEP;
    loop {
        let count = scaled.iter().filter(|&&v| v > x).count();
        if count < MIN_TAIL_COUNT {
            break;
        }
        rep.exceedance.push((x, count as f64 / scaled.len() as f64));
        x += TAIL_STEP;
    }
    if rep.exceedance.len() >= 3 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rep.exceedance.iter().map(|&(x, p)| (x, p.ln())).unzip();
        rep.fit = linear_fit(&xs, &ys);
    }
    Ok(rep)
}

/// An exploration fed to the zipper through the identity embedding.
#[derive(Clone, Debug)]
pub struct ExplorationDriving {
    pub curve: HCurve,
    pub driving: DrivingSample,
    /// The curve left the central half of the box before its last point.
    pub left_central: bool,
    /// Exploration steps taken.
    pub steps: usize,
    /// Path points skipped because they touch the earlier path.
    pub contacts: usize,
}

const CHUNK_STEPS: usize = 32;

/// Explore from `a` until the Loewner time of the path reaches `t_max`
/// (lattice units, hexagon spacing 1). Lattice coordinates are used as
/// half-plane coordinates: the real axis is the lowest corner level of the
/// interior cells and `a` sits above 0. Path nodes are smoothed by midpoint
/// insertion. A path reaching `c` first stops there.
pub fn exploration_driving<R: Rng + ?Sized>(
    d: &Domain,
    law: &FlowerLaw,
    t_max: f64,
    rng: &mut R,
) -> Result<ExplorationDriving> {
    let shape = d.shape.as_ref().ok_or_else(|| Error::Invalid("domain has no shape".into()))?;
    let poly: Vec<[f64; 2]> = shape.polygon().iter().map(|&p| d.to_lattice(p)).collect();
    let (xmin, xmax) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[0]), b.max(p[0])));
    let (ymin, ymax) = poly.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[1]), b.max(p[1])));
    let floor =
        d.interior.iter().map(|&i| d.grid.hex(i as usize).center()[1] - 1.0 / SQRT3).fold(f64::INFINITY, f64::min);
    let mut e = Exploration::new(d);
    let pa = node_position(e.nodes()[0]);
    let origin = pa[0];
    let embed = |p: [f64; 2]| {
        let y = p[1] - floor;
        // floor vertices land on the axis exactly
        Complex64::new(p[0] - origin, if y.abs() < 1e-9 { 0.0 } else { y })
    };
    let central = |z: Complex64| {
        let x = z.re + origin;
        let y = z.im + floor;
        (x - (xmin + xmax) / 2.0).abs() <= (xmax - xmin) / 4.0 && y - ymin <= (ymax - ymin) / 2.0
    };

    let mut pts = vec![Complex64::new(0.0, 0.0)];
    let mut zip = Zipper::new(0.0);
    let first = embed(pa);
    if first.im > 0.0 {
        pts.push(first);
        zip.push(first)?;
    }
    let mut prev = first;
    let mut fed = 1;
    let mut left_central = false;
    loop {
        e.run_dynamic(law, rng, Some(CHUNK_STEPS))?;
        let nodes = e.nodes();
        let start = pts.len();
        for &n in &nodes[fed..] {
            let z = embed(node_position(n));
            pts.push((prev + z) * 0.5);
            pts.push(z);
            prev = z;
        }
        fed = nodes.len();
        let used = zip.extend(&pts[start..], t_max, true)?;
        left_central |= pts[start..start + used].iter().any(|&w| !central(w));
        if start + used < pts.len() || e.is_finished() {
            pts.truncate(start + used);
            break;
        }
    }
    let contacts = zip.contacts();
    let driving = zip.into_sample();
    Ok(ExplorationDriving { curve: HCurve::new(pts, 0.5)?, driving, left_central, steps: e.steps().len(), contacts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::replica_stream;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn slit_map_is_the_constant_driving_flow() {
        // g(z) = sqrt(z^2 + h^2) removes [0, ih]
        for z in [c(0.3, 0.2), c(-2.0, 0.5), c(5.0, 1e-3), c(-0.1, 3.0)] {
            let want = (z * z + 4.0).sqrt();
            let want = if want.im < 0.0 { -want } else { want };
            assert!((slit_map(z, 0.0, 2.0) - want).norm() < 1e-12, "{z}");
        }
        // the real axis goes to itself, preserving order
        let xs: Vec<f64> =
            [-3.0, -1.0, -1e-9, 1e-9, 1.0, 3.0].iter().map(|&x| slit_map(c(x, 0.0), 0.0, 1.0).re).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]), "{xs:?}");
        assert!(slit_map(c(0.0, 1.0), 0.0, 1.0).norm() < 1e-12);
    }

    #[test]
    fn vertical_slit_driving() {
        let h = 1.7;
        let d = zipper_extract(&HCurve::vertical_slit(0.0, h, 100).unwrap()).unwrap();
        assert_eq!(d.len(), 101);
        assert!(d.lambda.iter().all(|l| l.abs() < 1e-8));
        assert!((d.final_time() - h * h / 4.0).abs() < 1e-8);
        assert!(d.t.windows(2).all(|w| w[1] > w[0]));
        let shifted = zipper_extract(&HCurve::vertical_slit(2.5, h, 100).unwrap()).unwrap();
        assert!(shifted.lambda.iter().all(|l| (l - 2.5).abs() < 1e-8));
        assert!((hcap(&HCurve::vertical_slit(0.0, h, 100).unwrap()).unwrap() - h * h / 2.0).abs() < 1e-8);
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(hcap(&HCurve::new(vec![c(0.4, 0.0)], 0.1).unwrap()).unwrap(), 0.0);
        // slit then a tilted continuation: strictly more than the slit alone
        let mut pts: Vec<Complex64> = (0..=20).map(|k| c(0.0, k as f64 / 20.0)).collect();
        let first = hcap(&HCurve::new(pts.clone(), 0.05).unwrap()).unwrap();
        pts.extend((1..=20).map(|k| c(k as f64 / 20.0, 1.0 + k as f64 / 40.0)));
        let both = hcap(&HCurve::new(pts.clone(), 0.05).unwrap()).unwrap();
        let second = hcap(
            &HCurve::new(pts[20..].iter().map(|z| z - c(0.0, 1.0)).map(|z| c(z.re, z.im.max(0.0))).collect(), 0.05)
                .unwrap(),
        )
        .unwrap();
        assert!(both > first && both > second, "{first} {second} {both}");
        assert!(HCurve::new(vec![c(0.0, 0.0), c(1.0, -0.5)], 0.1).is_err());
        assert!(HCurve::new(vec![c(0.0, 0.2)], 0.1).is_err());
        assert!(HCurve::new(vec![c(0.0, 0.0), c(0.0, 1.0), c(0.0, 1.0)], 0.1).is_err());
    }

    #[test]
    fn retracing_is_degenerate() {
        // going back down the slit revisits swallowed territory
        let pts = vec![c(0.0, 0.0), c(0.0, 0.5), c(0.0, 1.0), c(0.0, 0.5)];
        match zipper_extract(&HCurve::new(pts, 0.5).unwrap()) {
            Err(Error::Degenerate(m)) => assert!(m.contains("point 3"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_driving_flow() {
        let d = DrivingSample::constant(0.0, &[0.5, 1.0]);
        // g_t(z) = sqrt(z^2 + 4t)
        for z in [c(1.0, 1.0), c(0.0, 3.0), c(-2.0, 0.3)] {
            let tr = forward_loewner(&d, z, 1.0, Interp::Step).unwrap();
            let want = (z * z + 4.0).sqrt();
            let want = if want.im < 0.0 { -want } else { want };
            assert!((tr.values.last().unwrap() - want).norm() < 1e-9, "{z}");
            assert_eq!(tr.swallowed, None);
        }
        let tr = forward_loewner(&d, c(0.7, 0.2), 0.0, Interp::Step).unwrap();
        assert_eq!(tr.values.last().copied(), Some(c(0.7, 0.2)));
        // i lies on the slit of height 2 sqrt(t) and is reached at t = 1/4
        let tr = forward_loewner(&d, c(0.0, 1.0), 1.0, Interp::Step).unwrap();
        assert!((tr.swallowed.unwrap() - 0.25).abs() < 1e-9, "{:?}", tr.swallowed);
        assert!(forward_loewner(&d, c(0.0, -1.0), 1.0, Interp::Step).is_err());
        assert!(forward_loewner(&d, c(0.0, 1.0), 2.0, Interp::Step).is_err());
    }

    #[test]
    fn tips_of_a_slit() {
        let d = zipper_extract(&HCurve::vertical_slit(0.3, 2.0, 50).unwrap()).unwrap();
        let tip = loewner_tip(&d, d.len() - 1, Interp::Step).unwrap();
        assert!((tip - c(0.3, 2.0)).norm() < 1e-6, "{tip}");
        let mid = loewner_tip(&d, 25, Interp::Step).unwrap();
        assert!((mid - c(0.3, 1.0)).norm() < 1e-6, "{mid}");
    }

    fn round_trip_error(mesh: f64, interp: Interp) -> f64 {
        let curve = HCurve::circular_arc(1.0, std::f64::consts::FRAC_PI_2, mesh).unwrap();
        let d = zipper_extract(&curve).unwrap();
        let tip = loewner_tip(&d, d.len() - 1, interp).unwrap();
        (tip - curve.points().last().unwrap()).norm()
    }

    #[test]
    fn arc_round_trip() {
        assert!(round_trip_error(1e-3, Interp::Step) < 1e-6);
        let e3 = round_trip_error(1e-3, Interp::Linear);
        let e2 = round_trip_error(1e-2, Interp::Linear);
        assert!(e3 <= 1e-3, "{e3}");
        // error constant against sqrt(mesh), measured
        assert!(e2 <= 0.1 * 1e-2f64.sqrt() && e3 <= 0.1 * 1e-3f64.sqrt(), "{e2} {e3}");
    }

    #[test]
    fn scaling_and_translation() {
        let curve = HCurve::circular_arc(1.0, 1.2, 1e-2).unwrap();
        let d = zipper_extract(&curve).unwrap();
        let rho = 2.5;
        let ds = zipper_extract(&curve.scaled(rho)).unwrap();
        for k in 0..d.len() {
            assert!((ds.lambda[k] - rho * d.lambda[k]).abs() < 1e-6);
            assert!((ds.t[k] - rho * rho * d.t[k]).abs() < 1e-6);
        }
        let dt = zipper_extract(&curve.translated(-0.75)).unwrap();
        for k in 0..d.len() {
            assert!((dt.lambda[k] - (d.lambda[k] - 0.75)).abs() < 1e-12);
            assert!((dt.t[k] - d.t[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn resampling_keeps_the_ends() {
        let curve = HCurve::new(vec![c(0.0, 0.0), c(0.0, 1.0), c(1.0, 1.0)], 1.0).unwrap();
        let r = curve.resampled(0.3).unwrap();
        assert_eq!(r.points()[0], c(0.0, 0.0));
        assert_eq!(*r.points().last().unwrap(), c(1.0, 1.0));
        assert!(r.points().windows(2).all(|w| (w[1] - w[0]).norm() <= 0.3 + 1e-12));
        assert_eq!(curve.with_midpoints().points().len(), 5);
    }

    #[test]
    fn brownian_control_and_zero_driving() {
        let grid = [0.25, 0.5, 0.75, 1.0];
        let bm: Vec<DrivingSample> =
            (0..500).map(|i| brownian_driving(6.0, 1.0, 64, &mut replica_stream(11, i))).collect();
        let rep = driving_stats(&bm, &grid).unwrap();
        assert!(rep.drift_ok(3.0), "{rep:?}");
        assert!(rep.variance_ok(6.0, 0.15), "{rep:?}");
        assert!(rep.rows.iter().filter_map(|r| r.lag1_corr).all(|c| c.abs() < 0.15));
        let zero: Vec<DrivingSample> = (0..40).map(|_| DrivingSample::constant(0.0, &grid)).collect();
        assert!(!driving_stats(&zero, &grid).unwrap().variance_ok(6.0, 0.15));
        assert!(matches!(driving_stats(&zero[..10], &grid), Err(Error::TooFewSamples { need: 30, got: 10 })));
        assert!(driving_stats(&zero, &[2.0]).is_err());
        assert!(rep.to_ndjson().lines().count() == 4);
    }

    #[test]
    fn brownian_tips_obey_the_height_bound() {
        let mut drivings = Vec::new();
        let mut curves = Vec::new();
        for i in 0..40 {
            let d = brownian_driving(6.0, 1.0, 200, &mut replica_stream(5, i));
            curves.push(trace_curve(&d, Interp::Step).unwrap());
            drivings.push(d);
        }
        // tracing drops repeated tips only; keep the pairing exact
        let (ds, cs): (Vec<_>, Vec<_>) =
            drivings.into_iter().zip(curves).filter(|(d, c)| c.points().len() == d.len()).unzip();
        let rep = tail_and_geometry_check(&ds, &cs, 1.0).unwrap();
        assert_eq!(rep.height_violations, 0, "{rep:?}");
        assert_eq!(rep.spread_violations, 0, "{rep:?}");
    }

    #[test]
    fn slit_geometry_is_tight_and_tail_degenerate() {
        let curve = HCurve::vertical_slit(0.0, 2.0, 40).unwrap();
        let d = zipper_extract(&curve).unwrap();
        let n = MIN_DRIVING_SAMPLES;
        let rep = tail_and_geometry_check(&vec![d; n], &vec![curve; n], 0.5).unwrap();
        assert!(rep.geometry_ok());
        // Im gamma(t) = 2 sqrt(t) exactly on a slit
        assert!(rep.worst_height.abs() < 1e-9, "{}", rep.worst_height);
        assert!(rep.exceedance.is_empty() && rep.fit.is_none());
    }
}
