//! The experiment registry. Each command is a value implementing
//! [`Experiment`]; `main` looks it up by name.

use crate::config::{RunConfig, TargetConfig};
use crate::output::{ndjson_line, Output};
use floret::bkcheck::{counterexample_check, default_grid, parse_exact_grid, verify_bk_catalog, Catalog};
use floret::cardy::{
    box_cross_ratio, cardy_scan, estimate_separation, ScanRow, ScanTarget, SeparationEvent, SeparationKind,
};
use floret::explorer::{markov_crossing_test, run_exploration, QuadMarks};
use floret::lattice::shapes::segment_distance;
use floret::lattice::{build_domain, check_admissible, Domain, ShapeSpec};
use floret::loewner::{driving_stats, exploration_driving, tail_and_geometry_check};
use floret::measure::enumerate_flower;
use floret::pathstats::{
    arm_exponent, arm_scan, box_dimension, detect_boundary_double_visit, detect_doubleback, detect_triple_visit,
    lattice_boundary_distance, AnnulusSpec, ArmPattern, ArmRow,
};
use floret::rng::derive_seed;
use floret::sampler::{replicas, sample_into, Configuration, CrossingSpec};
use floret::stats::Moments;
use floret::{Error, HexState, Result};
use serde_json::{json, Value};

/// Outcome of a successful run. `Fail` makes the process exit with status 3.
#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Done,
    Pass(String),
    Fail(String),
}

impl Verdict {
    pub fn to_json(&self) -> Value {
        match self {
            Verdict::Done => json!({ "status": "done" }),
            Verdict::Pass(m) => json!({ "status": "pass", "detail": m }),
            Verdict::Fail(m) => json!({ "status": "fail", "detail": m }),
        }
    }

    fn check(ok: bool, detail: String) -> Verdict {
        if ok {
            Verdict::Pass(detail)
        } else {
            Verdict::Fail(detail)
        }
    }
}

pub trait Experiment: Sync {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict>;
}

pub static REGISTRY: [&dyn Experiment; 10] = [
    &Sample,
    &Explore,
    &CardyScanExp,
    &Separation,
    &Driving,
    &Arms,
    &Pathstats,
    &BkVerify,
    &MarkovTest,
    &EnumerateFlower,
];

pub fn find(name: &str) -> Option<&'static dyn Experiment> {
    REGISTRY.iter().copied().find(|e| e.name() == name)
}

fn need(n: usize, what: &str) -> Result<usize> {
    if n == 0 {
        return Err(Error::Config(format!("{what} must be positive")));
    }
    Ok(n)
}

fn json_lines<T: serde::Serialize>(schema: &str, items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|r| ndjson_line(schema, &r)).collect()
}

struct Sample;

impl Experiment for Sample {
    fn name(&self) -> &'static str {
        "sample"
    }
    fn summary(&self) -> &'static str {
        "sample configurations and write them run-length encoded"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let n = need(cfg.sample.n, "sample.n")?;
        let (d, law) = (cfg.domain()?, cfg.law()?);
        out.write("domain.txt", &d.to_snapshot())?;
        let lines = replicas(
            n,
            derive_seed(cfg.seed, "sample"),
            || Configuration::boundary_only(&d),
            |i, rng, c| {
                sample_into(&d, &law, rng, c);
                let mut counts = [0usize; 3];
                for &k in &d.interior {
                    match c.state(k as usize) {
                        Some(HexState::Blue) => counts[0] += 1,
                        Some(HexState::Yellow) => counts[1] += 1,
                        _ => counts[2] += 1,
                    }
                }
                let rec = json!({ "replica": i, "blue": counts[0], "yellow": counts[1], "split": counts[2], "rle": c.to_rle(&d) });
                ndjson_line("floret.configuration.v1", &rec)
            },
        );
        out.write("configurations.ndjson", &lines.concat())?;
        Ok(Verdict::Done)
    }
}

struct Explore;

impl Experiment for Explore {
    fn name(&self) -> &'static str {
        "explore"
    }
    fn summary(&self) -> &'static str {
        "run explorations from a to c and write their steps"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let n = need(cfg.explore.n, "explore.n")?;
        let (d, law) = (cfg.domain()?, cfg.law()?);
        check_admissible(&d, &law)?;
        let paths = replicas(n, derive_seed(cfg.seed, "explore"), || (), |_, rng, _| run_exploration(&d, &law, rng));
        let mut steps = String::new();
        let mut summary = String::from("replica,steps,nodes,revealed,finished\n");
        for (i, p) in paths.into_iter().enumerate() {
            let p = p?;
            for rec in p.records(&d) {
                let mut v = serde_json::to_value(&rec).expect("record serializes");
                v["replica"] = i.into();
                steps.push_str(&ndjson_line("floret.path_step.v1", &v));
            }
            summary.push_str(&format!("{i},{},{},{},{}\n", p.steps.len(), p.nodes.len(), p.reveals.len(), p.finished));
        }
        out.write("paths.ndjson", &steps)?;
        out.write("summary.csv", &summary)?;
        Ok(Verdict::Done)
    }
}

/// Limit of a separation probability on the equilateral triangle: the
/// distance from the shielded side over the apex height.
fn triangle_prediction(d: &Domain, kind: SeparationKind, z: [f64; 2]) -> Option<f64> {
    let shape = d.shape.as_ref().filter(|s| s.kind() == "triangle")?;
    let (a, b, c) = (shape.mark("a").ok()?, shape.mark("b").ok()?, shape.mark("c").ok()?);
    let (p, q, apex) = match kind {
        SeparationKind::U => (a, b, c),
        SeparationKind::V => (b, c, a),
        SeparationKind::W => (c, a, b),
    };
    Some(segment_distance(z, p, q) / segment_distance(apex, p, q))
}

fn scan_targets(cfg: &RunConfig, d: &Domain) -> Result<Vec<ScanTarget>> {
    let shape = d.shape.as_ref().ok_or_else(|| Error::Config("domain has no shape".into()))?;
    let mut targets = cfg.cardy_scan.targets.clone();
    if targets.is_empty() {
        if shape.kind() == "triangle" {
            let [a, b, c] = [shape.mark("a")?, shape.mark("b")?, shape.mark("c")?];
            let x = (a[0] + b[0]) / 2.0;
            let h = c[1] - a[1];
            for k in 0..5 {
                let y = a[1] + h * (0.2 + 0.1 * k as f64);
                targets.push(TargetConfig::Separation { blue: true, function: "u".into(), z: [x, y] });
            }
        } else {
            let marks = ["a", "b", "c", "d"].map(String::from).to_vec();
            targets.push(TargetConfig::Crossing { blue: true, marks, points: Vec::new() });
        }
    }
    let mut out = Vec::new();
    for (k, t) in targets.iter().enumerate() {
        match t {
            TargetConfig::Crossing { blue, marks, points } => {
                if !marks.is_empty() && !points.is_empty() || marks.len() + points.len() != 4 {
                    return Err(Error::Config(format!("crossing target {k} needs exactly four marks or four points")));
                }
                if marks.len() == 4 {
                    let m = [marks[0].as_str(), marks[1].as_str(), marks[2].as_str(), marks[3].as_str()];
                    let x = m.iter().map(|&n| shape.mark(n)).collect::<Result<Vec<_>>>()?;
                    let spec = CrossingSpec::from_marks(d, *blue, m)?;
                    out.push(ScanTarget::Crossing { spec, x: box_cross_ratio(d, [x[0], x[1], x[2], x[3]]) });
                } else {
                    let p = [points[0], points[1], points[2], points[3]];
                    let spec = CrossingSpec::from_points(d, &format!("crossing{k}"), *blue, p)?;
                    out.push(ScanTarget::Crossing { spec, x: box_cross_ratio(d, p) });
                }
            }
            TargetConfig::Separation { blue, function, z } => {
                let kind = SeparationKind::parse(function).map_err(|e| Error::Config(e.to_string()))?;
                let predicted = triangle_prediction(d, kind, *z)
                    .ok_or_else(|| Error::Config("separation targets need a triangle domain".into()))?;
                out.push(ScanTarget::Separation { event: SeparationEvent::new(d, kind, *blue, *z)?, predicted });
            }
        }
    }
    Ok(out)
}

struct CardyScanExp;

impl Experiment for CardyScanExp {
    fn name(&self) -> &'static str {
        "cardy-scan"
    }
    fn summary(&self) -> &'static str {
        "estimate crossing and separation probabilities against their limits"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let n = need(cfg.cardy_scan.n, "cardy_scan.n")?;
        let (d, law) = (cfg.domain()?, cfg.law()?);
        let targets = scan_targets(cfg, &d)?;
        let rows = cardy_scan(&d, &law, &targets, n, derive_seed(cfg.seed, "cardy-scan"))?;
        let mut csv = format!("{}\n", ScanRow::CSV_HEADER);
        for r in &rows {
            csv.push_str(&r.to_csv());
            csv.push('\n');
        }
        out.write("scan.csv", &csv)?;
        out.write("scan.ndjson", &json_lines("floret.cardy_row.v1", &rows))?;
        Ok(Verdict::Done)
    }
}

struct Separation;

impl Experiment for Separation {
    fn name(&self) -> &'static str {
        "separation"
    }
    fn summary(&self) -> &'static str {
        "estimate one separation probability on a triangle"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let c = &cfg.separation;
        let n = need(c.n, "separation.n")?;
        let (d, law) = (cfg.domain()?, cfg.law()?);
        let kind = SeparationKind::parse(&c.function).map_err(|e| Error::Config(e.to_string()))?;
        let ev = SeparationEvent::new(&d, kind, c.blue, c.z)?;
        let est = estimate_separation(&d, &law, &ev, n, derive_seed(cfg.seed, "separation"))?;
        let predicted = triangle_prediction(&d, kind, c.z);
        let rec = json!({
            "function": c.function, "blue": c.blue, "z": c.z,
            "est": est.mean, "stderr": est.stderr, "n": est.n,
            "predicted": predicted,
            "zscore": predicted.map(|p| est.z(p)),
        });
        out.write("separation.ndjson", &ndjson_line("floret.separation.v1", &rec))?;
        Ok(Verdict::Done)
    }
}

struct Driving;

impl Experiment for Driving {
    fn name(&self) -> &'static str {
        "driving"
    }
    fn summary(&self) -> &'static str {
        "extract driving functions of explorations in a half-plane box"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let c = &cfg.driving;
        let n = need(c.n, "driving.n")?;
        let law = cfg.law()?;
        if !(c.width >= 8.0) {
            return Err(Error::Config(format!("driving.width {} is below 8", c.width)));
        }
        let t_max = c.final_time();
        if !(t_max > 0.0) || c.grid.is_empty() || c.grid.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
            return Err(Error::Config("driving grid fractions must lie in (0, 1] and t_max must be positive".into()));
        }
        let shape = ShapeSpec::new("halfplane_box").with("width", c.width).with("height", c.width / 2.0).build()?;
        let d = build_domain(shape, 1.0, &cfg.arrangement()?)?;
        check_admissible(&d, &law)?;
        let grid: Vec<f64> = c.grid.iter().map(|g| g * t_max).collect();

        let runs =
            replicas(n, derive_seed(cfg.seed, "driving"), || (), |_, rng, _| exploration_driving(&d, &law, t_max, rng));
        let mut summary = String::from("replica,final_time,points,steps,contacts,left_central\n");
        let (mut samples, mut curves) = (Vec::new(), Vec::new());
        for (i, r) in runs.into_iter().enumerate() {
            let r = r?;
            out.write(&format!("drivings/curve_{i:05}.csv"), &r.driving.to_csv())?;
            summary.push_str(&format!(
                "{i},{},{},{},{},{}\n",
                r.driving.final_time(),
                r.driving.len(),
                r.steps,
                r.contacts,
                r.left_central
            ));
            samples.push(r.driving);
            curves.push(r.curve);
        }
        out.write("summary.csv", &summary)?;

        let complete: Vec<_> = samples.iter().filter(|s| s.final_time() >= t_max).cloned().collect();
        if complete.len() < 2 {
            return Err(Error::TooFewSamples { need: 2, got: complete.len() });
        }
        let report = driving_stats(&complete, &grid)?;
        out.write("stats.ndjson", &report.to_ndjson())?;
        let tails = grid.iter().map(|&t| tail_and_geometry_check(&samples, &curves, t)).collect::<Result<Vec<_>>>()?;
        out.write("tail.ndjson", &json_lines("floret.tail_geometry.v1", &tails))?;

        if !c.check {
            return Ok(Verdict::Done);
        }
        let drift = report.drift_ok(c.drift_sigmas);
        let var = report.variance_ok(c.kappa, c.variance_tol);
        Ok(Verdict::check(
            drift && var,
            format!("drift within {} sigma: {drift}; variance within {}: {var}", c.drift_sigmas, c.variance_tol),
        ))
    }
}

struct Arms;

impl Experiment for Arms {
    fn name(&self) -> &'static str {
        "arms"
    }
    fn summary(&self) -> &'static str {
        "estimate multi-arm probabilities in annuli and fit their exponents"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let c = &cfg.arms;
        let n = need(c.n, "arms.n")?;
        let (d, law) = (cfg.domain()?, cfg.law()?);
        let pattern = ArmPattern::parse(&c.pattern).map_err(|e| Error::Config(e.to_string()))?;
        let mut specs = Vec::new();
        for &k in &c.arms {
            for &r in &c.inner {
                specs.push(AnnulusSpec::new(c.center, r, c.outer, k, pattern)?);
            }
        }
        if specs.is_empty() {
            return Err(Error::Config("arms.arms and arms.inner must be non-empty".into()));
        }
        let rows = arm_scan(&d, &law, &specs, n, derive_seed(cfg.seed, "arms"))?;
        let mut csv = format!("{}\n", ArmRow::CSV_HEADER);
        for r in &rows {
            csv.push_str(&r.to_csv());
            csv.push('\n');
        }
        out.write("arms.csv", &csv)?;
        let mut fits = String::new();
        for &k in &c.arms {
            let sub: Vec<ArmRow> = rows.iter().filter(|r| r.k == k).cloned().collect();
            let fit = arm_exponent(&sub);
            let rec = json!({
                "k": k,
                "pattern": pattern.label(),
                "exponent": fit.as_ref().map(|f| f.slope),
                "intercept": fit.as_ref().map(|f| f.intercept),
                "r2": fit.as_ref().map(|f| f.r2),
            });
            fits.push_str(&ndjson_line("floret.arm_exponent.v1", &rec));
        }
        out.write("exponents.ndjson", &fits)?;
        Ok(Verdict::Done)
    }
}

struct Pathstats;

impl Experiment for Pathstats {
    fn name(&self) -> &'static str {
        "pathstats"
    }
    fn summary(&self) -> &'static str {
        "box dimension, doublebacks and repeated visits of exploration paths"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let c = &cfg.pathstats;
        let n = need(c.n, "pathstats.n")?;
        let (d, law) = (cfg.domain()?, cfg.law()?);
        check_admissible(&d, &law)?;
        if c.near.iter().any(|&r| !(r > 0.0 && r < c.far)) {
            return Err(Error::Config("pathstats.near radii must lie in (0, far)".into()));
        }
        let bdist = lattice_boundary_distance(&d)?;
        let recs = replicas(
            n,
            derive_seed(cfg.seed, "pathstats"),
            || (),
            |i, rng, _| -> Result<Value> {
                let path = run_exploration(&d, &law, rng)?.positions();
                let dim = box_dimension(&path, &c.scales)?;
                let doublebacks = detect_doubleback(&path, c.delta, c.eta)?;
                let mut triple = Vec::new();
                let mut boundary = Vec::new();
                for &r in &c.near {
                    triple.push(detect_triple_visit(&path, r, c.far)?);
                    boundary.push(detect_boundary_double_visit(&path, &bdist, r, c.far)?);
                }
                Ok(json!({
                    "replica": i, "points": path.len(),
                    "dimension": dim.slope, "r2": dim.r2, "counts": dim.counts,
                    "doublebacks": doublebacks, "triple": triple, "boundary_double": boundary,
                }))
            },
        );
        let recs = recs.into_iter().collect::<Result<Vec<_>>>()?;
        let mut dim = Moments::default();
        let mut csv = String::from("near,far,triple_freq,boundary_double_freq\n");
        for r in &recs {
            dim.push(r["dimension"].as_f64().unwrap_or(f64::NAN));
        }
        for (j, &r) in c.near.iter().enumerate() {
            let freq = |key: &str| recs.iter().filter(|x| x[key][j].as_bool() == Some(true)).count() as f64 / n as f64;
            csv.push_str(&format!("{r},{},{},{}\n", c.far, freq("triple"), freq("boundary_double")));
        }
        csv.push_str(&format!("# mean dimension {} stderr {}\n", dim.mean(), dim.estimate().stderr));
        out.write("pathstats.ndjson", &json_lines("floret.pathstats.v1", &recs))?;
        out.write("pathstats.csv", &csv)?;
        Ok(Verdict::Done)
    }
}

struct BkVerify;

impl Experiment for BkVerify {
    fn name(&self) -> &'static str {
        "bk-verify"
    }
    fn summary(&self) -> &'static str {
        "check the disjoint-occurrence inequality exactly on a parameter grid"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let grid = match &cfg.bk_verify.grid_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
                parse_exact_grid(&text)?
            }
            None => default_grid(),
        };
        let report = verify_bk_catalog(&Catalog::standard(), &grid)?;
        let mut csv = format!("{}\n", floret::bkcheck::BkRow::CSV_HEADER);
        for r in &report.rows {
            csv.push_str(&r.to_csv());
            csv.push('\n');
        }
        out.write("bk.csv", &csv)?;
        let mut lines = String::new();
        let mut expected = true;
        for p in &grid {
            let ce = counterexample_check(p)?;
            expected &= if p.is_site() { ce.equality } else { ce.strict };
            let rec = json!({
                "a": p.a().to_f64(), "s": p.s().to_f64(),
                "lhs": ce.lhs, "rhs": ce.rhs,
                "strict": ce.strict, "equality": ce.equality, "coincide": ce.coincide,
            });
            lines.push_str(&ndjson_line("floret.counterexample.v1", &rec));
        }
        out.write("counterexample.ndjson", &lines)?;
        let detail = format!(
            "{} tuples at {} points, no violation, minimum margin {:e}; counterexample as expected: {expected}",
            report.tuples,
            report.points,
            report.min_margin()
        );
        Ok(Verdict::check(expected, detail))
    }
}

struct MarkovTest;

impl Experiment for MarkovTest {
    fn name(&self) -> &'static str {
        "markov-test"
    }
    fn summary(&self) -> &'static str {
        "compare crossing probabilities after partial explorations with the original"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let c = &cfg.markov_test;
        let (d, law) = (cfg.domain()?, cfg.law()?);
        check_admissible(&d, &law)?;
        let shape = d.shape.as_ref().ok_or_else(|| Error::Config("domain has no shape".into()))?;
        let b = match c.b {
            Some(p) => p,
            None => shape.mark("b")?,
        };
        let dd = match c.d {
            Some(p) => p,
            None => shape.mark("d")?,
        };
        let marks = QuadMarks::from_points(&d, b, dd)?;
        if c.steps.is_empty() {
            return Err(Error::Config("markov_test.steps must be non-empty".into()));
        }
        let mut lines = String::new();
        let mut worst: f64 = 0.0;
        for &t in &c.steps {
            let r = markov_crossing_test(
                &d,
                &law,
                marks,
                t,
                c.n_outer,
                c.n_inner,
                derive_seed(cfg.seed, &format!("markov-{t}")),
            )?;
            worst = worst.max(r.z.abs());
            lines.push_str(&ndjson_line("floret.markov.v1", &r));
        }
        out.write("markov.ndjson", &lines)?;
        if !c.check {
            return Ok(Verdict::Done);
        }
        Ok(Verdict::check(worst < c.z_max, format!("largest |z| {worst:.3} against {}", c.z_max)))
    }
}

struct EnumerateFlower;

impl Experiment for EnumerateFlower {
    fn name(&self) -> &'static str {
        "enumerate-flower"
    }
    fn summary(&self) -> &'static str {
        "list all flower states with their probabilities"
    }
    fn run(&self, cfg: &RunConfig, out: &mut Output) -> Result<Verdict> {
        let params = cfg.params()?;
        let states = enumerate_flower(&params);
        let mut csv = String::from("petals,iris,probability\n");
        let mut total = 0.0;
        for (f, p) in &states {
            let petals: String = (0..6).map(|i| if f.petal_blue(i) { 'B' } else { 'Y' }).collect();
            csv.push_str(&format!("{petals},{},{p}\n", f.iris.symbol()));
            total += p;
        }
        out.write("flower.csv", &csv)?;
        let triggers = (0..64u8).filter(|&m| floret::measure::is_trigger(m)).count();
        let rec =
            json!({ "a": params.a(), "s": params.s(), "states": states.len(), "triggers": triggers, "total": total });
        out.write("summary.ndjson", &ndjson_line("floret.flower_summary.v1", &rec))?;
        let ok = (total - 1.0).abs() < 1e-12;
        Ok(Verdict::check(ok, format!("total probability {total}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_names_are_unique() {
        let mut names: Vec<_> = REGISTRY.iter().map(|e| e.name()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), REGISTRY.len());
        assert!(find("bk-verify").is_some());
        assert!(find("nope").is_none());
    }

    #[test]
    fn triangle_predictions() {
        let cfg = RunConfig::parse("[domain]\nshape = \"triangle\"\nsize = { side = 1.0 }\neps = 0.0625\n").unwrap();
        let d = cfg.domain().unwrap();
        let h = 3f64.sqrt() / 2.0;
        let z = [0.5, h / 3.0];
        for kind in [SeparationKind::U, SeparationKind::V, SeparationKind::W] {
            let p = triangle_prediction(&d, kind, z).unwrap();
            assert!((p - 1.0 / 3.0).abs() < 1e-12, "{kind:?} {p}");
        }
        let p = triangle_prediction(&d, SeparationKind::U, [0.5, h / 2.0]).unwrap();
        assert!((p - floret::cardy::triangle_u(1.0, h / 2.0)).abs() < 1e-12);
    }
}
