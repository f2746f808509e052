//! Observables of full configurations, estimated together on shared samples.

use crate::error::{Error, Result};
use crate::lattice::Domain;
use crate::measure::FlowerLaw;
use crate::sampler::{replicas, sample_into, Configuration, CrossingSpec, Scratch};
use crate::stats::{Estimate, Moments};

pub trait Observable: Send + Sync {
    fn id(&self) -> String;
    /// Value on one configuration; indicators return 0 or 1.
    fn eval(&self, d: &Domain, states: &[u8], scratch: &mut Scratch) -> f64;
}

impl Observable for CrossingSpec {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn eval(&self, d: &Domain, states: &[u8], scratch: &mut Scratch) -> f64 {
        self.occurs(d, states, scratch) as u8 as f64
    }
}

/// Estimates of several observables from the same `n` configurations.
/// Replica `i` uses stream `(seed, i)`.
pub fn estimate_observables(
    d: &Domain,
    law: &FlowerLaw,
    obs: &[&dyn Observable],
    n: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    if n == 0 {
        return Err(Error::Invalid("sample count must be positive".into()));
    }
    let values = replicas(
        n,
        seed,
        || (Scratch::new(d), Configuration::boundary_only(d)),
        |_, rng, (scratch, cfg)| {
            sample_into(d, law, rng, cfg);
            obs.iter().map(|o| o.eval(d, &cfg.states, scratch)).collect::<Vec<f64>>()
        },
    );
    let mut acc = vec![Moments::default(); obs.len()];
    for row in &values {
        for (m, &x) in acc.iter_mut().zip(row) {
            m.push(x);
        }
    }
    Ok(acc.iter().map(Moments::estimate).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_domain, FloralArrangement, ShapeSpec};
    use crate::measure::ModelParams;
    use crate::sampler::estimate_crossing;

    #[test]
    fn shared_samples_match_single_estimates() {
        let shape = ShapeSpec::new("rectangle").with("width", 1.0).with("height", 1.0).build().unwrap();
        let d = build_domain(shape, 1.0 / 12.0, &FloralArrangement::periodic(3).unwrap()).unwrap();
        let law = FlowerLaw::new(ModelParams::default());
        let x = CrossingSpec::from_marks(&d, true, ["a", "b", "c", "d"]).unwrap();
        let y = CrossingSpec::from_marks(&d, false, ["b", "c", "d", "a"]).unwrap();
        let est = estimate_observables(&d, &law, &[&x, &y], 500, 4).unwrap();
        assert!((est[0].mean - estimate_crossing(&d, &law, &x, 500, 4).unwrap().mean).abs() < 1e-12);
        assert!((est[1].mean - estimate_crossing(&d, &law, &y, 500, 4).unwrap().mean).abs() < 1e-12);
        assert!(estimate_observables(&d, &law, &[&x], 0, 4).is_err());
    }
}
