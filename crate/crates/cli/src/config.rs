//! Run configuration: one TOML file with a section per experiment.

use floret::lattice::{build_domain, Domain, FloralArrangement, ShapeSpec};
use floret::measure::{FlowerLaw, ModelParams};
use floret::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub domain: DomainConfig,
    pub model: ModelConfig,
    pub sample: SampleConfig,
    pub explore: ExploreConfig,
    pub cardy_scan: CardyScanConfig,
    pub separation: SeparationConfig,
    pub driving: DrivingConfig,
    pub arms: ArmsConfig,
    pub pathstats: PathstatsConfig,
    pub bk_verify: BkConfig,
    pub markov_test: MarkovConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            domain: DomainConfig::default(),
            model: ModelConfig::default(),
            sample: SampleConfig::default(),
            explore: ExploreConfig::default(),
            cardy_scan: CardyScanConfig::default(),
            separation: SeparationConfig::default(),
            driving: DrivingConfig::default(),
            arms: ArmsConfig::default(),
            pathstats: PathstatsConfig::default(),
            bk_verify: BkConfig::default(),
            markov_test: MarkovConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn params(&self) -> Result<ModelParams> {
        let s = self.model.s;
        match self.model.a {
            Some(a) => ModelParams::new(a, s),
            None => ModelParams::from_s(s),
        }
    }

    pub fn law(&self) -> Result<FlowerLaw> {
        Ok(FlowerLaw::new(self.params()?))
    }

    pub fn arrangement(&self) -> Result<FloralArrangement> {
        let (q, r) = (self.domain.offset[0], self.domain.offset[1]);
        FloralArrangement::periodic_with_offset(self.domain.period, (q, r))
    }

    pub fn domain(&self) -> Result<Domain> {
        let mut spec = ShapeSpec::new(&self.domain.shape);
        spec.params = self.domain.size.clone();
        spec.vertices = self.domain.vertices.clone();
        build_domain(spec.build()?, self.domain.eps, &self.arrangement()?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: String,
    /// Shape parameters such as `width`, `height` or `side`.
    pub size: BTreeMap<String, f64>,
    /// Polygon vertices, counter-clockwise.
    pub vertices: Vec<[f64; 2]>,
    /// Lattice spacing in shape units.
    pub eps: f64,
    pub period: i32,
    pub offset: [i32; 2],
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            shape: "rectangle".into(),
            size: [("width".to_string(), 1.0), ("height".to_string(), 1.0)].into(),
            vertices: Vec::new(),
            eps: 1.0 / 32.0,
            period: 3,
            offset: [0, 0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Pure iris weight; derived from `s` when absent.
    pub a: Option<f64>,
    pub s: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { a: None, s: ModelParams::default().s() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub n: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { n: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExploreConfig {
    pub n: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig { n: 10 }
    }
}

/// A crossing between marked points or explicit boundary points, or a
/// separation event at an interior point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetConfig {
    Crossing {
        #[serde(default = "yes")]
        blue: bool,
        #[serde(default)]
        marks: Vec<String>,
        #[serde(default)]
        points: Vec<[f64; 2]>,
    },
    Separation {
        #[serde(default = "yes")]
        blue: bool,
        #[serde(default = "u_function")]
        function: String,
        z: [f64; 2],
    },
}

fn yes() -> bool {
    true
}

fn u_function() -> String {
    "u".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CardyScanConfig {
    pub n: usize,
    /// Empty: five `u` points on the median of a triangle, otherwise the
    /// blue crossing between the four marks.
    pub targets: Vec<TargetConfig>,
}

impl Default for CardyScanConfig {
    fn default() -> Self {
        CardyScanConfig { n: 10_000, targets: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationConfig {
    pub n: usize,
    pub function: String,
    pub blue: bool,
    pub z: [f64; 2],
}

impl Default for SeparationConfig {
    fn default() -> Self {
        SeparationConfig { n: 10_000, function: "u".into(), blue: true, z: [0.5, 0.25] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrivingConfig {
    pub n: usize,
    /// Width of the half-plane box in lattice units; its height is half that.
    pub width: f64,
    /// Final Loewner time; `width^2 / 64` when absent.
    pub t_max: Option<f64>,
    /// Grid times as fractions of the final time.
    pub grid: Vec<f64>,
    /// Exit with status 3 unless drift and variance pass.
    pub check: bool,
    pub kappa: f64,
    pub variance_tol: f64,
    pub drift_sigmas: f64,
}

impl Default for DrivingConfig {
    fn default() -> Self {
        DrivingConfig {
            n: 50,
            width: 128.0,
            t_max: None,
            grid: vec![1.0 / 16.0, 1.0 / 8.0, 0.25, 0.5, 1.0],
            check: false,
            kappa: 6.0,
            variance_tol: 0.15,
            drift_sigmas: 3.0,
        }
    }
}

impl DrivingConfig {
    pub fn final_time(&self) -> f64 {
        self.t_max.unwrap_or(self.width * self.width / 64.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmsConfig {
    pub n: usize,
    pub arms: Vec<usize>,
    /// `mixed`, `blue`, `yellow` or a color word such as `BBYBY`.
    pub pattern: String,
    /// Annulus center in shape coordinates.
    pub center: [f64; 2],
    /// Outer radius in lattice units.
    pub outer: f64,
    pub inner: Vec<f64>,
}

impl Default for ArmsConfig {
    fn default() -> Self {
        ArmsConfig {
            n: 1000,
            arms: vec![5, 6],
            pattern: "mixed".into(),
            center: [0.5, 0.5],
            outer: 12.0,
            inner: vec![6.0, 3.0, 1.5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathstatsConfig {
    pub n: usize,
    /// Box sizes in lattice units.
    pub scales: Vec<f64>,
    /// Doubleback diameter and closeness.
    pub delta: f64,
    pub eta: f64,
    /// Outer radius of repeated-visit events and the inner radii tried.
    pub far: f64,
    pub near: Vec<f64>,
}

impl Default for PathstatsConfig {
    fn default() -> Self {
        PathstatsConfig {
            n: 10,
            scales: vec![1.0, 2.0, 4.0, 8.0],
            delta: 4.0,
            eta: 1.0,
            far: 8.0,
            near: vec![2.0, 1.0, 0.5],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BkConfig {
    /// Exact parameter grid file; the built-in 22-point grid when absent.
    pub grid_file: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkovConfig {
    pub steps: Vec<usize>,
    pub n_outer: usize,
    pub n_inner: usize,
    /// Quad marks in shape coordinates; the shape's `b` and `d` when absent.
    pub b: Option<[f64; 2]>,
    pub d: Option<[f64; 2]>,
    pub check: bool,
    pub z_max: f64,
}

impl Default for MarkovConfig {
    fn default() -> Self {
        MarkovConfig { steps: vec![25], n_outer: 200, n_inner: 50, b: None, d: None, check: true, z_max: 3.0 }
    }
}
