//! The flower measure: petals and fillers are fair coins, the iris state is
//! drawn from a law that depends on the petal pattern.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

pub const PARAM_TOL: f64 = 1e-12;

/// State of a single hexagon. `Split(k)` is blue on edges `2k, 2k+1, 2k+2`
/// (mod 6) and yellow on the other three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HexState {
    Blue,
    Yellow,
    Split(u8),
}

pub const IRIS_STATES: [HexState; 5] =
    [HexState::Blue, HexState::Yellow, HexState::Split(0), HexState::Split(1), HexState::Split(2)];

impl HexState {
    pub fn from_code(c: u8) -> Option<HexState> {
        match c {
            0 => Some(HexState::Blue),
            1 => Some(HexState::Yellow),
            2..=4 => Some(HexState::Split(c - 2)),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            HexState::Blue => 0,
            HexState::Yellow => 1,
            HexState::Split(k) => 2 + k,
        }
    }

    pub fn is_split(self) -> bool {
        matches!(self, HexState::Split(_))
    }

    /// Color of the wedge next to edge `e`; `true` is blue.
    pub fn edge_blue(self, e: usize) -> bool {
        match self {
            HexState::Blue => true,
            HexState::Yellow => false,
            HexState::Split(k) => (e + 6 - 2 * k as usize) % 6 <= 2,
        }
    }

    pub fn pure(blue: bool) -> HexState {
        if blue {
            HexState::Blue
        } else {
            HexState::Yellow
        }
    }

    pub fn symbol(self) -> char {
        match self {
            HexState::Blue => 'B',
            HexState::Yellow => 'Y',
            HexState::Split(0) => '0',
            HexState::Split(1) => '1',
            HexState::Split(_) => '2',
        }
    }

    pub fn from_symbol(c: char) -> Option<HexState> {
        match c {
            'B' => Some(HexState::Blue),
            'Y' => Some(HexState::Yellow),
            '0' => Some(HexState::Split(0)),
            '1' => Some(HexState::Split(1)),
            '2' => Some(HexState::Split(2)),
            _ => None,
        }
    }
}

/// Model parameters: iris weights `a` (each pure state) and `s` (each split).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    a: f64,
    s: f64,
}

impl ModelParams {
    pub fn new(a: f64, s: f64) -> Result<Self> {
        if !a.is_finite() || !s.is_finite() {
            return Err(Error::InvalidParams(format!("non-finite weights a={a}, s={s}")));
        }
        if a < 0.0 || s < 0.0 {
            return Err(Error::InvalidParams(format!("negative weight a={a}, s={s}")));
        }
        if (2.0 * a + 3.0 * s - 1.0).abs() > PARAM_TOL {
            return Err(Error::InvalidParams(format!("2a + 3s = {} != 1", 2.0 * a + 3.0 * s)));
        }
        if a * a < 2.0 * s * s - PARAM_TOL {
            return Err(Error::InvalidParams(format!("a^2 < 2 s^2 for a={a}, s={s}")));
        }
        Ok(ModelParams { a, s })
    }

    /// Parameters from the split weight alone.
    pub fn from_s(s: f64) -> Result<Self> {
        Self::new((1.0 - 3.0 * s) / 2.0, s)
    }

    /// Pure site percolation on the irises as well.
    pub fn site() -> Self {
        ModelParams { a: 0.5, s: 0.0 }
    }

    /// Largest admissible split weight, where `a^2 = 2 s^2`.
    pub fn boundary() -> Self {
        let s = 3.0 - 2.0 * 2f64.sqrt();
        ModelParams { a: (1.0 - 3.0 * s) / 2.0, s }
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn s(&self) -> f64 {
        self.s
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { a: 0.3, s: 0.4 / 3.0 }
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a={} s={}", self.a, self.s)
    }
}

/// Parse a parameter grid: one `a s` pair per line, `#` comments allowed.
pub fn parse_param_grid(text: &str) -> Result<Vec<ModelParams>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: String| Error::Config(format!("parameter grid line {}: {msg}", i + 1));
        if fields.len() != 2 {
            return Err(bad(format!("expected two numbers, got {:?}", line)));
        }
        let a: f64 = fields[0].parse().map_err(|_| bad(format!("bad number {:?}", fields[0])))?;
        let s: f64 = fields[1].parse().map_err(|_| bad(format!("bad number {:?}", fields[1])))?;
        out.push(ModelParams::new(a, s).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

/// Petal pattern bit `i` is petal `i + 1` (neighbor direction `i`); set = blue.
pub fn is_trigger(petals: u8) -> bool {
    let p = petals & 0x3f;
    if p.count_ones() != 3 {
        return false;
    }
    let rot = ((p << 1) | (p >> 5)) & 0x3f;
    p & rot != 0
}

/// Iris law given the petal pattern, indexed like [`IRIS_STATES`].
pub fn iris_distribution(params: &ModelParams, petals: u8) -> [f64; 5] {
    if is_trigger(petals) {
        [0.5, 0.5, 0.0, 0.0, 0.0]
    } else {
        [params.a, params.a, params.s, params.s, params.s]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FlowerState {
    pub petals: u8,
    pub iris: HexState,
}

impl FlowerState {
    pub fn petal_blue(&self, i: usize) -> bool {
        self.petals >> i & 1 == 1
    }
}

pub fn flower_prob(params: &ModelParams, f: &FlowerState) -> f64 {
    iris_distribution(params, f.petals)[f.iris.code() as usize] / 64.0
}

/// All 320 flower states with their probabilities.
pub fn enumerate_flower(params: &ModelParams) -> Vec<(FlowerState, f64)> {
    let mut out = Vec::with_capacity(320);
    for petals in 0..64u8 {
        for iris in IRIS_STATES {
            let f = FlowerState { petals, iris };
            out.push((f, flower_prob(params, &f)));
        }
    }
    out
}

pub fn sample_iris<R: Rng + ?Sized>(params: &ModelParams, petals: u8, rng: &mut R) -> HexState {
    let d = iris_distribution(params, petals);
    pick(&d, rng)
}

pub(crate) fn pick<R: Rng + ?Sized>(d: &[f64; 5], rng: &mut R) -> HexState {
    let u: f64 = rng.random::<f64>() * d.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in d.iter().enumerate() {
        acc += p;
        if u < acc {
            return IRIS_STATES[i];
        }
    }
    // rounding at the top end
    let last = d.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    IRIS_STATES[last]
}

/// Partially revealed flower: `None` marks an undetermined cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PartialFlower {
    pub petals: [Option<bool>; 6],
    pub iris: Option<HexState>,
}

impl PartialFlower {
    fn key(&self) -> usize {
        let mut k = 0usize;
        for i in (0..6).rev() {
            k = k * 3
                + match self.petals[i] {
                    None => 0,
                    Some(true) => 1,
                    Some(false) => 2,
                };
        }
        k * 6 + self.iris.map_or(5, |s| s.code() as usize)
    }

    pub fn consistent(&self, f: &FlowerState) -> bool {
        (0..6).all(|i| self.petals[i].is_none_or(|b| b == f.petal_blue(i))) && self.iris.is_none_or(|s| s == f.iris)
    }
}

/// Conditional laws of single cells given a partially revealed flower,
/// tabulated once per parameter set. Cell index 0 is the iris, `i` in 1..=6
/// is petal `i`.
#[derive(Clone, Debug)]
pub struct FlowerLaw {
    params: ModelParams,
    // per key: [P(petal i blue); 6], then iris law [5], then total mass
    table: Vec<[f64; 12]>,
}

impl FlowerLaw {
    pub fn new(params: ModelParams) -> Self {
        let all = enumerate_flower(&params);
        let mut table = vec![[0.0; 12]; 729 * 6];
        for (key, row) in table.iter_mut().enumerate() {
            let partial = Self::decode(key);
            for (f, p) in &all {
                if *p == 0.0 || !partial.consistent(f) {
                    continue;
                }
                for i in 0..6 {
                    if f.petal_blue(i) {
                        row[i] += p;
                    }
                }
                row[6 + f.iris.code() as usize] += p;
                row[11] += p;
            }
            if row[11] > 0.0 {
                let m = row[11];
                for v in row.iter_mut().take(11) {
                    *v /= m;
                }
            }
        }
        FlowerLaw { params, table }
    }

    fn decode(key: usize) -> PartialFlower {
        let iris = HexState::from_code((key % 6) as u8);
        let mut k = key / 6;
        let mut petals = [None; 6];
        for p in petals.iter_mut() {
            *p = match k % 3 {
                0 => None,
                1 => Some(true),
                _ => Some(false),
            };
            k /= 3;
        }
        PartialFlower { petals, iris }
    }

    /// Shared table for the default parameters. Every flower state that is
    /// possible for some parameters has positive mass under it.
    pub fn support() -> &'static FlowerLaw {
        static LAW: std::sync::OnceLock<FlowerLaw> = std::sync::OnceLock::new();
        LAW.get_or_init(|| FlowerLaw::new(ModelParams::default()))
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Probability of the revealed cells.
    pub fn mass(&self, partial: &PartialFlower) -> f64 {
        self.table[partial.key()][11]
    }

    /// Law of cell `target` (0 = iris, 1..=6 petals) given the revealed cells,
    /// as weights over [`IRIS_STATES`] (petals only use the first two).
    pub fn conditional(&self, partial: &PartialFlower, target: usize) -> Result<[f64; 5]> {
        let row = &self.table[partial.key()];
        if row[11] <= 0.0 {
            return Err(Error::ZeroProbability(format!("{partial:?}")));
        }
        if target == 0 {
            Ok([row[6], row[7], row[8], row[9], row[10]])
        } else {
            let b = row[target - 1];
            Ok([b, 1.0 - b, 0.0, 0.0, 0.0])
        }
    }

    pub fn sample_cell<R: Rng + ?Sized>(
        &self,
        partial: &PartialFlower,
        target: usize,
        rng: &mut R,
    ) -> Result<HexState> {
        let d = self.conditional(partial, target)?;
        Ok(pick(&d, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trigger_count_and_examples() {
        assert_eq!((0..64u8).filter(|&p| is_trigger(p)).count(), 18);
        // alternating patterns are not triggers
        assert!(!is_trigger(0b010101));
        assert!(!is_trigger(0b101010));
        assert!(is_trigger(0b000111));
        assert!(is_trigger(0b100001 | 0b000010));
        assert!(!is_trigger(0b001111));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.5, 0.0).is_ok());
        assert!(ModelParams::new(0.3, 0.4 / 3.0).is_ok());
        assert!(ModelParams::new(0.4, 0.1).is_err());
        assert!(ModelParams::new(0.1, 0.8 / 3.0).is_err());
        assert!(ModelParams::new(-0.1, 0.4).is_err());
        let b = ModelParams::boundary();
        assert!(ModelParams::new(b.a(), b.s()).is_ok());
        assert!(ModelParams::from_s(b.s() + 1e-6).is_err());
    }

    #[test]
    fn grid_parse_reports_line() {
        let g = parse_param_grid("# grid\n0.5 0\n0.3 0.13333333333333333\n").unwrap();
        assert_eq!(g.len(), 2);
        let e = parse_param_grid("0.5 0\n0.4 0.1\n").unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let e = parse_param_grid("0.5\n").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn split_halves() {
        for k in 0..3u8 {
            let s = HexState::Split(k);
            let blue: Vec<usize> = (0..6).filter(|&e| s.edge_blue(e)).collect();
            let want: Vec<usize> = {
                let mut v: Vec<usize> = (0..3).map(|j| (2 * k as usize + j) % 6).collect();
                v.sort();
                v
            };
            assert_eq!(blue, want);
        }
    }

    #[test]
    fn conditional_matches_enumeration() {
        let law = FlowerLaw::new(ModelParams::default());
        let mut partial = PartialFlower::default();
        partial.petals[0] = Some(true);
        partial.petals[1] = Some(true);
        partial.petals[3] = Some(false);
        let d = law.conditional(&partial, 0).unwrap();
        let mut want = [0.0; 5];
        let mut tot = 0.0;
        for (f, p) in enumerate_flower(law.params()) {
            if partial.consistent(&f) {
                want[f.iris.code() as usize] += p;
                tot += p;
            }
        }
        for i in 0..5 {
            assert!((d[i] - want[i] / tot).abs() < 1e-14);
        }
        partial.iris = Some(HexState::Split(1));
        partial.petals[2] = Some(true);
        partial.petals[4] = Some(true);
        // 4 blue petals: not a trigger, so a split is possible
        assert!(law.mass(&partial) > 0.0);
        partial.petals[4] = Some(false);
        partial.petals[5] = Some(false);
        // exactly 3 adjacent blue petals: split impossible
        assert!(law.conditional(&partial, 0).is_err());
    }

    #[test]
    fn sampling_frequencies() {
        let params = ModelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut split = 0;
        for _ in 0..n {
            if sample_iris(&params, 0b000001, &mut rng).is_split() {
                split += 1;
            }
        }
        let f = split as f64 / n as f64;
        assert!((f - 3.0 * params.s()).abs() < 0.005, "{f}");
    }
}
