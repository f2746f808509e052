//! Placement of irises. Every neighbor of an iris is one of its petals; all
//! other hexagons are fillers.

use super::hex::Hex;
use crate::error::{Error, Result};
use std::collections::HashSet;

/// Role of a hexagon in the arrangement. Petal `k` in `0..6` lies in
/// neighbor direction `k` from its iris.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Filler,
    Iris,
    Petal { iris: Hex, k: u8 },
}

#[derive(Clone, Debug)]
pub enum FloralArrangement {
    /// Irises on the sublattice `q ≡ oq, r ≡ or (mod period)`.
    Periodic {
        period: i32,
        offset: (i32, i32),
    },
    Explicit(HashSet<Hex>),
    Empty,
}

impl FloralArrangement {
    pub fn periodic(period: i32) -> Result<Self> {
        Self::periodic_with_offset(period, (0, 0))
    }

    pub fn periodic_with_offset(period: i32, offset: (i32, i32)) -> Result<Self> {
        if period < 3 {
            return Err(Error::Arrangement(format!(
                "period {period} < 3 leaves fewer than two non-iris hexagons between irises"
            )));
        }
        Ok(FloralArrangement::Periodic { period, offset })
    }

    /// Explicit iris set, checked for spacing.
    pub fn explicit(irises: impl IntoIterator<Item = Hex>) -> Result<Self> {
        let set: HashSet<Hex> = irises.into_iter().collect();
        let v: Vec<Hex> = set.iter().copied().collect();
        for (i, a) in v.iter().enumerate() {
            for b in &v[i + 1..] {
                if a.distance(*b) < 3 {
                    return Err(Error::Arrangement(format!("irises {a:?} and {b:?} are too close")));
                }
            }
        }
        Ok(FloralArrangement::Explicit(set))
    }

    pub fn is_iris(&self, h: Hex) -> bool {
        match self {
            FloralArrangement::Periodic { period, offset } => {
                (h.q - offset.0).rem_euclid(*period) == 0 && (h.r - offset.1).rem_euclid(*period) == 0
            }
            FloralArrangement::Explicit(s) => s.contains(&h),
            FloralArrangement::Empty => false,
        }
    }

    pub fn role(&self, h: Hex) -> Role {
        if self.is_iris(h) {
            return Role::Iris;
        }
        for k in 0..6 {
            // h = iris + DIRS[k]  <=>  iris = h + DIRS[k + 3]
            let iris = h.neighbor(k + 3);
            if self.is_iris(iris) {
                return Role::Petal { iris, k: k as u8 };
            }
        }
        Role::Filler
    }
}

/// Irises of a periodic arrangement inside the axial box `[q0, q1] x [r0, r1]`.
pub fn place_irises(q0: i32, q1: i32, r0: i32, r1: i32, period: i32) -> Result<Vec<Hex>> {
    let arr = FloralArrangement::periodic(period)?;
    let mut out = Vec::new();
    for r in r0..=r1 {
        for q in q0..=q1 {
            let h = Hex::new(q, r);
            if arr.is_iris(h) {
                out.push(h);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn placement_spacing_and_count() {
        let irises = place_irises(0, 9, 0, 9, 3).unwrap();
        assert_eq!(irises.len(), 16);
        for (i, a) in irises.iter().enumerate() {
            for b in &irises[i + 1..] {
                assert!(a.distance(*b) >= 3);
            }
        }
        assert!(place_irises(0, 9, 0, 9, 2).is_err());
    }

    #[test]
    fn roles_partition() {
        let arr = FloralArrangement::periodic(3).unwrap();
        let o = Hex::new(3, 6);
        assert_eq!(arr.role(o), Role::Iris);
        for k in 0..6 {
            assert_eq!(arr.role(o.neighbor(k)), Role::Petal { iris: o, k: k as u8 });
        }
        assert_eq!(arr.role(Hex::new(4, 7)), Role::Filler);
        // no hexagon is a petal of two irises
        for q in -6..6 {
            for r in -6..6 {
                let h = Hex::new(q, r);
                let n = (0..6).filter(|&k| arr.is_iris(h.neighbor(k))).count();
                assert!(n <= 1);
            }
        }
    }

    #[test]
    fn explicit_rejects_close_irises() {
        assert!(FloralArrangement::explicit([Hex::new(0, 0), Hex::new(2, 0)]).is_err());
        assert!(FloralArrangement::explicit([Hex::new(0, 0), Hex::new(3, 0)]).is_ok());
    }
}
