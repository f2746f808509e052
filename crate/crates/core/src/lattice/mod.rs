//! Hexagonal lattice, floral arrangements, continuum shapes and their
//! discretized domains.

pub mod arrangement;
pub mod domain;
pub mod hex;
pub mod shapes;
pub mod walker;

pub use arrangement::{place_irises, FloralArrangement, Role};
pub use domain::{
    build_domain, build_domain_marked, check_admissible, domain_from_cells, CellKind, CellRole, Domain, Grid,
};
pub use hex::{Hex, VertexId, Wedge};
pub use shapes::{Shape, ShapeSpec};
pub use walker::{Lookup, Move, Node, Walker};
