//! Desk-scale toolkit for weighted partite hypergraphs.
//!
//! The crate provides:
//!
//! - weighted `J`-partite graphs with an arity cap, links, vertex norms,
//!   standard constructions and density graphs ([`graph`], [`density`]);
//! - exact and Monte Carlo partite homomorphism counting, octahedron
//!   (blow-up) patterns and their fast counts ([`homcount`]);
//! - octahedron-based regularity and minimality verdicts, weighted
//!   Cauchy–Schwarz distribution/concentration checks, and closed-form
//!   threshold calculators ([`regularity`]);
//! - regularity inheritance scans over the links of a distinguished part
//!   ([`inheritance`]);
//! - a vertex-by-vertex counting/embedding engine over stacks of candidate
//!   graphs with parameter ensembles ([`gpe`]);
//! - typical-hypergraph-counting verification, both exact on tiny instances
//!   and empirical on random hypergraphs ([`thc`]);
//! - JSON/CSV interchange and a reproducible experiment manifest
//!   ([`jsonio`], [`manifest`]), consumed by the `hyperreg` binary.
//!
//! Counting is exact over big rationals or approximate over `f64`; all
//! verification code is generic over the backend (see [`scalar::Scalar`]).

pub mod complex;
pub mod density;
pub mod gpe;
pub mod graph;
pub mod homcount;
pub mod inheritance;
pub mod jsonio;
pub mod manifest;
pub mod regularity;
pub mod scalar;
pub mod thc;
pub mod wide;

pub use complex::{PartId, PartiteComplex, VertexId};
pub use density::DensityGraph;
pub use graph::{Layer, StandardConstruction, VertexWeightReport, WeightedGraph};
pub use scalar::{Rat, Scalar};
pub use wide::Wide;

/// Crate-wide error type. The CLI maps `Parse` to exit code 2 and `Budget`
/// to exit code 3; everything else is an ordinary failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: String) -> Self {
        Error::Domain(msg)
    }
    pub fn budget(msg: String) -> Self {
        Error::Budget(msg)
    }
    pub fn parse(msg: String) -> Self {
        Error::Parse(msg)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
