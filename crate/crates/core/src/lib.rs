//! Double-edge normal factor graphs: a data model for graphs whose edges carry
//! either one variable or a pair `(x, x')`, the sum-product algorithm with
//! vector and matrix messages, the Bethe approximation of the partition sum,
//! exhaustive oracles, and generators for random and canonical instances.

pub mod bethe;
pub mod error;
pub mod exact;
pub mod experiment;
pub mod gen;
pub mod graph;
pub mod spa;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{DeNfg, Edge, EdgeKind, Factor};
pub use tensor::{ComplexTensor, C64};
