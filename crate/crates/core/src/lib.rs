pub mod abelian;
pub mod algebra;
pub mod averaging;
pub mod definite;
pub mod error;
pub mod maps;
pub mod matrix;
mod product_opt;
pub mod random;
pub mod separability;
pub mod tower;

pub use algebra::StarAlgebra;
pub use error::{Error, Result};
pub use maps::{Functional, LinMap, PositivityOptions, PositivityVerdict, StinespringData};
pub use matrix::{ComplexMatrix, Subsystem, C64, DEFAULT_TOL};
