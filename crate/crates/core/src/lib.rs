//! Fractional p-Laplacian on finite weighted graphs and the doubly nonlinear
//! flow `∂_t u^q + (−Δ)_p^s u = 0`.

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod gamma;
pub mod graph;
pub mod jacobi;
pub mod operators;
pub mod random;
pub mod spectral;
pub mod sum;

pub use error::{Error, Result};
pub use graph::{Graph, GraphIssue, ValidationReport, VertexFunction};
pub use operators::FractionalKernel;
pub use spectral::{QuadratureConfig, SpectralDecomposition};
pub use flow::{FlowConfig, FlowState, FrozenCoefficient, Trajectory};
