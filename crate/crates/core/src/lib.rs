//! Saturation constants on the reference triangle, the 1D saturation
//! quantities, Raviart–Thomas minimal-flux problems and a p-adaptive FEM loop
//! with equilibrated-flux star estimators.

pub mod basis;
pub mod densela;
pub mod error;
pub mod hpafem;
pub mod oned;
pub mod quadrature;
pub mod reftri;
pub mod rtflux;

pub use error::{Result, SatError};
