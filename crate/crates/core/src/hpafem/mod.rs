//! p-adaptive finite elements for `-Δu = f` with equilibrated-flux
//! estimators on vertex stars.

pub mod afem;
pub mod equilibrate;
pub mod mesh;
pub mod residual;
pub mod source;
pub mod space;

pub use afem::{afem_loop, doerfler_mark, enrich, estimate, AfemConfig, AfemReport, AfemStep, QRule};
pub use equilibrate::{equilibrate_star, equilibrate_star_with_degree, patch_dual_norm, PatchFlux, ResidualData, StarEstimate};
pub use mesh::{HpMesh, StarPatch};
pub use residual::{local_residual, oscillation, LocalResidual};
pub use source::{Monomial, Source};
pub use space::{solve_hp, HpSolution, HpSpace, HpSystem};
