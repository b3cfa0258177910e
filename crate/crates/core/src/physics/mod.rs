//! Shockley surface-state LDOS simulation with point impurities.

pub mod bessel;
pub mod constants;
pub mod greens;
pub mod lattice;
pub mod ldos;
pub mod scene;
pub mod tmatrix;

pub use greens::{fermi_wavevector, free_greens_function, FreePropagator, SurfaceModel};
pub use lattice::{lattice_green_matrix, resolvent_ldos, spectral_ldos_oracle, LatticeSpec};
pub use ldos::{ldos_at, ldos_map, LdosMap, RasterSpec};
pub use scene::{generate_clear_dataset, ldos_to_image, sample_scene, SceneConfig, SceneMetadata, SimulatedImage};
pub use tmatrix::{solve_t_matrix, t_matrix_solve, ImpuritySet, TMatrix};
