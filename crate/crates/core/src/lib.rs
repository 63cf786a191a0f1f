//! Complex spectral decompositions of Friedrichs-type Hamiltonians and their
//! Liouville extension on deformed contours.

pub mod contour;
pub mod error;
pub mod model;
pub mod vector;
pub mod system;
pub mod friedrichs;
pub mod perturbation;
pub mod oracle;
pub mod dynamics;
pub mod liouville;
pub mod barrier;
pub mod validation;

pub use num_complex::Complex64 as C64;

pub use contour::{ContourGrid, ContourSpec, Orientation, RealAxisRule, Shape, Side};
pub use error::{Error, Result};
pub use model::{make_model, Family, FormFactor, FormFactor2, ModelConfig, ModelSpec};
pub use friedrichs::{exact_system, find_pole, ExactSystem, PoleMethod, PoleResult};
pub use system::{BiorthogonalSystem, ContinuumPair, SpectralOverlaps};
pub use vector::{AnalyticVector, Continuation, VectorCoeffs};
pub use perturbation::{assemble_system, normalize_pair, perturb_continuous, perturb_discrete, PerturbationSeries};
pub use oracle::{deformed_eigenvalue, discretize, oracle_amplitude, DiscretizedSystem, Provenance};
pub use dynamics::{default_time_grid, exponential_approx, oracle_survival_curve, pole_survival_curve, survival_curve, time_grid, transition_amplitude, DecayCurve, Propagator};
pub use liouville::{apply_free, apply_interaction, apply_l, check_physicality, BlockGrid, BlockObservable, Branch, EvolvedState, GeneralizedState, LiouvilleEigenpair, LiouvilleSystem, Physicality, ZeroSector, LIOUVILLE_NODES};
pub use barrier::{even_scattering_state, mapped_model, matrix_elements, resonance_width, solve_bound_state, width_sweep, BarrierResonance, BarrierSpec, BoundState, MatrixElements, ScatteringState};
pub use validation::{run_suite, Check, Status, SuiteOptions};
