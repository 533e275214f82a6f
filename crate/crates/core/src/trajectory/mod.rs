//! Nonautonomous systems: matrix sequences, subspace orbits and the
//! finite-horizon estimators of all eight angular values.

pub mod estimate;
pub mod orbit;
pub mod sequence;
pub mod shift;

pub use estimate::{
    estimate_angular_values, trajectory_max, AngularEstimates, Estimate, EstimatorConfig, Maximizer, SearchStrategy,
    TrajectoryMax,
};
pub use orbit::{anchored_orbit_angles, forward_angles, orbit_angles, propagate_frame, SubspaceOrbit};
pub use sequence::{builtin_sequence, AnchoredSeed, BuiltinKind, MatrixSequence, SequenceHints};
pub use shift::{shift_maximizer_check, ShiftReport, ShiftStep};
