//! Orbit integration and the dynamical experiments built on it.

mod integrate;
mod plug;
mod section;

pub use integrate::{flow_map, integrate, Control, Flow, IntegrateOptions, RunEnd, Step, StepStats, Termination, Trajectory, METHOD};
pub use plug::{
    flow_jacobian_det, matched_ends_scan, reversibility_error, scan_entry, traverse_plug, ScanCell, ScanReport, Traversal,
    TraversalOutcome, TraverseOptions, FACE_TOL,
};
pub use section::{
    convergent_denominators, default_seeds, min_circle_displacement, periodic_orbit_search, return_map, rotation_vector, search_flow,
    three_distance_bound, Candidate, ReturnOptions, Returns, RotationVector, SearchOptions, SearchReport, Section,
};
