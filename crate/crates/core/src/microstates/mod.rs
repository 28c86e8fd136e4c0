//! Finite models of the dual action: near-kernel subspaces, torus
//! microstates and their pseudometrics, covering numbers, and interval
//! estimates of metric mean dimension.

mod covering;
mod mdim;
mod nearkernel;
mod torus;

pub use covering::{
    covering_number_bruteforce, covering_table, CoveringBounds, CoveringCell, TorusPointSet, DEFAULT_POINT_LIMIT,
    EXPONENT_LADDER,
};
pub use mdim::{
    additivity_failure_demo, cube_section_slope, lattice_sample, mdim_estimate, AdditivityReport, BruteForce,
    BruteForceRow, MdimInterval, MdimReport, MdimRow, MdimSchedule, SlopeFit, ADDITIVITY_TOLERANCE,
    BRUTE_FORCE_MAX_DEGREE,
};
pub use nearkernel::{near_kernel, KernelMode, NearKernelSubspace, MAX_RELATION_TUPLES};
pub use torus::{
    map_membership, microstate_from_vector, torus_dist, wrap, EquivarianceDefect, Exponent, InnerNorm,
    MembershipReport, MetricKind, PseudometricSpec, TorusMicrostate, MICROSTATE_CSV_HEADER,
};
