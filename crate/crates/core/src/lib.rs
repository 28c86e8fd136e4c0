//! Finite-dimensional approximation machinery for algebraic actions of
//! sofic groups.
//!
//! The crate models a group `Γ` by permutations `σ_i : Γ → Sym(d_i)`,
//! extends those to matrices over the integral group ring, and reads off
//! spectral data of the resulting sparse matrices. From that data it
//! estimates the von Neumann dimension of kernels, the von Neumann–Lück
//! rank of finitely presented modules, and (p-)metric mean dimension of
//! the dual actions via near-kernel subspaces, torus microstates and
//! covering numbers.
//!
//! Module map:
//!
//! - [`group`]: groups, normal forms, sofic levels and their defects.
//! - [`ring`]: group-ring arithmetic, adjoints and exact trace moments.
//! - [`sofic`]: the matrix representation `σ_i(f)` and its norms.
//! - [`spectral`]: singular-value profiles, counting functions, moments.
//! - [`rank`]: rank estimators, covering sandwiches, Fourier oracles.
//! - [`microstates`]: near-kernel subspaces, microstates, covering numbers.
//! - [`tiling`]: quasi-tilings of boxes and orbit pseudometrics on `Z^d`.
//! - [`job`]: job files and the report pipeline behind the CLI.

pub mod error;
pub mod group;
pub mod job;
pub mod linalg;
pub mod microstates;
pub mod rank;
pub mod ring;
pub mod sofic;
pub mod spectral;
pub mod tiling;

pub use error::{Error, ParseError, Result};
pub use group::{GroupElement, GroupSpec, Permutation, SoficLevel};
pub use ring::{GroupRingElement, GroupRingMatrix, ModulePresentation};
pub use sofic::SoficMatrix;
pub use spectral::{CountingFunction, SpectralProfile};
