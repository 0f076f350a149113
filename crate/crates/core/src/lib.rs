//! Potts lattice Higgs model and its coupled plaquette percolation (CPP)
//! representation on finite cubical complexes.
//!
//! The crate is organised bottom-up:
//!
//! - [`gfq`]: arithmetic and linear algebra over GF(q), exact rationals.
//! - [`complex`]: cubical boxes and tori, chains, cochains, percolation subcomplexes.
//! - [`homology`]: relative cocycles, Betti numbers, the `V_γ` test, minimal areas.
//! - [`measures`]: exact weights and enumeration oracles for μ, ρ, ρ̂ and κ.
//! - [`sampler`]: the two-step conditional Markov chain and the general-gauge variant.
//! - [`observables`]: loops, Wilson variables, perimeter and the Marcu–Fredenhagen ratio.
//! - [`duality`]: the torus duality transform and its exact verification.
//! - [`selftest`]: a quick invariant suite used by the command-line front end.

pub mod complex;
pub mod duality;
pub mod error;
pub mod gfq;
pub mod homology;
pub mod measures;
pub mod observables;
pub mod sampler;
pub mod selftest;

pub use error::{Error, Result};
