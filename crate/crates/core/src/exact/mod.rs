//! Brute-force oracles: group-sum enumeration of the solvable model and
//! Lanczos ground states of the full Hamiltonian for k ≤ 3.

pub mod enumerate;
pub mod lanczos;
pub mod operator;
pub mod state;

pub use enumerate::{enumerate_solvable, GroupEnumeration, SolvableEnumeration};
pub use lanczos::{EigenPair, LanczosOptions};
pub use operator::{LinearOperator, PauliSum, ToricHamiltonian};
pub use state::{
    expectation, ground_state, lowest_state, measurement_set_exact, measurements_of, reference_state,
    solvable_state, GroundState, LogicalSector, Observable, SolveOptions, StartVector,
    StateVector,
};
