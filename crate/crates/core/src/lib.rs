//! Constant-depth circuit constructions for bit-string MDPs, exact
//! finite-horizon solving, and the harness that checks one against the other.
//!
//! * [`bits`]: fixed-width bit strings, MSB first.
//! * [`circuit`]: unbounded fan-in AND/OR/NOT circuits with size/depth metrics.
//! * [`dnf`]: DNF formulas and their text form.
//! * [`gadgets`]: XOR, indicators, CNF/DNF lowering, adders, MAX, MDP circuits.
//! * [`mdp`]: Parity and Majority MDP semantics, control functions, condition sampling.
//! * [`solver`]: backward induction, greedy policies, rollouts, closed-form values.
//! * [`verify`]: equivalence checking, value lemmas, bit extraction, scaling, Monte Carlo.
//! * [`approx`]: small MLPs fitted to transition, reward and Q targets.

pub mod approx;
pub mod bits;
pub mod circuit;
pub mod dnf;
pub mod gadgets;
pub mod mdp;
pub mod solver;
pub mod verify;

pub use bits::BitString;
pub use circuit::{Circuit, CircuitBuilder, GateId, GateKind};
pub use dnf::Dnf;
pub use mdp::{ControlFunction, DeterministicMdp, MajorityMdpSpec, ParityMdpSpec};
