//! Toy models: a particle-conserving spin chain, a system coupled to a qubit
//! environment, and a wave packet on a lattice.

pub mod environment;
pub mod second_law;
pub mod spin_chain;
pub mod wave_packet;

pub use environment::{environment_decoherence_model, EnvironmentModel};
pub use second_law::{domain_wall, product_state, second_law_experiment, SecondLawTrajectory, TrajectoryRow};
pub use spin_chain::{
    commutator_expectation, continuity_check, fluctuation_ratio, CellPartition, ContinuityReport, Quantity, SpinChain,
};
pub use wave_packet::{classical_trajectory, ehrenfest_experiment, EhrenfestRow, Packet, Potential, WavePacketModel};
