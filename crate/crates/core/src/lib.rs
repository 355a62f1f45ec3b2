//! Batch reinforcement learning on small partially observable environments,
//! built around regret-matched advantage updates.
//!
//! The crate is organised as six modules:
//!
//! - [`pomdp`] — explicit finite environment models, simulation, frame
//!   stacking, and exact dynamic-programming oracles;
//! - [`cfr`] — tabular counterfactual-regret solvers (plain and clipped
//!   variants) driven by the exact oracles;
//! - [`approx`] — value-function approximators (table / linear / MLP) with a
//!   shared flat-parameter representation, Adam, and Polyak averaging;
//! - [`arm`] — the batch advantage-learning trainer: n-step targets, clipped
//!   cumulative advantages, regret-matched policies, and an off-policy
//!   variant with truncated importance weights;
//! - [`baselines`] — n-step double Q-learning and batch actor-critic under
//!   the same metrics schema;
//! - [`harness`] — JSON experiment configs, seeded multi-run execution,
//!   CSV metrics, regret/AUC summaries, and plot data.
//!
//! Every run is deterministic: a `(config, seed)` pair fixes all sampled
//! trajectories and therefore all emitted bytes.

pub mod approx;
pub mod arm;
pub mod baselines;
pub mod cfr;
pub mod harness;
pub mod pomdp;
