//! Reference learners to compare against: an online value-based method that
//! commits to greedy actions, and a batch policy-gradient method that keeps
//! an explicit stochastic policy.
//!
//! Both emit the same per-chunk metrics rows as the advantage learner
//! ([`crate::arm::IterationRow`]) so every trainer feeds one results schema.

mod a2c;
mod dqn;

pub use a2c::{a2c_train, A2cConfig, A2cRun, SoftmaxPolicy};
pub use dqn::{dqn_train, epsilon_at, DqnConfig, DqnRun, EpsilonGreedy};

/// Index of the first maximal entry.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
