//! Explicit finite POMDP models and the simulator that drives them.

use rand::Rng;
use thiserror::Error;

use super::{Env, EnvError, Observation, StepOutcome};

/// Tolerance for "rows of the transition matrix sum to one".
pub const DIST_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("transition row for state {state}, action {action} sums to {sum}, expected 1")]
    RowSum { state: usize, action: usize, sum: f64 },
    #[error("initial distribution sums to {sum}, expected 1")]
    InitialSum { sum: f64 },
    #[error("state {state} maps to observation {obs}, but the model declares {num_obs} observations")]
    ObsRange { state: usize, obs: usize, num_obs: usize },
    #[error("transition row for state {state}, action {action} references state {target} out of {num_states}")]
    StateRange { state: usize, action: usize, target: usize, num_states: usize },
    #[error("probability {p} for state {state}, action {action} is negative")]
    NegativeProb { state: usize, action: usize, p: f64 },
    #[error("discount {0} outside (0, 1]")]
    Discount(f64),
    #[error("horizon must be at least 1")]
    Horizon,
}

/// An explicit finite partially observable model.
///
/// Transition rows are stored sparsely as `(next_state, probability)` pairs;
/// rewards are a dense `(state, action)` table. Terminal states absorb: no
/// action is taken from them and they contribute no further reward.
#[derive(Debug, Clone)]
pub struct EnvModel {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_observations: usize,
    /// `transition[s][a]` lists `(s', P(s'|s,a))` with `P > 0`.
    pub transition: Vec<Vec<Vec<(usize, f64)>>>,
    /// `reward[s][a]`, received on the step taken from `s` with `a`.
    pub reward: Vec<Vec<f64>>,
    /// Observation id emitted by each state.
    pub obs_of_state: Vec<usize>,
    /// `(state, probability)` pairs of the start distribution.
    pub initial_dist: Vec<(usize, f64)>,
    pub terminal: Vec<bool>,
    pub discount: f64,
    pub horizon: usize,
}

impl EnvModel {
    /// Check the structural invariants: rows and the initial distribution
    /// sum to one within [`DIST_TOL`], indices are in range, the discount is
    /// in (0, 1], the horizon is positive.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(ModelError::Discount(self.discount));
        }
        if self.horizon == 0 {
            return Err(ModelError::Horizon);
        }
        for (s, &o) in self.obs_of_state.iter().enumerate() {
            if o >= self.num_observations {
                return Err(ModelError::ObsRange { state: s, obs: o, num_obs: self.num_observations });
            }
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let mut sum = 0.0;
                for &(t, p) in &self.transition[s][a] {
                    if t >= self.num_states {
                        return Err(ModelError::StateRange {
                            state: s,
                            action: a,
                            target: t,
                            num_states: self.num_states,
                        });
                    }
                    if p < 0.0 {
                        return Err(ModelError::NegativeProb { state: s, action: a, p });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > DIST_TOL {
                    return Err(ModelError::RowSum { state: s, action: a, sum });
                }
            }
        }
        let init_sum: f64 = self.initial_dist.iter().map(|&(_, p)| p).sum();
        if (init_sum - 1.0).abs() > DIST_TOL {
            return Err(ModelError::InitialSum { sum: init_sum });
        }
        Ok(())
    }

    pub fn observation(&self, state: usize) -> Observation {
        Observation::one_hot(self.obs_of_state[state], self.num_observations)
    }

    /// Observation ids that at least one state emits.
    pub fn realized_observations(&self) -> Vec<usize> {
        let mut seen = vec![false; self.num_observations];
        for &o in &self.obs_of_state {
            seen[o] = true;
        }
        (0..self.num_observations).filter(|&o| seen[o]).collect()
    }
}

fn sample_index(pairs: &[(usize, f64)], rng: &mut dyn rand::RngCore) -> usize {
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for &(i, p) in pairs {
        acc += p;
        if x < acc {
            return i;
        }
    }
    // Guard against accumulated rounding: fall back to the last entry.
    pairs.last().expect("non-empty distribution").0
}

/// Simulator for an [`EnvModel`]: tracks the hidden state and step counter,
/// terminates on terminal states and at the horizon.
#[derive(Debug, Clone)]
pub struct ModelEnv {
    model: EnvModel,
    state: usize,
    steps: usize,
    done: bool,
}

impl ModelEnv {
    /// Wrap a validated model. Panics if the model is inconsistent — models
    /// constructed by this crate are validated in their builders and tests.
    pub fn new(model: EnvModel) -> Self {
        model.validate().expect("invalid environment model");
        ModelEnv { model, state: 0, steps: 0, done: true }
    }

    pub fn model(&self) -> &EnvModel {
        &self.model
    }

    /// Hidden state, exposed for tests and oracles only.
    pub fn hidden_state(&self) -> usize {
        self.state
    }
}

impl Env for ModelEnv {
    fn num_actions(&self) -> usize {
        self.model.num_actions
    }

    fn num_observations(&self) -> usize {
        self.model.num_observations
    }

    fn feature_dim(&self) -> usize {
        self.model.num_observations
    }

    fn discount(&self) -> f64 {
        self.model.discount
    }

    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> Observation {
        self.state = sample_index(&self.model.initial_dist, rng);
        self.steps = 0;
        self.done = self.model.terminal[self.state];
        self.model.observation(self.state)
    }

    fn step(&mut self, action: usize, rng: &mut dyn rand::RngCore) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        if action >= self.model.num_actions {
            return Err(EnvError::BadAction { action, num_actions: self.model.num_actions });
        }
        let reward = self.model.reward[self.state][action];
        self.state = sample_index(&self.model.transition[self.state][action], rng);
        self.steps += 1;
        let terminal = self.model.terminal[self.state] || self.steps >= self.model.horizon;
        self.done = terminal;
        Ok(StepOutcome { obs: self.model.observation(self.state), reward, terminal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_model() -> EnvModel {
        // Two states, two actions, deterministic swap/stay, reward 1 for
        // swapping out of state 0.
        EnvModel {
            num_states: 2,
            num_actions: 2,
            num_observations: 2,
            transition: vec![
                vec![vec![(0, 1.0)], vec![(1, 1.0)]],
                vec![vec![(0, 1.0)], vec![(1, 1.0)]],
            ],
            reward: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            obs_of_state: vec![0, 1],
            initial_dist: vec![(0, 1.0)],
            terminal: vec![false, false],
            discount: 0.9,
            horizon: 5,
        }
    }

    #[test]
    fn validate_accepts_consistent_model() {
        assert!(tiny_model().validate().is_ok());
    }

    #[test]
    fn validate_rejects_bad_row_sum() {
        let mut m = tiny_model();
        m.transition[0][0] = vec![(0, 0.5), (1, 0.4)];
        assert!(matches!(m.validate(), Err(ModelError::RowSum { state: 0, action: 0, .. })));
    }

    #[test]
    fn validate_rejects_bad_initial_sum() {
        let mut m = tiny_model();
        m.initial_dist = vec![(0, 0.7)];
        assert!(matches!(m.validate(), Err(ModelError::InitialSum { .. })));
    }

    #[test]
    fn step_after_episode_end_is_an_error() {
        let mut env = ModelEnv::new(tiny_model());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(&mut rng);
        for _ in 0..5 {
            env.step(0, &mut rng).unwrap();
        }
        assert_eq!(env.step(0, &mut rng), Err(EnvError::EpisodeOver));
    }

    #[test]
    fn horizon_expiry_flags_terminal() {
        let mut env = ModelEnv::new(tiny_model());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        env.reset(&mut rng);
        let mut last = None;
        for _ in 0..5 {
            last = Some(env.step(1, &mut rng).unwrap());
        }
        assert!(last.unwrap().terminal);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let run = |seed: u64| {
            let mut env = ModelEnv::new(tiny_model());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut trace = vec![env.reset(&mut rng).id];
            for a in [0, 1, 1, 0, 1] {
                trace.push(env.step(a, &mut rng).unwrap().obs.id);
            }
            trace
        };
        assert_eq!(run(7), run(7));
    }
}
