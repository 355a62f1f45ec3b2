use super::EnvModel;

/// Two hidden states behind a single observation.
///
/// Action 0 moves to state A, action 1 moves to state B. The move is paid
/// +1 exactly when it changes the hidden state, so every deterministic
/// memoryless policy ends up parked (long-run per-step reward 0) while the
/// 50/50 mixture earns 0.5 per step — the gap a regret-matched learner is
/// supposed to find and a greedy one is supposed to miss.
///
/// Start state uniform, discount 0.9, horizon 100, no terminal states.
pub fn aliased_two_state() -> EnvModel {
    let m = EnvModel {
        num_states: 2,
        num_actions: 2,
        num_observations: 1,
        // From either state: action 0 -> state A, action 1 -> state B.
        transition: vec![
            vec![vec![(0, 1.0)], vec![(1, 1.0)]],
            vec![vec![(0, 1.0)], vec![(1, 1.0)]],
        ],
        // Paid when the hidden state flips.
        reward: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        obs_of_state: vec![0, 0],
        initial_dist: vec![(0, 0.5), (1, 0.5)],
        terminal: vec![false, false],
        discount: 0.9,
        horizon: 100,
    };
    debug_assert!(m.validate().is_ok());
    m
}
