//! Catch-the-ball on a 12x9 grid, with an optional occlusion band.
//!
//! A ball starts on the top row at a random column with a random horizontal
//! drift in {-1, 0, +1} and falls one row per step, reflecting off the side
//! walls (a reflection flips the drift sign and the ball moves with the new
//! drift, so it never leaves the grid). The paddle sits on the bottom row
//! and moves one column per step (left / stay / right). The episode ends
//! when the ball reaches the bottom row: +1 if the paddle is under it,
//! -1 otherwise.
//!
//! The observation is (ball cell or a "hidden" sentinel, paddle column) —
//! the drift is never observable, so a single frame is always ambiguous.
//! In the occluded variant the ball is additionally reported hidden while
//! it crosses rows 4–7.

use super::EnvModel;

pub const BALL_ROWS: usize = 12;
pub const BALL_COLS: usize = 9;
/// Sentinel "cell" index used when the ball is hidden.
pub const BALL_HIDDEN_CELL: usize = BALL_ROWS * BALL_COLS;

const DRIFTS: [isize; 3] = [-1, 0, 1];
const PADDLE_START: usize = BALL_COLS / 2;
const OCCLUDED_ROWS: std::ops::RangeInclusive<usize> = 4..=7;

fn state_index(row: usize, col: usize, drift_idx: usize, paddle: usize) -> usize {
    ((row * BALL_COLS + col) * DRIFTS.len() + drift_idx) * BALL_COLS + paddle
}

fn obs_index(cell: usize, paddle: usize) -> usize {
    cell * BALL_COLS + paddle
}

fn advance_ball(col: usize, drift: isize) -> (usize, isize) {
    let raw = col as isize + drift;
    if raw < 0 || raw >= BALL_COLS as isize {
        let flipped = -drift;
        ((col as isize + flipped) as usize, flipped)
    } else {
        (raw as usize, drift)
    }
}

/// Build the ball model; `occluded` hides the ball while it crosses the
/// occlusion band. Discount 1.0 (single ±1 terminal reward), horizon 11
/// (the ball lands on the 11th step).
pub fn occluded_ball(occluded: bool) -> EnvModel {
    let num_states = BALL_ROWS * BALL_COLS * DRIFTS.len() * BALL_COLS;
    let num_actions = 3;
    let num_observations = (BALL_HIDDEN_CELL + 1) * BALL_COLS;

    let mut transition = vec![Vec::new(); num_states];
    let mut reward = vec![vec![0.0; num_actions]; num_states];
    let mut obs_of_state = vec![0usize; num_states];
    let mut terminal = vec![false; num_states];

    for row in 0..BALL_ROWS {
        for col in 0..BALL_COLS {
            for (di, &drift) in DRIFTS.iter().enumerate() {
                for paddle in 0..BALL_COLS {
                    let s = state_index(row, col, di, paddle);
                    let hidden = occluded && OCCLUDED_ROWS.contains(&row);
                    let cell = if hidden { BALL_HIDDEN_CELL } else { row * BALL_COLS + col };
                    obs_of_state[s] = obs_index(cell, paddle);
                    terminal[s] = row == BALL_ROWS - 1;

                    let mut rows_t = Vec::with_capacity(num_actions);
                    for action in 0..num_actions {
                        if terminal[s] {
                            // Absorbing; never stepped from.
                            rows_t.push(vec![(s, 1.0)]);
                            continue;
                        }
                        let paddle_next =
                            (paddle as isize + action as isize - 1).clamp(0, BALL_COLS as isize - 1) as usize;
                        let (col_next, drift_next) = advance_ball(col, drift);
                        let di_next = DRIFTS.iter().position(|&d| d == drift_next).unwrap();
                        let row_next = row + 1;
                        let t = state_index(row_next, col_next, di_next, paddle_next);
                        rows_t.push(vec![(t, 1.0)]);
                        if row_next == BALL_ROWS - 1 {
                            reward[s][action] = if col_next == paddle_next { 1.0 } else { -1.0 };
                        }
                    }
                    transition[s] = rows_t;
                }
            }
        }
    }

    let p = 1.0 / (BALL_COLS * DRIFTS.len()) as f64;
    let mut initial_dist = Vec::with_capacity(BALL_COLS * DRIFTS.len());
    for col in 0..BALL_COLS {
        for di in 0..DRIFTS.len() {
            initial_dist.push((state_index(0, col, di, PADDLE_START), p));
        }
    }

    let model = EnvModel {
        num_states,
        num_actions,
        num_observations,
        transition,
        reward,
        obs_of_state,
        initial_dist,
        terminal,
        discount: 1.0,
        horizon: BALL_ROWS - 1,
    };
    debug_assert!(model.validate().is_ok());
    model
}
