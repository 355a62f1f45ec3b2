//! Grid mazes described by ASCII maps.
//!
//! Map characters: `#` wall, `.` open, `G` goal (terminal, +1 on entry),
//! `S` optional fixed start. Without an `S` the start is drawn uniformly
//! from the open non-goal cells. Cells outside the map count as walls.
//!
//! The agent observes only the walls adjacent to its cell, packed into a
//! 4-bit id: north = 1, east = 2, south = 4, west = 8. Many cells share a
//! pattern, which is the point — the id says nothing about *where* in the
//! maze the agent is.

use thiserror::Error;

use super::EnvModel;

const MAZE_9X9: &str = include_str!("../../maps/grid_maze_9x9.txt");
const MAZE_3X3: &str = include_str!("../../maps/grid_maze_3x3.txt");

/// Actions, in order: up, down, left, right.
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

#[derive(Debug, Error, PartialEq)]
pub enum MazeParseError {
    #[error("map has no rows")]
    Empty,
    #[error("row {0} has a different width from row 0")]
    Ragged(usize),
    #[error("unexpected character {ch:?} at row {row}, column {col}")]
    BadChar { row: usize, col: usize, ch: char },
    #[error("map declares no goal cell")]
    NoGoal,
    #[error("map declares more than one goal cell")]
    MultipleGoals,
    #[error("map declares more than one start cell")]
    MultipleStarts,
    #[error("map has no possible start cell")]
    NoStart,
    #[error("open cell at row {row}, column {col} cannot reach the goal")]
    Unreachable { row: usize, col: usize },
}

/// Build a maze model from an ASCII map.
///
/// Validates the map shape, that exactly one goal exists, and that every
/// open cell can reach it (so episodes cannot get stranded by map typos).
pub fn grid_maze_from_str(map: &str, discount: f64, horizon: usize) -> Result<EnvModel, MazeParseError> {
    let rows: Vec<&str> = map.lines().filter(|l| !l.trim().is_empty()).collect();
    if rows.is_empty() {
        return Err(MazeParseError::Empty);
    }
    let width = rows[0].chars().count();
    let height = rows.len();

    let mut open = vec![vec![false; width]; height];
    let mut goal = None;
    let mut start = None;
    for (r, line) in rows.iter().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        if chars.len() != width {
            return Err(MazeParseError::Ragged(r));
        }
        for (c, &ch) in chars.iter().enumerate() {
            match ch {
                '#' => {}
                '.' => open[r][c] = true,
                'G' => {
                    if goal.replace((r, c)).is_some() {
                        return Err(MazeParseError::MultipleGoals);
                    }
                    open[r][c] = true;
                }
                'S' => {
                    if start.replace((r, c)).is_some() {
                        return Err(MazeParseError::MultipleStarts);
                    }
                    open[r][c] = true;
                }
                _ => return Err(MazeParseError::BadChar { row: r, col: c, ch }),
            }
        }
    }
    let goal = goal.ok_or(MazeParseError::NoGoal)?;

    // Dense state index per open cell.
    let mut state_of_cell = vec![vec![usize::MAX; width]; height];
    let mut cells = Vec::new();
    for r in 0..height {
        for c in 0..width {
            if open[r][c] {
                state_of_cell[r][c] = cells.len();
                cells.push((r, c));
            }
        }
    }

    let is_wall = |r: isize, c: isize| -> bool {
        r < 0 || c < 0 || r as usize >= height || c as usize >= width || !open[r as usize][c as usize]
    };

    // Every open cell must reach the goal (moves are reversible, so BFS
    // from the goal over open-cell adjacency covers it).
    let mut reach = vec![false; cells.len()];
    let mut queue = std::collections::VecDeque::from([state_of_cell[goal.0][goal.1]]);
    reach[state_of_cell[goal.0][goal.1]] = true;
    while let Some(s) = queue.pop_front() {
        let (r, c) = cells[s];
        for (dr, dc) in MOVES {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if !is_wall(nr, nc) {
                let t = state_of_cell[nr as usize][nc as usize];
                if !reach[t] {
                    reach[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    if let Some(s) = (0..cells.len()).find(|&s| !reach[s]) {
        let (r, c) = cells[s];
        return Err(MazeParseError::Unreachable { row: r, col: c });
    }

    let num_states = cells.len();
    let goal_state = state_of_cell[goal.0][goal.1];
    let mut transition = Vec::with_capacity(num_states);
    let mut reward = Vec::with_capacity(num_states);
    let mut obs_of_state = Vec::with_capacity(num_states);
    for &(r, c) in &cells {
        let mut t_row = Vec::with_capacity(4);
        let mut r_row = Vec::with_capacity(4);
        for (dr, dc) in MOVES {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            let target = if is_wall(nr, nc) {
                state_of_cell[r][c] // bump: stay put
            } else {
                state_of_cell[nr as usize][nc as usize]
            };
            t_row.push(vec![(target, 1.0)]);
            r_row.push(if target == goal_state && state_of_cell[r][c] != goal_state { 1.0 } else { 0.0 });
        }
        transition.push(t_row);
        reward.push(r_row);

        let mut pattern = 0usize;
        for (bit, (dr, dc)) in MOVES.iter().enumerate() {
            if is_wall(r as isize + dr, c as isize + dc) {
                pattern |= 1 << bit;
            }
        }
        // MOVES order is up/down/left/right; re-pack as N,E,S,W bits.
        let n = pattern & 1;
        let s = (pattern >> 1) & 1;
        let w = (pattern >> 2) & 1;
        let e = (pattern >> 3) & 1;
        obs_of_state.push(n | (e << 1) | (s << 2) | (w << 3));
    }

    let initial_dist = match start {
        Some((r, c)) => {
            if state_of_cell[r][c] == goal_state {
                return Err(MazeParseError::NoStart);
            }
            vec![(state_of_cell[r][c], 1.0)]
        }
        None => {
            let starts: Vec<usize> = (0..num_states).filter(|&s| s != goal_state).collect();
            if starts.is_empty() {
                return Err(MazeParseError::NoStart);
            }
            let p = 1.0 / starts.len() as f64;
            starts.into_iter().map(|s| (s, p)).collect()
        }
    };

    let mut terminal = vec![false; num_states];
    terminal[goal_state] = true;

    let model = EnvModel {
        num_states,
        num_actions: 4,
        num_observations: 16,
        transition,
        reward,
        obs_of_state,
        initial_dist,
        terminal,
        discount,
        horizon,
    };
    debug_assert!(model.validate().is_ok());
    Ok(model)
}

/// The shipped 9x9 maze: discount 0.99, horizon 100.
pub fn grid_maze_9x9() -> EnvModel {
    grid_maze_from_str(MAZE_9X9, 0.99, 100).expect("shipped 9x9 map is valid")
}

/// The shipped 3x3 maze (one interior wall): discount 0.99, horizon 100.
pub fn grid_maze_3x3() -> EnvModel {
    grid_maze_from_str(MAZE_3X3, 0.99, 100).expect("shipped 3x3 map is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pomdp::{Env, ModelEnv};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shipped_maps_parse() {
        assert!(grid_maze_from_str(MAZE_9X9, 0.99, 100).is_ok());
        assert!(grid_maze_from_str(MAZE_3X3, 0.99, 100).is_ok());
    }

    #[test]
    fn three_by_three_layout_reads_off_as_expected() {
        // Map:
        //   ...
        //   .#.
        //   ..G
        // Cell (0,0): walls north and west -> 1 | 8 = 9.
        // Cell (1,0): walls east (interior block) and west -> 2 | 8 = 10.
        // Cell (0,1): walls north and south -> 1 | 4 = 5.
        let m = grid_maze_3x3();
        assert_eq!(m.num_states, 8);
        assert_eq!(m.obs_of_state[0], 9); // (0,0)
        assert_eq!(m.obs_of_state[1], 5); // (0,1)
        assert_eq!(m.obs_of_state[3], 10); // (1,0)
    }

    #[test]
    fn bump_into_wall_stays_put() {
        let m = grid_maze_3x3();
        // State 0 is cell (0,0); moving up (action 0) hits the boundary.
        assert_eq!(m.transition[0][0], vec![(0, 1.0)]);
    }

    #[test]
    fn entering_goal_pays_one_and_terminates() {
        let m = grid_maze_3x3();
        // Cell (2,1) is state 6; goal (2,2) is state 7; action right = 3.
        assert_eq!(m.transition[6][3], vec![(7, 1.0)]);
        assert_eq!(m.reward[6][3], 1.0);
        assert!(m.terminal[7]);

        let mut env = ModelEnv::new(m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        loop {
            env.reset(&mut rng);
            if env.hidden_state() == 6 {
                break;
            }
        }
        let out = env.step(3, &mut rng).unwrap();
        assert_eq!(out.reward, 1.0);
        assert!(out.terminal);
    }

    #[test]
    fn start_is_never_the_goal() {
        let m = grid_maze_9x9();
        let goal = (0..m.num_states).find(|&s| m.terminal[s]).unwrap();
        assert!(m.initial_dist.iter().all(|&(s, _)| s != goal));
    }

    #[test]
    fn stranded_cell_is_rejected() {
        let map = "G#.\n###\n...";
        match grid_maze_from_str(map, 0.99, 100) {
            Err(MazeParseError::Unreachable { .. }) => {}
            other => panic!("expected unreachable-cell error, got {other:?}"),
        }
    }

    #[test]
    fn ragged_and_bad_chars_are_rejected() {
        assert!(matches!(grid_maze_from_str("..\n...", 0.99, 100), Err(MazeParseError::Ragged(1))));
        assert!(matches!(
            grid_maze_from_str("..\nX.", 0.99, 100),
            Err(MazeParseError::BadChar { row: 1, col: 0, ch: 'X' })
        ));
    }

    #[test]
    fn fixed_start_is_honoured() {
        let m = grid_maze_from_str("S.G", 0.99, 10).unwrap();
        assert_eq!(m.initial_dist, vec![(0, 1.0)]);
    }
}
