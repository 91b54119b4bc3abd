//! Cliff-walking gridworld.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;

use super::{TabularEnv, TabularError};
use crate::mdp::{FiniteMdp, QTable};

/// A grid cell as `(row, col)`, row 0 at the top.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Move> {
        Self::ALL.get(i).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    pub rows: usize,
    pub cols: usize,
    pub start: Cell,
    pub goal: Cell,
    pub cliff_cells: BTreeSet<Cell>,
    pub step_reward: f64,
    pub cliff_reward: f64,
}

impl GridWorld {
    /// The 4×12 layout: start bottom-left, goal bottom-right, cliff in between.
    pub fn cliff_walking() -> Self {
        Self {
            rows: 4,
            cols: 12,
            start: (3, 0),
            goal: (3, 11),
            cliff_cells: (1..11).map(|c| (3, c)).collect(),
            step_reward: -1.0,
            cliff_reward: -100.0,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.0 * self.cols + cell.1
    }

    pub fn cell(&self, index: usize) -> Cell {
        (index / self.cols, index % self.cols)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.0 < self.rows && cell.1 < self.cols
    }

    pub fn is_cliff(&self, cell: Cell) -> bool {
        self.cliff_cells.contains(&cell)
    }

    /// True for non-cliff cells sharing an edge with a cliff cell.
    pub fn is_cliff_adjacent(&self, cell: Cell) -> bool {
        if self.is_cliff(cell) {
            return false;
        }
        Move::ALL.iter().any(|&m| {
            let n = self.clip_move(cell, m);
            n != cell && self.is_cliff(n)
        })
    }

    fn clip_move(&self, (r, c): Cell, m: Move) -> Cell {
        match m {
            Move::Up => (r.saturating_sub(1), c),
            Move::Down => ((r + 1).min(self.rows - 1), c),
            Move::Left => (r, c.saturating_sub(1)),
            Move::Right => (r, (c + 1).min(self.cols - 1)),
        }
    }

    /// One transition: `(next cell, reward, terminal)`.
    pub fn step(&self, cell: Cell, action: Move) -> Result<(Cell, f64, bool), TabularError> {
        if !self.contains(cell) {
            return Err(TabularError::OutOfGrid { row: cell.0, col: cell.1 });
        }
        let next = self.clip_move(cell, action);
        if self.is_cliff(next) {
            Ok((self.start, self.cliff_reward, false))
        } else if next == self.goal {
            Ok((next, self.step_reward, true))
        } else {
            Ok((next, self.step_reward, false))
        }
    }

    /// The exact MDP of this grid. Cliff cells are unreachable and modelled as
    /// absorbing; the goal is terminal.
    pub fn to_mdp(&self) -> FiniteMdp {
        let terminal: Vec<bool> =
            (0..self.n_cells()).map(|i| { let c = self.cell(i); c == self.goal || self.is_cliff(c) }).collect();
        FiniteMdp::deterministic(self.n_cells(), 4, terminal, |s, a| {
            let (next, r, _) = self.step(self.cell(s), Move::ALL[a]).expect("cell inside grid");
            (self.index(next), r)
        })
        .expect("gridworld MDP is well formed")
    }

    /// Follows the greedy policy of `q` from the start cell.
    pub fn greedy_rollout(&self, q: &QTable, max_steps: usize) -> Rollout {
        let mut cell = self.start;
        let mut path = vec![cell];
        let mut total_return = 0.0;
        let mut reached_goal = false;
        for _ in 0..max_steps {
            let a = q.greedy_action(self.index(cell));
            let (next, r, done) = self.step(cell, Move::ALL[a]).expect("rollout stays in grid");
            total_return += r;
            cell = next;
            path.push(cell);
            if done {
                reached_goal = true;
                break;
            }
        }
        Rollout { path, total_return, reached_goal }
    }

    /// ASCII picture of the grid with `path` drawn as `*`.
    pub fn render_path(&self, path: &[Cell]) -> String {
        let on_path: BTreeSet<Cell> = path.iter().copied().collect();
        let mut out = String::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let ch = if (r, c) == self.start {
                    'S'
                } else if (r, c) == self.goal {
                    'G'
                } else if self.is_cliff((r, c)) {
                    'C'
                } else if on_path.contains(&(r, c)) {
                    '*'
                } else {
                    '.'
                };
                out.push(ch);
            }
            let _ = writeln!(out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Visited cells including the start.
    pub path: Vec<Cell>,
    pub total_return: f64,
    pub reached_goal: bool,
}

impl Rollout {
    /// Number of moves taken.
    pub fn len(&self) -> usize {
        self.path.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A [`GridWorld`] wrapped as an episodic environment over cell indices.
#[derive(Debug, Clone)]
pub struct GridEnv {
    world: GridWorld,
    position: Cell,
}

impl GridEnv {
    pub fn new(world: GridWorld) -> Self {
        let position = world.start;
        Self { world, position }
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }
}

impl TabularEnv for GridEnv {
    fn n_states(&self) -> usize {
        self.world.n_cells()
    }

    fn n_actions(&self) -> usize {
        4
    }

    fn reset<R: Rng + ?Sized>(&mut self, _rng: &mut R) -> usize {
        self.position = self.world.start;
        self.world.index(self.position)
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, _rng: &mut R) -> (usize, f64, bool) {
        let (next, r, done) = self.world.step(self.position, Move::ALL[action]).expect("agent stays in grid");
        self.position = next;
        (self.world.index(next), r, done)
    }
}
