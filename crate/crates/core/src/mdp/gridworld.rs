//! Benchmark gridworlds.
//!
//! Square grids index cells as `row * side + col` with row 0 at the top.
//! Episodes start in the lower-left cell; the goal is the upper-right cell,
//! which is terminal. Moves into the border or a wall leave the agent in
//! place.
//!
//! * `DistinctPolicies`: open grid, reward 1 in the goal.
//! * `Doorway`: a wall across the middle row with one open cell in the
//!   middle column, reward 1 in the goal. Wall cells are unreachable states
//!   whose rows are self-loops.
//! * `KeyAction`: open grid; the only reward is 1 for choosing `right` in the
//!   upper-left key cell.
//! * `NDirection`: a corridor of `length` positions followed by a terminal
//!   goal. In each position exactly one of `n_directions` actions advances
//!   (reward 1); every other action stays put (reward 0).

use serde::{Deserialize, Serialize};

use super::{apply_stochasticity, Reward, TabularMdp, TabularPolicy};
use crate::error::{invalid, Result};
use crate::rng::derive_seed;

pub const UP: usize = 0;
pub const DOWN: usize = 1;
pub const LEFT: usize = 2;
pub const RIGHT: usize = 3;

/// Episode length used for the N-direction corridor.
pub const NDIRECTION_HORIZON: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    DistinctPolicies,
    Doorway,
    KeyAction,
    NDirection,
}

impl GridKind {
    pub const FIGURE_KINDS: [GridKind; 3] =
        [GridKind::DistinctPolicies, GridKind::Doorway, GridKind::KeyAction];

    pub fn name(self) -> &'static str {
        match self {
            GridKind::DistinctPolicies => "distinct-policies",
            GridKind::Doorway => "doorway",
            GridKind::KeyAction => "key-action",
            GridKind::NDirection => "n-direction",
        }
    }
}

impl std::fmt::Display for GridKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GridKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        [GridKind::DistinctPolicies, GridKind::Doorway, GridKind::KeyAction, GridKind::NDirection]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown gridworld '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Side of the square grids.
    pub side: usize,
    /// Number of corridor positions before the goal (N-direction only).
    pub length: usize,
    /// Number of actions of the N-direction corridor.
    pub n_directions: usize,
    /// Action-slip probability, see [`apply_stochasticity`].
    pub slip: f64,
    pub discount: f64,
    /// Seeds which action is correct at each corridor position.
    pub layout_seed: u64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            side: 5,
            length: 25,
            n_directions: 5,
            slip: 0.0,
            discount: 0.95,
            layout_seed: 0,
        }
    }
}

struct Grid {
    side: usize,
    walls: Vec<bool>,
}

impl Grid {
    fn idx(&self, r: usize, c: usize) -> usize {
        r * self.side + c
    }

    fn start(&self) -> usize {
        self.idx(self.side - 1, 0)
    }

    fn goal(&self) -> usize {
        self.idx(0, self.side - 1)
    }

    fn step(&self, s: usize, a: usize) -> usize {
        if self.walls[s] {
            return s;
        }
        let (r, c) = (s / self.side, s % self.side);
        let (nr, nc) = match a {
            UP if r > 0 => (r - 1, c),
            DOWN if r + 1 < self.side => (r + 1, c),
            LEFT if c > 0 => (r, c - 1),
            RIGHT if c + 1 < self.side => (r, c + 1),
            _ => (r, c),
        };
        let t = self.idx(nr, nc);
        if self.walls[t] {
            s
        } else {
            t
        }
    }

    fn door(&self) -> (usize, usize) {
        (self.side / 2, self.side / 2)
    }

    fn doorway(side: usize) -> Self {
        let mut walls = vec![false; side * side];
        let (wr, dc) = (side / 2, side / 2);
        for c in 0..side {
            if c != dc {
                walls[wr * side + c] = true;
            }
        }
        Self { side, walls }
    }

    fn open(side: usize) -> Self {
        Self { side, walls: vec![false; side * side] }
    }

    fn deterministic_transitions(&self) -> Vec<f64> {
        let n = self.side * self.side;
        let goal = self.goal();
        let mut t = vec![0.0; n * 4 * n];
        for s in 0..n {
            for a in 0..4 {
                let next = if s == goal { s } else { self.step(s, a) };
                t[(s * 4 + a) * n + next] = 1.0;
            }
        }
        t
    }

    /// Breadth-first distances to the goal over open cells.
    fn goal_distances(&self) -> Vec<usize> {
        let n = self.side * self.side;
        let mut dist = vec![usize::MAX; n];
        let goal = self.goal();
        dist[goal] = 0;
        let mut queue = std::collections::VecDeque::from([goal]);
        while let Some(s) = queue.pop_front() {
            for p in 0..n {
                if dist[p] == usize::MAX && !self.walls[p] && (0..4).any(|a| self.step(p, a) == s) {
                    dist[p] = dist[s] + 1;
                    queue.push_back(p);
                }
            }
        }
        dist
    }
}

fn validate(kind: GridKind, params: &GridParams) -> Result<()> {
    if !(0.0..=1.0).contains(&params.slip) {
        return Err(invalid(format!("slip {} outside [0, 1]", params.slip)));
    }
    match kind {
        GridKind::NDirection => {
            if params.n_directions < 2 {
                return Err(invalid("n-direction corridor needs at least 2 actions"));
            }
            if params.length < 1 {
                return Err(invalid("corridor length must be at least 1"));
            }
        }
        GridKind::Doorway if params.side < 3 => {
            return Err(invalid(format!("doorway grid side {} must be at least 3", params.side)));
        }
        _ if params.side < 2 => {
            return Err(invalid(format!("grid side {} must be at least 2", params.side)));
        }
        _ => {}
    }
    Ok(())
}

/// The action that advances the corridor at position `s`.
pub fn correct_action(params: &GridParams, s: usize) -> usize {
    (derive_seed(params.layout_seed, &[s as u64]) % params.n_directions as u64) as usize
}

/// Key cell of the key-action grid.
pub fn key_state(params: &GridParams) -> usize {
    let _ = params;
    0
}

pub fn build_gridworld(kind: GridKind, params: &GridParams) -> Result<TabularMdp> {
    validate(kind, params)?;
    let base = match kind {
        GridKind::NDirection => build_corridor(params)?,
        GridKind::DistinctPolicies | GridKind::Doorway | GridKind::KeyAction => {
            let grid = if kind == GridKind::Doorway { Grid::doorway(params.side) } else { Grid::open(params.side) };
            let n = params.side * params.side;
            let goal = grid.goal();
            let reward = if kind == GridKind::KeyAction {
                let mut r = vec![0.0; n * 4];
                r[key_state(params) * 4 + RIGHT] = 1.0;
                Reward::StateAction(r)
            } else {
                let mut r = vec![0.0; n];
                r[goal] = 1.0;
                Reward::State(r)
            };
            let mut rho = vec![0.0; n];
            rho[grid.start()] = 1.0;
            let mut terminal = vec![false; n];
            terminal[goal] = true;
            TabularMdp::new(n, 4, grid.deterministic_transitions(), reward, params.discount, rho, terminal)?
        }
    };
    apply_stochasticity(&base, params.slip)
}

fn build_corridor(params: &GridParams) -> Result<TabularMdp> {
    let len = params.length;
    let na = params.n_directions;
    let n = len + 1;
    let mut t = vec![0.0; n * na * n];
    let mut r = vec![0.0; n * na];
    for s in 0..n {
        for a in 0..na {
            let next = if s < len && a == correct_action(params, s) {
                r[s * na + a] = 1.0;
                s + 1
            } else {
                s
            };
            t[(s * na + a) * n + next] = 1.0;
        }
    }
    let mut rho = vec![0.0; n];
    rho[0] = 1.0;
    let mut terminal = vec![false; n];
    terminal[len] = true;
    TabularMdp::new(n, na, t, Reward::StateAction(r), params.discount, rho, terminal)
}

/// The two deterministic policies compared on each figure gridworld.
///
/// * `DistinctPolicies`: the first walks to the left edge, up it, then right
///   along the top; the second walks down to the bottom edge, right along it,
///   then up the right edge.
/// * `Doorway`: the first follows a shortest path through the door; the
///   second agrees everywhere except the cell just below the door, where it
///   steps back down.
/// * `KeyAction`: the first goes up then right along the top (through the
///   key cell); the second goes right then up.
pub fn reference_policies(kind: GridKind, params: &GridParams) -> Result<(TabularPolicy, TabularPolicy)> {
    validate(kind, params)?;
    let side = params.side;
    let n = side * side;
    let cell = |s: usize| (s / side, s % side);
    let (a, b): (Vec<usize>, Vec<usize>) = match kind {
        GridKind::DistinctPolicies => (0..n)
            .map(|s| {
                let (r, c) = cell(s);
                let first = if r == 0 { RIGHT } else if c == 0 { UP } else { LEFT };
                let second = if c == side - 1 { UP } else if r == side - 1 { RIGHT } else { DOWN };
                (first, second)
            })
            .unzip(),
        GridKind::Doorway => {
            let grid = Grid::doorway(side);
            let dist = grid.goal_distances();
            let first: Vec<usize> = (0..n)
                .map(|s| {
                    if grid.walls[s] || dist[s] == 0 || dist[s] == usize::MAX {
                        return UP;
                    }
                    [UP, RIGHT, DOWN, LEFT]
                        .into_iter()
                        .find(|&a| dist[grid.step(s, a)] + 1 == dist[s])
                        .unwrap_or(UP)
                })
                .collect();
            let (dr, dc) = grid.door();
            let below = grid.idx(dr + 1, dc);
            let mut second = first.clone();
            second[below] = DOWN;
            (first, second)
        }
        GridKind::KeyAction => (0..n)
            .map(|s| {
                let (r, c) = cell(s);
                let first = if r == 0 { RIGHT } else { UP };
                let second = if c == side - 1 { UP } else { RIGHT };
                (first, second)
            })
            .unzip(),
        GridKind::NDirection => {
            return Err(invalid("the corridor has no reference policy pair"));
        }
    };
    Ok((TabularPolicy::deterministic(4, &a)?, TabularPolicy::deterministic(4, &b)?))
}

/// The optimal corridor policy (always the advancing action).
pub fn corridor_optimal_policy(params: &GridParams) -> Result<TabularPolicy> {
    validate(GridKind::NDirection, params)?;
    let actions: Vec<usize> = (0..=params.length).map(|s| correct_action(params, s)).collect();
    TabularPolicy::deterministic(params.n_directions, &actions)
}
