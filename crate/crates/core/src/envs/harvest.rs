use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_joint_action, EnvError, EnvSpec, Environment, StepResult};

const VIEW_RADIUS: isize = 2;
const VIEW_SIDE: usize = 2 * VIEW_RADIUS as usize + 1;
const VIEW_CHANNELS: usize = 3;
const N_ACTIONS: usize = 5;
const MAX_LAYOUT_ATTEMPTS: usize = 10_000;
const MAX_ITEMS_PER_AGENT: usize = 16;

/// Action offsets: up, down, left, right, stay.
const MOVES: [(isize, isize); N_ACTIONS] = [(0, -1), (0, 1), (-1, 0), (1, 0), (0, 0)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestConfig {
    pub width: usize,
    pub height: usize,
    /// Item count per agent; the agent count is the length.
    pub items_per_agent: Vec<usize>,
    pub episode_limit: usize,
}

impl HarvestConfig {
    /// Four agents on 6×6 with two items each, 30 steps.
    pub fn symmetric() -> Self {
        Self {
            width: 6,
            height: 6,
            items_per_agent: vec![2, 2, 2, 2],
            episode_limit: 30,
        }
    }

    /// Same grid with unequal item counts `[4, 2, 1, 1]`.
    pub fn asymmetric() -> Self {
        Self {
            items_per_agent: vec![4, 2, 1, 1],
            ..Self::symmetric()
        }
    }

    pub fn n_agents(&self) -> usize {
        self.items_per_agent.len()
    }

    fn validate(&self) -> Result<(), EnvError> {
        let cells = self.width * self.height;
        let items: usize = self.items_per_agent.iter().sum();
        if self.width == 0 || self.height == 0 || self.episode_limit == 0 {
            return Err(EnvError::InvalidLayout(
                "empty grid or zero step limit".into(),
            ));
        }
        if self.n_agents() == 0 {
            return Err(EnvError::InvalidLayout("no agents".into()));
        }
        if self
            .items_per_agent
            .iter()
            .any(|&k| k > MAX_ITEMS_PER_AGENT)
        {
            return Err(EnvError::InvalidLayout(format!(
                "at most {MAX_ITEMS_PER_AGENT} items per agent"
            )));
        }
        if self.n_agents() + items > cells {
            return Err(EnvError::InvalidLayout(format!(
                "{} agents and {items} items do not fit in {cells} cells",
                self.n_agents()
            )));
        }
        Ok(())
    }
}

/// Start cells and item placement. Item `(x, y, owner)` can only be collected
/// by agent `owner` and blocks everyone else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestLayout {
    pub width: usize,
    pub height: usize,
    pub agent_starts: Vec<(usize, usize)>,
    pub items: Vec<(usize, usize, usize)>,
}

impl HarvestLayout {
    fn validate(&self) -> Result<(), EnvError> {
        let n = self.agent_starts.len();
        if n == 0 {
            return Err(EnvError::InvalidLayout("no agents".into()));
        }
        let mut occupied = vec![false; self.width * self.height];
        let inside = |x: usize, y: usize| x < self.width && y < self.height;
        for &(x, y) in &self.agent_starts {
            if !inside(x, y) {
                return Err(EnvError::InvalidLayout(format!(
                    "agent start ({x}, {y}) off grid"
                )));
            }
        }
        for &(x, y, owner) in &self.items {
            if !inside(x, y) || owner >= n {
                return Err(EnvError::InvalidLayout(format!(
                    "bad item ({x}, {y}, {owner})"
                )));
            }
            if self.agent_starts.contains(&(x, y)) || occupied[y * self.width + x] {
                return Err(EnvError::InvalidLayout(format!(
                    "cell ({x}, {y}) used twice"
                )));
            }
            occupied[y * self.width + x] = true;
        }
        Ok(())
    }

    /// Random layout with every item inside its owner's starting view window
    /// and every agent able to reach all of its items in time.
    fn generate(config: &HarvestConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cells: Vec<(usize, usize)> = (0..config.height)
            .flat_map(|y| (0..config.width).map(move |x| (x, y)))
            .collect();
        let n = config.n_agents();
        'attempt: for _ in 0..MAX_LAYOUT_ATTEMPTS {
            cells.shuffle(&mut rng);
            let agent_starts = cells[..n].to_vec();
            let mut taken: Vec<(usize, usize)> = agent_starts.clone();
            let mut items = Vec::new();
            for (owner, &count) in config.items_per_agent.iter().enumerate() {
                let (ax, ay) = agent_starts[owner];
                let mut near: Vec<(usize, usize)> = cells
                    .iter()
                    .copied()
                    .filter(|&(x, y)| {
                        x.abs_diff(ax) as isize <= VIEW_RADIUS
                            && y.abs_diff(ay) as isize <= VIEW_RADIUS
                            && !taken.contains(&(x, y))
                    })
                    .collect();
                if near.len() < count {
                    continue 'attempt;
                }
                near.shuffle(&mut rng);
                for &(x, y) in &near[..count] {
                    items.push((x, y, owner));
                    taken.push((x, y));
                }
            }
            let layout = HarvestLayout {
                width: config.width,
                height: config.height,
                agent_starts,
                items,
            };
            if (0..n).all(|a| {
                layout
                    .min_collection_steps(a)
                    .is_some_and(|s| s <= config.episode_limit)
            }) {
                return Ok(layout);
            }
        }
        Err(EnvError::InvalidLayout(format!(
            "no solvable layout after {MAX_LAYOUT_ATTEMPTS} attempts"
        )))
    }

    /// Fewest steps for `agent` alone to collect all of its items, with every
    /// foreign item treated as a permanent wall. `None` if impossible.
    pub fn min_collection_steps(&self, agent: usize) -> Option<usize> {
        let own: Vec<(usize, usize)> = self
            .items
            .iter()
            .filter(|i| i.2 == agent)
            .map(|&(x, y, _)| (x, y))
            .collect();
        let blocked: Vec<bool> = {
            let mut b = vec![false; self.width * self.height];
            for &(x, y, owner) in &self.items {
                if owner != agent {
                    b[y * self.width + x] = true;
                }
            }
            b
        };
        let full = (1usize << own.len()) - 1;
        let cells = self.width * self.height;
        let mut dist = vec![usize::MAX; cells << own.len()];
        let (sx, sy) = self.agent_starts[agent];
        let start = (sy * self.width + sx) << own.len();
        dist[start] = 0;
        let mut queue = VecDeque::from([(sx, sy, 0usize)]);
        while let Some((x, y, mask)) = queue.pop_front() {
            let d = dist[((y * self.width + x) << own.len()) | mask];
            if mask == full {
                return Some(d);
            }
            for &(dx, dy) in &MOVES[..4] {
                let Some((nx, ny)) = offset(x, y, dx, dy, self.width, self.height) else {
                    continue;
                };
                if blocked[ny * self.width + nx] {
                    continue;
                }
                let mut next_mask = mask;
                if let Some(k) = own.iter().position(|&c| c == (nx, ny)) {
                    next_mask |= 1 << k;
                }
                let key = ((ny * self.width + nx) << own.len()) | next_mask;
                if dist[key] == usize::MAX {
                    dist[key] = d + 1;
                    queue.push_back((nx, ny, next_mask));
                }
            }
        }
        None
    }
}

fn offset(x: usize, y: usize, dx: isize, dy: isize, w: usize, h: usize) -> Option<(usize, usize)> {
    let nx = x.checked_add_signed(dx)?;
    let ny = y.checked_add_signed(dy)?;
    (nx < w && ny < h).then_some((nx, ny))
}

/// Grid harvest with one item type per agent.
///
/// Moving onto an own item collects it for +1 to that agent. Foreign items
/// and the grid boundary make the corresponding move unavailable. Agents may
/// share cells. The episode terminates once every item is collected and is
/// cut off at the step limit otherwise.
///
/// Each agent observes a 5×5 window centred on itself with three channels
/// (own item, foreign item, outside the grid) followed by a one-hot of its
/// own type. The state holds every agent's normalized position and remaining
/// item fraction, then item presence for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousHarvest {
    config: HarvestConfig,
    fixed_layout: Option<HarvestLayout>,
    initial_items: Vec<usize>,
    positions: Vec<(usize, usize)>,
    /// Owner of the item in each cell, row-major.
    grid: Vec<Option<usize>>,
    remaining: Vec<usize>,
    t: usize,
    done: bool,
}

impl HeterogeneousHarvest {
    /// With `layout_seed` the layout is drawn once and reused by every reset;
    /// without it each reset draws a layout from its own seed.
    pub fn new(config: HarvestConfig, layout_seed: Option<u64>) -> Result<Self, EnvError> {
        config.validate()?;
        let fixed_layout = layout_seed
            .map(|s| HarvestLayout::generate(&config, s))
            .transpose()?;
        Ok(Self::blank(config, fixed_layout))
    }

    /// Uses an explicit layout for every episode.
    pub fn from_layout(layout: HarvestLayout, episode_limit: usize) -> Result<Self, EnvError> {
        layout.validate()?;
        let mut items_per_agent = vec![0; layout.agent_starts.len()];
        for &(_, _, owner) in &layout.items {
            items_per_agent[owner] += 1;
        }
        let config = HarvestConfig {
            width: layout.width,
            height: layout.height,
            items_per_agent,
            episode_limit,
        };
        config.validate()?;
        Ok(Self::blank(config, Some(layout)))
    }

    fn blank(config: HarvestConfig, fixed_layout: Option<HarvestLayout>) -> Self {
        let n = config.n_agents();
        Self {
            initial_items: config.items_per_agent.clone(),
            grid: vec![None; config.width * config.height],
            positions: vec![(0, 0); n],
            remaining: vec![0; n],
            config,
            fixed_layout,
            t: 0,
            done: true,
        }
    }

    pub fn config(&self) -> &HarvestConfig {
        &self.config
    }

    /// The layout `reset(seed)` would use.
    pub fn layout_for(&self, seed: u64) -> Result<HarvestLayout, EnvError> {
        match &self.fixed_layout {
            Some(l) => Ok(l.clone()),
            None => HarvestLayout::generate(&self.config, seed),
        }
    }

    /// Total item count when every agent can collect all its items within the
    /// step limit even with foreign items as walls; that is then the exact
    /// optimum. Errors for layouts without such a guarantee.
    pub fn certified_optimum(&self, seed: u64) -> Result<usize, EnvError> {
        let layout = self.layout_for(seed)?;
        for agent in 0..layout.agent_starts.len() {
            match layout.min_collection_steps(agent) {
                Some(s) if s <= self.config.episode_limit => {}
                _ => {
                    return Err(EnvError::InvalidLayout(format!(
                        "agent {agent} cannot be shown to collect all items in time"
                    )))
                }
            }
        }
        Ok(layout.items.len())
    }

    fn mask(&self, agent: usize) -> Vec<bool> {
        let (x, y) = self.positions[agent];
        MOVES
            .iter()
            .map(
                |&(dx, dy)| match offset(x, y, dx, dy, self.config.width, self.config.height) {
                    Some((nx, ny)) => {
                        self.grid[ny * self.config.width + nx].is_none_or(|owner| owner == agent)
                    }
                    None => false,
                },
            )
            .collect()
    }

    fn observation(&self, agent: usize) -> Vec<f64> {
        let n = self.config.n_agents();
        let window = VIEW_SIDE * VIEW_SIDE;
        let mut obs = vec![0.0; VIEW_CHANNELS * window + n];
        let (x, y) = self.positions[agent];
        for (k, dy) in (-VIEW_RADIUS..=VIEW_RADIUS).enumerate() {
            for (j, dx) in (-VIEW_RADIUS..=VIEW_RADIUS).enumerate() {
                let cell = k * VIEW_SIDE + j;
                match offset(x, y, dx, dy, self.config.width, self.config.height) {
                    None => obs[2 * window + cell] = 1.0,
                    Some((cx, cy)) => match self.grid[cy * self.config.width + cx] {
                        Some(owner) if owner == agent => obs[cell] = 1.0,
                        Some(_) => obs[window + cell] = 1.0,
                        None => {}
                    },
                }
            }
        }
        obs[VIEW_CHANNELS * window + agent] = 1.0;
        obs
    }

    fn state(&self) -> Vec<f64> {
        let scale = |v: usize, extent: usize| {
            if extent > 1 {
                v as f64 / (extent - 1) as f64
            } else {
                0.0
            }
        };
        let mut s = Vec::with_capacity(self.spec().state_dim);
        for (agent, &(x, y)) in self.positions.iter().enumerate() {
            s.push(scale(x, self.config.width));
            s.push(scale(y, self.config.height));
            s.push(if self.initial_items[agent] == 0 {
                0.0
            } else {
                self.remaining[agent] as f64 / self.initial_items[agent] as f64
            });
        }
        s.extend(
            self.grid
                .iter()
                .map(|c| if c.is_some() { 1.0 } else { 0.0 }),
        );
        s
    }

    fn result(&self, agent_rewards: Vec<f64>, terminated: bool) -> StepResult {
        let n = self.config.n_agents();
        StepResult {
            observations: (0..n).map(|a| self.observation(a)).collect(),
            team_reward: agent_rewards.iter().sum(),
            agent_rewards,
            state: self.state(),
            done: self.done,
            terminated,
            avail_actions: (0..n).map(|a| self.mask(a)).collect(),
        }
    }
}

impl Environment for HeterogeneousHarvest {
    fn spec(&self) -> EnvSpec {
        let n = self.config.n_agents();
        EnvSpec {
            n_agents: n,
            obs_dim: VIEW_CHANNELS * VIEW_SIDE * VIEW_SIDE + n,
            state_dim: 3 * n + self.config.width * self.config.height,
            n_actions: N_ACTIONS,
            episode_limit: self.config.episode_limit,
        }
    }

    fn reset(&mut self, seed: u64) -> StepResult {
        let layout = self
            .layout_for(seed)
            .expect("configuration validated at construction");
        self.grid.iter_mut().for_each(|c| *c = None);
        self.remaining = vec![0; self.config.n_agents()];
        for &(x, y, owner) in &layout.items {
            self.grid[y * self.config.width + x] = Some(owner);
            self.remaining[owner] += 1;
        }
        self.initial_items = self.remaining.clone();
        self.positions = layout.agent_starts;
        self.t = 0;
        self.done = false;
        self.result(vec![0.0; self.config.n_agents()], false)
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult, EnvError> {
        check_joint_action(self, actions)?;
        let mut rewards = vec![0.0; self.config.n_agents()];
        for (agent, &action) in actions.iter().enumerate() {
            let (x, y) = self.positions[agent];
            let (dx, dy) = MOVES[action];
            let (nx, ny) = offset(x, y, dx, dy, self.config.width, self.config.height)
                .expect("availability checked");
            let cell = &mut self.grid[ny * self.config.width + nx];
            if *cell == Some(agent) {
                *cell = None;
                self.remaining[agent] -= 1;
                rewards[agent] = 1.0;
            }
            self.positions[agent] = (nx, ny);
        }
        self.t += 1;
        let terminated = self.remaining.iter().all(|&r| r == 0);
        self.done = terminated || self.t >= self.config.episode_limit;
        Ok(self.result(rewards, terminated))
    }

    fn available_actions(&self, agent: usize) -> Result<Vec<bool>, EnvError> {
        if agent >= self.config.n_agents() {
            return Err(EnvError::InvalidAgent(agent));
        }
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        Ok(self.mask(agent))
    }

    fn is_done(&self) -> bool {
        self.done
    }
}
