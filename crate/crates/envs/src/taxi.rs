//! Grid taxi with a random sparse maze and a single stochastic passenger.
//!
//! Coordinates are `(x, y)` with `x` the column and `y` the row, `y = 0`
//! at the top. Passengers appear in the top-left `zone_size`² zone and
//! want to go to the bottom-right one.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sage_pddl::{Atom, Domain, GroundStep, SymbolicState, TypedObject};
use serde::{Deserialize, Serialize};

use crate::domains::taxi_domain;
use crate::{EnvError, StepResult, SymbolicEnv};

pub const PASSENGER: &str = "p0";
pub const TAXI: &str = "taxi";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn name(self) -> String {
        format!("cell_{}_{}", self.x, self.y)
    }

    pub fn parse(name: &str) -> Option<Cell> {
        let rest = name.strip_prefix("cell_")?;
        let (x, y) = rest.split_once('_')?;
        Some(Cell::new(x.parse().ok()?, y.parse().ok()?))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaxiAction {
    Up,
    Down,
    Left,
    Right,
    Pickup,
    Dropoff,
    Noop,
}

impl TaxiAction {
    pub const ALL: [TaxiAction; 7] = [
        TaxiAction::Up,
        TaxiAction::Down,
        TaxiAction::Left,
        TaxiAction::Right,
        TaxiAction::Pickup,
        TaxiAction::Dropoff,
        TaxiAction::Noop,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|a| *a == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            TaxiAction::Up => "up",
            TaxiAction::Down => "down",
            TaxiAction::Left => "left",
            TaxiAction::Right => "right",
            TaxiAction::Pickup => "pickup",
            TaxiAction::Dropoff => "dropoff",
            TaxiAction::Noop => "noop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PassengerStatus {
    Waiting(Cell),
    InTaxi,
    /// Stays on record until the next passenger replaces it.
    Delivered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passenger {
    pub status: PassengerStatus,
    pub destination: Cell,
}

impl Passenger {
    pub fn is_active(&self) -> bool {
        !matches!(self.status, PassengerStatus::Delivered)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxiConfig {
    pub size: usize,
    pub spawn_prob: f64,
    pub zone_size: usize,
    pub episode_len: usize,
    pub random_maze: bool,
    #[serde(default = "default_wall_prob")]
    pub wall_prob: f64,
}

fn default_wall_prob() -> f64 {
    0.2
}

/// Walls of the fixed small map, placed like the classic 5×5 taxi barriers.
pub const SMALL_WALLS: [(usize, usize); 4] = [(2, 0), (2, 1), (1, 3), (1, 4)];

impl TaxiConfig {
    pub fn small() -> Self {
        Self {
            size: 5,
            spawn_prob: 0.12,
            zone_size: 2,
            episode_len: 1000,
            random_maze: false,
            wall_prob: default_wall_prob(),
        }
    }

    pub fn medium() -> Self {
        Self {
            size: 10,
            spawn_prob: 0.08,
            zone_size: 2,
            episode_len: 2000,
            random_maze: true,
            wall_prob: default_wall_prob(),
        }
    }

    pub fn large() -> Self {
        Self {
            size: 20,
            spawn_prob: 0.05,
            zone_size: 3,
            episode_len: 2000,
            random_maze: true,
            wall_prob: default_wall_prob(),
        }
    }

    pub fn preset(name: &str) -> Result<Self, EnvError> {
        match name {
            "taxi-small" => Ok(Self::small()),
            "taxi-medium" => Ok(Self::medium()),
            "taxi-large" => Ok(Self::large()),
            other => Err(EnvError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.size == 0 {
            return bad("size must be positive");
        }
        if self.zone_size == 0 || self.zone_size > self.size {
            return bad("zone_size must be in 1..=size");
        }
        if !(0.0..=1.0).contains(&self.spawn_prob) {
            return bad("spawn_prob must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.wall_prob) {
            return bad("wall_prob must be in [0, 1)");
        }
        if self.episode_len == 0 {
            return bad("episode_len must be at least 1");
        }
        if !self.random_maze && self.size == 5 && self.zone_size > 2 {
            return bad("the fixed small map needs zone_size <= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TaxiEnv {
    config: TaxiConfig,
    walls: Vec<bool>,
    taxi: Cell,
    passenger: Option<Passenger>,
    frame: usize,
    delivered: usize,
    rng: ChaCha8Rng,
}

/// One JSON-lines trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxiTraceRecord {
    pub frame: usize,
    pub action: TaxiAction,
    pub reward: f64,
    pub taxi: Cell,
    pub passenger: Option<Passenger>,
    pub done: bool,
}

pub const PLANES: usize = 5;

impl TaxiEnv {
    pub fn new(config: TaxiConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let n = config.size;
        let mut env = Self {
            walls: vec![false; n * n],
            taxi: Cell::new(0, 0),
            passenger: None,
            frame: 0,
            delivered: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn config(&self) -> &TaxiConfig {
        &self.config
    }

    pub fn size(&self) -> usize {
        self.config.size
    }

    pub fn taxi(&self) -> Cell {
        self.taxi
    }

    pub fn passenger(&self) -> Option<Passenger> {
        self.passenger
    }

    pub fn delivered(&self) -> usize {
        self.delivered
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls[c.y * self.config.size + c.x]
    }

    pub fn in_start_zone(&self, c: Cell) -> bool {
        c.x < self.config.zone_size && c.y < self.config.zone_size
    }

    pub fn in_destination_zone(&self, c: Cell) -> bool {
        let lo = self.config.size - self.config.zone_size;
        c.x >= lo && c.y >= lo
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let n = self.config.size;
        (0..n).flat_map(move |y| (0..n).map(move |x| Cell::new(x, y)))
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        self.cells().filter(|c| !self.is_wall(*c)).collect()
    }

    /// In-bounds 4-neighbour of `c` in the direction of a movement action.
    pub fn neighbour(&self, c: Cell, action: TaxiAction) -> Option<Cell> {
        let n = self.config.size;
        match action {
            TaxiAction::Up if c.y > 0 => Some(Cell::new(c.x, c.y - 1)),
            TaxiAction::Down if c.y + 1 < n => Some(Cell::new(c.x, c.y + 1)),
            TaxiAction::Left if c.x > 0 => Some(Cell::new(c.x - 1, c.y)),
            TaxiAction::Right if c.x + 1 < n => Some(Cell::new(c.x + 1, c.y)),
            _ => None,
        }
    }

    fn open_neighbours(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        [TaxiAction::Up, TaxiAction::Down, TaxiAction::Left, TaxiAction::Right]
            .into_iter()
            .filter_map(move |a| self.neighbour(c, a))
            .filter(|n| !self.is_wall(*n))
    }

    fn connected(&self) -> bool {
        let free = self.free_cells();
        let Some(&start) = free.first() else {
            return false;
        };
        let n = self.config.size;
        let mut seen = vec![false; n * n];
        seen[start.y * n + start.x] = true;
        let mut queue = VecDeque::from([start]);
        let mut count = 1;
        while let Some(c) = queue.pop_front() {
            for nb in self.open_neighbours(c).collect::<Vec<_>>() {
                if !seen[nb.y * n + nb.x] {
                    seen[nb.y * n + nb.x] = true;
                    count += 1;
                    queue.push_back(nb);
                }
            }
        }
        count == free.len()
    }

    fn generate_walls(&mut self) {
        let n = self.config.size;
        if !self.config.random_maze {
            self.walls = vec![false; n * n];
            if n == 5 {
                for (x, y) in SMALL_WALLS {
                    self.walls[y * n + x] = true;
                }
            }
            return;
        }
        loop {
            for y in 0..n {
                for x in 0..n {
                    let c = Cell::new(x, y);
                    let zone = self.in_start_zone(c) || self.in_destination_zone(c);
                    self.walls[y * n + x] = !zone && self.rng.random_bool(self.config.wall_prob);
                }
            }
            if self.connected() {
                return;
            }
        }
    }

    fn zone_cell(&mut self, destination: bool) -> Cell {
        let k = self.config.zone_size;
        let base = if destination { self.config.size - k } else { 0 };
        Cell::new(base + self.rng.random_range(0..k), base + self.rng.random_range(0..k))
    }

    fn maybe_spawn(&mut self) {
        if self.passenger.is_some_and(|p| p.is_active()) {
            return;
        }
        if self.rng.random_bool(self.config.spawn_prob) {
            let origin = self.zone_cell(false);
            let destination = self.zone_cell(true);
            self.passenger = Some(Passenger {
                status: PassengerStatus::Waiting(origin),
                destination,
            });
        }
    }

    pub fn step(&mut self, action: TaxiAction) -> Result<StepResult, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeOver);
        }
        // A passenger dropped off this frame stays on record as delivered
        // until the next frame, so the delivery is visible symbolically.
        let vacant = !self.passenger.is_some_and(|p| p.is_active());
        let mut reward = 0.0;
        match action {
            TaxiAction::Up | TaxiAction::Down | TaxiAction::Left | TaxiAction::Right => {
                if let Some(next) = self.neighbour(self.taxi, action) {
                    if !self.is_wall(next) {
                        self.taxi = next;
                    }
                }
            }
            TaxiAction::Pickup => {
                if let Some(p) = &mut self.passenger {
                    if p.status == PassengerStatus::Waiting(self.taxi) {
                        p.status = PassengerStatus::InTaxi;
                    }
                }
            }
            TaxiAction::Dropoff => {
                if let Some(p) = &mut self.passenger {
                    if p.status == PassengerStatus::InTaxi && p.destination == self.taxi {
                        p.status = PassengerStatus::Delivered;
                        reward = 1.0;
                        self.delivered += 1;
                    }
                }
            }
            TaxiAction::Noop => {}
        }
        self.frame += 1;
        if vacant {
            self.maybe_spawn();
        }
        Ok(StepResult {
            reward,
            done: self.is_done(),
        })
    }

    pub fn trace_record(&self, action: TaxiAction, result: StepResult) -> TaxiTraceRecord {
        TaxiTraceRecord {
            frame: self.frame,
            action,
            reward: result.reward,
            taxi: self.taxi,
            passenger: self.passenger,
            done: result.done,
        }
    }

    /// Atomic action realising a ground taxi step, when the step's
    /// precondition matches the current position.
    pub fn action_for_step(&self, step: &GroundStep) -> Option<TaxiAction> {
        match step.operator.as_str() {
            "move" => {
                let from = Cell::parse(step.args.first()?)?;
                let to = Cell::parse(step.args.get(1)?)?;
                [TaxiAction::Up, TaxiAction::Down, TaxiAction::Left, TaxiAction::Right]
                    .into_iter()
                    .find(|a| self.neighbour(from, *a) == Some(to))
            }
            "pickup" => Some(TaxiAction::Pickup),
            "dropoff" => Some(TaxiAction::Dropoff),
            _ => None,
        }
    }

    /// Planes stacked as `[plane][y][x]`, followed by the time-remaining scalar.
    pub fn encode(&self) -> Vec<f32> {
        let n = self.config.size;
        let mut out = vec![0.0f32; PLANES * n * n + 1];
        let idx = |plane: usize, c: Cell| plane * n * n + c.y * n + c.x;
        for c in self.cells() {
            if self.is_wall(c) {
                out[idx(0, c)] = 1.0;
            }
        }
        out[idx(1, self.taxi)] = 1.0;
        if let Some(p) = self.passenger {
            match p.status {
                PassengerStatus::Waiting(c) => {
                    out[idx(2, c)] = 1.0;
                    out[idx(3, p.destination)] = 1.0;
                }
                PassengerStatus::InTaxi => {
                    out[idx(3, p.destination)] = 1.0;
                    out[4 * n * n..5 * n * n].fill(1.0);
                }
                PassengerStatus::Delivered => {}
            }
        }
        out[PLANES * n * n] = (self.config.episode_len - self.frame.min(self.config.episode_len)) as f32
            / self.config.episode_len as f32;
        out
    }
}

impl SymbolicEnv for TaxiEnv {
    type Action = TaxiAction;

    fn domain(&self) -> &Domain {
        taxi_domain()
    }

    fn objects(&self) -> Vec<TypedObject> {
        let mut objs: Vec<TypedObject> = self
            .free_cells()
            .into_iter()
            .map(|c| TypedObject::new(c.name(), "cell"))
            .collect();
        if self.passenger.is_some() {
            objs.push(TypedObject::new(PASSENGER, "passenger"));
        }
        objs
    }

    fn symbolic_state(&self) -> SymbolicState {
        let mut s = self.dynamic_state();
        for c in self.free_cells() {
            for nb in self.open_neighbours(c) {
                s.insert(Atom::new("connected", &[c.name(), nb.name()]));
            }
        }
        s
    }

    fn dynamic_state(&self) -> SymbolicState {
        let mut s = SymbolicState::new();
        s.insert(Atom::new("at", &[TAXI.to_string(), self.taxi.name()]));
        let in_taxi = matches!(self.passenger, Some(Passenger { status: PassengerStatus::InTaxi, .. }));
        if !in_taxi {
            s.insert(Atom::new::<&str>("empty", &[]));
        }
        if let Some(p) = self.passenger {
            s.insert(Atom::new("destination", &[PASSENGER.to_string(), p.destination.name()]));
            match p.status {
                PassengerStatus::Waiting(c) => s.insert(Atom::new("at", &[PASSENGER.to_string(), c.name()])),
                PassengerStatus::InTaxi => s.insert(Atom::new("in-taxi", &[PASSENGER])),
                PassengerStatus::Delivered => s.insert(Atom::new("delivered", &[PASSENGER])),
            }
        }
        s
    }

    fn observation(&self) -> Vec<f32> {
        self.encode()
    }

    fn observation_len(&self) -> usize {
        PLANES * self.config.size * self.config.size + 1
    }

    fn step(&mut self, action: TaxiAction) -> Result<StepResult, EnvError> {
        TaxiEnv::step(self, action)
    }

    fn noop(&self) -> TaxiAction {
        TaxiAction::Noop
    }

    fn frame(&self) -> usize {
        self.frame
    }

    fn is_done(&self) -> bool {
        self.frame >= self.config.episode_len
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.generate_walls();
        let free = self.free_cells();
        self.taxi = free[self.rng.random_range(0..free.len())];
        self.passenger = None;
        self.frame = 0;
        self.delivered = 0;
    }
}
