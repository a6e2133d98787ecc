//! Crafting world: a grid of 3×3-cell rooms separated by one-cell walls,
//! each wall between neighbouring rooms pierced by a single door that may
//! be blocked by a tree, stone or iron. The agent is a point that turns,
//! accelerates and drifts; it harvests by facing a cell and using it.
//!
//! World cell `(cx, cy)` spans `[cx, cx+1) × [cy, cy+1)`. Room `(rx, ry)`
//! covers cells `4rx+1 ..= 4rx+3` by `4ry+1 ..= 4ry+3`.

use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sage_pddl::{Atom, Domain, FluentTerm, GroundStep, Number, SymbolicState, TypedObject};
use serde::{Deserialize, Serialize};

use crate::domains::{craft_domain, CRAFT_ROOMS_TOML};
use crate::{EnvError, StepResult, SymbolicEnv};

pub const ROOM_CELLS: usize = 3;
const PITCH: usize = ROOM_CELLS + 1;
/// How far ahead of the agent the `use` action reaches.
pub const REACH: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomType {
    pub name: String,
    pub weight: f64,
    pub coin_weight: f64,
    pub trees: usize,
    pub stone: usize,
    pub iron: usize,
}

impl RoomType {
    pub fn solids(&self) -> usize {
        self.trees + self.stone + self.iron
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorDistribution {
    pub empty: f64,
    pub tree: f64,
    pub stone: f64,
    pub iron: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomTable {
    pub room: Vec<RoomType>,
    pub doors: DoorDistribution,
}

impl RoomTable {
    pub fn shipped() -> Self {
        Self::from_toml(CRAFT_ROOMS_TOML).expect("shipped room table is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        let table: RoomTable = toml::from_str(text).map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidConfig(m));
        if self.room.is_empty() {
            return bad("room table is empty".into());
        }
        for r in &self.room {
            if r.solids() > 4 {
                return bad(format!("room type `{}` has more than 4 solid objects", r.name));
            }
            if r.weight < 0.0 || r.coin_weight < 0.0 {
                return bad(format!("room type `{}` has a negative weight", r.name));
            }
        }
        if self.room.iter().map(|r| r.weight).sum::<f64>() <= 0.0 {
            return bad("room weights sum to zero".into());
        }
        let d = &self.doors;
        if [d.empty, d.tree, d.stone, d.iron].iter().any(|p| *p < 0.0) || d.empty + d.tree + d.stone + d.iron <= 0.0 {
            return bad("door distribution must be non-negative and not all zero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub turn: f64,
    pub accel: f64,
    pub drag: f64,
    pub max_speed: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            turn: PI / 8.0,
            accel: 0.05,
            drag: 0.1,
            max_speed: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CraftConfig {
    pub rooms_per_side: usize,
    pub physics: Physics,
    pub episode_len: usize,
    pub total_coins: usize,
    pub rooms: RoomTable,
}

impl CraftConfig {
    pub fn mini() -> Self {
        Self {
            rooms_per_side: 3,
            physics: Physics::default(),
            episode_len: 1500,
            total_coins: 12,
            rooms: RoomTable::shipped(),
        }
    }

    pub fn full() -> Self {
        Self {
            rooms_per_side: 5,
            physics: Physics::default(),
            episode_len: 6000,
            total_coins: 75,
            rooms: RoomTable::shipped(),
        }
    }

    pub fn preset(name: &str) -> Result<Self, EnvError> {
        match name {
            "craft-mini" => Ok(Self::mini()),
            "craft-full" => Ok(Self::full()),
            other => Err(EnvError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        self.rooms.validate()?;
        if self.rooms_per_side == 0 {
            return bad("rooms_per_side must be positive");
        }
        if self.episode_len == 0 {
            return bad("episode_len must be at least 1");
        }
        let p = &self.physics;
        if !(p.turn > 0.0 && p.accel > 0.0 && p.max_speed > 0.0 && (0.0..1.0).contains(&p.drag)) {
            return bad("physics constants out of range");
        }
        if p.max_speed >= 1.0 {
            return bad("max_speed must stay below one cell per frame");
        }
        // Worst case every room draws the most solid-heavy type.
        let max_solids = self.rooms.room.iter().map(RoomType::solids).max().unwrap_or(0);
        let capacity = self.rooms_per_side * self.rooms_per_side * (ROOM_CELLS * ROOM_CELLS - 1 - max_solids);
        if self.total_coins > capacity {
            return bad("total_coins exceeds free room cells");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Obstacle {
    Tree,
    Stone,
    Iron,
}

impl Obstacle {
    pub const ALL: [Obstacle; 3] = [Obstacle::Tree, Obstacle::Stone, Obstacle::Iron];

    pub fn name(self) -> &'static str {
        match self {
            Obstacle::Tree => "tree",
            Obstacle::Stone => "stone",
            Obstacle::Iron => "iron",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    Plank,
    Stick,
    WoodenPickaxe,
    IronPickaxe,
}

impl Recipe {
    pub const ALL: [Recipe; 4] = [Recipe::Plank, Recipe::Stick, Recipe::WoodenPickaxe, Recipe::IronPickaxe];

    pub fn from_id(id: usize) -> Result<Recipe, EnvError> {
        Self::ALL.get(id).copied().ok_or(EnvError::UnknownRecipe(id))
    }

    /// (inputs, output, output count)
    pub fn spec(self) -> (&'static [(Item, u32)], Item, u32) {
        match self {
            Recipe::Plank => (&[(Item::Wood, 1)], Item::Plank, 2),
            Recipe::Stick => (&[(Item::Plank, 1)], Item::Stick, 2),
            Recipe::WoodenPickaxe => (&[(Item::Plank, 3), (Item::Stick, 2)], Item::WoodenPickaxe, 1),
            Recipe::IronPickaxe => (&[(Item::Stone, 3), (Item::Stick, 2)], Item::IronPickaxe, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CraftAction {
    TurnLeft,
    TurnRight,
    Accelerate,
    Coast,
    Use,
    Craft(Recipe),
    Noop,
}

impl CraftAction {
    /// Action set of the learned controllers (everything except `Noop`).
    pub const CONTROL: [CraftAction; 9] = [
        CraftAction::TurnLeft,
        CraftAction::TurnRight,
        CraftAction::Accelerate,
        CraftAction::Coast,
        CraftAction::Use,
        CraftAction::Craft(Recipe::Plank),
        CraftAction::Craft(Recipe::Stick),
        CraftAction::Craft(Recipe::WoodenPickaxe),
        CraftAction::Craft(Recipe::IronPickaxe),
    ];

    pub fn craft(recipe_id: usize) -> Result<CraftAction, EnvError> {
        Recipe::from_id(recipe_id).map(CraftAction::Craft)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Item {
    Wood,
    Plank,
    Stick,
    Stone,
    Iron,
    WoodenPickaxe,
    IronPickaxe,
    Coin,
}

impl Item {
    pub const ALL: [Item; 8] = [
        Item::Wood,
        Item::Plank,
        Item::Stick,
        Item::Stone,
        Item::Iron,
        Item::WoodenPickaxe,
        Item::IronPickaxe,
        Item::Coin,
    ];

    /// Name of the matching 0-ary fluent.
    pub fn fluent(self) -> &'static str {
        match self {
            Item::Wood => "wood",
            Item::Plank => "plank",
            Item::Stick => "stick",
            Item::Stone => "stone",
            Item::Iron => "iron",
            Item::WoodenPickaxe => "wooden-pickaxe",
            Item::IronPickaxe => "iron-pickaxe",
            Item::Coin => "coin",
        }
    }

    pub fn from_fluent(name: &str) -> Option<Item> {
        Self::ALL.into_iter().find(|i| i.fluent() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Inventory {
    pub wood: u32,
    pub plank: u32,
    pub stick: u32,
    pub stone: u32,
    pub iron: u32,
    pub wooden_pickaxe: u32,
    pub iron_pickaxe: u32,
    pub coin: u32,
}

impl Inventory {
    pub fn get(&self, item: Item) -> u32 {
        match item {
            Item::Wood => self.wood,
            Item::Plank => self.plank,
            Item::Stick => self.stick,
            Item::Stone => self.stone,
            Item::Iron => self.iron,
            Item::WoodenPickaxe => self.wooden_pickaxe,
            Item::IronPickaxe => self.iron_pickaxe,
            Item::Coin => self.coin,
        }
    }

    pub fn get_mut(&mut self, item: Item) -> &mut u32 {
        match item {
            Item::Wood => &mut self.wood,
            Item::Plank => &mut self.plank,
            Item::Stick => &mut self.stick,
            Item::Stone => &mut self.stone,
            Item::Iron => &mut self.iron,
            Item::WoodenPickaxe => &mut self.wooden_pickaxe,
            Item::IronPickaxe => &mut self.iron_pickaxe,
            Item::Coin => &mut self.coin,
        }
    }

    pub fn can_craft(&self, recipe: Recipe) -> bool {
        recipe.spec().0.iter().all(|&(item, n)| self.get(item) >= n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl Pose {
    pub fn direction(&self) -> (f64, f64) {
        (self.heading.cos(), self.heading.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RoomId {
    pub x: usize,
    pub y: usize,
}

impl RoomId {
    pub fn name(self) -> String {
        format!("room_{}_{}", self.x, self.y)
    }

    pub fn parse(name: &str) -> Option<RoomId> {
        let (x, y) = name.strip_prefix("room_")?.split_once('_')?;
        Some(RoomId {
            x: x.parse().ok()?,
            y: y.parse().ok()?,
        })
    }

    /// World coordinates of the room's centre.
    pub fn centre(self) -> (f64, f64) {
        ((self.x * PITCH + 2) as f64 + 0.5, (self.y * PITCH + 2) as f64 + 0.5)
    }
}

impl fmt::Display for RoomId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Door {
    pub cell: (usize, usize),
    pub rooms: (RoomId, RoomId),
}

impl Door {
    pub fn name(&self) -> String {
        format!("door_{}_{}", self.cell.0, self.cell.1)
    }

    pub fn centre(&self) -> (f64, f64) {
        (self.cell.0 as f64 + 0.5, self.cell.1 as f64 + 0.5)
    }

    pub fn other(&self, r: RoomId) -> Option<RoomId> {
        if self.rooms.0 == r {
            Some(self.rooms.1)
        } else if self.rooms.1 == r {
            Some(self.rooms.0)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tile {
    Floor,
    Wall,
    Door(Option<Obstacle>),
    Solid(Obstacle),
}

impl Tile {
    pub fn is_solid(self) -> bool {
        !matches!(self, Tile::Floor | Tile::Door(None))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RoomCounts {
    pub trees: u32,
    pub stone: u32,
    pub iron: u32,
    pub coins: u32,
    pub collected: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CraftTraceRecord {
    pub frame: usize,
    pub action: CraftAction,
    pub reward: f64,
    pub pose: Pose,
    pub inventory: Inventory,
    pub done: bool,
}

/// Operators the controller distinguishes, in feature order.
pub const CONTROLLER_OPS: [&str; 12] = [
    "move-room",
    "clear-tree-door",
    "clear-stone-door",
    "clear-iron-door",
    "collect-wood",
    "collect-stone",
    "collect-iron",
    "collect-coin",
    "craft-plank",
    "craft-stick",
    "craft-wooden-pickaxe",
    "craft-iron-pickaxe",
];

pub const CONTROLLER_FEATURES: usize = CONTROLLER_OPS.len() + 4 + 1 + 7 + 3 + 4 + 2;

#[derive(Debug, Clone)]
pub struct CraftEnv {
    config: CraftConfig,
    width: usize,
    tiles: Vec<Tile>,
    coins: Vec<bool>,
    doors: Vec<Door>,
    room_types: Vec<usize>,
    counts: Vec<RoomCounts>,
    initial_coins: Vec<u32>,
    inventory: Inventory,
    pose: Pose,
    frame: usize,
    rng: ChaCha8Rng,
}

impl CraftEnv {
    pub fn new(config: CraftConfig, seed: u64) -> Result<Self, EnvError> {
        config.validate()?;
        let width = config.rooms_per_side * PITCH + 1;
        let mut env = Self {
            width,
            tiles: vec![Tile::Wall; width * width],
            coins: vec![false; width * width],
            doors: Vec::new(),
            room_types: Vec::new(),
            counts: Vec::new(),
            initial_coins: Vec::new(),
            inventory: Inventory::default(),
            pose: Pose {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
                speed: 0.0,
            },
            frame: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            config,
        };
        env.reset(seed);
        Ok(env)
    }

    pub fn config(&self) -> &CraftConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn inventory(&self) -> Inventory {
        self.inventory
    }

    pub fn doors(&self) -> &[Door] {
        &self.doors
    }

    pub fn tile(&self, cx: usize, cy: usize) -> Tile {
        self.tiles[cy * self.width + cx]
    }

    pub fn has_coin(&self, cx: usize, cy: usize) -> bool {
        self.coins[cy * self.width + cx]
    }

    pub fn rooms(&self) -> impl Iterator<Item = RoomId> {
        let n = self.config.rooms_per_side;
        (0..n).flat_map(move |y| (0..n).map(move |x| RoomId { x, y }))
    }

    fn room_index(&self, r: RoomId) -> usize {
        r.y * self.config.rooms_per_side + r.x
    }

    pub fn room_counts(&self, r: RoomId) -> RoomCounts {
        self.counts[self.room_index(r)]
    }

    pub fn room_type(&self, r: RoomId) -> &RoomType {
        &self.config.rooms.room[self.room_types[self.room_index(r)]]
    }

    pub fn total_coins_remaining(&self) -> u32 {
        self.counts.iter().map(|c| c.coins).sum()
    }

    pub fn door_by_name(&self, name: &str) -> Option<&Door> {
        self.doors.iter().find(|d| d.name() == name)
    }

    pub fn door_obstacle(&self, door: &Door) -> Option<Obstacle> {
        match self.tile(door.cell.0, door.cell.1) {
            Tile::Door(o) => o,
            _ => None,
        }
    }

    fn room_cells(r: RoomId) -> impl Iterator<Item = (usize, usize)> {
        let (bx, by) = (r.x * PITCH + 1, r.y * PITCH + 1);
        (0..ROOM_CELLS).flat_map(move |dy| (0..ROOM_CELLS).map(move |dx| (bx + dx, by + dy)))
    }

    /// Interior room containing a cell, if the cell is a room cell.
    fn room_of_cell(&self, cx: usize, cy: usize) -> Option<RoomId> {
        if cx.is_multiple_of(PITCH) || cy.is_multiple_of(PITCH) || cx >= self.width || cy >= self.width {
            return None;
        }
        Some(RoomId {
            x: (cx - 1) / PITCH,
            y: (cy - 1) / PITCH,
        })
    }

    fn solid_at(&self, x: f64, y: f64) -> bool {
        if x < 0.0 || y < 0.0 {
            return true;
        }
        let (cx, cy) = (x.floor() as usize, y.floor() as usize);
        cx >= self.width || cy >= self.width || self.tile(cx, cy).is_solid()
    }

    /// Room the agent is in; a door cell is split at its midpoint.
    pub fn agent_room(&self) -> RoomId {
        let (cx, cy) = (self.pose.x.floor() as usize, self.pose.y.floor() as usize);
        let n = self.config.rooms_per_side;
        let along = |c: usize, pos: f64| -> usize {
            if c.is_multiple_of(PITCH) {
                let wall = c / PITCH;
                if pos < c as f64 + 0.5 {
                    wall.saturating_sub(1)
                } else {
                    wall.min(n - 1)
                }
            } else {
                (c - 1) / PITCH
            }
        };
        RoomId {
            x: along(cx, self.pose.x),
            y: along(cy, self.pose.y),
        }
    }

    pub fn faced_cell(&self) -> Option<(usize, usize)> {
        let (dx, dy) = self.pose.direction();
        let (fx, fy) = (self.pose.x + REACH * dx, self.pose.y + REACH * dy);
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (cx, cy) = (fx.floor() as usize, fy.floor() as usize);
        (cx < self.width && cy < self.width).then_some((cx, cy))
    }

    fn sample_obstacle(&mut self) -> Option<Obstacle> {
        let d = &self.config.rooms.doors;
        let weights = [d.empty, d.tree, d.stone, d.iron];
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return [None, Some(Obstacle::Tree), Some(Obstacle::Stone), Some(Obstacle::Iron)][i];
            }
            u -= w;
        }
        None
    }

    fn sample_weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return self.rng.random_range(0..weights.len());
        }
        let mut u = self.rng.random::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap()
    }

    fn generate(&mut self) {
        let n = self.config.rooms_per_side;
        let w = self.width;
        self.tiles = vec![Tile::Wall; w * w];
        self.coins = vec![false; w * w];
        for r in self.rooms().collect::<Vec<_>>() {
            for (cx, cy) in Self::room_cells(r) {
                self.tiles[cy * w + cx] = Tile::Floor;
            }
        }

        self.doors.clear();
        for ry in 0..n {
            for rx in 0..n {
                let here = RoomId { x: rx, y: ry };
                if rx + 1 < n {
                    self.doors.push(Door {
                        cell: ((rx + 1) * PITCH, ry * PITCH + 2),
                        rooms: (here, RoomId { x: rx + 1, y: ry }),
                    });
                }
                if ry + 1 < n {
                    self.doors.push(Door {
                        cell: (rx * PITCH + 2, (ry + 1) * PITCH),
                        rooms: (here, RoomId { x: rx, y: ry + 1 }),
                    });
                }
            }
        }
        for i in 0..self.doors.len() {
            let o = self.sample_obstacle();
            let (cx, cy) = self.doors[i].cell;
            self.tiles[cy * w + cx] = Tile::Door(o);
        }

        let type_weights: Vec<f64> = self.config.rooms.room.iter().map(|r| r.weight).collect();
        let rooms: Vec<RoomId> = self.rooms().collect();
        self.room_types = rooms.iter().map(|_| self.sample_weighted(&type_weights)).collect();
        self.counts = vec![RoomCounts::default(); rooms.len()];

        let mut free_cells: Vec<Vec<(usize, usize)>> = Vec::with_capacity(rooms.len());
        for (i, &r) in rooms.iter().enumerate() {
            let ty = self.config.rooms.room[self.room_types[i]].clone();
            let (bx, by) = (r.x * PITCH + 1, r.y * PITCH + 1);
            let mut corners = vec![(bx, by), (bx + 2, by), (bx, by + 2), (bx + 2, by + 2)];
            corners.shuffle(&mut self.rng);
            let kinds = std::iter::repeat_n(Obstacle::Tree, ty.trees)
                .chain(std::iter::repeat_n(Obstacle::Stone, ty.stone))
                .chain(std::iter::repeat_n(Obstacle::Iron, ty.iron));
            for (kind, &(cx, cy)) in kinds.zip(&corners) {
                self.tiles[cy * w + cx] = Tile::Solid(kind);
            }
            self.counts[i].trees = ty.trees as u32;
            self.counts[i].stone = ty.stone as u32;
            self.counts[i].iron = ty.iron as u32;
            let centre = (bx + 1, by + 1);
            free_cells.push(
                Self::room_cells(r)
                    .filter(|&(cx, cy)| (cx, cy) != centre && self.tiles[cy * w + cx] == Tile::Floor)
                    .collect(),
            );
        }

        // Coins go one at a time to a room drawn by coin weight among rooms
        // with space left, so the total always matches the target.
        for _ in 0..self.config.total_coins {
            let weights: Vec<f64> = (0..rooms.len())
                .map(|i| {
                    if free_cells[i].is_empty() {
                        0.0
                    } else {
                        self.config.rooms.room[self.room_types[i]].coin_weight.max(1e-9)
                    }
                })
                .collect();
            if weights.iter().all(|w| *w == 0.0) {
                break;
            }
            let i = self.sample_weighted(&weights);
            let k = self.rng.random_range(0..free_cells[i].len());
            let (cx, cy) = free_cells[i].swap_remove(k);
            self.coins[cy * w + cx] = true;
            self.counts[i].coins += 1;
        }
        self.initial_coins = self.counts.iter().map(|c| c.coins).collect();
    }

    pub fn step(&mut self, action: CraftAction) -> Result<StepResult, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeOver);
        }
        let p = self.config.physics;
        let mut thrust = 0.0;
        match action {
            CraftAction::TurnLeft => self.pose.heading = (self.pose.heading - p.turn).rem_euclid(TAU),
            CraftAction::TurnRight => self.pose.heading = (self.pose.heading + p.turn).rem_euclid(TAU),
            CraftAction::Accelerate => thrust = 1.0,
            CraftAction::Use => self.use_faced(),
            CraftAction::Craft(recipe) => self.craft(recipe),
            CraftAction::Coast | CraftAction::Noop => {}
        }
        self.pose.speed = (self.pose.speed * (1.0 - p.drag) + p.accel * thrust).clamp(0.0, p.max_speed);
        let (dx, dy) = self.pose.direction();
        let nx = self.pose.x + self.pose.speed * dx;
        if !self.solid_at(nx, self.pose.y) {
            self.pose.x = nx;
        }
        let ny = self.pose.y + self.pose.speed * dy;
        if !self.solid_at(self.pose.x, ny) {
            self.pose.y = ny;
        }

        let mut reward = 0.0;
        let (cx, cy) = (self.pose.x.floor() as usize, self.pose.y.floor() as usize);
        if self.coins[cy * self.width + cx] {
            self.coins[cy * self.width + cx] = false;
            if let Some(r) = self.room_of_cell(cx, cy) {
                let i = self.room_index(r);
                self.counts[i].coins -= 1;
                self.counts[i].collected += 1;
            }
            self.inventory.coin += 1;
            reward = 1.0;
        }
        self.frame += 1;
        Ok(StepResult {
            reward,
            done: self.is_done(),
        })
    }

    fn tool_for(&self, o: Obstacle) -> bool {
        match o {
            Obstacle::Tree => true,
            Obstacle::Stone => self.inventory.wooden_pickaxe >= 1,
            Obstacle::Iron => self.inventory.iron_pickaxe >= 1,
        }
    }

    fn yield_of(o: Obstacle) -> Item {
        match o {
            Obstacle::Tree => Item::Wood,
            Obstacle::Stone => Item::Stone,
            Obstacle::Iron => Item::Iron,
        }
    }

    fn use_faced(&mut self) {
        let Some((cx, cy)) = self.faced_cell() else {
            return;
        };
        let i = cy * self.width + cx;
        match self.tiles[i] {
            Tile::Solid(o) if self.tool_for(o) => {
                self.tiles[i] = Tile::Floor;
                *self.inventory.get_mut(Self::yield_of(o)) += 1;
                if let Some(r) = self.room_of_cell(cx, cy) {
                    let ri = self.room_index(r);
                    let c = &mut self.counts[ri];
                    match o {
                        Obstacle::Tree => c.trees -= 1,
                        Obstacle::Stone => c.stone -= 1,
                        Obstacle::Iron => c.iron -= 1,
                    }
                }
            }
            Tile::Door(Some(o)) if self.tool_for(o) => {
                self.tiles[i] = Tile::Door(None);
                *self.inventory.get_mut(Self::yield_of(o)) += 1;
            }
            _ => {}
        }
    }

    fn craft(&mut self, recipe: Recipe) {
        if !self.inventory.can_craft(recipe) {
            return;
        }
        let (inputs, output, count) = recipe.spec();
        for &(item, n) in inputs {
            *self.inventory.get_mut(item) -= n;
        }
        *self.inventory.get_mut(output) += count;
    }

    /// Places the agent; used by pretraining curricula and tests.
    pub fn set_pose(&mut self, pose: Pose) {
        assert!(!self.solid_at(pose.x, pose.y), "pose inside a solid cell");
        self.pose = pose;
    }

    pub fn set_inventory(&mut self, inventory: Inventory) {
        self.inventory = inventory;
    }

    pub fn trace_record(&self, action: CraftAction, result: StepResult) -> CraftTraceRecord {
        CraftTraceRecord {
            frame: self.frame,
            action,
            reward: result.reward,
            pose: self.pose,
            inventory: self.inventory,
            done: result.done,
        }
    }

    fn fill_symbolic(&self, s: &mut SymbolicState, counts: &[RoomCounts]) {
        for d in &self.doors {
            let (a, b) = (d.rooms.0.name(), d.rooms.1.name());
            let name = d.name();
            s.insert(Atom::new("adjacent", &[&a, &b]));
            s.insert(Atom::new("adjacent", &[&b, &a]));
            s.insert(Atom::new("door-between", &[&name, &a, &b]));
            s.insert(Atom::new("door-between", &[&name, &b, &a]));
            s.insert(Atom::new("door-of", &[&name, &a]));
            s.insert(Atom::new("door-of", &[&name, &b]));
            match self.door_obstacle(d) {
                None => s.insert(Atom::new("open", &[&name])),
                Some(o) => s.insert(Atom::new("blocked", &[&name, o.name()])),
            }
        }
        s.insert(Atom::new("agent-in", &[self.agent_room().name()]));
        for item in Item::ALL {
            s.set_fluent(FluentTerm::new::<&str>(item.fluent(), &[]), Number::from_integer(self.inventory.get(item) as i64));
        }
        for (r, c) in self.rooms().zip(counts) {
            let name = [r.name()];
            let n = |v: u32| Number::from_integer(v as i64);
            s.set_fluent(FluentTerm::new("trees-in", &name), n(c.trees));
            s.set_fluent(FluentTerm::new("stone-in", &name), n(c.stone));
            s.set_fluent(FluentTerm::new("iron-in", &name), n(c.iron));
            s.set_fluent(FluentTerm::new("coins-in", &name), n(c.coins));
            s.set_fluent(FluentTerm::new("collected-in", &name), n(c.collected));
        }
    }

    /// Symbolic state rebuilt by scanning the grid rather than from the
    /// incrementally maintained counters.
    pub fn recompute_symbolic_state(&self) -> SymbolicState {
        let mut counts = vec![RoomCounts::default(); self.counts.len()];
        for (i, r) in self.rooms().enumerate() {
            for (cx, cy) in Self::room_cells(r) {
                match self.tile(cx, cy) {
                    Tile::Solid(Obstacle::Tree) => counts[i].trees += 1,
                    Tile::Solid(Obstacle::Stone) => counts[i].stone += 1,
                    Tile::Solid(Obstacle::Iron) => counts[i].iron += 1,
                    _ => {}
                }
                if self.has_coin(cx, cy) {
                    counts[i].coins += 1;
                }
            }
            counts[i].collected = self.initial_coins[i] - counts[i].coins;
        }
        let mut s = SymbolicState::new();
        self.fill_symbolic(&mut s, &counts);
        s
    }

    /// Compact room-level encoding: per room, per door, inventory, time.
    pub fn room_features(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.room_feature_len());
        let here = self.agent_room();
        for (r, c) in self.rooms().zip(&self.counts) {
            out.push(if r == here { 1.0 } else { 0.0 });
            out.push(c.trees as f32 / 4.0);
            out.push(c.stone as f32 / 4.0);
            out.push(c.iron as f32 / 4.0);
            out.push(c.coins as f32 / 4.0);
        }
        for d in &self.doors {
            let o = self.door_obstacle(d);
            out.push((o.is_none()) as u8 as f32);
            for kind in Obstacle::ALL {
                out.push((o == Some(kind)) as u8 as f32);
            }
        }
        for item in Item::ALL {
            let v = if item == Item::Coin {
                self.inventory.coin as f32 / self.config.total_coins.max(1) as f32
            } else {
                (self.inventory.get(item).min(8)) as f32 / 8.0
            };
            out.push(v);
        }
        out.push(self.time_remaining());
        out
    }

    pub fn room_feature_len(&self) -> usize {
        let rooms = self.config.rooms_per_side * self.config.rooms_per_side;
        rooms * 5 + self.doors.len() * 4 + Item::ALL.len() + 1
    }

    fn time_remaining(&self) -> f32 {
        (self.config.episode_len - self.frame.min(self.config.episode_len)) as f32 / self.config.episode_len as f32
    }

    /// Full grid encoding: ten planes `[plane][cy][cx]`, then pose,
    /// inventory and time. Optional input for convolutional controllers.
    pub fn grid_features(&self) -> Vec<f32> {
        let w = self.width;
        let mut out = vec![0.0f32; 10 * w * w];
        for cy in 0..w {
            for cx in 0..w {
                let plane = match self.tile(cx, cy) {
                    Tile::Wall => Some(0),
                    Tile::Door(None) => Some(1),
                    Tile::Door(Some(Obstacle::Tree)) => Some(2),
                    Tile::Door(Some(Obstacle::Stone)) => Some(3),
                    Tile::Door(Some(Obstacle::Iron)) => Some(4),
                    Tile::Solid(Obstacle::Tree) => Some(5),
                    Tile::Solid(Obstacle::Stone) => Some(6),
                    Tile::Solid(Obstacle::Iron) => Some(7),
                    Tile::Floor => None,
                };
                if let Some(p) = plane {
                    out[p * w * w + cy * w + cx] = 1.0;
                }
                if self.has_coin(cx, cy) {
                    out[8 * w * w + cy * w + cx] = 1.0;
                }
            }
        }
        let (ax, ay) = (self.pose.x.floor() as usize, self.pose.y.floor() as usize);
        out[9 * w * w + ay * w + ax] = 1.0;
        let (hx, hy) = self.pose.direction();
        out.extend([hx as f32, hy as f32, (self.pose.speed / self.config.physics.max_speed) as f32]);
        out.extend(Item::ALL.iter().map(|&i| self.inventory.get(i).min(8) as f32 / 8.0));
        out.push(self.time_remaining());
        out
    }

    fn nearest_in_room(&self, r: RoomId, pred: impl Fn(usize, usize) -> bool) -> Option<(f64, f64)> {
        Self::room_cells(r)
            .filter(|&(cx, cy)| pred(cx, cy))
            .map(|(cx, cy)| (cx as f64 + 0.5, cy as f64 + 0.5))
            .min_by(|a, b| {
                let da = (a.0 - self.pose.x).hypot(a.1 - self.pose.y);
                let db = (b.0 - self.pose.x).hypot(b.1 - self.pose.y);
                da.total_cmp(&db)
            })
    }

    /// World point the controller should head for while executing `step`.
    pub fn step_target(&self, step: &GroundStep) -> Option<(f64, f64)> {
        let room_arg = |i: usize| step.args.get(i).and_then(|a| RoomId::parse(a));
        match step.operator.as_str() {
            "move-room" => {
                let from = room_arg(0)?;
                let to = room_arg(1)?;
                let door = self.door_by_name(step.args.get(2)?)?;
                if self.agent_room() == from {
                    Some(door.centre())
                } else {
                    Some(to.centre())
                }
            }
            "clear-tree-door" | "clear-stone-door" | "clear-iron-door" => {
                Some(self.door_by_name(step.args.first()?)?.centre())
            }
            "collect-wood" | "collect-stone" | "collect-iron" => {
                let kind = match step.operator.as_str() {
                    "collect-wood" => Obstacle::Tree,
                    "collect-stone" => Obstacle::Stone,
                    _ => Obstacle::Iron,
                };
                self.nearest_in_room(room_arg(0)?, |cx, cy| self.tile(cx, cy) == Tile::Solid(kind))
            }
            "collect-coin" => self.nearest_in_room(room_arg(0)?, |cx, cy| self.has_coin(cx, cy)),
            _ => None,
        }
    }

    pub fn target_distance(&self, step: &GroundStep) -> Option<f64> {
        self.step_target(step)
            .map(|(tx, ty)| (tx - self.pose.x).hypot(ty - self.pose.y))
    }

    fn cell_class(&self, cell: Option<(usize, usize)>) -> usize {
        let Some((cx, cy)) = cell else {
            return 1;
        };
        match self.tile(cx, cy) {
            Tile::Floor if self.has_coin(cx, cy) => 6,
            Tile::Floor => 0,
            Tile::Wall => 1,
            Tile::Door(None) => 2,
            Tile::Door(Some(Obstacle::Tree)) | Tile::Solid(Obstacle::Tree) => 3,
            Tile::Door(Some(Obstacle::Stone)) | Tile::Solid(Obstacle::Stone) => 4,
            Tile::Door(Some(Obstacle::Iron)) | Tile::Solid(Obstacle::Iron) => 5,
        }
    }

    /// Egocentric input of the goal-conditioned controller for `step`.
    pub fn controller_features(&self, step: &GroundStep) -> Vec<f32> {
        let mut out = vec![0.0f32; CONTROLLER_FEATURES];
        if let Some(i) = CONTROLLER_OPS.iter().position(|op| *op == step.operator) {
            out[i] = 1.0;
        }
        let mut k = CONTROLLER_OPS.len();
        let (hx, hy) = self.pose.direction();
        if let Some((tx, ty)) = self.step_target(step) {
            let (rx, ry) = (tx - self.pose.x, ty - self.pose.y);
            let dist = rx.hypot(ry);
            let (fwd, side) = if dist > 1e-9 {
                ((rx * hx + ry * hy) / dist, (hx * ry - hy * rx) / dist)
            } else {
                (0.0, 0.0)
            };
            out[k] = 1.0;
            out[k + 1] = fwd as f32;
            out[k + 2] = side as f32;
            out[k + 3] = (dist.min(4.0) / 4.0) as f32;
        }
        k += 4;
        out[k] = (self.pose.speed / self.config.physics.max_speed) as f32;
        k += 1;
        out[k + self.cell_class(self.faced_cell())] = 1.0;
        k += 7;
        let probe = |angle: f64, dist: f64| {
            let h = self.pose.heading + angle;
            self.solid_at(self.pose.x + dist * h.cos(), self.pose.y + dist * h.sin())
        };
        out[k] = probe(0.0, 0.5) as u8 as f32;
        out[k + 1] = probe(-PI / 4.0, REACH) as u8 as f32;
        out[k + 2] = probe(PI / 4.0, REACH) as u8 as f32;
        k += 3;
        for (j, r) in Recipe::ALL.iter().enumerate() {
            out[k + j] = self.inventory.can_craft(*r) as u8 as f32;
        }
        k += 4;
        out[k] = (self.inventory.wooden_pickaxe > 0) as u8 as f32;
        out[k + 1] = (self.inventory.iron_pickaxe > 0) as u8 as f32;
        out
    }
}

impl SymbolicEnv for CraftEnv {
    type Action = CraftAction;

    fn domain(&self) -> &Domain {
        craft_domain()
    }

    fn objects(&self) -> Vec<TypedObject> {
        let mut objs: Vec<TypedObject> = self.rooms().map(|r| TypedObject::new(r.name(), "room")).collect();
        objs.extend(self.doors.iter().map(|d| TypedObject::new(d.name(), "door")));
        objs
    }

    fn symbolic_state(&self) -> SymbolicState {
        let mut s = SymbolicState::new();
        self.fill_symbolic(&mut s, &self.counts);
        s
    }

    fn observation(&self) -> Vec<f32> {
        self.room_features()
    }

    fn observation_len(&self) -> usize {
        self.room_feature_len()
    }

    fn step(&mut self, action: CraftAction) -> Result<StepResult, EnvError> {
        CraftEnv::step(self, action)
    }

    fn noop(&self) -> CraftAction {
        CraftAction::Noop
    }

    fn frame(&self) -> usize {
        self.frame
    }

    fn is_done(&self) -> bool {
        self.frame >= self.config.episode_len
    }

    fn reset(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.generate();
        let rooms: Vec<RoomId> = self.rooms().collect();
        let start = rooms[self.rng.random_range(0..rooms.len())];
        let (x, y) = start.centre();
        let turns = (TAU / self.config.physics.turn).round().max(1.0) as usize;
        let heading = self.rng.random_range(0..turns) as f64 * self.config.physics.turn;
        self.pose = Pose {
            x,
            y,
            heading: heading.rem_euclid(TAU),
            speed: 0.0,
        };
        self.inventory = Inventory::default();
        self.frame = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_parses() {
        let t = RoomTable::shipped();
        assert_eq!(t.room.len(), 4);
    }

    #[test]
    fn unknown_recipe_is_an_error() {
        assert_eq!(CraftAction::craft(4), Err(EnvError::UnknownRecipe(4)));
        assert_eq!(CraftAction::craft(2), Ok(CraftAction::Craft(Recipe::WoodenPickaxe)));
    }

    #[test]
    fn room_names_round_trip() {
        let r = RoomId { x: 2, y: 1 };
        assert_eq!(RoomId::parse(&r.name()), Some(r));
    }

    #[test]
    fn too_many_coins_rejected() {
        let mut cfg = CraftConfig::mini();
        cfg.total_coins = 1000;
        assert!(CraftEnv::new(cfg, 0).is_err());
    }
}
