//! Meta-controller action spaces and their mapping to planner goals.

use sage_envs::craft::{CraftEnv, Item};
use sage_envs::taxi::{Cell, PASSENGER, TAXI};
use sage_pddl::{Atom, CmpOp, FluentTerm, Goal};
use sage_rl::{HeadSpec, Heads};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const CRAFT_GOALS_TOML: &str = include_str!("../assets/craft_goals.toml");

/// Conjunctive taxi goal over the predicates the meta-controller may set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaxiGoal {
    pub empty: bool,
    pub at: Option<Cell>,
    pub in_taxi: bool,
    pub delivered: bool,
}

impl TaxiGoal {
    pub fn to_goal(&self) -> Goal {
        let mut g = Goal::default();
        if self.empty {
            g = g.with_literal(Atom::new::<&str>("empty", &[]), true);
        }
        if let Some(c) = self.at {
            g = g.with_literal(Atom::new("at", &[TAXI.to_string(), c.name()]), true);
        }
        if self.in_taxi {
            g = g.with_literal(Atom::new("in-taxi", &[PASSENGER]), true);
        }
        if self.delivered {
            g = g.with_literal(Atom::new("delivered", &[PASSENGER]), true);
        }
        g
    }
}

impl std::fmt::Display for TaxiGoal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        if self.empty {
            parts.push("empty".to_string());
        }
        if let Some(c) = self.at {
            parts.push(format!("at({},{})", c.x, c.y));
        }
        if self.in_taxi {
            parts.push(format!("in-taxi({PASSENGER})"));
        }
        if self.delivered {
            parts.push(format!("delivered({PASSENGER})"));
        }
        if parts.is_empty() {
            f.write_str("true")
        } else {
            f.write_str(&parts.join(" ∧ "))
        }
    }
}

/// How the meta-controller parameterises the cell argument of `at`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateHead {
    /// One categorical over columns and one over rows.
    #[default]
    Categorical,
    /// Two Gaussians, scaled so `[-1, 1]` spans the grid.
    Gaussian,
}

/// Hybrid action layout: a Bernoulli include-flag per predicate plus the
/// two coordinates of the `at` argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxiGoalSpace {
    size: usize,
    coordinates: CoordinateHead,
}

const EMPTY: usize = 0;
const AT: usize = 1;
const X: usize = 2;
const Y: usize = 3;
const IN_TAXI: usize = 4;
const DELIVERED: usize = 5;
pub const TAXI_GOAL_DIMS: usize = 6;

impl TaxiGoalSpace {
    pub fn new(size: usize) -> Result<Self> {
        Self::with_coordinates(size, CoordinateHead::default())
    }

    pub fn with_coordinates(size: usize, coordinates: CoordinateHead) -> Result<Self> {
        if size < 2 {
            return Err(CoreError::Config("taxi goal space needs a grid of at least 2×2".into()));
        }
        Ok(Self { size, coordinates })
    }

    pub fn coordinates(&self) -> CoordinateHead {
        self.coordinates
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn heads(&self) -> Heads {
        let coordinate = match self.coordinates {
            CoordinateHead::Categorical => HeadSpec::Categorical(self.size),
            CoordinateHead::Gaussian => HeadSpec::Gaussian,
        };
        Heads::new(vec![
            HeadSpec::Bernoulli,
            HeadSpec::Bernoulli,
            coordinate,
            coordinate,
            HeadSpec::Bernoulli,
            HeadSpec::Bernoulli,
        ])
        .expect("fixed head layout")
    }

    fn coordinate(&self, v: f64) -> Option<usize> {
        let scaled = match self.coordinates {
            CoordinateHead::Categorical => v,
            CoordinateHead::Gaussian => ((v + 1.0) / 2.0 * (self.size - 1) as f64).round(),
        };
        (scaled.is_finite() && scaled >= 0.0 && scaled <= (self.size - 1) as f64).then_some(scaled as usize)
    }

    fn scaled(&self, i: usize) -> f64 {
        match self.coordinates {
            CoordinateHead::Categorical => i as f64,
            CoordinateHead::Gaussian => 2.0 * i as f64 / (self.size - 1) as f64 - 1.0,
        }
    }

    /// `None` when a set flag carries an out-of-range argument.
    pub fn decode(&self, action: &[f64]) -> Result<Option<TaxiGoal>> {
        if action.len() != TAXI_GOAL_DIMS {
            return Err(CoreError::Config(format!("taxi goal vector has {} entries, expected {TAXI_GOAL_DIMS}", action.len())));
        }
        let flag = |i: usize| action[i] == 1.0;
        let at = if flag(AT) {
            match (self.coordinate(action[X]), self.coordinate(action[Y])) {
                (Some(x), Some(y)) => Some(Cell::new(x, y)),
                _ => return Ok(None),
            }
        } else {
            None
        };
        Ok(Some(TaxiGoal {
            empty: flag(EMPTY),
            at,
            in_taxi: flag(IN_TAXI),
            delivered: flag(DELIVERED),
        }))
    }

    pub fn encode(&self, goal: &TaxiGoal) -> Result<Vec<f64>> {
        let mut v = vec![0.0; TAXI_GOAL_DIMS];
        v[EMPTY] = goal.empty as u8 as f64;
        v[IN_TAXI] = goal.in_taxi as u8 as f64;
        v[DELIVERED] = goal.delivered as u8 as f64;
        if let Some(c) = goal.at {
            if c.x >= self.size || c.y >= self.size {
                return Err(CoreError::Config(format!("cell {c} outside a {} grid", self.size)));
            }
            v[AT] = 1.0;
            v[X] = self.scaled(c.x);
            v[Y] = self.scaled(c.y);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CraftGoalTemplate {
    /// Inventory count of `item` at least `at_least`.
    Have { item: Item, at_least: i64 },
    AgentIn { room: String },
    DoorCleared { door: String },
    /// One more coin collected in `room` than when the goal was set.
    CollectIn { room: String },
}

impl CraftGoalTemplate {
    pub fn to_goal(&self, env: &CraftEnv) -> Goal {
        match self {
            CraftGoalTemplate::Have { item, at_least } => Goal::default().with_numeric(Goal::fluent_cmp(
                &FluentTerm::new::<&str>(item.fluent(), &[]),
                CmpOp::Ge,
                *at_least,
            )),
            CraftGoalTemplate::AgentIn { room } => Goal::atom(Atom::new("agent-in", &[room])),
            CraftGoalTemplate::DoorCleared { door } => Goal::atom(Atom::new("open", &[door])),
            CraftGoalTemplate::CollectIn { room } => {
                let collected = sage_envs::craft::RoomId::parse(room)
                    .map_or(0, |r| env.room_counts(r).collected as i64);
                Goal::default().with_numeric(Goal::fluent_cmp(&FluentTerm::new("collected-in", &[room]), CmpOp::Ge, collected + 1))
            }
        }
    }
}

impl std::fmt::Display for CraftGoalTemplate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CraftGoalTemplate::Have { item, at_least } => write!(f, "have({})>={at_least}", item.fluent()),
            CraftGoalTemplate::AgentIn { room } => write!(f, "agent-in({room})"),
            CraftGoalTemplate::DoorCleared { door } => write!(f, "door-cleared({door})"),
            CraftGoalTemplate::CollectIn { room } => write!(f, "collected-in({room})+1"),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableFile {
    #[serde(default)]
    have: Vec<HaveEntry>,
    #[serde(default)]
    per_room: Vec<String>,
    #[serde(default)]
    per_door: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct HaveEntry {
    item: Item,
    at_least: i64,
}

/// Enumerated goal templates of the crafting DQN meta-controller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CraftGoalTable {
    templates: Vec<CraftGoalTemplate>,
}

impl CraftGoalTable {
    pub fn shipped(env: &CraftEnv) -> Result<Self> {
        Self::from_toml(CRAFT_GOALS_TOML, env)
    }

    /// Expands the file's per-room and per-door kinds over the layout of `env`.
    pub fn from_toml(text: &str, env: &CraftEnv) -> Result<Self> {
        let file: TableFile = toml::from_str(text)?;
        let mut templates = Vec::new();
        for h in file.have {
            if h.at_least < 1 {
                return Err(CoreError::GoalTable(format!("have({}) threshold must be at least 1", h.item.fluent())));
            }
            templates.push(CraftGoalTemplate::Have {
                item: h.item,
                at_least: h.at_least,
            });
        }
        for kind in &file.per_room {
            for r in env.rooms() {
                templates.push(match kind.as_str() {
                    "agent-in" => CraftGoalTemplate::AgentIn { room: r.name() },
                    "collect-in" => CraftGoalTemplate::CollectIn { room: r.name() },
                    other => return Err(CoreError::GoalTable(format!("unknown per-room kind `{other}`"))),
                });
            }
        }
        for kind in &file.per_door {
            for d in env.doors() {
                templates.push(match kind.as_str() {
                    "door-cleared" => CraftGoalTemplate::DoorCleared { door: d.name() },
                    other => return Err(CoreError::GoalTable(format!("unknown per-door kind `{other}`"))),
                });
            }
        }
        Self::new(templates)
    }

    pub fn new(templates: Vec<CraftGoalTemplate>) -> Result<Self> {
        if templates.is_empty() {
            return Err(CoreError::GoalTable("no templates".into()));
        }
        for (i, t) in templates.iter().enumerate() {
            if templates[..i].contains(t) {
                return Err(CoreError::GoalTable(format!("duplicate template {t}")));
            }
        }
        Ok(Self { templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&CraftGoalTemplate> {
        self.templates.get(index)
    }

    pub fn index_of(&self, template: &CraftGoalTemplate) -> Option<usize> {
        self.templates.iter().position(|t| t == template)
    }

    pub fn templates(&self) -> &[CraftGoalTemplate] {
        &self.templates
    }
}
