//! Shipped PDDL domain files, parsed once per process.

use std::sync::OnceLock;

use sage_pddl::{parse_domain, Domain};

pub const TAXI_PDDL: &str = include_str!("../assets/taxi.pddl");
pub const CRAFT_PDDL: &str = include_str!("../assets/craft.pddl");
pub const CRAFT_ROOMS_TOML: &str = include_str!("../assets/craft_rooms.toml");

pub fn taxi_domain() -> &'static Domain {
    static CELL: OnceLock<Domain> = OnceLock::new();
    CELL.get_or_init(|| parse_domain(TAXI_PDDL).expect("shipped taxi domain parses"))
}

pub fn craft_domain() -> &'static Domain {
    static CELL: OnceLock<Domain> = OnceLock::new();
    CELL.get_or_init(|| parse_domain(CRAFT_PDDL).expect("shipped craft domain parses"))
}
