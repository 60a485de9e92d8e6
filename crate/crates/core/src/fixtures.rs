//! Bundled demo domains used by tests, examples and the CLI.

/// 40 apartments: `#bedroom`, `location`, `transportation`, `price`, `pets_ok`, `name`.
pub const APARTMENTS_KB: &str = include_str!("../fixtures/apartments.json");
/// 40 restaurants: `cuisine`, `location`, `price_range`, `rating`, `outdoor_seating`, `name`.
pub const RESTAURANTS_KB: &str = include_str!("../fixtures/restaurants.json");

/// Small hand-built embedding tables with synonym clusters.
pub const APARTMENTS_EMBEDDINGS: &str = include_str!("../fixtures/apartments.vec");
pub const RESTAURANTS_EMBEDDINGS: &str = include_str!("../fixtures/restaurants.vec");

/// Greet, two constraints, one slot answer, results, farewell.
pub const APARTMENTS_SCRIPT: &str = include_str!("../fixtures/apartments.script.jsonl");
pub const RESTAURANTS_SCRIPT: &str = include_str!("../fixtures/restaurants.script.jsonl");
