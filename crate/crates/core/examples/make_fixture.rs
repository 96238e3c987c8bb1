//! Regenerates `fixtures/enschede_synthetic.csv`.
//!
//! ```text
//! cargo run -p abgraph --example make_fixture [OUT]
//! ```

use abgraph::dataio::{synthetic_stations_csv, FIXTURE_SEED};

fn main() {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/enschede_synthetic.csv").into());
    std::fs::write(&out, synthetic_stations_csv(FIXTURE_SEED)).expect("write fixture");
    eprintln!("wrote {out}");
}
