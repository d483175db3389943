//! Runs a scenario database as a campaign and prints the report.

use std::path::PathBuf;

use uavsim::harness::{load_database, run_campaign, CampaignOptions};

fn main() {
    let dir = std::env::args().nth(1).map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios"),
        PathBuf::from,
    );
    let db = load_database(&dir).expect("readable index");
    let report = run_campaign(&db, 4, &CampaignOptions::default());
    print!("{}", report.to_text());
}
