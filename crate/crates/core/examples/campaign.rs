//! Monte Carlo stability campaign from a bundled config.
//!
//! `cargo run --release --example campaign -- [config.toml] [repetitions]`

use dataconform::config::RunConfig;
use dataconform::simulator::run_campaign;

fn main() -> dataconform::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/configs/quadratic_campaign.toml").to_string());
    let mut cfg = RunConfig::load(path.as_ref())?;
    cfg.repetitions = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let t = std::time::Instant::now();
    let report = run_campaign(&cfg.campaign()?)?;
    print!("{}", report.table());
    println!("{:.1?}", t.elapsed());
    Ok(())
}
