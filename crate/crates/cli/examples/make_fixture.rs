//! Writes a synthetic input set.
//!
//! `cargo run -p geoses-cli --example make_fixture -- <dir> [units] [seed] [records_per_unit]`

use std::path::PathBuf;

use geoses_cli::fixtures::{write_fixture, FixtureSpec};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixture".into()));
    let n: usize = args.next().map_or(200, |s| s.parse().expect("units"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let records: usize = args.next().map_or(0, |s| s.parse().expect("records per unit"));
    let spec = FixtureSpec {
        records_per_unit: records,
        ..FixtureSpec::new(n, seed)
    };
    match write_fixture(&dir, &spec) {
        Ok(p) => println!("fixture written to {}", p.dir.display()),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
