//! Writes a planted rank-5 synthetic matrix as `row,col,value` CSV.
//!
//! ```text
//! cargo run --release --example planted -- [seed] > planted.csv
//! ```

use std::io::{self, BufWriter, Write};

use adnlf::synthetic::{planted, PlantedConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 0,
    };
    let data = planted(&PlantedConfig {
        seed,
        ..Default::default()
    })?;
    let mut out = BufWriter::new(io::stdout().lock());
    for t in &data.triples {
        writeln!(out, "{},{},{}", t.row, t.col, t.value)?;
    }
    out.flush()?;
    Ok(())
}
