//! Writes the bundled synthetic price panel.
//!
//! `cargo run -p carbonet-cli --example make_synthetic -- data/synthetic_prices.csv`

use std::fmt::Write;

use carbonet_core::synthetic::simulate_prices;

const TICKERS: [&str; 5] = ["CARBON", "COAL", "GAS", "OIL", "ENERGY_EQ"];

fn main() -> std::io::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "data/synthetic_prices.csv".into());
    let names: Vec<String> = TICKERS.iter().map(|s| s.to_string()).collect();
    let panel = simulate_prices(&names, 2001, 2024);
    let mut out = String::from("date");
    for n in &panel.names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (i, d) in panel.dates.iter().enumerate() {
        let _ = write!(out, "{d}");
        for s in &panel.series {
            let _ = write!(out, ",{:.6}", s[i]);
        }
        out.push('\n');
    }
    std::fs::write(&path, out)
}
