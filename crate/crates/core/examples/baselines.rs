//! Scores the classical thresholding baselines on a few synthetic pages and
//! prints the comparison table.
//!
//! `cargo run --example baselines`

use t2t_binformer::data::synth::synthetic_pair;
use t2t_binformer::eval::{evaluate_baseline, evaluate_pair, format_table, Baseline, ReportFormat, ReportRow};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pages: Vec<_> = (0..3).map(|seed| synthetic_pair(192, seed)).collect();

    let first = &pages[0];
    for b in Baseline::ALL {
        let r = evaluate_pair(&b.apply(&first.degraded)?, &first.gt)?;
        println!("{:<8} page 0: {}", b.name(), r.csv_row());
    }

    let rows = Baseline::ALL
        .iter()
        .map(|&b| Ok(ReportRow::new(b.name(), "Threshold", evaluate_baseline(b, &pages)?)))
        .collect::<Result<Vec<_>, t2t_binformer::error::Error>>()?;
    println!("\nmean over {} pages\n", pages.len());
    print!("{}", format_table(&rows, ReportFormat::Markdown));
    Ok(())
}
