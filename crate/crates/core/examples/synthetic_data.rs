//! Writes a small synthetic multi-year dataset with its manifest and shows
//! both directions of the year-wise split.
//!
//! `cargo run --example synthetic_data -- [out_dir]`

use std::path::PathBuf;

use t2t_binformer::data::synth::write_dataset;
use t2t_binformer::data::{leave_one_out, tile_256, Direction, Manifest};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("binformer-synthetic"));
    let years = ["2009", "2010", "2011", "2012"];
    let manifest_path = write_dataset(&dir, &years, 2, 320, 1)?;
    println!("manifest: {}", manifest_path.display());

    let manifest = Manifest::load(&manifest_path)?;
    let by_year = manifest.by_year();
    for direction in [Direction::TestOnOne, Direction::TrainOnOne] {
        let split = leave_one_out(&by_year, "2011", direction)?;
        println!("{direction:?} around 2011: {} train pages, {} test pages", split.train.len(), split.test.len());
    }

    let pair = by_year["2009"][0].load()?;
    let tiles = tile_256(&pair)?;
    println!(
        "{}: {}x{} page -> {} tiles of 256 ({}x{})",
        pair.source_id,
        pair.height(),
        pair.width(),
        tiles.tiles.len(),
        tiles.layout.rows(),
        tiles.layout.cols()
    );
    Ok(())
}
