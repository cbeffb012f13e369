//! Regenerates the bundled fixtures under `fixtures/`.
//!
//! ```text
//! cargo run -p eventstudy --example generate_fixtures -- fixtures
//! ```

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use chrono::NaiveDate;
use eventstudy::ingest::write_sentiment_csv;
use eventstudy::synthetic::{sentiment_series, DatasetSpec, SyntheticDataset};

fn main() -> std::io::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let synthetic = root.join("synthetic");
    SyntheticDataset::generate(&DatasetSpec::default()).write(&synthetic)?;
    std::fs::write(
        synthetic.join("config.toml"),
        "data_dir = \"data\"\nevents = \"events.csv\"\nsentiment = \"sentiment.csv\"\noutput_dir = \"out\"\n",
    )?;
    let start = NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date");
    let end = NaiveDate::from_ymd_opt(2023, 12, 31).expect("valid date");
    let index = sentiment_series(2024, start, end);
    write_sentiment_csv(&index, BufWriter::new(File::create(root.join("sentiment_synthetic.csv"))?))?;
    Ok(())
}
