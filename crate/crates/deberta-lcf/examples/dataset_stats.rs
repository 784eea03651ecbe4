//! Label histograms for the bundled fixture datasets, or for any dataset
//! passed on the command line.
//!
//! ```bash
//! cargo run --example dataset_stats
//! cargo run --example dataset_stats -- path/to/Restaurants_Train.xml semeval
//! ```

use deberta_lcf::data::{dataset_stats, load_annotations, DatasetFormat};
use std::path::{Path, PathBuf};

fn report(path: &Path, format: DatasetFormat) -> deberta_lcf::Result<()> {
    let annotations = load_annotations(path, format)?;
    let counts = dataset_stats(&annotations);
    println!("{}", path.display());
    println!("  positive {:>6}", counts.positive);
    println!("  negative {:>6}", counts.negative);
    println!("  neutral  {:>6}", counts.neutral);
    println!("  total    {:>6}", counts.total());
    Ok(())
}

fn main() -> deberta_lcf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() == 2 {
        let format = DatasetFormat::from_name(&args[1])?;
        return report(Path::new(&args[0]), format);
    }
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    report(&fixtures.join("laptop_mini.xml"), DatasetFormat::Semeval)?;
    report(&fixtures.join("restaurant_mini.xml"), DatasetFormat::Semeval)?;
    report(&fixtures.join("twitter_mini.txt"), DatasetFormat::Twitter)?;
    Ok(())
}
