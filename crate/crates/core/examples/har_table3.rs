//! Five-protocol comparison on UCI HAR. Needs the dataset under
//! `$ETREE_DATA_DIR` (or the first argument); prints a note otherwise.

use std::path::PathBuf;

use etree::experiment::{replicate_table3, DATA_DIR_ENV};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args_os().nth(1).map(PathBuf::from).or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
    let Some(dir) = dir.filter(|d| d.is_dir()) else {
        println!("HAR not found: pass its directory or set {DATA_DIR_ENV}");
        return Ok(());
    };
    let out = std::env::temp_dir().join("etree-table3");
    let report = replicate_table3(&dir, &[1, 2, 3], &out)?;
    print!("{}", report.to_text());
    Ok(())
}
