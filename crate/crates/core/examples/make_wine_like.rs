//! Regenerates `data/wine_like.csv`.

use std::fs::File;
use std::path::PathBuf;

fn main() -> oodcf::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/wine_like.csv"));
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    oodcf::dataset::synthetic_wine_like(2024).write_csv(File::create(&out)?)?;
    println!("wrote {}", out.display());
    Ok(())
}
