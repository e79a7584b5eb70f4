//! Renders the original, matched auxiliary and out-of-domain sets and
//! writes them as PPM/PFM files with a manifest per set.
//!
//! cargo run --release --example generate_domains -- [OUT_DIR]

use litedepth::data::{make_domains, write_dataset, DomainConfig};

fn main() -> litedepth::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "domains-out".into());
    let cfg = DomainConfig {
        n_train: 40,
        n_aux_matched: 80,
        n_aux_ood: 40,
        ..DomainConfig::default()
    };
    let domains = make_domains(&cfg, 0)?;
    for (name, ds) in [
        ("original", &domains.original),
        ("auxiliary", &domains.auxiliary),
        ("auxiliary_labeled", &domains.auxiliary_labeled),
        ("ood", &domains.ood),
    ] {
        let entries = write_dataset(ds, format!("{out}/{name}"))?;
        let labeled = entries.iter().filter(|e| e.depth_path.is_some()).count();
        println!("{name:>18}: {} images, {labeled} depth maps", entries.len());
    }
    Ok(())
}
