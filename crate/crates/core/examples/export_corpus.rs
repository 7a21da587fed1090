//! Export the evaluation corpus as canonical CSV, plus a seeded target draw.
//!
//! Usage: `cargo run --example export_corpus -- <corpus.csv> [targets.txt] [seed]`

use ppns_core::predict::sample_targets;
use ppns_core::synth;

fn main() {
    let mut args = std::env::args().skip(1);
    let corpus_path = args.next().unwrap_or_else(|| "corpus.csv".to_string());
    let targets_path = args.next();
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);

    let m = synth::corpus();
    std::fs::write(&corpus_path, m.to_canonical_csv()).expect("write corpus");
    eprintln!(
        "wrote {} ({} users, {} items, {} ratings)",
        corpus_path,
        m.n_users(),
        m.n_items(),
        m.n_entries()
    );
    if let Some(path) = targets_path {
        let targets = sample_targets(&m, 200, seed).expect("sample targets");
        let lines: Vec<String> = targets
            .iter()
            .map(|&u| m.external_user(u).to_string())
            .collect();
        std::fs::write(&path, lines.join("\n") + "\n").expect("write targets");
        eprintln!("wrote {path} (200 targets, seed {seed})");
    }
}
