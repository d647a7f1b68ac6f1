//! Splits a document into paragraphs, sentences and entities, prints the
//! pairs that survive the length filter, then builds the 50-document
//! fixture corpus into a JSONL file.
//!
//! ```bash
//! cargo run --release --example build_pairs
//! ```

use r3mem::hierpair::{build_dataset, build_pairs, decompose, load_documents, write_pairs, FilterThresholds};

const LETTER: &str = "\
The harbor in Lisbon was quiet that winter. Ships from Genoa waited for the tide.

Nobody in the office expected the cargo to arrive. Maria Silva signed for it anyway, and \
the crates went to Porto by rail.";

fn main() -> r3mem::Result<()> {
    let d = decompose(LETTER);
    println!("{} paragraphs, {} sentences", d.paragraphs.len(), d.sentences().count());
    for s in d.sentences() {
        println!("  {:<60} entities: {:?}", s.text, s.entities);
    }

    println!("\npairs kept at the default thresholds:");
    for p in build_pairs("letter", LETTER, FilterThresholds::default()) {
        println!("  [{}] {:?}\n        -> {:?}", p.level, short(&p.context), p.query);
    }

    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/docs50");
    let docs = load_documents(dir)?;
    let ds = build_dataset(&docs, FilterThresholds::default())?;
    let out = std::env::temp_dir().join("r3mem_docs50_pairs.jsonl");
    write_pairs(&out, &ds)?;
    let (d2p, p2s, s2e) = ds.counts();
    println!("\n{} documents -> {} pairs (d2p {d2p}, p2s {p2s}, s2e {s2e}) in {}", docs.len(), ds.len(), out.display());
    Ok(())
}

fn short(s: &str) -> String {
    match s.char_indices().nth(48) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
