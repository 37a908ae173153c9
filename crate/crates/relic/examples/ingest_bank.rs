//! Loading and validating example banks.
//!
//! Builds a small bank in memory, round-trips it through the JSONL format,
//! and shows what the loader rejects: duplicate ids, blank text, and a
//! language tag that disagrees with the file's expected language.

use std::io::Write as _;

use relic::corpus::{load_bank, save_bank, ExampleBank, ExampleTriplet};

fn item(id: &str, query: &str, response: &str, polarity: i8) -> ExampleTriplet {
    ExampleTriplet {
        id: id.to_string(),
        language: "sw".to_string(),
        query: query.to_string(),
        response: response.to_string(),
        polarity,
    }
}

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("sw.bank.jsonl");

    let mut bank = ExampleBank::new("sw");
    bank.positives.push(item("p1", "safari which road is open", "GOOD the north road", 1));
    bank.positives.push(item("p2", "mazao when does rain come", "GOOD in april", 1));
    bank.negatives.push(item("n1", "safari which road is open", "no idea", -1));
    save_bank(&bank, &path)?;

    let loaded = load_bank(&path, "sw")?;
    println!(
        "loaded {} items ({} positive, {} negative), fingerprint {}",
        loaded.len(),
        loaded.positives.len(),
        loaded.negatives.len(),
        loaded.fingerprint().to_hex()
    );
    assert_eq!(loaded, bank);

    // A record whose language tag disagrees with the bank file is an error,
    // not a silently skipped line.
    let bad = dir.path().join("mixed.bank.jsonl");
    let mut f = std::fs::File::create(&bad)?;
    writeln!(
        f,
        r#"{{"id":"x1","language":"de","query":"wo ist der markt","response":"GOOD am platz","polarity":1}}"#
    )?;
    match load_bank(&bad, "sw") {
        Err(e) => println!("mixed-language file rejected: {e}"),
        Ok(_) => unreachable!("the loader must reject a foreign language tag"),
    }

    Ok(())
}
