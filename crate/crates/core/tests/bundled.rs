//! The shipped data files are generated; this keeps them in sync with the
//! generator (regenerate with `cargo run -p spellscan-core --example gen_bundled`).

use spellscan::spellbook::SpellLexicon;
use spellscan::synth;

#[test]
fn bundled_files_match_the_generator() {
    let dir = spellscan::bundled_data_dir();
    let lexicon = SpellLexicon::load(&dir.join("hp_spells.jsonl")).unwrap();
    let files = synth::bundled_files(&lexicon);
    assert!(files.len() > 10);
    for (rel, body) in files {
        let on_disk = std::fs::read_to_string(dir.join(&rel)).unwrap_or_else(|e| panic!("{rel}: {e}"));
        assert!(on_disk == body, "{rel} is stale; rerun the gen_bundled example");
    }
}
