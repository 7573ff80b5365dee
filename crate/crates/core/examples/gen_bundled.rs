//! Regenerates the files under `data/` from the deterministic generator.
//!
//! ```text
//! cargo run -p spellscan-core --example gen_bundled
//! ```

use spellscan::spellbook::SpellLexicon;
use spellscan::{artifact, bundled_data_dir, synth};

fn main() -> spellscan::Result<()> {
    let dir = bundled_data_dir();
    let lexicon = SpellLexicon::load(&dir.join("hp_spells.jsonl"))?;
    for (rel, body) in synth::bundled_files(&lexicon) {
        let path = dir.join(&rel);
        artifact::write_file(&path, body.as_bytes())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
