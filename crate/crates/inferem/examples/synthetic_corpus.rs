//! Generate a synthetic empathetic-dialogue corpus and poke at it.
//!
//! ```text
//! cargo run --example synthetic_corpus
//! ```

use inferem::corpus::{
    build_vocabulary, load_empathetic_dialogues, write_synthetic_corpus, KnowledgeBase,
    SyntheticConfig,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = SyntheticConfig {
        num_emotions: 8,
        vocab_size: 300,
        dialogues: 400,
        seed: 42,
    };
    write_synthetic_corpus(&cfg, dir.path())?;
    println!("corpus written to {}", dir.path().display());

    let splits = load_empathetic_dialogues(dir.path())?;
    println!(
        "splits: {} train / {} valid / {} test",
        splits.train.len(),
        splits.valid.len(),
        splits.test.len()
    );
    println!("emotions: {:?}", splits.emotion_names);

    let mut counts = vec![0usize; splits.num_emotions()];
    for d in &splits.train {
        counts[d.emotion_label] += 1;
    }
    println!("train label counts: {counts:?}");

    let kb = KnowledgeBase::load_from_dir(dir.path(), 5)?;
    let vocab = build_vocabulary(&splits.train, &kb);
    println!("vocabulary size: {}", vocab.len());

    let d = &splits.train[0];
    println!("\nsample dialogue (label {}):", splits.emotion_names[d.emotion_label]);
    for u in &d.utterances {
        println!("  {:?}: {}", u.role, u.tokens.join(" "));
    }
    println!("  gold response: {}", d.gold_response.join(" "));

    let emotion_word = &splits.emotion_names[d.emotion_label];
    println!(
        "\nknowledge for `{emotion_word}`: intensity {:.2}, concepts {:?}",
        kb.intensity(emotion_word),
        kb.lookup_concepts(emotion_word)
    );
    Ok(())
}
