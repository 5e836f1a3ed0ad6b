//! End to end: generate a corpus, train a small model, evaluate it, and
//! generate a few responses with the predicted virtual utterance shown.
//!
//! ```text
//! cargo run --release --example train_synthetic
//! ```
//! Takes a couple of minutes on a laptop CPU.

use inferem::corpus::{
    build_vocabulary, load_empathetic_dialogues, write_synthetic_corpus, KnowledgeBase,
    SyntheticConfig, Vocabulary,
};
use inferem::evalmetrics::DistinctMode;
use inferem::pipeline::{evaluate, train, ModelConfig, ModelParams, TrainConfig, Trainer};

fn text(vocab: &Vocabulary, tokens: &[usize]) -> String {
    tokens.iter().map(|&t| vocab.decode(t)).collect::<Vec<_>>().join(" ")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    write_synthetic_corpus(
        &SyntheticConfig {
            num_emotions: 8,
            vocab_size: 300,
            dialogues: 600,
            seed: 0,
        },
        dir.path(),
    )?;
    let splits = load_empathetic_dialogues(dir.path())?;
    let kb = KnowledgeBase::load_from_dir(dir.path(), 5)?;
    let vocab = build_vocabulary(&splits.train, &kb);
    println!(
        "corpus: {} train dialogues, vocab {}, {} emotions",
        splits.train.len(),
        vocab.len(),
        splits.num_emotions()
    );

    let model = ModelParams::new(ModelConfig {
        dim: 48,
        heads: 2,
        encoder_layers: 2,
        decoder_layers: 2,
        max_len: 64,
        tie_encoders: false,
        vocab_size: vocab.len(),
        num_emotions: splits.num_emotions(),
        seed: 0,
    })?;
    let mut trainer = Trainer::new(
        model,
        TrainConfig {
            lr: 1e-3,
            epochs: 4,
            decode_max_steps: 12,
            ..Default::default()
        },
    )?;
    let mut log = std::io::sink();
    train(
        &mut trainer,
        &splits.train,
        &splits.valid,
        &kb,
        &vocab,
        &mut log,
        |stats| {
            println!(
                "epoch {}: train loss {:.3}, val ppl {:.3}, val acc {:.3}",
                stats.epoch,
                stats.mean_train_loss,
                stats.validation_perplexity,
                stats.validation_accuracy
            );
            stats.validation_accuracy >= 0.99
        },
    )?;

    let report = evaluate(
        &trainer.model,
        &splits.test,
        &kb,
        &vocab,
        &trainer.config,
        DistinctMode::Pooled,
    )?;
    println!("\n{}", report.table());

    println!("generations on held-out dialogues:");
    for dialogue in splits.test.iter().take(3) {
        let last = dialogue.last_utterance();
        println!("  last utterance: {}", last.tokens.join(" "));
        let virtual_tokens = if dialogue.supports_prediction() {
            let v = trainer.model.predict_virtual(dialogue, &kb, &vocab, 12)?;
            println!("  virtual guess : {}", text(&vocab, &v));
            Some(v)
        } else {
            println!("  virtual guess : (single-turn history, skipped)");
            None
        };
        let response = trainer.model.respond_greedy(
            dialogue,
            virtual_tokens.as_deref(),
            &kb,
            &vocab,
            false,
            30,
        )?;
        println!("  response      : {}", text(&vocab, &response));
        println!("  gold          : {}\n", dialogue.gold_response.join(" "));
    }
    Ok(())
}
