//! The intention-fusion block up close: cross attention from a dialogue
//! representation into a last-utterance representation.
//!
//! ```text
//! cargo run --example attention_fusion
//! ```

use inferem::autograd::Tensor;
use inferem::fusion::{concat_intentions, MaifNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dim = 8;
    let net = MaifNet::new("demo", dim, 2, &mut rng);

    // 5 history positions querying 3 last-utterance positions
    let history = random(&mut rng, 5, dim);
    let last_utterance = random(&mut rng, 3, dim);
    let mut probe = Vec::new();
    let fused = net.fuse_probed(&history, &last_utterance, Some(&mut probe))?;
    println!("fused shape: {:?} (always the query shape)", fused.shape());
    for (h, weights) in probe.iter().enumerate() {
        println!("head {h} attention rows:");
        for row in weights.values().chunks(weights.cols()) {
            let cells: Vec<String> = row.iter().map(|w| format!("{w:.3}")).collect();
            println!("  [{}]", cells.join(", "));
        }
    }

    // appending a "virtual" encoding widens the key/value set
    let virtual_enc = random(&mut rng, 2, dim);
    let both = concat_intentions(&last_utterance, Some(&virtual_enc))?;
    println!(
        "\nreal ({} rows) + virtual ({} rows) -> key/value set of {} rows",
        last_utterance.rows(),
        virtual_enc.rows(),
        both.rows()
    );
    let fused = net.fuse(&history, &both)?;
    println!("fused over both: shape {:?}", fused.shape());

    // with a single key every head collapses onto it
    let single = random(&mut rng, 1, dim);
    let mut probe = Vec::new();
    net.fuse_probed(&history, &single, Some(&mut probe))?;
    println!(
        "\nsingle-key attention weights (all exactly 1): {:?}",
        probe[0].values()
    );
    Ok(())
}
