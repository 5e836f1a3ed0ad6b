//! Intensity-weighted pooling and the emotion classification loss.
//!
//! ```text
//! cargo run --example emotion_signal
//! ```

use inferem::autograd::Tensor;
use inferem::encoder::emotion_signal;
use inferem::objective::emotion_loss;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // four encoded positions, three features each
    let encoded = Tensor::matrix(
        4,
        3,
        vec![
            1.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, //
            0.0, 0.0, 1.0, //
            0.5, 0.5, 0.0,
        ],
    )?;

    // flat intensities: plain column mean
    let uniform = emotion_signal(&encoded, &[0.2; 4])?;
    println!("uniform eta  -> {:?}", uniform.values());

    // an emotional word dominates the pooling
    let peaked = emotion_signal(&encoded, &[0.1, 0.9, 0.1, 0.1])?;
    println!("peaked eta   -> {:?}", peaked.values());

    // softmax weights ignore constant shifts
    let shifted = emotion_signal(&encoded, &[5.1, 5.9, 5.1, 5.1])?;
    println!("shifted eta  -> {:?} (same as peaked)", shifted.values());

    // classify the pooled signal against 3 emotion classes
    let classifier = Tensor::matrix(
        3,
        3,
        vec![
            2.0, 0.0, 0.0, //
            0.0, 2.0, 0.0, //
            0.0, 0.0, 2.0,
        ],
    )?;
    for label in 0..3 {
        let (loss, predicted) = emotion_loss(&peaked, &classifier, label)?;
        println!("label {label}: loss {:.4}, argmax {predicted}", loss.item());
    }
    Ok(())
}
