//! The adaptive multi-task weight: the prediction loss gets a large weight
//! while it still exceeds the response loss, then a small one.
//!
//! ```text
//! cargo run --example loss_balancing
//! ```

use inferem::autograd::Tensor;
use inferem::objective::{combine, LossWeights};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let weights = LossWeights::default();
    println!(
        "weights: alpha1 {} / {}, alpha2 {}, alpha3 {}\n",
        weights.alpha1_hi, weights.alpha1_lo, weights.alpha2, weights.alpha3
    );

    // a toy trajectory: the prediction loss starts high and catches up
    let trajectory = [
        (5.0, 2.0),
        (3.5, 1.9),
        (2.4, 1.8),
        (1.7, 1.7),
        (1.2, 1.6),
        (0.8, 1.5),
    ];
    println!("{:>6} {:>6} {:>8} {:>8}", "Lp", "Lr", "alpha1", "L");
    for (lp, lr) in trajectory {
        let (total, report) = combine(
            Some(&Tensor::scalar(lp)),
            &Tensor::scalar(lr),
            &Tensor::scalar(0.4),
            &Tensor::scalar(0.05),
            &weights,
            None,
        )?;
        println!(
            "{lp:>6.2} {lr:>6.2} {:>8.2} {:>8.3}",
            report.alpha1_used.unwrap(),
            total.item()
        );
    }

    // without the prediction branch the term vanishes and alpha1 is moot
    let (total, report) = combine(
        None,
        &Tensor::scalar(1.5),
        &Tensor::scalar(0.4),
        &Tensor::scalar(0.05),
        &weights,
        None,
    )?;
    println!(
        "\nprediction branch off: L = {:.3}, alpha1_used = {:?}",
        total.item(),
        report.alpha1_used
    );
    Ok(())
}
