//! Verify every backward rule against central finite differences.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use inferem::autograd::{gradient_check, Tensor};
use inferem::diagnostics::gradient_suite;

fn main() {
    // the full suite: primitives plus MAIFNet / EcEnc / Dec / loss composites
    for r in gradient_suite(3, false) {
        let status = if r.pass { "ok  " } else { "FAIL" };
        println!("{status} {:<28} max rel err {:.2e}", r.name, r.max_error);
    }

    // checking a one-off function directly
    let point = Tensor::vector(vec![0.4, -1.2, 2.5]).unwrap();
    let err = gradient_check(
        |x| Ok(x.softmax().log().sum().scale(-1.0)),
        &point,
    )
    .unwrap();
    println!("\ncustom check (negative log-softmax sum): max rel err {err:.2e}");
}
