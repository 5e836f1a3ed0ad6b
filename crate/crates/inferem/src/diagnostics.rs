//! Gradient verification suite over every primitive and composite, used by
//! the `gradcheck` command and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{gradient_check, gradient_check_params, sabotaged_square, Tensor};
use crate::corpus::BOS;
use crate::decoder::EmotionDecoder;
use crate::embedding::EmbeddingTables;
use crate::encoder::EcEncoder;
use crate::fusion::MaifNet;
use crate::objective::{attention_loss, combine, emotion_loss, sequence_nll, LossWeights};

/// Pass threshold for every check.
pub const TOLERANCE: f64 = 1e-4;

/// One named check: worst relative error across all seeds and coordinates.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub max_error: f64,
    pub pass: bool,
}

fn outcome(name: &str, max_error: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        max_error,
        pass: max_error < TOLERANCE,
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len: usize = shape.iter().product::<usize>().max(1);
    Tensor::from_shape(
        shape.to_vec(),
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .expect("static shape")
}

/// Run the whole suite: every primitive and every composite, `seeds` random
/// points each. Optionally include a deliberately broken rule to show the
/// checker catches it (that check "passes" when the error is large).
pub fn gradient_suite(seeds: u64, include_sabotage: bool) -> Vec<CheckOutcome> {
    let mut results: Vec<CheckOutcome> = Vec::new();
    let mut record = |name: &str, err: f64| {
        match results.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.max_error = c.max_error.max(err);
                c.pass = c.max_error < TOLERANCE;
            }
            None => results.push(outcome(name, err)),
        }
    };

    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        primitive_checks(&mut rng, &mut record);
        composite_checks(&mut rng, seed, &mut record);
    }

    if include_sabotage {
        // a deliberately wrong rule, graded like any other check: it must
        // show up as a reported failure
        let x = Tensor::vector(vec![0.7, -1.3]).expect("static");
        let err = gradient_check(|t| Ok(sabotaged_square(t).sum()), &x).expect("sabotage check");
        results.push(outcome("sabotaged_square (injected)", err));
    }
    results
}

fn primitive_checks(rng: &mut ChaCha8Rng, record: &mut impl FnMut(&str, f64)) {
    let m = rand_tensor(rng, &[3, 4]);
    let m2 = rand_tensor(rng, &[3, 4]);
    let k = rand_tensor(rng, &[4, 2]);
    let v = rand_tensor(rng, &[4]);
    let pos = Tensor::from_shape(
        vec![2, 3],
        (0..6).map(|_| rng.gen_range(0.2..2.0)).collect(),
    )
    .expect("static shape");
    let mask: Vec<bool> = (0..12).map(|i| i % 3 == 0).collect();
    let ids = vec![2usize, 0, 1, 2];
    let gather_ids = vec![1usize, 3, 0];
    let checks: Vec<(&str, crate::autograd::Result<f64>)> = vec![
        ("matmul (lhs)", gradient_check_params(|| Ok(m.matmul(&k)?.sum()), &m)),
        ("matmul (rhs)", gradient_check_params(|| Ok(m.matmul(&k)?.mean()), &k)),
        ("add", gradient_check_params(|| Ok(m.add(&m2)?.square().mean()), &m)),
        ("sub", gradient_check_params(|| Ok(m.sub(&m2)?.square().mean()), &m2)),
        ("mul", gradient_check_params(|| Ok(m.mul(&m2)?.mean()), &m2)),
        ("scale", gradient_check(|t| Ok(t.scale(-2.5).square().sum()), &m)),
        ("add_bias", gradient_check_params(|| Ok(m.add_bias(&v)?.square().mean()), &v)),
        ("mul_bias", gradient_check_params(|| Ok(m.mul_bias(&v)?.square().mean()), &v)),
        ("concat (rows)", gradient_check_params(|| Ok(Tensor::concat(0, &[&m, &m2])?.square().mean()), &m2)),
        ("concat (cols)", gradient_check_params(|| Ok(Tensor::concat(1, &[&m, &m2])?.square().mean()), &m)),
        ("slice_rows", gradient_check(|t| Ok(t.slice_rows(1, 2)?.square().sum()), &m)),
        ("slice_cols", gradient_check(|t| Ok(t.slice_cols(1, 2)?.square().sum()), &m)),
        ("softmax", gradient_check(|t| Ok(t.softmax().square().sum()), &m)),
        ("layer_norm", gradient_check(|t| Ok(t.layer_norm(1e-5)?.square().sum()), &m)),
        ("relu", gradient_check(|t| Ok(t.relu().square().sum()), &m)),
        ("embedding_lookup", gradient_check_params(|| Ok(Tensor::embedding_lookup(&m, &ids)?.square().mean()), &m)),
        ("masked_fill", gradient_check(|t| Ok(t.masked_fill(&mask, 0.0)?.square().sum()), &m)),
        ("mean", gradient_check(|t| Ok(t.mean()), &m)),
        ("sum", gradient_check(|t| Ok(t.sum()), &m)),
        ("mean_axis0", gradient_check(|t| Ok(t.mean_axis0()?.square().sum()), &m)),
        ("square", gradient_check(|t| Ok(t.square().mean()), &m)),
        ("log", gradient_check(|t| Ok(t.log().sum()), &pos)),
        ("transpose", gradient_check(|t| Ok(t.transpose()?.square().mean()), &m)),
        ("reshape", gradient_check(|t| Ok(t.reshape(vec![4, 3])?.square().mean()), &m)),
        ("gather_rows", gradient_check(|t| Ok(t.gather_rows(&gather_ids)?.square().sum()), &m)),
        ("pick", gradient_check(|t| Ok(t.pick(2)?.square()), &v)),
    ];
    for (name, err) in checks {
        record(name, err.expect("primitive check must evaluate"));
    }
}

fn composite_checks(rng: &mut ChaCha8Rng, seed: u64, record: &mut impl FnMut(&str, f64)) {
    const D: usize = 4;
    const V: usize = 9;

    // MAIFNet with a linear probe loss, checked against inputs and one
    // deep parameter
    let net = MaifNet::new("gc.maif", D, 2, rng);
    let q = rand_tensor(rng, &[2, D]);
    let kv = rand_tensor(rng, &[3, D]);
    let probe = rand_tensor(rng, &[2, D]);
    let maif_loss = || Ok(net.fuse(&q, &kv)?.mul(&probe)?.sum());
    record("MAIFNet (query)", gradient_check_params(maif_loss, &q).expect("maifnet q"));
    record("MAIFNet (key/value)", gradient_check_params(maif_loss, &kv).expect("maifnet kv"));
    let mut params = Vec::new();
    net.collect(&mut params);
    let w = params.iter().find(|p| p.name().ends_with("att.v.w")).expect("param");
    record("MAIFNet (parameter)", gradient_check_params(maif_loss, w.tensor()).expect("maifnet w"));

    // EcEnc with one concept neighbor, probed through input, neighbor and a
    // layer parameter
    let enc = EcEncoder::new("gc.ecenc", D, 2, 1, rng);
    let base = rand_tensor(rng, &[3, D]);
    let neighbor = rand_tensor(rng, &[2, D]);
    let enc_probe = rand_tensor(rng, &[3, D]);
    let enc_loss = || {
        let enriched = crate::embedding::EnrichedSequence {
            base: base.clone(),
            concepts: vec![
                None,
                Some(crate::embedding::ConceptNeighbors {
                    embeddings: neighbor.clone(),
                    scores: vec![0.8, 0.5],
                }),
                None,
            ],
            eta: vec![0.2, 0.9, 0.0],
        };
        Ok(enc.encode(&enriched)?.hidden.mul(&enc_probe)?.sum())
    };
    record("EcEnc (input)", gradient_check_params(enc_loss, &base).expect("ecenc base"));
    record("EcEnc (concept)", gradient_check_params(enc_loss, &neighbor).expect("ecenc concept"));
    let mut params = Vec::new();
    enc.collect(&mut params);
    let w = params.iter().find(|p| p.name().ends_with("ff.ff1.w")).expect("param");
    record("EcEnc (parameter)", gradient_check_params(enc_loss, w.tensor()).expect("ecenc w"));

    // Decoder through a teacher-forced NLL
    let dec = EmotionDecoder::new("gc.dec", D, 2, 1, V, rng);
    let tables = EmbeddingTables::new(V, D, 16, seed ^ 0xD0C);
    let signal = rand_tensor(rng, &[D]);
    let memory = rand_tensor(rng, &[3, D]);
    let gold = vec![4usize, 7, 5];
    let prefix = vec![BOS, 4, 7];
    let dec_loss = || {
        let (probs, _) = dec.decode_prefix(&signal, &memory, &prefix, &tables)?;
        sequence_nll(&probs, &gold)
    };
    record("Dec (signal)", gradient_check_params(dec_loss, &signal).expect("dec signal"));
    record("Dec (memory)", gradient_check_params(dec_loss, &memory).expect("dec memory"));
    let mut params = Vec::new();
    dec.collect(&mut params);
    let w = params.iter().find(|p| p.name().ends_with("cross.k.w")).expect("param");
    record("Dec (parameter)", gradient_check_params(dec_loss, w.tensor()).expect("dec w"));

    // Prediction/response losses as softmax-NLL over a projection
    let logits_w = rand_tensor(rng, &[D, V]);
    let feats = rand_tensor(rng, &[3, D]);
    let nll_gold = vec![2usize, 8, 0];
    let nll_loss = || sequence_nll(&feats.matmul(&logits_w)?.softmax(), &nll_gold);
    record("L_p / L_r (sequence NLL)", gradient_check_params(nll_loss, &logits_w).expect("nll"));

    // Emotion loss
    let e_signal = rand_tensor(rng, &[D]);
    let w_e = rand_tensor(rng, &[3, D]);
    let emo = || emotion_loss(&e_signal, &w_e, 1).map(|(l, _)| l);
    record("L_e (emotion)", gradient_check_params(emo, &w_e).expect("emotion w"));
    record("L_e (signal)", gradient_check_params(emo, &e_signal).expect("emotion sig"));

    // Attention loss against a softmax-produced attention vector
    let attn_logits = rand_tensor(rng, &[5]);
    let eta = vec![0.1, 0.9, 0.4, 0.0, 0.6];
    let attn = |t: &Tensor| attention_loss(&eta, &t.softmax());
    record("L_a (attention)", gradient_check(attn, &attn_logits).expect("attention"));

    // Combined loss on both switch branches; component values sit far from
    // the switch boundary so perturbation cannot flip it
    let weights = LossWeights::default();
    for (name, base_p) in [("combined L (alpha1 high)", 2.0), ("combined L (alpha1 low)", 0.3)] {
        let parts = rand_tensor(rng, &[4]);
        let combined = |t: &Tensor| {
            let lp = t.pick(0)?.square().add(&Tensor::scalar(base_p))?;
            let lr = t.pick(1)?.square().add(&Tensor::scalar(1.0))?;
            let le = t.pick(2)?.square();
            let la = t.pick(3)?.square();
            let (total, _) = combine(Some(&lp), &lr, &le, &la, &weights, None)?;
            Ok(total)
        };
        record(name, gradient_check(combined, &parts).expect("combined"));
    }
}
