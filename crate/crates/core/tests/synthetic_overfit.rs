//! Training sanity oracle on the synthetic faceset: a Logarithmic-8 model must
//! be able to memorize a fixed batch of 64 samples to near-zero loss. This
//! exercises the full 64x64 pipeline (generator, normalization, batching,
//! forward/backward, Adam) end to end without any external data.

use lgc::data::synthetic::make_synthetic_faceset;
use lgc::data::{channel_stats, normalize_image, LabeledImage};
use lgc::model::{Model, NetworkSpec};
use lgc::scheme::canonical_scheme_table;
use lgc::train::{batch_tensor, train_steps};

#[test]
fn log8_overfits_64_synthetic_samples() {
    let (train, _test) = make_synthetic_faceset(11, 64, 6).unwrap();
    let stats = channel_stats(&train).unwrap();
    let mut normalized = train.images.clone();
    for img in &mut normalized {
        normalize_image(img, &stats);
    }
    let refs: Vec<&LabeledImage> = normalized.iter().collect();
    let (x, labels) = batch_tensor(&refs).unwrap();

    let scheme = canonical_scheme_table("Logarithmic-8").unwrap();
    let spec = NetworkSpec::new(scheme, train.num_classes, (64, 64), true).unwrap();
    let mut model = Model::new(spec, 11).unwrap();

    let losses = train_steps(&mut model, &x, &labels, 120, 5e-3, Some(0.05)).unwrap();
    let last = *losses.last().unwrap();
    assert!(
        last < 0.05,
        "loss {last} after {} steps; curve head {:?}",
        losses.len(),
        &losses[..losses.len().min(5)]
    );
}
