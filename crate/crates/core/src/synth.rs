//! Synthetic fixtures.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{FeatureMatrix, LabelVector};
use crate::scalar::Real;

/// Two isotropic unit-variance Gaussian blobs in `d` dimensions. Class 0 is
/// centred at the origin and class 1 at `separation` along the first axis.
/// Labels alternate 0, 1, 0, ...
pub fn two_blobs<T: Real>(n: usize, d: usize, separation: f64, seed: u64) -> (FeatureMatrix<T>, LabelVector) {
    assert!(d >= 1, "two_blobs needs at least one feature");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = (i % 2) as u8;
        let row: Vec<T> = (0..d)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let shift = if j == 0 && y == 1 { separation } else { 0.0 };
                T::lit(z + shift)
            })
            .collect();
        rows.push(row);
        labels.push(y);
    }
    let x = FeatureMatrix::from_rows(&rows).expect("rectangular fixture");
    (x, LabelVector::from_binary(labels).expect("binary labels"))
}
