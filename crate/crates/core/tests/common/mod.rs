#![allow(dead_code)]

use ndarray::Array2;
use ntm::{build_transition, inject_noise, Dataset, NoiseScheme, TransitionMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Two Gaussian classes, balanced. Informative dimensions have unit
/// variance around `±sep`; uninformative dimensions are `N(0, noise_sd²)`.
pub fn blobs(
    n: usize,
    informative: usize,
    uninformative: usize,
    sep: f64,
    noise_sd: f64,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = informative + uninformative;
    let y: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Array2::from_shape_fn((n, d), |(i, j)| {
        let z: f64 = StandardNormal.sample(&mut rng);
        if j < informative {
            z + if y[i] == 1 { sep } else { -sep }
        } else {
            noise_sd * z
        }
    });
    Dataset::new(x, y.clone(), Some(y), None).unwrap()
}

pub fn with_noise(data: &Dataset, scheme: &NoiseScheme, seed: u64) -> (Dataset, TransitionMatrix) {
    let t = build_transition(scheme, data.k()).unwrap();
    (inject_noise(data, &t, seed).unwrap(), t)
}

/// One pass/fail line per criterion.
pub fn report(id: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
