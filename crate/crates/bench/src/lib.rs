//! Shared fixtures for the criterion benchmarks.

use codecache::model::{random_prefetch, DeliveryProblem, DemandVector, ProblemInstance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded random problems with `N = K` and distinct demands.
pub fn problems(users: usize, file_bits: usize, cache_files: usize, count: usize, seed: u64) -> Vec<DeliveryProblem> {
    let instance = ProblemInstance::new(users, users, file_bits, cache_files).expect("valid instance");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let cache = random_prefetch(&instance, &mut rng);
            let demands = DemandVector::random_distinct(&instance, &mut rng).expect("K <= N");
            DeliveryProblem::new(instance, cache, demands).expect("consistent problem")
        })
        .collect()
}
