//! Sources of fresh delivery problems for training and evaluation.

use rand::RngCore;

use crate::error::Result;
use crate::model::{mn_prefetch, random_prefetch, CacheMatrix, DeliveryProblem, DemandVector, ProblemInstance};

/// Produces pruned (`N = K`) delivery problems with distinct demands.
pub trait InstanceSampler {
    /// Dimensions of the problems after pruning.
    fn pruned_instance(&self) -> ProblemInstance;

    fn sample(&mut self, rng: &mut dyn RngCore) -> Result<DeliveryProblem>;
}

fn pruned(original: &ProblemInstance) -> ProblemInstance {
    let k = original.num_users();
    ProblemInstance::new(k, k, original.file_bits(), original.cache_files().min(k))
        .expect("pruned dimensions are valid")
}

/// Uniform random placement, uniform distinct demands.
#[derive(Debug, Clone)]
pub struct RandomPlacement {
    instance: ProblemInstance,
}

impl RandomPlacement {
    pub fn new(instance: ProblemInstance) -> Result<Self> {
        if instance.num_users() > instance.num_files() {
            return Err(crate::Error::Config(format!(
                "distinct demands need K <= N, got {instance}"
            )));
        }
        Ok(Self { instance })
    }
}

impl InstanceSampler for RandomPlacement {
    fn pruned_instance(&self) -> ProblemInstance {
        pruned(&self.instance)
    }

    fn sample(&mut self, rng: &mut dyn RngCore) -> Result<DeliveryProblem> {
        let cache = random_prefetch(&self.instance, rng);
        let demands = DemandVector::random_distinct(&self.instance, rng)?;
        let (problem, _) = DeliveryProblem::new(self.instance, cache, demands)?.pruned()?;
        Ok(problem)
    }
}

/// Fixed segment placement with uniform distinct demands.
#[derive(Debug, Clone)]
pub struct SegmentPlacement {
    instance: ProblemInstance,
    cache: CacheMatrix,
}

impl SegmentPlacement {
    pub fn new(instance: ProblemInstance) -> Result<Self> {
        let cache = mn_prefetch(&instance)?;
        Ok(Self { instance, cache })
    }
}

impl InstanceSampler for SegmentPlacement {
    fn pruned_instance(&self) -> ProblemInstance {
        pruned(&self.instance)
    }

    fn sample(&mut self, rng: &mut dyn RngCore) -> Result<DeliveryProblem> {
        let demands = DemandVector::random_distinct(&self.instance, rng)?;
        let (problem, _) = DeliveryProblem::new(self.instance, self.cache.clone(), demands)?.pruned()?;
        Ok(problem)
    }
}

/// Draws `count` problems from a sampler.
pub fn draw(sampler: &mut dyn InstanceSampler, count: usize, rng: &mut dyn RngCore) -> Result<Vec<DeliveryProblem>> {
    (0..count).map(|_| sampler.sample(rng)).collect()
}
