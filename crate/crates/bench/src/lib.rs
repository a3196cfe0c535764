//! Shared fixtures for the kernel benchmarks.

use rawsense_core::framework::{activity_preset, build};
use rawsense_core::harness::batch_of;
use rawsense_core::nn::Network;
use rawsense_core::rng::Rng;
use rawsense_core::synth::{generate, SynthConfig};
use rawsense_core::tensor::Tensor;
use rawsense_core::CsiInstance;

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::from_fn(&[rows, cols], |_| rng.uniform(-1.0, 1.0))
}

pub fn desk_scale_batch(n: usize) -> (Tensor, Vec<usize>) {
    let cfg = SynthConfig {
        instances_per_class: n.div_ceil(10).max(1),
        ..SynthConfig::default()
    };
    let ds = generate(&cfg).expect("valid config");
    let instances: Vec<&CsiInstance> = ds.instances().iter().take(n).collect();
    batch_of(&instances)
}

pub fn desk_scale_network(filters: usize) -> Network {
    let spec = activity_preset((10, 30, 1), 10)
        .expect("compatible shape")
        .with_filters(filters);
    build(&spec, 7).expect("valid spec")
}
