//! Fixed inputs shared by the benchmarks.

use posratio_core::simulation::default_specs;
use posratio_core::{generate, GeneratorSpec, ScatterData, SummaryStats};

pub fn published_samples() -> [SummaryStats; 2] {
    [
        SummaryStats::new(36, 51, 3.2, 2.3, 2.32).expect("valid sample"),
        SummaryStats::new(9, 92, 3.4, 2.1, 1.62).expect("valid sample"),
    ]
}

/// One seeded dataset per default generator shape.
pub fn shape_datasets(n: usize) -> Vec<(String, ScatterData)> {
    default_specs()
        .into_iter()
        .map(|spec| {
            let spec = GeneratorSpec { n, ..spec };
            let data = generate(&spec).expect("default spec generates");
            (spec.shape.name().to_string(), data)
        })
        .collect()
}
