//! Stored experiment configs embedded in the binary so `reproduce` works
//! from any working directory. The same files live under `configs/`.

use nbd::config::ExperimentConfig;

const EXPERIMENTS: &[(&str, &str)] = &[
    ("regress-euclidean", include_str!("../../../configs/regress-euclidean.toml")),
    ("regress-xlogx", include_str!("../../../configs/regress-xlogx.toml")),
    ("regress-kl", include_str!("../../../configs/regress-kl.toml")),
    ("cluster-gaussian", include_str!("../../../configs/cluster-gaussian.toml")),
    ("cluster-exponential", include_str!("../../../configs/cluster-exponential.toml")),
    ("cluster-multinomial", include_str!("../../../configs/cluster-multinomial.toml")),
    ("shortest-path-3d", include_str!("../../../configs/shortest-path-3d.toml")),
    ("colearn", include_str!("../../../configs/colearn.toml")),
    ("rank-gaussian", include_str!("../../../configs/rank-gaussian.toml")),
];

pub fn names() -> Vec<&'static str> {
    EXPERIMENTS.iter().map(|(n, _)| *n).collect()
}

pub fn config_by_name(name: &str) -> Option<ExperimentConfig> {
    EXPERIMENTS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentConfig::from_toml(text).expect("builtin config parses"))
}
