use nbd::config::ExperimentConfig;
use nbd::evalsuite::*;
use nbd::experiment::{self, GeneratedData};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let family = args.get(1).cloned().unwrap_or("exponential".into());
    let epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(200);
    let widths = args.get(3).cloned().unwrap_or("128,128".into());
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let seeds: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3);

    for seed in 0..seeds {
        let toml = format!(r#"
task = "cluster"
seed = {seed}
[data]
kind = "mixture"
family = "{family}"
[model]
icnn-widths = [{widths}]
[train]
epochs = {epochs}
batch = 128
learning-rate = {lr}
margin = 0.2
"#);
        let cfg = ExperimentConfig::from_toml(&toml).unwrap();
        let t0 = Instant::now();
        let data = experiment::generate_data(&cfg).unwrap();
        let (model, trace) = experiment::train_model(&cfg, &data).unwrap();
        let train_t = t0.elapsed().as_secs_f64();
        let GeneratedData::Points { eval, .. } = &data else { unreachable!() };
        let k = eval.labels.iter().max().unwrap() + 1;
        let div = experiment::model_pairwise(&model);
        let res = bregman_kmeans(&eval.points, k, &div, cfg.eval_seed(), 100).unwrap();
        let p_nbd = purity(&res.assignments, &eval.labels);
        let r_nbd = rand_index(&res.assignments, &eval.labels);
        let rese = bregman_kmeans(&eval.points, k, &sq_euclidean_pairwise, cfg.eval_seed(), 100).unwrap();
        let p_euc = purity(&rese.assignments, &eval.labels);
        let losses = trace.split_losses("train");
        println!("{family} seed {seed}: nbd purity {p_nbd:.3} rand {r_nbd:.3} | euclid purity {p_euc:.3} | loss {:.4}->{:.4} | {train_t:.0}s",
                 losses[0], losses.last().unwrap());
    }
}
