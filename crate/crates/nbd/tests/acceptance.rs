//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line. Heavy training criteria read the stored configs under `configs/`
//! (the same ones the CLI `reproduce` command embeds).

use std::path::PathBuf;
use std::time::Instant;

use nbd::autodiff::tape::{sigmoid, softplus, Tape};
use nbd::config::ExperimentConfig;
use nbd::datagen::{
    gen_regression_pairs, CorrelationLevel, LabeledPairSet, RegressionSpec, RegressionTarget,
};
use nbd::divergence::{
    bregman, bregman_batch, learned_divergence_batch, ClosedFormGenerator, DivergenceModel,
    DivergenceVariant, GeneratorFn, ModelGenerator,
};
use nbd::encoder::EncoderParams;
use nbd::evalsuite::{bregman_kmeans, purity, rand_index, rank_map_auc, sq_euclidean_pairwise};
use nbd::experiment::{self, GeneratedData};
use nbd::icnn::{init_icnn, IcnnConfig, IcnnParams};
use nbd::train::{
    eval_regression, train_mahalanobis, train_regression, MahalanobisBaseline, TrainConfig,
};
use nbd::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check(criterion: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{criterion}: {verdict} — {detail}");
    assert!(pass, "{criterion} failed: {detail}");
}

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn stored_config(name: &str) -> ExperimentConfig {
    let path = config_dir().join(format!("{name}.toml"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path:?}: {e}"));
    ExperimentConfig::from_toml(&text).unwrap()
}

// ---------------------------------------------------------------------------
// Independent plain-f64 FICNN evaluator (oracle side of the dual route).
// ---------------------------------------------------------------------------

struct RefIcnn {
    skips: Vec<Mat>,
    w_pos: Vec<Option<Mat>>,
    biases: Vec<Vec<f64>>,
    alpha: f64,
    scale: f64,
}

impl RefIcnn {
    fn from_params(p: &IcnnParams) -> Self {
        RefIcnn {
            skips: p.stages.iter().map(|s| s.skip.clone()).collect(),
            w_pos: p
                .stages
                .iter()
                .map(|s| {
                    s.nonneg_raw.as_ref().map(|raw| {
                        let mut w = raw.clone();
                        for v in w.data_mut() {
                            *v = softplus(*v);
                        }
                        w
                    })
                })
                .collect(),
            biases: p.stages.iter().map(|s| s.bias.clone()).collect(),
            alpha: p.config.alpha,
            scale: p.output_scale,
        }
    }

    /// Refresh one effective weight after a raw parameter perturbation.
    fn update_raw(&mut self, stage: usize, idx: usize, raw_value: f64) {
        let w = self.w_pos[stage].as_mut().expect("stage has nonneg weights");
        w.data_mut()[idx] = softplus(raw_value);
    }

    fn phi(&self, x: &[f64]) -> f64 {
        let mut z: Vec<f64> = Vec::new();
        let last = self.skips.len() - 1;
        for (j, skip) in self.skips.iter().enumerate() {
            let width = skip.rows();
            let mut a = vec![0.0; width];
            for (i, av) in a.iter_mut().enumerate() {
                let mut s = self.biases[j][i] + dot(skip.row(i), x);
                if let Some(w) = &self.w_pos[j] {
                    s += dot(w.row(i), &z);
                }
                *av = s;
            }
            if j == last {
                z = a;
            } else {
                for v in &mut a {
                    *v = softplus(*v);
                }
                z = a;
            }
        }
        let mut out = z[0] * self.scale;
        if self.alpha != 0.0 {
            out += self.alpha * dot(x, x);
        }
        out
    }

    /// phi(y) and its input gradient in one pass over the layer chain.
    fn phi_and_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let last = self.skips.len() - 1;
        let mut z: Vec<f64> = Vec::new();
        let mut gates: Vec<Vec<f64>> = Vec::new();
        for (j, skip) in self.skips.iter().enumerate().take(last) {
            let width = skip.rows();
            let mut a = vec![0.0; width];
            for (i, av) in a.iter_mut().enumerate() {
                let mut s = self.biases[j][i] + dot(skip.row(i), x);
                if let Some(w) = &self.w_pos[j] {
                    s += dot(w.row(i), &z);
                }
                *av = s;
            }
            let mut gate = vec![0.0; width];
            for (g, v) in gate.iter_mut().zip(&a) {
                *g = sigmoid(*v);
            }
            gates.push(gate);
            for v in &mut a {
                *v = softplus(*v);
            }
            z = a;
        }
        let w_out = self.w_pos[last].as_ref().unwrap();
        let out_affine =
            self.biases[last][0] + dot(self.skips[last].row(0), x) + dot(w_out.row(0), &z);
        let mut phi = out_affine * self.scale;
        if self.alpha != 0.0 {
            phi += self.alpha * dot(x, x);
        }

        let mut dz: Vec<f64> = w_out.row(0).to_vec();
        let mut grad: Vec<f64> = self.skips[last].row(0).to_vec();
        for j in (0..last).rev() {
            let da: Vec<f64> = gates[j].iter().zip(&dz).map(|(g, d)| g * d).collect();
            let skip = &self.skips[j];
            for (i, dai) in da.iter().enumerate() {
                for (g, sv) in grad.iter_mut().zip(skip.row(i)) {
                    *g += dai * sv;
                }
            }
            if j > 0 {
                let w = self.w_pos[j].as_ref().unwrap();
                let mut next = vec![0.0; w.cols()];
                for (i, dai) in da.iter().enumerate() {
                    for (nv, wv) in next.iter_mut().zip(w.row(i)) {
                        *nv += dai * wv;
                    }
                }
                dz = next;
            }
        }
        for g in &mut grad {
            *g *= self.scale;
        }
        if self.alpha != 0.0 {
            for (g, xv) in grad.iter_mut().zip(x) {
                *g += 2.0 * self.alpha * xv;
            }
        }
        (phi, grad)
    }

    fn divergence(&self, x: &[f64], y: &[f64]) -> f64 {
        let (phi_y, g) = self.phi_and_grad(y);
        let mut rhs = 0.0;
        for (gv, (xv, yv)) in g.iter().zip(x.iter().zip(y)) {
            rhs += gv * (xv - yv);
        }
        self.phi(x) - phi_y - rhs
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[test]
fn criterion_01_gradient_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dims = [2usize, 10, 64];
    let widths = [16usize, 128];
    let mut checked_params = 0usize;
    for trial in 0..50u64 {
        let d = dims[rng.gen_range(0..dims.len())];
        let w1 = widths[rng.gen_range(0..widths.len())];
        let w2 = widths[rng.gen_range(0..widths.len())];
        let params =
            init_icnn(&IcnnConfig { input_dim: d, hidden_widths: vec![w1, w2], alpha: 1e-3 }, trial)
                .unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();

        // Finite differences run against the independent plain evaluator;
        // analytic gradients come from one reverse sweep of D(x, y).
        let mut reference = RefIcnn::from_params(&params);
        let h = 1e-5;
        let mut p = params.clone();

        let mut tape = Tape::new();
        let xi = tape.leaf(&x, 1, d);
        let yi = tape.leaf(&y, 1, d);
        let taped = p.bind(&mut tape);
        let ids = taped.param_ids().to_vec();
        let gen = nbd::divergence::BoundGenerator::Icnn(taped);
        let dnode = nbd::divergence::record_bregman_batch(&mut tape, &gen, xi, yi);
        let grads = tape.backward(dnode).unwrap();
        let analytic: Vec<Vec<f64>> = ids.iter().map(|id| grads.get(*id).to_vec()).collect();
        drop(grads);
        drop(tape);

        // Map flat block order onto (stage, kind) for the reference update.
        let mut block = 0usize;
        for stage in 0..p.stages.len() {
            // skip block
            {
                let len = p.stages[stage].skip.data().len();
                for k in 0..len {
                    let orig = p.stages[stage].skip.data()[k];
                    p.stages[stage].skip.data_mut()[k] = orig + h;
                    reference.skips[stage].data_mut()[k] = orig + h;
                    let up = reference.divergence(&x, &y);
                    p.stages[stage].skip.data_mut()[k] = orig - h;
                    reference.skips[stage].data_mut()[k] = orig - h;
                    let dn = reference.divergence(&x, &y);
                    p.stages[stage].skip.data_mut()[k] = orig;
                    reference.skips[stage].data_mut()[k] = orig;
                    let fd = (up - dn) / (2.0 * h);
                    let ad = analytic[block][k];
                    let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0);
                    assert!(rel < 1e-4, "trial {trial} skip{stage}[{k}]: {ad} vs {fd}");
                }
                checked_params += len;
                block += 1;
            }
            if p.stages[stage].nonneg_raw.is_some() {
                let len = p.stages[stage].nonneg_raw.as_ref().unwrap().data().len();
                for k in 0..len {
                    let orig = p.stages[stage].nonneg_raw.as_ref().unwrap().data()[k];
                    reference.update_raw(stage, k, orig + h);
                    let up = reference.divergence(&x, &y);
                    reference.update_raw(stage, k, orig - h);
                    let dn = reference.divergence(&x, &y);
                    reference.update_raw(stage, k, orig);
                    let fd = (up - dn) / (2.0 * h);
                    let ad = analytic[block][k];
                    let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0);
                    assert!(rel < 1e-4, "trial {trial} w{stage}[{k}]: {ad} vs {fd}");
                }
                checked_params += len;
                block += 1;
            }
            {
                let len = p.stages[stage].bias.len();
                for k in 0..len {
                    let orig = p.stages[stage].bias[k];
                    p.stages[stage].bias[k] = orig + h;
                    reference.biases[stage][k] = orig + h;
                    let up = reference.divergence(&x, &y);
                    p.stages[stage].bias[k] = orig - h;
                    reference.biases[stage][k] = orig - h;
                    let dn = reference.divergence(&x, &y);
                    p.stages[stage].bias[k] = orig;
                    reference.biases[stage][k] = orig;
                    let fd = (up - dn) / (2.0 * h);
                    let ad = analytic[block][k];
                    let rel = (ad - fd).abs() / ad.abs().max(fd.abs()).max(1.0);
                    assert!(rel < 1e-4, "trial {trial} b{stage}[{k}]: {ad} vs {fd}");
                }
                checked_params += len;
                block += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        "criterion 1 (gradient correctness)",
        elapsed < 60.0,
        format!("50 configs, {checked_params} parameter gradients vs finite differences, {elapsed:.1}s"),
    );
}

fn trained_small_ficnn() -> IcnnParams {
    // A quickly trained generator so the axioms are checked on non-random
    // weights too.
    let spec = RegressionSpec {
        pairs: 1500,
        dim: 6,
        informative: 6,
        target: RegressionTarget::SqEuclidean,
        correlation: CorrelationLevel::None,
        seed: 31,
    };
    let pairs = gen_regression_pairs(&spec).unwrap();
    let icnn = init_icnn(&IcnnConfig { input_dim: 6, hidden_widths: vec![16, 16], alpha: 1e-3 }, 32)
        .unwrap();
    let mut model = DivergenceModel::new(
        EncoderParams::identity(6),
        ModelGenerator::Icnn(icnn),
        DivergenceVariant::Plain,
    )
    .unwrap();
    let config = TrainConfig {
        epochs: 15,
        batch_size: 128,
        learning_rate: 3e-3,
        margin: 0.2,
        seed: 33,
        lr_drop: None,
    };
    train_regression(&mut model, &pairs, &config).unwrap();
    match model.generator {
        ModelGenerator::Icnn(p) => p,
        _ => unreachable!(),
    }
}

#[test]
fn criterion_02_bregman_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let n = 10_000usize;
    let d = 6usize;

    let random_icnn =
        init_icnn(&IcnnConfig { input_dim: d, hidden_widths: vec![16, 16], alpha: 1e-3 }, 21)
            .unwrap();
    let trained_icnn = trained_small_ficnn();
    let mahal = {
        let mut g = Mat::zeros(d, d);
        for v in g.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut a = g.transpose().matmul(&g);
        for i in 0..d {
            a[(i, i)] += 0.5;
        }
        ClosedFormGenerator::mahalanobis(a).unwrap()
    };
    let closed = [
        ("sq-euclidean", ClosedFormGenerator::sq_euclidean(), false),
        ("mahalanobis", mahal, false),
        ("xlogx", ClosedFormGenerator::xlogx(), true),
        ("shifted-xlogx", ClosedFormGenerator::shifted_xlogx(), true),
        ("kl-positive", ClosedFormGenerator::kl_positive(), true),
    ];

    let mut worst_neg: f64 = 0.0;
    let draw = |rng: &mut ChaCha8Rng, positive: bool, n: usize, d: usize| -> Mat {
        Mat::from_vec(
            n,
            d,
            (0..n * d)
                .map(|_| if positive { rng.gen_range(0.05..3.0) } else { rng.gen_range(-3.0..3.0) })
                .collect(),
        )
    };

    for (name, gen, positive) in &closed {
        let x = draw(&mut rng, *positive, n, d);
        let y = draw(&mut rng, *positive, n, d);
        let g = GeneratorFn::Closed(gen);
        let dv = bregman_batch(&g, &x, &y).unwrap();
        for (i, v) in dv.iter().enumerate() {
            assert!(*v >= -1e-9, "{name} pair {i}: D = {v}");
            worst_neg = worst_neg.min(*v);
        }
        // Identity of indiscernibles, exact.
        let dz = bregman_batch(&g, &x, &x).unwrap();
        assert!(dz.iter().all(|&v| v == 0.0), "{name}: D(x,x) != 0");
    }

    for (name, icnn) in [("ficnn-random", &random_icnn), ("ficnn-trained", &trained_icnn)] {
        let x = draw(&mut rng, false, n, d);
        let y = draw(&mut rng, false, n, d);
        let g = GeneratorFn::Icnn(icnn);
        let dv = bregman_batch(&g, &x, &y).unwrap();
        for (i, v) in dv.iter().enumerate() {
            assert!(*v >= -1e-9, "{name} pair {i}: D = {v}");
            worst_neg = worst_neg.min(*v);
        }
        let dz = bregman_batch(&g, &x, &x).unwrap();
        assert!(dz.iter().all(|&v| v == 0.0), "{name}: D(x,x) != 0");

        // Convexity midpoint inequality on 10^4 triples (x, y, lambda).
        let lam: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
        let mut mid = Mat::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                mid[(i, j)] = lam[i] * x[(i, j)] + (1.0 - lam[i]) * y[(i, j)];
            }
        }
        let fx = icnn.phi_batch(&x).unwrap();
        let fy = icnn.phi_batch(&y).unwrap();
        let fm = icnn.phi_batch(&mid).unwrap();
        for i in 0..n {
            let bound = lam[i] * fx[i] + (1.0 - lam[i]) * fy[i];
            assert!(fm[i] <= bound + 1e-9, "{name} triple {i}: {} > {bound}", fm[i]);
        }
    }

    check(
        "criterion 2 (Bregman axioms)",
        true,
        format!("{n} pairs per generator, worst negative value {worst_neg:.2e}, midpoint convexity held"),
    );
}

#[test]
fn criterion_03_closed_form_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mahal = {
        let mut g = Mat::zeros(5, 5);
        for v in g.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut a = g.transpose().matmul(&g);
        for i in 0..5 {
            a[(i, i)] += 0.5;
        }
        ClosedFormGenerator::mahalanobis(a).unwrap()
    };
    let gens = [
        ClosedFormGenerator::sq_euclidean(),
        mahal,
        ClosedFormGenerator::xlogx(),
        ClosedFormGenerator::shifted_xlogx(),
        ClosedFormGenerator::kl_positive(),
    ];
    let mut worst_rel: f64 = 0.0;
    for gen in &gens {
        let positive = !matches!(
            gen.kind,
            nbd::divergence::ClosedFormKind::SqEuclidean
                | nbd::divergence::ClosedFormKind::Mahalanobis
        );
        for _ in 0..200 {
            let x: Vec<f64> = (0..5)
                .map(|_| if positive { rng.gen_range(0.05..3.0) } else { rng.gen_range(-3.0..3.0) })
                .collect();
            let y: Vec<f64> = (0..5)
                .map(|_| if positive { rng.gen_range(0.05..3.0) } else { rng.gen_range(-3.0..3.0) })
                .collect();
            let via_jvp = bregman(&GeneratorFn::Closed(gen), &x, &y).unwrap();
            let analytic = gen.divergence(&x, &y).unwrap();
            let rel = (via_jvp - analytic).abs() / via_jvp.abs().max(analytic.abs()).max(1e-30);
            assert!(rel < 1e-8, "{:?}: {via_jvp} vs {analytic}", gen.kind);
            worst_rel = worst_rel.max(rel);
        }
    }
    // The worked scalar value: D(4, 6) for phi(t) = t log t.
    let xlogx = ClosedFormGenerator::xlogx();
    let worked = bregman(&GeneratorFn::Closed(&xlogx), &[4.0], &[6.0]).unwrap();
    let pass = (worked - 0.378).abs() < 5e-4;
    check(
        "criterion 3 (closed-form oracle equivalence)",
        pass,
        format!("worst relative gap {worst_rel:.2e}; D(4,6) = {worked:.5} vs 0.378"),
    );
}

fn load_pairs(config: &ExperimentConfig) -> (LabeledPairSet, LabeledPairSet) {
    match experiment::generate_data(config).unwrap() {
        GeneratedData::Pairs { train, test } => (train, test),
        _ => unreachable!("pair task"),
    }
}

fn train_config_of(config: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        epochs: config.train.epochs,
        batch_size: config.train.batch,
        learning_rate: config.train.learning_rate,
        margin: config.train.margin,
        seed: config.train_seed(),
        lr_drop: match (config.train.lr_drop_epoch, config.train.lr_drop_rate) {
            (Some(e), Some(r)) => Some((e, r)),
            _ => None,
        },
    }
}

/// Train NBD and the Mahalanobis baseline with the same protocol; returns
/// (nbd mae, maha mae) on the test split.
fn run_regression_pairfair(config: &ExperimentConfig) -> (f64, f64) {
    let (train, test) = load_pairs(config);
    let (model, _) = experiment::train_model(config, &GeneratedData::Pairs {
        train: train.clone(),
        test: LabeledPairSet::new(train.dim),
    })
    .unwrap();
    let nbd_eval = eval_regression(&model, &test, 4096).unwrap();

    let mut baseline = MahalanobisBaseline::init(train.dim, config.model_seed());
    train_mahalanobis(&mut baseline, &train, &train_config_of(config)).unwrap();
    let (_, maha_mae) = baseline.eval(&test).unwrap();
    (nbd_eval.mae, maha_mae)
}

#[test]
fn criterion_04_regression_symmetric_target() {
    let start = Instant::now();
    let config = stored_config("regress-euclidean");
    let (nbd_mae, maha_mae) = run_regression_pairfair(&config);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = nbd_mae <= 0.35 && nbd_mae <= 2.0 * maha_mae && elapsed < 600.0;
    check(
        "criterion 4 (symmetric regression)",
        pass,
        format!("nbd mae {nbd_mae:.4} (<= 0.35), mahalanobis mae {maha_mae:.4} (within 2x), {elapsed:.0}s"),
    );
}

#[test]
fn criterion_05_regression_asymmetric_targets() {
    // xlogx: strict ordering against the baseline on the stored seed.
    let xlogx_cfg = stored_config("regress-xlogx");
    let (nbd_x, maha_x) = run_regression_pairfair(&xlogx_cfg);
    let xlogx_ok = nbd_x < maha_x;

    // KL: strict ordering of the medians over 3 seeds.
    let mut nbd_kl = Vec::new();
    let mut maha_kl = Vec::new();
    for seed in 0..3u64 {
        let mut cfg = stored_config("regress-kl");
        cfg.seed = seed;
        let (n, m) = run_regression_pairfair(&cfg);
        nbd_kl.push(n);
        maha_kl.push(m);
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (nbd_med, maha_med) = (median(&mut nbd_kl), median(&mut maha_kl));
    let kl_ok = nbd_med < maha_med;
    check(
        "criterion 5 (asymmetric regression ordering)",
        xlogx_ok && kl_ok,
        format!(
            "xlogx: nbd {nbd_x:.4} < maha {maha_x:.4}; kl medians: nbd {nbd_med:.4} < maha {maha_med:.4}"
        ),
    );
}

#[test]
fn criterion_06_distributional_clustering() {
    let start = Instant::now();
    let families = ["gaussian", "exponential", "multinomial"];
    let mut nbd_purity = vec![Vec::new(); 3];
    let mut euclid_purity = vec![Vec::new(); 3];
    for seed in 0..5u64 {
        for (fi, family) in families.iter().enumerate() {
            let mut cfg = stored_config(&format!("cluster-{family}"));
            cfg.seed = seed;
            let data = experiment::generate_data(&cfg).unwrap();
            let (model, _) = experiment::train_model(&cfg, &data).unwrap();
            let GeneratedData::Points { eval, .. } = &data else { unreachable!() };
            let k = eval.labels.iter().max().unwrap() + 1;
            let div = experiment::model_pairwise(&model);
            let res = bregman_kmeans(&eval.points, k, &div, cfg.eval_seed(), 100).unwrap();
            nbd_purity[fi].push(purity(&res.assignments, &eval.labels));
            let res =
                bregman_kmeans(&eval.points, k, &sq_euclidean_pairwise, cfg.eval_seed(), 100)
                    .unwrap();
            euclid_purity[fi].push(purity(&res.assignments, &eval.labels));
        }
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let gauss_nbd = median(&mut nbd_purity[0]);
    let exp_nbd = median(&mut nbd_purity[1]);
    let exp_euclid = median(&mut euclid_purity[1]);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = exp_nbd >= exp_euclid + 0.03 && gauss_nbd >= 0.80 && elapsed < 900.0;
    check(
        "criterion 6 (distributional clustering)",
        pass,
        format!(
            "exponential purity: nbd {exp_nbd:.3} vs euclidean {exp_euclid:.3} (gap >= 0.03); gaussian nbd {gauss_nbd:.3} (>= 0.80); medians over 5 seeds; {elapsed:.0}s"
        ),
    );
}

#[test]
fn criterion_07_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..100 {
        let n = rng.gen_range(4..=30);
        let kc = rng.gen_range(2..=4);
        let kl = rng.gen_range(2..=4);
        let assign: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kc)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kl)).collect();

        // purity against the naive double loop.
        let got = purity(&assign, &labels);
        let mut s = 0usize;
        for c in 0..kc {
            let mut best = 0usize;
            for l in 0..kl {
                best = best.max((0..n).filter(|&i| assign[i] == c && labels[i] == l).count());
            }
            s += best;
        }
        assert!((got - s as f64 / n as f64).abs() < 1e-12);

        // rand index against the O(n^2) pair loop.
        let got = rand_index(&assign, &labels);
        let mut agree = 0u64;
        let mut total = 0u64;
        for i in 0..n {
            for j in (i + 1)..n {
                total += 1;
                if (assign[i] == assign[j]) == (labels[i] == labels[j]) {
                    agree += 1;
                }
            }
        }
        assert!((got - agree as f64 / total as f64).abs() < 1e-12);

        // MAP/AUC against brute-force recomputation over rankings.
        let nq = rng.gen_range(1..=6);
        let d = 3;
        let queries =
            Mat::from_vec(nq, d, (0..nq * d).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let corpus = Mat::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let qlabels: Vec<usize> = (0..nq).map(|_| rng.gen_range(0..kl)).collect();
        let got = rank_map_auc(&queries, &qlabels, &corpus, &labels, &sq_euclidean_pairwise);
        let dmat = sq_euclidean_pairwise(&queries, &corpus).unwrap();
        let mut maps = Vec::new();
        let mut aucs = Vec::new();
        let mut skipped = 0usize;
        for (qi, &ql) in qlabels.iter().enumerate() {
            let rel_total = labels.iter().filter(|&&l| l == ql).count();
            if rel_total == 0 {
                skipped += 1;
                continue;
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| dmat[(qi, a)].total_cmp(&dmat[(qi, b)]).then(a.cmp(&b)));
            let mut hits = 0usize;
            let mut ap = 0.0;
            for (rank, &item) in order.iter().enumerate() {
                if labels[item] == ql {
                    hits += 1;
                    ap += hits as f64 / (rank + 1) as f64;
                }
            }
            maps.push(ap / rel_total as f64);
            // AUC by explicit pair counting.
            let mut good = 0u64;
            let mut pairs = 0u64;
            for (ri, &a) in order.iter().enumerate() {
                if labels[a] != ql {
                    continue;
                }
                for (rj, &b) in order.iter().enumerate() {
                    if labels[b] == ql {
                        continue;
                    }
                    pairs += 1;
                    if ri < rj {
                        good += 1;
                    }
                }
            }
            aucs.push(if pairs == 0 { 1.0 } else { good as f64 / pairs as f64 });
        }
        match got {
            Err(_) => assert!(maps.is_empty()),
            Ok(r) => {
                let map = maps.iter().sum::<f64>() / maps.len() as f64;
                let auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
                assert!((r.map - map).abs() < 1e-12, "map {} vs {map}", r.map);
                assert!((r.auc - auc).abs() < 1e-12, "auc {} vs {auc}", r.auc);
                assert_eq!(r.skipped_queries, skipped);
            }
        }
    }
    check("criterion 7 (metric oracles)", true, "100 random instances matched brute force".into());
}

#[test]
fn criterion_08_kmeans_reduction() {
    // With the squared-Euclidean divergence and a shared init, the
    // generalized clustering reproduces the classic iteration for iteration.
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut iterations_checked = 0usize;
    for trial in 0..20u64 {
        let n = rng.gen_range(12..40);
        let d = rng.gen_range(2..5);
        let k = rng.gen_range(2..4.min(n));
        let pts = Mat::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-3.0..3.0)).collect());
        let mut ours_trace: Vec<Vec<usize>> = Vec::new();
        let ours = nbd::evalsuite::bregman_kmeans_traced(
            &pts,
            k,
            &sq_euclidean_pairwise,
            trial,
            50,
            |a| ours_trace.push(a.to_vec()),
        )
        .unwrap();

        // Independent classic Lloyd with the same seeding procedure.
        let reference = classic_kmeans_with_same_seeding(&pts, k, trial, 50);
        assert_eq!(
            ours_trace.len(),
            reference.len(),
            "trial {trial}: iteration counts differ"
        );
        for (it, (a, b)) in ours_trace.iter().zip(&reference).enumerate() {
            assert_eq!(a, b, "trial {trial}: assignments diverged at iteration {it}");
        }
        iterations_checked += ours_trace.len();
        assert_eq!(&ours.assignments, ours_trace.last().unwrap());
    }
    check(
        "criterion 8 (k-means reduction)",
        true,
        format!("20 instances, {iterations_checked} iterations matched classic k-means exactly"),
    );
}

/// Textbook Lloyd with the same divergence-weighted seeding, returning the
/// accepted assignments of every iteration.
fn classic_kmeans_with_same_seeding(
    pts: &Mat,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pts.rows();
    let mut centers: Vec<usize> = vec![rng.gen_range(0..n)];
    while centers.len() < k {
        let cm = pts.select_rows(&centers);
        let d = sq_euclidean_pairwise(pts, &cm).unwrap();
        let mut weights: Vec<f64> = (0..n)
            .map(|i| {
                let row = d.row(i);
                row.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0)
            })
            .collect();
        for &c in &centers {
            weights[c] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        if !centers.contains(&pick) {
            centers.push(pick);
        } else {
            let fresh = (0..n).find(|i| !centers.contains(i)).expect("n >= k");
            centers.push(fresh);
        }
    }
    let mut centroids = pts.select_rows(&centers);
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace: Vec<Vec<usize>> = Vec::new();
    let mut objective = f64::INFINITY;
    for _ in 0..max_iter {
        let mut new_assign = vec![0usize; n];
        let mut new_obj = 0.0;
        for i in 0..n {
            let mut best = 0usize;
            let mut bv = f64::INFINITY;
            for c in 0..k {
                let dv: f64 =
                    pts.row(i).iter().zip(centroids.row(c)).map(|(a, b)| (a - b) * (a - b)).sum();
                if dv < bv {
                    bv = dv;
                    best = c;
                }
            }
            new_assign[i] = best;
            new_obj += bv;
        }
        if new_obj > objective {
            break;
        }
        // Re-seed empties identically to the module.
        loop {
            let mut counts = vec![0usize; k];
            for &c in &new_assign {
                counts[c] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
            let worst = (0..n)
                .max_by(|&a, &b| {
                    let da: f64 = pts
                        .row(a)
                        .iter()
                        .zip(centroids.row(new_assign[a]))
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    let db: f64 = pts
                        .row(b)
                        .iter()
                        .zip(centroids.row(new_assign[b]))
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            new_assign[worst] = empty;
        }
        let unchanged = new_assign == assignments;
        assignments = new_assign;
        objective = new_obj;
        trace.push(assignments.clone());
        if unchanged {
            break;
        }
        let mut sums = Mat::zeros(k, pts.cols());
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(pts.row(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for v in sums.row_mut(c) {
                    *v /= counts[c] as f64;
                }
            }
        }
        centroids = sums;
    }
    trace
}

#[test]
fn criterion_09_gsb_properties() {
    let d = 5;
    let icnn = init_icnn(&IcnnConfig { input_dim: d, hidden_widths: vec![12, 12], alpha: 1e-3 }, 91)
        .unwrap();
    let gsb = DivergenceModel::new(
        EncoderParams::identity(d),
        ModelGenerator::Icnn(icnn.clone()),
        DivergenceVariant::Gsb,
    )
    .unwrap();
    let sqrt_model = DivergenceModel::new(
        EncoderParams::identity(d),
        ModelGenerator::Icnn(icnn),
        DivergenceVariant::Sqrt,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let n = 10_000usize;
    let draw = |rng: &mut ChaCha8Rng| -> Mat {
        Mat::from_vec(n, d, (0..n * d).map(|_| rng.gen_range(-2.5..2.5)).collect())
    };
    let a = draw(&mut rng);
    let b = draw(&mut rng);
    let c = draw(&mut rng);

    // Exact symmetry on 10^4 pairs.
    let ab = learned_divergence_batch(&gsb, &a, &b).unwrap();
    let ba = learned_divergence_batch(&gsb, &b, &a).unwrap();
    for i in 0..n {
        assert_eq!(ab[i].to_bits(), ba[i].to_bits(), "pair {i}: {} vs {}", ab[i], ba[i]);
    }

    // Triangle inequality on 10^4 triples.
    let ac = learned_divergence_batch(&gsb, &a, &c).unwrap();
    let bc = learned_divergence_batch(&gsb, &b, &c).unwrap();
    let mut worst: f64 = f64::NEG_INFINITY;
    for i in 0..n {
        let slack = ab[i] + bc[i] - ac[i];
        worst = worst.max(-slack);
        assert!(slack >= -1e-9, "triple {i}: {} > {} + {}", ac[i], ab[i], bc[i]);
    }

    // Square-root variant: non-negative, zero only at x = y.
    let sab = learned_divergence_batch(&sqrt_model, &a, &b).unwrap();
    let saa = learned_divergence_batch(&sqrt_model, &a, &a).unwrap();
    for i in 0..n {
        assert!(sab[i] >= 0.0);
        assert!(saa[i] <= 1.1e-6, "sqrt at x=x: {}", saa[i]);
        assert!(sab[i] > saa[i], "pair {i} not separated: {} vs {}", sab[i], saa[i]);
    }
    check(
        "criterion 9 (generalized symmetrized properties)",
        true,
        format!("exact symmetry and triangle inequality on {n} samples (worst slack {worst:.2e})"),
    );
}

#[test]
fn criterion_10_shortest_path_desk_scale() {
    let start = Instant::now();
    let base = stored_config("shortest-path-3d");

    // Plain variant.
    let (train, test) = load_pairs(&base);
    let data = GeneratedData::Pairs { train: train.clone(), test: test.clone() };
    let (model, trace) = experiment::train_model(&base, &data).unwrap();
    let losses = trace.split_losses("train");
    let first = losses[0];
    let last = *losses.last().unwrap();
    let train_eval = eval_regression(&model, &train, 4096).unwrap();
    let test_eval = eval_regression(&model, &test, 4096).unwrap();

    // Generalized symmetrized variant on the same data.
    let mut gsb_cfg = base.clone();
    gsb_cfg.model.variant = DivergenceVariant::Gsb;
    let (gsb_model, _) = experiment::train_model(&gsb_cfg, &data).unwrap();
    let gsb_test = eval_regression(&gsb_model, &test, 4096).unwrap();

    let elapsed = start.elapsed().as_secs_f64();
    let drop_ok = last * 5.0 <= first;
    let gap_ok = test_eval.mse > train_eval.mse;
    let gsb_ok = gsb_test.mse.is_finite() && gsb_test.mse <= 3.0 * test_eval.mse;
    check(
        "criterion 10 (shortest-path desk scale)",
        drop_ok && gap_ok && gsb_ok,
        format!(
            "train loss {first:.4} -> {last:.4} (>= 5x drop); test mse {:.4} > train mse {:.4}; gsb test mse {:.4} within 3x; {elapsed:.0}s",
            test_eval.mse, train_eval.mse, gsb_test.mse
        ),
    );
}

#[test]
fn criterion_11_colearning_beats_identity_encoder() {
    let start = Instant::now();
    let mut joint = Vec::new();
    let mut ident = Vec::new();
    for seed in 0..3u64 {
        let mut cfg = stored_config("colearn");
        cfg.seed = seed;
        let data = experiment::generate_data(&cfg).unwrap();
        let (model, _) = experiment::train_model(&cfg, &data).unwrap();
        let GeneratedData::Pairs { test, .. } = &data else { unreachable!() };
        joint.push(eval_regression(&model, test, 4096).unwrap().mse);

        let mut id_cfg = cfg.clone();
        id_cfg.model.encoder = nbd::config::EncoderChoice::Identity;
        let (id_model, _) = experiment::train_model(&id_cfg, &data).unwrap();
        ident.push(eval_regression(&id_model, test, 4096).unwrap().mse);
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (joint_med, ident_med) = (median(&mut joint), median(&mut ident));
    let elapsed = start.elapsed().as_secs_f64();
    let pass = joint_med < 0.05 && joint_med * 2.0 <= ident_med;
    check(
        "criterion 11 (co-learning)",
        pass,
        format!(
            "joint test mse {joint_med:.4} (< 0.05) vs identity-encoder {ident_med:.4} (>= 2x worse); medians over 3 seeds; {elapsed:.0}s"
        ),
    );
}
