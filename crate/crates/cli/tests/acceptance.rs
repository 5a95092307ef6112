//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::fs;
use std::time::Instant;

use pmixfed_cli::main_with_args;
use pmixfed_cli::output::{ROUNDS_FILE, VERDICTS_FILE};
use pmixfed_core::data::{
    fisher_yates, gen_quadratic_clients, partition_dirichlet, partition_shard_cap, Dataset, QuadraticFamily,
};
use pmixfed_core::mixup::{
    aggregate_schedule, broadcast_schedule, compute_mu, frozen_layer_count, mix_params, MixFactorInput, MixSchedule,
    Phase,
};
use pmixfed_core::orchestrator::{run_experiment, run_federation, RunSettings};
use pmixfed_core::rng::seeded;
use pmixfed_core::strategy::{ClientState, PMixFed, ScheduleSpec, SpecPolicy};
use pmixfed_core::theory::{
    bias_scaling_spread, check_coefficient_matching, check_descent, check_multistep_bias, check_sgd_equivalence,
    check_strongly_convex, noise_floor_ratio, uniform_round, EffectiveStep, TheoryProblem,
};
use pmixfed_core::{
    DataSource, ExperimentConfig, LayerShape, LayeredParams, LocalObjective, LocalTrainer, LocalWork, ModelKind,
    Optimizer, PartitionScheme, StrategyKind, StrategySpec,
};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Option<f64>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// The reference quadratic setup: 4 weighted clients, 6 dims over 3 layers.
fn quad_family(sigma: f64, seed: u64) -> QuadraticFamily {
    gen_quadratic_clients(4, 6, 3.0, Some(vec![0.1, 0.2, 0.3, 0.4]), seed)
        .unwrap()
        .with_layers(3)
        .unwrap()
        .with_noise(sigma, 64, seed)
        .unwrap()
}

/// `sum_k w_k (theta - c_k + xi_{k, b_k})` straight from the client data.
fn oracle_gradient(fam: &QuadraticFamily, theta: &[f64], batches: &[Vec<usize>]) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    for ((c, w), b) in fam.clients().iter().zip(fam.weights()).zip(batches) {
        let xi = &c.noise_samples()[b[0]];
        for d in 0..theta.len() {
            g[d] += w * (theta[d] - c.center()[d] + xi[d]);
        }
    }
    g
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_theta(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect()
}

fn c1_sgd_equivalence() -> Outcome {
    let fam = quad_family(1.0, 1);
    let problem = TheoryProblem::from_family(&fam, 1.0);
    let mut rng = seeded(100);
    let mut worst = 0.0f64;
    for trial in 0..100 {
        let lambda_bar = rng.random_range(0.0..1.0);
        let step = EffectiveStep::new(0.1, lambda_bar).map_err(err)?;
        let theta = random_theta(&mut rng, 6);
        let params = fam.params_from(&theta).map_err(err)?;
        let (next, batches) = uniform_round(&problem, &params, step, 1, 1000 + trial, true).map_err(err)?;
        let g = oracle_gradient(&fam, &theta, &batches);
        let explicit: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t - step.eta_eff() * gi).collect();
        worst = worst.max(max_gap(&next.flatten(), &explicit));
    }
    let lib = check_sgd_equivalence(&problem, 0.1, None, 1, 7, 100).map_err(err)?;
    ensure(worst <= 1e-10 && lib <= 1e-10, || format!("deviation {worst:e}, library check {lib:e}"))?;
    Ok(format!("max deviation {worst:.2e} over 100 trials"))
}

fn c2_coefficient_matching() -> Outcome {
    let fam = quad_family(1.0, 2);
    let problem = TheoryProblem::from_family(&fam, 1.0);
    let lr_local = 0.1;
    let mut worst = 0.0f64;
    for ratio in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let lr_global = ratio * lr_local;
        let step = EffectiveStep::new(lr_local, 1.0 - ratio).map_err(err)?;
        let mut sgd = vec![0.5; 6];
        let mut mixed = fam.params_from(&sgd).map_err(err)?;
        for t in 0..20 {
            let (next, batches) = uniform_round(&problem, &mixed, step, 1, 500 + t, true).map_err(err)?;
            let g = oracle_gradient(&fam, &sgd, &batches);
            for (s, gi) in sgd.iter_mut().zip(&g) {
                *s -= lr_global * gi;
            }
            mixed = next;
            worst = worst.max(max_gap(&mixed.flatten(), &sgd));
        }
        let lib = check_coefficient_matching(&problem, lr_local, lr_global, 20, 3).map_err(err)?;
        worst = worst.max(lib);
    }
    ensure(worst <= 1e-8, || format!("trajectory gap {worst:e}"))?;
    Ok(format!("max trajectory gap {worst:.2e} over 5 ratios x 20 rounds"))
}

fn c3_strongly_convex() -> Outcome {
    let fam = quad_family(0.0, 3);
    let clean = TheoryProblem::from_family(&fam, 0.0);
    let star = fam.optimum();
    let mut worst = 0.0f64;
    for eta in [0.05, 0.1, 0.3] {
        let step = EffectiveStep::half_mix(eta).map_err(err)?;
        let mut theta = fam.params_from(&[2.0, -1.0, 0.5, 3.0, -2.5, 1.0]).map_err(err)?;
        let dist = |p: &LayeredParams| p.flatten().iter().zip(&star).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for t in 0..40 {
            let before = dist(&theta);
            theta = uniform_round(&clean, &theta, step, 1, t, false).map_err(err)?.0;
            worst = worst.max((dist(&theta) / before - (1.0 - eta).powi(2)).abs());
        }
        let fit = check_strongly_convex(&clean, eta, 100, 3).map_err(err)?;
        worst = worst.max((fit.fitted_factor - fit.expected_factor).abs());
    }
    let noisy = TheoryProblem::from_family(&quad_family(1.0, 3), 1.0);
    let ratio = noise_floor_ratio(&noisy, 0.02, 300, 3000, 8, 3).map_err(err)?;
    ensure(worst <= 1e-6, || format!("contraction factor off by {worst:e}"))?;
    ensure((1.4..=2.8).contains(&ratio), || format!("noise floor ratio {ratio}"))?;
    Ok(format!("factor gap {worst:.2e}, noise-floor ratio {ratio:.3}"))
}

fn c4_descent() -> Outcome {
    let clean = TheoryProblem::from_family(&quad_family(0.0, 4), 0.0);
    let noisy = TheoryProblem::from_family(&quad_family(1.0, 4), 1.0);
    let start = clean.random_point(3.0, 4);
    let quiet = check_descent(&clean, &start, 0.1, 50, 1, 4).map_err(err)?;
    let loud = check_descent(&noisy, &start, 0.1, 50, 1000, 4).map_err(err)?;
    ensure(quiet.violations == 0, || format!("{} noiseless violations", quiet.violations))?;
    ensure(loud.violations <= 2, || format!("{} noisy violations", loud.violations))?;
    Ok(format!("violations: noiseless {}, noisy {} (1000 redraws)", quiet.violations, loud.violations))
}

fn c5_multistep() -> Outcome {
    let fam = quad_family(0.0, 5);
    let clean = TheoryProblem::from_family(&fam, 0.0);
    let noisy = TheoryProblem::from_family(&quad_family(1.0, 5), 1.0);
    let theta = clean.random_point(3.0, 5);
    let lr = 0.05;
    let taus = [1, 2, 4, 8];

    // tau exact local steps contract theta - c_k by (1 - lr)^tau.
    let flat = theta.flatten();
    let grad: Vec<f64> = (0..flat.len())
        .map(|d| fam.clients().iter().zip(fam.weights()).map(|(c, w)| w * (flat[d] - c.center()[d])).sum())
        .collect();
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let exact = check_multistep_bias(&clean, &theta, lr, &taus, 1, 5).map_err(err)?;
    let mut closed_gap = 0.0f64;
    for b in &exact {
        let gain = (1.0 - (1.0 - lr).powi(b.tau as i32)) / (lr * b.tau as f64);
        closed_gap = closed_gap.max((b.bias - (1.0 - gain) * grad_norm).abs());
    }

    let mc = check_multistep_bias(&noisy, &theta, lr, &taus, 2000, 5).map_err(err)?;
    let spread = bias_scaling_spread(&mc).unwrap_or(f64::INFINITY);
    ensure(closed_gap <= 1e-10, || format!("closed form off by {closed_gap:e}"))?;
    ensure(mc[0].bias <= 3.0 * mc[0].noise_level, || {
        format!("tau=1 bias {} above 3 SE {}", mc[0].bias, 3.0 * mc[0].noise_level)
    })?;
    ensure(spread <= 2.0, || format!("bias/(tau-1) spread {spread}"))?;
    Ok(format!(
        "closed-form gap {closed_gap:.2e}, tau=1 bias {:.2e} (3 SE {:.2e}), spread {spread:.3}",
        mc[0].bias,
        3.0 * mc[0].noise_level
    ))
}

fn c6_schedule_oracles() -> Outcome {
    let mu = |acc: f64, round: usize, total: usize, b: f64| {
        compute_mu(MixFactorInput { acc_ratio: acc, round, total_rounds: total, offset: b })
    };
    for (round, total, b) in [(0, 10, 2.0), (3, 10, 2.0), (7, 9, 0.5)] {
        let v = mu(1.0, round, total, b).map_err(err)?;
        ensure(v == 0.5, || format!("mu(Acc=1) = {v}"))?;
    }
    // 1 - sigmoid(1.5) to 20 digits.
    let reference = 0.182_425_523_806_356_2;
    let v = mu(2.0, 1, 2, 2.0).map_err(err)?;
    ensure((v - reference).abs() <= 1e-9, || format!("mu(Acc=2) = {v}"))?;

    let sizes = [1; 5];
    let bcast = broadcast_schedule(&sizes, 0.3).map_err(err)?;
    let agg = aggregate_schedule(&sizes, 0.3).map_err(err)?;
    let check = |got: &[f64], want: [f64; 5], name: &str| -> Result<(), String> {
        for (g, w) in got.iter().zip(want) {
            // Clamped entries are exact; interior ones carry one rounding of mu * i.
            let ok = if w == 0.0 || w == 1.0 { *g == w } else { (g - w).abs() <= 1e-15 };
            ensure(ok, || format!("{name} schedule {got:?}"))?;
        }
        Ok(())
    };
    check(bcast.lambdas(), [1.0, 0.9, 0.6, 0.3, 0.0], "broadcast")?;
    check(agg.lambdas(), [1.0, 0.7, 0.4, 0.1, 0.0], "aggregate")?;
    Ok(format!("mu(Acc=2) = {v:.17}; schedules {:?} / {:?}", bcast.lambdas(), agg.lambdas()))
}

fn c7_mixing_identities() -> Outcome {
    let mut rng = seeded(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..6);
        let sizes: Vec<usize> = (0..n).map(|_| rng.random_range(1..20)).collect();
        let shapes: Vec<LayerShape> = sizes.iter().map(|&s| LayerShape::vector(s)).collect();
        let total: usize = sizes.iter().sum();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..total).map(|_| rng.random_range(-10.0..10.0)).collect()
        };
        let a = LayeredParams::from_flat(shapes.clone(), &draw(&mut rng)).map_err(err)?;
        let b = LayeredParams::from_flat(shapes, &draw(&mut rng)).map_err(err)?;
        let one = MixSchedule::uniform(&sizes, 1.0, Phase::Broadcast).map_err(err)?;
        let zero = MixSchedule::uniform(&sizes, 0.0, Phase::Aggregate).map_err(err)?;
        ensure(mix_params(&a, &b, &one).map_err(err)?.bit_eq(&a), || "lambda=1 not bit-exact".into())?;
        ensure(mix_params(&a, &b, &zero).map_err(err)?.bit_eq(&b), || "lambda=0 not bit-exact".into())?;
        let lambdas: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let s = MixSchedule::new(lambdas, &sizes, Phase::Broadcast).map_err(err)?;
        let ab = mix_params(&a, &b, &s).map_err(err)?.flatten();
        let ba = mix_params(&b, &a, &s).map_err(err)?.flatten();
        let (fa, fb) = (a.flatten(), b.flatten());
        for i in 0..total {
            worst = worst.max((ab[i] + ba[i] - fa[i] - fb[i]).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("symmetry gap {worst:e}"))?;
    Ok(format!("endpoints bit-exact, symmetry gap {worst:.2e} over 1000 pairs"))
}

fn quad_clients(fam: &QuadraticFamily) -> Vec<ClientState> {
    fam.clients()
        .iter()
        .zip(fam.weights())
        .enumerate()
        .map(|(k, (c, &w))| ClientState::new(k, std::sync::Arc::new(c.clone()) as std::sync::Arc<dyn LocalObjective>, w))
        .collect()
}

fn c8_forgetting_cap() -> Outcome {
    let fam = quad_family(1.0, 8);
    let problem = TheoryProblem::from_family(&fam, 1.0);
    let mut rng = seeded(8);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let step = EffectiveStep::new(0.2, rng.random_range(0.0..1.0)).map_err(err)?;
        let theta = random_theta(&mut rng, 6);
        let (next, batches) =
            uniform_round(&problem, &fam.params_from(&theta).map_err(err)?, step, 1, trial, true).map_err(err)?;
        let g = oracle_gradient(&fam, &theta, &batches);
        let drift = next.flatten().iter().zip(&theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let expect = step.eta_eff() * g.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max((drift - expect).abs());
    }
    ensure(worst <= 1e-10, || format!("drift identity gap {worst:e}"))?;

    // Aggregate mu = 0 retains every layer of the previous global model.
    let strategy = PMixFed::with_policy(SpecPolicy(ScheduleSpec::fixed(0.0)));
    let mut clients = quad_clients(&fam);
    let start = fam.params_from(&random_theta(&mut rng, 6)).map_err(err)?;
    let settings = RunSettings {
        rounds: 5,
        participation: 1.0,
        seed: 8,
        trainer: LocalTrainer::sgd(LocalWork::Steps(4), 1, 0.1),
        evaluate: false,
    };
    let (_, end, _) = run_federation(&strategy, &start, &mut clients, settings).map_err(err)?;
    ensure(end.bit_eq(&start), || "aggregate mu=0 changed the global model".into())?;
    let trained = clients.iter().all(|c| c.local.as_ref().is_some_and(|l| !l.bit_eq(&start)));
    ensure(trained, || "clients did not train".into())?;
    Ok(format!("drift gap {worst:.2e}; mu=0 keeps G bit-exact over 5 rounds"))
}

fn blob_config(kind: StrategyKind, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        num_clients: 10,
        participation: 1.0,
        rounds: 30,
        local_epochs: 2,
        local_steps: None,
        batch_size: 32,
        lr_local: 0.001,
        lr_global: 0.001,
        optimizer: Optimizer::Sgd,
        strategy: StrategySpec::new(kind),
        model: ModelKind::Logistic,
        hidden_dim: None,
        data: DataSource::Synthetic {
            num_classes: 2,
            dim: 10,
            per_class: 250,
            separation: 10.0,
            noise_sd: 1.0,
            test_per_class: 100,
        },
        partition: PartitionScheme::ShardCap { classes_per_client: 1 },
        seed,
    }
}

fn c9_heterogeneity() -> Outcome {
    let mut wins = 0;
    let mut cells = Vec::new();
    for seed in 0..5 {
        let acc = |kind| -> Result<f64, String> {
            run_experiment(&blob_config(kind, seed))
                .map_err(err)?
                .final_personal_accuracy()
                .ok_or_else(|| "no personalized accuracy".to_string())
        };
        let (avg, mix) = (acc(StrategyKind::Fedavg)?, acc(StrategyKind::Pmixfed)?);
        let won = mix >= avg + 0.05 && mix >= 0.90;
        wins += usize::from(won);
        cells.push(format!("seed {seed}: pmixfed {mix:.3} vs fedavg {avg:.3}"));
    }
    let detail = format!("{wins}/5 seeds [{}]", cells.join("; "));
    ensure(wins >= 4, || detail.clone())?;
    Ok(detail)
}

fn c10_communication() -> Outcome {
    let mut base = blob_config(StrategyKind::Fedavg, 10);
    base.model = ModelKind::Mlp1;
    base.hidden_dim = Some(8);
    base.participation = 0.5;
    base.rounds = 6;
    base.local_epochs = 1;
    base.lr_local = 0.05;
    base.partition = PartitionScheme::Dirichlet { alpha: 0.5 };

    let avg = run_experiment(&base).map_err(err)?;
    let p = avg.initial_global.num_params();
    for r in &avg.records {
        let m = r.selected.len();
        ensure(r.params_down == m * p && r.params_up == m * p, || {
            format!("fedavg round {}: {} / {} vs {}", r.round, r.params_down, r.params_up, m * p)
        })?;
    }

    let mut cfg = base.clone();
    cfg.strategy = StrategySpec::new(StrategyKind::Pmixfed);
    let mix = run_experiment(&cfg).map_err(err)?;
    let sizes = mix.initial_global.layer_sizes();
    for r in &mix.records {
        let m = r.selected.len();
        let mut any_down = false;
        let mut any_up = false;
        for c in &r.clients {
            let b = MixSchedule::new(c.broadcast_lambdas.clone(), &sizes, Phase::Broadcast).map_err(err)?;
            let a = MixSchedule::new(c.aggregate_lambdas.clone(), &sizes, Phase::Aggregate).map_err(err)?;
            ensure(c.frozen_down == frozen_layer_count(&b) && c.frozen_up == frozen_layer_count(&a), || {
                format!("round {} client {}: frozen counts disagree with schedules", r.round, c.client_id)
            })?;
            ensure(c.frozen_down == c.broadcast_lambdas.iter().filter(|&&l| l == 0.0).count(), || {
                "broadcast frozen count".into()
            })?;
            ensure(c.frozen_up == c.aggregate_lambdas.iter().filter(|&&l| l == 1.0).count(), || {
                "aggregate frozen count".into()
            })?;
            any_down |= c.frozen_down > 0;
            any_up |= c.frozen_up > 0;
        }
        ensure(!any_down || r.params_down < m * p, || format!("round {} download not reduced", r.round))?;
        ensure(!any_up || r.params_up < m * p, || format!("round {} upload not reduced", r.round))?;
    }
    let (down, up): (usize, usize) = mix.records.iter().fold((0, 0), |(d, u), r| (d + r.params_down, u + r.params_up));
    let full: usize = mix.records.iter().map(|r| r.selected.len() * p).sum();
    Ok(format!("fedavg = m*P every round; pmixfed moved {down}/{full} down, {up}/{full} up"))
}

const DETERMINISM_CONFIG: &str = r#"
N = 8
C = 0.5
T = 4
r = 1
batch = 16
lr_local = 0.05
seed = 5

[strategy]
kind = "KIND"

[model]
kind = "mlp1"
hidden_dim = 8

[data]
num_classes = 4
dim = 6
per_class = 60
test_per_class = 15

[partition]
scheme = "dirichlet"
alpha = 0.3
"#;

fn c11_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let dir = tmp.path();
    let cli = |args: &[&str]| -> Result<(), String> {
        let mut all = vec!["pmixfed"];
        all.extend_from_slice(args);
        match main_with_args(all) {
            0 => Ok(()),
            code => Err(format!("pmixfed {} exited with {code}", args.join(" "))),
        }
    };
    let kinds = ["fedavg", "fedalt", "fedsim", "fedbabu", "pmixfed"];
    for kind in kinds {
        let cfg = dir.join(format!("{kind}.toml"));
        fs::write(&cfg, DETERMINISM_CONFIG.replace("KIND", kind)).map_err(err)?;
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out = dir.join(format!("{kind}_{rep}"));
            cli(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
            outputs.push(fs::read(out.join(ROUNDS_FILE)).map_err(err)?);
        }
        ensure(outputs[0] == outputs[1], || format!("{kind}: rounds.csv differs between runs"))?;
    }
    let mut verdicts = Vec::new();
    for rep in 0..2 {
        let out = dir.join(format!("theory_{rep}"));
        cli(&["theory", "--suite", "all", "--seed", "0", "--out", out.to_str().unwrap()])?;
        verdicts.push(fs::read(out.join(VERDICTS_FILE)).map_err(err)?);
    }
    ensure(verdicts[0] == verdicts[1], || "verdicts.json differs between runs".into())?;
    Ok(format!("rounds.csv identical for {} strategies; verdicts.json identical", kinds.len()))
}

fn shuffled_labels(counts: &[usize], seed: u64) -> Dataset {
    let mut labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
    fisher_yates(&mut labels, &mut seeded(seed));
    let feats = labels.iter().map(|_| vec![0.0]).collect();
    Dataset::classification(feats, labels, counts.len()).unwrap()
}

fn c12_partitions() -> Outcome {
    let mut rng = seeded(12);
    let mut plans = 0;
    while plans < 1000 {
        let classes = rng.random_range(2..10);
        let counts: Vec<usize> = (0..classes).map(|_| rng.random_range(10..120)).collect();
        let data = shuffled_labels(&counts, plans);
        let n = rng.random_range(1..20);
        let s = rng.random_range(1..4);
        let plan = match partition_shard_cap(&data, n, s, plans) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let per_client = plan.classes_per_client(&data).ok_or("missing labels")?;
        ensure(per_client.iter().all(|&c| c <= s), || format!("plan {plans}: {per_client:?} exceeds S={s}"))?;
        plans += 1;
    }

    for seed in 0..1000u64 {
        let classes = rng.random_range(1..8);
        let counts: Vec<usize> = (0..classes).map(|_| rng.random_range(5..80)).collect();
        let data = shuffled_labels(&counts, seed);
        let n = rng.random_range(1..15).min(data.len());
        let alpha = 10f64.powf(rng.random_range(-2.0..2.0));
        let plan = partition_dirichlet(&data, n, alpha, seed).map_err(err)?;
        let mut all: Vec<usize> = plan.clients().concat();
        all.sort_unstable();
        ensure(all == (0..data.len()).collect::<Vec<_>>(), || format!("dirichlet plan {seed} lost samples"))?;
    }

    let data = shuffled_labels(&[2000; 4], 0);
    let labels = data.labels().unwrap();
    let mut worst = 0.0f64;
    for seed in 0..1000u64 {
        let plan = partition_dirichlet(&data, 5, 1e6, seed).map_err(err)?;
        for k in 0..5 {
            for c in 0..4 {
                let held = plan.client(k).iter().filter(|&&i| labels[i] == c).count() as f64;
                worst = worst.max((held / 2000.0 - 0.2).abs() / 0.2);
            }
        }
    }
    ensure(worst <= 0.05, || format!("alpha -> inf share off by {:.2}%", worst * 100.0))?;
    Ok(format!("1000 shard-cap plans within S; 1000 dirichlet plans conserve; uniformity gap {:.2}%", worst * 100.0))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("sgd equivalence", c1_sgd_equivalence, Some(5.0)),
        ("coefficient matching", c2_coefficient_matching, Some(10.0)),
        ("strongly convex contraction", c3_strongly_convex, Some(60.0)),
        ("descent lemma", c4_descent, Some(120.0)),
        ("multi-step bias", c5_multistep, Some(120.0)),
        ("schedule oracles", c6_schedule_oracles, None),
        ("mixing identities", c7_mixing_identities, None),
        ("forgetting cap", c8_forgetting_cap, None),
        ("heterogeneity comparison", c9_heterogeneity, Some(60.0)),
        ("communication accounting", c10_communication, None),
        ("determinism", c11_determinism, None),
        ("partition invariants", c12_partitions, None),
    ];
    let mut failed = Vec::new();
    for (i, (name, check, budget)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = check();
        let secs = started.elapsed().as_secs_f64();
        let outcome = match (outcome, budget) {
            (Ok(d), Some(b)) if secs > *b => Err(format!("{d}; took {secs:.2}s, budget {b}s")),
            (o, _) => o,
        };
        let n = i + 1;
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS [{secs:.2}s] {detail}"),
            Err(detail) => {
                println!("criterion {n} ({name}): FAIL [{secs:.2}s] {detail}");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all 12 criteria passed");
    } else {
        println!("acceptance: {} of 12 criteria failed: {failed:?}", failed.len());
        std::process::exit(1);
    }
}
