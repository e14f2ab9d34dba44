use hierpoly::eval::{kernel_baseline, Cell, Family, SampleSize, SweepPlan, TargetRecipe, Width};
use hierpoly::polyalg::{inner_product, project_leq};
use hierpoly::target::{sample_dataset, Dataset, FeatureSpec, LinkSpec, TargetSpec};
use hierpoly::train::{self, default_hparams, write_records, Mode, TrainConfig};

fn ortho(d: usize, link: &[f64], seed: u64) -> TargetSpec {
    let f = FeatureSpec::ortho_decomp(d, 2, &vec![1.0; d], Some(seed)).unwrap();
    TargetSpec::new(f, LinkSpec::new(link).unwrap()).unwrap()
}

fn small_cfg(d: usize, m1: usize, n: usize) -> TrainConfig {
    let mut cfg = default_hparams(d, 2, 0.5).unwrap();
    cfg.set_m1(d, 2, m1);
    cfg.n = n;
    cfg.m2 = 16;
    cfg.n_test = 4000;
    cfg
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    num / b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-300)
}

#[test]
fn zero_steps_leave_u_at_zero() {
    let t = ortho(4, &[0.0, 1.0, 0.5], 1);
    let mut cfg = small_cfg(4, 20, 300);
    cfg.t1 = 0;
    let d1 = sample_dataset(&t, 300, 2).unwrap();
    let mut net = train::init_network_for(&t, &cfg).unwrap();
    let rep = train::stage1(&mut net, &d1, &cfg, |_, _, _, _| {}).unwrap();
    assert!(net.u.iter().all(|&u| u == 0.0));
    let mean_sq = d1.y.iter().map(|y| y * y).sum::<f64>() / 300.0;
    assert!((rep.final_train_loss - mean_sq).abs() < 1e-12 * mean_sq.max(1.0));
}

#[test]
fn distinct_step_sizes_share_the_minimizer() {
    let t = ortho(4, &[0.0, 1.0, 0.5], 3);
    let d1 = sample_dataset(&t, 500, 4).unwrap();
    let mut cfg = small_cfg(4, 30, 500);
    cfg.stop_tol = 1e-14;
    let mut a = train::init_network_for(&t, &cfg).unwrap();
    let mut b = a.clone();
    let r = train::stage1(&mut a, &d1, &cfg, |_, _, _, _| {}).unwrap();
    cfg.eta1 = Some(0.5 * r.eta);
    train::stage1(&mut b, &d1, &cfg, |_, _, _, _| {}).unwrap();
    assert!(rel(&a.u, &b.u) < 1e-4, "{}", rel(&a.u, &b.u));
    assert_eq!(r.monotone_violations, 0);
}

#[test]
fn fitted_target_leaves_c_at_zero() {
    let t = ortho(4, &[0.0, 1.0, 0.5], 5);
    let cfg = small_cfg(4, 20, 400);
    let d1 = sample_dataset(&t, 400, 6).unwrap();
    let mut net = train::init_network_for(&t, &cfg).unwrap();
    train::stage1(&mut net, &d1, &cfg, |_, _, _, _| {}).unwrap();
    let x = sample_dataset(&t, 400, 7).unwrap().x;
    let y: Vec<f64> = x.chunks(4).map(|r| net.forward_mid(r)).collect();
    let d2 = Dataset { d: 4, x, y };
    train::stage2(&mut net, &d2, &cfg, |_, _, _, _| {}).unwrap();
    assert!(net.c.iter().all(|c| c.abs() < 1e-8), "{:?}", net.c);
}

#[test]
fn stage_two_never_raises_its_training_loss() {
    let t = ortho(6, &[0.0, 1.0], 8);
    let cfg = small_cfg(6, 120, 6000);
    let out = train::run_layerwise(&t, &cfg).unwrap();
    let s2: Vec<_> = out.records.iter().filter(|r| r.stage == "stage2").collect();
    let (first, last) = (s2[0], s2[s2.len() - 1]);
    assert!(last.train_loss <= first.train_loss, "{} vs {}", first.train_loss, last.train_loss);
    assert!(last.reg_train_loss <= first.reg_train_loss);
    // identity link: the second stage can only rescale the learned feature
    assert!(last.test_mse <= first.test_mse, "{} vs {}", first.test_mse, last.test_mse);
}

#[test]
fn outer_weights_stay_small_at_d8() {
    let t = ortho(8, &[0.0, 1.0, 0.5], 9);
    let mut cfg = default_hparams(8, 2, 0.5).unwrap();
    cfg.n = 8000;
    let out = train::run_layerwise(&t, &cfg).unwrap();
    let cmax = out.net.c.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    assert!(cmax <= 1.0, "{cmax}");
}

#[test]
fn runs_are_deterministic() {
    let t = ortho(4, &[0.0, 1.0, 0.5], 10);
    let cfg = small_cfg(4, 20, 500);
    let a = train::run(&t, &cfg).unwrap();
    let b = train::run(&t, &cfg).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.net, b.net);
    let mut adam = cfg.clone();
    adam.mode = Mode::JointAdam;
    adam.adam.epochs = 5;
    assert_eq!(train::run(&t, &adam).unwrap().records, train::run(&t, &adam).unwrap().records);
}

#[test]
fn adam_with_zero_rate_is_a_no_op() {
    let t = ortho(4, &[0.0, 1.0, 0.5], 11);
    let mut cfg = small_cfg(4, 20, 200);
    cfg.mode = Mode::JointAdam;
    cfg.adam.lr = 0.0;
    cfg.adam.epochs = 3;
    let out = train::run(&t, &cfg).unwrap();
    let init = train::init_network_for(&t, &cfg).unwrap();
    assert_eq!(out.net, init);
}

#[test]
fn record_file_carries_config_header() {
    let t = ortho(3, &[0.0, 1.0, 0.5], 12);
    let cfg = small_cfg(3, 10, 200);
    let out = train::run(&t, &cfg).unwrap();
    let mut buf = Vec::new();
    write_records(&mut buf, &t, &cfg, &out.records).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("# target.kind=ortho\n"));
    assert!(text.contains("# train.m1=10\n"));
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert!(header.starts_with("run_id,mode,d,k,q,L"));
}

#[test]
fn sweep_cells_do_not_depend_on_grid_shape() {
    let recipe = TargetRecipe {
        family: Family::Ortho,
        k: 2,
        link: vec![0.0, 1.0, 0.5],
        normalize: false,
    };
    let mut base = default_hparams(3, 2, 0.5).unwrap();
    base.n_test = 1000;
    let plan = |sizes: Vec<SampleSize>| SweepPlan {
        dims: vec![3],
        sizes,
        seeds: vec![0, 1],
        recipe: recipe.clone(),
        base: base.clone(),
        m1: Width::Fixed(8),
        master_seed: 4,
    };
    let big = plan(vec![SampleSize::Absolute(100), SampleSize::Absolute(200)]);
    let small = plan(vec![SampleSize::Absolute(200)]);
    let pick = |p: &SweepPlan, n: usize, seed: u64| -> Cell {
        p.cells().into_iter().find(|c| c.n == n && c.seed == seed).unwrap()
    };
    let a = big.run_cell(&pick(&big, 200, 1));
    let b = small.run_cell(&pick(&small, 200, 1));
    assert_eq!(a.summary.test_mse, b.summary.test_mse);
    assert_eq!(a.summary.feat_corr, b.summary.feat_corr);
}

#[test]
fn kernel_is_near_exact_when_overdetermined() {
    let t = ortho(3, &[0.0, 1.0, 0.5], 13);
    let train_set = sample_dataset(&t, 400, 14).unwrap();
    let r = kernel_baseline(&t, &train_set, 4, &hierpoly::eval::default_ridge_grid(), 2000, 15).unwrap();
    assert!(r.test_mse.mean < 1e-4, "{:?}", r.test_mse);
}

#[test]
fn kernel_below_target_degree_hits_the_projection_floor() {
    let t = ortho(3, &[0.0, 1.0, 0.5], 16);
    let h = t.poly();
    let low = project_leq(&h, 2);
    let diff = h.sub(&low).unwrap();
    let floor = inner_product(&diff, &diff).unwrap();
    let train_set = sample_dataset(&t, 2000, 17).unwrap();
    let r = kernel_baseline(&t, &train_set, 2, &hierpoly::eval::default_ridge_grid(), 20_000, 18).unwrap();
    assert!(r.test_mse.mean >= floor - 3.0 * r.test_mse.se, "{:?} vs {floor}", r.test_mse);
}
