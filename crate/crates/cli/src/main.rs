mod config;
mod selftest;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hierpoly::eval::{write_summary, Family, SampleSize, SweepPlan, TargetRecipe, Width, SUMMARY_COLUMNS};
use hierpoly::kv::{fmt_reals, KvBlock};
use hierpoly::network::BiasDistribution;
use hierpoly::rf1d::{uniform_grid, verify_representation, RF1DWeights};
use hierpoly::rng::Streams;
use hierpoly::stein::{loglog_slope, stein_scaling_sweep, SweepFamily};
use hierpoly::target::LinkSpec;
use hierpoly::train::{self, default_hparams, write_records, TrainConfig, RUN_RECORD_COLUMNS};
use hierpoly::{Error, Result};

use config::{get, list, put, reals, usage};

#[derive(Parser)]
#[command(name = "hierpoly", version, about = "Hierarchical polynomial learning lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Flat key=value config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Worker threads for sweep cells and batch evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print the resolved config and exit without running.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Hermite and polynomial identity checks.
    Selftest(SelftestArgs),
    /// Exact Stein residuals over a dimension sweep.
    Stein(SteinArgs),
    /// One training run.
    Train(TrainArgs),
    /// A grid of training runs over (d, n, seed).
    Sweep(SweepArgs),
    /// Univariate random-feature representation.
    Rf1d(Rf1dArgs),
}

#[derive(Args)]
struct SelftestArgs {
    /// Only run checks whose name contains this string.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args)]
struct SteinArgs {
    /// ortho, parity or quadratic.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Link monomial coefficients, e.g. 0,1,0,1 for z + z^3.
    #[arg(long, allow_hyphen_values = true)]
    link: Option<String>,
    /// Comma-separated dimensions.
    #[arg(long)]
    dims: Option<String>,
}

#[derive(Args, Clone)]
struct TargetArgs {
    /// signed, ortho, parity or quadratic.
    #[arg(long)]
    family: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    link: Option<String>,
    /// Rescale the link so that E[h^2] = 1.
    #[arg(long)]
    normalize: Option<bool>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long)]
    d: Option<usize>,
    /// layerwise or joint_adam.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// Record wall-clock milliseconds in the run records.
    #[arg(long)]
    timing: bool,
    /// Print the target polynomial, one term per line.
    #[arg(long)]
    dump_poly: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[arg(long)]
    dims: Option<String>,
    /// Sample sizes such as 5000, 4*d^3, d^3/16.
    #[arg(long)]
    sizes: Option<String>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Inner width: a number or d^e.
    #[arg(long)]
    width: Option<String>,
}

#[derive(Args)]
struct Rf1dArgs {
    /// Monomial coefficients of f, e.g. 0,0,1 for x^2.
    #[arg(long, allow_hyphen_values = true)]
    f: Option<String>,
    /// Truncation radius A.
    #[arg(long)]
    radius: Option<f64>,
    /// Student-t degrees of freedom of the bias.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    n_mc: Option<usize>,
    /// Number of grid intervals on [-A, A].
    #[arg(long)]
    grid: Option<usize>,
    /// c2, constant or linear.
    #[arg(long)]
    construction: Option<String>,
}

const TARGET_KEYS: [&str; 6] = ["family", "d", "k", "link", "normalize", "target_seed"];

fn train_keys() -> Vec<&'static str> {
    let mut keys: Vec<&'static str> = vec![
        "mode", "alpha", "n", "n_test", "m1", "m2", "eta1", "eta2", "xi1", "xi2", "t1", "t2", "stop_tol", "seed",
        "sigma1", "bias_dof", "adam_lr", "adam_beta1", "adam_beta2", "adam_eps", "adam_epochs", "adam_batch",
        "log_every", "timing", "direct",
    ];
    keys.extend(TARGET_KEYS);
    keys
}

fn target_flags(t: &TargetArgs, b: &mut KvBlock) {
    put(b, "family", &t.family);
    put(b, "k", &t.k);
    put(b, "link", &t.link);
    put(b, "normalize", &t.normalize);
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn write_config(dir: &Path, cmd: &str, b: &KvBlock) -> Result<()> {
    let mut f = File::create(dir.join("config.txt"))?;
    writeln!(f, "# hierpoly {} {cmd}", env!("CARGO_PKG_VERSION"))?;
    f.write_all(b.to_text().as_bytes())?;
    Ok(())
}

fn dry_run(cmd: &str, b: &KvBlock) -> i32 {
    println!("# hierpoly {} {cmd} (dry run)", env!("CARGO_PKG_VERSION"));
    print!("{}", b.to_text());
    0
}

fn cmd_selftest(a: &SelftestArgs, c: &Common) -> Result<i32> {
    if c.dry_run {
        for ch in selftest::CHECKS {
            if a.filter.as_deref().is_none_or(|f| ch.name.contains(f)) {
                println!("would run {}", ch.name);
            }
        }
        return Ok(0);
    }
    let hooks = selftest::Hooks {
        flip_hermite: a.inject_fault,
    };
    let mut failed = 0;
    let mut ran = 0;
    for ch in selftest::CHECKS {
        if let Some(f) = &a.filter {
            if !ch.name.contains(f.as_str()) {
                continue;
            }
        }
        ran += 1;
        let err = (ch.run)(&hooks)?;
        if err <= ch.tol {
            println!("PASS {} (max error {err:.2e})", ch.name);
        } else {
            failed += 1;
            println!("FAIL {}: max error {err:.3e} exceeds {:.0e}", ch.name, ch.tol);
        }
    }
    if ran == 0 {
        return Err(usage("no selftest check matches the filter"));
    }
    Ok(if failed > 0 { 1 } else { 0 })
}

fn cmd_stein(a: &SteinArgs, c: &Common) -> Result<i32> {
    let mut defaults = KvBlock::new();
    defaults
        .set("family", "ortho")
        .set("k", 2)
        .set("link", "0,1,0,1")
        .set("dims", "4,6,8,12,16")
        .set("feature_seed", "none");
    let mut flags = KvBlock::new();
    put(&mut flags, "family", &a.family);
    put(&mut flags, "k", &a.k);
    put(&mut flags, "link", &a.link);
    put(&mut flags, "dims", &a.dims);
    if let Some(s) = c.seed {
        flags.set("feature_seed", s);
    }
    let known = ["family", "k", "link", "dims", "feature_seed"];
    let b = config::resolve(defaults, c.config.as_deref(), &c.sets, flags, &known)?;
    if c.dry_run {
        return Ok(dry_run("stein", &b));
    }
    let k: usize = get(&b, "k")?;
    let seed = match b.require("feature_seed")? {
        "none" => None,
        s => Some(s.parse().map_err(|_| Error::Parse(format!("bad feature_seed `{s}`")))?),
    };
    let family = match b.require("family")? {
        "ortho" => SweepFamily::Ortho { k, seed },
        "parity" => SweepFamily::Parity { k },
        "quadratic" => SweepFamily::Quadratic { seed: seed.unwrap_or(0) },
        other => return Err(usage(format!("unknown stein family `{other}`"))),
    };
    let link = LinkSpec::new(&reals(&b, "link")?)?;
    let dims: Vec<usize> = list(&b, "dims")?;
    let sweep = stein_scaling_sweep(family, &link, &dims)?;
    create_out(&c.out)?;
    write_config(&c.out, "stein", &b)?;
    sweep.write_csv(BufWriter::new(File::create(c.out.join("stein.csv"))?))?;
    sweep.write_summary_csv(BufWriter::new(File::create(c.out.join("stein_summary.csv"))?))?;
    let show = |s: Option<f64>| s.map(|v| format!("{v:.4}")).unwrap_or_else(|| "NA".into());
    println!(
        "stein: {} dims, slope_k {}, slope_lt_k {}",
        dims.len(),
        show(sweep.slope_k),
        show(sweep.slope_lt_k)
    );
    Ok(0)
}

fn recipe_from(b: &KvBlock) -> Result<TargetRecipe> {
    Ok(TargetRecipe {
        family: b.require("family")?.parse::<Family>()?,
        k: get(b, "k")?,
        link: reals(b, "link")?,
        normalize: get(b, "normalize")?,
    })
}

fn target_defaults(b: &mut KvBlock) {
    b.set("family", "ortho").set("k", 2).set("link", "0,1,0.5").set("normalize", false);
}

/// Train config for dimension `d` and degree `k` from a resolved block;
/// `m1` without an explicit `xi1` rescales the decay.
fn train_config(b: &KvBlock, d: usize, k: usize, m1_overridden: bool, xi1_overridden: bool) -> Result<TrainConfig> {
    let alpha: f64 = b.parse_value("alpha")?.unwrap_or(0.5);
    let mut cfg = default_hparams(d, k, alpha)?;
    cfg.apply_kv(b)?;
    if m1_overridden && !xi1_overridden {
        let m1 = cfg.m1;
        cfg.set_m1(d, k, m1);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs, c: &Common) -> Result<i32> {
    let mut flags = KvBlock::new();
    target_flags(&a.target, &mut flags);
    put(&mut flags, "d", &a.d);
    put(&mut flags, "mode", &a.mode);
    put(&mut flags, "n", &a.n);
    put(&mut flags, "m1", &a.m1);
    put(&mut flags, "m2", &a.m2);
    put(&mut flags, "seed", &c.seed);
    if a.timing {
        flags.set("timing", true);
    }
    let mut pre = KvBlock::new();
    target_defaults(&mut pre);
    pre.set("d", 8);
    let known = train_keys();
    let first = config::resolve(pre.clone(), c.config.as_deref(), &c.sets, flags.clone(), &known)?;
    let d: usize = get(&first, "d")?;
    let k: usize = get(&first, "k")?;
    let m1_o = config::overridden(c.config.as_deref(), &c.sets, &flags, "m1")?;
    let xi1_o = config::overridden(c.config.as_deref(), &c.sets, &flags, "xi1")?;
    let cfg = train_config(&first, d, k, m1_o, xi1_o)?;
    let target_seed: u64 = match first.get("target_seed") {
        Some(s) => s.parse().map_err(|_| Error::Parse(format!("bad target_seed `{s}`")))?,
        None => Streams::new(cfg.seed).seed("cli/target", &[]),
    };
    let mut resolved = KvBlock::new();
    for key in TARGET_KEYS {
        if let Some(v) = first.get(key) {
            resolved.set(key, v);
        }
    }
    resolved.set("target_seed", target_seed);
    resolved.merge(&cfg.to_kv());
    if c.dry_run {
        return Ok(dry_run("train", &resolved));
    }
    let t = recipe_from(&first)?.build(d, target_seed)?;
    if a.dump_poly {
        print!("{}", t.poly().to_text());
    }
    let out = train::run(&t, &cfg)?;
    create_out(&c.out)?;
    write_config(&c.out, "train", &resolved)?;
    write_records(BufWriter::new(File::create(c.out.join("records.csv"))?), &t, &cfg, &out.records)?;
    fs::write(c.out.join("checkpoint.txt"), out.net.to_checkpoint())?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let last = out.last();
    println!(
        "train: {} d={} n={} test_mse={:.6e} feat_corr={:.4}",
        cfg.mode.as_str(),
        d,
        cfg.n,
        last.test_mse,
        last.feat_corr
    );
    Ok(0)
}

fn parse_width(s: &str) -> Result<Width> {
    if let Some(e) = s.trim().strip_prefix("d^") {
        return e
            .parse()
            .map(Width::Power)
            .map_err(|_| Error::Parse(format!("bad width `{s}`")));
    }
    s.trim()
        .parse()
        .map(Width::Fixed)
        .map_err(|_| Error::Parse(format!("bad width `{s}`")))
}

fn cmd_sweep(a: &SweepArgs, c: &Common) -> Result<i32> {
    let mut pre = KvBlock::new();
    target_defaults(&mut pre);
    pre.set("dims", "8")
        .set("sizes", "d^3/16,4*d^3")
        .set("seeds", "0,1,2")
        .set("width", "d^2")
        .set("master_seed", 0);
    let mut flags = KvBlock::new();
    target_flags(&a.target, &mut flags);
    put(&mut flags, "dims", &a.dims);
    put(&mut flags, "sizes", &a.sizes);
    put(&mut flags, "seeds", &a.seeds);
    put(&mut flags, "mode", &a.mode);
    put(&mut flags, "width", &a.width);
    put(&mut flags, "master_seed", &c.seed);
    let mut known = train_keys();
    known.retain(|k| !matches!(*k, "d" | "n" | "m1" | "seed" | "target_seed"));
    known.extend(["dims", "sizes", "seeds", "width", "master_seed"]);
    let b = config::resolve(pre, c.config.as_deref(), &c.sets, flags, &known)?;
    if c.dry_run {
        return Ok(dry_run("sweep", &b));
    }
    let recipe = recipe_from(&b)?;
    let dims: Vec<usize> = list(&b, "dims")?;
    let sizes: Vec<SampleSize> = list(&b, "sizes")?;
    let seeds: Vec<u64> = list(&b, "seeds")?;
    let first_d = *dims.first().ok_or_else(|| usage("dims must not be empty"))?;
    let mut base = default_hparams(first_d.max(2), recipe.k, b.parse_value("alpha")?.unwrap_or(0.5))?;
    base.apply_kv(&b)?;
    let plan = SweepPlan {
        dims,
        sizes,
        seeds,
        recipe,
        base,
        m1: parse_width(b.require("width")?)?,
        master_seed: get(&b, "master_seed")?,
    };
    plan.validate()?;
    let cells_dir = c.out.join("cells");
    fs::create_dir_all(&cells_dir)?;
    write_config(&c.out, "sweep", &b)?;
    let cells = plan.cells();
    let name = |i: usize| format!("cell{:04}", cells[i].index);
    let pending: Vec<usize> = (0..cells.len())
        .filter(|&i| {
            !(cells_dir.join(format!("{}.csv", name(i))).exists()
                && cells_dir.join(format!("{}.summary.csv", name(i))).exists())
        })
        .collect();
    let skipped = cells.len() - pending.len();
    let mode = plan.base.mode.as_str();
    let results = hierpoly::par::map(&pending, |&i| {
        let r = plan.run_cell(&cells[i]);
        let write = || -> Result<()> {
            let rec = csv_bytes(|w| hierpoly::eval::write_cell_records(w, std::slice::from_ref(&r), false))?;
            let sum = csv_bytes(|w| write_summary(w, mode, std::slice::from_ref(&r.summary)))?;
            // the summary file marks a finished cell, so it is written last
            fs::write(cells_dir.join(format!("{}.csv", name(i))), rec)?;
            fs::write(cells_dir.join(format!("{}.summary.csv", name(i))), sum)?;
            Ok(())
        };
        (r.summary.error.clone(), write())
    });
    for (err, io) in results {
        io?;
        if let Some(e) = err {
            eprintln!("cell failed: {e}");
        }
    }
    let mut records = Vec::new();
    let mut summary = Vec::new();
    let mut header = String::new();
    let mut failures = 0;
    for i in 0..cells.len() {
        records.extend(fs::read(cells_dir.join(format!("{}.csv", name(i))))?);
        let text = fs::read_to_string(cells_dir.join(format!("{}.summary.csv", name(i))))?;
        let mut lines = text.lines();
        header = lines.next().unwrap_or_default().to_string();
        for l in lines {
            if l.contains(",failed,") {
                failures += 1;
            }
            summary.push(l.to_string());
        }
    }
    let mut f = BufWriter::new(File::create(c.out.join("records.csv"))?);
    writeln!(f, "{}", RUN_RECORD_COLUMNS.join(","))?;
    f.write_all(&records)?;
    f.flush()?;
    let mut f = BufWriter::new(File::create(c.out.join("summary.csv"))?);
    if header.is_empty() {
        header = SUMMARY_COLUMNS.join(",") + ",error";
    }
    writeln!(f, "{header}")?;
    for l in &summary {
        writeln!(f, "{l}")?;
    }
    f.flush()?;
    println!(
        "sweep: {} cells ({} run, {} resumed), {failures} failed",
        cells.len(),
        pending.len(),
        skipped
    );
    Ok(if failures == cells.len() { 1 } else { 0 })
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn cmd_rf1d(a: &Rf1dArgs, c: &Common) -> Result<i32> {
    let mut defaults = KvBlock::new();
    defaults
        .set("f", "0,0,1")
        .set("radius", 2.0)
        .set("nu", 9.0)
        .set("n_mc", 2_000_000)
        .set("grid", 40)
        .set("construction", "c2")
        .set("growth_radii", "1,2,4,8")
        .set("seed", 0);
    let mut flags = KvBlock::new();
    put(&mut flags, "f", &a.f);
    put(&mut flags, "radius", &a.radius);
    put(&mut flags, "nu", &a.nu);
    put(&mut flags, "n_mc", &a.n_mc);
    put(&mut flags, "grid", &a.grid);
    put(&mut flags, "construction", &a.construction);
    put(&mut flags, "seed", &c.seed);
    let known = ["f", "radius", "nu", "n_mc", "grid", "construction", "growth_radii", "seed"];
    let b = config::resolve(defaults, c.config.as_deref(), &c.sets, flags, &known)?;
    if c.dry_run {
        return Ok(dry_run("rf1d", &b));
    }
    let f = reals(&b, "f")?;
    let radius: f64 = get(&b, "radius")?;
    let bias = BiasDistribution::student_t(get(&b, "nu")?)?;
    let construction = b.require("construction")?.to_string();
    let build = |r: f64| match construction.as_str() {
        "c2" => RF1DWeights::c2(&f, r, bias),
        "constant" => RF1DWeights::constant(r, bias),
        "linear" => RF1DWeights::linear(r, bias),
        other => Err(usage(format!("unknown construction `{other}`"))),
    };
    let w = build(radius)?;
    let grid = uniform_grid(radius, get::<usize>(&b, "grid")?.max(1));
    let v = verify_representation(&w, &grid, get(&b, "n_mc")?, get(&b, "seed")?)?;
    let radii = reals(&b, "growth_radii")?;
    let sups: Vec<f64> = radii.iter().map(|&r| build(r).map(|w| w.sup_v)).collect::<Result<_>>()?;
    let slope = loglog_slope(&radii, &sups);
    create_out(&c.out)?;
    write_config(&c.out, "rf1d", &b)?;
    v.write_csv(BufWriter::new(File::create(c.out.join("rf1d.csv"))?))?;
    let mut s = KvBlock::new();
    s.set("c1", format!("{:e}", w.c1))
        .set("c2", format!("{:e}", w.c2))
        .set("int_mu", format!("{:e}", w.int_mu))
        .set("int_t_mu", format!("{:e}", w.int_t_mu))
        .set("sup_v", format!("{:e}", w.sup_v))
        .set("sup_err", format!("{:e}", v.sup_err))
        .set("max_z", format!("{:e}", v.max_z))
        .set("growth_radii", fmt_reals(&radii))
        .set("growth_sup_v", fmt_reals(&sups))
        .set("growth_slope", slope.map(|x| format!("{x:e}")).unwrap_or_else(|| "NA".into()));
    fs::write(c.out.join("rf1d_summary.txt"), s.to_text())?;
    println!(
        "rf1d: sup error {:.4e}, sup|v| {:.4e}, growth slope {}",
        v.sup_err,
        w.sup_v,
        slope.map(|x| format!("{x:.3}")).unwrap_or_else(|| "NA".into())
    );
    Ok(0)
}

fn run(cli: &Cli) -> Result<i32> {
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Contract(format!("thread pool: {e}")))?;
    }
    match &cli.cmd {
        Command::Selftest(a) => cmd_selftest(a, &cli.common),
        Command::Stein(a) => cmd_stein(a, &cli.common),
        Command::Train(a) => cmd_train(a, &cli.common),
        Command::Sweep(a) => cmd_sweep(a, &cli.common),
        Command::Rf1d(a) => cmd_rf1d(a, &cli.common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
