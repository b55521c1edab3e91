//! Command-line front end: `train`, `figure2`, `certify`, and `gradcheck`.
//!
//! Conventions shared by every command: stdout is human-oriented and all
//! machine-readable output goes to files under `--out`; a resolved-config
//! dump with every defaulted field filled in is written next to the results
//! so any run can be reproduced exactly; all randomness flows from one
//! top-level seed fanned out deterministically.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 non-finite
//! training stop, 4 partial grid failure, 5 failed certificate, 6 gradient
//! check failure.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSpec;
use crate::dataset::make_synthetic;
use crate::experiment::{
    certify_init_rank, certify_kkt_loss, desk_plan, paper_plan, run_figure2_grid, GridPlan,
    LR_GRID,
};
use crate::gradcheck::{run_gradcheck, GRADCHECK_TOL};
use crate::init::{lecun_init, mirrored_lecun_init, Seed};
use crate::model::{Activation, HeadKind, Params};
use crate::trainer::{train, Regime, StopReason, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NON_FINITE: i32 = 3;
pub const EXIT_PARTIAL_GRID: i32 = 4;
pub const EXIT_CERTIFICATE: i32 = 5;
pub const EXIT_GRADCHECK: i32 = 6;

/// Default learning-rate pair for the KKT certificate runs, frozen from the
/// reference execution of the desk-scale grid (these converge at every
/// certified (ε, seed) cell; pass --full-grid to search all pairs instead).
pub const CERTIFY_LR_W: [f64; 2] = [1e-3, 1e-2];
pub const CERTIFY_LR_V: [f64; 2] = [5e-3, 5e-2];

/// Desk-scale ε values for the KKT certificate, frozen from the reference
/// execution (see `figure2 --preset desk` for the matching grid radii).
pub const CERTIFY_EPSILONS: [f64; 3] = [8.0, 16.0, 32.0];

#[derive(Parser)]
#[command(
    name = "narrownet",
    version,
    about = "Train narrow 1-hidden-layer networks with a constrained mirrored regime and certify the landscape numerically"
)]
struct Cli {
    /// Worker threads for grid cells (output bytes do not depend on this).
    #[arg(long, global = true, env = "NARROWNET_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one training job from a TOML config file.
    Train(TrainArgs),
    /// Run the synthetic grid (widths × ε × regimes × seeds) and write the
    /// results CSV.
    Figure2(Figure2Args),
    /// Numerically certify the landscape claims (1: init rank and zero
    /// output; 3: small loss and interior v at KKT points).
    Certify(CertifyArgs),
    /// Check analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Figure2Args {
    /// Built-in grid: `desk` (n=200, d=50) or `paper` (n=1000, d=200).
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Explicit TOML grid configuration (alternative to --preset).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct CertifyArgs {
    /// Which certificate to run: 1 or 3.
    #[arg(long)]
    theorem: u8,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count.
    #[arg(long)]
    n: Option<usize>,
    /// Input dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Hidden width.
    #[arg(long)]
    m: Option<usize>,
    /// Number of seeded repetitions.
    #[arg(long)]
    seeds: Option<u64>,
    /// Activation for the rank certificate (tanh, sigmoid, softplus).
    #[arg(long)]
    activation: Option<String>,
    /// Comma-separated ε list for the KKT certificate.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Iteration budget per run (KKT certificate).
    #[arg(long)]
    max_iters: Option<usize>,
    /// Search the full published learning-rate grid instead of the frozen
    /// pairs (slower).
    #[arg(long)]
    full_grid: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Restrict to one head kind (plain, paired).
    #[arg(long)]
    head: Option<String>,
    /// Restrict to one activation (tanh, sigmoid, softplus).
    #[arg(long)]
    activation: Option<String>,
    /// Random instances per head × activation combination.
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long, default_value_t = 12061984)]
    seed: u64,
    /// Negative-control hook: corrupt one analytic derivative so the check
    /// must fail.
    #[arg(long, hide = true)]
    corrupt: bool,
    /// Optional output directory for the machine-readable report.
    #[arg(long)]
    out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Config file schema
// ---------------------------------------------------------------------------

/// Ratio cap that may be "unbounded" in the config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kappa(pub f64);

impl Serialize for Kappa {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("unbounded")
        }
    }
}

impl<'de> Deserialize<'de> for Kappa {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Kappa(x)),
            Raw::Word(w) if w == "unbounded" || w == "inf" => Ok(Kappa(f64::INFINITY)),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "kappa must be a number or \"unbounded\", got \"{w}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub schema_version: u32,
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraint: Option<ConstraintSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub m: usize,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub regime: Regime,
    pub lr_w: f64,
    pub lr_v: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
    /// 0 resolves to max_iters / 20.
    #[serde(default)]
    pub checkpoint_every: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub epsilon: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: Kappa,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfigFile {
    pub schema_version: u32,
    pub grid: GridSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub d: usize,
    pub widths: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub regimes: Vec<Regime>,
    pub n_seeds: u64,
    #[serde(default = "default_lr_grid")]
    pub lr_grid_w: Vec<f64>,
    #[serde(default = "default_lr_grid")]
    pub lr_grid_v: Vec<f64>,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_kkt_tol")]
    pub kkt_tol: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    #[serde(default = "default_kappa")]
    pub kappa: Kappa,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    pub seed: u64,
}

fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_momentum() -> f64 {
    0.9
}
fn default_max_iters() -> usize {
    20_000
}
fn default_kkt_tol() -> f64 {
    1e-10
}
fn default_zeta() -> f64 {
    0.001
}
fn default_kappa() -> Kappa {
    Kappa(1.0)
}
fn default_lr_grid() -> Vec<f64> {
    LR_GRID.to_vec()
}

impl GridSection {
    fn to_plan(&self) -> GridPlan {
        GridPlan {
            n: self.n,
            d: self.d,
            widths: self.widths.clone(),
            epsilons: self.epsilons.clone(),
            regimes: self.regimes.clone(),
            n_seeds: self.n_seeds,
            lr_grid_w: self.lr_grid_w.clone(),
            lr_grid_v: self.lr_grid_v.clone(),
            momentum: self.momentum,
            max_iters: self.max_iters,
            kkt_tol: self.kkt_tol,
            zeta: self.zeta,
            kappa: self.kappa.0,
            activation: self.activation,
            seed: Seed(self.seed),
        }
    }

    fn from_plan(plan: &GridPlan) -> Self {
        GridSection {
            n: plan.n,
            d: plan.d,
            widths: plan.widths.clone(),
            epsilons: plan.epsilons.clone(),
            regimes: plan.regimes.clone(),
            n_seeds: plan.n_seeds,
            lr_grid_w: plan.lr_grid_w.clone(),
            lr_grid_v: plan.lr_grid_v.clone(),
            momentum: plan.momentum,
            max_iters: plan.max_iters,
            kkt_tol: plan.kkt_tol,
            zeta: plan.zeta,
            kappa: Kappa(plan.kappa),
            activation: plan.activation,
            seed: plan.seed.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

static POOL_INIT: OnceLock<()> = OnceLock::new();

fn init_pool(jobs: Option<usize>) {
    POOL_INIT.get_or_init(|| {
        if let Some(j) = jobs {
            rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build_global()
                .expect("rayon pool initialized once");
        }
    });
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    init_pool(cli.jobs);
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Figure2(args) => cmd_figure2(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn fail(code: i32, msg: &str) -> i32 {
    eprintln!("error: {msg}");
    code
}

fn ensure_out_dir(path: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(path)
}

fn parse_activation(name: &str) -> Result<Activation, String> {
    match name {
        "tanh" => Ok(Activation::Tanh),
        "sigmoid" => Ok(Activation::Sigmoid),
        "softplus" => Ok(Activation::Softplus),
        other => Err(format!(
            "unknown activation \"{other}\" (expected tanh, sigmoid, or softplus)"
        )),
    }
}

/// Pre-run warnings for conditions that are allowed but outside the regime
/// the certificates are stated for.
fn emit_assumption_warnings(n: usize, d: usize, m: usize, activation: Activation) {
    if m * d < 2 * n {
        eprintln!(
            "warning: m*d = {} < 2n = {}; the width bound m >= 2n/d fails, \
             expressivity and rank certificates are outside scope",
            m * d,
            2 * n
        );
    }
    if !activation.zero_set_is_origin() {
        eprintln!(
            "warning: {} does not vanish only at 0; the zero-set condition \
             holds for tanh only",
            activation.name()
        );
    }
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

fn cmd_train(args: TrainArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, &format!("cannot read {}: {e}", args.config.display())),
    };
    let mut config: RunConfigFile = match toml::from_str(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, &format!("config parse error: {e}")),
    };
    if config.schema_version != 1 {
        return fail(
            EXIT_CONFIG,
            &format!("unsupported schema_version {}", config.schema_version),
        );
    }
    if let Some(seed) = args.seed {
        config.train.seed = seed;
    }
    // Echo resolved defaults.
    if config.train.checkpoint_every == 0 {
        config.train.checkpoint_every = (config.train.max_iters / 20).max(1);
    }

    let regime = config.train.regime;
    let needs_constraint = regime.projects();
    if needs_constraint && config.constraint.is_none() {
        return fail(
            EXIT_CONFIG,
            &format!("regime {} requires a [constraint] section", regime.name()),
        );
    }
    if !needs_constraint && config.constraint.is_some() {
        return fail(
            EXIT_CONFIG,
            &format!("regime {} must not have a [constraint] section", regime.name()),
        );
    }

    let (n, d, m) = (config.data.n, config.model.d, config.model.m);
    emit_assumption_warnings(n, d, m, config.model.activation);

    let seed = Seed(config.train.seed);
    let data = make_synthetic(n, d, seed.split(crate::experiment::STREAM_DATASET));
    let init_seed = seed.split(crate::experiment::STREAM_INIT);
    let params0: Params = {
        let result = match regime {
            Regime::MirroredPgd => {
                mirrored_lecun_init(d, m, HeadKind::Paired, config.model.activation, init_seed)
            }
            Regime::RegularGd | Regime::RegularPgdAblation => {
                lecun_init(d, m, HeadKind::Plain, config.model.activation, init_seed)
            }
        };
        match result {
            Ok(p) => p,
            Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
        }
    };

    // The ablation regime constrains the hidden weights only; zeta and
    // kappa from the config are ignored there.
    let constraint = config.constraint.as_ref().map(|c| match regime {
        Regime::RegularPgdAblation => ConstraintSpec::ball_only(c.epsilon, params0.w().clone()),
        _ => ConstraintSpec::new(c.epsilon, c.zeta, c.kappa.0, params0.w().clone()),
    });
    let constraint = match constraint.transpose() {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
    };

    let train_config = TrainConfig {
        regime,
        lr_w: config.train.lr_w,
        lr_v: config.train.lr_v,
        momentum: config.train.momentum,
        max_iters: config.train.max_iters,
        kkt_tol: config.train.kkt_tol,
        checkpoint_every: config.train.checkpoint_every,
        seed,
        constraint,
        lambda_min_at_checkpoints: true,
    };

    if let Err(e) = ensure_out_dir(&args.out) {
        return fail(EXIT_CONFIG, &format!("cannot create {}: {e}", args.out.display()));
    }
    if let Err(e) = write_resolved(&args.out, &config) {
        return fail(EXIT_CONFIG, &format!("cannot write resolved config: {e}"));
    }

    let (params, trace) = match train(&params0, &data, &train_config) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
    };

    if let Err(e) = write_trace_csv(&args.out.join("trace.csv"), &trace) {
        return fail(EXIT_CONFIG, &format!("cannot write trace: {e}"));
    }
    if let Err(e) = write_params_snapshot(&args.out.join("params_final.csv"), &params) {
        return fail(EXIT_CONFIG, &format!("cannot write params: {e}"));
    }

    println!(
        "{}: stopped by {} after {} iterations",
        regime.name(),
        trace.stop_reason.name(),
        trace.iters
    );
    println!(
        "loss {:e} -> {:e} (relative {:e}), final gradient-mapping residual {:e}",
        trace.loss_init,
        trace.loss_final,
        trace.relative_loss(),
        trace.kkt_residual_final
    );
    if let Some(last) = trace.checkpoints.last() {
        if let Some(l) = last.lambda_min {
            println!("sigma_min(J) at endpoint: {l:e}");
        }
    }

    if trace.stop_reason == StopReason::NonFinite {
        eprintln!("training stopped on non-finite loss or gradient (divergent step size)");
        return EXIT_NON_FINITE;
    }
    EXIT_OK
}

fn write_resolved<T: Serialize>(out: &Path, config: &T) -> std::io::Result<()> {
    let text = toml::to_string_pretty(config).expect("config serializes");
    std::fs::write(out.join("resolved_config.toml"), text)
}

fn write_trace_csv(path: &Path, trace: &crate::trainer::TrainTrace) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iter,loss,grad_mapping_norm,lambda_min,feasible")?;
    for c in &trace.checkpoints {
        let lambda = c.lambda_min.map_or(String::new(), |l| format!("{l}"));
        writeln!(
            f,
            "{},{},{},{},{}",
            c.iter, c.loss, c.grad_mapping_norm, lambda, c.feasible
        )?;
    }
    f.flush()
}

fn write_params_snapshot(path: &Path, params: &Params) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "head,{}", match params.head() {
        HeadKind::Plain => "plain",
        HeadKind::Paired => "paired",
    })?;
    writeln!(f, "activation,{}", params.activation().name())?;
    writeln!(f, "d,{}", params.input_dim())?;
    writeln!(f, "m,{}", params.width())?;
    for k in 0..params.input_dim() {
        let row: Vec<String> = (0..params.width())
            .map(|j| format!("{}", params.w()[(k, j)]))
            .collect();
        writeln!(f, "w,{}", row.join(","))?;
    }
    let v: Vec<String> = params.v().data().iter().map(|x| format!("{x}")).collect();
    writeln!(f, "v,{}", v.join(","))?;
    f.flush()
}

// ---------------------------------------------------------------------------
// figure2
// ---------------------------------------------------------------------------

fn cmd_figure2(args: Figure2Args) -> i32 {
    let mut plan = match (&args.preset, &args.config) {
        (Some(p), None) => match p.as_str() {
            "desk" => desk_plan(Seed(0)),
            "paper" => paper_plan(Seed(0)),
            other => return fail(EXIT_CONFIG, &format!("unknown preset \"{other}\"")),
        },
        (None, Some(path)) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => return fail(EXIT_CONFIG, &format!("cannot read {}: {e}", path.display())),
            };
            let file: GridConfigFile = match toml::from_str(&text) {
                Ok(c) => c,
                Err(e) => return fail(EXIT_CONFIG, &format!("config parse error: {e}")),
            };
            if file.schema_version != 1 {
                return fail(
                    EXIT_CONFIG,
                    &format!("unsupported schema_version {}", file.schema_version),
                );
            }
            file.grid.to_plan()
        }
        _ => return fail(EXIT_CONFIG, "provide exactly one of --preset or --config"),
    };
    if let Some(seed) = args.seed {
        plan.seed = Seed(seed);
    }

    if let Err(e) = ensure_out_dir(&args.out) {
        return fail(EXIT_CONFIG, &format!("cannot create {}: {e}", args.out.display()));
    }
    let resolved = GridConfigFile {
        schema_version: 1,
        grid: GridSection::from_plan(&plan),
    };
    if let Err(e) = write_resolved(&args.out, &resolved) {
        return fail(EXIT_CONFIG, &format!("cannot write resolved config: {e}"));
    }

    let cells = plan.cells().len();
    println!(
        "running {} cells (n={}, d={}, widths {:?}, eps {:?}, {} regimes, {} seeds)",
        cells,
        plan.n,
        plan.d,
        plan.widths,
        plan.epsilons,
        plan.regimes.len(),
        plan.n_seeds
    );

    let out_csv = args.out.join("results.csv");
    let result = match run_figure2_grid(&plan, &out_csv) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, &format!("grid run failed: {e}")),
    };
    println!("wrote {} rows to {}", result.rows.len(), out_csv.display());

    let failed = result.failed_cells();
    if failed > 0 {
        eprintln!("{failed} of {cells} cells stopped non-finite at every learning rate");
        return EXIT_PARTIAL_GRID;
    }
    EXIT_OK
}

// ---------------------------------------------------------------------------
// certify
// ---------------------------------------------------------------------------

fn cmd_certify(args: CertifyArgs) -> i32 {
    match args.theorem {
        1 => cmd_certify_rank(args),
        3 => cmd_certify_kkt(args),
        other => fail(EXIT_CONFIG, &format!("--theorem must be 1 or 3, got {other}")),
    }
}

#[derive(Serialize)]
struct RankCertResolved {
    theorem: u8,
    n: usize,
    d: usize,
    m: usize,
    seeds: u64,
    activation: Activation,
    seed: u64,
}

fn cmd_certify_rank(args: CertifyArgs) -> i32 {
    let n = args.n.unwrap_or(40);
    let d = args.d.unwrap_or(10);
    let m = args.m.unwrap_or(8);
    let seeds = args.seeds.unwrap_or(20);
    let activation = match args.activation.as_deref().map(parse_activation) {
        None => Activation::Tanh,
        Some(Ok(a)) => a,
        Some(Err(e)) => return fail(EXIT_CONFIG, &e),
    };
    let seed = Seed(args.seed.unwrap_or(1));

    if let Err(e) = ensure_out_dir(&args.out) {
        return fail(EXIT_CONFIG, &format!("cannot create {}: {e}", args.out.display()));
    }
    let resolved = RankCertResolved {
        theorem: 1,
        n,
        d,
        m,
        seeds,
        activation,
        seed: seed.0,
    };
    if let Err(e) = write_resolved(&args.out, &resolved) {
        return fail(EXIT_CONFIG, &format!("cannot write resolved config: {e}"));
    }

    emit_assumption_warnings(n, d, m, activation);
    let report = match certify_init_rank(n, d, m, seeds, activation, seed) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
    };

    let csv = args.out.join("init_certificate.csv");
    let write = || -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv)?);
        writeln!(f, "seed_index,max_abs_output,lambda_min_sub,lambda_min_full")?;
        for r in &report.rows {
            let sub = r.lambda_min_sub.map_or(String::new(), |l| format!("{l}"));
            writeln!(f, "{},{},{},{}", r.seed_index, r.max_abs_output, sub, r.lambda_min_full)?;
        }
        f.flush()
    };
    if let Err(e) = write() {
        return fail(EXIT_CONFIG, &format!("cannot write certificate: {e}"));
    }

    println!(
        "initialization certificate: n={n} d={d} m={m} activation={} over {seeds} seeds",
        activation.name()
    );
    println!("max |f(x; init)| across seeds: {:e}", report.max_output());
    if let (Some(min), Some(med)) = (report.min_sub_lambda(), report.median_sub_lambda()) {
        println!("sigma_min(sub-Jacobian): min {min:e}, median {med:e}");
    }
    if report.outside_scope {
        println!(
            "flag: outside certified scope (m*d = {} < 2n = {}); reported for information only",
            m * d,
            2 * n
        );
        return EXIT_OK;
    }
    if report.passed() {
        println!("PASS: all {seeds} seeds have zero initial output and non-singular sub-Jacobian");
        EXIT_OK
    } else {
        let failing: Vec<String> = report
            .rows
            .iter()
            .filter(|r| {
                r.max_abs_output > report.zero_output_tol
                    || !r.lambda_min_sub.is_some_and(|l| l > report.rank_tol)
            })
            .map(|r| r.seed_index.to_string())
            .collect();
        eprintln!("FAIL: seeds {{{}}} violate the certificate", failing.join(", "));
        EXIT_CERTIFICATE
    }
}

#[derive(Serialize)]
struct KktCertResolved {
    theorem: u8,
    n: usize,
    d: usize,
    m: usize,
    seeds: u64,
    epsilons: Vec<f64>,
    lr_grid_w: Vec<f64>,
    lr_grid_v: Vec<f64>,
    max_iters: usize,
    zeta: f64,
    kappa: f64,
    seed: u64,
}

fn cmd_certify_kkt(args: CertifyArgs) -> i32 {
    let n = args.n.unwrap_or(200);
    let d = args.d.unwrap_or(50);
    let m = args.m.unwrap_or(8);
    let seeds = args.seeds.unwrap_or(3);
    let epsilons = args.epsilons.unwrap_or_else(|| CERTIFY_EPSILONS.to_vec());
    let max_iters = args.max_iters.unwrap_or(20_000);
    let seed = Seed(args.seed.unwrap_or(1));
    let (lr_w, lr_v): (Vec<f64>, Vec<f64>) = if args.full_grid {
        (LR_GRID.to_vec(), LR_GRID.to_vec())
    } else {
        (CERTIFY_LR_W.to_vec(), CERTIFY_LR_V.to_vec())
    };

    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return fail(EXIT_CONFIG, "epsilons must be positive");
    }

    if let Err(e) = ensure_out_dir(&args.out) {
        return fail(EXIT_CONFIG, &format!("cannot create {}: {e}", args.out.display()));
    }
    let resolved = KktCertResolved {
        theorem: 3,
        n,
        d,
        m,
        seeds,
        epsilons: epsilons.clone(),
        lr_grid_w: lr_w.clone(),
        lr_grid_v: lr_v.clone(),
        max_iters,
        zeta: 0.001,
        kappa: 1.0,
        seed: seed.0,
    };
    if let Err(e) = write_resolved(&args.out, &resolved) {
        return fail(EXIT_CONFIG, &format!("cannot write resolved config: {e}"));
    }

    let report = match certify_kkt_loss(n, d, m, &epsilons, seeds, &lr_w, &lr_v, max_iters, seed) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, &e.to_string()),
    };

    let csv = args.out.join("kkt_certificate.csv");
    let write = || -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&csv)?);
        writeln!(
            f,
            "epsilon,seed_index,lr_w,lr_v,iters,stop_reason,loss_final,loss_rel,epsilon_sq,kkt_residual_final,lambda_min_final,v_boundary_hits"
        )?;
        for r in &report.rows {
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.epsilon,
                r.seed_index,
                r.lr_w,
                r.lr_v,
                r.iters,
                r.stop_reason.name(),
                r.loss_final,
                r.loss_rel,
                r.epsilon_sq,
                r.kkt_residual_final,
                r.lambda_min_final,
                r.v_boundary_hits
            )?;
        }
        f.flush()
    };
    if let Err(e) = write() {
        return fail(EXIT_CONFIG, &format!("cannot write certificate: {e}"));
    }

    println!("KKT certificate: n={n} d={d} m={m}, zeta=0.001 kappa=1, {seeds} seeds");
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:>8} {:>5} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "epsilon", "seed", "loss_final", "loss_rel", "eps^2", "sigma_min(J)", "v_hits"
    );
    for r in &report.rows {
        let _ = writeln!(
            table,
            "{:>8} {:>5} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e} {:>10}",
            r.epsilon, r.seed_index, r.loss_final, r.loss_rel, r.epsilon_sq, r.lambda_min_final, r.v_boundary_hits
        );
    }
    print!("{table}");

    if report.passed() {
        println!("PASS: all runs converged, loss non-increasing in epsilon, v interior throughout");
        EXIT_OK
    } else {
        let mut reasons = Vec::new();
        if !report.all_converged() {
            reasons.push("a run missed the relative-loss bar");
        }
        if !report.trend_ok() {
            reasons.push("final loss increased with epsilon");
        }
        if !report.v_stayed_interior() {
            reasons.push("v touched its boundary");
        }
        if !report.all_stopped_legitimately() {
            reasons.push("a run stopped non-finite");
        }
        eprintln!("FAIL: {}", reasons.join("; "));
        EXIT_CERTIFICATE
    }
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

fn cmd_gradcheck(args: GradcheckArgs) -> i32 {
    let heads: Vec<HeadKind> = match args.head.as_deref() {
        None => vec![HeadKind::Plain, HeadKind::Paired],
        Some("plain") => vec![HeadKind::Plain],
        Some("paired") => vec![HeadKind::Paired],
        Some(other) => {
            return fail(
                EXIT_CONFIG,
                &format!("unknown head \"{other}\" (expected plain or paired)"),
            )
        }
    };
    let activations: Vec<Activation> = match args.activation.as_deref().map(parse_activation) {
        None => Activation::ALL.to_vec(),
        Some(Ok(a)) => vec![a],
        Some(Err(e)) => return fail(EXIT_CONFIG, &e),
    };

    let corruption = args.corrupt.then_some(1e-2);
    let report = run_gradcheck(&heads, &activations, args.instances, Seed(args.seed), corruption);

    if let Some(out) = &args.out {
        if let Err(e) = ensure_out_dir(out) {
            return fail(EXIT_CONFIG, &format!("cannot create {}: {e}", out.display()));
        }
        let write = || -> std::io::Result<()> {
            let mut f = std::io::BufWriter::new(std::fs::File::create(out.join("gradcheck.csv"))?);
            writeln!(f, "instances_checked,max_rel_error,tolerance,passed")?;
            writeln!(
                f,
                "{},{},{},{}",
                report.instances_checked,
                report.max_rel_error,
                GRADCHECK_TOL,
                report.passed()
            )?;
            f.flush()
        };
        if let Err(e) = write() {
            return fail(EXIT_CONFIG, &format!("cannot write report: {e}"));
        }
    }

    println!(
        "checked {} instances; max relative error {:e} (tolerance {:e})",
        report.instances_checked, report.max_rel_error, GRADCHECK_TOL
    );
    if report.passed() {
        println!("PASS");
        EXIT_OK
    } else {
        let worst = report.worst.expect("failure implies a worst offender");
        eprintln!(
            "FAIL at {:?}/{} instance {} coordinate {}: analytic {:e} vs finite difference {:e} (rel {:e})",
            worst.head,
            worst.activation.name(),
            worst.instance,
            worst.coordinate,
            worst.analytic,
            worst.finite_difference,
            worst.rel_error
        );
        EXIT_GRADCHECK
    }
}
