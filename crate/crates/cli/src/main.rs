use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qmtomo::dynamics::{self, DecoherenceSpec, DimPolicy, IntegratorConfig};
use qmtomo::moments;
use qmtomo::nn::{self, checkpoint, TrainConfig};
use qmtomo::operators::{self, PotentialSpec};
use qmtomo::pipeline::report::{self, Csv};
use qmtomo::pipeline::{study, CoherenceBudget, Dataset, ExperimentConfig, Split};
use qmtomo::states::{self, DensityMatrix, DensityMatrixFile};
use qmtomo::{Error, Result};

#[derive(Parser)]
#[command(name = "qmtomo", version, about = "Quantum state tomography from position trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one state and write its (t, u1, u2) trajectory
    Simulate(SimulateArgs),
    /// Generate a training or validation dataset from a config file
    GenDataset(GenDatasetArgs),
    /// Train a network on a trajectory prefix
    Train(TrainArgs),
    /// Evaluate a model on a dataset
    Eval(EvalArgs),
    /// Evaluate a model on a dataset from a different scenario
    Xval(EvalArgs),
    /// Compare truncated moment hierarchies with the full quantum evolution
    Moments(MomentsArgs),
    /// Coherence budget for a quartic trap
    Budget(BudgetArgs),
    /// Wigner function of a state on a grid
    Wigner(WignerArgs),
    /// Generate datasets and train one network per trajectory length
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PotentialKind {
    Quartic,
    Harmonic,
    DoubleGaussian,
}

#[derive(Args)]
struct PotentialArgs {
    #[arg(long, value_enum, default_value = "quartic")]
    potential: PotentialKind,
    /// Inverse quarticity
    #[arg(long)]
    alpha: Option<f64>,
    /// Gaussian width σ/x0 (converted to α for the quartic potential)
    #[arg(long)]
    sigma: Option<f64>,
    /// Gaussian offset ε/x0
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
}

impl PotentialArgs {
    fn spec(&self) -> Result<PotentialSpec> {
        let spec = match self.potential {
            PotentialKind::Harmonic => PotentialSpec::Harmonic,
            PotentialKind::Quartic => match (self.alpha, self.sigma) {
                (Some(alpha), None) => PotentialSpec::Quartic { alpha },
                (None, Some(s)) => PotentialSpec::Quartic { alpha: operators::alpha_from_sigma(s)? },
                _ => return Err(Error::Config("quartic potential needs exactly one of --alpha, --sigma".into())),
            },
            PotentialKind::DoubleGaussian => match (self.alpha, self.sigma) {
                (Some(alpha), None) => PotentialSpec::double_gaussian_for_alpha(alpha, self.epsilon)?,
                (None, Some(s)) => PotentialSpec::DoubleGaussian { sigma_over_x0: s, epsilon_over_x0: self.epsilon },
                _ => return Err(Error::Config("double-gaussian potential needs exactly one of --alpha, --sigma".into())),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    potential: PotentialArgs,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// `fock:n`, `coherent:x,p` or a density-matrix JSON file
    #[arg(long)]
    state: String,
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    /// Fixed Fock dimension instead of the convergence ladder
    #[arg(long)]
    dim: Option<usize>,
    /// Output CSV (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDatasetArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (defaults to `<output.dir>/<split>.ds`)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    val_dataset: PathBuf,
    /// Trajectory prefix tω0 used as input
    #[arg(long)]
    traj_len: f64,
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long)]
    curve_out: Option<PathBuf>,
    /// Experiment config whose `training` section is used
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    report_out: PathBuf,
}

#[derive(Args)]
struct MomentsArgs {
    #[arg(long, default_value_t = 5.0)]
    alpha: f64,
    #[arg(long, default_value = "fock:1")]
    state: String,
    #[arg(long, default_value = "2,4,6,8,10,12,14", value_delimiter = ',')]
    nt_list: Vec<usize>,
    #[arg(long, default_value_t = 10.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long, conflicts_with = "sigma", required_unless_present = "sigma")]
    alpha: Option<f64>,
    /// σ/x0, or σ in meters together with --x0
    #[arg(long)]
    sigma: Option<f64>,
    /// Oscillator length in meters
    #[arg(long, requires = "sigma")]
    x0: Option<f64>,
    /// Γ/ω0
    #[arg(long, conflicts_with = "omega_gamma_ratio", required_unless_present = "omega_gamma_ratio")]
    gamma: Option<f64>,
    /// ω0/Γ
    #[arg(long)]
    omega_gamma_ratio: Option<f64>,
}

#[derive(Args)]
struct WignerArgs {
    /// `fock:n`, `coherent:x,p` or a density-matrix JSON file
    #[arg(long, required_unless_present = "model")]
    state: Option<String>,
    #[arg(long, default_value_t = -6.0, allow_negative_numbers = true)]
    x_min: f64,
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    x_max: f64,
    #[arg(long, default_value_t = -6.0, allow_negative_numbers = true)]
    p_min: f64,
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    p_max: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long)]
    out: PathBuf,
    /// Also export the reconstruction of dataset entry `--index` by this model
    #[arg(long, requires_all = ["dataset", "out_reconstructed"])]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    index: usize,
    #[arg(long)]
    out_reconstructed: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "1,2,5,10,20", value_delimiter = ',')]
    lengths: Vec<f64>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_state(spec: &str) -> Result<DensityMatrix> {
    if let Some(rho) = states::named_state(spec)? {
        return Ok(rho);
    }
    let text = std::fs::read_to_string(spec)?;
    let file: DensityMatrixFile = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{spec}: {e}")))?;
    file.to_state()
}

fn write_csv(csv: &Csv, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => csv.write(p),
        None => {
            print!("{}", csv.render());
            Ok(())
        }
    }
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let spec = a.potential.spec()?;
    let dec = DecoherenceSpec::new(a.gamma)?;
    let eta = parse_state(&a.state)?;
    let mut cfg = IntegratorConfig::default();
    if let Some(d) = a.dim {
        cfg.dim_policy = DimPolicy::Fixed(d);
    }
    if !(a.t_max > 0.0 && a.dt > 0.0) {
        return Err(Error::Config("--t-max and --dt must be positive".into()));
    }
    let n_points = (a.t_max / a.dt + 1e-9).floor() as usize + 1;
    let traj = dynamics::make_trajectory(&eta, &spec, &dec, &cfg, n_points, a.dt)?;
    let mut csv = report::trajectory_csv(&traj);
    csv.meta("potential", spec.describe()).meta("gamma", a.gamma).meta("state", &a.state);
    write_csv(&csv, a.out.as_deref())
}

fn gen_dataset(a: &GenDatasetArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    let split: Split = a.split.parse()?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output.dir.join(format!("{}.ds", split.as_str())));
    let ds = qmtomo::pipeline::generate_dataset(&cfg, split, a.workers)?;
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent).ok();
    }
    ds.write(&out)?;
    println!(
        "wrote {} states ({} split, D = {}) to {}",
        ds.header.count,
        split.as_str(),
        ds.header.dim,
        out.display()
    );
    Ok(())
}

fn scenario(ds: &Dataset, traj_len: f64) -> String {
    format!("{} gamma={} traj_len={traj_len}", ds.header.potential_descriptor, ds.header.gamma)
}

fn train(a: &TrainArgs) -> Result<()> {
    let train_ds = Dataset::read(&a.dataset)?;
    let val_ds = Dataset::read(&a.val_dataset)?;
    let (mut tc, fingerprint) = match &a.config {
        Some(p) => {
            let cfg = ExperimentConfig::load(p)?;
            (cfg.training.clone(), cfg.fingerprint())
        }
        None => (TrainConfig::default(), train_ds.header.config_fingerprint.clone()),
    };
    if let Some(v) = a.max_epochs {
        tc.max_epochs = v;
    }
    if let Some(v) = a.patience {
        tc.patience = v;
    }
    if let Some(v) = a.seed {
        tc.seed = v;
    }
    let trained = study::train_on_prefix(&train_ds, &val_ds, a.traj_len, &tc)?;
    checkpoint::write_checkpoint(&a.out_model, &trained, tc.seed, &scenario(&train_ds, a.traj_len), &fingerprint)?;
    if let Some(p) = &a.curve_out {
        let mut csv = report::curve_csv(&trained.curve);
        csv.meta("scenario", scenario(&train_ds, a.traj_len)).meta("config_fingerprint", &fingerprint);
        csv.write(p)?;
    }
    println!(
        "best epoch {} of {}, validation loss {:e}, mean validation infidelity {:e}",
        trained.curve.best_epoch, trained.curve.epochs_run, trained.curve.best_val_loss, trained.val_infidelity
    );
    Ok(())
}

fn eval(a: &EvalArgs, mismatch: bool) -> Result<()> {
    let (header, model) = checkpoint::read_checkpoint(&a.model)?;
    let ds = Dataset::read(&a.dataset)?;
    let samples = study::samples_for_model(&model, &ds)?;
    let ev = nn::evaluate(&model, &samples)?;
    let mut csv = study::evaluation_csv(&header.scenario, &ds, &ev, mismatch);
    csv.meta("model_sha256", &header.payload_sha256);
    csv.write(&a.report_out)?;
    println!("mean infidelity {:e} over {} states", ev.summary.mean, ev.summary.count);
    Ok(())
}

fn moments_cmd(a: &MomentsArgs) -> Result<()> {
    let eta = parse_state(&a.state)?;
    let rep = moments::truncation_error_report(a.alpha, &eta, &a.nt_list, a.t_max, a.dt)?;
    let mut csv = report::truncation_csv(&rep);
    csv.meta("state", &a.state);
    write_csv(&csv, a.out.as_deref())
}

fn budget(a: &BudgetArgs) -> Result<()> {
    let alpha = match (a.alpha, a.sigma) {
        (Some(alpha), _) => alpha,
        (None, Some(s)) => operators::alpha_from_sigma(a.x0.map_or(s, |x0| s / x0))?,
        (None, None) => return Err(Error::Config("one of --alpha, --sigma is required".into())),
    };
    let gamma = match (a.gamma, a.omega_gamma_ratio) {
        (Some(g), _) => g,
        (None, Some(r)) if r > 0.0 => 1.0 / r,
        _ => return Err(Error::Config("one of --gamma, --omega-gamma-ratio (> 0) is required".into())),
    };
    let b = CoherenceBudget::new(alpha, gamma)?;
    println!("alpha: {}", b.alpha);
    println!("gamma_over_omega0: {}", b.gamma);
    println!("t_star_omega0: {}", b.t_star);
    println!("ratio: {}", b.ratio);
    println!("verdict: {}", b.verdict());
    Ok(())
}

fn wigner(a: &WignerArgs) -> Result<()> {
    if !(a.step > 0.0 && a.x_max > a.x_min && a.p_max > a.p_min) {
        return Err(Error::Config("grid needs step > 0 and max > min".into()));
    }
    let axis = |lo: f64, hi: f64| states::uniform_axis(lo, hi, ((hi - lo) / a.step + 1e-9).floor() as usize + 1);
    let (xs, ps) = (axis(a.x_min, a.x_max), axis(a.p_min, a.p_max));
    let truth = match (&a.state, &a.model, &a.dataset) {
        (Some(s), _, _) => parse_state(s)?,
        (None, Some(_), Some(ds)) => {
            let ds = Dataset::read(ds)?;
            ds.records.get(a.index).ok_or_else(|| Error::Config(format!("index {} out of range", a.index)))?.state.clone()
        }
        _ => return Err(Error::Config("--state or --model/--dataset required".into())),
    };
    report::wigner_csv(&states::wigner_grid(&truth, &xs, &ps)).write(&a.out)?;
    if let (Some(m), Some(ds), Some(out)) = (&a.model, &a.dataset, &a.out_reconstructed) {
        let (_, model) = checkpoint::read_checkpoint(m)?;
        let ds = Dataset::read(ds)?;
        let samples = study::samples_for_model(&model, &ds)?;
        if a.index >= samples.len() {
            return Err(Error::Config(format!("index {} out of range", a.index)));
        }
        let row = samples.inputs.row(a.index).to_vec();
        let est = nn::train::predict_one(&model, &row)?.eta_est;
        let grid = states::wigner_grid(&est, &xs, &ps);
        let mut csv = report::wigner_csv(&grid);
        csv.meta("infidelity", states::infidelity(&ds.records[a.index].state, &est)?);
        csv.write(out)?;
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&a.config)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let history = qmtomo::pipeline::dataset::observable_history(&cfg)?;
    let tr = qmtomo::pipeline::dataset::generate_with_history(&cfg, Split::Train, &history, a.workers)?;
    let va = qmtomo::pipeline::dataset::generate_with_history(&cfg, Split::Val, &history, a.workers)?;
    tr.write(&a.out_dir.join("train.ds"))?;
    va.write(&a.out_dir.join("val.ds"))?;
    let fp = cfg.fingerprint();
    let cells = study::length_sweep(&tr, &va, &a.lengths, &cfg.training, |cell, trained| {
        let tag = format!("len{}", cell.traj_len);
        checkpoint::write_checkpoint(
            &a.out_dir.join(format!("model_{tag}.ckpt")),
            trained,
            cfg.training.seed,
            &scenario(&tr, cell.traj_len),
            &fp,
        )?;
        let mut csv = report::curve_csv(&trained.curve);
        csv.meta("config_fingerprint", &fp);
        csv.write(&a.out_dir.join(format!("curve_{tag}.csv")))?;
        println!("traj_len {}: mean infidelity {:e}", cell.traj_len, cell.mean_infidelity);
        Ok(())
    })?;
    study::sweep_csv(&cfg, &cells).write(&a.out_dir.join("sweep.csv"))
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::GenDataset(a) => gen_dataset(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a, false),
        Command::Xval(a) => eval(a, true),
        Command::Moments(a) => moments_cmd(a),
        Command::Budget(a) => budget(a),
        Command::Wigner(a) => wigner(a),
        Command::Sweep(a) => sweep(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
