use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use inca_lab::accountant::{
    abstract_dp_check, calibrate, edge_vectors, rank_count, sufficiency_by_connectivity, ConnectivityVerdict, NoiseChoice,
    PrivacyBudget, Theorem, RANK_RTOL,
};
use inca_lab::adversary::{sample_corrupted, AdversarySystem, AdversaryView, ObservationOperator, ViewMode};
use inca_lab::baselines::{
    central_dp_mse, cordpdme_bound, cordpdme_pair_variance, gopa_calibrate, gopa_simulate, local_dp_mse, muffliato,
    GopaParams,
};
use inca_lab::harness::{emit, run_experiment, to_csv, to_json, trial_seed, ExperimentConfig, ExperimentKind, OutputFormat, ResultRow};
use inca_lab::protocol::{adapt_all, disseminate, run_inca, NoiseSplit, ProtocolConfig, SplitKind};
use inca_lab::rng::{self, tag};
use inca_lab::topology::{random_kout_schedule, sample_dropouts, CommSchedule, HiddenGraph, OnlineHistory};
use inca_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "inca", version, about = "Incremental-averaging DP mean estimation lab")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Also write SVG charts (requires --out).
    #[arg(long, global = true)]
    plot: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol once and print the transcript.
    Simulate(RunArgs),
    /// Calibrate noise variances for one random execution.
    Calibrate(RunArgs),
    /// Check the rank precondition for one random execution.
    RankCheck(RunArgs),
    /// Run a named experiment.
    Experiment {
        #[arg(value_parser = parse_kind)]
        name: ExperimentKind,
    },
    /// Evaluate a baseline estimator.
    Baseline {
        #[arg(value_enum)]
        name: BaselineKind,
        #[command(flatten)]
        args: RunArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Central,
    Local,
    Muffliato,
    Gopa,
    Cordpdme,
}

fn parse_kind(s: &str) -> std::result::Result<ExperimentKind, String> {
    s.replace('-', "_").parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Default)]
struct RunArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "iterations", short = 'T')]
    t: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    split: Option<Split>,
    #[arg(long, value_enum)]
    theorem: Option<TheoremArg>,
    #[arg(long)]
    sigma_ind_sq: Option<f64>,
    #[arg(long)]
    sigma_delta_sq: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    distinct: bool,
    /// Also run the dense covariance check after calibrating.
    #[arg(long)]
    check: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Mode {
    Eavesdrop,
    Collusion,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Split {
    Early,
    Incremental,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TheoremArg {
    Nodrop,
    Totalsum,
    Coalition,
}

/// Settings of a single execution.
#[derive(Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunSpec {
    n: usize,
    k: usize,
    #[serde(rename = "T")]
    t: usize,
    epsilon: f64,
    delta: f64,
    rho: f64,
    gamma: f64,
    gamma2: Option<f64>,
    mode: Mode,
    observe_fraction: f64,
    split: Split,
    theorem: Option<TheoremArg>,
    sigma_ind_sq: Option<f64>,
    sigma_delta_sq: f64,
    alpha: f64,
    distinct: bool,
    gopa_k: usize,
    trials: usize,
    seed: u64,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            n: 100,
            k: 1,
            t: 10,
            epsilon: 0.1,
            delta: 1e-5,
            rho: 0.0,
            gamma: 0.0,
            gamma2: None,
            mode: Mode::Eavesdrop,
            observe_fraction: 0.5,
            split: Split::Incremental,
            theorem: None,
            sigma_ind_sq: None,
            sigma_delta_sq: 1.0,
            alpha: 1.3,
            distinct: false,
            gopa_k: 20,
            trials: 100,
            seed: 1,
        }
    }
}

impl RunSpec {
    fn load(cli: &Cli, args: &RunArgs) -> Result<Self> {
        let mut s: RunSpec = match &cli.config {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
            None => RunSpec::default(),
        };
        macro_rules! over {
            ($($f:ident),*) => { $( if let Some(v) = args.$f { s.$f = v; } )* };
        }
        over!(n, k, t, epsilon, delta, rho, gamma, mode, split, sigma_delta_sq, alpha);
        if args.gamma2.is_some() {
            s.gamma2 = args.gamma2;
        }
        if args.theorem.is_some() {
            s.theorem = args.theorem;
        }
        if args.sigma_ind_sq.is_some() {
            s.sigma_ind_sq = args.sigma_ind_sq;
        }
        s.distinct |= args.distinct;
        if let Some(v) = cli.seed {
            s.seed = v;
        }
        if let Some(v) = cli.trials {
            s.trials = v;
        }
        if s.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(s)
    }

    fn split(&self, sigma_delta_sq: f64) -> Result<NoiseSplit> {
        match self.split {
            Split::Early => NoiseSplit::early(self.t, sigma_delta_sq),
            Split::Incremental => NoiseSplit::incremental(self.t, sigma_delta_sq),
        }
    }

    fn view_mode(&self) -> ViewMode {
        match self.mode {
            Mode::Eavesdrop => ViewMode::Eavesdrop,
            Mode::Collusion => ViewMode::Collusion,
        }
    }

    fn theorem(&self) -> Theorem {
        match self.theorem {
            Some(TheoremArg::Nodrop) => Theorem::Nodrop,
            Some(TheoremArg::Totalsum) => Theorem::Totalsum,
            Some(TheoremArg::Coalition) => Theorem::Coalition,
            None if self.gamma > 0.0 => Theorem::Coalition,
            None => Theorem::Nodrop,
        }
    }

    /// Schedule, dropout history and adversary view of trial zero.
    fn instance(&self) -> Result<(CommSchedule, OnlineHistory, AdversaryView)> {
        let seed = trial_seed(self.seed, tag::PHASE_CALIBRATE, 0);
        let schedule = random_kout_schedule(self.n, self.k, self.t, &mut rng::stream(seed, &[tag::SCHEDULE]), self.distinct)?;
        let history = sample_dropouts(self.n, self.t, self.gamma, &mut rng::stream(seed, &[tag::DROPOUT]))?;
        let view = match self.view_mode() {
            ViewMode::Eavesdrop => AdversaryView::eavesdrop(self.n, self.t, self.observe_fraction, &mut rng::stream(seed, &[tag::VIEW]))?,
            ViewMode::Collusion => {
                let corrupted = sample_corrupted(self.n, self.rho, &mut rng::stream(seed, &[tag::CORRUPT]))?;
                AdversaryView::collusion(&schedule, corrupted)?
            }
        };
        Ok((schedule, history, view))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Simulate(args) => simulate(&RunSpec::load(cli, args)?, cli),
        Command::Calibrate(args) => calibrate_cmd(&RunSpec::load(cli, args)?, args.check, cli),
        Command::RankCheck(args) => rank_check(&RunSpec::load(cli, args)?, cli),
        Command::Experiment { name } => {
            let mut config = match &cli.config {
                Some(p) => ExperimentConfig::from_json(&fs::read_to_string(p)?)?,
                None => ExperimentConfig::defaults(*name),
            };
            if config.experiment != *name {
                return Err(Error::Config(format!("config is for `{}`", config.experiment.name())));
            }
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            if let Some(t) = cli.trials {
                config.trials = t;
            }
            config.validate()?;
            write_rows(&run_experiment(&config)?, cli)
        }
        Command::Baseline { name, args } => write_rows(&baseline(*name, &RunSpec::load(cli, args)?)?, cli),
    }
}

fn write_rows(rows: &[ResultRow], cli: &Cli) -> Result<u8> {
    match &cli.out {
        Some(dir) => {
            for p in emit(rows, dir, cli.format.into(), cli.plot)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            if rows.is_empty() {
                return Err(Error::Config("no result rows".into()));
            }
            match cli.format {
                Format::Csv => print!("{}", to_csv(rows)),
                Format::Json => println!("{}", to_json(rows)),
            }
        }
    }
    Ok(0)
}

fn write_doc(name: &str, body: &str, cli: &Cli) -> Result<()> {
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let path = dir.join(name);
            fs::write(&path, body)?;
            eprintln!("wrote {}", path.display());
        }
        None => println!("{body}"),
    }
    Ok(())
}

fn simulate(spec: &RunSpec, cli: &Cli) -> Result<u8> {
    let (schedule, history, _) = spec.instance()?;
    let sigma_ind_sq = spec.sigma_ind_sq.unwrap_or(1.0);
    let seed = trial_seed(spec.seed, tag::PHASE_EVALUATE, 0);
    let x: Vec<f64> = {
        use rand::Rng;
        let mut r = rng::stream(seed, &[tag::INPUT]);
        (0..spec.n).map(|_| r.random::<f64>()).collect()
    };
    let cfg = ProtocolConfig { n: spec.n, iterations: spec.t, sigma_ind_sq, split: spec.split(spec.sigma_delta_sq)?, seed };
    let transcript = run_inca(&cfg, &schedule, &history, &x)?;
    let estimate = disseminate(&transcript)?;
    eprintln!(
        "estimate {estimate:.6}, true mean {:.6}, split {}",
        x.iter().sum::<f64>() / spec.n as f64,
        if cfg.split.kind() == SplitKind::Early { "early" } else { "incremental" }
    );
    write_doc("transcript.json", &transcript.to_json(), cli)?;
    Ok(0)
}

fn calibrate_cmd(spec: &RunSpec, check: bool, cli: &Cli) -> Result<u8> {
    let budget = PrivacyBudget::new(spec.epsilon, spec.delta)?;
    let (schedule, history, view) = spec.instance()?;
    let split = spec.split(1.0)?;
    let w: Vec<f64> = adapt_all(&split, &history).iter().map(|a| a.injected_weight()).collect();
    let edges = edge_vectors(&schedule, &history, &view, &w)?;
    let op = ObservationOperator::new(&schedule, &history, &split, &view)?;
    let choice = match spec.sigma_ind_sq {
        Some(v) => NoiseChoice::Explicit(v),
        None => NoiseChoice::BoundMultiple(spec.alpha),
    };
    let result = calibrate(&budget, &op, &edges, &w, &history, spec.theorem(), choice)?;
    write_doc("calibration.json", &serde_json::to_string_pretty(&result)?, cli)?;
    if !result.ok {
        if result.rank < result.required_rank {
            return Err(Error::RankPrecondition { rank: result.rank, required: result.required_rank });
        }
        return Err(Error::Infeasible(result.reason.unwrap_or_default()));
    }
    if check {
        let system = AdversarySystem::build(&schedule, &history, &split, &view)?;
        let pass = abstract_dp_check(&budget, &system, result.sigma_ind_sq, result.sigma_delta_sq)?;
        eprintln!("covariance check: {}", if pass { "pass" } else { "fail" });
        if !pass {
            return Err(Error::Conditioning("calibrated variances fail the covariance check".into()));
        }
    }
    Ok(0)
}

fn rank_check(spec: &RunSpec, cli: &Cli) -> Result<u8> {
    let (schedule, history, view) = spec.instance()?;
    let split = spec.split(1.0)?;
    let w: Vec<f64> = adapt_all(&split, &history).iter().map(|a| a.injected_weight()).collect();
    let edges = edge_vectors(&schedule, &history, &view, &w)?;
    let rank = rank_count(&edges, RANK_RTOL);
    let required = view.honest().len().saturating_sub(1);
    let graph = HiddenGraph::build(&schedule, &history, &view);
    let connected = sufficiency_by_connectivity(&graph, &edges)? == ConnectivityVerdict::Confirmed;
    #[derive(Serialize)]
    struct Report {
        rank: usize,
        required: usize,
        ok: bool,
        hidden_graph_strongly_connected: bool,
        hidden_edges: usize,
    }
    let report = Report { rank, required, ok: rank >= required, hidden_graph_strongly_connected: connected, hidden_edges: edges.len() };
    write_doc("rank.json", &serde_json::to_string_pretty(&report)?, cli)?;
    if rank < required {
        return Err(Error::RankPrecondition { rank, required });
    }
    Ok(0)
}

fn baseline(kind: BaselineKind, spec: &RunSpec) -> Result<Vec<ResultRow>> {
    let row = |method: &str, metric: &str, value: f64, trials: usize| {
        let mut r = ResultRow::new("baseline", method, spec.n, metric, value, trials, spec.seed);
        r.epsilon = Some(spec.epsilon);
        r.delta = Some(spec.delta);
        r
    };
    let budget = PrivacyBudget::new(spec.epsilon, spec.delta)?;
    let sigma_ind_sq = || spec.sigma_ind_sq.unwrap_or(spec.alpha * budget.c_sq / (spec.n as f64 * (1.0 - spec.gamma - spec.rho) * spec.epsilon.powi(2)));
    Ok(match kind {
        BaselineKind::Central => vec![row("central_dp", "mse", central_dp_mse(spec.n, spec.epsilon, spec.delta), 0)],
        BaselineKind::Local => vec![row("local_dp", "mse", local_dp_mse(spec.n, spec.epsilon, spec.delta), 0)],
        BaselineKind::Muffliato => {
            let m = muffliato(spec.n, spec.epsilon, spec.delta)?;
            let mut out = vec![row("muffliato_lower_bound", "mse", m.mse, 0), row("muffliato_lower_bound", "sigma_sq", m.sigma_sq, 0)];
            let mut t = row("muffliato_lower_bound", "iterations", m.iterations as f64, 0);
            t.t = Some(m.iterations);
            out.push(t);
            out
        }
        BaselineKind::Gopa => {
            let s_ind = sigma_ind_sq();
            let gamma2 = spec.gamma2.unwrap_or(spec.gamma / 2.0);
            let mut total = 0.0;
            for s in 0..spec.trials {
                let seed = trial_seed(spec.seed, tag::PHASE_EVALUATE, s);
                let corrupted = sample_corrupted(spec.n, spec.rho, &mut rng::stream(seed, &[tag::CORRUPT]))?;
                let sigma_pair_sq = gopa_calibrate(spec.n, spec.gopa_k, &corrupted, &budget, s_ind, &mut rng::stream(seed, &[tag::MASK, 0]))?;
                let params = GopaParams { n: spec.n, k: spec.gopa_k, gamma: spec.gamma, gamma2, sigma_pair_sq, sigma_ind_sq: s_ind };
                let x: Vec<f64> = {
                    use rand::Rng;
                    let mut r = rng::stream(seed, &[tag::INPUT]);
                    (0..spec.n).map(|_| r.random::<f64>()).collect()
                };
                let run = gopa_simulate(&params, &x, &mut rng::stream(seed, &[tag::MASK]))?;
                total += (run.estimate - run.truth).powi(2);
            }
            let mut r = row("gopa", "mse", total / spec.trials as f64, spec.trials);
            r.k = Some(spec.gopa_k);
            r.rho = Some(spec.rho);
            r.gamma = Some(spec.gamma);
            r.gamma2 = Some(gamma2);
            r.alpha = Some(spec.alpha);
            vec![r]
        }
        BaselineKind::Cordpdme => {
            let s_ind = sigma_ind_sq();
            let pair = cordpdme_pair_variance(spec.n, spec.rho, &budget, s_ind)?;
            let mut r = row("cordpdme_lower_bound", "mse", cordpdme_bound(spec.n, spec.gamma, pair, s_ind), 0);
            r.rho = Some(spec.rho);
            r.gamma = Some(spec.gamma);
            r.alpha = Some(spec.alpha);
            vec![r]
        }
    })
}
