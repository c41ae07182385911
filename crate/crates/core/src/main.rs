use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use degfusion::config::RunConfig;
use degfusion::hsic::rank_and_select;
use degfusion::models::data::merged_times;
use degfusion::models::{evaluate_model_batch, write_data_csv, DataGroup, Trajectory};
use degfusion::pipeline::report::trajectories_csv;
use degfusion::pipeline::{
    rul_cdf, run_full_pipeline, run_iteration, segmented_assimilation, summarize_rul, write_report, FinalReport,
    PipelineState, Termination,
};
use degfusion::prob::sample_prior;
use degfusion::surrogate::{build_ensemble, interpolate_outputs, member_q2};
use degfusion::{Error, Result};

const EXIT_FAILURE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_CAP: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "degfusion", version, about = "Bayesian fusion of degradation data into simulator priors, with RUL estimation")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trajectory at the nominal inputs.
    Simulate,
    /// Monte Carlo design of experiments drawn from the prior.
    Doe,
    /// HSIC ranking of the inputs against the data times.
    Sensitivity,
    /// Train the surrogate ensemble and score it on a held-out fifth.
    Surrogate,
    /// A single calibration iteration from the configured prior.
    Assimilate,
    /// RUL distribution of the configured prior.
    Rul,
    /// The full iterative pipeline.
    Pipeline,
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

struct Run {
    config: RunConfig,
    text: String,
    out: PathBuf,
}

impl Run {
    fn open(cli: &Cli) -> Result<Self> {
        let path = cli
            .config
            .as_ref()
            .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let mut config = RunConfig::load(path)?;
        if let Some(s) = cli.seed {
            config.seed = s;
        }
        std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io {
            path: cli.out.clone(),
            source: e,
        })?;
        let run = Self {
            config,
            text,
            out: cli.out.clone(),
        };
        write(&run.out.join("config.toml"), &run.text)?;
        Ok(run)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn data(&self) -> Result<Vec<DataGroup>> {
        let data = self.config.load_data()?;
        if self.config.data.synthetic.is_some() {
            write_data_csv(&data, &self.path("data.csv"))?;
        }
        Ok(data)
    }

    fn seeds(&self) -> Result<()> {
        write(&self.path("seeds.json"), &format!("{{\n  \"base\": {}\n}}\n", self.config.seed))
    }
}

fn inputs_csv(names: &[String], x: &DMatrix<f64>) -> String {
    let mut s = format!("run,{}\n", names.join(","));
    for (i, row) in x.row_iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in row.iter() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn simulate(run: &Run) -> Result<u8> {
    let model = run.config.simulator()?;
    let x = run.config.nominal()?;
    let traj = Trajectory::new(model.grid().clone(), model.simulate(&x)?)?;
    traj.write_csv(&run.path("trajectory.csv"))?;
    Ok(0)
}

fn doe(run: &Run) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let model = run.config.simulator()?;
    let prior = run.config.prior_spec()?;
    let cfg = run.config.pipeline_config();
    let x = sample_prior(&prior, cfg.doe_size, cfg.seeds().doe(0))?;
    let y = evaluate_model_batch(model.as_ref(), &x)?;
    write(&run.path("doe_inputs.csv"), &inputs_csv(prior.names(), &x))?;
    write(&run.path("doe_outputs.csv"), &trajectories_csv(model.grid(), &y, y.ncols()))?;
    run.seeds()?;
    Ok((x, y))
}

fn sensitivity(run: &Run) -> Result<u8> {
    let (x, y) = doe(run)?;
    let model = run.config.simulator()?;
    let prior = run.config.prior_spec()?;
    let data = run.data()?;
    let report = rank_and_select(
        prior.names(),
        &x,
        &y,
        model.grid(),
        &merged_times(&data),
        &run.config.pipeline_config().exclude,
    )?;
    report.write_csv(&run.path("hsic.csv"))?;
    println!("selected {}", report.selected_name());
    Ok(0)
}

fn surrogate(run: &Run) -> Result<u8> {
    let (x, y) = doe(run)?;
    let model = run.config.simulator()?;
    let data = run.data()?;
    let times = if data.is_empty() {
        model.grid().points().to_vec()
    } else {
        merged_times(&data)
    };
    let y = interpolate_outputs(&y, model.grid(), &times)?;
    let n = x.nrows();
    let n_train = n - n / 5;
    let ensemble = build_ensemble(
        &x.rows(0, n_train).into_owned(),
        &y.columns(0, n_train).into_owned(),
        &times,
        &run.config.pipeline_config().ensemble,
    )?;
    ensemble.save(&run.path("surrogate.json"))?;
    let q2 = member_q2(
        &ensemble,
        &x.rows(n_train, n - n_train).into_owned(),
        &y.columns(n_train, n - n_train).into_owned(),
    )?;
    let mut s = String::from("member,q2\n");
    for (label, q) in ensemble.labels().iter().zip(&q2) {
        let _ = writeln!(s, "{label},{q}");
    }
    write(&run.path("q2.csv"), &s)?;
    Ok(0)
}

fn assimilate(run: &Run) -> Result<u8> {
    let model = run.config.simulator()?;
    let data = run.data()?;
    if data.is_empty() {
        return Err(Error::Config("assimilate needs at least one data group".into()));
    }
    let cfg = run.config.pipeline_config();
    cfg.validate()?;
    let (_, rep) = run_iteration(PipelineState::new(run.config.prior_spec()?), &model, &data, &cfg)?;
    let json = serde_json::to_string_pretty(&rep).map_err(|e| Error::Serde(e.to_string()))?;
    write(&run.path("iteration.json"), &(json + "\n"))?;
    let mut s = String::from("value\n");
    for v in &rep.posterior_sample {
        let _ = writeln!(s, "{v}");
    }
    write(&run.path(&format!("posterior_{}.csv", rep.selected_name)), &s)?;
    if let Some(h) = &rep.hsic {
        h.write_csv(&run.path("hsic.csv"))?;
    }
    run.seeds()?;
    println!("{}: KL = {:.4}, R = {:.4}", rep.selected_name, rep.kl, rep.gelman_rubin);
    Ok(if rep.chains_converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn rul(run: &Run) -> Result<u8> {
    let model = run.config.simulator()?;
    let cfg = run.config.pipeline_config();
    let data = run.data()?;
    let t_p = data
        .iter()
        .flat_map(|g| g.times.last().copied())
        .fold(model.grid().start(), f64::max);
    let x = sample_prior(&run.config.prior_spec()?, cfg.rul_sample_size, cfg.seeds().prior_trajectories())?;
    let y = evaluate_model_batch(model.as_ref(), &x)?;
    write(&run.path("rul_prior.csv"), &rul_cdf(&y, model.grid(), cfg.threshold, t_p)?.to_csv())?;
    let summary = summarize_rul(&y, model.grid(), cfg.threshold, t_p)?;
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Serde(e.to_string()))?;
    write(&run.path("rul_summary.json"), &(json + "\n"))?;
    run.seeds()?;
    Ok(0)
}

fn exit_code(reports: &[&FinalReport]) -> u8 {
    if reports.iter().any(|r| !r.chains_converged()) {
        EXIT_NOT_CONVERGED
    } else if reports.iter().any(|r| r.termination == Termination::CapReached) {
        EXIT_CAP
    } else {
        0
    }
}

fn summary_line(r: &FinalReport) -> String {
    let kl: Vec<String> = r.kl_by_variable().iter().map(|(k, v)| format!("{k}={v:.3}")).collect();
    format!("{:?} after {} iterations; KL {}", r.termination, r.history.len(), kl.join(" "))
}

fn pipeline(run: &Run) -> Result<u8> {
    let data = run.data()?;
    let prior = run.config.prior_spec()?;
    let cfg = run.config.pipeline_config();
    if run.config.segmented() {
        let model = run.config.reset_model()?.expect("segmented runs use the reset model");
        let segments = segmented_assimilation(&model, &prior, &data, &cfg)?;
        let mut modes = String::from("segment,start,end,gain_mode\n");
        let mut done = Vec::new();
        for seg in &segments {
            let mode = seg.mode("gain").map_or(String::new(), |m| m.to_string());
            let _ = writeln!(modes, "{},{},{},{mode}", seg.segment, seg.bounds.0, seg.bounds.1);
            if let Some(r) = &seg.report {
                write_report(r, &cfg, &run.path(&format!("segment_{}", seg.segment)))?;
                println!("segment {}: {}", seg.segment, summary_line(r));
                done.push(r);
            }
        }
        write(&run.path("segments.csv"), &modes)?;
        run.seeds()?;
        return Ok(exit_code(&done));
    }
    let report = run_full_pipeline(run.config.simulator()?, prior, &data, &cfg)?;
    write_report(&report, &cfg, &run.out)?;
    println!("{}", summary_line(&report));
    Ok(exit_code(&[&report]))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { 0 });
        }
    };
    let result = Run::open(&cli).and_then(|run| match cli.command {
        Command::Simulate => simulate(&run),
        Command::Doe => doe(&run).map(|_| 0),
        Command::Sensitivity => sensitivity(&run),
        Command::Surrogate => surrogate(&run),
        Command::Assimilate => assimilate(&run),
        Command::Rul => rul(&run),
        Command::Pipeline => pipeline(&run),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { EXIT_INPUT } else { EXIT_FAILURE })
        }
    }
}
