use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use seqmon::covest::{
    apply_threshold, estimate_moments, min_eigenvalue, precision_estimate, select_c_th, write_matrix_csv,
    SymmetricJson, ThresholdKind, ThresholdRule, ThresholdValue, C_TH_GRID,
};
use seqmon::critval::{
    CriticalValueTable, CriticalValues, SimConfig, TABLE_ALPHAS, TABLE_DELTAS, TABLE_GAMMAS, TABLE_HORIZONS,
};
use seqmon::datagen::{self, GeneratorKind, GeneratorSpec, Innovation};
use seqmon::deepmon::{rollover_monitor, EpisodeLog, RolloverConfig};
use seqmon::projection::{build_portfolio, PortfolioKind, PortfolioSpec};
use seqmon::{
    replay, validate_stream, BoundaryConfig, DetectorKind, Horizon, LrvConfig, MonitorState, ObservationStream,
    ProjectionVector, RunReport, Weighting,
};

use crate::{
    Cli, CliError, Command, CovestArgs, CritvalArgs, DatagenArgs, DetectorArg, ExperimentArgs, Format, GenKind,
    MonitorArgs, PortfolioArg, PortfolioArgs, ThresholdArg,
};

type Result<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Datagen(a) => datagen(cli, a),
        Command::Critval(a) => critval(cli, a),
        Command::Monitor(a) => monitor(cli, a),
        Command::Experiment63(a) => experiment63(cli, a),
        Command::Covest(a) => covest(cli, a),
        Command::Portfolio(a) => portfolio(cli, a),
    }
}

fn parse_horizon(s: &str) -> Result<Horizon> {
    if s.eq_ignore_ascii_case("open") {
        return Ok(Horizon::OpenEnd);
    }
    let t: f64 = s
        .parse()
        .map_err(|_| invalid(format!("horizon `{s}`: expected `open` or a number")))?;
    Ok(Horizon::ClosedEnd(t))
}

fn threshold_kind(t: ThresholdArg) -> Option<ThresholdKind> {
    match t {
        ThresholdArg::None => None,
        ThresholdArg::Hard => Some(ThresholdKind::Hard),
        ThresholdArg::Lasso => Some(ThresholdKind::Lasso),
        ThresholdArg::Scad => Some(ThresholdKind::scad()),
    }
}

/// Writer for `--out`, or stdout.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn out_dir(path: Option<&Path>) -> Result<Option<PathBuf>> {
    match path {
        Some(p) => {
            fs::create_dir_all(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Ok(Some(p.to_path_buf()))
        }
        None => Ok(None),
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json_file<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut w = output(Some(path))?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn datagen(cli: &Cli, a: &DatagenArgs) -> Result<()> {
    if cli.format == Format::Jsonl {
        return Err(invalid("datagen writes CSV only"));
    }
    let default_n = if a.kind == GenKind::Regression63 { datagen::REG63_LEN } else { 1000 };
    let n = a.n.unwrap_or(default_n);
    let innovation = match a.df {
        Some(df) => Innovation::StudentT { df },
        None => Innovation::Normal,
    };
    let kind = match a.kind {
        GenKind::VectorMa => GeneratorKind::VectorMa {
            beta: a.beta,
            l_max: a.l_max,
            innovation,
            mu: None,
        },
        GenKind::LocallyStationary => GeneratorKind::LocallyStationary {
            beta: a.beta,
            l_max: a.l_max,
            innovation,
            len: None,
        },
        GenKind::CovarianceBreak => {
            if a.factor.is_nan() || a.factor <= 0.0 {
                return Err(invalid("factor must be positive"));
            }
            GeneratorKind::CovarianceBreak {
                sigma0: DMatrix::identity(a.d, a.d),
                sigma_a: DMatrix::identity(a.d, a.d) * a.factor,
                k_star: a.k_star.unwrap_or(n / 2),
            }
        }
        GenKind::Regression63 => GeneratorKind::Regression63 {
            noise_as_sd: a.noise_as_sd,
        },
    };
    let d = if a.kind == GenKind::Regression63 { 3 } else { a.d };
    let spec = GeneratorSpec {
        kind,
        d,
        seed: cli.seed,
    };
    let stream = datagen::generate(&spec, n)?;
    let mut w = output(cli.out.as_deref())?;
    stream.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn critval(cli: &Cli, a: &CritvalArgs) -> Result<()> {
    let sim = SimConfig {
        reps: a.reps,
        grid: a.grid,
        seed: cli.seed,
    };
    if a.table {
        let table = CriticalValueTable::simulate_grid(&TABLE_GAMMAS, &TABLE_DELTAS, &TABLE_HORIZONS, &TABLE_ALPHAS, &sim)?;
        let mut w = output(cli.out.as_deref())?;
        writeln!(w, "{}", table.to_json()?)?;
        w.flush()?;
        return Ok(());
    }
    let horizon = parse_horizon(&a.horizon)?;
    let weighting = if a.flat { Weighting::Flat } else { Weighting::Paper };
    let table = if a.fresh {
        CriticalValueTable::default()
    } else {
        CriticalValueTable::shipped()
    };
    let mut cv = CriticalValues::new(table, sim);
    let c = cv.get(a.gamma, a.delta, horizon, weighting, a.alpha)?;
    let entry = cv
        .table
        .entries
        .iter()
        .find(|e| e.c == c && e.alpha == a.alpha)
        .copied()
        .expect("value just inserted or found");
    match cli.out.as_deref() {
        Some(p) => write_json_file(p, &entry)?,
        None => print_json(&entry)?,
    }
    Ok(())
}

fn parse_numbers(s: &str) -> Result<Vec<f64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| invalid(format!("not a number: `{t}`"))))
        .collect()
}

/// Thresholded covariance of the rows of `data` and its precision matrix.
fn precision_from(data: &DMatrix<f64>, kind: Option<ThresholdKind>, eps0: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mom = estimate_moments(data)?;
    let sigma = match kind {
        Some(k) => {
            let t = ThresholdRule::new(k, ThresholdValue::paper_default()).resolve(data.ncols(), data.nrows())?;
            apply_threshold(&mom.sigma_hat, k, t)
        }
        None => mom.sigma_hat.clone(),
    };
    let p = precision_estimate(&sigma, eps0)?;
    Ok((mom.mu_hat.as_slice().to_vec(), p.precision))
}

fn portfolio_kind(spec: &str) -> Result<PortfolioKind> {
    match spec.split_once(':') {
        None if spec == "minvar" => Ok(PortfolioKind::MinVariance),
        None if spec == "tangency" => Ok(PortfolioKind::Tangency),
        Some(("target", mu0)) => Ok(PortfolioKind::TargetReturn {
            mu0: mu0.parse().map_err(|_| invalid(format!("target return `{mu0}`")))?,
        }),
        _ => Err(invalid(format!(
            "v estimator `{spec}`: expected minvar, tangency or target:<mu0>"
        ))),
    }
}

#[derive(Serialize)]
struct MonitorSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    signal_time: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    signal_k: Option<usize>,
    c: f64,
    sigma0_hat: f64,
    v_source: String,
    m: usize,
    n: usize,
    gamma: f64,
    delta: f64,
    alpha: f64,
    horizon: Horizon,
    detector: DetectorKind,
    truncated: bool,
}

fn monitor(cli: &Cli, a: &MonitorArgs) -> Result<()> {
    let horizon = parse_horizon(&a.horizon)?;
    let boundary = BoundaryConfig {
        gamma: a.gamma,
        delta: a.delta,
        horizon,
        weighting: Weighting::Paper,
    };
    boundary.validate()?;
    let lrv = LrvConfig {
        rho: a.rho,
        b_override: None,
    };
    let stream = ObservationStream::read_csv_path(&a.input, a.m)?;
    let report = validate_stream(&stream);
    if !report.is_ok() {
        return Err(invalid(format!("invalid stream: {}", report.summary())));
    }
    let kind = match a.detector {
        DetectorArg::Projection => DetectorKind::Projection,
        DetectorArg::Residual => DetectorKind::Residual,
    };
    if kind == DetectorKind::Residual && stream.response().is_none() {
        return Err(invalid("the residual detector needs a response column `z`"));
    }
    let (v, v_source) = if let Some(s) = &a.v {
        (ProjectionVector::new(parse_numbers(s)?), "inline".to_string())
    } else if let Some(p) = &a.v_file {
        let text = fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        let v = match serde_json::from_str::<ProjectionVector>(&text) {
            Ok(v) => v,
            Err(_) => match serde_json::from_str::<Vec<f64>>(&text) {
                Ok(e) => ProjectionVector::new(e),
                Err(_) => ProjectionVector::new(parse_numbers(&text)?),
            },
        };
        (v, format!("file:{}", p.display()))
    } else {
        let spec = a.v_estimator.as_deref().expect("clap group requires one source");
        let pk = portfolio_kind(spec)?;
        let (mu, precision) = precision_from(&stream.training_matrix()?, threshold_kind(a.threshold), a.eps0)?;
        let p = build_portfolio(&PortfolioSpec { kind: pk, exposure_cap: None }, &precision, &mu)?;
        (p.projection(), format!("estimator:{spec}"))
    };
    if v.dim() != stream.dim() {
        return Err(invalid(format!("v has {} entries, stream has {} columns", v.dim(), stream.dim())));
    }
    let c = match a.c {
        Some(c) => c,
        None => {
            let sim = SimConfig {
                reps: a.reps,
                grid: a.grid,
                seed: cli.seed,
            };
            CriticalValues::shipped(sim).get(a.gamma, a.delta, horizon, Weighting::Paper, a.alpha)?
        }
    };
    if stream.len() < a.m {
        return Err(seqmon::Error::InsufficientData {
            needed: a.m,
            available: stream.len(),
        }
        .into());
    }
    let train: Vec<&[f64]> = (0..a.m).map(|i| stream.row(i)).collect();
    let responses = stream.response().map(|z| &z[..a.m]);
    let run: RunReport = if matches!(horizon, Horizon::ClosedEnd(_)) {
        let cfg = seqmon::MonitorConfig { boundary, c, lrv, kind };
        seqmon::run_closed_end(&stream, v, &cfg)?
    } else {
        let state = MonitorState::from_training(&train, responses, v, &lrv, c, boundary, kind)?;
        let obs = (a.m..stream.len()).map(|i| (stream.row(i), stream.response().map(|z| z[i])));
        replay(state, obs)?
    };
    let summary = MonitorSummary {
        signal_time: run.signal.map(|e| e.time),
        signal_k: run.signal.map(|e| e.k),
        c,
        sigma0_hat: run.final_state.sigma0_hat,
        v_source,
        m: a.m,
        n: stream.len(),
        gamma: a.gamma,
        delta: a.delta,
        alpha: a.alpha,
        horizon,
        detector: kind,
        truncated: run.truncated,
    };
    if let Some(dir) = out_dir(cli.out.as_deref())? {
        match cli.format {
            Format::Jsonl => {
                let mut w = output(Some(&dir.join("trajectory.jsonl")))?;
                run.write_jsonl(&mut w)?;
                w.flush()?;
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(output(Some(&dir.join("trajectory.csv")))?);
                w.write_record(["k", "stat", "bound", "signal"])?;
                for p in &run.trajectory {
                    let sig = run.signal.is_some_and(|e| e.k == p.k);
                    w.write_record([p.k.to_string(), p.stat.to_string(), p.bound.to_string(), (sig as u8).to_string()])?;
                }
                w.flush()?;
            }
        }
        write_json_file(&dir.join("summary.json"), &summary)?;
    }
    print_json(&summary)
}

#[derive(Serialize)]
struct ExperimentSummary {
    seed: u64,
    c: f64,
    m: usize,
    episodes: usize,
    signal_times: Vec<usize>,
    retrain: bool,
}

fn experiment_c(cli: &Cli, a: &ExperimentArgs) -> Result<f64> {
    if let Some(c) = a.c {
        return Ok(c);
    }
    let sim = SimConfig {
        seed: cli.seed,
        ..SimConfig::default()
    };
    Ok(CriticalValues::shipped(sim).get(a.gamma, a.delta, Horizon::OpenEnd, Weighting::Paper, a.alpha)?)
}

fn run_experiment(a: &ExperimentArgs, c: f64, seed: u64) -> Result<(ObservationStream, EpisodeLog)> {
    let stream = datagen::generate_regression63_with(seed, a.n, a.noise_as_sd)?;
    let mut cfg = RolloverConfig::new(a.m, BoundaryConfig::open_end(a.gamma, a.delta), c, seed);
    cfg.retrain = !a.no_retrain;
    cfg.train.epochs = a.epochs;
    let log = rollover_monitor(&stream, &cfg)?;
    Ok((stream, log))
}

fn write_trace(log: &EpisodeLog, stream: &ObservationStream, dir: &Path, format: Format) -> Result<()> {
    let z = stream.response().expect("regression data has a response");
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(output(Some(&dir.join("trace.csv")))?);
            w.write_record(["t", "episode", "k", "y1", "z", "d_proj", "d_res", "stat_proj", "stat_res", "bound"])?;
            for r in &log.trace {
                w.write_record([
                    r.t.to_string(),
                    r.episode.to_string(),
                    r.k.to_string(),
                    stream.row(r.t - 1)[0].to_string(),
                    z[r.t - 1].to_string(),
                    r.d_proj.to_string(),
                    r.d_res.to_string(),
                    r.stat_proj.to_string(),
                    r.stat_res.to_string(),
                    r.bound.map_or(String::new(), |b| b.to_string()),
                ])?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut w = output(Some(&dir.join("trace.jsonl")))?;
            for r in &log.trace {
                serde_json::to_writer(&mut w, r)?;
                writeln!(w)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn experiment63(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(invalid("seeds must be at least 1"));
    }
    let c = experiment_c(cli, a)?;
    let dir = out_dir(cli.out.as_deref())?;
    let mut summaries = Vec::new();
    for i in 0..a.seeds as u64 {
        let seed = cli.seed + i;
        let (stream, log) = run_experiment(a, c, seed)?;
        if let Some(dir) = &dir {
            let sub = if a.seeds == 1 { dir.clone() } else { dir.join(format!("seed_{seed}")) };
            fs::create_dir_all(&sub)?;
            stream.write_csv_path(sub.join("data.csv"))?;
            let mut w = output(Some(&sub.join("episodes.jsonl")))?;
            log.write_jsonl(&mut w)?;
            w.flush()?;
            write_trace(&log, &stream, &sub, cli.format)?;
        }
        summaries.push(ExperimentSummary {
            seed,
            c,
            m: a.m,
            episodes: log.episodes.len(),
            signal_times: log.signal_times(),
            retrain: !a.no_retrain,
        });
    }
    if let Some(dir) = &dir {
        if a.seeds > 1 {
            let mut w = csv::Writer::from_writer(output(Some(&dir.join("delays.csv")))?);
            w.write_record(["seed", "episodes", "signal_times"])?;
            for s in &summaries {
                let times: Vec<String> = s.signal_times.iter().map(|t| t.to_string()).collect();
                w.write_record([s.seed.to_string(), s.episodes.to_string(), times.join(" ")])?;
            }
            w.flush()?;
        }
        write_json_file(&dir.join("summary.json"), &summaries)?;
    }
    if summaries.len() == 1 {
        print_json(&summaries[0])
    } else {
        print_json(&summaries)
    }
}

#[derive(Serialize)]
struct CovestSummary {
    d: usize,
    m: usize,
    t: f64,
    threshold: Option<ThresholdKind>,
    c_th: Option<f64>,
    offdiag_nonzeros: usize,
    min_eigenvalue: f64,
}

fn covest(cli: &Cli, a: &CovestArgs) -> Result<()> {
    let mut stream = ObservationStream::read_csv_path(&a.input, 0)?;
    let m = a.m.unwrap_or(stream.len());
    if m > stream.len() {
        return Err(invalid(format!("m = {m} exceeds the {} rows available", stream.len())));
    }
    stream.set_train_len(m);
    let data = stream.training_matrix()?;
    let mom = estimate_moments(&data)?;
    let d = data.ncols();
    let kind = threshold_kind(a.threshold);
    let (t, c_th) = match (kind, a.t) {
        (None, _) => (0.0, None),
        (Some(_), Some(t)) => (t, None),
        (Some(k), None) => {
            let c_th = if a.select {
                select_c_th(&data, k, a.q, &C_TH_GRID, seqmon::covest::DEFAULT_SPLITS, cli.seed)?
            } else {
                a.c_th
            };
            let rule = ThresholdRule::new(k, ThresholdValue::PaperRule { c_th, q: a.q });
            (rule.resolve(d, m)?, Some(c_th))
        }
    };
    let sigma = match kind {
        Some(k) => {
            k.validate()?;
            apply_threshold(&mom.sigma_hat, k, t)
        }
        None => mom.sigma_hat.clone(),
    };
    let offdiag_nonzeros = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && sigma[(i, j)] != 0.0)
        .count();
    let mut w = output(cli.out.as_deref())?;
    match cli.format {
        Format::Csv => write_matrix_csv(&sigma, &mut w)?,
        Format::Jsonl => {
            serde_json::to_writer(&mut w, &SymmetricJson::from_matrix(&sigma))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    let summary = CovestSummary {
        d,
        m,
        t,
        threshold: kind,
        c_th,
        offdiag_nonzeros,
        min_eigenvalue: min_eigenvalue(&sigma)?,
    };
    if cli.out.is_some() {
        print_json(&summary)?;
    } else {
        eprintln!("{}", serde_json::to_string(&summary)?);
    }
    Ok(())
}

fn portfolio(cli: &Cli, a: &PortfolioArgs) -> Result<()> {
    let mut stream = ObservationStream::read_csv_path(&a.input, 0)?;
    let n = stream.len();
    stream.set_train_len(n);
    let kind = match a.kind {
        PortfolioArg::Minvar => PortfolioKind::MinVariance,
        PortfolioArg::Tangency => PortfolioKind::Tangency,
        PortfolioArg::Target => PortfolioKind::TargetReturn {
            mu0: a.mu0.ok_or_else(|| invalid("--mu0 is required for a target-return portfolio"))?,
        },
    };
    let (mu, precision) = precision_from(&stream.training_matrix()?, threshold_kind(a.threshold), a.eps0)?;
    let p = build_portfolio(&PortfolioSpec { kind, exposure_cap: a.cap }, &precision, &mu)?;
    match cli.out.as_deref() {
        Some(path) => write_json_file(path, &p)?,
        None => print_json(&p)?,
    }
    Ok(())
}
