use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ecoc_agg::base::{score, train_binary_problems_with};
use ecoc_agg::decode::{metrics, posteriors_with, EvalMetrics};
use ecoc_agg::experiment::{default_lambda_grid, run_gauss, run_regpath, run_three_class, GaussSettings};
use ecoc_agg::margin::generalization_bound;
use ecoc_agg::synthgen::{gen_gauss, gen_three_class, SynthConfig};
use ecoc_agg::{compute_phi, io as fio, AggregationModel, BinaryModel, BoundReport, CodeMatrix, Exec, ProbMatrix, SolverOptions};
use log::info;
use serde::Serialize;

use crate::{
    CodematrixArgs, Command, EvaluateArgs, GaussArgs, InputArgs, PredictArgs, RegpathArgs, SolverArgs, SynthCommand,
    ThreeClassArgs, TrainArgs,
};

const NOT_CONVERGED: u8 = 2;

pub fn run(command: Command, exec: Exec) -> Result<ExitCode> {
    match command {
        Command::Codematrix(a) => codematrix(a, exec),
        Command::Train(a) => train(a, exec),
        Command::Predict(a) => predict(a, exec),
        Command::Evaluate(a) => evaluate(a, exec),
        Command::Synth(SynthCommand::ThreeClass(a)) => three_class(a, exec),
        Command::Synth(SynthCommand::Gauss(a)) => gauss(a, exec),
        Command::Regpath(a) => regpath(a, exec),
    }
}

fn solver_options(s: &SolverArgs, exec: Exec) -> Result<SolverOptions> {
    let opts = SolverOptions { max_iters: s.max_iters, exec, ..SolverOptions::default() };
    opts.validate()?;
    Ok(opts)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        bail!("--lambda must be positive, got {lambda}");
    }
    Ok(())
}

/// Opens `path` for writing, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json_to<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn read_code(path: &Path) -> Result<CodeMatrix> {
    fio::read_code_matrix(path).with_context(|| format!("reading code matrix {}", path.display()))
}

/// Q matrix and labels from either input form, plus base models when they
/// were trained here.
struct Loaded {
    q: ProbMatrix,
    labels: Vec<usize>,
    base_models: Option<Vec<BinaryModel>>,
}

fn load_training(input: &InputArgs, code: &CodeMatrix, base_reg: f64, exec: Exec) -> Result<Loaded> {
    match (&input.data, &input.q, &input.labels) {
        (Some(data), None, None) => {
            let data = fio::read_dataset(data, code.classes()).with_context(|| format!("reading {}", data.display()))?;
            let start = Instant::now();
            let (models, q) = train_binary_problems_with(exec, &data, code, base_reg)?;
            eprintln!("base classifier training time: {:.3} s", start.elapsed().as_secs_f64());
            Ok(Loaded { q, labels: data.labels().to_vec(), base_models: Some(models) })
        }
        (None, Some(q), Some(labels)) => {
            let q = ecoc_agg::ingest_q(q, code).with_context(|| format!("reading {}", q.display()))?;
            let labels =
                fio::read_labels(labels, code.classes()).with_context(|| format!("reading {}", labels.display()))?;
            Ok(Loaded { q, labels, base_models: None })
        }
        _ => bail!("supply either --data, or --q together with --labels"),
    }
}

fn codematrix(a: CodematrixArgs, exec: Exec) -> Result<ExitCode> {
    let code = a.scheme.code(exec, a.classes, a.seed)?;
    write_json_to(a.out.as_deref(), &code)?;
    Ok(ExitCode::SUCCESS)
}

fn train(a: TrainArgs, exec: Exec) -> Result<ExitCode> {
    check_lambda(a.lambda)?;
    let opts = solver_options(&a.solver, exec)?;
    let code = read_code(&a.code)?;
    let loaded = load_training(&a.input, &code, a.base_reg, exec)?;
    let start = Instant::now();
    let (mut model, report) = AggregationModel::fit(&code, &loaded.q, &loaded.labels, a.loss, a.lambda, &opts)?;
    eprintln!("aggregation training time: {:.3} s", start.elapsed().as_secs_f64());
    if let Some(models) = loaded.base_models {
        model = model.with_base_models(models);
    }
    fio::write_json(&a.out, &model).with_context(|| format!("writing {}", a.out.display()))?;

    let accuracy = metrics(&loaded.labels, &model.posteriors(&loaded.q, &opts)?)?.accuracy;
    println!("iterations: {}", report.iterations);
    println!("final residual: {:e}", report.final_residual);
    println!("final gap: {:e}", report.final_gap);
    println!("objective: {}", report.objective_trace.last().copied().unwrap_or(f64::NAN));
    println!("converged: {}", report.converged);
    println!("training accuracy: {accuracy:.4}");
    println!("weights: {}", format_vec(&model.weights));
    info!("termination: {:?}, dense fallbacks: {}", report.termination, report.direct_fallbacks);
    if !report.converged {
        eprintln!("warning: solver stopped without converging ({:?})", report.termination);
        return Ok(ExitCode::from(NOT_CONVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

fn read_model(path: &Path) -> Result<AggregationModel> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let model: AggregationModel =
        serde_json::from_reader(io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?;
    model.validate()?;
    Ok(model)
}

fn q_from_features(model: &AggregationModel, data: &Path, exec: Exec) -> Result<(ProbMatrix, Vec<usize>)> {
    let data = fio::read_dataset(data, model.k).with_context(|| format!("reading {}", data.display()))?;
    let Some(models) = &model.base_models else {
        bail!("model has no base classifiers; supply --q instead of --data");
    };
    Ok((score(exec, models, &data)?, data.labels().to_vec()))
}

fn predict(a: PredictArgs, exec: Exec) -> Result<ExitCode> {
    let model = read_model(&a.model)?;
    let q = match (&a.data, &a.q) {
        (Some(data), None) => q_from_features(&model, data, exec)?.0,
        (None, Some(q)) => ecoc_agg::ingest_q(q, &model.code_matrix).with_context(|| format!("reading {}", q.display()))?,
        _ => bail!("supply exactly one of --data or --q"),
    };
    let start = Instant::now();
    let post = posteriors_with(exec, &model.weights, &model.code_matrix, &q, model.loss)?;
    eprintln!("prediction time: {:.3} s", start.elapsed().as_secs_f64());
    fio::write_predictions(sink(a.out.as_deref())?, &post)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Evaluation {
    #[serde(flatten)]
    metrics: EvalMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    bound: Option<BoundReport>,
}

fn evaluate(a: EvaluateArgs, exec: Exec) -> Result<ExitCode> {
    let model = read_model(&a.model)?;
    let (q, labels) = match (&a.input.data, &a.input.q, &a.input.labels) {
        (Some(data), None, None) => q_from_features(&model, data, exec)?,
        (None, Some(q), Some(labels)) => (
            ecoc_agg::ingest_q(q, &model.code_matrix).with_context(|| format!("reading {}", q.display()))?,
            fio::read_labels(labels, model.k).with_context(|| format!("reading {}", labels.display()))?,
        ),
        _ => bail!("supply either --data, or --q together with --labels"),
    };
    let post = posteriors_with(exec, &model.weights, &model.code_matrix, &q, model.loss)?;
    let metrics = metrics(&labels, &post)?;
    let bound = match a.bound {
        None => None,
        Some(b) => {
            let b = b.unwrap_or_else(|| model.weights.iter().map(|w| w * w).sum::<f64>().sqrt());
            let phi = compute_phi(&model.code_matrix, &q, &labels, model.loss)?;
            Some(generalization_bound(&model.weights, &phi, b, a.epsilon)?)
        }
    };
    write_json_to(a.out.as_deref(), &Evaluation { metrics, bound })?;
    Ok(ExitCode::SUCCESS)
}

fn format_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

fn print_confusion(title: &str, confusion: &[Vec<usize>]) {
    println!("{title}");
    let k = confusion.len();
    let header: Vec<String> = (1..=k).map(|j| format!("{j:>6}")).collect();
    println!("  true\\pred{}", header.join(""));
    for (y, row) in confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        println!("  {:>9}{}", y + 1, cells.join(""));
    }
}

fn three_class(a: ThreeClassArgs, exec: Exec) -> Result<ExitCode> {
    check_lambda(a.lambda)?;
    let opts = SolverOptions { exec, ..SolverOptions::default() };
    if let Some(dir) = &a.out_dir {
        let f = gen_three_class(a.seed);
        std::fs::create_dir_all(dir)?;
        fio::write_q(File::create(dir.join("q.csv"))?, &f.q)?;
        fio::write_labels(File::create(dir.join("labels.csv"))?, &f.labels)?;
        fio::write_json(&dir.join("code.json"), &f.code)?;
    }
    let start = Instant::now();
    let r = run_three_class(a.seed, a.lambda, &opts)?;
    eprintln!("run time: {:.3} s", start.elapsed().as_secs_f64());
    println!("loss-based decoding training accuracy: {:.3}", r.loss_based.accuracy);
    print_confusion("loss-based decoding confusion matrix:", &r.loss_based.confusion);
    println!("convex aggregation training accuracy: {:.3}", r.convex.accuracy);
    print_confusion("convex aggregation confusion matrix:", &r.convex.confusion);
    println!("w* = {}", format_vec(&r.weights));
    println!("iterations: {}", r.iterations);
    if !r.converged {
        return Ok(ExitCode::from(NOT_CONVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

fn gauss(a: GaussArgs, exec: Exec) -> Result<ExitCode> {
    check_lambda(a.lambda)?;
    let opts = SolverOptions { exec, ..SolverOptions::default() };
    let settings = GaussSettings { lambda: a.lambda, base_reg: a.base_reg, ..GaussSettings::new(a.classes, a.encoding, a.repeats, a.seed) };
    if let Some(dir) = &a.out_dir {
        let (train, test) = gen_gauss(&SynthConfig::new(a.seed, a.classes))?;
        std::fs::create_dir_all(dir)?;
        fio::write_dataset(File::create(dir.join("train.csv"))?, &train)?;
        fio::write_dataset(File::create(dir.join("test.csv"))?, &test)?;
        fio::write_json(&dir.join("code.json"), &a.encoding.code(exec, a.classes, a.seed)?)?;
    }
    let start = Instant::now();
    let report = run_gauss(&settings, &opts)?;
    eprintln!("run time: {:.3} s", start.elapsed().as_secs_f64());
    println!("K = {}, encoding = {}, repeats = {}", report.k, report.encoding, report.repeats.len());
    println!("loss-based decoding test accuracy: {:.4} ± {:.4}", report.loss_based_mean, report.loss_based_std);
    println!("convex aggregation test accuracy: {:.4} ± {:.4}", report.convex_mean, report.convex_std);
    if report.repeats.iter().any(|r| !r.converged) {
        return Ok(ExitCode::from(NOT_CONVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

fn regpath(a: RegpathArgs, exec: Exec) -> Result<ExitCode> {
    let opts = solver_options(&a.solver, exec)?;
    let grid = a.grid.clone().unwrap_or_else(default_lambda_grid);
    if grid.is_empty() {
        bail!("--grid is empty");
    }
    for &l in &grid {
        check_lambda(l)?;
    }
    let code = read_code(&a.code)?;
    let loaded = load_training(&a.input, &code, a.base_reg, exec)?;
    let rows = run_regpath(&code, &loaded.q, &loaded.labels, a.loss, &grid, &opts)?;
    let mut out = sink(a.out.as_deref())?;
    let weights: Vec<String> = (1..=code.rows()).map(|j| format!("w_{j}")).collect();
    writeln!(out, "lambda,{},train_accuracy,converged,error", weights.join(","))?;
    for row in &rows {
        let w: Vec<String> = row.weights.iter().map(f64::to_string).collect();
        let error = row.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(out, "{},{},{},{},{}", row.lambda, w.join(","), row.train_accuracy, row.converged, error)?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
