//! Subcommand definitions and their implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rehab_core::acquisition::{compare_with_rfe, holdout_subjects, train_agent, RfeComparison, TrainingCurve};
use rehab_core::analysis::{build_payload, PayloadInputs};
use rehab_core::corpus::Corpus;
use rehab_core::kinematics::{registry, write_registry_csv};
use rehab_core::prediction::{
    loso, train, write_component_csv, write_folds_csv, write_table_csv, Algorithm, EvalReport,
    LabeledDataset,
};
use rehab_core::synthdata::{generate_dataset, write_dataset};
use rehab_core::{Component, Exercise};
use serde::Serialize;

use crate::api::{router, AppState};
use crate::settings::{task_name, tasks, Settings};

#[derive(Debug, Parser)]
#[command(name = "rehab", version, about = "Rehabilitation exercise assessment toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic session corpus.
    Synth(Common),
    /// Write per-task feature tables and the feature registries as CSV.
    Extract(Common),
    /// Select hyperparameters by leave-one-subject-out and fit final models.
    TrainPm(TrainPmArgs),
    /// Train one feature-acquisition agent per task.
    TrainAgents(AgentArgs),
    /// Leave-one-subject-out evaluation of the classifiers.
    Loso(LosoArgs),
    /// Compare each agent against RFE at the same feature budget.
    RfeCompare(AgentArgs),
    /// Build the analysis payload of one motion.
    Analyze(AnalyzeArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Convert stored training curves to CSV.
    Curves(CurvesArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Random seed; overrides the config file.
    #[arg(long, env = "REHAB_SEED")]
    pub seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; defaults to the data directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Data directory holding `sessions/`, `models/` and `agents/`.
    #[arg(long, env = "REHAB_DATA_DIR", default_value = "data")]
    pub data: PathBuf,
}

impl Common {
    fn out_dir(&self) -> &Path {
        self.out.as_deref().unwrap_or(&self.data)
    }

    fn settings(&self) -> anyhow::Result<Settings> {
        Ok(Settings::load(self.config.as_deref())?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainPmArgs {
    #[command(flatten)]
    pub common: Common,
    /// Classifier; the config file's choice when absent.
    #[arg(long)]
    pub algo: Option<Algorithm>,
    /// Restrict to tasks such as `E1_rom`; repeatable.
    #[arg(long = "task")]
    pub tasks: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AgentArgs {
    #[command(flatten)]
    pub common: Common,
    /// Restrict to tasks such as `E1_rom`; repeatable.
    #[arg(long = "task")]
    pub tasks: Vec<String>,
    /// Training episodes; overrides the config file.
    #[arg(long)]
    pub episodes: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct LosoArgs {
    #[command(flatten)]
    pub common: Common,
    /// `cart`, `logistic`, `linear-svm`, `mlp` or `all`.
    #[arg(long, default_value = "all")]
    pub algo: String,
    /// Restrict to tasks such as `E1_rom`; repeatable.
    #[arg(long = "task")]
    pub tasks: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub motion: String,
    #[arg(long)]
    pub component: Component,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, env = "REHAB_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

#[derive(Debug, Clone, Args)]
pub struct CurvesArgs {
    #[command(flatten)]
    pub common: Common,
    /// Moving-average window; the stored window when absent.
    #[arg(long)]
    pub window: Option<usize>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(c) => synth(&c),
        Command::Extract(c) => extract(&c),
        Command::TrainPm(a) => train_pm(&a),
        Command::TrainAgents(a) => train_agents(&a),
        Command::Loso(a) => run_loso(&a),
        Command::RfeCompare(a) => rfe_compare(&a),
        Command::Analyze(a) => analyze(&a),
        Command::Serve(a) => serve(&a),
        Command::Curves(a) => curves(&a),
    }
}

/// Parses `E1_rom` style task names.
pub fn parse_task(name: &str) -> anyhow::Result<(Exercise, Component)> {
    let (e, c) = name
        .split_once('_')
        .with_context(|| format!("task `{name}` is not of the form E1_rom"))?;
    Ok((e.parse()?, c.parse()?))
}

fn selected_tasks(names: &[String]) -> anyhow::Result<Vec<(Exercise, Component)>> {
    if names.is_empty() {
        return Ok(tasks());
    }
    names.iter().map(|n| parse_task(n)).collect()
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        create_dir(parent)?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load_corpus(data: &Path) -> anyhow::Result<Corpus> {
    let corpus = Corpus::load(data).with_context(|| format!("loading sessions from {}", data.display()))?;
    if corpus.clips.is_empty() {
        bail!("no motion clips found under {}", data.display());
    }
    Ok(corpus)
}

fn task_dataset(
    corpus: &Corpus,
    settings: &Settings,
    exercise: Exercise,
    component: Component,
) -> anyhow::Result<LabeledDataset> {
    corpus
        .dataset(exercise, component, settings.prediction.threshold())
        .with_context(|| format!("building the {} dataset", task_name(exercise, component)))
}

fn synth(common: &Common) -> anyhow::Result<()> {
    let settings = common.settings()?;
    let mut config = settings.synth.clone();
    config.seed = settings.seed(common.seed);
    let dataset = generate_dataset(&config)?;
    let out = common.out_dir();
    let paths = write_dataset(&dataset, out)?;
    tracing::info!(files = paths.len(), dir = %out.display(), "wrote synthetic corpus");
    Ok(())
}

fn extract(common: &Common) -> anyhow::Result<()> {
    let settings = common.settings()?;
    let corpus = load_corpus(&common.data)?;
    let dir = common.out_dir().join("features");
    for component in Component::ALL {
        let mut w = create(&dir.join(format!("registry_{component}.csv")))?;
        write_registry_csv(&mut w, &registry(Exercise::E1, component))?;
        w.flush()?;
    }
    for (exercise, component) in tasks() {
        let dataset = task_dataset(&corpus, &settings, exercise, component)?;
        let mut w = csv::Writer::from_writer(create(&dir.join(format!("{}.csv", task_name(exercise, component))))?);
        let mut header = vec!["motion_id", "subject", "group", "side", "score", "label"];
        header.extend(dataset.feature_ids.iter().map(String::as_str));
        w.write_record(&header)?;
        for row in &dataset.rows {
            let mut record = vec![
                row.motion_id.clone(),
                row.subject.clone(),
                row.group.to_string(),
                row.side.to_string(),
                row.score.to_string(),
                row.label.to_string(),
            ];
            record.extend(row.x.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
    }
    tracing::info!(dir = %dir.display(), "wrote feature tables");
    Ok(())
}

#[derive(Debug, Serialize)]
struct Selection {
    task: String,
    algorithm: Algorithm,
    hyperparameters: String,
    mean_train_f1: f64,
    mean_f1: f64,
}

fn train_pm(args: &TrainPmArgs) -> anyhow::Result<()> {
    let settings = args.common.settings()?;
    let corpus = load_corpus(&args.common.data)?;
    let algorithm = args.algo.unwrap_or(settings.prediction.algorithm);
    let grid = settings.prediction.grid(algorithm);
    let dir = args.common.out_dir().join("models");
    let mut selections = Vec::new();
    for (exercise, component) in selected_tasks(&args.tasks)? {
        let name = task_name(exercise, component);
        let dataset = task_dataset(&corpus, &settings, exercise, component)?;
        let report = loso(&dataset, algorithm, &grid)?;
        let model = train(algorithm, &dataset, &report.chosen)?;
        write_json(&dir.join(format!("{name}.json")), &model)?;
        let best = report
            .grid
            .iter()
            .find(|g| g.hyperparameters == report.chosen)
            .context("chosen grid point missing from the report")?;
        tracing::info!(task = %name, hyperparameters = %report.chosen, loso_f1 = report.mean_f1, "trained model");
        selections.push(Selection {
            task: name,
            algorithm,
            hyperparameters: report.chosen.to_string(),
            mean_train_f1: best.mean_train_f1,
            mean_f1: report.mean_f1,
        });
    }
    let mut w = csv::Writer::from_writer(create(&dir.join("selection.csv"))?);
    for s in &selections {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

fn write_curve(dir: &Path, name: &str, curve: &TrainingCurve) -> anyhow::Result<()> {
    write_json(&dir.join(format!("{name}.json")), curve)?;
    let mut w = create(&dir.join(format!("{name}.csv")))?;
    curve.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn train_agents(args: &AgentArgs) -> anyhow::Result<()> {
    let settings = args.common.settings()?;
    let seed = settings.seed(args.common.seed);
    let corpus = load_corpus(&args.common.data)?;
    let out = args.common.out_dir();
    for (exercise, component) in selected_tasks(&args.tasks)? {
        let name = task_name(exercise, component);
        let dataset = task_dataset(&corpus, &settings, exercise, component)?;
        let mut config = settings.agent.config(exercise, component, seed);
        if let Some(episodes) = args.episodes {
            config.episodes = episodes;
        }
        let (agent, curve) = train_agent(&dataset, &config)?;
        write_json(&out.join("agents").join(format!("{name}.json")), &agent)?;
        write_curve(&out.join("curves"), &name, &curve)?;
        tracing::info!(
            task = %name,
            avg_return = agent.training.final_avg_return,
            avg_features = agent.training.final_avg_features,
            "trained agent"
        );
    }
    Ok(())
}

fn run_loso(args: &LosoArgs) -> anyhow::Result<()> {
    let settings = args.common.settings()?;
    let corpus = load_corpus(&args.common.data)?;
    let algorithms: Vec<Algorithm> = if args.algo == "all" {
        Algorithm::ALL.to_vec()
    } else {
        vec![args.algo.parse()?]
    };
    let mut reports: Vec<EvalReport> = Vec::new();
    for (exercise, component) in selected_tasks(&args.tasks)? {
        let dataset = task_dataset(&corpus, &settings, exercise, component)?;
        for &algorithm in &algorithms {
            let report = loso(&dataset, algorithm, &settings.prediction.grid(algorithm))?;
            tracing::info!(
                task = %task_name(exercise, component),
                algorithm = %algorithm,
                f1 = report.mean_f1,
                "evaluated"
            );
            reports.push(report);
        }
    }
    let dir = args.common.out_dir().join("loso");
    write_json(&dir.join("report.json"), &reports)?;
    let mut w = create(&dir.join("table.csv"))?;
    write_table_csv(&reports, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("components.csv"))?;
    write_component_csv(&reports, &mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("folds.csv"))?;
    write_folds_csv(&reports, &mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ComparisonRow {
    task: String,
    holdout: String,
    train_rows: usize,
    test_rows: usize,
    agent_f1: f64,
    agent_mean_queried: f64,
    k: usize,
    rfe_f1: f64,
}

fn rfe_compare(args: &AgentArgs) -> anyhow::Result<()> {
    let settings = args.common.settings()?;
    let seed = settings.seed(args.common.seed);
    let corpus = load_corpus(&args.common.data)?;
    let dir = args.common.out_dir().join("rfe");
    let mut results: Vec<RfeComparison> = Vec::new();
    for (exercise, component) in selected_tasks(&args.tasks)? {
        let name = task_name(exercise, component);
        let dataset = task_dataset(&corpus, &settings, exercise, component)?;
        let mut config = settings.agent.config(exercise, component, seed);
        if let Some(episodes) = args.episodes {
            config.episodes = episodes;
        }
        let result = compare_with_rfe(&dataset, &config, &holdout_subjects(&dataset))?;
        tracing::info!(task = %name, agent_f1 = result.agent_f1, rfe_f1 = result.rfe_f1, k = result.k, "compared");
        write_curve(&dir.join("curves"), &name, &result.curve)?;
        results.push(result);
    }
    write_json(&dir.join("comparison.json"), &results)?;
    let mut w = csv::Writer::from_writer(create(&dir.join("comparison.csv"))?);
    for r in &results {
        w.serialize(ComparisonRow {
            task: task_name(r.exercise, r.component),
            holdout: r.holdout.join(" "),
            train_rows: r.train_rows,
            test_rows: r.test_rows,
            agent_f1: r.agent_f1,
            agent_mean_queried: r.agent_mean_queried,
            k: r.k,
            rfe_f1: r.rfe_f1,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> anyhow::Result<()> {
    let settings = args.common.settings()?;
    let data = &args.common.data;
    let corpus = load_corpus(data)?;
    let clip = corpus
        .clip(&args.motion)
        .with_context(|| format!("unknown motion `{}`", args.motion))?;
    let name = task_name(clip.exercise, args.component);
    let dataset = task_dataset(&corpus, &settings, clip.exercise, args.component)?;
    let training = dataset.filter(|r| r.subject != clip.subject.id);
    let unaffected = corpus.unaffected_clips(&clip.subject.id, clip.exercise);
    let model = read_optional(&data.join("models").join(format!("{name}.json")))?;
    let agent = read_optional(&data.join("agents").join(format!("{name}.json")))?;
    let payload = build_payload(&PayloadInputs {
        clip,
        component: args.component,
        unaffected: &unaffected,
        training: &training,
        model: model.as_ref(),
        agent: agent.as_ref(),
    })?;
    match &args.common.out {
        Some(dir) => write_json(
            &dir.join("analysis").join(format!("{}_{}.json", clip.id, args.component)),
            &payload,
        )?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            serde_json::to_writer_pretty(&mut lock, &payload)?;
            lock.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn read_optional<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Some(value))
}

fn serve(args: &ServeArgs) -> anyhow::Result<()> {
    let settings = args.common.settings()?;
    let state = AppState::load(
        &args.common.data,
        &args.common.out_dir().join("logs"),
        settings.prediction.threshold(),
    )?;
    let app = router(Arc::new(state));
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "listening");
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn curves(args: &CurvesArgs) -> anyhow::Result<()> {
    let src = args.common.data.join("curves");
    let dst = args.common.out_dir().join("curves");
    let mut converted = 0;
    for (exercise, component) in tasks() {
        let name = task_name(exercise, component);
        let Some(mut curve) = read_optional::<TrainingCurve>(&src.join(format!("{name}.json")))? else {
            continue;
        };
        if let Some(window) = args.window {
            curve.window = window;
        }
        let mut w = create(&dst.join(format!("{name}.csv")))?;
        curve.write_csv(&mut w)?;
        w.flush()?;
        converted += 1;
    }
    if converted == 0 {
        bail!("no training curves under {}", src.display());
    }
    tracing::info!(converted, dir = %dst.display(), "wrote curve tables");
    Ok(())
}
