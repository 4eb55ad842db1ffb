//! `attrlabel`: ingest → plan → serve → export → agreement → report.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use attrlabel_core::agreement::{agreement_report, AgreementOptions, AnnotatorExports};
use attrlabel_core::allocation::{
    build_plan, compute_quota, filter_by_area, AllocationError, AllocationPlan, PlanRequest,
    DEFAULT_FRACTION,
};
use attrlabel_core::bias::{chart_data, distribution_report, render_svg, DEFAULT_UNDERREPRESENTED_PERCENT};
use attrlabel_core::ingest::{
    generate_fixture_dataset, ingest_json_dataset, ingest_kitti, FixtureSpec, IngestError, IngestManifest,
    JsonAdapterConfig, KittiOptions,
};
use attrlabel_core::model::{AgentKind, CanonicalImage};
use attrlabel_core::store::{self, StoreError};
use attrlabel_service::simulate::{run_simulation, SimulationConfig};
use attrlabel_service::{ExportManifest, GroupParams, Service, ServiceConfig, ServiceError, PLAN_FILE};

use config::{parse_fraction, required, RunConfig, SourceFormat};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AllocationError> for CliError {
    fn from(e: AllocationError) -> Self {
        match e {
            AllocationError::GoalExceedsEligible { .. } => CliError::Data(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Allocation(a) => a.into(),
            ServiceError::UnknownDataset(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "attrlabel", version, about = "Attribute annotation pipeline for driving datasets")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    run_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert source labels into canonical JSON-lines.
    Ingest(IngestArgs),
    /// Build the allocation plan and install the dataset for serving.
    Plan(PlanArgs),
    /// Run the annotation HTTP service.
    Serve(ServeArgs),
    /// Rebuild per-annotator exports from the journals.
    Export(ExportArgs),
    /// Inter-rater agreement tables from exports.
    Agreement(AgreementArgs),
    /// Attribute distribution report (CSV, JSON, SVG).
    Report(ReportArgs),
    /// Generate a deterministic synthetic dataset.
    Fixtures(FixturesArgs),
    /// Drive virtual annotators through the service end to end.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Dataset id.
    #[arg(long)]
    dataset: String,
    /// Adapter config (JSON sources) or KITTI options (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Source directory.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// KITTI image directory.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<SourceFormat>,
    /// Output directory for `<dataset>.jsonl` and `<dataset>.manifest.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    dataset: String,
    /// Final goal in agents.
    #[arg(long)]
    goal: Option<u64>,
    /// Number of annotators.
    #[arg(long)]
    annotators: Option<usize>,
    /// Comma-separated annotator ids; defaults to annotator_1..N.
    #[arg(long, value_delimiter = ',')]
    annotator_ids: Option<Vec<String>>,
    /// Inter-agreement share, decimal or a/b.
    #[arg(long)]
    fraction: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Canonical source; defaults to `<source_root>/<dataset>.jsonl`.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Data root to install the dataset into.
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    person_min_area: Option<f64>,
    #[arg(long)]
    vehicle_min_area: Option<f64>,
    /// Print the quota for the goal without building a plan.
    #[arg(long)]
    quota_only: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long)]
    group_alpha: Option<f64>,
    #[arg(long)]
    group_beta: Option<f64>,
    #[arg(long)]
    group_gamma: Option<f64>,
    /// Skip fsync after journal appends.
    #[arg(long)]
    no_sync: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Dataset id, or `all`.
    #[arg(long, default_value = "all")]
    dataset: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AgreementArgs {
    /// Export directory of one dataset, or a directory of them.
    #[arg(long)]
    export: PathBuf,
    /// Plan file; only with a single dataset. Defaults to the export's plan.json.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Comma-separated soft labels for the filtered pattern row.
    #[arg(long, value_delimiter = ',')]
    soft: Option<Vec<String>>,
    /// Weight of soft-only disagreements in the weighted PD.
    #[arg(long)]
    soft_weight: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    export: PathBuf,
    /// Comma-separated dataset ids, or `all`.
    #[arg(long, default_value = "all")]
    datasets: String,
    /// Shares below this percentage are marked underrepresented.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FixturesArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Full fixture spec as JSON; the flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    dataset_id: Option<String>,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<AgentKind>,
    #[arg(long)]
    images: Option<usize>,
    /// Exact agent total (overrides --images).
    #[arg(long)]
    agents: Option<u64>,
    #[arg(long)]
    sequence_length: Option<u32>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 5)]
    annotators: usize,
    /// Inter-agreement agents every annotator labels.
    #[arg(long, default_value_t = 200)]
    items: u64,
    /// Extra agents shared out exclusively; defaults to items / 4.
    #[arg(long)]
    exclusive_agents: Option<u64>,
    /// Per-attribute disagreement rate.
    #[arg(long, default_value_t = 0.1)]
    disagree: f64,
    /// Per-item rate of one annotator answering unknown.
    #[arg(long, default_value_t = 0.0)]
    soft_rate: f64,
    /// Per-item rate of mislabelled source boxes.
    #[arg(long, default_value_t = 0.0)]
    error_rate: f64,
    #[arg(long, value_parser = parse_kind, default_value = "person")]
    kind: AgentKind,
    #[arg(long)]
    sequence_length: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "sim")]
    dataset_id: String,
    /// Run annotators one after another; output bytes are then reproducible.
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    out: PathBuf,
}

fn parse_kind(s: &str) -> Result<AgentKind, String> {
    match s {
        "person" => Ok(AgentKind::Person),
        "vehicle" => Ok(AgentKind::Vehicle),
        _ => Err(format!("expected person or vehicle, got `{s}`")),
    }
}

fn print_json<T: Serialize>(v: &T) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("output serializes");
    // A closed pipe (`| head`) is not an error worth a panic.
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(store::write_atomic(path, text.as_bytes())?)
}

fn stem(id: &str) -> String {
    store::sanitize_file_stem(id)
}

fn ingest(cfg: &RunConfig, a: IngestArgs) -> Result<(), CliError> {
    let ds = cfg.dataset(&a.dataset);
    let format = a.format.or(ds.format).unwrap_or(SourceFormat::Json);
    let input = required(a.input.or(ds.input), "--in")?;
    let out = required(a.out.or(cfg.source_root.clone()), "--out")?;
    let config = a.config.or(ds.config);
    let (images, manifest): (Vec<CanonicalImage>, IngestManifest) = match format {
        SourceFormat::Json => {
            let path = required(config, "--config")?;
            let mut adapter: JsonAdapterConfig = store::read_json(&path).map_err(|e| CliError::Config(e.to_string()))?;
            adapter.dataset_id = a.dataset.clone();
            ingest_json_dataset(&adapter, &input)?
        }
        SourceFormat::Kitti => {
            let mut opts: KittiOptions = match config {
                Some(p) => store::read_json(&p).map_err(|e| CliError::Config(e.to_string()))?,
                None => KittiOptions::default(),
            };
            opts.dataset_id = a.dataset.clone();
            let images = a
                .images
                .or(ds.images)
                .unwrap_or_else(|| input.parent().unwrap_or(Path::new(".")).join("image_2"));
            ingest_kitti(&input, &images, &opts)?
        }
    };
    store::write_jsonl(&out.join(format!("{}.jsonl", stem(&a.dataset))), &images)?;
    store::write_json(&out.join(format!("{}.manifest.json", stem(&a.dataset))), &manifest)?;
    print_json(&manifest);
    Ok(())
}

#[derive(Serialize)]
struct PlanSummary {
    dataset_id: String,
    goal: u64,
    annotators: Vec<String>,
    fraction: String,
    quota: u64,
    eligible_agents: u64,
    inter_images: usize,
    inter_agents: u64,
    exclusive_images: usize,
    installed: Option<PathBuf>,
}

fn plan(cfg: &RunConfig, a: PlanArgs) -> Result<(), CliError> {
    let ds = cfg.dataset(&a.dataset);
    let goal = required(a.goal.or(ds.goal), "--goal")?;
    let ids = a.annotator_ids.clone().or(cfg.annotator_ids.clone());
    let n = a.annotators.or(ids.as_ref().map(Vec::len)).or(cfg.annotators).unwrap_or(5);
    let fraction = match a.fraction.as_ref().or(cfg.fraction.as_ref()) {
        Some(f) => parse_fraction(f)?,
        None => DEFAULT_FRACTION,
    };
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    if a.quota_only {
        let quota = compute_quota(goal, n, fraction)?;
        print_json(&json!({
            "dataset_id": a.dataset, "goal": goal, "annotators": n, "fraction": fraction.to_string(),
            "quota": quota,
        }));
        return Ok(());
    }
    let mut filter = cfg.thresholds.unwrap_or_default();
    if let Some(v) = a.person_min_area {
        filter.person_min_area = v;
    }
    if let Some(v) = a.vehicle_min_area {
        filter.vehicle_min_area = v;
    }
    let source = match a.source {
        Some(p) => p,
        None => required(cfg.source_root.clone(), "--source")?.join(format!("{}.jsonl", stem(&a.dataset))),
    };
    let images = store::read_images(&source)?;
    let index = filter_by_area(&a.dataset, &images, &filter);
    let mut request = PlanRequest::numbered(goal, n, fraction, seed);
    if let Some(ids) = ids {
        if ids.len() != n {
            return Err(CliError::Config(format!("--annotators {n} but {} ids given", ids.len())));
        }
        request.annotators = ids;
    }
    let plan = build_plan(&index, filter, &request)?;
    let data_root = a.data_root.or(cfg.data_root.clone());
    let installed = match &data_root {
        Some(root) => Some(attrlabel_service::install_dataset(root, &plan, &images)?),
        None => None,
    };
    print_json(&PlanSummary {
        dataset_id: plan.dataset_id.clone(),
        goal,
        annotators: plan.annotators.clone(),
        fraction: fraction.to_string(),
        quota: plan.quota,
        eligible_agents: index.total_agents(),
        inter_images: plan.inter_pool.len(),
        inter_agents: plan.inter_pool_agents(),
        exclusive_images: plan.exclusive_pool.len(),
        installed,
    });
    Ok(())
}

fn group_params(cfg: &RunConfig, a: &ServeArgs) -> GroupParams {
    let mut g = cfg.group_params.unwrap_or_default();
    if let Some(v) = a.group_alpha {
        g.alpha = v;
    }
    if let Some(v) = a.group_beta {
        g.beta = v;
    }
    if let Some(v) = a.group_gamma {
        g.gamma = v;
    }
    g
}

fn serve(cfg: &RunConfig, a: ServeArgs) -> Result<(), CliError> {
    let data_root = required(a.data_root.clone().or(cfg.data_root.clone()), "--data-root")?;
    let port = a.port.or(cfg.port).unwrap_or(8080);
    let svc = Service::open(ServiceConfig {
        data_root,
        group_params: group_params(cfg, &a),
        sync_journal: !a.no_sync && cfg.sync_journal.unwrap_or(true),
    })?;
    let addr: std::net::SocketAddr = format!("{}:{port}", a.host)
        .parse()
        .map_err(|e| CliError::Config(format!("bad address: {e}")))?;
    eprintln!("serving {:?} on http://{addr}", svc.dataset_ids());
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
    rt.block_on(attrlabel_service::http::serve(Arc::new(svc), addr))
        .map_err(|e| CliError::Data(e.to_string()))
}

fn export(cfg: &RunConfig, a: ExportArgs) -> Result<(), CliError> {
    let root = required(a.data_root.or(cfg.data_root.clone()), "--data-root")?;
    let out = required(a.out.or(cfg.export_root.clone()), "--out")?;
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
        .map_err(|e| CliError::Data(format!("{}: {e}", root.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(PLAN_FILE).is_file())
        .collect();
    dirs.sort();
    let mut manifests = Vec::new();
    for dir in dirs {
        let plan: AllocationPlan = store::read_json(&dir.join(PLAN_FILE))?;
        if a.dataset != "all" && plan.dataset_id != a.dataset {
            continue;
        }
        let params = cfg.group_params.unwrap_or_default();
        let bundle = attrlabel_service::replay_export_dir(&dir, params)?;
        let m = attrlabel_service::write_bundle(&bundle, &out)?;
        store::write_json(&out.join(stem(&plan.dataset_id)).join(PLAN_FILE), &plan)?;
        manifests.push(m);
    }
    if manifests.is_empty() {
        return Err(CliError::Config(format!("no dataset `{}` under {}", a.dataset, root.display())));
    }
    print_json(&manifests);
    Ok(())
}

/// One exported dataset: its plan and per-annotator images.
struct Exported {
    plan: AllocationPlan,
    exports: AnnotatorExports,
}

fn load_export_dir(dir: &Path, plan: Option<&Path>) -> Result<Exported, CliError> {
    let manifest: ExportManifest = store::read_json(&dir.join("manifest.json"))?;
    let mut exports = AnnotatorExports::new();
    for (annotator, f) in &manifest.files {
        exports.insert(annotator.clone(), store::read_images(&dir.join(&f.file))?);
    }
    let plan: AllocationPlan = store::read_json(&plan.map(Path::to_path_buf).unwrap_or_else(|| dir.join(PLAN_FILE)))?;
    if plan.dataset_id != manifest.dataset_id {
        return Err(CliError::Data(format!(
            "plan is for `{}` but the export is `{}`",
            plan.dataset_id, manifest.dataset_id
        )));
    }
    Ok(Exported { plan, exports })
}

fn load_exports(root: &Path, plan: Option<&Path>) -> Result<Vec<Exported>, CliError> {
    if root.join("manifest.json").is_file() {
        return Ok(vec![load_export_dir(root, plan)?]);
    }
    if plan.is_some() {
        return Err(CliError::Config("--plan needs a single-dataset export directory".into()));
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| CliError::Data(format!("{}: {e}", root.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::Data(format!("no exports under {}", root.display())));
    }
    dirs.iter().map(|d| load_export_dir(d, None)).collect()
}

fn agreement(cfg: &RunConfig, a: AgreementArgs) -> Result<(), CliError> {
    let data = load_exports(&a.export, a.plan.as_deref())?;
    let mut options = AgreementOptions::default();
    if let Some(soft) = a.soft.or(cfg.soft.clone()) {
        options = options.with_soft(&soft);
    }
    options.soft_weight = a.soft_weight.or(cfg.soft_weight);
    let inputs: Vec<(&AllocationPlan, &AnnotatorExports)> = data.iter().map(|d| (&d.plan, &d.exports)).collect();
    let report = agreement_report(&inputs, &options);
    store::write_json(&a.out.join("agreement.json"), &report)?;
    write_text(&a.out.join("pd.csv"), &report.pd_csv())?;
    write_text(&a.out.join("fleiss.csv"), &report.fleiss_csv())?;
    write_text(&a.out.join("patterns.csv"), &report.patterns_csv())?;
    print_json(&report.pooled.iter().map(|p| json!({
        "attribute": p.attribute, "items": p.items, "pd": p.pd,
        "kappa": p.fleiss.as_ref().and_then(|f| f.kappa),
    })).collect::<Vec<_>>());
    Ok(())
}

fn report(cfg: &RunConfig, a: ReportArgs) -> Result<(), CliError> {
    let data = load_exports(&a.export, None)?;
    let wanted: Option<Vec<&str>> = (a.datasets != "all").then(|| a.datasets.split(',').map(str::trim).collect());
    let mut datasets: BTreeMap<String, AnnotatorExports> = BTreeMap::new();
    for d in data {
        if wanted.as_ref().is_none_or(|w| w.contains(&d.plan.dataset_id.as_str())) {
            datasets.insert(d.plan.dataset_id.clone(), d.exports);
        }
    }
    if let Some(w) = &wanted {
        if let Some(missing) = w.iter().find(|id| !datasets.contains_key(**id)) {
            return Err(CliError::Config(format!("dataset `{missing}` not found in {}", a.export.display())));
        }
    }
    let threshold = a
        .threshold
        .or(cfg.underrepresented_percent)
        .unwrap_or(DEFAULT_UNDERREPRESENTED_PERCENT);
    let r = distribution_report(&datasets, threshold);
    store::write_json(&a.out.join("distribution.json"), &r)?;
    write_text(&a.out.join("distribution.csv"), &r.to_csv())?;
    let charts = chart_data(&r);
    store::write_json(&a.out.join("charts.json"), &charts)?;
    for bars in &charts.stacked {
        write_text(&a.out.join(format!("{}.svg", bars.attribute.as_str())), &render_svg(bars))?;
    }
    print_json(&json!({ "slices": r.slices.len(), "threshold_percent": threshold }));
    Ok(())
}

fn fixtures(cfg: &RunConfig, a: FixturesArgs) -> Result<(), CliError> {
    let mut spec: FixtureSpec = match &a.spec {
        Some(p) => store::read_json(p).map_err(|e| CliError::Config(e.to_string()))?,
        None => FixtureSpec::default(),
    };
    if let Some(s) = a.seed.or(cfg.seed) {
        spec.seed = s;
    }
    if let Some(id) = a.dataset_id {
        spec.dataset_id = id;
    }
    if let Some(k) = a.kind {
        spec.kind = k;
    }
    if let Some(n) = a.images {
        spec.images = n;
    }
    if a.agents.is_some() {
        spec.agents = a.agents;
    }
    if a.sequence_length.is_some() {
        spec.sequence_length = a.sequence_length;
    }
    let (images, manifest) = generate_fixture_dataset(&spec);
    store::write_jsonl(&a.out.join(format!("{}.jsonl", stem(&spec.dataset_id))), &images)?;
    store::write_json(&a.out.join(format!("{}.manifest.json", stem(&spec.dataset_id))), &manifest)?;
    print_json(&manifest);
    Ok(())
}

fn simulate(cfg: &RunConfig, a: SimulateArgs) -> Result<(), CliError> {
    for (name, v) in [("disagree", a.disagree), ("soft-rate", a.soft_rate), ("error-rate", a.error_rate)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(CliError::Config(format!("--{name} must lie within 0..=1, got {v}")));
        }
    }
    if a.annotators < 2 {
        return Err(CliError::Config(format!("--annotators must be at least 2, got {}", a.annotators)));
    }
    if a.items == 0 {
        return Err(CliError::Config("--items must be positive".into()));
    }
    let sim = SimulationConfig {
        dataset_id: a.dataset_id,
        annotators: a.annotators,
        items: a.items,
        exclusive_agents: a.exclusive_agents,
        kind: a.kind,
        disagree: a.disagree,
        soft_rate: a.soft_rate,
        error_rate: a.error_rate,
        sequence_length: a.sequence_length,
        seed: a.seed.or(cfg.seed).unwrap_or(0),
        concurrent: !a.sequential,
        sync_journal: cfg.sync_journal.unwrap_or(false),
    };
    let r = run_simulation(&sim, &a.out)?;
    std::fs::copy(r.data_dir.join(PLAN_FILE), r.export_dir.join(PLAN_FILE))
        .map_err(|e| CliError::Data(format!("{}: {e}", r.export_dir.display())))?;
    store::write_json(&a.out.join("simulation.json"), &r)?;
    print_json(&r);
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = RunConfig::load(cli.run_config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(&cfg, a),
        Command::Plan(a) => plan(&cfg, a),
        Command::Serve(a) => serve(&cfg, a),
        Command::Export(a) => export(&cfg, a),
        Command::Agreement(a) => agreement(&cfg, a),
        Command::Report(a) => report(&cfg, a),
        Command::Fixtures(a) => fixtures(&cfg, a),
        Command::Simulate(a) => simulate(&cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "config", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(e.code())
        }
    }
}
