//! Command-line definitions and the subcommand runners.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use stemsim_core::eval::{cells_to_csv, splits_to_csv};
use stemsim_core::fit::{write_preset, Estimate, PresetProvenance, WeightPreset};
use stemsim_core::store::{load_packs, load_triplets, write_pack, write_triplets};
use stemsim_core::synth::SynthTruth;
use stemsim_core::{generate, EmbeddingRecord, Source, SynthConfig, WeightVector};

use crate::api::{self, FitRequest, QueryRequest, ReferenceBody, ServiceState, StemWeight, Workspace};
use crate::error::{AppError, AppResult};
use crate::http::{self, SharedState};
use crate::settings::{preset_path, DataArgs, Settings, PACK_EXTENSION, TRIPLETS_EXTENSION};

#[derive(Debug, Parser)]
#[command(name = "stemsim", version, about = "Instrument-aware music similarity")]
pub struct Cli {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate packs and triplet manifests and summarize them.
    Ingest,
    /// Generate a synthetic pack and manifest with known weights.
    Synth(SynthArgs),
    /// Cross-validate the weighted model and print the report.
    Fit(FitArgs),
    /// Score the global cosine model per instrument and configuration (CSV).
    EvalStandard(DatasetArgs),
    /// Rank the library against a reference segment.
    Query(QueryArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory. Defaults to the data root.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base name of the written files.
    #[arg(long, default_value = "synthetic")]
    pub name: String,
    #[arg(long, default_value_t = 500)]
    pub n_triplets: usize,
    #[arg(long, default_value_t = stemsim_core::store::DEFAULT_DIMENSION)]
    pub dimension: usize,
    /// Probability of flipping each majority label.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 10)]
    pub panel_size: u32,
    /// Ground-truth weights in channel order. Defaults to uniform.
    #[arg(long, value_delimiter = ',')]
    pub true_weights: Option<Vec<f64>>,
    /// Redraw triplets whose features sit closer than this cosine to the decision boundary (default 0.1).
    #[arg(long)]
    pub min_margin_cos: Option<f64>,
    #[arg(long, default_value = "synthetic")]
    pub encoder_id: String,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Triplet dataset name (manifest file stem). Optional with one manifest.
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Directory for report.json, splits.csv and a fitted preset.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub preset_name: Option<String>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Segment id of the reference.
    #[arg(long)]
    pub reference: String,
    /// `stem=weight` pairs, e.g. `drums=1,mix=0.5`. Unlisted stems weigh 0.
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<String>>,
    /// A preset name instead of explicit weights.
    #[arg(long, conflicts_with = "weights")]
    pub preset: Option<String>,
    /// Only score these stems.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Bind address.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

/// Runs a subcommand and returns what it prints on stdout.
pub fn run(cli: Cli) -> AppResult<String> {
    let settings = Settings::resolve(&cli.data)?;
    match cli.command {
        Command::Ingest => ingest(&settings),
        Command::Synth(args) => synth(&settings, args),
        Command::Fit(args) => fit(&settings, args),
        Command::EvalStandard(args) => {
            let workspace = Workspace::load(&settings)?;
            Ok(cells_to_csv(&api::run_eval_standard(&workspace, &settings, args.dataset.as_deref())?)?)
        }
        Command::Query(args) => {
            let state = ServiceState::load(settings)?;
            let req = query_request(args)?;
            http::query_body(&api::run_query(&state, &req)?).map(|s| s + "\n")
        }
        Command::Serve(args) => {
            let addr = std::net::SocketAddr::new(args.host, settings.port);
            let state = SharedState::new(ServiceState::load(settings)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(http::serve(state, addr))?;
            Ok(String::new())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> AppResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| AppError::Core(e.into()))
}

#[derive(Debug, Serialize)]
struct NamespaceSummary {
    encoder_id: String,
    source: Source,
    segments: usize,
    records: usize,
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    name: String,
    path: PathBuf,
    triplets: usize,
    /// Triplets whose instrument-class stems are present for every segment,
    /// under the selected encoder and source.
    resolvable: Option<usize>,
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    packs: Vec<PathBuf>,
    records: usize,
    dimension: usize,
    namespaces: Vec<NamespaceSummary>,
    datasets: Vec<DatasetSummary>,
}

fn ingest(settings: &Settings) -> AppResult<String> {
    if settings.packs.is_empty() {
        return Err(AppError::Settings("no embedding packs to ingest".into()));
    }
    let store = load_packs(&settings.packs)?;
    let namespaces = store
        .namespaces()
        .into_iter()
        .map(|(enc, src)| NamespaceSummary {
            encoder_id: enc.to_string(),
            source: src,
            segments: store.segments(enc, src).len(),
            records: store.iter().filter(|r| r.encoder_id() == enc && r.source() == src).count(),
        })
        .collect::<Vec<_>>();
    let encoder = settings.encoder.clone().or_else(|| {
        let mut matching = namespaces.iter().filter(|n| n.source == settings.source);
        match (matching.next(), matching.next()) {
            (Some(n), None) => Some(n.encoder_id.clone()),
            _ => None,
        }
    });
    let mut datasets = Vec::new();
    for path in &settings.triplets {
        let triplets = load_triplets(path)?;
        let resolvable = encoder.as_ref().map(|enc| {
            triplets
                .iter()
                .filter(|t| {
                    [&t.x_segment, &t.a_segment, &t.b_segment]
                        .iter()
                        .all(|s| store.lookup(s, t.instrument_class, enc, settings.source).is_some())
                })
                .count()
        });
        datasets.push(DatasetSummary {
            name: path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
            path: path.clone(),
            triplets: triplets.len(),
            resolvable,
        });
    }
    to_json(&IngestSummary {
        packs: settings.packs.clone(),
        records: store.len(),
        dimension: store.dimension(),
        namespaces,
        datasets,
    })
}

#[derive(Debug, Serialize)]
struct TruthFile<'a> {
    seed: u64,
    stem_config: &'a str,
    true_weights: Vec<StemWeight>,
    label_noise: f64,
    min_margin_cos: f64,
    triplets: &'a [SynthTruth],
}

#[derive(Debug, Serialize)]
struct SynthSummary {
    pack: PathBuf,
    triplets: PathBuf,
    truth: PathBuf,
    records: usize,
    n_triplets: usize,
    flipped: usize,
    checksum: u32,
}

fn synth(settings: &Settings, args: SynthArgs) -> AppResult<String> {
    let config = settings.config.clone();
    let weights = match args.true_weights {
        Some(values) => WeightVector::new(config, values)?,
        None => WeightVector::uniform(config),
    };
    let mut cfg = SynthConfig::new(weights, settings.eval.seed);
    cfg.n_triplets = args.n_triplets;
    cfg.dimension = args.dimension;
    cfg.label_noise = args.noise;
    cfg.panel_size = args.panel_size;
    cfg.encoder_id = args.encoder_id;
    cfg.source = settings.source;
    if let Some(m) = args.min_margin_cos {
        cfg.min_margin_cos = m;
    }
    let ds = generate(&cfg)?;

    let out = args.out.unwrap_or_else(|| settings.data_dir.clone());
    fs::create_dir_all(&out)?;
    let pack = out.join(format!("{}.{PACK_EXTENSION}", args.name));
    let manifest = out.join(format!("{}.{TRIPLETS_EXTENSION}", args.name));
    let truth_path = out.join(format!("{}-truth.json", args.name));
    let records: Vec<EmbeddingRecord> = ds.store.iter().cloned().collect();
    let summary = write_pack(&records, cfg.dimension, &pack)?;
    write_triplets(&ds.triplets, &manifest)?;
    let truth = TruthFile {
        seed: cfg.seed,
        stem_config: cfg.config.name(),
        true_weights: cfg
            .true_weights
            .iter()
            .map(|(stem, weight)| StemWeight { stem, weight })
            .collect(),
        label_noise: cfg.label_noise,
        min_margin_cos: cfg.min_margin_cos,
        triplets: &ds.truth,
    };
    fs::write(&truth_path, to_json(&truth)?)?;
    to_json(&SynthSummary {
        pack,
        triplets: manifest,
        truth: truth_path,
        records: records.len(),
        n_triplets: ds.triplets.len(),
        flipped: ds.truth.iter().filter(|t| t.flipped).count(),
        checksum: summary.checksum,
    })
}

fn fit(settings: &Settings, args: FitArgs) -> AppResult<String> {
    let workspace = Workspace::load(settings)?;
    let req = FitRequest {
        dataset: args.dataset.dataset,
        ..Default::default()
    };
    let report = api::run_fit(&workspace, settings, &req)?;
    let text = report.to_json()? + "\n";
    if let Some(out) = args.out {
        fs::create_dir_all(&out)?;
        fs::write(out.join("report.json"), &text)?;
        fs::write(out.join("splits.csv"), splits_to_csv(&report)?)?;
        let name = args
            .preset_name
            .unwrap_or_else(|| format!("fitted-{}", report.provenance.stem_config));
        let preset = WeightPreset {
            name: name.clone(),
            weights: report.weights_mean.clone(),
            provenance: Some(PresetProvenance {
                encoder_id: report.provenance.encoder_id.clone(),
                source: report.provenance.source,
                method: report.provenance.method,
                lambda: report.provenance.lambda,
                estimate: Some(Estimate::CvMean),
            }),
        };
        write_preset(&preset, preset_path(&out, &name))?;
    }
    Ok(text)
}

/// Builds the request the `/v1/query` endpoint would receive.
pub fn query_request(args: QueryArgs) -> AppResult<QueryRequest> {
    let weights = args
        .weights
        .map(|pairs| {
            pairs
                .iter()
                .map(|pair| {
                    let (stem, w) = pair
                        .split_once('=')
                        .ok_or_else(|| AppError::Malformed(format!("weight {pair:?} is not stem=value")))?;
                    let w: f64 = w
                        .trim()
                        .parse()
                        .map_err(|_| AppError::Malformed(format!("weight {pair:?} is not a number")))?;
                    Ok((stem.trim().to_string(), w))
                })
                .collect::<AppResult<BTreeMap<_, _>>>()
        })
        .transpose()?;
    Ok(QueryRequest {
        reference: Some(ReferenceBody::SegmentId(args.reference)),
        weights,
        preset: args.preset,
        top_k: None,
        channel_filter: args.channels,
    })
}
