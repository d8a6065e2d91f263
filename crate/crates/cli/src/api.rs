//! Request and response documents of the `/v1` API and the functions that
//! produce them. The CLI calls the same functions, so both surfaces emit
//! identical bytes for identical inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use stemsim_core::eval::CellScore;
use stemsim_core::fit::{FitMethod, PresetProvenance, PresetRegistry};
use stemsim_core::retrieval::{EntryMetadata, QueryHit, StemScore};
use stemsim_core::store::{load_packs, load_triplets};
use stemsim_core::{
    aggregate, cross_validate, evaluate_standard, labeled_samples, query, DatasetTag, EmbeddingStore, Error,
    EvalConfig, FitConfig, FitReport, Index, QueryReference, QuerySpec, Source, StemConfig, StemKind, TiePolicy,
    TripletRecord, WeightVector,
};

use crate::error::{AppError, AppResult};
use crate::settings::Settings;

/// Embeddings and listening-test datasets for one `(encoder, source)`.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dataset: DatasetTag,
    pub store: EmbeddingStore,
    /// Triplet manifests keyed by file stem.
    pub datasets: BTreeMap<String, Vec<TripletRecord>>,
}

impl Workspace {
    pub fn load(settings: &Settings) -> AppResult<Self> {
        if settings.packs.is_empty() {
            return Err(AppError::Settings(format!(
                "no embedding packs given and none found under {}",
                settings.data_dir.display()
            )));
        }
        let store = load_packs(&settings.packs)?;
        let encoder_id = match &settings.encoder {
            Some(e) => e.clone(),
            None => infer_encoder(&store, settings.source)?,
        };
        let mut datasets = BTreeMap::new();
        for path in &settings.triplets {
            let name = dataset_name(path);
            if datasets.insert(name.clone(), load_triplets(path)?).is_some() {
                return Err(AppError::Settings(format!("two triplet manifests are named {name:?}")));
            }
        }
        Ok(Workspace {
            dataset: DatasetTag::new(encoder_id, settings.source),
            store,
            datasets,
        })
    }

    /// The named dataset, or the only one when no name is given.
    pub fn triplets(&self, name: Option<&str>) -> AppResult<(&str, &[TripletRecord])> {
        match name {
            Some(n) => self
                .datasets
                .get_key_value(n)
                .map(|(k, v)| (k.as_str(), v.as_slice()))
                .ok_or_else(|| AppError::UnknownDataset(n.to_string())),
            None if self.datasets.len() == 1 => {
                let (k, v) = self.datasets.iter().next().unwrap();
                Ok((k.as_str(), v.as_slice()))
            }
            None if self.datasets.is_empty() => Err(AppError::Settings("no triplet manifests loaded".into())),
            None => Err(AppError::Malformed(format!(
                "several datasets loaded ({}); name one",
                self.datasets.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("triplets").to_string()
}

fn infer_encoder(store: &EmbeddingStore, source: Source) -> AppResult<String> {
    let encoders: BTreeSet<&str> = store.namespaces().into_iter().filter(|(_, s)| *s == source).map(|(e, _)| e).collect();
    match encoders.len() {
        1 => Ok(encoders.into_iter().next().unwrap().to_string()),
        0 => Err(AppError::Settings(format!("packs hold no {source} embeddings"))),
        _ => Err(AppError::Settings(format!(
            "packs hold several encoders for {source} ({}); pass --encoder",
            encoders.into_iter().collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Everything the HTTP service reads. Immutable once built.
#[derive(Debug, Clone)]
pub struct ServiceState {
    pub settings: Settings,
    pub workspace: Workspace,
    pub index: Index,
    /// Segments left out of the index for lacking a channel.
    pub skipped: Vec<String>,
    pub registry: PresetRegistry,
}

impl ServiceState {
    pub fn load(settings: Settings) -> AppResult<Self> {
        let workspace = Workspace::load(&settings)?;
        let (index, skipped) = Index::from_store(
            &workspace.store,
            &settings.config,
            &workspace.dataset.encoder_id,
            workspace.dataset.source,
        )?;
        let registry = match &settings.presets {
            Some(dir) => PresetRegistry::load_dir(dir)?,
            None => PresetRegistry::new(),
        };
        Ok(ServiceState {
            settings,
            workspace,
            index,
            skipped,
            registry,
        })
    }
}

/// Where the numbers in a response came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataProvenance {
    pub encoder_id: String,
    pub source: Source,
    pub stem_config: String,
    pub channels: Vec<StemKind>,
    pub dimension: usize,
    pub library_size: usize,
}

impl DataProvenance {
    pub fn of(state: &ServiceState) -> Self {
        DataProvenance {
            encoder_id: state.workspace.dataset.encoder_id.clone(),
            source: state.workspace.dataset.source,
            stem_config: state.index.config().name().to_string(),
            channels: state.index.config().channels().to_vec(),
            dimension: state.index.dimension(),
            library_size: state.index.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub datasets: Vec<String>,
    pub presets: usize,
    pub skipped_segments: usize,
    pub provenance: DataProvenance,
}

pub fn health(state: &ServiceState) -> Health {
    Health {
        status: "ok".into(),
        datasets: state.workspace.datasets.keys().cloned().collect(),
        presets: state.registry.len(),
        skipped_segments: state.skipped.len(),
        provenance: DataProvenance::of(state),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StemWeight {
    pub stem: StemKind,
    pub weight: f64,
}

fn stem_weights(w: &WeightVector) -> Vec<StemWeight> {
    w.iter().map(|(stem, weight)| StemWeight { stem, weight }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetBody {
    pub name: String,
    pub builtin: bool,
    pub weights: Vec<StemWeight>,
    pub provenance: Option<PresetProvenance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetList {
    pub presets: Vec<PresetBody>,
    pub provenance: DataProvenance,
}

pub fn presets(state: &ServiceState) -> PresetList {
    PresetList {
        presets: stemsim_core::retrieval::weight_presets(&state.index, &state.registry)
            .into_iter()
            .map(|p| PresetBody {
                builtin: p.provenance.is_none(),
                weights: stem_weights(&p.weights),
                name: p.name,
                provenance: p.provenance,
            })
            .collect(),
        provenance: DataProvenance::of(state),
    }
}

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 1000;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct LibraryParams {
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryItem {
    pub segment_id: String,
    #[serde(flatten)]
    pub metadata: EntryMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryPage {
    pub offset: usize,
    pub limit: usize,
    pub total: usize,
    pub entries: Vec<LibraryItem>,
    pub provenance: DataProvenance,
}

pub fn library(state: &ServiceState, params: &LibraryParams) -> AppResult<LibraryPage> {
    let offset = params.offset.unwrap_or(0);
    let limit = params.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(AppError::Malformed(format!("limit must be in 1..={MAX_PAGE}")));
    }
    Ok(LibraryPage {
        offset,
        limit,
        total: state.index.len(),
        entries: state
            .index
            .entries(offset, limit)
            .map(|(id, m)| LibraryItem {
                segment_id: id.to_string(),
                metadata: m.clone(),
            })
            .collect(),
        provenance: DataProvenance::of(state),
    })
}

/// `{"segment_id": "..."}` or `{"embeddings": {"drums": [...], ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceBody {
    SegmentId(String),
    Embeddings(BTreeMap<StemKind, Vec<f32>>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub reference: Option<ReferenceBody>,
    /// Per-stem weights; stems left out weigh zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
    /// Use a named preset instead of `weights`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_filter: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub rank: usize,
    pub segment_id: String,
    pub title: String,
    pub track: String,
    pub span: String,
    pub score: f64,
    pub breakdown: Vec<StemScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryProvenance {
    #[serde(flatten)]
    pub data: DataProvenance,
    pub reference: String,
    pub preset: Option<String>,
    pub weights: Vec<StemWeight>,
    pub top_k: usize,
    pub channel_filter: Option<Vec<StemKind>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub results: Vec<RankedResult>,
    pub provenance: QueryProvenance,
}

fn parse_stem(name: &str) -> AppResult<StemKind> {
    Ok(name.parse::<StemKind>()?)
}

fn request_weights(state: &ServiceState, req: &QueryRequest) -> AppResult<WeightVector> {
    let config = state.index.config();
    match (&req.weights, &req.preset) {
        (Some(_), Some(_)) => Err(AppError::Malformed("give weights or preset, not both".into())),
        (None, None) => Err(AppError::Malformed("weights or preset is required".into())),
        (None, Some(name)) => Ok(state.registry.resolve(name, config)?.weights),
        (Some(map), None) => {
            let mut values = vec![0.0; config.k()];
            for (name, &w) in map {
                let stem = parse_stem(name)?;
                let at = config
                    .position(stem)
                    .ok_or_else(|| Error::InvalidQuery(format!("{stem} is not a channel of {config}")))?;
                if !w.is_finite() {
                    return Err(Error::InvalidQuery(format!("weight for {stem} is not finite")).into());
                }
                values[at] = w;
            }
            Ok(WeightVector::new(config.clone(), values)?)
        }
    }
}

pub fn run_query(state: &ServiceState, req: &QueryRequest) -> AppResult<QueryResponse> {
    let weights = request_weights(state, req)?;
    let reference = match &req.reference {
        Some(ReferenceBody::SegmentId(id)) => QueryReference::Segment(id.clone()),
        Some(ReferenceBody::Embeddings(map)) => QueryReference::Inline(map.clone()),
        None => return Err(AppError::Malformed("reference is required".into())),
    };
    let channel_filter = req
        .channel_filter
        .as_ref()
        .map(|names| names.iter().map(|n| parse_stem(n)).collect::<AppResult<BTreeSet<_>>>())
        .transpose()?;
    let top_k = req.top_k.unwrap_or(state.settings.top_k);
    let spec = QuerySpec {
        reference,
        weights,
        top_k,
        channel_filter,
    };
    let hits = query(&state.index, &spec)?;
    Ok(QueryResponse {
        results: hits.into_iter().enumerate().map(|(i, h)| ranked(state, i, h)).collect(),
        provenance: QueryProvenance {
            data: DataProvenance::of(state),
            reference: match &spec.reference {
                QueryReference::Segment(id) => id.clone(),
                QueryReference::Inline(_) => "inline".into(),
            },
            preset: req.preset.clone(),
            weights: stem_weights(&spec.weights),
            top_k,
            channel_filter: spec.channel_filter.map(|f| f.into_iter().collect()),
        },
    })
}

fn ranked(state: &ServiceState, i: usize, hit: QueryHit) -> RankedResult {
    let meta = state.index.metadata(&hit.segment_id).cloned().unwrap_or_default();
    RankedResult {
        rank: i + 1,
        segment_id: hit.segment_id,
        title: meta.title,
        track: meta.track,
        span: meta.span,
        score: hit.score,
        breakdown: hit.breakdown,
    }
}

/// Overrides for a fit; unset fields take the service settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub dataset: Option<String>,
    pub config: Option<String>,
    pub method: Option<FitMethod>,
    pub lambda: Option<f64>,
    pub cutoff: Option<f64>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub train_fraction: Option<f64>,
    pub tie_policy: Option<TiePolicy>,
}

impl FitRequest {
    fn fit_config(&self, base: FitConfig) -> FitConfig {
        let method = self.method.unwrap_or(base.method);
        match method {
            FitMethod::Ols => FitConfig::ols(),
            FitMethod::Ridge => FitConfig::ridge(self.lambda.unwrap_or(if base.method == FitMethod::Ridge {
                base.lambda
            } else {
                stemsim_core::fit::DEFAULT_RIDGE_LAMBDA
            })),
        }
    }

    fn eval_config(&self, base: EvalConfig) -> EvalConfig {
        EvalConfig {
            cutoff: self.cutoff.unwrap_or(base.cutoff),
            iterations: self.iterations.unwrap_or(base.iterations),
            train_fraction: self.train_fraction.unwrap_or(base.train_fraction),
            seed: self.seed.unwrap_or(base.seed),
            tie_policy: self.tie_policy.unwrap_or(base.tie_policy),
            parallel: base.parallel,
        }
    }
}

/// Cross-validated fit of the weighted model on the full-mix triplets of a
/// dataset.
pub fn run_fit(workspace: &Workspace, settings: &Settings, req: &FitRequest) -> AppResult<FitReport> {
    let config = match &req.config {
        Some(name) => StemConfig::builtin(name)?,
        None => settings.config.clone(),
    };
    let fit_cfg = req.fit_config(settings.fit);
    let eval_cfg = req.eval_config(settings.eval);
    let (_, triplets) = workspace.triplets(req.dataset.as_deref())?;
    let mix: Vec<TripletRecord> = triplets.iter().filter(|t| t.instrument_class == StemKind::Mix).cloned().collect();
    let aggregated = aggregate(&mix, eval_cfg.cutoff)?;
    let samples = labeled_samples(
        &aggregated,
        &workspace.store,
        &config,
        &workspace.dataset.encoder_id,
        workspace.dataset.source,
    )?;
    Ok(cross_validate(&samples, &fit_cfg, &eval_cfg, &workspace.dataset)?)
}

pub fn run_eval_standard(workspace: &Workspace, settings: &Settings, dataset: Option<&str>) -> AppResult<Vec<CellScore>> {
    let (_, triplets) = workspace.triplets(dataset)?;
    Ok(evaluate_standard(
        triplets,
        settings.eval.cutoff,
        &workspace.store,
        &workspace.dataset,
        settings.eval.tie_policy,
    )?)
}
