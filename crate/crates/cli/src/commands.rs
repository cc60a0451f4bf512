use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::Serialize;

use clustervote::annotate::{self, AnnotateError, ClusterManifest, LabelBoard, SweepRow};
use clustervote::dataio::{self, FeatureMatrix, LabelMap, SampleManifest};
use clustervote::evaluation::{self, noisy_benchmark, standard_benchmark, BlobSpec, ComparisonTable, EvaluationReport};
use clustervote::pipeline::{self, mean_std, DimSweepRow, PipelineConfig, PipelineError};
use clustervote::{pca, Clustering, ConsensusResult};
use clustervote_server::{AppState, Workspace};

use crate::{Command, Failure, Inputs, Preset};

pub const FEATURES: &str = "features.fmat";
pub const MANIFEST: &str = "manifest.json";
pub const EMBEDDING: &str = "embedding.fmat";
pub const CONSENSUS: &str = "consensus.json";
pub const CLUSTERS: &str = "clusters.json";
pub const ORACLE_LABELS: &str = "oracle_labels.json";
pub const LABELS: &str = "labels.json";
pub const LABELED: &str = "labeled.json";

impl From<AnnotateError> for Failure {
    fn from(e: AnnotateError) -> Self {
        match e {
            AnnotateError::Data(d) => d.into(),
            other => Failure::new("annotate", other),
        }
    }
}

fn eval_failure(e: evaluation::EvalError) -> Failure {
    PipelineError::from(e).into()
}

fn clustering_file(method: clustervote::Method) -> String {
    format!("clustering.{}.json", method.as_str().to_ascii_lowercase())
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
}

impl Ctx<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output.join(name)
    }

    /// Flag, then config, then the artifact an earlier step leaves in the output dir.
    fn features(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.cfg.input.features.clone()).unwrap_or_else(|| self.out(FEATURES))
    }

    fn manifest_path(&self, flag: Option<PathBuf>) -> Option<PathBuf> {
        flag.or_else(|| self.cfg.input.manifest.clone()).or_else(|| Some(self.out(MANIFEST)).filter(|p| p.exists()))
    }

    /// The manifest checked against `ids`, or a bare one when none is known.
    fn manifest(&self, flag: Option<PathBuf>, ids: &[clustervote::SampleId]) -> Result<SampleManifest, Failure> {
        let manifest = match self.manifest_path(flag) {
            Some(p) => dataio::load_manifest(p)?,
            None => SampleManifest::bare(ids),
        };
        manifest.check_ids(ids)?;
        Ok(manifest)
    }

    fn load_inputs(&self, inputs: Inputs) -> Result<(FeatureMatrix, SampleManifest), Failure> {
        let x = dataio::load_feature_matrix(self.features(inputs.features))?;
        let manifest = self.manifest(inputs.manifest, x.ids())?;
        if manifest.true_labels().is_some() {
            self.cfg.check_k_over(&manifest)?;
        }
        Ok((x, manifest))
    }

    fn write<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let path = self.out(name);
        dataio::write_json(&path, value)?;
        Ok(path)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<(), Failure> {
        let path = self.out(name);
        std::fs::write(&path, text).map_err(|source| Failure::from(dataio::DataError::Io { path, source }))
    }

    fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.cfg.trials.max(1) as u64).map(|t| self.cfg.seed + t)
    }
}

pub fn dispatch(command: Command, cfg: &PipelineConfig) -> Result<(), Failure> {
    let ctx = Ctx { cfg };
    match command {
        Command::Blobs { preset, spec } => blobs(&ctx, preset, spec),
        Command::Reduce { inputs } => reduce(&ctx, inputs),
        Command::Cluster { embedding } => cluster(&ctx, embedding),
        Command::Vote { embedding, clusterings } => vote(&ctx, embedding, clusterings),
        Command::Evaluate { consensus, manifest, labels } => evaluate(&ctx, consensus, manifest, labels),
        Command::Compare { inputs } => compare(&ctx, inputs),
        Command::Sweep { inputs, counts, dim_list } => sweep(&ctx, inputs, &counts, &dim_list),
        Command::Annotate { consensus, embedding, manifest } => annotate_cmd(&ctx, consensus, embedding, manifest),
        Command::Serve { consensus, clusters, manifest, thumbs, ui, addr } => {
            serve(&ctx, consensus, clusters, manifest, thumbs, ui, addr)
        }
        Command::Finalize { consensus, manifest, labels } => finalize(&ctx, consensus, manifest, labels),
        Command::Run { inputs } => run(&ctx, inputs),
    }
}

fn blobs(ctx: &Ctx, preset: Preset, spec: Option<PathBuf>) -> Result<(), Failure> {
    let spec = match spec {
        Some(p) => dataio::read_json::<BlobSpec>(p)?,
        None => match preset {
            Preset::Standard => standard_benchmark(ctx.cfg.seed),
            Preset::Noisy => noisy_benchmark(ctx.cfg.seed),
        },
    };
    let (x, manifest) = evaluation::make_blobs(&spec).map_err(eval_failure)?;
    dataio::write_feature_matrix(&x, ctx.out(FEATURES))?;
    ctx.write(MANIFEST, &manifest)?;
    println!("wrote {} samples x {} features to {}", x.rows(), x.cols(), ctx.cfg.output.display());
    Ok(())
}

fn write_reduction(ctx: &Ctx, reduction: &pipeline::Reduction) -> Result<(), Failure> {
    dataio::write_feature_matrix(&reduction.embedding.matrix, ctx.out(EMBEDDING))?;
    if let Some((model, m)) = &reduction.pca {
        pca::save_model(model, &ctx.cfg.output, "pca")?;
        println!("pca: elbow kept {m} components");
    }
    Ok(())
}

fn reduce(ctx: &Ctx, inputs: Inputs) -> Result<(), Failure> {
    let (x, _) = ctx.load_inputs(inputs)?;
    let reduction = pipeline::reduce(&x, ctx.cfg, ctx.cfg.seed)?;
    write_reduction(ctx, &reduction)?;
    println!("embedding: {} x {}", reduction.embedding.rows(), reduction.embedding.cols());
    Ok(())
}

fn write_clusterings(ctx: &Ctx, clusterings: &[Clustering]) -> Result<(), Failure> {
    for c in clusterings {
        ctx.write(&clustering_file(c.method), c)?;
    }
    Ok(())
}

fn cluster(ctx: &Ctx, embedding: Option<PathBuf>) -> Result<(), Failure> {
    let e = dataio::load_feature_matrix(embedding.unwrap_or_else(|| ctx.out(EMBEDDING)))?;
    let clusterings = pipeline::cluster_all(&e, ctx.cfg, ctx.cfg.cluster.k_over, ctx.cfg.seed)?;
    write_clusterings(ctx, &clusterings)?;
    for c in &clusterings {
        println!("{:<6} k={} sizes={:?}", c.method.as_str(), c.k, c.sizes());
    }
    Ok(())
}

fn vote(ctx: &Ctx, embedding: Option<PathBuf>, files: Vec<PathBuf>) -> Result<(), Failure> {
    let e = dataio::load_feature_matrix(embedding.unwrap_or_else(|| ctx.out(EMBEDDING)))?;
    let files = if files.is_empty() {
        ctx.cfg.cluster.methods.iter().map(|&m| ctx.out(&clustering_file(m))).collect()
    } else {
        files
    };
    let mut clusterings: Vec<Clustering> = Vec::new();
    for f in &files {
        clusterings.push(dataio::read_json(f)?);
    }
    let mut cfg = ctx.cfg.clone();
    cfg.cluster.methods = clusterings.iter().map(|c| c.method).collect();
    cfg.validate()?;
    let consensus = pipeline::vote_all(&clusterings, &cfg, e.ids())?;
    ctx.write(CONSENSUS, &consensus)?;
    print_consensus(&consensus);
    Ok(())
}

fn print_consensus(c: &ConsensusResult) {
    println!(
        "vote: retained {}/{} in {} clusters, reject {:.1}%",
        c.retained_count(),
        c.len(),
        c.nonempty_clusters().len(),
        100.0 * c.reject_rate
    );
}

fn write_report(ctx: &Ctx, report: &EvaluationReport) -> Result<(), Failure> {
    ctx.write("report.json", report)?;
    ctx.write_text("report.txt", &report.render_text())?;
    ctx.write_text("confusion.csv", &report.confusion_csv())
}

fn evaluate(
    ctx: &Ctx,
    consensus: Option<PathBuf>,
    manifest: Option<PathBuf>,
    labels: Option<PathBuf>,
) -> Result<(), Failure> {
    let consensus: ConsensusResult = dataio::read_json(consensus.unwrap_or_else(|| ctx.out(CONSENSUS)))?;
    let truth = ctx.manifest(manifest, &consensus.ids)?;
    let map = match labels {
        Some(p) => dataio::load_label_map(p)?,
        None => {
            let map = evaluation::majority_label_map(&consensus, &truth).map_err(eval_failure)?;
            ctx.write(ORACLE_LABELS, &map)?;
            map
        }
    };
    let report = evaluation::evaluate(&consensus, &map, &truth).map_err(eval_failure)?;
    write_report(ctx, &report)?;
    print!("{}", report.render_text());
    Ok(())
}

fn pm(values: &[f64]) -> String {
    let (m, s) = mean_std(values);
    format!("{m:.1}±{s:.1}")
}

#[derive(Serialize)]
struct Aggregate {
    name: String,
    accuracy_mean: f64,
    accuracy_std: f64,
    reject_mean: f64,
    reject_std: f64,
}

fn aggregate(name: String, accuracy: &[f64], reject: &[f64]) -> Aggregate {
    let (accuracy_mean, accuracy_std) = mean_std(accuracy);
    let (reject_mean, reject_std) = mean_std(reject);
    Aggregate { name, accuracy_mean, accuracy_std, reject_mean, reject_std }
}

fn require_truth(manifest: &SampleManifest) -> Result<(), Failure> {
    if manifest.true_labels().is_none() {
        return Err(Failure::new("evaluate", "this command needs true labels in the manifest"));
    }
    Ok(())
}

fn compare(ctx: &Ctx, inputs: Inputs) -> Result<(), Failure> {
    let (x, truth) = ctx.load_inputs(inputs)?;
    require_truth(&truth)?;
    let mut tables: Vec<(u64, ComparisonTable)> = Vec::new();
    for seed in ctx.seeds() {
        let table = evaluation::compare_single_vs_vote(&x, &truth, ctx.cfg, seed)?;
        info!("compare seed {seed} done");
        tables.push((seed, table));
    }
    let names: Vec<String> = tables[0].1.rows.iter().map(|r| r.name.clone()).collect();
    println!("{:<10} {:>11} {:>11}", "Method", "Accuracy", "Reject%");
    let mut summary = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let acc: Vec<f64> = tables.iter().map(|(_, t)| t.rows[i].accuracy).collect();
        let rej: Vec<f64> = tables.iter().map(|(_, t)| t.rows[i].reject_rate).collect();
        println!("{:<10} {:>11} {:>11}", name, pm(&acc), pm(&rej));
        summary.push(aggregate(name.clone(), &acc, &rej));
    }
    let trials: Vec<_> = tables.iter().map(|(seed, t)| serde_json::json!({"seed": seed, "rows": t.rows})).collect();
    ctx.write("compare.json", &serde_json::json!({"trials": trials, "summary": summary}))?;
    Ok(())
}

fn sweep(ctx: &Ctx, inputs: Inputs, counts: &[usize], dims: &[usize]) -> Result<(), Failure> {
    let (x, truth) = ctx.load_inputs(inputs)?;
    let truth = Some(&truth).filter(|t| t.true_labels().is_some());
    let mut count_runs: Vec<(u64, Vec<SweepRow>)> = Vec::new();
    let mut dim_runs: Vec<(u64, Vec<DimSweepRow>)> = Vec::new();
    for seed in ctx.seeds() {
        let reduction = pipeline::reduce(&x, ctx.cfg, seed)?;
        count_runs.push((seed, annotate::sweep_clusters(&reduction.embedding.matrix, truth, counts, ctx.cfg, seed)?));
        if !dims.is_empty() {
            dim_runs.push((seed, pipeline::sweep_dims(&x, truth, dims, ctx.cfg, seed)?));
        }
    }
    let acc_text = |v: Vec<Option<f64>>| match v.into_iter().collect::<Option<Vec<f64>>>() {
        Some(a) => pm(&a),
        None => "-".into(),
    };
    println!("{:<9} {:>11} {:>11} {:>9}", "Clusters", "Accuracy", "Reject%", "Manifests");
    for (i, &k) in counts.iter().enumerate() {
        let acc = count_runs.iter().map(|(_, r)| r[i].accuracy).collect();
        let rej: Vec<f64> = count_runs.iter().map(|(_, r)| r[i].reject_rate).collect();
        println!("{:<9} {:>11} {:>11} {:>9}", k, acc_text(acc), pm(&rej), count_runs[0].1[i].manifests);
    }
    if !dims.is_empty() {
        println!("{:<9} {:>11} {:>11}", "UMAP dim", "Accuracy", "Reject%");
        for (i, &d) in dims.iter().enumerate() {
            let acc = dim_runs.iter().map(|(_, r)| r[i].accuracy).collect();
            let rej: Vec<f64> = dim_runs.iter().map(|(_, r)| r[i].reject_rate).collect();
            println!("{:<9} {:>11} {:>11}", d, acc_text(acc), pm(&rej));
        }
    }
    let counts_json: Vec<_> = count_runs.iter().map(|(s, r)| serde_json::json!({"seed": s, "rows": r})).collect();
    let dims_json: Vec<_> = dim_runs.iter().map(|(s, r)| serde_json::json!({"seed": s, "rows": r})).collect();
    ctx.write("sweep.json", &serde_json::json!({"counts": counts_json, "dims": dims_json}))?;
    Ok(())
}

fn annotate_cmd(
    ctx: &Ctx,
    consensus: Option<PathBuf>,
    embedding: Option<PathBuf>,
    manifest: Option<PathBuf>,
) -> Result<(), Failure> {
    let consensus: ConsensusResult = dataio::read_json(consensus.unwrap_or_else(|| ctx.out(CONSENSUS)))?;
    let e = dataio::load_feature_matrix(embedding.unwrap_or_else(|| ctx.out(EMBEDDING)))?;
    let manifest = ctx.manifest(manifest, &consensus.ids)?;
    let clusters = annotate::build_manifests(&consensus, &e, &manifest)?;
    ctx.write(CLUSTERS, &clusters)?;
    println!("{} review manifests", clusters.len());
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

#[allow(clippy::too_many_arguments)]
fn serve(
    ctx: &Ctx,
    consensus: Option<PathBuf>,
    clusters: Option<PathBuf>,
    manifest: Option<PathBuf>,
    thumbs: Option<PathBuf>,
    ui: Option<PathBuf>,
    addr: std::net::SocketAddr,
) -> Result<(), Failure> {
    let consensus_path = consensus.unwrap_or_else(|| ctx.out(CONSENSUS));
    let clusters_path = clusters.unwrap_or_else(|| ctx.out(CLUSTERS));
    let consensus: ConsensusResult = dataio::read_json(&consensus_path)?;
    let clusters: Vec<ClusterManifest> = dataio::read_json(&clusters_path)?;
    let manifest_path = ctx.manifest_path(manifest);
    let manifest = ctx.manifest(manifest_path.clone(), &consensus.ids)?;
    let thumbnail_root = thumbs
        .or_else(|| manifest_path.as_ref().and_then(|p| p.parent().map(Path::to_path_buf)))
        .unwrap_or_else(|| PathBuf::from("."));
    let (label_map_path, output_path) = (ctx.out(LABELS), ctx.out(LABELED));
    let inputs = [Some(&consensus_path), Some(&clusters_path), manifest_path.as_ref()];
    for written in [&label_map_path, &output_path] {
        if inputs.iter().flatten().any(|i| same_file(i, written)) {
            return Err(Failure::new("serve", format!("{} is an input artifact", written.display())));
        }
    }
    let state = AppState::new(Workspace { manifest, consensus, clusters, label_map_path, output_path, thumbnail_root })
        .map_err(|e| Failure::new("serve", e))?;
    let app = clustervote_server::router(Arc::new(state), ui.as_deref());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new("serve", e))?;
    runtime.block_on(clustervote_server::serve(addr, app)).map_err(|e| Failure::new("serve", e))
}

fn finalize(
    ctx: &Ctx,
    consensus: Option<PathBuf>,
    manifest: Option<PathBuf>,
    labels: Option<PathBuf>,
) -> Result<(), Failure> {
    let consensus: ConsensusResult = dataio::read_json(consensus.unwrap_or_else(|| ctx.out(CONSENSUS)))?;
    let manifest = ctx.manifest(manifest, &consensus.ids)?;
    let map: LabelMap = dataio::load_label_map(labels.unwrap_or_else(|| ctx.out(LABELS)))?;
    let board = LabelBoard::with_labels(&consensus, &map);
    let path = ctx.out(LABELED);
    let n = annotate::finalize(&manifest, &consensus, &board, &path)?;
    println!("labeled {n} samples, wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct TrialSummary {
    seed: u64,
    retained: usize,
    reject_rate: f64,
    clusters: usize,
    accuracy: Option<f64>,
}

fn run(ctx: &Ctx, inputs: Inputs) -> Result<(), Failure> {
    let (x, manifest) = ctx.load_inputs(inputs)?;
    let truth = Some(&manifest).filter(|t| t.true_labels().is_some());
    ctx.write("config.json", ctx.cfg)?;
    let mut trials = Vec::new();
    for (t, seed) in ctx.seeds().enumerate() {
        let out = pipeline::run_once(&x, truth, ctx.cfg, seed)?;
        if t == 0 {
            // artifacts come from the first seed; later trials only feed the summary
            write_reduction(ctx, &out.reduction)?;
            write_clusterings(ctx, &out.clusterings)?;
            ctx.write(CONSENSUS, &out.consensus)?;
            let clusters = annotate::build_manifests(&out.consensus, &out.reduction.embedding.matrix, &manifest)?;
            ctx.write(CLUSTERS, &clusters)?;
            if let Some((map, report)) = &out.oracle {
                ctx.write(ORACLE_LABELS, map)?;
                write_report(ctx, report)?;
            }
        }
        let row = TrialSummary {
            seed,
            retained: out.consensus.retained_count(),
            reject_rate: 100.0 * out.consensus.reject_rate,
            clusters: out.consensus.nonempty_clusters().len(),
            accuracy: out.oracle.as_ref().map(|(_, r)| r.overall_accuracy),
        };
        match row.accuracy {
            Some(a) => println!("trial {t} seed {seed}: accuracy {a:.2}%  reject {:.2}%", row.reject_rate),
            None => println!("trial {t} seed {seed}: retained {}  reject {:.2}%", row.retained, row.reject_rate),
        }
        trials.push(row);
    }
    let reject: Vec<f64> = trials.iter().map(|r| r.reject_rate).collect();
    let accuracy: Option<Vec<f64>> = trials.iter().map(|r| r.accuracy).collect();
    let (rm, rs) = mean_std(&reject);
    let mut summary = BTreeMap::new();
    summary.insert("reject_mean", rm);
    summary.insert("reject_std", rs);
    match &accuracy {
        Some(a) => {
            let (am, asd) = mean_std(a);
            summary.insert("accuracy_mean", am);
            summary.insert("accuracy_std", asd);
            println!("VOTE over {} trials: accuracy {am:.1} ± {asd:.1}  reject {rm:.1} ± {rs:.1}", trials.len());
        }
        None => println!("VOTE over {} trials: reject {rm:.1} ± {rs:.1}", trials.len()),
    }
    ctx.write("summary.json", &serde_json::json!({"trials": trials, "summary": summary}))?;
    Ok(())
}
