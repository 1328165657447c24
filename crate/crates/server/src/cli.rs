use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use metarank::catalog::{load_catalog, load_schema, FeatureValue};
use metarank::evalkit::annotation::{read_annotations, AnnotationRecord};
use metarank::evalkit::bench::{render_csv, render_markdown, BATCH_GRID};
use metarank::evalkit::synthetic::{
    annotation_fixture, collateral_catalog, collateral_queries, format_fixture,
};
use metarank::evalkit::{ablation, annotator_bias, bench, table2_summary};
use metarank::rerank::prompt_map;
use metarank::{BackendKind, Backends, Pipeline};

use crate::artifacts::{
    build_from_catalog, build_from_files, read_artifacts, write_artifacts, Build, Sources,
};
use crate::config::ServiceConfig;
use crate::state::ServiceState;

#[derive(Debug, Parser)]
#[command(
    name = "metarank",
    version,
    about = "Two-stage metadata retrieval: build, serve, benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a schema and catalog.
    Ingest {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Compile prompts and build the embedding index into a directory.
    Build {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: EngineArgs,
    },
    /// Load a build directory and serve the HTTP API.
    Serve {
        #[arg(long, env = "METARANK_INDEX")]
        index: Option<PathBuf>,
        #[arg(long, env = "METARANK_HOST")]
        host: Option<String>,
        #[arg(long, env = "METARANK_PORT")]
        port: Option<u16>,
        #[command(flatten)]
        opts: EngineArgs,
    },
    /// Ask a running service to refresh, or rebuild a directory in place.
    Refresh {
        /// Base URL of a running service.
        #[arg(long, conflicts_with = "out")]
        url: Option<String>,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        opts: EngineArgs,
    },
    /// Latency sweep over cross-encoder batch sizes.
    Bench {
        #[arg(long)]
        index: PathBuf,
        /// One query per line.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = BATCH_GRID.to_vec())]
        batch_sizes: Vec<usize>,
        /// Row label (machine or configuration name).
        #[arg(long, default_value = "local")]
        label: String,
        /// Untimed passes over the queries before measuring.
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        markdown: Option<PathBuf>,
        #[command(flatten)]
        opts: EngineArgs,
    },
    /// Relevance evaluation reports.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Write a synthetic schema, catalog and query file.
    Synth {
        #[arg(long, default_value_t = 10_000)]
        docs: usize,
        #[arg(long, default_value_t = 31)]
        queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Bucket per-query annotator averages and check annotator bias.
    Table2 {
        /// JSONL annotations; defaults to the bundled 31-query set.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Compare bi-encoder-only top-N against the full pipeline.
    Ablation {
        /// Build directory; defaults to the synthetic format fixture.
        #[arg(long, requires = "queries")]
        index: Option<PathBuf>,
        /// Lines of `query<TAB>expected value`.
        #[arg(long, requires = "index")]
        queries: Option<PathBuf>,
        /// Feature whose value decides relevance.
        #[arg(long, default_value = "format")]
        feature: String,
        #[command(flatten)]
        opts: EngineArgs,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Stub,
    Remote,
}

/// Engine settings shared by several subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct EngineArgs {
    /// JSON config file (see README).
    #[arg(long, env = "METARANK_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, env = "METARANK_BACKEND")]
    pub backend: Option<BackendArg>,
    #[arg(long, env = "METARANK_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "METARANK_DIM")]
    pub dim: Option<usize>,
    /// Stage-one shortlist size.
    #[arg(long, env = "METARANK_K")]
    pub k: Option<usize>,
    /// Pairs per cross-encoder call.
    #[arg(long, env = "METARANK_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "METARANK_TOP_N")]
    pub top_n: Option<usize>,
    /// Prompt token budget.
    #[arg(long)]
    pub budget: Option<usize>,
}

impl EngineArgs {
    pub fn resolve(&self) -> Result<ServiceConfig> {
        let mut cfg = match &self.config {
            Some(p) => ServiceConfig::load(p)?,
            None => ServiceConfig::default(),
        };
        if let Some(b) = self.backend {
            cfg.backend.kind = match b {
                BackendArg::Stub => BackendKind::Stub,
                BackendArg::Remote => BackendKind::Remote,
            };
        }
        if let Some(e) = &self.endpoint {
            cfg.backend.endpoint = Some(e.clone());
        }
        if let Some(d) = self.dim {
            cfg.backend.dim = d;
        }
        if let Some(k) = self.k {
            cfg.rerank.k = k;
        }
        if let Some(b) = self.batch_size {
            cfg.rerank.batch_size = b;
        }
        if let Some(n) = self.top_n {
            cfg.rerank.top_n = n;
        }
        if let Some(b) = self.budget {
            cfg.token_budget = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { schema, catalog } => ingest(&schema, &catalog),
        Command::Build {
            schema,
            catalog,
            out,
            opts,
        } => build(&Sources { schema, catalog }, &out, &opts.resolve()?),
        Command::Serve {
            index,
            host,
            port,
            opts,
        } => {
            let mut cfg = opts.resolve()?;
            if let Some(h) = host {
                cfg.host = h;
            }
            if let Some(p) = port {
                cfg.port = p;
            }
            if index.is_some() {
                cfg.index_path = index;
            }
            serve(cfg)
        }
        Command::Refresh {
            url,
            schema,
            catalog,
            out,
            opts,
        } => refresh(url, schema, catalog, out, &opts.resolve()?),
        Command::Bench {
            index,
            queries,
            batch_sizes,
            label,
            warmup,
            csv,
            markdown,
            opts,
        } => run_bench(
            &index,
            &queries,
            &batch_sizes,
            &label,
            warmup,
            csv.as_deref(),
            markdown.as_deref(),
            &opts.resolve()?,
        ),
        Command::Eval { command } => match command {
            EvalCommand::Table2 { annotations } => table2(annotations.as_deref()),
            EvalCommand::Ablation {
                index,
                queries,
                feature,
                opts,
            } => run_ablation(
                index.as_deref(),
                queries.as_deref(),
                &feature,
                &opts.resolve()?,
            ),
        },
        Command::Synth {
            docs,
            queries,
            seed,
            out,
        } => synth(docs, queries, seed, &out),
    }
}

fn ingest(schema: &Path, catalog: &Path) -> Result<()> {
    let schema = load_schema(schema).with_context(|| format!("schema {}", schema.display()))?;
    let n_features = schema.len();
    let version = schema.version.clone();
    let catalog =
        load_catalog(schema, catalog).with_context(|| format!("catalog {}", catalog.display()))?;
    println!(
        "ok: {} documents, {n_features} features (schema {version})",
        catalog.len()
    );
    Ok(())
}

fn build(sources: &Sources, out: &Path, cfg: &ServiceConfig) -> Result<()> {
    let backends = Backends::from_config(&cfg.backend)?;
    let build = build_from_files(sources, backends.bi.as_ref(), cfg.token_budget)?;
    write_artifacts(&build, out)?;
    println!(
        "built {} documents (dim {}, {} truncated prompts) into {}",
        build.index.len(),
        build.index.dim(),
        build.manifest.truncated_prompts,
        out.display()
    );
    Ok(())
}

fn serve(cfg: ServiceConfig) -> Result<()> {
    let index = cfg
        .index_path
        .clone()
        .context("serve needs --index (or index_path in the config)")?;
    let backends = Backends::from_config(&cfg.backend)?;
    let built = read_artifacts(&index).with_context(|| format!("loading {}", index.display()))?;
    if built.index.dim() != cfg.backend.dim {
        bail!(
            "index dimension {} does not match backend dimension {}",
            built.index.dim(),
            cfg.backend.dim
        );
    }
    let state = Arc::new(ServiceState::new(backends, cfg.rerank, cfg.token_budget));
    let generation = state.install(built)?;

    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((cfg.host.as_str(), cfg.port)).await?;
        tracing::info!(addr = %listener.local_addr()?, generation, "serving");
        crate::api::serve(state, listener, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn refresh(
    url: Option<String>,
    schema: Option<PathBuf>,
    catalog: Option<PathBuf>,
    out: Option<PathBuf>,
    cfg: &ServiceConfig,
) -> Result<()> {
    if let Some(url) = url {
        let endpoint = format!("{}/v1/refresh", url.trim_end_matches('/'));
        let body = match (schema, catalog) {
            (Some(schema), Some(catalog)) => serde_json::to_value(Sources { schema, catalog })?,
            (None, None) => serde_json::Value::Null,
            _ => bail!("pass both --schema and --catalog, or neither"),
        };
        let resp = ureq::post(&endpoint)
            .send_json(&body)
            .with_context(|| format!("POST {endpoint}"))?;
        println!("refresh requested: {}", resp.status());
        return Ok(());
    }
    match (schema, catalog, out) {
        (Some(schema), Some(catalog), Some(out)) => build(&Sources { schema, catalog }, &out, cfg),
        _ => bail!("refresh needs --url, or --schema, --catalog and --out"),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(line);
        }
    }
    Ok(out)
}

fn pipeline_from(build: Build, cfg: &ServiceConfig) -> Result<Pipeline> {
    let backends = Backends::from_config(&cfg.backend)?;
    Ok(Pipeline::new(
        Arc::new(build.index),
        Arc::new(prompt_map(&build.records)),
        backends,
        cfg.rerank,
    )?)
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    index: &Path,
    queries: &Path,
    batch_sizes: &[usize],
    label: &str,
    warmup: usize,
    csv: Option<&Path>,
    markdown: Option<&Path>,
    cfg: &ServiceConfig,
) -> Result<()> {
    let queries = read_lines(queries)?;
    let pipeline = pipeline_from(read_artifacts(index)?, cfg)?;
    for _ in 0..warmup {
        for q in &queries {
            pipeline.run(q)?;
        }
    }
    let (report, _) = bench(label, &queries, batch_sizes, &pipeline)?;
    let md = render_markdown(std::slice::from_ref(&report));
    print!("{md}");
    if let Some(p) = markdown {
        std::fs::write(p, &md)?;
    }
    if let Some(p) = csv {
        std::fs::write(p, render_csv(std::slice::from_ref(&report)))?;
    }
    Ok(())
}

fn table2(path: Option<&Path>) -> Result<()> {
    let records: Vec<AnnotationRecord> = match path {
        Some(p) => {
            read_annotations(File::open(p).with_context(|| format!("opening {}", p.display()))?)?
        }
        None => annotation_fixture(),
    };
    let counts = table2_summary(&records);
    print!("{}", counts.render_markdown());
    let bias = annotator_bias(&records)?;
    let means: Vec<String> = bias.means.iter().map(|m| format!("{m:.2}")).collect();
    println!(
        "\nannotator means: {} (spread {:.2})",
        means.join(", "),
        bias.spread
    );
    Ok(())
}

fn run_ablation(
    index: Option<&Path>,
    queries: Option<&Path>,
    feature: &str,
    cfg: &ServiceConfig,
) -> Result<()> {
    let report = match (index, queries) {
        (Some(index), Some(queries)) => {
            let build = read_artifacts(index)?;
            let values: HashMap<String, FeatureValue> = build
                .catalog
                .documents
                .iter()
                .map(|d| (d.id.clone(), d.value(feature).clone()))
                .collect();
            let mut expected = HashMap::new();
            for line in read_lines(queries)? {
                let (q, v) = line
                    .split_once('\t')
                    .with_context(|| format!("expected `query<TAB>value`, got `{line}`"))?;
                expected.insert(q.to_string(), v.trim().to_string());
            }
            let texts: Vec<String> = expected.keys().cloned().collect();
            let pipeline = pipeline_from(build, cfg)?;
            ablation(
                &texts,
                |doc, q| match (values.get(doc), expected.get(q)) {
                    (Some(FeatureValue::Text(t)), Some(want)) => t == want,
                    (Some(FeatureValue::Number(n)), Some(want)) => {
                        want.parse::<f64>().ok() == Some(*n)
                    }
                    _ => false,
                },
                &pipeline,
            )?
        }
        _ => {
            let fx = format_fixture();
            let backends = Backends::from_config(&cfg.backend)?;
            let build = build_from_catalog(
                fx.catalog.clone(),
                backends.bi.as_ref(),
                cfg.token_budget,
                None,
            )?;
            let pipeline = pipeline_from(build, cfg)?;
            ablation(&fx.query_texts(), |d, q| fx.judge(d, q), &pipeline)?
        }
    };
    print!("{}", report.render_markdown());
    Ok(())
}

fn synth(docs: usize, queries: usize, seed: u64, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let catalog = collateral_catalog(docs, seed);
    std::fs::write(out.join("schema.json"), catalog.schema.to_json())?;
    catalog.save(out.join("catalog.jsonl"))?;
    let mut text = collateral_queries(queries, seed).join("\n");
    text.push('\n');
    std::fs::write(out.join("queries.txt"), text)?;
    println!(
        "wrote {docs} documents and {queries} queries to {}",
        out.display()
    );
    Ok(())
}
