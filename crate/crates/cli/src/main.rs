mod backends;
mod corpus;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use backends::BackendArgs;
use clap::{Parser, Subcommand};
use cornerrag_core::alignment::{alignment_metrics, train, TrainConfig};
use cornerrag_core::augmentation::{decode_rgb, encode_png};
use cornerrag_core::embedding::{load_precomputed, project, EmbeddingVector, ProjectionHead};
use cornerrag_core::eval::{paired_t_test, run_comparison, Arm, ComparisonConfig, Table2Fixture, METRICS};
use cornerrag_core::pipeline::Pipeline;
use cornerrag_core::retrieval::{self, QueryConfig, DEFAULT_ALPHA};
use cornerrag_core::store::{CaseSource, NewCase, StorePair, CROSSMODAL_FILE};
use cornerrag_server::{AppState, ServerConfig};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "cornerrag", version, about = "Retrieval-augmented corner-case memory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Add cases to a database, from a precomputed batch or a corpus directory.
    Ingest {
        #[arg(long)]
        db: PathBuf,
        /// CMB1 batch file with embeddings already computed.
        #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
        precomputed: Option<PathBuf>,
        /// Directory with `cases.jsonl` and images; embedded on the fly.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Alignment head applied to image segments before storing.
        #[arg(long)]
        head: Option<PathBuf>,
        #[command(flatten)]
        backends: BackendArgs,
    },
    /// Rank stored cases against an image, one JSON line per result.
    Query {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, required_unless_present = "precomputed_vector")]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// JSON array holding an already projected query vector.
        #[arg(long)]
        precomputed_vector: Option<PathBuf>,
        #[arg(long)]
        head: Option<PathBuf>,
        #[command(flatten)]
        backends: BackendArgs,
    },
    /// Fit an alignment head on precomputed image/text pairs.
    Train {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long, default_value_t = 0.07)]
        tau: f64,
        #[arg(long, default_value_t = 0.2)]
        margin: f64,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long)]
        semi_hard: bool,
        #[arg(long, default_value_t = 0.5)]
        switch_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare generation with and without retrieval over a corpus.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Comma-separated: with, without, ablation.
        #[arg(long, default_value = "with,without", value_delimiter = ',')]
        arms: Vec<String>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        head: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        backends: BackendArgs,
    },
    /// Paired t-tests over a with/without metric grid.
    Stats {
        #[arg(long)]
        fixture: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha_default: f64,
        #[arg(long)]
        head: Option<PathBuf>,
        #[command(flatten)]
        backends: BackendArgs,
    },
    /// Run deterministic stand-ins for the encoder and generator services.
    Mock {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8090)]
        port: u16,
        #[arg(long, default_value_t = cornerrag_core::embedding::DEFAULT_DIM)]
        dim: usize,
    },
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Ingest {
            db,
            precomputed,
            corpus,
            head,
            backends,
        } => ingest(&db, precomputed.as_deref(), corpus.as_deref(), head.as_deref(), &backends),
        Command::Query {
            db,
            image,
            alpha,
            k,
            precomputed_vector,
            head,
            backends,
        } => query(&db, image.as_deref(), alpha, k, precomputed_vector.as_deref(), head.as_deref(), &backends),
        Command::Train {
            pairs,
            tau,
            margin,
            lr,
            epochs,
            batch_size,
            semi_hard,
            switch_fraction,
            seed,
            out,
        } => {
            let cfg = TrainConfig {
                tau,
                margin,
                eta: lr,
                epochs,
                batch_size,
                use_semi_hard: semi_hard,
                semi_hard_switch_fraction: switch_fraction,
                seed,
            };
            train_head(&pairs, &cfg, &out)
        }
        Command::Eval {
            corpus,
            db,
            alpha,
            arms,
            report,
            head,
            seed,
            backends,
        } => eval(&corpus, &db, alpha, &arms, &report, head.as_deref(), seed, &backends),
        Command::Stats { fixture, json } => stats(&fixture, json),
        Command::Serve {
            db,
            host,
            port,
            alpha_default,
            head,
            backends,
        } => serve(db, &host, port, alpha_default, head.as_deref(), &backends),
        Command::Mock { host, port, dim } => runtime()?.block_on(async {
            let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
            eprintln!("mock services on http://{}", listener.local_addr()?);
            cornerrag_server::mock::serve(listener, dim).await?;
            Ok(())
        }),
    }
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn load_head(path: Option<&Path>) -> Result<Option<ProjectionHead>> {
    path.map(|p| ProjectionHead::load(p).with_context(|| format!("loading head {}", p.display())))
        .transpose()
}

fn load_store(db: &Path) -> Result<StorePair> {
    StorePair::load(db).with_context(|| format!("loading database {}", db.display()))
}

fn ingest(
    db: &Path,
    precomputed: Option<&Path>,
    corpus: Option<&Path>,
    head: Option<&Path>,
    backends: &BackendArgs,
) -> Result<()> {
    let head = load_head(head)?;
    let batch = precomputed.map(load_precomputed).transpose()?;
    let dims = match &batch {
        Some(b) => b.dims,
        None => backends.dims()?,
    };
    let mut store = if db.join(CROSSMODAL_FILE).exists() {
        load_store(db)?
    } else {
        StorePair::new(dims)
    };
    let before = store.len();

    if let Some(batch) = batch {
        for rec in batch.records {
            let mut cm = rec.embedding;
            if let Some(h) = &head {
                cm.image_segment = project(&cm.image_segment, h)?;
            }
            let case = NewCase::new(rec.record.image_ref, rec.record.caption, rec.record.source);
            store.insert(case, &cm, &rec.text_vector)?;
        }
    } else if let Some(dir) = corpus {
        let gateway = backends.gateway()?;
        for entry in corpus::read_corpus(dir)? {
            let id = entry.id();
            let png = encode_png(&decode_rgb(&entry.bytes).with_context(|| format!("decoding {id}"))?)?;
            let mut cm = gateway.embed_pair(&png, &entry.line.caption).with_context(|| format!("embedding {id}"))?;
            let tv = gateway.embed_text(&entry.line.caption)?;
            if let Some(h) = &head {
                cm.image_segment = project(&cm.image_segment, h)?;
            }
            let rel = cornerrag_server::image_ref(&png);
            let path = db.join(&rel);
            std::fs::create_dir_all(path.parent().expect("image ref has a directory"))?;
            std::fs::write(&path, &png)?;
            let source = entry.line.source.unwrap_or(CaseSource::SeedCorpus);
            store.insert(NewCase::new(rel, entry.line.caption, source), &cm, &tv)?;
        }
    }
    store.persist(db)?;
    println!("{}", json!({ "inserted": store.len() - before, "size": store.len() }));
    Ok(())
}

fn query(
    db: &Path,
    image: Option<&Path>,
    alpha: f64,
    k: usize,
    precomputed_vector: Option<&Path>,
    head: Option<&Path>,
    backends: &BackendArgs,
) -> Result<()> {
    let store = load_store(db)?;
    let cfg = QueryConfig::new(alpha, k)?;
    let q = match (precomputed_vector, image) {
        (Some(path), _) => {
            let values: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(path)?)
                .with_context(|| format!("{} is not a JSON array of numbers", path.display()))?;
            EmbeddingVector::new(values)?
        }
        (None, Some(path)) => {
            let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            backends.gateway()?.embed_query(&bytes, load_head(head)?.as_ref())?
        }
        (None, None) => bail!("pass --image or --precomputed-vector"),
    };
    let mut out = std::io::stdout().lock();
    for r in retrieval::query(&q, &cfg, &store)? {
        let rec = store.record(r.index)?;
        let line = json!({
            "index": r.index,
            "combined": r.combined,
            "img_similarity": r.img_similarity,
            "text_similarity": r.text_similarity,
            "caption": rec.caption,
            "image_ref": rec.image_ref,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn train_head(pairs: &Path, cfg: &TrainConfig, out: &Path) -> Result<()> {
    let batch = load_precomputed(pairs).with_context(|| format!("loading {}", pairs.display()))?;
    if batch.dims.image != batch.dims.text {
        bail!("training needs equal image and text dimensions, got {:?}", batch.dims);
    }
    let data = batch.training_pairs();
    let before = alignment_metrics(&ProjectionHead::identity(batch.dims.image), &data)?;
    let report = train(&data, cfg)?;
    let after = alignment_metrics(&report.final_head, &data)?;
    report.final_head.save(out)?;
    let summary = json!({
        "pairs": data.len(),
        "config": cfg,
        "loss_per_epoch": report.loss_per_epoch,
        "mined_counts": report.mined_counts,
        "before": before,
        "after": after,
        "head": out,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn parse_arms(names: &[String]) -> Result<Vec<Arm>> {
    let mut arms = Vec::new();
    for name in names {
        match name.trim() {
            "with" => arms.push(Arm::WithRag),
            "without" => arms.push(Arm::WithoutRag),
            "ablation" => arms.extend(Arm::ablations()),
            other => bail!("unknown arm {other:?}; expected with, without or ablation"),
        }
    }
    arms.dedup();
    Ok(arms)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    corpus: &Path,
    db: &Path,
    alpha: f64,
    arms: &[String],
    report_path: &Path,
    head: Option<&Path>,
    seed: u64,
    backends: &BackendArgs,
) -> Result<()> {
    let cfg = ComparisonConfig {
        alpha,
        arms: parse_arms(arms)?,
        seed,
    };
    let store = load_store(db)?;
    let items = corpus::eval_items(corpus::read_corpus(corpus)?);
    let gateway = backends.gateway()?;
    let generator = backends.generator()?;
    let head = load_head(head)?;
    let pipeline = Pipeline {
        store: &store,
        image_root: db,
        gateway: &gateway,
        head: head.as_ref(),
        generator: generator.as_ref(),
    };
    let report = run_comparison(&items, &pipeline, &cfg)?;
    std::fs::write(report_path, report.to_json()?)?;

    for arm in &report.arms {
        match &arm.means {
            Some(m) => println!(
                "{:<40} scored {:>4}  skipped {:>3}  cosine {:.4}  f1 {:.4}  precision {:.4}  recall {:.4}",
                arm.name, arm.scored, arm.skipped, m.cosine, m.f1, m.precision, m.recall
            ),
            None => println!("{:<40} scored 0  skipped {}", arm.name, arm.skipped),
        }
    }
    println!("report written to {}", report_path.display());
    Ok(())
}

fn stats(fixture: &Path, as_json: bool) -> Result<()> {
    let f = Table2Fixture::load(fixture).with_context(|| format!("loading {}", fixture.display()))?;
    let mut rows = Vec::new();
    for metric in METRICS {
        let r = paired_t_test(&f.samples(metric)?)?;
        rows.push((metric, r));
    }
    if as_json {
        let out: Vec<_> = rows
            .iter()
            .map(|(m, r)| json!({ "metric": m.name(), "n": r.n, "df": r.degrees_of_freedom(), "t": r.t, "p": r.p, "mean_diff": r.mean_diff }))
            .collect();
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(());
    }
    println!("{:<10} {:>4} {:>10} {:>12} {:>12}", "metric", "n", "t", "p", "mean diff");
    for (m, r) in rows {
        println!("{:<10} {:>4} {:>10.4} {:>12.4e} {:>12.5}", m.name(), r.n, r.t, r.p, r.mean_diff);
    }
    Ok(())
}

fn serve(db: PathBuf, host: &str, port: u16, alpha_default: f64, head: Option<&Path>, backends: &BackendArgs) -> Result<()> {
    QueryConfig::new(alpha_default, 1).context("--alpha-default")?;
    let mut config = ServerConfig::new(db);
    config.alpha_default = alpha_default;
    config.endpoints = backends.endpoints();
    let state = AppState::open(backends.gateway()?, load_head(head)?, backends.generator()?, config)?;
    runtime()?.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        eprintln!("serving on http://{}", listener.local_addr()?);
        cornerrag_server::serve(listener, Arc::new(state)).await?;
        Ok(())
    })
}
