use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use toolde_core::canonicalizer::{
    audit_completeness, canonicalize, coverage_matrix, CanonicalToolDocument,
};
use toolde_core::corpus::{
    load_corpus, load_qrels, load_queries, load_run, load_tool_documents, write_run,
    write_tool_documents, FieldSelection, InstructionMode, ToolDocument,
};
use toolde_core::eval::{
    ablate, evaluate, sample_similarity_pairs, similarity_analysis, AblationSettings, Averaging,
    Protocol,
};
use toolde_core::pipeline::{
    assemble_output_corpus, run_pipeline, token_stats, PipelineConfig, PipelineReport,
    TokenizerKind,
};
use toolde_core::rerank::{rerank_run, CorpusLookup, DocumentView, RerankSettings};
use toolde_core::retrieval::{BuiltIndex, Retriever, SparseIndexParams};
use toolde_core::review::{JudgmentExport, ReviewBatch};
use toolde_core::train::{
    build_embed_train, build_rerank_train, export_train, TrainFormat, TrainSettings,
    DEFAULT_NEG_PER_POS, DEFAULT_N_NEG,
};
use toolde_review::{ReviewStore, ServeConfig};

use crate::backends::BackendFactory;
use crate::config::ToolkitConfig;
use crate::*;

const DEFAULT_EMBED_BATCH: usize = 32;

fn parse<T: std::str::FromStr<Err = toolde_core::Error>>(
    flag: &str,
    value: &str,
) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|e| CliError::Invalid(format!("--{flag}: {e}")))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn print(text: &str) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn ks_or_config(flag: &[usize], config: &ToolkitConfig) -> Result<Vec<usize>, CliError> {
    let ks = if flag.is_empty() {
        config.ks()
    } else {
        flag.to_vec()
    };
    if ks.contains(&0) {
        return Err(CliError::Invalid("--k: cutoffs must be at least 1".into()));
    }
    Ok(ks)
}

fn sparse_params(
    config: &ToolkitConfig,
    k1: Option<f64>,
    b: Option<f64>,
) -> Result<SparseIndexParams, CliError> {
    let defaults = SparseIndexParams::default();
    let params = SparseIndexParams {
        k1: k1.or(config.retrieval.k1).unwrap_or(defaults.k1),
        b: b.or(config.retrieval.b).unwrap_or(defaults.b),
    };
    params.validate()?;
    Ok(params)
}

fn retriever(
    mode: IndexMode,
    config: &ToolkitConfig,
    factory: &BackendFactory,
) -> Result<Retriever, CliError> {
    Ok(match mode {
        IndexMode::Sparse => Retriever::Sparse(sparse_params(config, None, None)?),
        IndexMode::Dense => Retriever::Dense {
            backend: factory.embedding()?,
            batch_size: config.retrieval.batch_size.unwrap_or(DEFAULT_EMBED_BATCH),
        },
    })
}

/// The report without stage timings, which differ from run to run.
fn report_json(report: &PipelineReport) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(report)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("latency");
    }
    Ok(v)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = ToolkitConfig::load(cli.config.as_deref())?;
    let factory = BackendFactory::new(&config);
    match cli.command {
        Command::Canonicalize(a) => {
            let docs: Vec<CanonicalToolDocument> =
                load_corpus(&a.corpus)?.iter().map(canonicalize).collect();
            match a.format {
                CanonicalFormat::Canonical => {
                    let mut w = BufWriter::new(File::create(&a.out)?);
                    for d in &docs {
                        serde_json::to_writer(&mut w, d)?;
                        w.write_all(b"\n")?;
                    }
                    w.flush()?;
                }
                CanonicalFormat::Corpus => {
                    let raw: Vec<ToolDocument> = docs
                        .iter()
                        .map(|d| ToolDocument::Original(d.to_raw()))
                        .collect();
                    write_tool_documents(&raw, &a.out)?;
                }
            }
            log::info!("canonicalized {} documents", docs.len());
        }

        Command::Coverage(a) => {
            let docs: Vec<CanonicalToolDocument> =
                load_corpus(&a.corpus)?.iter().map(canonicalize).collect();
            let report = coverage_matrix(&docs)?;
            match &a.out {
                Some(p) => std::fs::write(p, report.to_csv())?,
                None => print(&report.to_csv())?,
            }
            if let Some(p) = &a.json {
                write_json(p, &report)?;
            }
        }

        Command::Audit(a) => {
            let seed = config.seed(a.seed, "audit")?;
            let docs = load_tool_documents(&a.corpus)?;
            let selection: FieldSelection = parse("fields", &a.fields)?;
            let judge = factory.generation("judge")?;
            let max_tokens = config.pipeline.max_tokens.unwrap_or(16);
            let report =
                audit_completeness(&docs, a.per_domain, &judge, seed, &selection, max_tokens)?;
            let mut table = format!(
                "{:<12} {:>8} {:>10} {:>9}\n",
                "domain", "sampled", "incomplete", "unparsed"
            );
            for (d, r) in &report.per_domain {
                table.push_str(&format!(
                    "{:<12} {:>8} {:>10} {:>9}\n",
                    d.label(),
                    r.sampled,
                    r.flagged_incomplete,
                    r.unparsed
                ));
            }
            table.push_str(&format!(
                "incomplete rate: {:.1}%\n",
                report.overall_rate * 100.0
            ));
            print(&table)?;
            if let Some(p) = &a.out {
                write_json(p, &report)?;
            }
        }

        Command::Expand(a) => {
            let seed = config.seed(a.seed, "expand")?;
            let corpus = load_corpus(&a.corpus)?;
            let mut pipeline = PipelineConfig::new(
                factory.generation("expander")?,
                factory.generation("judge")?,
                factory.generation("refiner")?,
            );
            pipeline.seed = seed;
            pipeline.strict_tags = !a.lenient_tags && config.pipeline.strict_tags.unwrap_or(true);
            pipeline.checkpoint = a.checkpoint.clone();
            if let Some(v) = config.pipeline.max_tokens {
                pipeline.max_tokens = v;
            }
            if let Some(v) = config.pipeline.review_sample_size {
                pipeline.review_sample_size = v;
            }
            if let Some(v) = config.pipeline.checkpoint_every {
                pipeline.checkpoint_every = v;
            }
            let output = run_pipeline(&corpus, &pipeline)?;
            write_tool_documents(&assemble_output_corpus(&corpus, &output.outcomes), &a.out)?;
            let r = &output.report;
            if let Some(p) = &a.report {
                write_json(p, &report_json(r)?)?;
            }
            if let Some(p) = &a.latency {
                write_json(p, &r.latency)?;
            }
            if let Some(p) = &a.review_batch {
                output.review.save(p)?;
            }
            print(&format!(
                "total {}  passed_step2 {}  refined_step3 {}  failed_final {}  review_sample {}\n",
                r.total,
                r.passed_step2,
                r.refined_step3,
                r.failed_final,
                output.review.items.len()
            ))?;
        }

        Command::Stats(a) => {
            let tokenizer: TokenizerKind = parse("tokenizer", &a.tokenizer)?;
            let selection: FieldSelection = parse("fields", &a.fields)?;
            let expanded: Vec<_> = load_tool_documents(&a.corpus)?
                .into_iter()
                .filter_map(|d| match d {
                    ToolDocument::Expanded(e) => Some(e),
                    ToolDocument::Original(_) => None,
                })
                .collect();
            let stats = token_stats(&expanded, tokenizer, &selection)?;
            print(&stats.to_table())?;
            if let Some(p) = &a.out {
                write_json(p, &stats)?;
            }
        }

        Command::Index(a) => {
            let docs = load_tool_documents(&a.corpus)?;
            let selection: FieldSelection = parse("fields", &a.fields)?;
            let retriever = match a.mode {
                IndexMode::Sparse => Retriever::Sparse(sparse_params(&config, a.k1, a.b)?),
                IndexMode::Dense => retriever(IndexMode::Dense, &config, &factory)?,
            };
            let index = retriever.build(&docs, &selection)?;
            index.save(&a.out)?;
            log::info!("indexed {} documents with fields `{selection}`", docs.len());
        }

        Command::Search(a) => {
            let index = BuiltIndex::load(&a.index)?;
            let queries = load_queries(&a.queries)?;
            let (mode, backend) = match &index {
                BuiltIndex::Sparse(_) => (InstructionMode::QueryOnly, None),
                BuiltIndex::Dense(_) => (InstructionMode::Concat, Some(factory.embedding()?)),
            };
            let mode = match &a.instruction_mode {
                Some(m) => parse("instruction-mode", m)?,
                None => mode,
            };
            let run = index.run(&queries, a.k, mode, backend.as_ref(), &a.tag)?;
            write_run(&run, &a.out)?;
        }

        Command::Rerank(a) => {
            let run = load_run(&a.run)?;
            let queries = load_queries(&a.queries)?;
            let docs = load_tool_documents(&a.corpus)?;
            let settings = RerankSettings {
                pool: a.pool.unwrap_or_else(|| config.pool()),
                view: parse::<DocumentView>("view", &a.view)?,
                selection: parse("fields", &a.fields)?,
                instruction_mode: parse("instruction-mode", &a.instruction_mode)?,
            };
            let backend = factory.rerank()?;
            let (reranked, degraded) = rerank_run(
                &run,
                &queries,
                &backend,
                &CorpusLookup::new(&docs),
                &settings,
                &a.tag,
            )?;
            if !degraded.is_empty() {
                log::warn!(
                    "{} queries had candidates that failed to score: {}",
                    degraded.len(),
                    degraded.join(", ")
                );
            }
            write_run(&reranked, &a.out)?;
        }

        Command::Eval(a) => {
            let ks = ks_or_config(&a.k, &config)?;
            let averaging: Averaging = parse("averaging", &a.averaging)?;
            let report = evaluate(
                &load_run(&a.run)?,
                &load_qrels(&a.qrels)?,
                &load_queries(&a.queries)?,
                &ks,
            )?;
            if !report.missing_from_run.is_empty() {
                log::warn!(
                    "{} queries have no results in the run and score 0",
                    report.missing_from_run.len()
                );
            }
            print(&report.to_table(averaging))?;
            if let Some(p) = &a.out {
                write_json(p, &report)?;
            }
        }

        Command::Ablate(a) => {
            let protocol: Protocol = parse("protocol", &a.protocol)?;
            let settings = AblationSettings {
                ks: ks_or_config(&a.k, &config)?,
                depth: a
                    .depth
                    .or(config.retrieval.depth)
                    .unwrap_or(toolde_core::retrieval::DEFAULT_K),
            };
            let report = ablate(
                protocol,
                &load_tool_documents(&a.corpus)?,
                &retriever(a.mode, &config, &factory)?,
                &load_queries(&a.queries)?,
                &load_qrels(&a.qrels)?,
                &settings,
            )?;
            print(&report.to_table())?;
            if let Some(p) = &a.out {
                write_json(p, &report)?;
            }
        }

        Command::Simanalysis(a) => {
            let seed = config.seed(a.seed, "simanalysis")?;
            let docs = load_tool_documents(&a.corpus)?;
            let queries = load_queries(&a.queries)?;
            let pairs = sample_similarity_pairs(
                &queries,
                &load_qrels(&a.qrels)?,
                &docs,
                a.per_domain,
                seed,
            )?;
            let report = similarity_analysis(
                &pairs,
                &queries,
                &docs,
                &factory.embedding()?,
                parse("instruction-mode", &a.instruction_mode)?,
                &parse("fields", &a.fields)?,
            )?;
            print(&report.to_table())?;
            if let Some(p) = &a.out {
                write_json(p, &report)?;
            }
        }

        Command::BuildTrain(a) => {
            let settings = TrainSettings {
                seed: config.seed(a.seed, "build-train")?,
                view: parse("view", &a.view)?,
                instruction_mode: parse("instruction-mode", &a.instruction_mode)?,
            };
            let format: TrainFormat = parse("format", &a.format)?;
            let docs = load_tool_documents(&a.corpus)?;
            let queries = load_queries(&a.queries)?;
            let qrels = load_qrels(&a.qrels)?;
            let written = match a.task {
                TrainTask::Embed => {
                    let ex = build_embed_train(
                        &queries,
                        &qrels,
                        &docs,
                        a.n_neg.unwrap_or(DEFAULT_N_NEG),
                        &settings,
                    )?;
                    export_train(&ex, format, &a.out)?;
                    ex.len()
                }
                TrainTask::Rerank => {
                    let ex = build_rerank_train(
                        &queries,
                        &qrels,
                        &docs,
                        a.n_neg.unwrap_or(DEFAULT_NEG_PER_POS),
                        &settings,
                    )?;
                    export_train(&ex, format, &a.out)?;
                    ex.len()
                }
            };
            print(&format!("{written} examples\n"))?;
        }

        Command::ReviewServe(a) => {
            let serve = ServeConfig {
                batches: a.batches,
                journal: a.journal,
                bind: a.bind,
                static_dir: a.static_dir,
                token: a.token,
                cors_origin: a.cors_origin,
            };
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            runtime.block_on(toolde_review::serve(serve))?;
        }

        Command::ReviewExport(a) => {
            let batch = ReviewBatch::load(&a.batch)?;
            let batch_id = batch.batch_id.clone();
            let store = ReviewStore::open(vec![batch], &a.journal)?;
            let export: JudgmentExport = store.export(&batch_id).expect("batch was just loaded");
            export.save(&a.out)?;
            let p = export.progress();
            print(&format!(
                "batch {batch_id}: {} judged ({} pass, {} fail), {} pending\n",
                p.judged(),
                p.pass,
                p.fail,
                p.pending
            ))?;
            if let Some(path) = &a.report {
                let mut report: PipelineReport =
                    serde_json::from_str(&std::fs::read_to_string(path)?)?;
                report.attach_review(&export);
                write_json(path, &report_json(&report)?)?;
            }
        }
    }
    Ok(())
}
