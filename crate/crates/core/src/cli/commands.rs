use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{AnalyzeCommand, Command, GenArgs, MergeArg, PruneArg, RecordKind, RunConfig, SweepArgs};
use crate::analysis::{overlap_curve, redundancy_stats, HISTOGRAM_BINS};
use crate::error::{Error, Result};
use crate::eval::{evaluate, run_sweep, CompressionSpec, EvalReport};
use crate::merging::{merge_corpus, MergeApproach, MergeSpec};
use crate::pruning::{prune_corpus, PruneSpec, PruneStrategy};
use crate::scoring::retrieve_all;
use crate::store::{
    self, load_attention, load_queries, load_synth_queries, AuxStore, Corpus, DType, Grid,
    MemoryReport, PageEmbeddings, Qrels, Strategy,
};
use crate::synthetic::{generate, SyntheticSpec};

pub(super) fn dispatch(cfg: &RunConfig) -> Result<()> {
    match &cfg.command {
        Command::Ingest {
            input,
            output,
            dtype,
        } => ingest(cfg, input, output.as_deref(), dtype.map(Into::into)),
        Command::Validate { input, kind } => validate(cfg, input, *kind),
        Command::Prune {
            input,
            output,
            strategy,
            ratio,
            seed,
            aux,
        } => prune(cfg, input, output, *strategy, *ratio, *seed, aux.as_deref()),
        Command::Merge {
            input,
            output,
            approach,
            factor,
            no_renormalize,
        } => merge(cfg, input, output, *approach, *factor, !no_renormalize),
        Command::Index { input, output } => index(cfg, input, output),
        Command::Search {
            corpus,
            queries,
            k,
            output,
        } => search(corpus, queries, *k, output.as_deref()),
        Command::Eval {
            corpus,
            queries,
            qrels,
            k,
            baseline,
            output,
        } => eval(cfg, corpus, queries, qrels, *k, baseline.as_deref(), output.as_deref()),
        Command::Sweep(args) => sweep(cfg, args),
        Command::Analyze(a) => analyze(cfg, a),
        Command::Mem { input, baseline } => mem(cfg, input, baseline.as_deref()),
        Command::GenSynthetic(args) => gen_synthetic(cfg, args),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

/// Prints `human` or the JSON rendering of `value`, depending on `--json`.
fn emit<T: Serialize>(cfg: &RunConfig, human: &str, value: &T) {
    if cfg.json {
        print!("{}", to_json(value));
    } else {
        println!("{human}");
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Serialize)]
struct CorpusSummary {
    corpus_id: String,
    pages: usize,
    d: usize,
    dtype: DType,
    vectors: u64,
    min_vectors: usize,
    max_vectors: usize,
    memory_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<store::Provenance>,
}

impl CorpusSummary {
    fn of(c: &Corpus) -> Self {
        let counts = c.pages().iter().map(PageEmbeddings::n_vectors);
        CorpusSummary {
            corpus_id: c.manifest.corpus_id.clone(),
            pages: c.len(),
            d: c.dim(),
            dtype: c.dtype(),
            vectors: counts.clone().map(|n| n as u64).sum(),
            min_vectors: counts.clone().min().unwrap_or(0),
            max_vectors: counts.max().unwrap_or(0),
            memory_bytes: c.footprint(),
            provenance: c.manifest.provenance.clone(),
        }
    }

    fn human(&self) -> String {
        let mut s = format!(
            "{}: {} pages, d = {}, {}, {} vectors ({}..{} per page), {} bytes",
            self.corpus_id,
            self.pages,
            self.d,
            self.dtype,
            self.vectors,
            self.min_vectors,
            self.max_vectors,
            self.memory_bytes
        );
        if let Some(p) = &self.provenance {
            let _ = write!(s, ", {} @ {}", p.strategy, p.parameter);
        }
        s
    }
}

fn ingest(cfg: &RunConfig, input: &Path, output: Option<&Path>, dtype: Option<DType>) -> Result<()> {
    let corpus = Corpus::load(input)?;
    if let Some(out) = output {
        let dtype = dtype.unwrap_or(corpus.dtype());
        let provenance = corpus.manifest.provenance.clone();
        let mut converted = Corpus::new(stem(out), corpus.pages().to_vec(), dtype)?;
        converted.manifest.provenance = provenance;
        converted.save(out)?;
    }
    let summary = CorpusSummary::of(&corpus);
    emit(cfg, &summary.human(), &summary);
    Ok(())
}

fn validate(cfg: &RunConfig, input: &Path, kind: RecordKind) -> Result<()> {
    let (n, what) = match kind {
        RecordKind::Corpus => (Corpus::load(input)?.len(), "pages"),
        RecordKind::Queries => (load_queries(input)?.len(), "queries"),
    };
    emit(
        cfg,
        &format!("ok: {} {what} in {}", n, input.display()),
        &json!({ "valid": true, "records": n }),
    );
    Ok(())
}

fn load_aux(strategy: Strategy, corpus: &Corpus, aux: Option<&Path>) -> Result<Option<AuxStore>> {
    let need = matches!(strategy, Strategy::Score | Strategy::Attention);
    let Some(path) = aux else {
        if need {
            return Err(Error::validation(format!(
                "strategy {strategy} needs --aux ({})",
                if strategy == Strategy::Score {
                    "synthesized queries"
                } else {
                    "attention vectors"
                }
            )));
        }
        return Ok(None);
    };
    let mut store = AuxStore::new();
    match strategy {
        Strategy::Score => load_synth_queries(path, corpus, &mut store)?,
        Strategy::Attention => load_attention(path, corpus, &mut store)?,
        _ => log::warn!("--aux is ignored by strategy {strategy}"),
    }
    Ok(Some(store))
}

#[derive(Serialize)]
struct CompressionSummary {
    input: CorpusSummary,
    output: CorpusSummary,
    memory_ratio: f64,
}

fn report_compression(cfg: &RunConfig, before: &Corpus, after: &Corpus) {
    let ratio = store::relative_memory(after, before).unwrap_or(f64::NAN);
    let s = CompressionSummary {
        input: CorpusSummary::of(before),
        output: CorpusSummary::of(after),
        memory_ratio: ratio,
    };
    let human = format!(
        "{} -> {} vectors, memory ratio {:.6}\n{}",
        s.input.vectors,
        s.output.vectors,
        ratio,
        s.output.human()
    );
    emit(cfg, &human, &s);
}

fn prune(
    cfg: &RunConfig,
    input: &Path,
    output: &Path,
    strategy: PruneArg,
    ratio: f64,
    seed: Option<u64>,
    aux: Option<&Path>,
) -> Result<()> {
    let corpus = Corpus::load(input)?;
    let strategy = match strategy {
        PruneArg::Random => PruneStrategy::Random,
        PruneArg::Score => PruneStrategy::Score,
        PruneArg::Attention => PruneStrategy::Attention,
    };
    let aux = load_aux(strategy.into(), &corpus, aux)?;
    let spec = PruneSpec {
        strategy,
        ratio,
        seed,
    };
    let mut pruned = prune_corpus(&corpus, &spec, aux.as_ref())?;
    pruned.manifest.corpus_id = stem(output);
    pruned.save(output)?;
    report_compression(cfg, &corpus, &pruned);
    Ok(())
}

fn merge(
    cfg: &RunConfig,
    input: &Path,
    output: &Path,
    approach: MergeArg,
    factor: f64,
    renormalize: bool,
) -> Result<()> {
    let corpus = Corpus::load(input)?;
    let approach = match approach {
        MergeArg::Pool1d => MergeApproach::Pool1d,
        MergeArg::Pool2d => MergeApproach::Pool2d,
        MergeArg::Cluster => MergeApproach::Cluster,
    };
    let spec = MergeSpec {
        approach,
        factor,
        renormalize,
    };
    let mut merged = merge_corpus(&corpus, &spec)?;
    merged.manifest.corpus_id = stem(output);
    merged.save(output)?;
    report_compression(cfg, &corpus, &merged);
    Ok(())
}

fn index(cfg: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let corpus = Corpus::load(input)?;
    let provenance = corpus.manifest.provenance.clone();
    let dtype = corpus.dtype();
    let mut pages = corpus.into_pages();
    pages.sort_by(|a, b| a.id.cmp(&b.id));
    let mut indexed = Corpus::new(stem(output), pages, dtype)?;
    indexed.manifest.provenance = provenance;
    indexed.save(output)?;
    let summary = CorpusSummary::of(&indexed);
    emit(cfg, &summary.human(), &summary);
    Ok(())
}

fn search(corpus: &Path, queries: &Path, k: usize, output: Option<&Path>) -> Result<()> {
    let corpus = Corpus::load(corpus)?;
    let queries = load_queries(queries)?;
    let rankings = retrieve_all(&queries, &corpus, k)?;
    let mut tsv = String::new();
    for r in &rankings {
        for (rank, h) in r.hits.iter().enumerate() {
            let _ = writeln!(tsv, "{}\t{}\t{}\t{:.6}", r.query_id, rank + 1, h.page_id, h.score);
        }
    }
    match output {
        Some(path) => write_text(path, &tsv),
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}

/// Writes a JSON report to `output`, or prints it when no output is given.
fn deliver_report(cfg: &RunConfig, json_text: &str, output: Option<&Path>, human: &str) -> Result<()> {
    match output {
        Some(path) => {
            write_text(path, json_text)?;
            if cfg.json {
                print!("{json_text}");
            } else {
                println!("{human}");
            }
        }
        None => print!("{json_text}"),
    }
    Ok(())
}

fn eval(
    cfg: &RunConfig,
    corpus: &Path,
    queries: &Path,
    qrels: &Path,
    k: usize,
    baseline: Option<&Path>,
    output: Option<&Path>,
) -> Result<()> {
    let corpus = Corpus::load(corpus)?;
    let queries = load_queries(queries)?;
    let qrels = Qrels::load(qrels)?;
    let mut report = evaluate(&corpus, &queries, &qrels, k)?;
    if let Some(b) = baseline {
        report.compare_to(&EvalReport::load(b)?)?;
    }
    let human = format!(
        "{}: mean NDCG@{} = {:.4} over {} queries (relative {:.4}, memory ratio {:.4})",
        report.corpus_id,
        k,
        report.mean_ndcg,
        report.per_query.len(),
        report.relative_performance,
        report.memory_ratio
    );
    deliver_report(cfg, &report.to_json(), output, &human)
}

fn sweep(cfg: &RunConfig, args: &SweepArgs) -> Result<()> {
    let corpus = Corpus::load(&args.corpus)?;
    let queries = load_queries(&args.queries)?;
    let qrels = Qrels::load(&args.qrels)?;
    let strategy: Strategy = args.strategy.into();
    let aux = load_aux(strategy, &corpus, args.aux.as_deref())?;
    let points: Vec<CompressionSpec> = args
        .points
        .iter()
        .map(|&p| CompressionSpec::from_parts(strategy, p, args.seed, !args.no_renormalize))
        .collect();
    let report = run_sweep(&corpus, &queries, &qrels, &points, args.k, aux.as_ref())?;
    let mut csv = String::from("strategy,parameter,mean_ndcg,relative_performance,memory_ratio,memory_bytes\n");
    let mut human = format!(
        "baseline {}: mean NDCG@{} = {:.4}, {} bytes\n",
        report.corpus_id, args.k, report.mean_ndcg, report.memory_bytes
    );
    for p in &report.sweep {
        let _ = writeln!(
            csv,
            "{},{},{:.6},{:.6},{:.6},{}",
            p.strategy, p.parameter, p.mean_ndcg, p.relative_performance, p.memory_ratio, p.memory_bytes
        );
        let _ = writeln!(
            human,
            "{:>9} {:>8}: NDCG@{} {:.4} ({:.1}%), memory {:.4}",
            p.strategy,
            p.parameter,
            args.k,
            p.mean_ndcg,
            p.relative_performance * 100.0,
            p.memory_ratio
        );
    }
    if let Some(path) = &args.csv {
        write_text(path, &csv)?;
    }
    deliver_report(cfg, &report.to_json(), args.output.as_deref(), human.trim_end())
}

/// Seeded subset of pages that have at least `min_queries` synthesized queries.
fn sample_pages<'a>(
    corpus: &'a Corpus,
    aux: &'a AuxStore,
    min_queries: usize,
    sample_size: usize,
    seed: u64,
) -> Vec<(&'a PageEmbeddings, &'a [store::QueryEmbeddings])> {
    let eligible: Vec<_> = corpus
        .pages()
        .iter()
        .filter_map(|p| {
            aux.get(&p.id)
                .map(|a| a.synth_queries.as_slice())
                .filter(|q| q.len() >= min_queries)
                .map(|q| (p, q))
        })
        .collect();
    if eligible.len() <= sample_size {
        return eligible;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, eligible.len(), sample_size).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| eligible[i]).collect()
}

fn analyze(cfg: &RunConfig, cmd: &AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Overlap {
            corpus,
            synth_queries,
            ratios,
            sample,
            seed,
            output,
            csv,
        } => {
            let corpus = Corpus::load(corpus)?;
            let mut aux = AuxStore::new();
            load_synth_queries(synth_queries, &corpus, &mut aux)?;
            let pages = sample_pages(&corpus, &aux, 2, *sample, *seed);
            let curve = overlap_curve(&pages, ratios)?;
            if let Some(path) = csv {
                let mut text = String::from("prune_ratio,retention,mean_overlap,random_baseline,pairs\n");
                for p in &curve.points {
                    let _ = writeln!(
                        text,
                        "{},{},{:.6},{},{}",
                        p.prune_ratio, p.retention, p.mean_overlap, p.random_baseline, p.pairs
                    );
                }
                write_text(path, &text)?;
            }
            let mut human = String::new();
            for p in &curve.points {
                let _ = writeln!(
                    human,
                    "prune ratio {:.2}: overlap {:.4} (random {:.4}, {} pairs)",
                    p.prune_ratio, p.mean_overlap, p.random_baseline, p.pairs
                );
            }
            deliver_report(cfg, &to_json(&curve), output.as_deref(), human.trim_end())
        }
        AnalyzeCommand::Redundancy {
            corpus,
            synth_queries,
            thresholds,
            sample,
            seed,
            output,
            csv,
        } => {
            let corpus = Corpus::load(corpus)?;
            let mut aux = AuxStore::new();
            load_synth_queries(synth_queries, &corpus, &mut aux)?;
            let pages = sample_pages(&corpus, &aux, 1, *sample, *seed);
            let pairs: Vec<_> = pages
                .iter()
                .flat_map(|(p, qs)| qs.iter().map(move |q| (*p, q)))
                .collect();
            let stats = redundancy_stats(&pairs, thresholds)?;
            if let Some(path) = csv {
                let mut text = String::from("bin_low,bin_high,count\n");
                for (i, c) in stats.histogram.iter().enumerate() {
                    let lo = i as f64 / HISTOGRAM_BINS as f64;
                    let hi = (i + 1) as f64 / HISTOGRAM_BINS as f64;
                    let _ = writeln!(text, "{lo},{hi},{c}");
                }
                write_text(path, &text)?;
            }
            let mut human = format!("{} (page, query) pairs\n", stats.pairs);
            for c in &stats.counts {
                let _ = writeln!(human, "r_norm > {}: {:.2} patches on average", c.threshold, c.mean_count);
            }
            deliver_report(cfg, &to_json(&stats), output.as_deref(), human.trim_end())
        }
    }
}

fn mem(cfg: &RunConfig, input: &Path, baseline: Option<&Path>) -> Result<()> {
    let corpus = Corpus::load(input)?;
    let report = MemoryReport::new(corpus.footprint());
    let relative = match baseline {
        Some(b) => Some(store::relative_memory(&corpus, &Corpus::load(b)?)?),
        None => None,
    };
    let mut human = format!(
        "{} bytes ({:.4} MB, {:.4} MiB)",
        report.bytes, report.mb_decimal, report.mib
    );
    if let Some(r) = relative {
        let _ = write!(human, ", relative memory {r:.6}");
    }
    emit(
        cfg,
        &human,
        &json!({
            "bytes": report.bytes,
            "mb_decimal": report.mb_decimal,
            "mib": report.mib,
            "mb_mixed": report.mb_mixed,
            "relative_memory": relative,
        }),
    );
    Ok(())
}

fn gen_synthetic(cfg: &RunConfig, args: &GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        pages: args.pages,
        grid: Grid::new(args.grid.0, args.grid.1),
        dim: args.dim,
        topic_pool: args.topic_pool,
        topics_per_page: args.topics_per_page,
        details_per_page: args.details_per_page,
        noise: args.noise,
        synth_per_page: args.synth_per_page,
        seed: args.seed,
        ..Default::default()
    };
    let data = generate(&spec)?;
    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dtype: DType = args.dtype.into();
    let mut corpus = Corpus::new(data.corpus.manifest.corpus_id.clone(), data.corpus.into_pages(), dtype)?;
    corpus.manifest.corpus_id = "corpus".into();
    corpus.save(dir.join("corpus.mvec"))?;
    store::write_queries(&data.queries, dtype, dir.join("queries.mvec"))?;
    data.qrels.save(dir.join("qrels.tsv"))?;
    store::write_attention(&data.aux, dir.join("attention.mvec"))?;
    store::write_synth_queries(&data.aux, dtype, dir.join("synth_queries.mvec"))?;
    let files = [
        "corpus.mvec",
        "queries.mvec",
        "qrels.tsv",
        "attention.mvec",
        "synth_queries.mvec",
    ];
    emit(
        cfg,
        &format!("wrote {} to {}", files.join(", "), dir.display()),
        &json!({ "dir": dir, "files": files, "pages": corpus.len() }),
    );
    Ok(())
}
