use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use econkg::bootstrap::{run_until_converged, write_log, BatchLabels, BootstrapConfig, LogRecord};
use econkg::coref::{merge_entities, propose_duplicates, read_merge_decisions, CanonicalMap, EmbeddingSource};
use econkg::corpus::{Corpus, IngestFormat, SentenceSplitter};
use econkg::forecast::{kg_feature_set, read_panel, run_experiment, synthetic, AliasMap, ExperimentInputs};
use econkg::kgraph::{build_graph, KnowledgeGraph};
use econkg::lexicon::Lexicon;
use econkg::text::entity_key;
use econkg::triples::{dedup_triples, read_triples_jsonl, write_triples_jsonl, RdfTriple, TripleExtractor};
use econkg_api::{bind, entity_frequencies, preview_graph, serve_with, AppState, ServeConfig, ServiceOptions, SessionState};
use serde_json::json;

use crate::config::FileConfig;
use crate::manifest::Recorder;
use crate::{
    BootstrapArgs, CliError, CorefArgs, DemoArgs, ExtractArgs, ForecastArgs, Format, GraphArgs, IngestArgs, LexiconArgs,
    SelectArgs, ServeArgs,
};

/// Seed used by `forecast --synthetic` when none is given.
pub const DEFAULT_SEED: u64 = 2024;

const GOLDEN_CORPUS: &str = include_str!("../../core/fixtures/golden_corpus.jsonl");
const GOLDEN_VARIABLES: &str = include_str!("../../core/fixtures/golden_variables.csv");
const GOLDEN_RELATIONS: &str = include_str!("../../core/fixtures/golden_relations.csv");
const GOLDEN_MERGES: &str = include_str!("../../core/fixtures/golden_merges.jsonl");

fn ingest_format(f: Format) -> IngestFormat {
    match f {
        Format::Auto => IngestFormat::Auto,
        Format::Plain => IngestFormat::Plain,
        Format::PreTokenized => IngestFormat::PreTokenized,
    }
}

fn parse_corpus(bytes: &[u8], format: IngestFormat, origin: &Path) -> Result<Corpus, CliError> {
    Corpus::parse_jsonl(bytes, format, &SentenceSplitter::default()).map_err(|e| CliError::input(origin, e))
}

fn load_corpus(rec: &mut Recorder, path: &Path) -> Result<Corpus, CliError> {
    let bytes = rec.read(path)?;
    rec.time("ingest", || parse_corpus(&bytes, IngestFormat::Auto, path))
}

fn load_lexicon(rec: &mut Recorder, args: &LexiconArgs) -> Result<Lexicon, CliError> {
    let v = rec.read(&args.variables)?;
    let r = rec.read(&args.relations)?;
    Lexicon::from_seed_readers(&v[..], &r[..]).map_err(|e| CliError::input(&args.variables, e))
}

fn load_merges(rec: &mut Recorder, path: &Path, corpus: &Corpus, lexicon: &Lexicon) -> Result<CanonicalMap, CliError> {
    let bytes = rec.read(path)?;
    let decisions = read_merge_decisions(&bytes[..]).map_err(|e| CliError::input(path, e))?;
    merge_entities(&decisions, &entity_frequencies(corpus, lexicon)).map_err(|e| CliError::input(path, e))
}

fn triples_jsonl(triples: &[RdfTriple]) -> Vec<u8> {
    let mut out = Vec::new();
    write_triples_jsonl(triples, &mut out).expect("writing to memory");
    out
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("plain data");
    s.push('\n');
    s.into_bytes()
}

fn write_graph(rec: &mut Recorder, g: &KnowledgeGraph) -> Result<(), CliError> {
    rec.write("graph.json", g.to_json().as_bytes())?;
    rec.write("graph.dot", g.to_dot().as_bytes())?;
    for w in &g.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn write_lexicon(rec: &mut Recorder, lexicon: &Lexicon, log: &[LogRecord]) -> Result<(), CliError> {
    let mut v = Vec::new();
    lexicon.write_variables_csv(&mut v).map_err(CliError::stage)?;
    rec.write("variables.csv", &v)?;
    let mut r = Vec::new();
    lexicon.write_relations_csv(&mut r).map_err(CliError::stage)?;
    rec.write("relations.csv", &r)?;
    let mut l = Vec::new();
    write_log(log, &mut l).map_err(CliError::stage)?;
    rec.write("bootstrap_log.jsonl", &l)?;
    Ok(())
}

pub fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("ingest", None, a, &a.out)?;
    let bytes = rec.read(&a.input)?;
    let corpus = rec.time("ingest", || parse_corpus(&bytes, ingest_format(a.format), &a.input))?;
    let mut out = Vec::new();
    corpus.write_jsonl(&mut out).map_err(CliError::stage)?;
    rec.write("corpus.jsonl", &out)?;
    rec.finish()?;
    println!("{} documents, {} sentences", corpus.len(), corpus.sentence_count());
    Ok(())
}

fn bootstrap_config(a: &BootstrapArgs, cfg: &FileConfig, seed: Option<u64>) -> BootstrapConfig {
    let mut c = cfg.bootstrap.clone();
    if let Some(k) = a.k {
        c.k = k;
    }
    if let Some(t) = a.threshold {
        c.threshold = t;
    }
    if let Some(m) = a.max_iterations {
        c.max_iterations = m;
    }
    if let Some(s) = seed {
        c.training.seed = s;
    }
    c
}

pub fn bootstrap(a: &BootstrapArgs, cfg: &FileConfig, seed: Option<u64>) -> Result<(), CliError> {
    if a.labels.is_empty() && !a.interactive {
        return Err(CliError::Usage("bootstrap needs --labels <files...> or --interactive".into()));
    }
    let config = bootstrap_config(a, cfg, seed);
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut rec = Recorder::new("bootstrap", seed, &json!({ "args": a, "bootstrap": config }), &a.out)?;
    let corpus = Arc::new(load_corpus(&mut rec, &a.corpus)?);
    let seeds = load_lexicon(&mut rec, &a.lexicon)?;
    let (lexicon, log) = if a.interactive {
        let addr = a.addr.clone().unwrap_or_else(|| cfg.serve.addr.clone());
        let data_dir = a
            .data_dir
            .clone()
            .or_else(|| cfg.serve.data_dir.clone())
            .unwrap_or_else(|| a.out.join("session-data"));
        let options = ServiceOptions {
            token: cfg.serve.token.clone().or_else(|| std::env::var("ECONKG_TOKEN").ok()),
            bootstrap: config.clone(),
            ..Default::default()
        };
        rec.time("bootstrap", || interactive(corpus, seeds, options, &addr, &data_dir))?
    } else {
        let mut decisions = Vec::new();
        for path in &a.labels {
            let bytes = rec.read(path)?;
            decisions.extend(BatchLabels::read_jsonl(&bytes[..]).map_err(|e| CliError::input(path, e))?);
        }
        let mut labels = BatchLabels::new(decisions);
        rec.time("bootstrap", || run_until_converged(corpus, seeds, Some(&mut labels), config))
            .map_err(CliError::stage)?
    };
    write_lexicon(&mut rec, &lexicon, &log)?;
    rec.finish()?;
    println!(
        "{} variables, {} relations",
        lexicon.variables().len(),
        lexicon.relations().len()
    );
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::stage)
}

/// Serves one curation session until it converges or the process is interrupted.
fn interactive(
    corpus: Arc<Corpus>,
    seeds: Lexicon,
    options: ServiceOptions,
    addr: &str,
    data_dir: &Path,
) -> Result<(Lexicon, Vec<LogRecord>), CliError> {
    let addr = addr
        .parse()
        .map_err(|e| CliError::Usage(format!("bad address {addr:?}: {e}")))?;
    let config = options.bootstrap.clone();
    let state = Arc::new(AppState::open(corpus, seeds, options, data_dir).map_err(CliError::stage)?);
    let id = state.new_session(config).map_err(CliError::stage)?;
    runtime()?.block_on(async {
        let listener = bind(addr).await.map_err(CliError::stage)?;
        let local = listener.local_addr().map_err(CliError::stage)?;
        eprintln!("curation service on http://{local}/api, session {id}");
        let watched = state.clone();
        let sid = id.clone();
        let done = async move {
            let converged = async {
                while watched.session_view(&sid).map(|v| v.state) != Some(SessionState::Converged) {
                    tokio::time::sleep(Duration::from_millis(250)).await;
                }
            };
            tokio::select! {
                _ = converged => {}
                _ = tokio::signal::ctrl_c() => {}
            }
        };
        serve_with(listener, state.clone(), done).await.map_err(CliError::stage)
    })?;
    let view = state.session_view(&id).expect("session exists");
    if view.state != SessionState::Converged {
        return Err(CliError::Stage(format!(
            "interrupted before convergence; session {id} is kept in {}",
            data_dir.display()
        )));
    }
    Ok((
        state.session_lexicon(&id).expect("session exists"),
        state.session_log(&id).expect("session exists"),
    ))
}

pub fn coref(a: &CorefArgs, cfg: &FileConfig) -> Result<(), CliError> {
    let tau = a.tau.unwrap_or(cfg.coref.tau);
    let dim = a.dim.unwrap_or(cfg.coref.dim);
    let vectors = a.vectors.clone().or_else(|| cfg.coref.vectors.clone());
    let mut rec = Recorder::new("coref", None, &json!({ "args": a, "tau": tau, "dim": dim }), &a.out)?;
    let corpus = load_corpus(&mut rec, &a.corpus)?;
    let lexicon = load_lexicon(&mut rec, &a.lexicon)?;
    let source = match &vectors {
        Some(p) => {
            let bytes = rec.read(p)?;
            EmbeddingSource::parse(&bytes[..], dim).map_err(|e| CliError::input(p, e))?
        }
        None => EmbeddingSource::hashing_only(dim),
    };
    let proposals = rec.time("coref", || {
        let g = preview_graph(&corpus, &lexicon, &CanonicalMap::identity(), &[]);
        let names: Vec<String> = g.nodes().map(|n| n.name.clone()).collect();
        propose_duplicates(&names, &source, &lexicon.alias_pairs(), tau)
    });
    let proposals = proposals.map_err(|e| CliError::Usage(e.to_string()))?;
    let mut out = Vec::new();
    for p in &proposals {
        out.extend(serde_json::to_vec(p).expect("plain data"));
        out.push(b'\n');
    }
    rec.write("proposals.jsonl", &out)?;
    if let Some(path) = &a.decisions {
        let map = load_merges(&mut rec, path, &corpus, &lexicon)?;
        rec.write("canonical_map.json", &json_bytes(&map))?;
    }
    rec.finish()?;
    println!("{} proposals at tau {tau}", proposals.len());
    Ok(())
}

pub fn extract(a: &ExtractArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("extract", None, a, &a.out)?;
    let corpus = load_corpus(&mut rec, &a.corpus)?;
    let lexicon = load_lexicon(&mut rec, &a.lexicon)?;
    let merges = match &a.merges {
        Some(p) => load_merges(&mut rec, p, &corpus, &lexicon)?,
        None => CanonicalMap::identity(),
    };
    let map = CanonicalMap::from_lexicon(&lexicon).then(&merges);
    let triples = rec.time("extract", || {
        let raw = TripleExtractor::new(&lexicon)
            .with_coreference(map.clone())
            .extract_corpus(&corpus);
        dedup_triples(&raw, &map)
    });
    rec.write("triples.jsonl", &triples_jsonl(&triples))?;
    rec.finish()?;
    println!("{} triples", triples.len());
    Ok(())
}

pub fn graph(a: &GraphArgs) -> Result<(), CliError> {
    if a.hops.is_some() && a.center.len() != 1 {
        return Err(CliError::Usage("--hops needs exactly one --center".into()));
    }
    let mut rec = Recorder::new("graph", None, a, &a.out)?;
    let bytes = rec.read(&a.triples)?;
    let triples = read_triples_jsonl(&bytes[..]).map_err(|e| CliError::input(&a.triples, e))?;
    let centers: Vec<String> = a.center.iter().map(|c| entity_key(c)).collect();
    let mut g = rec.time("graph", || build_graph(&triples, &centers));
    if let Some(h) = a.hops {
        g = g.subgraph_around(&centers[0], h).map_err(CliError::stage)?;
    }
    write_graph(&mut rec, &g)?;
    rec.finish()?;
    println!("{} nodes, {} edges", g.node_count(), g.edge_count());
    Ok(())
}

pub fn select(a: &SelectArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("select", None, a, &a.out)?;
    let text = rec.read_string(&a.graph)?;
    let g = KnowledgeGraph::from_json(&text).map_err(|e| CliError::input(&a.graph, e))?;
    let center = entity_key(&a.center);
    let variables = g.linked_variables(&center, a.hops).map_err(CliError::stage)?;
    let mut body = json!({ "center": center, "hops": a.hops, "variables": variables });
    if let (Some(panel), Some(aliases)) = (&a.panel, &a.aliases) {
        let p = rec.read(panel)?;
        let p = read_panel(&p[..]).map_err(|e| CliError::input(panel, e))?;
        let m = rec.read(aliases)?;
        let m = AliasMap::read_csv(&m[..]).map_err(|e| CliError::input(aliases, e))?;
        let columns = kg_feature_set(&g, &center, &p, &m, a.hops).map_err(CliError::stage)?;
        body["columns"] = json!(columns);
    }
    rec.write("selection.json", &json_bytes(&body))?;
    rec.finish()?;
    for v in &variables {
        println!("{v}");
    }
    Ok(())
}

fn required(flag: &str, value: Option<PathBuf>) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("forecast needs --{flag} (or [forecast] {flag}) without --synthetic")))
}

pub fn forecast(a: &ForecastArgs, cfg: &FileConfig, seed: Option<u64>) -> Result<(), CliError> {
    let section = &cfg.forecast;
    let synthetic = a.synthetic || section.synthetic;
    let out = a
        .out
        .clone()
        .or_else(|| section.out.clone())
        .ok_or_else(|| CliError::Usage("forecast needs --out (or [forecast] out)".into()))?;
    let mut experiment = section.experiment.clone();
    if !a.horizons.is_empty() {
        experiment.horizons = a.horizons.clone();
    }
    let seed = synthetic.then(|| seed.unwrap_or(DEFAULT_SEED));
    let mut rec = Recorder::new("forecast", seed, &json!({ "args": a, "experiment": experiment }), &out)?;
    let (baseline, alternative, graph, aliases) = if let Some(seed) = seed {
        let data = rec.time("generate", || synthetic::generate(seed));
        if experiment.targets.is_empty() {
            experiment.targets = data.targets.clone();
        }
        let mut b = Vec::new();
        data.baseline.write_csv(&mut b).map_err(CliError::stage)?;
        rec.write("baseline.csv", &b)?;
        let mut x = Vec::new();
        data.alternative.write_csv(&mut x).map_err(CliError::stage)?;
        rec.write("alternative.csv", &x)?;
        rec.write("graph.json", data.graph.to_json().as_bytes())?;
        let mut m = Vec::new();
        data.aliases.write_csv(&mut m).map_err(CliError::stage)?;
        rec.write("aliases.csv", &m)?;
        (data.baseline, data.alternative, data.graph, data.aliases)
    } else {
        let paths = [
            required("baseline", a.baseline.clone().or_else(|| section.baseline.clone()))?,
            required("alternative", a.alternative.clone().or_else(|| section.alternative.clone()))?,
            required("graph", a.graph.clone().or_else(|| section.graph.clone()))?,
            required("aliases", a.aliases.clone().or_else(|| section.aliases.clone()))?,
        ];
        let b = rec.read(&paths[0])?;
        let x = rec.read(&paths[1])?;
        let g = rec.read_string(&paths[2])?;
        let m = rec.read(&paths[3])?;
        (
            read_panel(&b[..]).map_err(|e| CliError::input(&paths[0], e))?,
            read_panel(&x[..]).map_err(|e| CliError::input(&paths[1], e))?,
            KnowledgeGraph::from_json(&g).map_err(|e| CliError::input(&paths[2], e))?,
            AliasMap::read_csv(&m[..]).map_err(|e| CliError::input(&paths[3], e))?,
        )
    };
    let inputs = ExperimentInputs {
        baseline: &baseline,
        alternative: &alternative,
        graph: &graph,
        aliases: &aliases,
    };
    let report = rec
        .time("forecast", || run_experiment(&inputs, &experiment))
        .map_err(CliError::stage)?;
    for path in report.write_all(&out).map_err(|e| CliError::output(&out, e))? {
        rec.written(&path)?;
    }
    rec.finish()?;
    for r in &report.rows {
        let p = r.dm_p().map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<12} h={:<2} baseline MAPE {:>7.3}  kg MAPE {:>7.3}  DM p {}",
            r.target, r.horizon, r.baseline.mape, r.kg.mape, p
        );
    }
    Ok(())
}

pub fn serve(a: &ServeArgs, cfg: &FileConfig, seed: Option<u64>) -> Result<(), CliError> {
    let addr = a.addr.clone().unwrap_or_else(|| cfg.serve.addr.clone());
    let mut bootstrap = cfg.bootstrap.clone();
    if let Some(s) = seed {
        bootstrap.training.seed = s;
    }
    let config = ServeConfig {
        addr: addr
            .parse()
            .map_err(|e| CliError::Usage(format!("bad address {addr:?}: {e}")))?,
        corpus: a.corpus.clone(),
        variables: a.lexicon.variables.clone(),
        relations: a.lexicon.relations.clone(),
        data_dir: a
            .data_dir
            .clone()
            .or_else(|| cfg.serve.data_dir.clone())
            .unwrap_or_else(|| PathBuf::from("econkg-data")),
        embeddings: a.vectors.clone().or_else(|| cfg.coref.vectors.clone()),
        dim: cfg.coref.dim,
        options: ServiceOptions {
            token: a.token.clone().or_else(|| cfg.serve.token.clone()),
            bootstrap,
            tau: cfg.coref.tau,
            ..Default::default()
        },
    };
    eprintln!("serving on http://{}/api", config.addr);
    runtime()?
        .block_on(econkg_api::serve(config))
        .map_err(CliError::stage)
}

pub fn demo(a: &DemoArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("demo", None, a, &a.out)?;
    for (name, text) in [
        ("golden_corpus.jsonl", GOLDEN_CORPUS),
        ("golden_variables.csv", GOLDEN_VARIABLES),
        ("golden_relations.csv", GOLDEN_RELATIONS),
        ("golden_merges.jsonl", GOLDEN_MERGES),
    ] {
        rec.note_input(name, text.as_bytes());
    }
    let origin = Path::new("golden_corpus.jsonl");
    let corpus = parse_corpus(GOLDEN_CORPUS.as_bytes(), IngestFormat::Auto, origin)?;
    let lexicon = Lexicon::from_seed_readers(GOLDEN_VARIABLES.as_bytes(), GOLDEN_RELATIONS.as_bytes())
        .map_err(|e| CliError::input(Path::new("golden_variables.csv"), e))?;
    let decisions = read_merge_decisions(GOLDEN_MERGES.as_bytes())
        .map_err(|e| CliError::input(Path::new("golden_merges.jsonl"), e))?;
    let merges = merge_entities(&decisions, &entity_frequencies(&corpus, &lexicon)).map_err(CliError::stage)?;
    let map = CanonicalMap::from_lexicon(&lexicon).then(&merges);
    let (raw, triples) = rec.time("extract", || {
        let raw = TripleExtractor::new(&lexicon)
            .with_coreference(map.clone())
            .extract_corpus(&corpus);
        let unique = dedup_triples(&raw, &map);
        (raw, unique)
    });
    let g = rec.time("graph", || build_graph(&triples, &["inflation".to_string()]));
    rec.write("triples.jsonl", &triples_jsonl(&triples))?;
    write_graph(&mut rec, &g)?;
    rec.finish()?;
    println!("{} mentions, {} triples after merging:", raw.len(), triples.len());
    for t in &triples {
        println!("{{{}, {}, {}}}", t.subject, t.polarity.as_str(), t.object);
    }
    println!("wrote {}", a.out.join("graph.dot").display());
    Ok(())
}
