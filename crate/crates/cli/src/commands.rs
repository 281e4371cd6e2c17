use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ctx_client::classifier::{DEFAULT_ACCEL_TOPIC, DEFAULT_HOME_TOPIC};
use ctx_client::{serve, ClassifierService, ClientError, Connection, FilterApp, PredictorService};
use ctx_core::activity::{self, load_corpus, synthetic_runs, write_corpus, CentroidModel};
use ctx_core::bench;
use ctx_core::config::{CoreConfig, DEFAULT_BIND};
use ctx_core::filter::{parse_scenario, CommType, RuleSet};
use ctx_core::history::HistoryStore;
use ctx_core::mapping::ContextMap;
use ctx_core::ontology::{normalize, parse_ontology, realize, saturate, Ontology, OntologyError, SaturationConfig};
use ctx_core::predictor::DEFAULT_ORDER;
use ctx_core::protocol::{ServiceKind, TOPIC_ACCEPTED};
use ctx_core::trace::{load_trace, Legend, Speed};
use serde_json::json;

pub enum Failure {
    /// Bad arguments or unreadable input; exit status 2.
    Input(String),
    /// The operation itself failed; exit status 1.
    Runtime(String),
}

fn input(e: impl std::fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

#[derive(Parser)]
#[command(
    name = "ctx",
    version,
    about = "Context-aware framework core, services and ontology tools"
)]
pub struct Cli {
    /// Print reports as JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the framework core.
    #[command(subcommand)]
    Core(CoreCmd),
    /// Ontology tools.
    #[command(subcommand)]
    Ont(OntCmd),
    /// Synthetic ontologies and reasoner timing.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Replay a sensor trace into the core.
    Replay(ReplayArgs),
    /// Activity classification service and model tools.
    #[command(subcommand)]
    Classify(ClassifyCmd),
    /// Context prediction service and queries.
    #[command(subcommand)]
    Predict(PredictCmd),
    /// Communication filter app.
    #[command(subcommand)]
    Filter(FilterCmd),
}

#[derive(Subcommand)]
enum CoreCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum OntCmd {
    /// Validate syntax and declarations.
    Check { path: PathBuf },
    /// Print the direct subclass hierarchy.
    Classify { path: PathBuf },
    /// Print the named types of every individual.
    Realize { path: PathBuf },
    /// Instances of a class, or types of an individual.
    Query {
        path: PathBuf,
        #[arg(long, conflicts_with = "types", required_unless_present = "types")]
        instances: Option<String>,
        #[arg(long)]
        types: Option<String>,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Write a seeded synthetic ontology.
    Gen {
        #[arg(long)]
        axioms: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time parse, normalize and saturate; prints a JSON report.
    Run {
        path: PathBuf,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
        #[arg(long, default_value_t = ctx_core::ontology::DEFAULT_MAX_FACTS)]
        max_facts: u64,
    },
}

#[derive(Args)]
struct Connect {
    /// Core address.
    #[arg(long, default_value = DEFAULT_BIND)]
    core: SocketAddr,
    /// Heartbeat interval in milliseconds.
    #[arg(long, default_value_t = 2000)]
    heartbeat_ms: u64,
}

impl Connect {
    async fn open(&self) -> Result<Connection, Failure> {
        Connection::connect(self.core)
            .await
            .map_err(|e| runtime(format!("cannot reach core at {}: {e}", self.core)))
    }

    fn heartbeat(&self) -> Duration {
        Duration::from_millis(self.heartbeat_ms.max(1))
    }
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Replay speed factor, or `inf` for back to back.
    #[arg(long, default_value = "1")]
    speed: String,
    #[arg(long)]
    legend: Option<PathBuf>,
    #[arg(long, default_value = "replay")]
    name: String,
    #[command(flatten)]
    connect: Connect,
}

#[derive(Subcommand)]
enum ClassifyCmd {
    /// Run the classification service.
    Serve {
        /// Training corpus (`label,ax,ay,az`).
        #[arg(long)]
        train: Option<PathBuf>,
        /// Model JSON; written after training when `--train` is also given.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Label and event-code to context class table.
        #[arg(long)]
        map: PathBuf,
        #[arg(long, default_value = "u")]
        subject: String,
        #[arg(long, default_value = DEFAULT_ACCEL_TOPIC)]
        topic: String,
        #[arg(long, default_value = DEFAULT_HOME_TOPIC)]
        home_topic: String,
        #[arg(long, default_value = "classifier")]
        name: String,
        #[command(flatten)]
        connect: Connect,
    },
    /// Train a model from a corpus.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        model: PathBuf,
    },
    /// Write a seeded synthetic 4-activity corpus.
    Corpus {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Samples per run.
        #[arg(long, default_value_t = 640)]
        len: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy of a model on a labelled corpus.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
}

#[derive(Subcommand)]
enum PredictCmd {
    /// Run the prediction service.
    Serve {
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        k: usize,
        /// History store to train from at startup.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value = "predictor")]
        name: String,
        #[command(flatten)]
        connect: Connect,
    },
    /// Ask the core for a subject's next context.
    Query {
        #[arg(long)]
        subject: String,
        #[command(flatten)]
        connect: Connect,
    },
    /// Predict from a history file without a core.
    Offline {
        #[arg(long)]
        history: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long, default_value_t = DEFAULT_ORDER)]
        k: usize,
    },
}

#[derive(Subcommand)]
enum FilterCmd {
    /// Run the filter app against a scripted scenario.
    Run {
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Only this individual's contexts count.
        #[arg(long)]
        subject: Option<String>,
        /// Decision log (JSON lines); standard output when absent.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value = "comm-filter")]
        name: String,
        #[command(flatten)]
        connect: Connect,
    },
    /// Decide one event against a given context set.
    Eval {
        #[arg(long)]
        rules: PathBuf,
        /// Comma-separated current contexts.
        #[arg(long, default_value = "")]
        contexts: String,
        #[arg(long)]
        comm_type: String,
    },
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let json = cli.json;
    match cli.command {
        Command::Ont(cmd) => ont(cmd, json),
        Command::Bench(cmd) => bench_cmd(cmd),
        Command::Classify(ClassifyCmd::Train { train, model }) => classify_train(&train, &model, json),
        Command::Classify(ClassifyCmd::Corpus { seed, runs, len, out }) => {
            let f = File::create(&out).map_err(|e| input(format!("{}: {e}", out.display())))?;
            write_corpus(BufWriter::new(f), &synthetic_runs(seed, runs, len)).map_err(runtime)
        }
        Command::Classify(ClassifyCmd::Eval { model, test }) => classify_eval(&model, &test, json),
        Command::Predict(PredictCmd::Offline { history, subject, k }) => {
            let (store, _) = HistoryStore::open(&history).map_err(input)?;
            let svc = PredictorService::from_history(store.records(), k).map_err(input)?;
            print_prediction(&svc.prediction(&subject, None).ranked, json);
            Ok(())
        }
        Command::Filter(FilterCmd::Eval {
            rules,
            contexts,
            comm_type,
        }) => {
            let rules = RuleSet::load(&rules).map_err(input)?;
            let t: CommType = comm_type.parse().map_err(input)?;
            let ctx: BTreeSet<String> = contexts
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect();
            let d = rules.evaluate(&ctx, t);
            if json {
                println!("{}", serde_json::to_string(&d).expect("decision serializes"));
            } else {
                println!("{}: {}", d.action.as_str(), d.explanation);
            }
            Ok(())
        }
        other => {
            let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
            rt.block_on(networked(other, json))
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn ont_error(e: OntologyError) -> Failure {
    if e.is_input_error() {
        Failure::Input(e.to_string())
    } else {
        Failure::Runtime(e.to_string())
    }
}

fn load_ontology(path: &Path) -> Result<Ontology, Failure> {
    let text = read(path)?;
    parse_ontology(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn ont(cmd: OntCmd, json: bool) -> Result<(), Failure> {
    match cmd {
        OntCmd::Check { path } => {
            let o = load_ontology(&path)?;
            let v = &o.vocab;
            let total = o.tbox.len() + o.abox.len();
            if json {
                let r = json!({
                    "ok": true,
                    "classes": v.class_count(),
                    "roles": v.role_count(),
                    "individuals": v.individual_count(),
                    "axioms": o.tbox.len(),
                    "assertions": o.abox.len(),
                });
                println!("{r}");
            } else {
                println!(
                    "OK: {} classes, {} roles, {} individuals, {total} axioms+assertions",
                    v.class_count(),
                    v.role_count(),
                    v.individual_count()
                );
            }
        }
        OntCmd::Classify { path } => {
            let o = load_ontology(&path)?;
            let state = saturate(&normalize(&o)).map_err(ont_error)?;
            let h = state.direct_hierarchy();
            if json {
                let m: serde_json::Map<String, serde_json::Value> =
                    h.into_iter().map(|(c, sups)| (c, json!(sups))).collect();
                println!("{}", serde_json::Value::Object(m));
            } else {
                for (c, sups) in h {
                    println!("{c} SubClassOf {}", sups.join(", "));
                }
            }
        }
        OntCmd::Realize { path } => {
            let o = load_ontology(&path)?;
            let r = realize(&o).map_err(ont_error)?;
            let rows: Vec<(String, Vec<&str>)> = r
                .individuals()
                .iter()
                .map(|i| (i.clone(), r.types(i).expect("listed individual")))
                .collect();
            if json {
                let m: serde_json::Map<String, serde_json::Value> =
                    rows.into_iter().map(|(i, t)| (i, json!(t))).collect();
                println!("{}", serde_json::Value::Object(m));
            } else {
                for (i, t) in rows {
                    if t.is_empty() {
                        println!("{i}:");
                    } else {
                        println!("{i}: {}", t.join(", "));
                    }
                }
            }
        }
        OntCmd::Query { path, instances, types } => {
            let o = load_ontology(&path)?;
            let r = realize(&o).map_err(ont_error)?;
            let names: Vec<String> = match (instances, types) {
                (Some(c), _) => r.instances_of(&c).map_err(input)?,
                (None, Some(i)) => r.types(&i).map_err(input)?.into_iter().map(String::from).collect(),
                (None, None) => unreachable!("clap requires one"),
            };
            if json {
                println!("{}", json!(names));
            } else {
                for n in names {
                    println!("{n}");
                }
            }
        }
    }
    Ok(())
}

fn bench_cmd(cmd: BenchCmd) -> Result<(), Failure> {
    match cmd {
        BenchCmd::Gen { axioms, seed, out } => {
            if axioms == 0 {
                return Err(input("--axioms must be at least 1"));
            }
            let text = bench::generate(axioms, seed);
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| input(format!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        BenchCmd::Run {
            path,
            repetitions,
            max_facts,
        } => {
            let text = read(&path)?;
            let report = bench::run(&text, repetitions, SaturationConfig { max_facts }).map_err(ont_error)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            match &report.error {
                Some(e) => Err(runtime(e)),
                None => Ok(()),
            }
        }
    }
}

fn load_model(path: &Path) -> Result<CentroidModel, Failure> {
    CentroidModel::from_json(&read(path)?).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn load_labelled(path: &Path) -> Result<Vec<(String, activity::Window)>, Failure> {
    let f = File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    load_corpus(f).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn train_model(corpus: &Path) -> Result<CentroidModel, Failure> {
    activity::train(&load_labelled(corpus)?).map_err(input)
}

fn classify_train(corpus: &Path, model: &Path, json: bool) -> Result<(), Failure> {
    let m = train_model(corpus)?;
    std::fs::write(model, m.to_json()).map_err(|e| input(format!("{}: {e}", model.display())))?;
    if json {
        println!("{}", json!({"labels": m.labels, "model": model.display().to_string()}));
    } else {
        println!("trained {} labels: {}", m.labels.len(), m.labels.join(", "));
    }
    Ok(())
}

fn classify_eval(model: &Path, test: &Path, json: bool) -> Result<(), Failure> {
    let m = load_model(model)?;
    let windows = load_labelled(test)?;
    let acc = activity::accuracy(&m, &windows);
    if json {
        println!("{}", json!({"windows": windows.len(), "accuracy": acc}));
    } else {
        println!("accuracy {:.4} over {} windows", acc, windows.len());
    }
    Ok(())
}

fn print_prediction(ranked: &[ctx_core::protocol::Ranked], json: bool) {
    if json {
        println!("{}", serde_json::to_string(ranked).expect("ranking serializes"));
    } else if ranked.is_empty() {
        println!("no prediction");
    } else {
        for r in ranked {
            println!("{} {:.6}", r.context, r.probability);
        }
    }
}

fn lost(e: ClientError) -> Failure {
    runtime(format!("connection lost: {e}"))
}

async fn networked(cmd: Command, json: bool) -> Result<(), Failure> {
    match cmd {
        Command::Core(CoreCmd::Run { config }) => {
            let cfg = CoreConfig::load(&config).map_err(input)?;
            let handle = ctx_service::run_core(cfg).await.map_err(runtime)?;
            println!("core listening on {}", handle.addr());
            tokio::signal::ctrl_c().await.map_err(runtime)?;
            handle.shutdown().await.map_err(runtime)
        }
        Command::Replay(a) => {
            let legend = a.legend.as_deref().map(Legend::load).transpose().map_err(input)?;
            let rows = load_trace(&a.trace, legend.as_ref()).map_err(input)?;
            let speed: Speed = a.speed.parse().map_err(input)?;
            let mut conn = a.connect.open().await?;
            conn.hello(ServiceKind::Sensing, &a.name, &[]).await.map_err(lost)?;
            let n = ctx_client::replay(&mut conn, &rows, speed, a.connect.heartbeat())
                .await
                .map_err(runtime)?;
            if json {
                println!("{}", json!({ "published": n }));
            } else {
                println!("published {n} rows");
            }
            Ok(())
        }
        Command::Classify(ClassifyCmd::Serve {
            train,
            model,
            map,
            subject,
            topic,
            home_topic,
            name,
            connect,
        }) => {
            let m = match (&train, &model) {
                (Some(t), _) => {
                    let m = train_model(t)?;
                    if let Some(p) = &model {
                        std::fs::write(p, m.to_json()).map_err(|e| input(format!("{}: {e}", p.display())))?;
                    }
                    Some(m)
                }
                (None, Some(p)) => Some(load_model(p)?),
                (None, None) => None,
            };
            let map = ContextMap::load(&map).map_err(input)?;
            let mut svc = ClassifierService::new(m, map, subject).with_topics(topic, Some(home_topic));
            let mut conn = connect.open().await?;
            conn.hello(ServiceKind::Classification, &name, &svc.subscriptions())
                .await
                .map_err(lost)?;
            serve(&mut conn, connect.heartbeat(), |m| svc.handle(m))
                .await
                .map_err(lost)
        }
        Command::Predict(PredictCmd::Serve {
            k,
            history,
            name,
            connect,
        }) => {
            let mut svc = match &history {
                Some(p) => {
                    let (store, _) = HistoryStore::open(p).map_err(input)?;
                    PredictorService::from_history(store.records(), k).map_err(input)?
                }
                None => PredictorService::new(k).map_err(input)?,
            };
            let mut conn = connect.open().await?;
            conn.hello(ServiceKind::Prediction, &name, &[TOPIC_ACCEPTED])
                .await
                .map_err(lost)?;
            serve(&mut conn, connect.heartbeat(), |m| svc.handle(m))
                .await
                .map_err(lost)
        }
        Command::Predict(PredictCmd::Query { subject, connect }) => {
            let mut conn = connect.open().await?;
            conn.hello(ServiceKind::App, "predict-query", &[]).await.map_err(lost)?;
            let ranked = conn.predict(&subject).await.map_err(runtime)?;
            print_prediction(&ranked, json);
            Ok(())
        }
        Command::Filter(FilterCmd::Run {
            rules,
            scenario,
            subject,
            log,
            name,
            connect,
        }) => {
            let rules = RuleSet::load(&rules).map_err(input)?;
            let events = parse_scenario(&read(&scenario)?).map_err(input)?;
            let sink: Box<dyn Write + Send> = match &log {
                Some(p) => Box::new(File::create(p).map_err(|e| input(format!("{}: {e}", p.display())))?),
                None => Box::new(std::io::stdout()),
            };
            let conn = connect.open().await?;
            let mut app = FilterApp::start(conn, &name, rules, subject, connect.heartbeat())
                .await
                .map_err(lost)?
                .with_sink(sink);
            let decisions = app.run_scenario(&events).await.map_err(lost)?;
            if log.is_some() {
                let blocked = decisions.iter().filter(|d| d.action.as_str() == "block").count();
                println!("{} decisions, {blocked} blocked", decisions.len());
            }
            Ok(())
        }
        _ => unreachable!("handled synchronously"),
    }
}
