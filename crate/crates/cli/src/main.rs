//! `landmark`: discover roles, zoom into landmarks, generate planted graphs,
//! evaluate fits, render maps and serve the explorer API.
//!
//! Exit status is 0 on success, 2 for bad input and 3 when the optimizer
//! hits a numeric failure.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use landmark_core::io::{log_line, MapDocument, ModelDocument, LOG_HEADER};
use landmark_core::metrics::{evaluate, EVAL_TSV_HEADER};
use landmark_core::optimizer::IterationRecord;
use landmark_core::pipeline::{self, Outcome};
use landmark_core::synth::{plant_params, sample_graph, PlantedSpec, Structure};
use landmark_core::{AttributedGraph, CMode, Error, Hyperparams, LoadOptions};
use log::info;

#[derive(Parser)]
#[command(name = "landmark", version, about = "Latent role discovery and multi-resolution network maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit K roles and write model.json, map.json, fit_log.tsv and coords.tsv.
    Discover(DiscoverArgs),
    /// Split one landmark of a fitted model into sub-landmarks.
    Zoom(ZoomArgs),
    /// Sample a graph from a planted model.
    Synth(SynthArgs),
    /// Objective terms, homogeneity and sparsity of a fitted model.
    Eval(EvalArgs),
    /// Render a map document as Graphviz DOT.
    Render(RenderArgs),
    /// Serve the explorer HTTP API for one graph.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct GraphArgs {
    /// Edge list: one "src<TAB>dst" per line.
    #[arg(long)]
    edges: PathBuf,
    /// Attribute table with a "node<TAB>name..." header and 0/1 values.
    #[arg(long)]
    attrs: Option<PathBuf>,
    #[arg(long)]
    directed: bool,
    /// Reject duplicate edges and nodes without an attribute row.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CModeArg {
    Unit,
    Mean,
}

/// Hyperparameter overrides; unset flags keep the base value.
#[derive(Args, Clone, Default)]
struct HyperArgs {
    /// Weight of the attribute likelihood [default: 0.5].
    #[arg(long)]
    alpha: Option<f64>,
    /// L1 weight on R [default: 0.2].
    #[arg(long)]
    alpha_r: Option<f64>,
    /// L1 weight on X [default: 0.2].
    #[arg(long)]
    alpha_x: Option<f64>,
    /// Locality weight for zooming [default: 0.002].
    #[arg(long)]
    beta: Option<f64>,
    /// Virtual-node strength: a fixed c, or the mean affiliation per role [default: unit].
    #[arg(long, value_enum)]
    c_mode: Option<CModeArg>,
    /// Strength used by the unit mode [default: 1].
    #[arg(long)]
    c: Option<f64>,
    /// Initialization seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Outer iteration budget [default: 100].
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative improvement below which the fit stops [default: 1e-6].
    #[arg(long)]
    tol: Option<f64>,
    /// Initial normalized step length [default: 1].
    #[arg(long)]
    eta0: Option<f64>,
    /// Backtracked steps per block per outer iteration [default: 3].
    #[arg(long)]
    max_inner: Option<usize>,
}

impl HyperArgs {
    fn apply(&self, base: &Hyperparams) -> Result<Hyperparams> {
        let mut h = base.clone();
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { h.$field = v; })*
            };
        }
        set!(alpha => alpha, alpha_r => alpha_r, alpha_x => alpha_x, beta => beta, seed => seed,
             max_iters => max_outer, tol => tol, eta0 => eta0, max_inner => max_inner);
        let c = self.c.unwrap_or(match base.c_mode {
            CMode::Unit { c } => c,
            CMode::Mean => 1.0,
        });
        h.c_mode = match (self.c_mode, self.c) {
            (Some(CModeArg::Mean), _) => CMode::Mean,
            (Some(CModeArg::Unit), _) | (None, Some(_)) => CMode::Unit { c },
            (None, None) => base.c_mode,
        };
        if h.max_outer == 0 {
            return Err(Error::InvalidParam("--max-iters must be at least 1".into()).into());
        }
        h.validate()?;
        Ok(h)
    }
}

#[derive(Args)]
struct DiscoverArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Number of roles.
    #[arg(long)]
    k: usize,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ZoomArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Parent model document.
    #[arg(long)]
    model: PathBuf,
    /// Parent map document; supplies the landmark ids to keep.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Index of the landmark to split.
    #[arg(long)]
    split_role: usize,
    /// Hyperparameters default to those stored in the parent model.
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_structure)]
    structure: Structure,
    #[arg(long, default_value_t = 300)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 5)]
    l: usize,
    /// Membership of each node in its primary role.
    #[arg(long, default_value_t = 1.0)]
    strength: f64,
    /// Off-role memberships are noise * strength * U[0, 1].
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    /// Expected fraction of linked pairs.
    #[arg(long, default_value_t = 0.05)]
    density: f64,
    #[arg(long)]
    directed: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    model: PathBuf,
    /// Hyperparameters default to those stored in the model.
    #[command(flatten)]
    hyper: HyperArgs,
    /// Summary TSV (header plus one row); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    map: PathBuf,
    /// Roads with a probability below this are left out.
    #[arg(long, default_value_t = 0.05)]
    omega_min: f64,
    /// DOT output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Edge list of the session graph; requests that need a graph get 409
    /// without it.
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    attrs: Option<PathBuf>,
    #[arg(long)]
    directed: bool,
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Built explorer assets served at "/".
    #[arg(long)]
    assets: Option<PathBuf>,
    /// Session defaults for discovery and zoom requests.
    #[command(flatten)]
    hyper: HyperArgs,
}

fn parse_structure(s: &str) -> Result<Structure, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_graph(args: &GraphArgs, alpha: f64) -> Result<AttributedGraph> {
    if alpha > 0.0 && args.attrs.is_none() {
        return Err(Error::InvalidParam(format!(
            "alpha = {alpha} weights the attribute likelihood but no attribute file was given (--attrs, or --alpha 0)"
        ))
        .into());
    }
    let opts = LoadOptions {
        directed: args.directed,
        strict: args.strict,
    };
    let g = AttributedGraph::load(&args.edges, args.attrs.as_deref(), opts)
        .with_context(|| format!("loading {}", args.edges.display()))?;
    info!(
        "graph: {} nodes, {} edges, {} attributes",
        g.n_nodes(),
        g.n_edges(),
        g.n_attrs()
    );
    Ok(g)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn log_progress(rec: &IterationRecord) {
    info!("iter {}/{}: f = {:.6}", rec.iter, rec.max_outer, rec.f);
}

fn write_outcome(out: &Outcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(&dir.join("model.json"), &out.model_doc.to_json()?)?;
    write(&dir.join("map.json"), &out.map_doc.to_json()?)?;
    let mut log = String::from(LOG_HEADER);
    log.push('\n');
    for rec in &out.records {
        log.push_str(&log_line(rec));
        log.push('\n');
    }
    write(&dir.join("fit_log.tsv"), &log)?;
    write(&dir.join("coords.tsv"), &out.map.coords_tsv())?;
    info!(
        "{} iterations ({}), f = {}",
        out.records.len(),
        if out.converged { "converged" } else { "budget reached" },
        out.model_doc.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn discover(args: DiscoverArgs) -> Result<()> {
    let h = args.hyper.apply(&Hyperparams::default())?;
    let g = load_graph(&args.graph, h.alpha)?;
    let out = pipeline::discover(&g, args.k, &h, &mut log_progress)?;
    write_outcome(&out, &args.out_dir)
}

fn zoom(args: ZoomArgs) -> Result<()> {
    let parent = ModelDocument::read(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let h = args.hyper.apply(&parent.hyperparams)?;
    let g = load_graph(&args.graph, h.alpha)?;
    let ids = match &args.map {
        Some(path) => {
            let map = MapDocument::read(path).with_context(|| format!("reading {}", path.display()))?;
            if map.model_ref != parent.reference()? {
                bail!(Error::InvalidParam(format!(
                    "{} was not built from {}",
                    path.display(),
                    args.model.display()
                )));
            }
            Some(map.landmark_ids)
        }
        None => None,
    };
    let out = pipeline::zoom_model(&g, &parent, ids, args.split_role, h.beta, &h, &mut log_progress)?;
    write_outcome(&out, &args.out_dir)
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = PlantedSpec {
        structure: args.structure,
        k: args.k,
        n: args.n,
        l: args.l,
        membership_strength: args.strength,
        noise: args.noise,
        density: args.density,
        directed: args.directed,
        seed: args.seed,
    };
    let m = plant_params(&spec)?;
    let g = sample_graph(&m, args.seed.wrapping_add(1), Default::default())?;
    fs::create_dir_all(&args.out_dir)?;
    g.save(&args.out_dir.join("edges.tsv"), Some(&args.out_dir.join("attrs.tsv")))?;
    let doc = ModelDocument::new(&m, &g, &Hyperparams::default(), Vec::new());
    write(&args.out_dir.join("planted_model.json"), &doc.to_json()?)?;
    write(
        &args.out_dir.join("synth_spec.json"),
        &(serde_json::to_string_pretty(&spec)? + "\n"),
    )?;
    info!("{}: {} nodes, {} edges", args.structure, g.n_nodes(), g.n_edges());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let doc = ModelDocument::read(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let h = args.hyper.apply(&doc.hyperparams)?;
    let g = load_graph(&args.graph, h.alpha)?;
    doc.check_graph(&g)?;
    let report = evaluate(&g, &doc.params()?, &h)?;
    let tsv = format!("{EVAL_TSV_HEADER}\n{}\n", report.tsv_row());
    match &args.out {
        Some(p) => write(p, &tsv)?,
        None => print!("{tsv}"),
    }
    if let Some(p) = &args.json {
        write(p, &(serde_json::to_string_pretty(&report)? + "\n"))?;
    }
    Ok(())
}

fn render(args: RenderArgs) -> Result<()> {
    let doc = MapDocument::read(&args.map).with_context(|| format!("reading {}", args.map.display()))?;
    let dot = doc.to_map()?.to_dot(args.omega_min);
    match &args.out {
        Some(p) => write(p, &dot),
        None => {
            print!("{dot}");
            Ok(())
        }
    }
}

fn serve(args: ServeArgs) -> Result<()> {
    let defaults = args.hyper.apply(&Hyperparams::default())?;
    let graph = match &args.edges {
        Some(edges) => {
            let ga = GraphArgs {
                edges: edges.clone(),
                attrs: args.attrs.clone(),
                directed: args.directed,
                strict: args.strict,
            };
            Some(load_graph(&ga, 0.0)?)
        }
        None => None,
    };
    let config = landmark_service::Config {
        graph,
        defaults,
        assets: args.assets,
    };
    let addr = SocketAddr::new(args.host, args.port);
    tokio::runtime::Runtime::new()?.block_on(landmark_service::serve(config, addr))?;
    Ok(())
}

/// 3 for numeric failures, 2 for everything else (bad flags, unreadable or
/// inconsistent inputs).
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if !e.is_input_error() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Discover(a) => discover(a),
        Command::Zoom(a) => zoom(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
