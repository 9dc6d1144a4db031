//! Batch commands of the `shapesearch` binary.
//!
//! Every command returns the text it prints on standard output; progress
//! and diagnostics go to standard error. Usage errors map to exit status 2,
//! runtime errors to 1.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use shapesearch::mesh::{load_mesh_dir, load_obj, normalize_mesh, save_obj, toy_corpus, CameraRig};
use shapesearch::net::{load_checkpoint, save_checkpoint, NetworkParams};
use shapesearch::render::{render_views, Image, ViewConfig};
use shapesearch::retrieval::{
    build_index, load_index, query, rank_queries, run_experiment, save_index, topk_accuracy,
    DescriptorIndex, ExperimentSpec,
};
use shapesearch::synth::{generate_dataset, DatasetManifest};
use shapesearch::train::{train, write_stats_log, TrainConfig, TrainingData};

#[derive(Parser, Debug)]
#[command(name = "shapesearch", version, about = "Image-to-mesh shape retrieval")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a toy mesh corpus as OBJ files plus ids.txt.
    GenShapes {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Render the descriptor views of one mesh as PNGs.
    RenderViews {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12, value_parser = view_count)]
        views: usize,
        #[arg(long, default_value_t = 128)]
        res: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Render a labelled colour-image dataset and its manifest.
    GenData {
        #[arg(long)]
        meshes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        per_object: usize,
        #[arg(long)]
        mix: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Train a network; writes the checkpoint and `<out>.stats.tsv`.
    Train {
        /// `key=value` training configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset manifest (overrides `data` in the config).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Seed of the validation split (overrides `val_seed`).
        #[arg(long)]
        val: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Mesh directory (overrides `meshes`).
        #[arg(long)]
        meshes: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Embed every mesh in a directory into an index file.
    BuildIndex {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        meshes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 12, value_parser = view_count)]
        views: usize,
        #[arg(long, default_value_t = 128)]
        res: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
    },
    /// Print the K best matches for one image: `rank<TAB>object_id<TAB>score`.
    Query {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 5)]
        topk: usize,
    },
    /// Top-k accuracy of every manifest image against an index.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
        topk: Vec<usize>,
    },
    /// Run a multi-seed experiment and write its result tables.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn view_count(s: &str) -> Result<usize, String> {
    match s {
        "12" | "20" | "42" => Ok(s.parse().expect("literal")),
        _ => Err(format!("{s} is not one of 12, 20, 42")),
    }
}

#[derive(Debug)]
pub enum Failure {
    /// Rejected by the argument parser, including `--help` and `--version`.
    Parse(clap::Error),
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Parse(e) => e.exit_code() as u8,
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    /// The single-line message printed after `error: `.
    pub fn message(&self) -> String {
        match self {
            Failure::Parse(e) => e.to_string(),
            Failure::Usage(m) => m.clone(),
            Failure::Runtime(m) => m.replace('\n', " "),
        }
    }
}

impl<E: Into<shapesearch::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into().to_string())
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn runtime(msg: impl Into<String>) -> Failure {
    Failure::Runtime(msg.into())
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| runtime(format!("{}: {e}", path.display()))
}

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("file not found: {}", path.display())))
    }
}

fn require_dir(path: &Path) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("directory not found: {}", path.display())))
    }
}

fn load_meshes(dir: &Path) -> CliResult<Vec<shapesearch::Mesh>> {
    require_dir(dir)?;
    let meshes = load_mesh_dir(dir)?;
    if meshes.is_empty() {
        return Err(runtime(format!("no .obj files in {}", dir.display())));
    }
    Ok(meshes)
}

fn load_params(path: &Path) -> CliResult<NetworkParams<f32>> {
    require_file(path)?;
    Ok(load_checkpoint(path)?.params)
}

fn load_index_file(path: &Path) -> CliResult<DescriptorIndex> {
    require_file(path)?;
    Ok(load_index(path)?)
}

fn gen_shapes(out: &Path, count: usize, seed: u64) -> CliResult {
    if count == 0 {
        return Err(usage("--count must be positive"));
    }
    std::fs::create_dir_all(out).map_err(io_at(out))?;
    let corpus = toy_corpus(count, seed);
    let mut ids = String::new();
    for m in &corpus {
        save_obj(m, out.join(format!("{}.obj", m.name)))?;
        let _ = writeln!(ids, "{}", m.name);
    }
    let path = out.join("ids.txt");
    std::fs::write(&path, ids).map_err(io_at(&path))?;
    eprintln!("wrote {count} meshes to {}", out.display());
    Ok(())
}

fn view_config(res: usize, size: usize) -> CliResult<ViewConfig> {
    if res == 0 || size == 0 {
        return Err(usage("--res and --size must be positive"));
    }
    Ok(ViewConfig {
        render_resolution: res,
        ..ViewConfig::with_output_size(size)
    })
}

fn render_views_cmd(mesh: &Path, out: &Path, views: usize, res: usize, size: usize) -> CliResult {
    require_file(mesh)?;
    let cfg = view_config(res, size)?;
    let m = normalize_mesh(&load_obj(mesh)?)?;
    let rig = CameraRig::with_view_count(views, CameraRig::DEFAULT_RADIUS)?;
    std::fs::create_dir_all(out).map_err(io_at(out))?;
    for (i, img) in render_views(&m, &rig, &cfg)?.iter().enumerate() {
        img.save_png(out.join(format!("view_{i:02}.png")))?;
    }
    eprintln!("wrote {views} views to {}", out.display());
    Ok(())
}

fn gen_data(meshes: &Path, out: &Path, per_object: usize, mix: f64, seed: u64, size: usize) -> CliResult<String> {
    let meshes = load_meshes(meshes)?;
    if per_object < 2 {
        return Err(usage("--per-object must be at least 2"));
    }
    if !(0.0..=1.0).contains(&mix) {
        return Err(usage("--mix must be in [0, 1]"));
    }
    let manifest = generate_dataset(&meshes, per_object, mix, seed, size, out)?;
    eprintln!("wrote {} images for {} objects", manifest.len(), meshes.len());
    Ok(format!("{}\n", out.join(shapesearch::synth::MANIFEST_FILE).display()))
}

/// Config-relative paths resolve against the config file's directory.
fn resolve_against(base: Option<&Path>, p: PathBuf) -> PathBuf {
    match base {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p,
    }
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    config: Option<&Path>,
    data: Option<PathBuf>,
    val: Option<u64>,
    out: &Path,
    meshes: Option<PathBuf>,
    seed: Option<u64>,
    epochs: Option<usize>,
    lr: Option<f64>,
) -> CliResult {
    let mut cfg = match config {
        Some(path) => {
            require_file(path)?;
            let text = std::fs::read_to_string(path).map_err(io_at(path))?;
            let mut cfg = TrainConfig::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let base = path.parent();
            cfg.data = cfg.data.map(|p| resolve_against(base, p));
            cfg.meshes = cfg.meshes.map(|p| resolve_against(base, p));
            cfg
        }
        None => TrainConfig::default(),
    };
    cfg.data = data.or(cfg.data);
    cfg.meshes = meshes.or(cfg.meshes);
    if let Some(v) = val {
        cfg.val_seed = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = lr {
        cfg.lr = lr;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let manifest_path = cfg.data.clone().ok_or_else(|| usage("no dataset: pass --data or set data in the config"))?;
    let mesh_dir = cfg.meshes.clone().ok_or_else(|| usage("no meshes: pass --meshes or set meshes in the config"))?;
    require_file(&manifest_path)?;
    let meshes = load_meshes(&mesh_dir)?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let data = TrainingData::load(&meshes, &manifest, &cfg)?;
    eprintln!(
        "training on {} objects, {} images ({} held out for validation)",
        data.object_count(),
        data.images.len(),
        data.val_images.len()
    );
    let outcome = train(&cfg, &data, |e| eprintln!("epoch {}", e.log_line()))?;
    save_checkpoint(out, &outcome.best, Some(&outcome.best_state))?;
    write_stats_log(stats_path(out), &outcome.stats)?;
    eprintln!("best epoch {} written to {}", outcome.best_epoch, out.display());
    Ok(())
}

fn stats_path(ckpt: &Path) -> PathBuf {
    let mut s = ckpt.as_os_str().to_owned();
    s.push(".stats.tsv");
    PathBuf::from(s)
}

fn build_index_cmd(ckpt: &Path, meshes: &Path, out: &Path, views: usize, res: usize, size: usize) -> CliResult {
    let params = load_params(ckpt)?;
    let meshes = load_meshes(meshes)?;
    let cfg = view_config(res, size)?;
    let rig = CameraRig::with_view_count(views, CameraRig::DEFAULT_RADIUS)?;
    let index = build_index(&params, &meshes, &rig, &cfg)?;
    save_index(out, &index)?;
    eprintln!("indexed {} meshes", index.len());
    Ok(())
}

fn query_cmd(ckpt: &Path, index: &Path, image: &Path, k: usize) -> CliResult<String> {
    let params = load_params(ckpt)?;
    let index = load_index_file(index)?;
    if k == 0 || k > index.len() {
        return Err(usage(format!("--topk must be in 1..={}, got {k}", index.len())));
    }
    require_file(image)?;
    let img = Image::load_png(image)?.to_rgb();
    let result = query(&index, &params, &img, k)?;
    let mut out = String::new();
    for (rank, (id, score)) in result.ranked.iter().enumerate() {
        let _ = writeln!(out, "{}\t{id}\t{score:.6}", rank + 1);
    }
    Ok(out)
}

fn eval_cmd(ckpt: &Path, index: &Path, manifest: &Path, ks: &[usize]) -> CliResult<String> {
    let params = load_params(ckpt)?;
    let index = load_index_file(index)?;
    if ks.is_empty() || ks.iter().any(|&k| k == 0 || k > index.len()) {
        return Err(usage(format!("every --topk value must be in 1..={}", index.len())));
    }
    require_file(manifest)?;
    let manifest = DatasetManifest::load(manifest)?;
    let mut queries = Vec::with_capacity(manifest.len());
    let mut truth = BTreeMap::new();
    for (i, e) in manifest.entries.iter().enumerate() {
        if index.get(&e.object_id).is_none() {
            return Err(runtime(format!("object {:?} from the manifest is not in the index", e.object_id)));
        }
        let qid = e.path.display().to_string();
        queries.push((qid.clone(), manifest.load_image(i)?.to_rgb()));
        truth.insert(qid, e.object_id.clone());
    }
    let results = rank_queries(&index, &params, &queries)?;
    let mut out = String::from("k\taccuracy\n");
    for &k in ks {
        let _ = writeln!(out, "{k}\t{:.4}", topk_accuracy(&results, &truth, k)?);
    }
    Ok(out)
}

fn experiment_cmd(spec: &Path, out: &Path) -> CliResult<String> {
    require_file(spec)?;
    let text = std::fs::read_to_string(spec).map_err(io_at(spec))?;
    let spec = ExperimentSpec::parse(&text).map_err(|e| usage(format!("{}: {e}", spec.display())))?;
    let table = run_experiment(&spec, |line| eprintln!("{line}"))?;
    table.write(out).map_err(io_at(out))?;
    Ok(table.summary_tsv())
}

/// Parses `args` (program name first) and runs the command, returning its
/// standard output.
pub fn run<I, T>(args: I) -> CliResult<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(Failure::Parse)?;
    match cli.threads {
        Some(0) => Err(usage("--threads must be positive")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| runtime(e.to_string()))?
            .install(|| dispatch(cli.command)),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> CliResult<String> {
    let none = |r: CliResult| r.map(|()| String::new());
    match command {
        Command::GenShapes { out, count, seed } => none(gen_shapes(&out, count, seed)),
        Command::RenderViews { mesh, out, views, res, size } => none(render_views_cmd(&mesh, &out, views, res, size)),
        Command::GenData { meshes, out, per_object, mix, seed, size } => {
            gen_data(&meshes, &out, per_object, mix, seed, size)
        }
        Command::Train { config, data, val, out, meshes, seed, epochs, lr } => {
            none(train_cmd(config.as_deref(), data, val, &out, meshes, seed, epochs, lr))
        }
        Command::BuildIndex { ckpt, meshes, out, views, res, size } => {
            none(build_index_cmd(&ckpt, &meshes, &out, views, res, size))
        }
        Command::Query { ckpt, index, image, topk } => query_cmd(&ckpt, &index, &image, topk),
        Command::Eval { ckpt, index, manifest, topk } => eval_cmd(&ckpt, &index, &manifest, &topk),
        Command::Experiment { spec, out } => experiment_cmd(&spec, &out),
    }
}

#[cfg(test)]
mod tests;
