//! The five subcommands. Each one resolves and validates its settings
//! first, then does its work, then writes outputs.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use sparse_rnn::analysis::{
    correlation_report, regression_study, write_correlations, write_importances, write_r_squared, write_scatter,
    FeatureTable, ForestConfig, Regressor,
};
use sparse_rnn::graph::{run_planned, ExperimentRecord, GraphFamily, RandStructConfig};
use sparse_rnn::metrics::PROPERTY_NAMES;
use sparse_rnn::pruning::{prune_sweep, write_sweep, PruneTarget, SweepConfig};
use sparse_rnn::reber::{build_dataset, Dataset, DEFAULT_MIN_LEN};
use sparse_rnn::recurrent::{train, write_history, EncodedSplit, TrainConfig};
use sparse_rnn::{CellKind, RecurrentModel, Rng};

use crate::config::Settings;
use crate::{AnalyzeArgs, CliError, Command, GenDataArgs, PruneArgs, RandstructArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Prune(a) => prune(a),
        Command::Randstruct(a) => randstruct(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn require(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg()))
    }
}

fn require_file(path: &Path) -> Result<()> {
    require(path.is_file(), || {
        format!("input file {} does not exist", path.display())
    })
}

fn require_dataset(prefix: &Path) -> Result<()> {
    let (train, test, meta) = Dataset::paths(prefix);
    for p in [train, test, meta] {
        require_file(&p)?;
    }
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes through a temporary sibling and renames it into place, so a failed
/// write never leaves a partial file at `path`.
fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> sparse_rnn::Result<()>) -> Result<()> {
    create_parent(path)?;
    let tmp = with_suffix(path, ".tmp");
    match write(&tmp) {
        Ok(()) => Ok(fs::rename(&tmp, path)?),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}

fn train_config(s: &mut Settings, epochs: usize, batch: usize) -> Result<TrainConfig> {
    let cfg = TrainConfig {
        epochs: s.get("epochs", epochs)?,
        batch_size: s.get("batch", batch)?,
        learning_rate: s.get("lr", TrainConfig::default().learning_rate)?,
    };
    require(cfg.batch_size > 0, || "batch must be positive".into())?;
    require(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite(), || {
        format!("lr must be positive, got {}", cfg.learning_rate)
    })?;
    Ok(cfg)
}

fn load_split(prefix: &Path) -> Result<(EncodedSplit, EncodedSplit)> {
    let data = Dataset::load(prefix)?;
    Ok((EncodedSplit::new(&data.train)?, EncodedSplit::new(&data.test)?))
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut s = Settings::load(
        a.common.config.as_deref(),
        vec![
            ("seed", a.common.seed),
            ("total", a.total),
            ("min_len", a.min_len),
            ("out", a.out),
        ],
    )?;
    let total: usize = s.get("total", 25_000)?;
    let min_len: usize = s.get("min_len", DEFAULT_MIN_LEN)?;
    let seed = s.seed()?;
    let out = s.path("out")?;
    let resolved = s.finish()?;
    require(total >= 2 && total.is_multiple_of(2), || {
        format!("total must be even and >= 2, got {total}")
    })?;
    require(min_len >= 5, || format!("min_len must be >= 5, got {min_len}"))?;

    let data = build_dataset(total, seed, min_len)?;
    let banner = resolved.banner("gen-data");
    let mut meta = data.meta();
    meta.tool = Some(format!("sparse-rnn {}", env!("CARGO_PKG_VERSION")));
    meta.config_hash = Some(resolved.hash("gen-data"));
    create_parent(&out)?;
    let tmp = with_suffix(&out, ".tmp");
    let saved = data.save(&tmp, Some(&banner), &meta);
    let pairs: Vec<(PathBuf, PathBuf)> = {
        let (a, b, c) = Dataset::paths(&tmp);
        let (x, y, z) = Dataset::paths(&out);
        vec![(a, x), (b, y), (c, z)]
    };
    if let Err(e) = saved {
        for (t, _) in &pairs {
            let _ = fs::remove_file(t);
        }
        return Err(e.into());
    }
    for (t, f) in &pairs {
        fs::rename(t, f)?;
    }
    println!(
        "wrote {} training and {} test sequences to {}.{{train,test}}.csv",
        data.train.len(),
        data.test.len(),
        out.display()
    );
    Ok(())
}

fn parse_variant(s: &mut Settings, default: Option<CellKind>) -> Result<Option<CellKind>> {
    match default {
        Some(d) => Ok(Some(s.get("variant", d)?)),
        None => s.optional("variant"),
    }
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut s = Settings::load(
        a.common.config.as_deref(),
        vec![
            ("seed", a.common.seed),
            ("data", a.data),
            ("variant", a.variant),
            ("layers", a.layers),
            ("hidden", a.hidden),
            ("d_emb", a.d_emb),
            ("epochs", a.epochs),
            ("batch", a.batch),
            ("lr", a.lr),
            ("out", a.out),
            ("history", a.history),
        ],
    )?;
    let data = s.path("data")?;
    let kind = parse_variant(&mut s, Some(CellKind::Gru))?.expect("defaulted");
    let layers: usize = s.get("layers", 2)?;
    let hidden: usize = s.get("hidden", 32)?;
    let d_emb: usize = s.get("d_emb", 32)?;
    let cfg = train_config(&mut s, 50, 32)?;
    let seed = s.seed()?;
    let out = s.path("out")?;
    let history_path = if s.is_set("history") {
        s.path("history")?
    } else {
        with_suffix(&out, ".history.csv")
    };
    let resolved = s.finish()?;
    require(layers > 0 && hidden > 0 && d_emb > 0, || {
        "layers, hidden and d_emb must be positive".into()
    })?;
    require_dataset(&data)?;

    let dataset = Dataset::load(&data)?;
    let mut rng = Rng::new(seed);
    let mut model = RecurrentModel::stacked(kind, d_emb, &vec![hidden; layers], &mut rng)?;
    let history = train(&mut model, &dataset, cfg, &mut rng)?;

    let banner = resolved.banner("train");
    write_atomic(&history_path, |p| write_history(p, &history, Some(&banner)))?;
    write_atomic(&out, |p| model.save_with_banner(p, Some(&banner)))?;
    match history.last() {
        Some(r) => println!("{kind}: epoch {} test accuracy {:.4}", r.epoch, r.test_accuracy),
        None => println!("{kind}: saved untrained model"),
    }
    Ok(())
}

fn prune(a: PruneArgs) -> Result<()> {
    let mut s = Settings::load(
        a.common.config.as_deref(),
        vec![
            ("seed", a.common.seed),
            ("data", a.data),
            ("checkpoint", a.checkpoint),
            ("variant", a.variant),
            ("target", a.target),
            ("percents", a.percents),
            ("percent", a.percent),
            ("max_regain_epochs", a.max_regain_epochs),
            ("tolerance", a.tolerance),
            ("per_layer", a.per_layer),
            ("batch", a.batch),
            ("lr", a.lr),
            ("jobs", a.jobs),
            ("out", a.out),
        ],
    )?;
    let defaults = SweepConfig::default();
    let data = s.path("data")?;
    let checkpoint = s.path("checkpoint")?;
    let variant = parse_variant(&mut s, None)?;
    let target: PruneTarget = s.get("target", defaults.target)?;
    let percents = match s.optional::<u32>("percent")? {
        Some(p) => {
            require(!s.is_set("percents"), || {
                "give either percent or percents, not both".into()
            })?;
            vec![p]
        }
        None => s.list("percents", defaults.percents.clone())?,
    };
    let max_regain_epochs: usize = s.get("max_regain_epochs", defaults.max_regain_epochs)?;
    let tolerance: f64 = s.get("tolerance", defaults.tolerance)?;
    let per_layer: bool = s.get("per_layer", defaults.per_layer)?;
    let train_cfg = train_config(&mut s, max_regain_epochs, defaults.train.batch_size)?;
    let seed = s.seed()?;
    let jobs: usize = s.untracked("jobs", 1)?;
    let out = s.path("out")?;
    let resolved = s.finish()?;
    require(!percents.is_empty(), || "no percents given".into())?;
    if let Some(p) = percents.iter().find(|p| !(1..=100).contains(*p)) {
        return Err(config_err(format!("percent {p} outside 1..=100")));
    }
    require(tolerance.is_finite() && tolerance >= 0.0, || {
        format!("tolerance must be >= 0, got {tolerance}")
    })?;
    require(jobs > 0, || "jobs must be positive".into())?;
    require_dataset(&data)?;
    require_file(&checkpoint)?;

    let model = RecurrentModel::load(&checkpoint)?;
    if let Some(v) = variant {
        require(model.kind() == v, || {
            format!("checkpoint holds a {} model, not {v}", model.kind())
        })?;
    }
    let (train_split, test_split) = load_split(&data)?;
    let cfg = SweepConfig {
        target,
        percents,
        max_regain_epochs,
        tolerance,
        per_layer,
        train: train_cfg,
        seed,
        jobs,
    };
    let rows = prune_sweep(&model, &train_split, &test_split, &cfg)?;

    let banner = resolved.banner("prune");
    write_atomic(&out, |p| write_sweep(p, model.kind(), target, &rows, Some(&banner)))?;
    for r in &rows {
        let regain = r.epochs_to_regain.map_or("-".to_string(), |e| e.to_string());
        println!(
            "{:>3}%  zeros {:.3}  acc {:.4} -> {:.4}  regain {regain}",
            r.percent, r.zero_fraction, r.acc_before, r.acc_after
        );
    }
    Ok(())
}

/// Reads the records already in `path`. The first line must be the banner
/// of the same configuration. A torn final line (an interrupted append) is
/// cut off.
fn resume_records(path: &Path, banner: &str) -> Result<BTreeSet<(GraphFamily, u64)>> {
    let mut file = OpenOptions::new().read(true).write(true).open(path)?;
    let mut done = BTreeSet::new();
    let mut good_len = 0u64;
    let mut reader = BufReader::new(&mut file);
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        let n = reader.read_line(&mut line)?;
        if n == 0 {
            break;
        }
        let complete = line.ends_with('\n');
        let text = line.trim_end();
        if first {
            first = false;
            if !complete || text != format!("# {banner}") {
                return Err(config_err(format!(
                    "{} was written with a different configuration; refusing to resume",
                    path.display()
                )));
            }
        } else if !complete {
            break;
        } else {
            let recs = ExperimentRecord::read_jsonl(text.as_bytes())?;
            done.extend(recs.iter().map(|r| (r.family, r.seed)));
        }
        good_len += n as u64;
    }
    drop(reader);
    if file.metadata()?.len() != good_len {
        file.set_len(good_len)?;
    }
    Ok(done)
}

fn randstruct(a: RandstructArgs) -> Result<()> {
    let mut s = Settings::load(
        a.common.config.as_deref(),
        vec![
            ("seed", a.common.seed),
            ("data", a.data),
            ("variant", a.variant),
            ("per_family", a.per_family),
            ("ws_k", a.ws_k),
            ("ws_p", a.ws_p),
            ("ba_m", a.ba_m),
            ("nodes_min", a.nodes_min),
            ("nodes_max", a.nodes_max),
            ("d_emb", a.d_emb),
            ("epochs", a.epochs),
            ("batch", a.batch),
            ("lr", a.lr),
            ("jobs", a.jobs),
            ("chunk", a.chunk),
            ("out", a.out),
        ],
    )?;
    let d = RandStructConfig::default();
    let data = s.path("data")?;
    let kind = parse_variant(&mut s, Some(CellKind::Gru))?.expect("defaulted");
    // The run count stays out of the config hash so a file can be extended.
    let per_family: usize = s.untracked("per_family", d.count_per_family)?;
    let ws_k: usize = s.get("ws_k", d.ws_k)?;
    let ws_p: f64 = s.get("ws_p", d.ws_p)?;
    let ba_m: usize = s.get("ba_m", d.ba_m)?;
    let nodes_min: usize = s.get("nodes_min", d.node_min)?;
    let nodes_max: usize = s.get("nodes_max", d.node_max - 1)?;
    let d_emb: usize = s.get("d_emb", d.d_emb)?;
    let train_cfg = train_config(&mut s, d.train.epochs, d.train.batch_size)?;
    let seed = s.seed()?;
    let jobs: usize = s.untracked("jobs", 1)?;
    let chunk: usize = s.untracked("chunk", jobs)?;
    let out = s.path("out")?;
    let resolved = s.finish()?;
    require(nodes_min <= nodes_max, || {
        format!("nodes_min {nodes_min} exceeds nodes_max {nodes_max}")
    })?;
    require(jobs > 0 && chunk > 0, || "jobs and chunk must be positive".into())?;
    require(ws_k >= 2 && ws_k.is_multiple_of(2), || {
        format!("ws_k must be even and >= 2, got {ws_k}")
    })?;
    require((0.0..=1.0).contains(&ws_p), || {
        format!("ws_p must lie in [0, 1], got {ws_p}")
    })?;
    require(ba_m >= 1, || "ba_m must be >= 1".into())?;
    let cfg = RandStructConfig {
        count_per_family: per_family,
        node_min: nodes_min,
        node_max: nodes_max + 1,
        ws_k,
        ws_p,
        ba_m,
        d_emb,
        train: train_cfg,
        jobs,
    };
    cfg.check().map_err(|e| config_err(e.to_string()))?;
    require_dataset(&data)?;

    let banner = resolved.banner("randstruct");
    let done = if out.exists() {
        resume_records(&out, &banner)?
    } else {
        BTreeSet::new()
    };
    let (train_split, test_split) = load_split(&data)?;
    let todo: Vec<(GraphFamily, u64)> = cfg.plan(seed).into_iter().filter(|r| !done.contains(r)).collect();

    if !out.exists() {
        write_atomic(&out, |p| {
            let mut f = File::create(p)?;
            writeln!(f, "# {banner}")?;
            Ok(f.sync_all()?)
        })?;
    }
    let mut file = OpenOptions::new().append(true).open(&out)?;
    file.seek(SeekFrom::End(0))?;
    let total = done.len() + todo.len();
    let mut finished = done.len();
    for part in todo.chunks(chunk) {
        let records = run_planned(part, kind, &train_split, &test_split, &cfg)?;
        let mut buf = Vec::new();
        ExperimentRecord::write_jsonl(&mut buf, &records)?;
        // One write per chunk; a torn line is dropped on resume.
        file.write_all(&buf)?;
        file.sync_data()?;
        finished += records.len();
        eprintln!("randstruct: {finished}/{total} runs");
    }
    println!("{} records in {} ({} new)", total, out.display(), todo.len());
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut s = Settings::load(
        a.common.config.as_deref(),
        vec![
            ("seed", a.common.seed),
            ("records", a.records),
            ("trees", a.trees),
            ("max_depth", a.max_depth),
            ("min_leaf", a.min_leaf),
            ("jobs", a.jobs),
            ("out", a.out),
        ],
    )?;
    let d = ForestConfig::default();
    let records_path = s.path("records")?;
    let forest = ForestConfig {
        n_trees: s.get("trees", d.n_trees)?,
        max_depth: s.get("max_depth", d.max_depth)?,
        min_samples_leaf: s.get("min_leaf", d.min_samples_leaf)?,
        jobs: s.untracked("jobs", 1)?,
    };
    let seed = s.seed()?;
    let out = s.path("out")?;
    let resolved = s.finish()?;
    require(
        forest.n_trees > 0 && forest.min_samples_leaf > 0 && forest.jobs > 0,
        || "trees, min_leaf and jobs must be positive".into(),
    )?;
    require_file(&records_path)?;

    let records = ExperimentRecord::read_jsonl(BufReader::new(File::open(&records_path)?))?;
    let table = FeatureTable::from_records(&records)?;
    let correlations = correlation_report(&table)?;
    let fits = regression_study(&table, &forest, seed)?;

    let banner = resolved.banner("analyze");
    let b = Some(banner.as_str());
    fs::create_dir_all(&out)?;
    write_atomic(&out.join("correlations.csv"), |p| {
        write_correlations(p, &correlations, b)
    })?;
    write_atomic(&out.join("r_squared.csv"), |p| write_r_squared(p, &fits, b))?;
    for fit in fits.iter().filter(|f| f.regressor == Regressor::RandomForest) {
        let name = format!("importances_{}.csv", fit.subset);
        write_atomic(&out.join(name), |p| write_importances(p, fit, b))?;
    }
    for property in PROPERTY_NAMES {
        let name = format!("scatter_{property}.csv");
        write_atomic(&out.join("scatter").join(name), |p| {
            write_scatter(p, &table, property, b)
        })?;
    }

    println!("{} records", table.len());
    for (name, r) in &correlations {
        println!(
            "  r({name}, test_acc) = {}",
            r.map_or("n/a".to_string(), |v| format!("{v:+.3}"))
        );
    }
    for f in &fits {
        println!("  {} {}: R^2 = {:.4}", f.regressor.as_str(), f.subset, f.r_squared);
    }
    Ok(())
}
