use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use specmatch::diagnostics::{gradient_suite, GRAD_TOLERANCE};
use specmatch::eval::{geodesic_table, pck_curve, pck_svg, report_csv, PairManifest, ReportRow};
use specmatch::fmap::match_features;
use specmatch::net::{compute_features, NetParams};
use specmatch::spectral::{compute_spectra, load_spectra, save_spectra, spectra_cache_path, EigOptions};
use specmatch::synth::{write_dataset, SynthDatasetConfig};
use specmatch::train::{find_cache, train, Dataset, ShapeData, TrainConfig};
use specmatch::workload::{bench_csv, run_bench, BenchConfig};
use specmatch::{load_correspondence, load_mesh, write_atomic, write_correspondence, Error, Mesh};

use crate::config::{
    base_dir, load, require_dir, require_file, resolve, EvalConfig, GradcheckConfig, MatchConfig, PrecomputeConfig,
    TrainRunConfig,
};
use crate::error::{CliError, CliResult, EXIT_NUMERICAL};

/// Flags shared by every verb.
#[derive(Debug, Clone, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

impl Common {
    fn config(&self) -> CliResult<&Path> {
        self.config.as_deref().ok_or_else(|| CliError::config("--config is required"))
    }

    fn out(&self) -> CliResult<&Path> {
        self.out.as_deref().ok_or_else(|| CliError::config("--out is required"))
    }
}

#[derive(Serialize)]
struct RunRecord<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    seed: Option<u64>,
    versions: BTreeMap<&'a str, &'a str>,
}

fn write_run_json<C: Serialize>(out: &Path, command: &str, config: &C, seed: Option<u64>) -> CliResult<()> {
    let mut versions = BTreeMap::new();
    versions.insert("specmatch", specmatch::VERSION);
    versions.insert("specmatch-cli", env!("CARGO_PKG_VERSION"));
    let rec = RunRecord {
        command,
        config,
        seed,
        versions,
    };
    let mut text = serde_json::to_string_pretty(&rec).map_err(Error::from)?;
    text.push('\n');
    write_atomic(&out.join("run.json"), text.as_bytes())?;
    Ok(())
}

fn create_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p).map_err(|e| CliError::Core(Error::io(p, e)))
}

/// File name of the predicted map from `source` onto `target`.
pub fn prediction_path(dir: &Path, source: &str, target: &str) -> PathBuf {
    dir.join(format!("{source}__{target}.txt"))
}

fn load_optional<T: serde::de::DeserializeOwned + Default>(common: &Common) -> CliResult<T> {
    match &common.config {
        Some(p) => load(p),
        None => Ok(T::default()),
    }
}

pub fn precompute(common: &Common) -> CliResult<()> {
    let path = common.config()?;
    let cfg: PrecomputeConfig = load(path)?;
    let out = common.out()?;
    let base = base_dir(path);
    if cfg.k < 2 {
        return Err(CliError::config("k must be at least 2"));
    }
    let mut meshes: Vec<PathBuf> = cfg.meshes.iter().map(|p| resolve(&base, p)).collect();
    for m in &cfg.manifests {
        let m = resolve(&base, m);
        require_file(&m, "manifest")?;
        for p in PairManifest::load(&m)?.mesh_paths() {
            if !meshes.contains(&p) {
                meshes.push(p);
            }
        }
    }
    if meshes.is_empty() {
        return Err(CliError::config("no meshes listed"));
    }
    for m in &meshes {
        require_file(m, "mesh")?;
    }
    create_dir(out)?;
    let (mut recomputed, mut fresh) = (0usize, 0usize);
    let mut failures: Vec<(PathBuf, Error)> = Vec::new();
    for p in &meshes {
        let result = (|| -> specmatch::Result<bool> {
            let mesh = load_mesh(p)?;
            let cache = spectra_cache_path(out, &mesh.name, cfg.k);
            if cache.exists() && load_spectra(&cache, &mesh).is_ok() {
                return Ok(false);
            }
            let t = Instant::now();
            let ops = compute_spectra(&mesh, cfg.k, &EigOptions::default())?;
            save_spectra(&cache, &mesh, &ops)?;
            log::info!("{}: {} eigenpairs in {:.2?}", mesh.name, cfg.k, t.elapsed());
            Ok(true)
        })();
        match result {
            Ok(true) => recomputed += 1,
            Ok(false) => fresh += 1,
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                failures.push((p.clone(), e));
            }
        }
    }
    println!(
        "{} meshes: {recomputed} recomputed, {fresh} up to date, {} failed",
        meshes.len(),
        failures.len()
    );
    write_run_json(out, "precompute", &cfg, None)?;
    match failures.into_iter().next() {
        None => Ok(()),
        Some((p, e)) => {
            let code = CliError::Core(e).exit_code();
            Err(CliError::Failed {
                code,
                msg: format!("spectra failed for {} and possibly others", p.display()),
            })
        }
    }
}

pub fn train_cmd(common: &Common) -> CliResult<()> {
    let path = common.config()?;
    let mut cfg: TrainRunConfig = load(path)?;
    let out = common.out()?;
    let base = base_dir(path);
    cfg.manifest = resolve(&base, &cfg.manifest);
    cfg.cache_dir = resolve(&base, &cfg.cache_dir);
    require_file(&cfg.manifest, "manifest")?;
    require_dir(&cfg.cache_dir, "cache directory")?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    let runs: Vec<(Option<usize>, TrainConfig)> = match &cfg.sweep_p {
        None => vec![(None, cfg.train.clone())],
        Some(ps) if ps.is_empty() => return Err(CliError::config("sweep_p is empty")),
        Some(ps) => ps
            .iter()
            .map(|&p| {
                let mut t = cfg.train.clone();
                t.loss.p_c = p;
                t.loss.p_s = p;
                (Some(p), t)
            })
            .collect(),
    };
    for (_, t) in &runs {
        t.validate().map_err(|e| CliError::config(e.to_string()))?;
    }
    let manifest = PairManifest::load(&cfg.manifest)?;
    let data = Dataset::from_manifest(&manifest, &cfg.cache_dir, cfg.k, &cfg.train.net)?;
    println!("{}", serde_json::to_string_pretty(&cfg).map_err(Error::from)?);
    create_dir(out)?;
    write_run_json(out, "train", &cfg, Some(cfg.train.seed))?;
    for (p, t) in &runs {
        let dir = match p {
            Some(p) => out.join(format!("p{p}")),
            None => out.to_path_buf(),
        };
        create_dir(&dir)?;
        let start = Instant::now();
        let outcome = train(&data, t, Some(&dir))?;
        let last = outcome.log.last();
        println!(
            "{}{} iterations in {:.1?}, final total loss {}",
            p.map(|p| format!("p_c = p_s = {p}: ")).unwrap_or_default(),
            outcome.log.len(),
            start.elapsed(),
            last.map(|r| format!("{:.6}", r.total)).unwrap_or_else(|| "n/a".into())
        );
    }
    Ok(())
}

fn cache_ks(dir: &Path, name: &str) -> Vec<usize> {
    let prefix = format!("{name}.k");
    let mut ks: Vec<usize> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let f = e.file_name().to_string_lossy().into_owned();
            f.strip_prefix(&prefix)?.strip_suffix(".spectra")?.parse().ok()
        })
        .collect();
    ks.sort_unstable();
    ks
}

fn shape_for_match(path: &Path, cache_dir: &Path, k: usize, params: &NetParams) -> CliResult<ShapeData> {
    let mesh: Mesh = load_mesh(path)?;
    let cache = match find_cache(cache_dir, &mesh.name, k) {
        Ok(c) => c,
        Err(Error::MissingCache(p)) => {
            let have = cache_ks(cache_dir, &mesh.name);
            return Err(if have.is_empty() {
                CliError::Core(Error::MissingCache(p))
            } else {
                CliError::Core(Error::ConfigMismatch(format!(
                    "cache for {} has k = {have:?} but the checkpoint needs k = {k}",
                    mesh.name
                )))
            });
        }
        Err(e) => return Err(e.into()),
    };
    let ops = load_spectra(&cache, &mesh)?;
    let ops = if ops.k() > k { ops.truncate(k)? } else { ops };
    Ok(ShapeData::new(mesh, ops, &params.config)?)
}

pub fn match_cmd(common: &Common) -> CliResult<()> {
    let path = common.config()?;
    let cfg: MatchConfig = load(path)?;
    let out = common.out()?;
    let base = base_dir(path);
    let checkpoint = resolve(&base, &cfg.checkpoint);
    let cache_dir = resolve(&base, &cfg.cache_dir);
    require_file(&checkpoint, "checkpoint")?;
    require_dir(&cache_dir, "cache directory")?;
    if !(cfg.alpha > 0.0) {
        return Err(CliError::config("alpha must be positive"));
    }
    let pairs: Vec<(PathBuf, PathBuf)> = match (&cfg.manifest, &cfg.source, &cfg.target) {
        (Some(m), None, None) => {
            let m = resolve(&base, m);
            require_file(&m, "manifest")?;
            PairManifest::load(&m)?
                .pairs
                .into_iter()
                .map(|e| (e.source, e.target))
                .collect()
        }
        (None, Some(s), Some(t)) => {
            let (s, t) = (resolve(&base, s), resolve(&base, t));
            require_file(&s, "source mesh")?;
            require_file(&t, "target mesh")?;
            vec![(s, t)]
        }
        _ => return Err(CliError::config("give either manifest, or both source and target")),
    };
    let (params, meta) = NetParams::load(&checkpoint, None)?;
    let k = match (cfg.k, meta.spectral_k) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Core(Error::ConfigMismatch(format!(
                "k = {a} requested but the checkpoint was trained with k = {b}"
            ))))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => return Err(CliError::config("checkpoint does not record k; set k in the config")),
    };
    let mut shapes: BTreeMap<PathBuf, ShapeData> = BTreeMap::new();
    for (s, t) in &pairs {
        for p in [s, t] {
            if !shapes.contains_key(p) {
                shapes.insert(p.clone(), shape_for_match(p, &cache_dir, k, &params)?);
            }
        }
    }
    create_dir(out)?;
    for (s, t) in &pairs {
        let (x, y) = (&shapes[s], &shapes[t]);
        let t0 = Instant::now();
        let fx = compute_features(&params, &x.hks, &x.ops)?;
        let fy = compute_features(&params, &y.hks, &y.ops)?;
        let feat_ms = t0.elapsed().as_secs_f64() * 1e3;
        let (mut corr, _, timings) = match_features(&fx, &fy, &x.ops, &y.ops, cfg.alpha)?;
        corr.source_name = x.name.clone();
        corr.target_name = y.name.clone();
        write_correspondence(prediction_path(out, &x.name, &y.name), &corr)?;
        println!(
            "{} ({} vertices) -> {} ({} vertices): features {feat_ms:.1} ms, fmap {:.1} ms, nn {:.1} ms",
            x.name,
            x.mesh.n_vertices(),
            y.name,
            y.mesh.n_vertices(),
            timings.fmap_ms,
            timings.nn_ms
        );
    }
    write_run_json(out, "match", &cfg, Some(meta.seed))?;
    Ok(())
}

/// Thresholds of the PCK plot.
fn plot_thresholds() -> Vec<f64> {
    (0..=50).map(|i| i as f64 * 0.005).collect()
}

pub fn eval_cmd(common: &Common) -> CliResult<()> {
    let path = common.config()?;
    let cfg: EvalConfig = load(path)?;
    let out = common.out()?;
    let base = base_dir(path);
    let manifest_path = resolve(&base, &cfg.manifest);
    let predictions = resolve(&base, &cfg.predictions);
    require_file(&manifest_path, "manifest")?;
    require_dir(&predictions, "predictions directory")?;
    let manifest = PairManifest::load(&manifest_path)?;
    if manifest.pairs.is_empty() {
        return Err(CliError::config("manifest lists no pairs"));
    }
    let mut rows = Vec::new();
    let mut curves = Vec::new();
    for e in &manifest.pairs {
        let gt_path = e
            .gt
            .as_ref()
            .ok_or_else(|| CliError::config(format!("pair {} has no ground truth", e.source.display())))?;
        let (src, tgt) = (load_mesh(&e.source)?, load_mesh(&e.target)?);
        let (ns, nt) = (src.n_vertices(), tgt.n_vertices());
        let gt = load_correspondence(gt_path, ns, nt)?;
        let pred = load_correspondence(prediction_path(&predictions, &src.name, &tgt.name), ns, nt)?;
        let table = geodesic_table(&tgt)?;
        let name = format!("{}->{}", src.name, tgt.name);
        let area = tgt.total_area();
        rows.push(ReportRow::evaluate(name.clone(), &pred, &gt, &table, area)?);
        if cfg.svg {
            curves.push((name, pck_curve(&pred, &gt, &table, area, &plot_thresholds())?));
        }
    }
    let csv = report_csv(&rows)?;
    create_dir(out)?;
    write_atomic(&out.join("report.csv"), csv.as_bytes())?;
    if cfg.svg {
        write_atomic(&out.join("pck.svg"), pck_svg(&curves).as_bytes())?;
    }
    write_run_json(out, "eval", &cfg, None)?;
    print!("{csv}");
    Ok(())
}

pub fn bench_cmd(common: &Common) -> CliResult<()> {
    let mut cfg: BenchConfig = load_optional(common)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| CliError::config(e.to_string()))?;
    let out = common.out()?;
    create_dir(out)?;
    let rows = run_bench(&cfg, |r| eprintln!("size {} k {} {}: {:.3}", r.size, r.k, r.op, r.median_ms))?;
    let csv = bench_csv(&rows)?;
    write_atomic(&out.join("bench.csv"), csv.as_bytes())?;
    write_run_json(out, "bench", &cfg, Some(cfg.seed))?;
    print!("{csv}");
    Ok(())
}

pub fn gradcheck_cmd(common: &Common) -> CliResult<()> {
    let mut cfg: GradcheckConfig = load_optional(common)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if cfg.probes == 0 {
        return Err(CliError::config("probes must be positive"));
    }
    let reports = gradient_suite(cfg.probes, cfg.seed)?;
    let mut lines = String::from("pipeline,max_rel_err,tolerance,status\n");
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        lines.push_str(&format!("{},{:.3e},{GRAD_TOLERANCE:e},{status}\n", r.name, r.max_rel_err));
    }
    print!("{lines}");
    if let Some(out) = &common.out {
        create_dir(out)?;
        write_atomic(&out.join("gradcheck.csv"), lines.as_bytes())?;
        write_run_json(out, "gradcheck", &cfg, Some(cfg.seed))?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed {
            code: EXIT_NUMERICAL,
            msg: format!("gradient check failed for {}", failed.join(", ")),
        })
    }
}

pub fn synth_cmd(common: &Common) -> CliResult<()> {
    let mut cfg: SynthDatasetConfig = load_optional(common)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if cfg.train_pairs + cfg.test_pairs == 0 {
        return Err(CliError::config("no pairs requested"));
    }
    let out = common.out()?;
    // generation validates every pair before anything is written
    specmatch::synth::generate_dataset(&SynthDatasetConfig {
        train_pairs: cfg.train_pairs.min(2),
        test_pairs: cfg.test_pairs.min(2),
        ..cfg.clone()
    })
    .map_err(|e| match e {
        Error::InvalidArgument(m) => CliError::config(m),
        other => CliError::Core(other),
    })?;
    create_dir(out)?;
    let (train_m, test_m) = write_dataset(out, &cfg)?;
    write_run_json(out, "synth", &cfg, Some(cfg.seed))?;
    println!("{}\n{}", train_m.display(), test_m.display());
    Ok(())
}
