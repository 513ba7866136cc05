//! `semchan` — generate, analyze, fit, and validate semantic channel data.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input
//! (validation or parse errors, including malformed library files).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use semchan_core::analyzer::{analyze_pdp, DbscanParams, DepthTable};
use semchan_core::behavior::BehaviorLibrary;
use semchan_core::error::Error;
use semchan_core::event::{EventMatrices, EventScript};
use semchan_core::files::{load_json, load_pdp, save_json, save_pdp, write_cir};
use semchan_core::fitting::{
    behavior_observations, fit_behavior_profile, fit_event_matrices, fit_status_library,
    observations_from_analysis, observations_from_realization,
};
use semchan_core::generator::{generate, GeneratorConfig};
use semchan_core::semantic::{assemble_cir, pdp_of, BehaviorKind, ChannelRealization};
use semchan_core::status::{StatusLibrary, DEFAULT_WAVELENGTH_M};

/// Directory searched for library overrides when no explicit path is given.
const LIB_DIR_ENV: &str = "SEMCHAN_LIB_DIR";

#[derive(Parser)]
#[command(name = "semchan", version, about = "Semantic channel model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a channel realization from an event script.
    Generate(GenerateArgs),
    /// Threshold, cluster, and label a PDP matrix.
    Analyze(AnalyzeArgs),
    /// Recover model libraries from a realization or an analysis.
    Fit(FitArgs),
    /// Validate a library, script, or data file.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct LibArgs {
    /// Status library JSON (overrides SEMCHAN_LIB_DIR and the built-in table).
    #[arg(long)]
    status_lib: Option<PathBuf>,
    /// Behavior library JSON.
    #[arg(long)]
    behavior_lib: Option<PathBuf>,
    /// Event matrices JSON.
    #[arg(long)]
    event_lib: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Event script JSON.
    #[arg(long)]
    script: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    delay_bin_ns: f64,
    #[arg(long, default_value_t = 50.0)]
    d_max_m: f64,
    #[arg(long, default_value_t = 100.0)]
    snapshot_rate_hz: f64,
    /// Halve echo distances in the path-loss conversion (mono-static reading).
    #[arg(long)]
    two_way: bool,
    /// Also export the CIR tap list.
    #[arg(long)]
    emit_cir: bool,
    #[command(flatten)]
    libs: LibArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// PDP matrix text file.
    #[arg(long)]
    pdp: PathBuf,
    /// Output JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Fixed noise floor in dB; omitted means automatic estimation.
    #[arg(long)]
    noise_floor_db: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    eps: f64,
    #[arg(long, default_value_t = 3)]
    min_pts: usize,
    #[arg(long, default_value_t = 1.0)]
    delay_weight: f64,
    #[arg(long, default_value_t = 0.25)]
    power_weight: f64,
    /// Depth table JSON for label binding.
    #[arg(long)]
    depth_table: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Realization JSON (ground-truth clusters).
    #[arg(long, conflicts_with = "analysis")]
    realization: Option<PathBuf>,
    /// Analysis JSON produced by `semchan analyze`.
    #[arg(long)]
    analysis: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 30)]
    min_samples: usize,
    #[arg(long, default_value_t = DEFAULT_WAVELENGTH_M)]
    wavelength_m: f64,
    #[arg(long)]
    two_way: bool,
    /// Per-snapshot delay offset used when classifying centroid motion, ns.
    #[arg(long, default_value_t = 1.0)]
    offset_ns: f64,
}

#[derive(Copy, Clone, ValueEnum)]
enum FileKind {
    Status,
    Behavior,
    Event,
    Script,
    Pdp,
    Realization,
}

#[derive(Args)]
struct ValidateArgs {
    /// What the file is supposed to contain.
    #[arg(long, value_enum)]
    kind: FileKind,
    /// File to check.
    path: PathBuf,
}

/// Provenance record written next to every generate/fit output set.
#[derive(Serialize)]
struct RunManifest {
    tool_version: &'static str,
    created_unix_s: u64,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn manifest(
    seed: Option<u64>,
    inputs: &[(&str, &Path)],
    outputs: &[(&str, &Path)],
) -> Result<RunManifest, Error> {
    let digest_all = |pairs: &[(&str, &Path)]| -> Result<BTreeMap<String, String>, Error> {
        pairs
            .iter()
            .map(|(name, path)| Ok((name.to_string(), sha256_file(path)?)))
            .collect()
    };
    Ok(RunManifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        created_unix_s: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        seed,
        inputs: digest_all(inputs)?,
        outputs: digest_all(outputs)?,
    })
}

fn in_lib_dir(name: &str) -> Option<PathBuf> {
    std::env::var_os(LIB_DIR_ENV).map(|dir| Path::new(&dir).join(name))
}

fn load_with_context<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Error> {
    load_json(path).map_err(|e| match e {
        Error::Json(e) => Error::Validation(format!("{}: {e}", path.display())),
        Error::Io(e) => Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        )),
        other => other,
    })
}

fn resolve_status(explicit: &Option<PathBuf>) -> Result<StatusLibrary, Error> {
    let path = explicit.clone().or_else(|| in_lib_dir("status_library.json"));
    match path {
        Some(p) => {
            let lib: StatusLibrary = load_with_context(&p)?;
            lib.validate()?;
            Ok(lib)
        }
        None => Ok(StatusLibrary::default_table().clone()),
    }
}

fn resolve_behavior(explicit: &Option<PathBuf>) -> Result<BehaviorLibrary, Error> {
    let path = explicit.clone().or_else(|| in_lib_dir("behavior_library.json"));
    match path {
        Some(p) => {
            let mut lib: BehaviorLibrary = load_with_context(&p)?;
            lib.validate_and_normalize()?;
            Ok(lib)
        }
        None => Ok(BehaviorLibrary::default_table().clone()),
    }
}

fn resolve_event(explicit: &Option<PathBuf>) -> Result<EventMatrices, Error> {
    let path = explicit.clone().or_else(|| in_lib_dir("event_matrices.json"));
    match path {
        Some(p) => {
            let m: EventMatrices = load_with_context(&p)?;
            m.validate()?;
            Ok(m)
        }
        None => Ok(EventMatrices::default_table().clone()),
    }
}

fn run_generate(args: &GenerateArgs) -> Result<(), Error> {
    let script: EventScript = load_with_context(&args.script)?;
    let status = resolve_status(&args.libs.status_lib)?;
    let behavior = resolve_behavior(&args.libs.behavior_lib)?;
    let event = resolve_event(&args.libs.event_lib)?;
    let cfg = GeneratorConfig {
        delay_bin_ns: args.delay_bin_ns,
        d_max_m: args.d_max_m,
        snapshot_rate_hz: args.snapshot_rate_hz,
        two_way_pathloss: args.two_way,
        seed: script.seed.unwrap_or(args.seed),
    };
    let realization = generate(&script, &cfg, &status, &behavior, &event)?;
    let grid = cfg.delay_grid()?;
    let pdp: Vec<Vec<f64>> = realization
        .snapshots
        .iter()
        .map(|s| Ok(pdp_of(&assemble_cir(s, &grid)?)))
        .collect::<Result<_, Error>>()?;

    std::fs::create_dir_all(&args.out_dir)?;
    let realization_path = args.out_dir.join("realization.json");
    let pdp_path = args.out_dir.join("pdp.txt");
    save_json(&realization_path, &realization)?;
    save_pdp(&pdp_path, &pdp, cfg.delay_bin_ns)?;
    let mut outputs: Vec<(&str, &Path)> =
        vec![("realization.json", &realization_path), ("pdp.txt", &pdp_path)];
    let cir_path = args.out_dir.join("cir.txt");
    if args.emit_cir {
        let mut w = std::io::BufWriter::new(std::fs::File::create(&cir_path)?);
        write_cir(&mut w, &realization, &grid)?;
        outputs.push(("cir.txt", &cir_path));
    }
    let manifest = manifest(Some(cfg.seed), &[("script", args.script.as_path())], &outputs)?;
    save_json(args.out_dir.join("manifest.json"), &manifest)?;
    println!(
        "generated {} snapshots ({} multipaths) into {}",
        realization.snapshots.len(),
        realization.snapshots.iter().map(|s| s.mpc_count()).sum::<usize>(),
        args.out_dir.display()
    );
    Ok(())
}

fn run_analyze(args: &AnalyzeArgs) -> Result<(), Error> {
    let (pdp, delay_bin_ns) = load_pdp(&args.pdp)?;
    let params = DbscanParams {
        eps: args.eps,
        min_pts: args.min_pts,
        delay_weight: args.delay_weight,
        power_weight: args.power_weight,
    };
    let depth_table: Option<DepthTable> = match &args.depth_table {
        Some(p) => {
            let t: DepthTable = load_with_context(p)?;
            t.validate(f64::MAX)?;
            Some(t)
        }
        None => None,
    };
    let analyses = analyze_pdp(&pdp, delay_bin_ns, args.noise_floor_db, &params, depth_table.as_ref())?;
    let clusters: usize = analyses.iter().map(|a| a.clusters.len()).sum();
    let rmsds: Vec<f64> = analyses.iter().filter_map(|a| a.rmsds_ns).collect();
    save_json(&args.out, &analyses)?;
    println!(
        "analyzed {} snapshots: {} clusters, mean RMSDS {:.3} ns",
        analyses.len(),
        clusters,
        rmsds.iter().sum::<f64>() / rmsds.len().max(1) as f64
    );
    Ok(())
}

fn run_fit(args: &FitArgs) -> Result<(), Error> {
    std::fs::create_dir_all(&args.out_dir)?;
    let mut inputs: Vec<(&str, &Path)> = Vec::new();
    let observations;
    let mut realization: Option<ChannelRealization> = None;
    match (&args.realization, &args.analysis) {
        (Some(path), _) => {
            let r: ChannelRealization = load_with_context(path)?;
            observations = observations_from_realization(&r);
            realization = Some(r);
            inputs.push(("realization", path.as_path()));
        }
        (None, Some(path)) => {
            let analyses: Vec<semchan_core::analyzer::SnapshotAnalysis> = load_with_context(path)?;
            observations = observations_from_analysis(&analyses, args.wavelength_m, args.two_way)?;
            inputs.push(("analysis", path.as_path()));
        }
        (None, None) => {
            return Err(Error::Validation(
                "fit needs --realization or --analysis".into(),
            ))
        }
    }

    let fit = fit_status_library(&observations, args.wavelength_m, args.two_way, args.min_samples)?;
    for skip in &fit.skipped {
        eprintln!(
            "warning: label {:02} ({}) skipped: {} clusters / {} members below the {}-sample floor",
            skip.label.id(),
            skip.label.name(),
            skip.clusters_seen,
            skip.satellites_seen,
            args.min_samples
        );
    }
    let status_path = args.out_dir.join("status_library.json");
    save_json(&status_path, &fit.library)?;
    let mut outputs: Vec<PathBuf> = vec![status_path];

    if let Some(r) = &realization {
        let by_kind = behavior_observations(r, |k| match k {
            BehaviorKind::StraightDriving => r.delay_bin_ns,
            _ => args.offset_ns,
        })?;
        let mut profiles = Vec::new();
        for (kind, obs) in &by_kind {
            match fit_behavior_profile(*kind, obs) {
                Ok(fitted) => profiles.push(fitted.profile),
                Err(e) => eprintln!("warning: behavior {kind:?} not fitted: {e}"),
            }
        }
        if !profiles.is_empty() {
            let path = args.out_dir.join("behavior_library.json");
            save_json(&path, &BehaviorLibrary { profiles })?;
            outputs.push(path);
        }
        let est = fit_event_matrices(r)?;
        let path = args.out_dir.join("event_matrices.json");
        save_json(&path, &(est.bcm, est.scm))?;
        outputs.push(path);
    }

    let output_pairs: Vec<(&str, &Path)> = outputs
        .iter()
        .map(|p| (p.file_name().unwrap().to_str().unwrap(), p.as_path()))
        .collect();
    let manifest = manifest(None, &inputs, &output_pairs)?;
    save_json(args.out_dir.join("manifest.json"), &manifest)?;
    println!(
        "fitted {} status rows ({} skipped) into {}",
        fit.library.profiles.len(),
        fit.skipped.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn run_validate(args: &ValidateArgs) -> Result<(), Error> {
    match args.kind {
        FileKind::Status => {
            let lib: StatusLibrary = load_with_context(&args.path)?;
            lib.validate()?;
            println!("ok: status library with {} rows", lib.profiles.len());
        }
        FileKind::Behavior => {
            let mut lib: BehaviorLibrary = load_with_context(&args.path)?;
            lib.validate_and_normalize()?;
            println!("ok: behavior library with {} profiles", lib.profiles.len());
        }
        FileKind::Event => {
            let m: EventMatrices = load_with_context(&args.path)?;
            m.validate()?;
            println!("ok: event matrices");
        }
        FileKind::Script => {
            let s: EventScript = load_with_context(&args.path)?;
            s.validate()?;
            println!("ok: script with {} tokens", s.tokens.len());
        }
        FileKind::Pdp => {
            let (pdp, bin) = load_pdp(&args.path)?;
            println!("ok: PDP with {} snapshots, {} ns bins", pdp.len(), bin);
        }
        FileKind::Realization => {
            let r: ChannelRealization = load_with_context(&args.path)?;
            println!("ok: realization with {} snapshots", r.snapshots.len());
        }
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Validation(_)
        | Error::Parse { .. }
        | Error::InvalidParameter { .. }
        | Error::MissingLabel(_)
        | Error::EmptyInput(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Analyze(args) => run_analyze(args),
        Command::Fit(args) => run_fit(args),
        Command::Validate(args) => run_validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
