use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use greedypose::harness::{ablation_csv, ablation_suite, scaling_benchmark, validation_set, AblationRow, WallClock};
use greedypose::io::{AssociationSpec, DetectionsFile, GroundTruthFile, PosesFile};
use greedypose::oracle::{exhaustive_assign, greedy_assign, GreedySolution, OracleInstance, OracleSolution};
use greedypose::{assemble, assemble_traced, generate_scene, pckh, render_detections, ConfigFile, NoiseConfig, PckhReport};
use rayon::prelude::*;
use serde::Serialize;

use crate::{AblationArgs, AssignArgs, BenchArgs, EvalArgs, OracleArgs, SynthArgs};

/// A problem with user-supplied input that is not a library error.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

/// 2 for invalid input, 3 for an oracle budget refusal, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<InputError>() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<greedypose::Error>() {
            return match err {
                greedypose::Error::BudgetExceeded(_) => 3,
                greedypose::Error::Io(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(output: Option<&Path>, contents: &str) -> Result<()> {
    match output {
        Some(p) => write_atomic(p, contents),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::from_json(&read(p)?).with_context(|| p.display().to_string()),
        None => Ok(ConfigFile::default()),
    }
}

fn load_noise(path: Option<&Path>) -> Result<NoiseConfig> {
    let noise = match path {
        Some(p) => serde_json::from_str(&read(p)?)
            .map_err(greedypose::Error::from)
            .with_context(|| p.display().to_string())?,
        None => NoiseConfig::default(),
    };
    noise.validate()?;
    Ok(noise)
}

fn trace_path(base: &Path) -> PathBuf {
    let stem = base.file_stem().unwrap_or_default().to_string_lossy();
    let stem = stem.strip_suffix(".poses").unwrap_or(&stem);
    base.with_file_name(format!("{stem}.trace.json"))
}

/// Runs one detections file; returns the poses document and, if requested,
/// the trace document.
fn assign_one(path: &Path, base: &ConfigFile, seed: Option<u64>, trace: bool) -> Result<(String, Option<String>)> {
    let file = DetectionsFile::from_json(&read(path)?).with_context(|| path.display().to_string())?;
    let (dets, assoc) = file.load(&base.tables.anthropometry).with_context(|| path.display().to_string())?;
    let mut config = base.config.clone();
    if let Some(s) = seed.or(file.seed) {
        config.rng_seed = s;
    }
    let result = if trace {
        assemble_traced(&dets, assoc.as_ref(), &config, &base.tables)?
    } else {
        assemble(&dets, assoc.as_ref(), &config, &base.tables)?
    };
    let poses = to_json(&PosesFile::new(&result, &config))?;
    let trace = match &result.trace {
        Some(t) => Some(to_json(t)?),
        None => None,
    };
    Ok((poses, trace))
}

pub fn assign(args: &AssignArgs) -> Result<()> {
    let base = load_config(args.config.as_deref())?;
    if !args.input.is_dir() {
        let (poses, trace) = assign_one(&args.input, &base, args.seed, args.trace)?;
        if let Some(t) = trace {
            let anchor = args.output.as_deref().unwrap_or(&args.input);
            write_atomic(&trace_path(anchor), &t)?;
        }
        return emit(args.output.as_deref(), &poses);
    }

    let Some(out_dir) = args.output.as_deref() else {
        bail!(input_error("a directory input needs --output <dir>"));
    };
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut inputs: Vec<PathBuf> = fs::read_dir(&args.input)
        .map_err(|e| input_error(format!("{}: {e}", args.input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    inputs.sort();

    let failures: Vec<anyhow::Error> = inputs
        .par_iter()
        .filter_map(|path| {
            let run = || -> Result<()> {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let target = out_dir.join(format!("{stem}.poses.json"));
                let (poses, trace) = assign_one(path, &base, args.seed, args.trace)?;
                if let Some(t) = trace {
                    write_atomic(&trace_path(&target), &t)?;
                }
                write_atomic(&target, &poses)
            };
            run().err()
        })
        .collect();
    for e in &failures[failures.len().min(1)..] {
        eprintln!("error: {e:#}");
    }
    match failures.into_iter().next() {
        Some(first) => Err(first),
        None => Ok(()),
    }
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let noise = load_noise(args.noise.as_deref())?;
    let gt = generate_scene(args.people, &noise, args.seed)?;
    let dets = render_detections(&gt, &noise, args.seed)?;
    let file = DetectionsFile {
        image: gt.image.clone(),
        candidates: dets.iter().cloned().collect(),
        associations: AssociationSpec::Geometric {
            head_length: gt.nominal_head_length(&noise),
            pairwise_sigma: noise.pairwise_sigma,
        },
        seed: Some(args.seed),
    };
    write_atomic(&args.out_detections, &to_json(&file)?)?;
    write_atomic(&args.out_gt, &to_json(&GroundTruthFile::new(&gt, args.seed))?)
}

#[derive(Serialize)]
struct EvalOutput {
    seed: u64,
    prediction_seed: u64,
    report: PckhReport,
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let pred = PosesFile::from_json(&read(&args.pred)?).with_context(|| args.pred.display().to_string())?;
    let gt = GroundTruthFile::from_json(&read(&args.gt)?).with_context(|| args.gt.display().to_string())?;
    let report = pckh(&pred.to_result()?.clusters, &gt.scene(), args.tau)?;
    emit(
        None,
        &to_json(&EvalOutput {
            seed: gt.seed,
            prediction_seed: pred.config.rng_seed,
            report,
        })?,
    )
}

#[derive(Serialize)]
struct OracleOutput {
    seed: Option<u64>,
    oracle: OracleSolution,
    greedy: GreedySolution,
    identical: bool,
}

pub fn oracle(args: &OracleArgs) -> Result<()> {
    let file = DetectionsFile::from_json(&read(&args.input)?).with_context(|| args.input.display().to_string())?;
    let (dets, assoc) = file.load(&Default::default()).with_context(|| args.input.display().to_string())?;
    let inst = OracleInstance::from_detections(&dets, assoc.as_ref(), Default::default());
    let oracle = exhaustive_assign(&inst)?;
    let greedy = greedy_assign(&inst)?;
    let identical = oracle.assignment == greedy.assignment;
    emit(
        None,
        &to_json(&OracleOutput {
            seed: file.seed,
            oracle,
            greedy,
            identical,
        })?,
    )
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let report = scaling_benchmark(&args.grid, args.people, args.trials, args.seed, &mut WallClock)?;
    if let Some(p) = &args.report {
        write_atomic(p, &to_json(&report)?)?;
    }
    emit(None, &report.to_csv())?;
    eprintln!("seed {} slope {:.4}", report.seed, report.slope);
    Ok(())
}

#[derive(Serialize)]
struct AblationOutput {
    seed: u64,
    scenes: usize,
    rows: Vec<AblationRow>,
}

pub fn ablation(args: &AblationArgs) -> Result<()> {
    if args.min_people > args.max_people {
        bail!(input_error("--min-people exceeds --max-people"));
    }
    let noise = load_noise(args.noise.as_deref())?;
    let config = load_config(args.config.as_deref())?.config;
    let scenes = validation_set(args.scenes, (args.min_people, args.max_people), &noise, args.seed)?;
    let rows = ablation_suite(&scenes, &config)?;
    if let Some(p) = &args.report {
        write_atomic(
            p,
            &to_json(&AblationOutput {
                seed: args.seed,
                scenes: args.scenes,
                rows: rows.clone(),
            })?,
        )?;
    }
    emit(None, &ablation_csv(&rows))?;
    eprintln!("seed {}", args.seed);
    Ok(())
}
