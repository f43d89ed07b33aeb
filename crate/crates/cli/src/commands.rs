use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use wavemark_core::analysis::round_chunk_length;
use wavemark_core::attack::trial_csv;
use wavemark_core::container::{plan_chunks, validate_chunk_length};
use wavemark_core::keying::SEED_LEN;
use wavemark_core::synth::gaussian_weights;
use wavemark_core::{
    apply_attack, detection_trial, embed_model, embed_records, load_container, read_key_file, save_container,
    sweep_distortion, synthetic_model, verify_model, wipe_details, write_key_file, AttackSpec, DType, MarkConfig,
    ModelContainer, Role, ScalingParams, ScrambleKey, SweepConfig, SynthConfig,
};

use crate::report;
use crate::{
    usage, Command, KeyArg, MarkArgs, ReportFormat, SecretArg, SourceArgs, SynthDType, EXIT_PASS, EXIT_TAMPER,
};

pub fn run(command: Command, format: ReportFormat) -> Result<u8> {
    match command {
        Command::Keygen { out, force } => keygen(&out, force),
        Command::Embed { model, key, secret, out, mark } => embed(&model, &key, &secret, &out, &mark),
        Command::Verify { model, key, secret } => verify(&model, &key, &secret, format),
        Command::Inspect { model } => inspect(&model, format),
        Command::Sweep { source, levels, chunks, rel_floor } => sweep(&source, levels, chunks, rel_floor, format),
        Command::Attack { model, spec, out, trials, key, secret } => {
            attack(&model, &spec, out.as_deref(), trials, key.as_deref(), &secret, format)
        }
        Command::WipeDemo { source, chunk } => wipe_demo(&source, chunk, format),
        Command::Synth { out, seed, min_layers, max_layers, min_weights, max_weights, dtype } => {
            let dtype = match dtype {
                SynthDType::F32 => Some(DType::Float32),
                SynthDType::F64 => Some(DType::Float64),
                SynthDType::Mixed => None,
            };
            let config = SynthConfig { min_layers, max_layers, min_weights, max_weights, dtype, ..SynthConfig::default() };
            synth(&out, seed, &config)
        }
    }
}

fn load(path: &Path) -> Result<ModelContainer> {
    load_container(path).with_context(|| format!("reading {}", path.display()))
}

fn load_key(arg: &KeyArg) -> Result<ScrambleKey> {
    read_key_file(&arg.key).with_context(|| format!("reading key {}", arg.key.display()))
}

fn read_secret(arg: &SecretArg) -> Result<Option<Vec<u8>>> {
    match (&arg.secret, &arg.secret_file) {
        (Some(s), _) => Ok(Some(s.as_bytes().to_vec())),
        (None, Some(path)) => fs::read(path).map(Some).with_context(|| format!("reading secret {}", path.display())),
        (None, None) => Ok(None),
    }
}

/// Refuses to write over `input`, so no command mutates its source file.
fn distinct_output(input: &Path, out: &Path) -> Result<()> {
    let same = match (fs::canonicalize(input), fs::canonicalize(out)) {
        (Ok(a), Ok(b)) => a == b,
        _ => input == out,
    };
    if same {
        return Err(usage(format!("--out {} would overwrite the input; choose another path", out.display())));
    }
    Ok(())
}

fn keygen(out: &Path, force: bool) -> Result<u8> {
    if out.exists() && !force {
        return Err(usage(format!("{} exists; pass --force to replace it", out.display())));
    }
    let seed: [u8; SEED_LEN] = rand::rng().random();
    write_key_file(out, &seed).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote key to {}", out.display());
    Ok(EXIT_PASS)
}

fn embed(model: &Path, key: &KeyArg, secret: &SecretArg, out: &Path, mark: &MarkArgs) -> Result<u8> {
    validate_chunk_length(mark.chunk)?;
    let secret = read_secret(secret)?.ok_or_else(|| usage("embed needs --secret or --secret-file"))?;
    distinct_output(model, out)?;
    let container = load(model)?;
    let key = load_key(key)?;
    let config = MarkConfig { scaling: ScalingParams::with_level(mark.level), chunk_length: mark.chunk };
    let marked = embed_model(&container, &key, &secret, &config)?;
    save_container(&marked, out).with_context(|| format!("writing {}", out.display()))?;
    let records = embed_records(&marked)?;
    println!("marked {} layer(s) at level {}, chunk {}", records.len(), mark.level, mark.chunk);
    for r in &records {
        println!("  {} ({} positions over {} chunk(s))", r.layer_name, r.schedule_length, r.chunk_plan.chunk_count);
    }
    println!("wrote {}", out.display());
    Ok(EXIT_PASS)
}

fn verify(model: &Path, key: &KeyArg, secret: &SecretArg, format: ReportFormat) -> Result<u8> {
    let secret = read_secret(secret)?;
    let container = load(model)?;
    let key = load_key(key)?;
    let report = verify_model(&container, &key, secret.as_deref())?;
    print!("{}", report::verification(&report, format));
    Ok(if report.overall_pass { EXIT_PASS } else { EXIT_TAMPER })
}

fn inspect(model: &Path, format: ReportFormat) -> Result<u8> {
    let container = load(model)?;
    let records = embed_records(&container)?;
    print!("{}", report::manifest(&container, &records, format));
    Ok(EXIT_PASS)
}

/// Weights for `sweep` and `wipe-demo`: a container layer or generated noise.
fn source_weights(source: &SourceArgs) -> Result<(String, Vec<f64>)> {
    let Some(path) = &source.model else {
        if source.gaussian == 0 || !(source.sigma > 0.0 && source.sigma.is_finite()) {
            return Err(usage("--gaussian and --sigma must be positive"));
        }
        let mut rng = StdRng::seed_from_u64(source.seed);
        let label = format!("gaussian({}, sigma {})", source.gaussian, source.sigma);
        return Ok((label, gaussian_weights(&mut rng, source.gaussian, source.sigma)));
    };
    let container = load(path)?;
    let layer = match &source.layer {
        Some(name) => container.layer(name).ok_or_else(|| wavemark_core::Error::UnknownLayer(name.clone()))?,
        None => container
            .layers
            .iter()
            .find(|l| l.role == Role::Hidden)
            .ok_or_else(|| usage("container has no hidden layer; pass --layer"))?,
    };
    Ok((layer.name.clone(), layer.data.clone()))
}

fn sweep(source: &SourceArgs, levels: Vec<u32>, chunks: Vec<usize>, rel_floor: f64, format: ReportFormat) -> Result<u8> {
    if levels.iter().any(|l| !(1..=4).contains(l)) {
        return Err(usage("--levels must lie in 1..=4"));
    }
    if !(rel_floor > 0.0 && rel_floor.is_finite()) {
        return Err(usage("--rel-floor must be positive"));
    }
    let (label, weights) = source_weights(source)?;
    let config = SweepConfig { levels, chunk_lengths: chunks, rel_floor, seed: source.seed };
    let points = sweep_distortion(&weights, &config)?;
    print!("{}", report::sweep(&label, &points, format));
    Ok(EXIT_PASS)
}

fn attack(
    model: &Path,
    spec_path: &Path,
    out: Option<&Path>,
    trials: Option<usize>,
    key: Option<&Path>,
    secret: &SecretArg,
    format: ReportFormat,
) -> Result<u8> {
    let text = fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let spec = AttackSpec::from_toml(&text)?;
    let container = load(model)?;
    if let Some(out) = out {
        distinct_output(model, out)?;
        let attacked = apply_attack(&container, &spec)?;
        save_container(&attacked, out).with_context(|| format!("writing {}", out.display()))?;
        println!("applied {} attack, wrote {}", spec.kind, out.display());
    }
    if let Some(trials) = trials {
        let key = load_key(&KeyArg { key: key.map(PathBuf::from).ok_or_else(|| usage("--trials needs --key"))? })?;
        let secret = read_secret(secret)?;
        let summary = detection_trial(&container, &key, secret.as_deref(), Some(&spec), trials)?;
        match format {
            ReportFormat::Tabular => print!("{}", trial_csv(&spec.kind.to_string(), &summary)),
            ReportFormat::Text => print!("{}", report::trials(&spec.kind.to_string(), &summary)),
        }
    }
    Ok(EXIT_PASS)
}

fn wipe_demo(source: &SourceArgs, chunk: usize, format: ReportFormat) -> Result<u8> {
    let chunk = round_chunk_length(chunk)?;
    let (label, weights) = source_weights(source)?;
    let layer = wavemark_core::LayerTensor::new("wipe", vec![weights.len()], DType::Float64, weights)?;
    let (plan, chunks) = plan_chunks(&layer, chunk)?;
    let results = chunks.iter().map(|c| wipe_details(c)).collect::<wavemark_core::Result<Vec<_>>>()?;
    let energy = (layer.data.iter().map(|v| v * v).sum::<f64>() / layer.len() as f64).sqrt();
    print!("{}", report::wipe(&label, &plan, &results, energy, format));
    Ok(EXIT_PASS)
}

fn synth(out: &Path, seed: u64, config: &SynthConfig) -> Result<u8> {
    let model = synthetic_model(seed, config)?;
    save_container(&model, out).with_context(|| format!("writing {}", out.display()))?;
    let weights: usize = model.layers.iter().map(|l| l.len()).sum();
    println!("wrote {} layer(s), {weights} weights, to {}", model.layers.len(), out.display());
    Ok(EXIT_PASS)
}
