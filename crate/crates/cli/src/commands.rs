use std::path::{Path, PathBuf};

use mp3gan::audio::{load_wav, save_wav, AudioSignal, WavFormat};
use mp3gan::dataset::codec::Bitrate;
use mp3gan::dataset::manifest::Manifest;
use mp3gan::dataset::prepare::{prepare as prepare_corpus, PrepareConfig};
use mp3gan::dataset::split::Split;
use mp3gan::evaluation::{
    evaluate_system, profile_consistency, restored_profile, signal_profile, FrequencyProfile, MetricReport,
    System,
};
use mp3gan::model::{checkpoint_id, load_model, restore_audio, sample_noise, ModelParams, Role};
use mp3gan::rng::{stream, Purpose};
use mp3gan::spectral::{covered_len, frame_count, HOP, WIN};
use mp3gan::training;
use mp3gan::{Error, Result};
use rand::Rng;

use crate::config::{io, RunConfig};
use crate::plot::{self, Curve, CurveKind, ProfileTable};
use crate::{Common, EvaluateArgs, PrepareArgs, ProfileArgs, RestoreArgs, TrainArgs};

pub const PROFILE_DATA: &str = "profiles.tsv";
pub const PROFILE_PLOT: &str = "profiles.svg";
pub const PROFILE_STATS: &str = "profile_consistency.txt";

fn base_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::with_env(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

pub fn prepare(a: PrepareArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(b) = a.bitrates {
        cfg.prepare.bitrates = b;
    }
    if let Some(r) = a.ratios {
        cfg.prepare.ratios = [r[0], r[1], r[2]];
    }
    cfg.prepare.resample |= a.resample;
    if let Some(e) = a.encoder {
        cfg.codec.encoder = e;
    }
    if let Some(d) = a.decoder {
        cfg.codec.decoder = d;
    }
    cfg.validate()?;
    let out = &a.common.out_dir;
    cfg.write_effective("prepare", &[("corpus", &a.corpus), ("out_dir", out)], out)?;
    let (_, summary) = prepare_corpus(&PrepareConfig {
        corpus_dir: a.corpus.clone(),
        out_dir: out.clone(),
        bitrates: cfg.prepare.bitrates.clone(),
        seed: cfg.prepare.seed,
        ratios: cfg.prepare.ratios,
        codec: cfg.codec.clone(),
        resample: cfg.prepare.resample,
    })?;
    println!("{summary}");
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    let t = &mut cfg.train;
    if let Some(v) = a.iterations {
        t.iterations = v;
    }
    if a.stochastic {
        t.stochastic = true;
    }
    if a.deterministic {
        t.stochastic = false;
    }
    if let Some(v) = a.bitrate {
        t.bitrate = v;
    }
    if let Some(v) = a.arch {
        t.arch = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.segment_frames {
        t.segment_frames = v;
    }
    if let Some(v) = a.lr {
        t.lr = v;
    }
    if let Some(v) = a.checkpoint_every {
        t.checkpoint_every = v;
    }
    cfg.validate()?;
    let out = &a.common.out_dir;
    let mut paths: Vec<(&str, &Path)> = vec![("manifest", &a.manifest), ("out_dir", out)];
    if let Some(r) = &a.resume {
        paths.push(("resume", r));
    }
    cfg.write_effective("train", &paths, out)?;
    let manifest = Manifest::load(&a.manifest)?;
    let outcome = match &a.resume {
        Some(ckpt) => training::resume(ckpt, &cfg.train, &manifest, out)?,
        None => training::train(&cfg.train, &manifest, out)?,
    };
    println!("trained to step {}", outcome.state.step);
    println!("loss log: {}", outcome.loss_log.display());
    if let Some(c) = outcome.last_checkpoint() {
        println!("checkpoint: {}", c.display());
    }
    Ok(())
}

/// Whitespace-separated numbers.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    text.split_whitespace()
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("{}: bad number {s:?}", path.display())))
        })
        .collect()
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let text: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
    std::fs::write(path, text.join("\n") + "\n").map_err(|e| io(path, e))
}

fn numbered(name: &str, k: usize) -> String {
    match name.rsplit_once('.') {
        Some((stem, ext)) => format!("{stem}_{k:02}.{ext}"),
        None => format!("{name}_{k:02}"),
    }
}

pub fn restore(a: RestoreArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    if let Some(n) = a.n_samples {
        cfg.restore.n_samples = n;
    }
    if let Some(s) = a.z_seed {
        cfg.restore.seed = s;
    }
    cfg.validate()?;
    let out = &a.common.out_dir;
    let mut paths: Vec<(&str, &Path)> = vec![("checkpoint", &a.checkpoint), ("input", &a.input), ("out_dir", out)];
    if let Some(z) = &a.z_file {
        paths.push(("z_file", z));
    }
    cfg.write_effective("restore", &paths, out)?;

    let g = load_model(&a.checkpoint, Role::Generator)?;
    let input = load_wav(&a.input, a.resample)?;
    let n = cfg.restore.n_samples;
    let zs: Vec<Option<Vec<f64>>> = match (g.stochastic(), &a.z_file) {
        (false, Some(_)) => return Err(Error::Config("deterministic generator takes no noise vector".into())),
        (false, None) if n > 1 => {
            return Err(Error::Config("a deterministic generator has only one restoration".into()))
        }
        (false, None) => vec![None],
        (true, Some(_)) if n > 1 => {
            return Err(Error::Config("--z-file fixes a single noise vector; drop --n-samples".into()))
        }
        (true, Some(p)) => vec![Some(read_vector(p)?)],
        (true, None) => (0..n)
            .map(|k| Some(sample_noise(g.arch().noise_dim, cfg.restore.seed, k as u64)))
            .collect(),
    };
    for (k, z) in zs.iter().enumerate() {
        let restored = restore_audio(&g, &input, z.as_deref(), cfg.restore.chunk)?;
        let name = if zs.len() == 1 { a.output.clone() } else { numbered(&a.output, k) };
        let path = out.join(&name);
        save_wav(&path, &restored, WavFormat::Float32)?;
        if let Some(z) = z {
            write_vector(&out.join(format!("{name}.z.txt")), z)?;
        }
        println!("{}", path.display());
    }
    Ok(())
}

fn model_for(system: System, a: &EvaluateArgs) -> Result<Option<PathBuf>> {
    let explicit = match system {
        System::Mp3 => return Ok(None),
        System::Det => &a.det_checkpoint,
        System::Sto => &a.sto_checkpoint,
    };
    explicit
        .clone()
        .or_else(|| a.checkpoint.clone())
        .map(Some)
        .ok_or_else(|| Error::Config(format!("system {system} needs --{system}-checkpoint or --checkpoint")))
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    let e = &mut cfg.evaluate;
    if let Some(v) = a.split {
        e.split = v;
    }
    if let Some(v) = &a.systems {
        e.systems = v.clone();
    }
    if let Some(v) = &a.bitrates {
        e.bitrates = v.clone();
    }
    if let Some(v) = a.n_samples {
        e.protocol.n_samples = v;
    }
    if let Some(v) = a.selection_metric {
        e.protocol.selection_metric = v;
    }
    if let Some(v) = a.excerpt_frames {
        e.protocol.excerpt_frames = v;
    }
    if let Some(v) = a.excerpts_per_song {
        e.protocol.excerpts_per_song = Some(v);
    }
    if let Some(v) = &a.peaq {
        e.peaq.executable = Some(v.clone());
    }
    if e.systems.is_empty() || e.bitrates.is_empty() {
        return Err(Error::Config("at least one system and one bitrate are needed".into()));
    }
    cfg.validate()?;
    let out = &a.common.out_dir;
    let mut models: Vec<(System, Option<(PathBuf, ModelParams)>)> = Vec::new();
    for &system in &cfg.evaluate.systems {
        let model = match model_for(system, &a)? {
            Some(p) => {
                let g = load_model(&p, Role::Generator)?;
                Some((p, g))
            }
            None => None,
        };
        models.push((system, model));
    }
    let mut paths: Vec<(String, &Path)> = vec![("manifest".into(), &a.manifest), ("out_dir".into(), out)];
    for (system, m) in &models {
        if let Some((p, _)) = m {
            paths.push((format!("{system}_checkpoint"), p));
        }
    }
    let path_refs: Vec<(&str, &Path)> = paths.iter().map(|(k, p)| (k.as_str(), *p)).collect();
    cfg.write_effective("evaluate", &path_refs, out)?;

    let manifest = Manifest::load(&a.manifest)?;
    let ev = &cfg.evaluate;
    let mut report = MetricReport::new(ev.protocol.clone());
    report.config_sha256 = Some(cfg.settings_hash());
    for (system, m) in &models {
        if let Some((p, _)) = m {
            report.checkpoints.insert(*system, checkpoint_id(p)?);
        }
    }
    for &bitrate in &ev.bitrates {
        for (system, m) in &models {
            let g = m.as_ref().map(|(_, g)| g);
            let r = evaluate_system(&manifest, ev.split, *system, g, bitrate, &ev.protocol, &ev.peaq)?;
            report.records.extend(r.records);
        }
    }
    report.save(out)?;
    print!("{}", report.summary_table());
    Ok(())
}

struct ProfileExcerpt {
    label: String,
    hq: AudioSignal,
    mp3: AudioSignal,
}

/// `count` excerpts of `frames` frames drawn uniformly over songs and
/// start positions.
fn random_excerpts(
    manifest: &Manifest,
    split: Split,
    bitrate: Bitrate,
    frames: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ProfileExcerpt>> {
    let len = covered_len(frames, WIN, HOP);
    let mut songs = Vec::new();
    for pair in manifest.pairs(split, bitrate) {
        let (hq, mp3) = pair.load()?;
        let total = frame_count(hq.len(), WIN, HOP);
        if total >= frames {
            songs.push((pair.song_id, hq, mp3, total - frames));
        }
    }
    if songs.is_empty() {
        return Err(Error::Data(format!(
            "no song in the {split} split at {bitrate} is {frames} frames long"
        )));
    }
    let mut rng = stream(seed, Purpose::Excerpts, 0);
    Ok((0..count)
        .map(|_| {
            let (id, hq, mp3, last) = &songs[rng.random_range(0..songs.len())];
            let start = rng.random_range(0..=*last);
            ProfileExcerpt {
                label: format!("{id}@{start}"),
                hq: hq.excerpt(start * HOP, len),
                mp3: mp3.excerpt(start * HOP, len),
            }
        })
        .collect())
}

fn mean_profile(profiles: &[&FrequencyProfile]) -> Vec<f64> {
    let n = profiles.len() as f64;
    let bins = profiles[0].values.len();
    (0..bins)
        .map(|b| profiles.iter().map(|p| p.values[b]).sum::<f64>() / n)
        .collect()
}

pub fn profile(a: ProfileArgs) -> Result<()> {
    let mut cfg = base_config(&a.common)?;
    let p = &mut cfg.profile;
    if let Some(v) = a.split {
        p.split = v;
    }
    if let Some(v) = a.bitrate {
        p.bitrate = v;
    }
    if let Some(v) = a.z_count {
        p.z_count = v;
    }
    if let Some(v) = a.excerpt_count {
        p.excerpt_count = v;
    }
    if let Some(v) = a.excerpt_frames {
        p.excerpt_frames = v;
    }
    cfg.validate()?;
    let out = &a.common.out_dir;
    cfg.write_effective(
        "profile",
        &[("checkpoint", &a.checkpoint), ("manifest", &a.manifest), ("out_dir", out)],
        out,
    )?;
    let p = &cfg.profile;
    let g = load_model(&a.checkpoint, Role::Generator)?;
    if !g.stochastic() && p.z_count > 1 {
        return Err(Error::Config("a deterministic generator has a single profile per excerpt; use --z-count 1".into()));
    }
    let manifest = Manifest::load(&a.manifest)?;
    let excerpts = random_excerpts(&manifest, p.split, p.bitrate, p.excerpt_frames, p.excerpt_count, p.seed)?;

    let mut table = ProfileTable::default();
    let mut grid: Vec<Vec<FrequencyProfile>> = vec![Vec::new(); excerpts.len()];
    for k in 0..p.z_count {
        let z = g.stochastic().then(|| sample_noise(g.arch().noise_dim, p.seed, k as u64));
        let mut per_z = Vec::new();
        for (e, ex) in excerpts.iter().enumerate() {
            let prof = restored_profile(&g, &ex.mp3, z.as_deref())?;
            table.curves.push(Curve {
                kind: CurveKind::Excerpt,
                z: Some(k),
                label: ex.label.clone(),
                values: prof.values.clone(),
            });
            grid[e].push(prof.clone());
            per_z.push(prof);
        }
        table.curves.push(Curve {
            kind: CurveKind::Mean,
            z: Some(k),
            label: "mean".into(),
            values: mean_profile(&per_z.iter().collect::<Vec<_>>()),
        });
        if let Some(z) = &z {
            write_vector(&out.join(format!("z_{k:02}.txt")), z)?;
        }
        log::info!("profiles for z {k} done");
    }
    let reference: Vec<FrequencyProfile> = excerpts
        .iter()
        .map(|ex| signal_profile(&ex.hq))
        .collect::<Result<_>>()?;
    table.curves.push(Curve {
        kind: CurveKind::Reference,
        z: None,
        label: "original".into(),
        values: mean_profile(&reference.iter().collect::<Vec<_>>()),
    });

    let data_path = out.join(PROFILE_DATA);
    table.save(&data_path)?;
    let reloaded = ProfileTable::load(&data_path)?;
    plot::plot_profiles(&out.join(PROFILE_PLOT), &reloaded)?;

    let stats = match profile_consistency(&grid) {
        Some(c) => format!(
            "top-quartile variance across excerpts (fixed z): {:e}\ntop-quartile variance across z (fixed excerpt): {:e}\n",
            c.across_excerpts, c.across_z
        ),
        None => "needs at least two excerpts and two noise vectors\n".to_string(),
    };
    let stats_path = out.join(PROFILE_STATS);
    std::fs::write(&stats_path, &stats).map_err(|e| io(&stats_path, e))?;
    print!("{stats}");
    println!("{}", data_path.display());
    println!("{}", out.join(PROFILE_PLOT).display());
    Ok(())
}
