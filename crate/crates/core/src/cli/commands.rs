use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CliError, EvalArgs, GenerateArgs, PipelineArgs, PredictArgs, RunConfig, Stage};
use crate::backbone::VelocityModel;
use crate::conditioning::{Conditioner, NegativePrompt, PromptSpec, SegmentSpec};
use crate::eval::{evaluate_sample, MetricReport, OracleScorer};
use crate::flow::{encode_examples, train_with, DropCounts, TrainEvent};
use crate::lrc::{
    derive_windows, frame_to_time, parse_lrc, predict_durations, serialize_lrc, DurationRequest, FrameRate,
    LrcDocument, LyricSection, StructureEntry,
};
use crate::numeric::Tensor;
use crate::pipeline::{
    build_duration_dataset, dpo_pair_select, finetune_filter, lyric_edit_filter, pretrain_filter, FilterReport, Manifest,
};
use crate::sampler::{euler_sample, ConditionTriple};
use crate::{Error, Result};

/// What `generate` and `predict-durations` read: a global description and the
/// song's sections in order. A section without lines is instrumental.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationPrompt {
    pub global: String,
    #[serde(default)]
    pub sections: Vec<LyricSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative: Option<NegativePrompt>,
}

impl GenerationPrompt {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn structure(&self) -> Vec<StructureEntry> {
        let mut next = 0;
        self.sections
            .iter()
            .map(|s| {
                if s.lines.is_empty() {
                    StructureEntry::instrumental(&s.prompt)
                } else {
                    next += s.lines.len();
                    StructureEntry::lyric(&s.prompt, next - s.lines.len(), next)
                }
            })
            .collect()
    }

    /// Timed prompt whose segments cover the windows derived from `doc`.
    pub fn resolve(&self, doc: &LrcDocument, rate: FrameRate, frames: usize) -> Result<PromptSpec> {
        let mut spec = PromptSpec::new(self.global.clone(), vec![])?;
        spec.negative = self.negative.clone();
        if self.sections.is_empty() {
            return Ok(spec);
        }
        let structure = self.structure();
        for (entry, w) in structure.iter().zip(derive_windows(doc, &structure, rate, frames)?) {
            spec.segments.push(SegmentSpec::new(
                frame_to_time(w.frame_start, rate),
                frame_to_time(w.frame_end, rate),
                entry.label.clone(),
                entry.kind,
            ));
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    /// Absent for files that carry wall-clock timings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

/// `run-<command>.json`: the resolved config and every file the command wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: RunConfig,
    pub files: Vec<Artifact>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<Artifact>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: vec![] })
    }

    fn write_at(&mut self, path: &Path, bytes: &[u8], hashed: bool) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let shown = path.strip_prefix(&self.dir).unwrap_or(path);
        let sha256 = hashed.then(|| Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect());
        self.files.push(Artifact { path: shown.display().to_string(), sha256 });
        Ok(())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.write_at(&self.dir.join(name), bytes, true)
    }

    fn finish(self, command: &str, config: &RunConfig) -> Result<()> {
        let path = self.dir.join(format!("run-{command}.json"));
        let manifest = RunManifest { command: command.into(), config: config.clone(), files: self.files };
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

#[derive(Debug, Deserialize)]
struct ScoreLine {
    group: String,
    id: String,
    score: f64,
}

#[derive(Debug, Serialize)]
struct PairLine<'a> {
    group: &'a str,
    win: String,
    lose: String,
}

pub(super) fn pipeline(config: &RunConfig, args: &PipelineArgs) -> Result<(), CliError> {
    let mut out = Outputs::new(&config.run_dir)?;
    if args.stage == Stage::DpoPairs {
        let path = args.scores.as_deref().ok_or_else(|| CliError::Usage("dpo-pairs needs --scores".into()))?;
        let min_diff = args
            .min_diff
            .or(config.pipeline.dpo_min_diff)
            .ok_or_else(|| CliError::Usage("dpo-pairs needs --min-diff or pipeline.dpo_min_diff".into()))?;
        let mut groups: BTreeMap<String, Vec<(String, f64)>> = BTreeMap::new();
        for (i, line) in read(path)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let s: ScoreLine =
                serde_json::from_str(line).map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
            groups.entry(s.group).or_default().push((s.id, s.score));
        }
        let mut text = String::new();
        let mut count = 0;
        for (group, members) in groups.iter().filter(|(_, m)| m.len() >= 2) {
            for (win, lose) in dpo_pair_select(members, min_diff)? {
                text.push_str(&serde_json::to_string(&PairLine { group, win, lose })?);
                text.push('\n');
                count += 1;
            }
        }
        out.write("dpo_pairs.jsonl", text.as_bytes())?;
        println!("dpo-pairs: {count} pairs from {} groups", groups.len());
        return Ok(out.finish("pipeline", config)?);
    }

    let path = args.manifest.as_deref().ok_or_else(|| CliError::Usage("this stage needs --manifest".into()))?;
    let manifest = Manifest::load(path)?;
    let (name, report): (&str, FilterReport) = match args.stage {
        Stage::Pretrain => ("pretrain", pretrain_filter(&manifest.records, &config.pipeline.pretrain)?),
        Stage::Finetune => ("finetune", finetune_filter(&manifest.records, &config.pipeline.finetune)?),
        Stage::LyricCheck => ("lyric-check", lyric_edit_filter(&manifest.records, config.pipeline.max_edit_distance)?),
        Stage::DurationDataset => {
            let mut ds = build_duration_dataset(&manifest.records);
            ds.skipped.extend(manifest.invalid);
            out.write("duration_dataset.jsonl", ds.to_jsonl()?.as_bytes())?;
            out.write("duration_dataset_skipped.json", &pretty(&ds.skipped)?)?;
            println!("duration-dataset: {} examples, {} skipped", ds.examples.len(), ds.skipped.len());
            return Ok(out.finish("pipeline", config)?);
        }
        Stage::DpoPairs => unreachable!("handled above"),
    };
    let mut report = report;
    report.rejected.extend(manifest.invalid);
    out.write(&format!("{name}_report.json"), &pretty(&report)?)?;
    println!("{name}: kept {}, rejected {}", report.kept.len(), report.rejected.len());
    Ok(out.finish("pipeline", config)?)
}

pub(super) fn predict(config: &RunConfig, args: &PredictArgs) -> Result<(), CliError> {
    let request = match (&args.prompt, &args.sheet) {
        (Some(p), _) => {
            let prompt = GenerationPrompt::load(p)?;
            DurationRequest { global_prompt: prompt.global, sections: prompt.sections, total_duration_hint: args.hint }
        }
        (None, Some(s)) => {
            DurationRequest::from_lyric_sheet(args.global.clone().unwrap_or_default(), &read(s)?, args.hint)
        }
        (None, None) => return Err(CliError::Usage("predict-durations needs --prompt or --sheet".into())),
    };
    let doc = predict_durations(&request, &config.durations)?;
    let text = serialize_lrc(&doc);
    let mut out = Outputs::new(&config.run_dir)?;
    let target = args.out.clone().unwrap_or_else(|| config.run_dir.join("predicted.lrc"));
    out.write_at(&target, text.as_bytes(), true)?;
    print!("{text}");
    Ok(out.finish("predict-durations", config)?)
}

#[derive(Debug, Serialize)]
struct TrainLogLine {
    step: usize,
    loss: f64,
    grad_norm: f64,
    dropped: DropCounts,
    wall_ms: u64,
}

pub(super) fn train(config: &RunConfig) -> Result<(), CliError> {
    let task = config.task_spec()?;
    let tc = config.train_config();
    let examples = task.dataset(config.train.dataset_size, &mut ChaCha8Rng::seed_from_u64(config.seed_for("data")))?;
    let conditioner = Conditioner::stub(config.model.dims, task.rate()?)?;
    let encoded = encode_examples(&conditioner, &examples)?;
    let mut model = VelocityModel::new(config.model, &mut ChaCha8Rng::seed_from_u64(config.seed_for("model")))?;

    let mut out = Outputs::new(&config.run_dir)?;
    let mut log = String::new();
    let mut last = None;
    let log_every = config.train.log_every;
    let result = train_with(&mut model, &encoded, &tc, &mut |event| {
        match event {
            TrainEvent::Step { record, wall_ms } => {
                let line = TrainLogLine {
                    step: record.step,
                    loss: record.loss,
                    grad_norm: record.grad_norm,
                    dropped: record.dropped,
                    wall_ms,
                };
                log.push_str(&serde_json::to_string(&line)?);
                log.push('\n');
                if log_every > 0 && (record.step + 1) % log_every == 0 {
                    eprintln!("step {:>6}  loss {:.4}  {:.1}s", record.step + 1, record.loss, wall_ms as f64 / 1000.0);
                }
                last = Some(record.loss);
            }
            TrainEvent::Checkpoint { step, checkpoint } if step < tc.steps => {
                out.write(&format!("checkpoints/step-{step:06}.json"), serde_json::to_string(&checkpoint)?.as_bytes())?;
            }
            TrainEvent::Checkpoint { .. } => {}
        }
        Ok(())
    });
    out.write_at(&config.run_dir.join("train_log.jsonl"), log.as_bytes(), false)?;
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            out.finish("train", config)?;
            return Err(e.into());
        }
    };
    out.write("checkpoint.json", serde_json::to_string(&model.to_checkpoint())?.as_bytes())?;
    out.finish("train", config)?;
    let (first, end) = report.smoothed_ends(50);
    println!(
        "trained {} steps on {} songs: loss {first:.4} -> {end:.4} (last {:.4}), {:.1}s",
        tc.steps,
        encoded.len(),
        last.unwrap_or(f64::NAN),
        report.wall_ms as f64 / 1000.0
    );
    Ok(())
}

pub(super) fn generate(config: &RunConfig, args: &GenerateArgs) -> Result<(), CliError> {
    let prompt = GenerationPrompt::load(&args.prompt)?;
    let task = config.task_spec()?;
    let (rate, frames) = (task.rate()?, task.frames);
    let doc = match (&args.lrc, args.predict_durations) {
        (Some(path), _) => parse_lrc(&read(path)?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?,
        (None, true) => {
            let request = DurationRequest {
                global_prompt: prompt.global.clone(),
                sections: prompt.sections.clone(),
                total_duration_hint: Some(task.duration()),
            };
            predict_durations(&request, &config.durations)?
        }
        (None, false) => return Err(CliError::Usage("generate needs --lrc or --predict-durations".into())),
    };
    let checkpoint = args.checkpoint.clone().unwrap_or_else(|| config.run_dir.join("checkpoint.json"));
    let model = VelocityModel::load(&checkpoint)?;
    let dims = model.config().dims;
    if dims.d_audio != task.d_audio {
        return Err(Error::Data(format!("checkpoint has {} audio channels, task has {}", dims.d_audio, task.d_audio)).into());
    }
    let spec = prompt.resolve(&doc, rate, frames)?;
    let conditioner = Conditioner::stub(dims, rate)?;
    let triple = ConditionTriple::build(&conditioner, &spec, &doc, frames)?;
    let sample = euler_sample(&model, &triple, &config.guidance_config(), frames, dims.d_audio)?;

    let mut out = Outputs::new(&config.run_dir)?;
    let name = &args.name;
    out.write(&format!("{name}.latent.json"), serde_json::to_string(&sample.latent)?.as_bytes())?;
    out.write(&format!("{name}.prompt.json"), &pretty(&spec)?)?;
    out.write(&format!("{name}.lrc"), serialize_lrc(&doc).as_bytes())?;
    let mut steps = String::new();
    for d in &sample.diagnostics {
        steps.push_str(&serde_json::to_string(d)?);
        steps.push('\n');
    }
    out.write(&format!("{name}.steps.jsonl"), steps.as_bytes())?;
    out.finish("generate", config)?;
    println!("wrote {} ({frames} frames, {} segments)", config.run_dir.join(format!("{name}.latent.json")).display(), spec.segments.len());
    Ok(())
}

/// Applies `f` to `0..n` on at most `workers` threads; results keep index order.
fn ordered_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = f(i);
                *slots[i].lock().expect("slot lock") = Some(value);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every index visited")).collect()
}

fn load_latent(path: &Path, d_audio: usize) -> Result<Tensor> {
    let t: Tensor = serde_json::from_str(&read(path)?).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    if t.shape().len() != 2 || t.shape()[0] == 0 || t.shape()[1] != d_audio || !t.is_finite() {
        return Err(Error::Data(format!("{}: expected a finite T×{d_audio} latent, got {:?}", path.display(), t.shape())));
    }
    Ok(t)
}

pub(super) fn eval(config: &RunConfig, args: &EvalArgs) -> Result<(), CliError> {
    if args.latents.len() != args.prompts.len() {
        return Err(CliError::Usage(format!("{} latents but {} prompts", args.latents.len(), args.prompts.len())));
    }
    if args.predicted.len() != args.references.len()
        || (!args.predicted.is_empty() && args.predicted.len() != args.latents.len())
    {
        return Err(CliError::Usage("--predicted-lrc and --reference-lrc must pair with every latent".into()));
    }
    let task = config.task_spec()?;
    let rate = task.rate()?;
    let latents = args.latents.iter().map(|p| load_latent(p, task.d_audio)).collect::<Result<Vec<_>>>()?;
    let prompts = args
        .prompts
        .iter()
        .map(|p| PromptSpec::from_json(&read(p)?).map_err(|e| Error::Data(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>>>()?;
    let lrc = |p: &PathBuf| parse_lrc(&read(p)?).map_err(|e| Error::Data(format!("{}: {e}", p.display())));
    let predicted = args.predicted.iter().map(lrc).collect::<Result<Vec<_>>>()?;
    let references = args.references.iter().map(lrc).collect::<Result<Vec<_>>>()?;

    let scorer = OracleScorer::new(task);
    let workers = args.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = ordered_map(latents.len(), workers, |i| {
        let id = args.latents[i].file_name().map_or(format!("{i}"), |s| s.to_string_lossy().into_owned());
        let durations = predicted.get(i).zip(references.get(i));
        evaluate_sample(id, &latents[i], &prompts[i], &scorer, rate, durations)
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    let report = MetricReport::new("synthetic-oracle", samples);

    let mut out = Outputs::new(&config.run_dir)?;
    let target = args.out.clone().unwrap_or_else(|| config.run_dir.join("report.json"));
    out.write_at(&target, &pretty(&report)?, true)?;
    out.finish("eval", config)?;
    let show = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "{} samples: global {}, segment {}, duration MAE {}",
        report.aggregate.count,
        show(report.aggregate.global_alignment),
        show(report.aggregate.segment_alignment),
        show(report.aggregate.duration_mae)
    );
    Ok(())
}
