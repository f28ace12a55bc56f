use anyhow::{bail, Context};
use serde::Serialize;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use lookahead::arranger::{
    arrange_score, streaming_accuracy, teacher_forced_accuracy, train_arranger, training_examples, ArrangerConfig,
};
use lookahead::dataio::{export_midi, folk_tunes, prepare_dir, score_song, toy_corpus, write_raw_dir, Registers, CLEAN_FILE};
use lookahead::features::{annotate_score, FeatureConfig};
use lookahead::metrics::{evaluate, MetricReport};
use lookahead::pipeline::{Session, SessionConfig, StreamEvent, DEFAULT_BPM};
use lookahead::predictor::{CrfModel, TemplateSet, TrainConfig};
use lookahead::score::{read_scores, write_scores, STEPS_PER_BEAT};
use lookahead::{Chord, ChordMap, Score, TimeSignature, Tonality};

use crate::{engines, input, serve, Cli, Command, FeaturesCommand, Preset, ReportFormat};

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(&a.out, a.count, a.seed),
        Command::PrepareData(a) => {
            let corpus = prepare_dir(&a.input, &a.out, a.reject_log.as_deref(), Registers::default())?;
            let clean = a.out.join(CLEAN_FILE);
            print_json(&serde_json::json!({
                "kept": corpus.scores.len(),
                "rejected": corpus.rejected.len(),
                "clean": clean,
            }))
        }
        Command::TrainArranger(a) => train_arranger_cmd(a),
        Command::TrainPredictor(a) => train_predictor_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::RunStream(a) => run_stream_cmd(a),
        Command::Serve(a) => serve::serve(a),
        Command::Features(FeaturesCommand::Dump { corpus, piece }) => features_dump(&corpus, piece.as_deref()),
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

/// A `.jsonl` file, or a directory holding the clean corpus file.
pub fn load_corpus(path: &Path) -> anyhow::Result<Vec<Score>> {
    let file: PathBuf = if path.is_dir() { path.join(CLEAN_FILE) } else { path.to_path_buf() };
    let scores = read_scores(&file).with_context(|| format!("reading corpus {}", file.display()))?;
    if scores.is_empty() {
        bail!("corpus {} is empty", file.display());
    }
    Ok(scores)
}

fn gen_corpus(out: &Path, count: usize, seed: u64) -> anyhow::Result<()> {
    let mut pieces = toy_corpus(count, seed);
    pieces.extend(folk_tunes());
    write_raw_dir(out, &pieces)?;
    print_json(&serde_json::json!({ "pieces": pieces.len(), "out": out }))
}

fn train_arranger_cmd(a: crate::TrainArrangerArgs) -> anyhow::Result<()> {
    let scores = load_corpus(&a.corpus)?;
    let base = match a.preset {
        Preset::Full => ArrangerConfig::full(),
        Preset::Desk => ArrangerConfig::desk(),
    };
    let config = ArrangerConfig {
        epochs: a.epochs.unwrap_or(base.epochs),
        seed: a.seed.unwrap_or(base.seed),
        learning_rate: a.lr.unwrap_or(base.learning_rate),
        batch_bars: a.batch_bars.unwrap_or(base.batch_bars),
        ..base
    };
    let mask = crate::mask_without(&a.without);
    tracing::info!(pieces = scores.len(), ?config, ?mask, "training arranger");
    let started = Instant::now();
    let log_every = a.log_every.max(1);
    let (model, history) = train_arranger(&scores, config, mask, |s, _| {
        if s.epoch % log_every == 0 {
            tracing::info!(epoch = s.epoch, loss = s.loss, secs = started.elapsed().as_secs_f64(), "epoch");
        }
        true
    })?;
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let examples = training_examples(&model, &scores)?;
    print_json(&serde_json::json!({
        "out": a.out,
        "vocabulary": model.vocab().len(),
        "parameters": model.params().count(),
        "epochs": history.len() - 1,
        "final_loss": history.last().map(|h| h.loss),
        "teacher_forced_accuracy": teacher_forced_accuracy(&model, &examples)?,
        "streaming_accuracy": streaming_accuracy(&model, &scores)?,
        "seconds": started.elapsed().as_secs_f64(),
    }))
}

fn train_predictor_cmd(a: crate::TrainPredictorArgs) -> anyhow::Result<()> {
    let scores = load_corpus(&a.corpus)?;
    let templates = match &a.templates {
        Some(p) => TemplateSet::load(p).with_context(|| format!("reading templates {}", p.display()))?,
        None => TemplateSet::standard().clone(),
    };
    let pieces: Vec<(Score, Vec<Chord>)> = match &a.cache_from {
        Some(ckpt) => {
            let arranger = engines::load_arranger(&ckpt.to_string_lossy())?;
            scores
                .into_iter()
                .map(|s| Ok((arrange_score(&*arranger, &s)?, s)))
                .map(|r: anyhow::Result<_>| r.map(|(cache, s)| (s, cache)))
                .collect::<anyhow::Result<_>>()?
        }
        None => scores.into_iter().map(|s| (s.chords.clone(), s)).map(|(c, s)| (s, c)).collect(),
    };
    let config = TrainConfig { max_iterations: a.max_iter, min_frequency: a.freq, cost: a.cost, tolerance: a.tol };
    let started = Instant::now();
    let (model, report) = CrfModel::train(&pieces, templates, config)?;
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&serde_json::json!({
        "out": a.out,
        "labels": model.labels().len(),
        "features": model.feature_count(),
        "iterations": report.iterations(),
        "converged": report.converged,
        "objective": report.objective,
        "seconds": started.elapsed().as_secs_f64(),
    }))
}

fn mean_report(scores: &[Score]) -> MetricReport {
    let reports: Vec<MetricReport> = scores.iter().map(|s| evaluate(s, ChordMap::standard())).collect();
    MetricReport::mean(&reports)
}

fn evaluate_cmd(a: crate::EvaluateArgs) -> anyhow::Result<()> {
    let scores = load_corpus(&a.score)?;
    let metrics = mean_report(&scores);
    let reference = a.against.as_deref().map(load_corpus).transpose()?.map(|r| mean_report(&r));
    let difference = reference.map(|r| metrics.difference(&r));
    match a.report {
        ReportFormat::Json => print_json(&serde_json::json!({
            "pieces": scores.len(),
            "metrics": metrics,
            "reference": reference,
            "difference": difference,
        })),
        ReportFormat::Csv => {
            let mut out = String::from(if reference.is_some() { "metric,value,reference,difference\n" } else { "metric,value\n" });
            for (i, name) in MetricReport::NAMES.iter().enumerate() {
                out.push_str(&format!("{name},{}", metrics.values()[i]));
                if let (Some(r), Some(d)) = (reference, difference) {
                    out.push_str(&format!(",{},{}", r.values()[i], d.values()[i]));
                }
                out.push('\n');
            }
            print!("{out}");
            Ok(())
        }
    }
}

fn read_input(spec: &str) -> anyhow::Result<String> {
    if spec == "-" {
        let mut text = String::new();
        std::io::stdin().read_to_string(&mut text)?;
        Ok(text)
    } else {
        let path = Path::new(spec);
        let file = if path.is_dir() { path.join(CLEAN_FILE) } else { path.to_path_buf() };
        std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))
    }
}

fn run_stream_cmd(a: crate::RunStreamArgs) -> anyhow::Result<()> {
    let stream = input::parse(&read_input(&a.input)?, a.piece)?;
    let tonality = stream.tonality.unwrap_or(Tonality::C_MAJOR);
    let config = SessionConfig {
        bpm: a.bpm.or(stream.bpm).unwrap_or(DEFAULT_BPM),
        tonality,
        time_signature: stream.time_signature.unwrap_or(TimeSignature::FOUR_FOUR),
        clock: a.clock.into(),
        scheduler: a.engines.scheduler.into(),
        cache_wait: a.engines.cache_wait(),
        ..SessionConfig::default()
    };
    if !(config.bpm.is_finite() && config.bpm > 0.0) {
        bail!("bpm must be positive, got {}", config.bpm);
    }
    let engines = engines::load(&a.engines, tonality)?;
    let mut sink: Box<dyn Write> = match &a.events {
        Some(p) => Box::new(BufWriter::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    let mut played: Vec<Option<Chord>> = Vec::new();
    let mut write = |events: Vec<StreamEvent>| -> anyhow::Result<()> {
        for e in events {
            if let StreamEvent::AccompOut(o) = &e {
                if played.len() <= o.beat {
                    played.resize(o.beat + 1, None);
                }
                played[o.beat] = Some(o.chord.clone());
            }
            writeln!(sink, "{}", e.to_json_line())?;
        }
        Ok(())
    };

    let mut session = Session::new(config.clone(), engines);
    write(session.start())?;
    for &(step, pitch) in &stream.samples {
        if !session.is_running() {
            break;
        }
        session.pace(step);
        write(session.push(step, pitch))?;
    }
    if session.is_running() {
        write(session.finish())?;
    }
    sink.flush()?;
    drop(sink);

    let r = session.report();
    tracing::info!(
        beats = r.beats.len(),
        max_logical_latency_beats = r.max_logical_latency_beats,
        mean_margin_beats = r.mean_margin_beats,
        physical_p99_us = r.physical.p99_us,
        underruns = r.underruns,
        stale_windows = r.stale_windows,
        seed = a.seed,
        "stream finished"
    );

    if a.emit_midi.is_some() || a.emit_score.is_some() {
        let beats = session.melody().len() / STEPS_PER_BEAT;
        let chords: Option<Vec<Chord>> = played.into_iter().take(beats).collect();
        let chords = chords.filter(|c| c.len() == beats && beats > 0).context("no complete accompanied beat to export")?;
        let melody = session.melody()[..beats * STEPS_PER_BEAT].to_vec();
        let score = Score::new("stream", config.bpm, config.time_signature, config.tonality, melody, chords)?;
        if let Some(p) = &a.emit_score {
            write_scores(p, std::slice::from_ref(&score))?;
        }
        if let Some(p) = &a.emit_midi {
            let mut song = score_song(&score);
            let texture: Vec<_> = session.rendered().iter().filter(|e| e.onset < beats as f64).copied().collect();
            song.add_texture(&texture);
            std::fs::write(p, export_midi(&song)?).with_context(|| format!("writing {}", p.display()))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct AnnotationLine<'a> {
    piece: &'a str,
    #[serde(flatten)]
    beat: lookahead::features::BeatAnnotation,
    factor_name: String,
}

fn features_dump(corpus: &Path, piece: Option<&str>) -> anyhow::Result<()> {
    let scores = load_corpus(corpus)?;
    let map = ChordMap::standard();
    let mut out = BufWriter::new(std::io::stdout().lock());
    let mut found = false;
    for s in scores.iter().filter(|s| piece.is_none_or(|p| p == s.id)) {
        found = true;
        for beat in annotate_score(s, map, FeatureConfig::default()) {
            let factor_name = map.name(beat.factor);
            writeln!(out, "{}", serde_json::to_string(&AnnotationLine { piece: &s.id, beat, factor_name })?)?;
        }
    }
    out.flush()?;
    if !found {
        bail!("no piece {:?} in {}", piece.unwrap_or_default(), corpus.display());
    }
    Ok(())
}
