use anyhow::Context;
use std::path::Path;
use std::sync::Arc;

use lookahead::arranger::{Arranger, ArrangerModel, RuleArranger};
use lookahead::pipeline::Engines;
use lookahead::predictor::{CrfModel, EchoPredictor, Predictor};
use lookahead::texture::PatternLibrary;
use lookahead::Tonality;

use crate::EngineArgs;

pub fn load_arranger(spec: &str) -> anyhow::Result<Arc<dyn Arranger>> {
    Ok(match spec {
        "rule" => Arc::new(RuleArranger::default()),
        path => Arc::new(ArrangerModel::load(Path::new(path)).with_context(|| format!("loading arranger {path}"))?),
    })
}

pub fn load_predictor(spec: &str, tonality: Tonality) -> anyhow::Result<Arc<dyn Predictor>> {
    Ok(match spec {
        "echo" => Arc::new(EchoPredictor { fallback: tonality.tonic_triad(48) }),
        path => Arc::new(CrfModel::load(Path::new(path)).with_context(|| format!("loading predictor {path}"))?),
    })
}

pub fn load_patterns(path: Option<&Path>) -> anyhow::Result<Arc<PatternLibrary>> {
    Ok(Arc::new(match path {
        Some(p) => PatternLibrary::load(p).with_context(|| format!("loading patterns {}", p.display()))?,
        None => PatternLibrary::standard().clone(),
    }))
}

pub fn load(args: &EngineArgs, tonality: Tonality) -> anyhow::Result<Engines> {
    Ok(Engines {
        arranger: load_arranger(&args.arranger)?,
        predictor: load_predictor(&args.predictor, tonality)?,
        patterns: load_patterns(args.patterns.as_deref())?,
    })
}
