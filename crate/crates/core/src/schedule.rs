//! Stage manifests for multilingual training: continual (one new language
//! per stage plus retained samples of earlier ones), sequential and mixed.

use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::derive_rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("no languages given")]
    Empty,
    #[error("language `{0}` has an empty corpus")]
    EmptyCorpus(String),
    #[error("language `{0}` listed twice")]
    Duplicate(String),
    #[error("override `{0}` is not of the form stage:lang:count")]
    BadOverride(String),
    #[error("override for stage {stage}: language `{language}` is not trained in that stage")]
    UnknownLanguage { stage: usize, language: String },
    #[error("stage {stage}: {count} records requested for `{language}` but only {available} available")]
    TooMany {
        stage: usize,
        language: String,
        count: usize,
        available: usize,
    },
    #[error("retain fraction {0} not in (0,1]")]
    BadRetain(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plan {
    Continual,
    Sequential,
    Mixed,
}

impl FromStr for Plan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "continual" => Ok(Plan::Continual),
            "sequential" => Ok(Plan::Sequential),
            "mixed" => Ok(Plan::Mixed),
            _ => Err(format!("unknown plan `{s}`")),
        }
    }
}

/// Forces the record count of one language in one stage (1-based).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Override {
    pub stage: usize,
    pub language: String,
    pub count: usize,
}

impl FromStr for Override {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScheduleError::BadOverride(s.to_owned());
        let mut parts = s.split(':');
        let (Some(st), Some(lang), Some(n), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad());
        };
        let stage: usize = st.parse().map_err(|_| bad())?;
        if stage == 0 || lang.is_empty() {
            return Err(bad());
        }
        Ok(Override {
            stage,
            language: lang.to_owned(),
            count: n.parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    /// Fraction of a language kept once a newer language arrives.
    pub retain: f64,
    pub seed: u64,
    /// Draw later-stage samples from the previous stage's ids instead of
    /// the full corpus.
    pub nested: bool,
    pub overrides: Vec<Override>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            retain: 0.5,
            seed: 0,
            nested: true,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSlice {
    pub language: String,
    pub count: usize,
    /// Indices into the language's corpus, ascending.
    pub ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    /// 1-based.
    pub stage: usize,
    pub languages: Vec<LanguageSlice>,
}

impl StageManifest {
    pub fn total(&self) -> usize {
        self.languages.iter().map(|l| l.count).sum()
    }

    pub fn count_of(&self, language: &str) -> Option<usize> {
        self.languages.iter().find(|l| l.language == language).map(|l| l.count)
    }
}

/// Planned (language, count) per stage before overrides and sampling.
fn plan_counts(sizes: &[(String, usize)], plan: Plan, retain: f64) -> Vec<Vec<(String, usize)>> {
    match plan {
        Plan::Mixed => vec![sizes.to_vec()],
        Plan::Sequential => sizes.iter().map(|s| vec![s.clone()]).collect(),
        Plan::Continual => (0..sizes.len())
            .map(|k| {
                sizes[..=k]
                    .iter()
                    .enumerate()
                    .map(|(j, (lang, n))| {
                        let count = if j == k { *n } else { (retain * *n as f64).round() as usize };
                        (lang.clone(), count.clamp(1, *n))
                    })
                    .collect()
            })
            .collect(),
    }
}

/// Builds the stage manifests for corpora listed in training order.
pub fn build_stages(sizes: &[(String, usize)], plan: Plan, cfg: &ScheduleConfig) -> Result<Vec<StageManifest>, ScheduleError> {
    if sizes.is_empty() {
        return Err(ScheduleError::Empty);
    }
    if !(cfg.retain > 0.0 && cfg.retain <= 1.0) {
        return Err(ScheduleError::BadRetain(cfg.retain.to_string()));
    }
    for (i, (lang, n)) in sizes.iter().enumerate() {
        if *n == 0 {
            return Err(ScheduleError::EmptyCorpus(lang.clone()));
        }
        if sizes[..i].iter().any(|(l, _)| l == lang) {
            return Err(ScheduleError::Duplicate(lang.clone()));
        }
    }
    let mut stages = plan_counts(sizes, plan, cfg.retain);
    for o in &cfg.overrides {
        let slot = stages
            .get_mut(o.stage - 1)
            .and_then(|st| st.iter_mut().find(|(l, _)| *l == o.language))
            .ok_or_else(|| ScheduleError::UnknownLanguage {
                stage: o.stage,
                language: o.language.clone(),
            })?;
        slot.1 = o.count;
    }
    let full = |lang: &str| sizes.iter().find(|(l, _)| l == lang).map(|(_, n)| *n).unwrap_or(0);
    let mut previous: Vec<(String, Vec<usize>)> = Vec::new();
    let mut out = Vec::with_capacity(stages.len());
    for (k, stage) in stages.into_iter().enumerate() {
        let mut languages = Vec::with_capacity(stage.len());
        for (lang, count) in stage {
            let prior = previous.iter().find(|(l, _)| *l == lang).map(|(_, ids)| ids);
            let pool: Vec<usize> = match prior {
                Some(ids) if cfg.nested => ids.clone(),
                _ => (0..full(&lang)).collect(),
            };
            if count > pool.len() {
                return Err(ScheduleError::TooMany {
                    stage: k + 1,
                    language: lang,
                    count,
                    available: pool.len(),
                });
            }
            let mut ids: Vec<usize> = if count == pool.len() {
                pool
            } else {
                let mut rng = derive_rng(cfg.seed, &format!("stage{}/{lang}", k + 1));
                sample(&mut rng, pool.len(), count).into_iter().map(|i| pool[i]).collect()
            };
            ids.sort_unstable();
            languages.push(LanguageSlice {
                language: lang,
                count,
                ids,
            });
        }
        previous = languages.iter().map(|l| (l.language.clone(), l.ids.clone())).collect();
        out.push(StageManifest { stage: k + 1, languages });
    }
    Ok(out)
}
