//! Language curriculum of a run: how acquisitions deviate from each
//! language's share of the available data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExperimentError, Result};
use crate::acquisition::AcquisitionRecord;
use crate::corpus::LanguageTag;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumRound {
    pub round: u32,
    /// Cost acquired in this round per language.
    pub acquired: BTreeMap<LanguageTag, u64>,
    /// Cost acquired in rounds `1..=round` per language.
    pub cumulative: BTreeMap<LanguageTag, u64>,
    /// Relative deviation `(cumulative − α·b·round) / (α·b·round)`.
    pub relative: BTreeMap<LanguageTag, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumReport {
    /// Configured acquisition budget per round.
    pub per_round_budget: u64,
    /// Share of each language in the available data.
    pub alpha: BTreeMap<LanguageTag, f64>,
    pub rounds: Vec<CurriculumRound>,
}

impl CurriculumReport {
    /// `Σ_j α_j (1 + r_j) − cumulative_total / (round · b)` for one round;
    /// zero up to rounding.
    pub fn identity_residual(&self, round: &CurriculumRound) -> f64 {
        let lhs: f64 = self.alpha.iter().map(|(l, a)| a * (1.0 + round.relative[l])).sum();
        let total: u64 = round.cumulative.values().sum();
        lhs - total as f64 / (round.round as f64 * self.per_round_budget as f64)
    }

    pub fn max_identity_residual(&self) -> f64 {
        self.rounds.iter().map(|r| self.identity_residual(r).abs()).fold(0.0, f64::max)
    }
}

/// Builds the curriculum of acquisition rounds `1..=acquisition_rounds`.
///
/// `composition` is the available cost per language; every language in it
/// must have a positive share, and every acquired language must appear in it.
pub fn curriculum(
    log: &[AcquisitionRecord],
    composition: &BTreeMap<LanguageTag, u64>,
    per_round_budget: u64,
    acquisition_rounds: u32,
) -> Result<CurriculumReport> {
    if per_round_budget == 0 {
        return Err(ExperimentError::Config("per-round budget must be positive".into()));
    }
    let total: u64 = composition.values().sum();
    if let Some((lang, _)) = composition.iter().find(|(_, &c)| c == 0) {
        return Err(ExperimentError::Config(format!(
            "language {lang} has no available data; its relative acquisition is undefined"
        )));
    }
    if composition.is_empty() {
        return Err(ExperimentError::Config("empty language composition".into()));
    }
    let alpha: BTreeMap<LanguageTag, f64> = composition.iter().map(|(l, &c)| (l.clone(), c as f64 / total as f64)).collect();

    let mut per_round: Vec<BTreeMap<LanguageTag, u64>> = vec![composition.keys().map(|l| (l.clone(), 0)).collect(); acquisition_rounds as usize];
    for rec in log {
        if rec.round == 0 || rec.round > acquisition_rounds {
            return Err(ExperimentError::Config(format!(
                "acquisition of {} in round {} outside 1..={acquisition_rounds}",
                rec.instance_id, rec.round
            )));
        }
        let slot = per_round[rec.round as usize - 1]
            .get_mut(&rec.language)
            .ok_or_else(|| ExperimentError::Config(format!("acquired language {} is not in the composition", rec.language)))?;
        *slot += rec.cost;
    }

    let b = per_round_budget as f64;
    let mut cumulative: BTreeMap<LanguageTag, u64> = composition.keys().map(|l| (l.clone(), 0)).collect();
    let rounds = per_round
        .into_iter()
        .enumerate()
        .map(|(i, acquired)| {
            let round = i as u32 + 1;
            for (l, c) in &acquired {
                *cumulative.get_mut(l).expect("same keys") += c;
            }
            let relative = cumulative
                .iter()
                .map(|(l, &c)| {
                    let expected = alpha[l] * b * round as f64;
                    (l.clone(), (c as f64 - expected) / expected)
                })
                .collect();
            CurriculumRound {
                round,
                acquired,
                cumulative: cumulative.clone(),
                relative,
            }
        })
        .collect();
    Ok(CurriculumReport {
        per_round_budget,
        alpha,
        rounds,
    })
}
