//! Pairwise regularized LR tests over a list of candidate models fitted to one dataset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::OdeModel;
use crate::error::{FitError, TournamentError};
use crate::likelihood::{fit_mle, Dataset, FitOptions, FitResult};
use crate::swtest::{critical_value, decide, sw_test, Decision, SwTestResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TournamentOptions {
    pub alpha: f64,
    pub bonferroni: bool,
    pub fit: FitOptions,
}

impl Default for TournamentOptions {
    fn default() -> Self {
        TournamentOptions {
            alpha: 0.05,
            bonferroni: false,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub wins: usize,
    pub losses: usize,
    pub retains: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub index: usize,
    pub name: String,
    pub total_loglik: Option<f64>,
    pub converged: Option<bool>,
    /// Why the model was excluded, if its fit failed.
    pub error: Option<String>,
    pub tally: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub index_a: usize,
    pub index_b: usize,
    pub model_a: String,
    pub model_b: String,
    pub result: Option<SwTestResult>,
    /// Decision at the Bonferroni-adjusted level, when requested.
    pub adjusted_decision: Option<Decision>,
    /// Why the pair has no result.
    pub error: Option<String>,
}

impl PairRow {
    /// The decision used for tallies: adjusted when available.
    pub fn effective_decision(&self) -> Option<Decision> {
        self.adjusted_decision
            .or_else(|| self.result.as_ref().map(|r| r.decision))
    }
}

#[derive(Debug, Clone)]
pub struct TournamentReport {
    pub alpha: f64,
    pub adjusted_alpha: Option<f64>,
    pub models: Vec<ModelSummary>,
    pub rows: Vec<PairRow>,
    /// Model indices, best first, by (wins, fewer losses, log-likelihood).
    pub ranking: Vec<usize>,
    pub fits: Vec<Result<FitResult, FitError>>,
}

impl TournamentReport {
    pub fn completed_pairs(&self) -> usize {
        self.rows.iter().filter(|r| r.result.is_some()).count()
    }

    /// Total integrator calls spent on fitting.
    pub fn fit_integration_calls(&self) -> usize {
        self.fits
            .iter()
            .filter_map(|f| f.as_ref().ok())
            .map(|f| f.convergence.integration_calls)
            .sum()
    }

    fn retally(&mut self) {
        for m in &mut self.models {
            m.tally = Tally::default();
        }
        for row in &self.rows {
            let (a, b) = (row.index_a, row.index_b);
            match row.effective_decision() {
                Some(Decision::FavorA) => {
                    self.models[a].tally.wins += 1;
                    self.models[b].tally.losses += 1;
                }
                Some(Decision::FavorB) => {
                    self.models[b].tally.wins += 1;
                    self.models[a].tally.losses += 1;
                }
                Some(Decision::Retain) => {
                    self.models[a].tally.retains += 1;
                    self.models[b].tally.retains += 1;
                }
                None => {}
            }
        }
        let mut order: Vec<usize> = (0..self.models.len()).collect();
        order.sort_by(|&x, &y| {
            let (mx, my) = (&self.models[x], &self.models[y]);
            let fitted = |m: &ModelSummary| m.total_loglik.is_some();
            fitted(my)
                .cmp(&fitted(mx))
                .then(my.tally.wins.cmp(&mx.tally.wins))
                .then(mx.tally.losses.cmp(&my.tally.losses))
                .then(
                    my.total_loglik
                        .unwrap_or(f64::NEG_INFINITY)
                        .total_cmp(&mx.total_loglik.unwrap_or(f64::NEG_INFINITY)),
                )
                .then(x.cmp(&y))
        });
        self.ranking = order;
    }
}

/// Number of unordered pairs among `n` models.
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Fit every model once, then test every pair `(a, b)` with `a < b`.
/// A model whose fit fails is excluded and its pairs carry the error.
pub fn run_tournament(
    models: &[OdeModel],
    data: &Dataset,
    inits: &[Vec<f64>],
    opts: &TournamentOptions,
) -> Result<TournamentReport, TournamentError> {
    if models.len() < 2 {
        return Err(TournamentError::TooFewModels(models.len()));
    }
    if inits.len() != models.len() {
        return Err(TournamentError::InitCount {
            models: models.len(),
            inits: inits.len(),
        });
    }
    critical_value(opts.alpha)?;

    let fits: Vec<Result<FitResult, FitError>> = models
        .par_iter()
        .zip(inits.par_iter())
        .map(|(m, init)| fit_mle(m, data, init, &opts.fit))
        .collect();
    if fits.iter().filter(|f| f.is_ok()).count() < 2 {
        return Err(TournamentError::TooFewFitted);
    }

    let pairs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|a| (a + 1..models.len()).map(move |b| (a, b)))
        .collect();
    let rows: Vec<PairRow> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (result, error) = match (&fits[a], &fits[b]) {
                (Ok(fa), Ok(fb)) => match sw_test(fa, fb, opts.alpha) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                },
                (Err(e), _) => (None, Some(format!("model {} not fitted: {e}", models[a].name()))),
                (_, Err(e)) => (None, Some(format!("model {} not fitted: {e}", models[b].name()))),
            };
            PairRow {
                index_a: a,
                index_b: b,
                model_a: models[a].name().to_string(),
                model_b: models[b].name().to_string(),
                result,
                adjusted_decision: None,
                error,
            }
        })
        .collect();

    let summaries = models
        .iter()
        .zip(&fits)
        .enumerate()
        .map(|(index, (m, f))| ModelSummary {
            index,
            name: m.name().to_string(),
            total_loglik: f.as_ref().ok().map(|f| f.total_loglik),
            converged: f.as_ref().ok().map(|f| f.convergence.converged),
            error: f.as_ref().err().map(|e| e.to_string()),
            tally: Tally::default(),
        })
        .collect();

    let mut report = TournamentReport {
        alpha: opts.alpha,
        adjusted_alpha: None,
        models: summaries,
        rows,
        ranking: Vec::new(),
        fits,
    };
    report.retally();
    if opts.bonferroni {
        report = bonferroni_adjust(report);
    }
    Ok(report)
}

/// Recompute every decision at `alpha / completed pairs` and re-tally.
pub fn bonferroni_adjust(mut report: TournamentReport) -> TournamentReport {
    let pairs = report.completed_pairs().max(1);
    let adjusted = report.alpha / pairs as f64;
    for row in &mut report.rows {
        row.adjusted_decision = row
            .result
            .as_ref()
            .and_then(|r| decide(r.t_stat, adjusted).ok());
    }
    report.adjusted_alpha = Some(adjusted);
    report.retally();
    report
}
