//! Parent selection: tournament (top-W by mean score) and lexicase.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::Selection;
use crate::types::{Candidate, CandidateId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankError {
    #[error("cannot select from an empty population")]
    EmptyPopulation,
    #[error("candidate {id} has {found} test scores, expected {expected}")]
    ScoreLengthMismatch {
        id: CandidateId,
        expected: usize,
        found: usize,
    },
    #[error("candidate {0} has not been evaluated")]
    Unevaluated(CandidateId),
}

fn scores(c: &Candidate) -> Result<&[f64], RankError> {
    c.per_test_scores.as_deref().ok_or(RankError::Unevaluated(c.id))
}

/// The `min(w, n)` candidates with the highest average score; ties go to the
/// lower id.
pub fn tournament_select(population: &[Candidate], w: usize) -> Result<Vec<&Candidate>, RankError> {
    if population.is_empty() {
        return Err(RankError::EmptyPopulation);
    }
    let mut ranked: Vec<(&Candidate, f64)> = population
        .iter()
        .map(|c| c.avg_score.map(|a| (c, a)).ok_or(RankError::Unevaluated(c.id)))
        .collect::<Result<_, _>>()?;
    ranked.sort_by(|(a, sa), (b, sb)| sb.total_cmp(sa).then(a.id.cmp(&b.id)));
    Ok(ranked.into_iter().take(w).map(|(c, _)| c).collect())
}

/// Lexicase selection of `min(w, n)` distinct candidates. Each pick shuffles
/// the test order, keeps the not-yet-selected candidates that score best on
/// each test in turn, and breaks a remaining tie uniformly at random.
pub fn lexicase_select<'a, R: Rng + ?Sized>(
    population: &'a [Candidate],
    w: usize,
    rng: &mut R,
) -> Result<Vec<&'a Candidate>, RankError> {
    let first = population.first().ok_or(RankError::EmptyPopulation)?;
    let tests = scores(first)?.len();
    let table: Vec<&[f64]> = population
        .iter()
        .map(|c| {
            let s = scores(c)?;
            if s.len() != tests || tests == 0 {
                return Err(RankError::ScoreLengthMismatch {
                    id: c.id,
                    expected: tests.max(1),
                    found: s.len(),
                });
            }
            Ok(s)
        })
        .collect::<Result<_, _>>()?;

    let mut remaining: Vec<usize> = (0..population.len()).collect();
    let mut order: Vec<usize> = (0..tests).collect();
    let mut chosen = Vec::with_capacity(w.min(population.len()));
    while chosen.len() < w && !remaining.is_empty() {
        order.shuffle(rng);
        let mut pool = remaining.clone();
        for &t in &order {
            if pool.len() == 1 {
                break;
            }
            let best = pool.iter().map(|&i| table[i][t]).fold(f64::NEG_INFINITY, f64::max);
            pool.retain(|&i| table[i][t] == best);
        }
        let pick = if pool.len() == 1 {
            pool[0]
        } else {
            pool[rng.gen_range(0..pool.len())]
        };
        remaining.retain(|&i| i != pick);
        chosen.push(&population[pick]);
    }
    Ok(chosen)
}

/// Random stream for the selection round of `generation` in a run seeded
/// with `seed`.
pub fn selection_rng(seed: u64, generation: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(generation));
    rng
}

pub fn select(
    strategy: Selection,
    population: &[Candidate],
    w: usize,
    seed: u64,
    generation: u32,
) -> Result<Vec<&Candidate>, RankError> {
    match strategy {
        Selection::Tournament => tournament_select(population, w),
        Selection::Lexicase => lexicase_select(population, w, &mut selection_rng(seed, generation)),
    }
}
