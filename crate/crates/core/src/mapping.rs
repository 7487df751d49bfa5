//! Answer mapping by embedding similarity, and ensemble combiners.
//!
//! A free-text completion is embedded together with every choice in a single
//! batch; the choice with the highest cosine wins, lowest index on ties.

use serde::{Deserialize, Serialize};

use crate::backends::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::text::normalize_text;

/// Score assigned to a choice that cannot be compared (zero vector) and to
/// every choice of a degenerate completion.
pub const DEGENERATE_SCORE: f64 = -1.0;

/// Per-choice scores from one source. Cosine scores, so no sum-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    pub choice_texts: Vec<String>,
    pub scores: Vec<f64>,
    pub source: String,
}

impl ScoreDistribution {
    pub fn new(choice_texts: Vec<String>, scores: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if choice_texts.len() != scores.len() {
            return Err(Error::usage(format!(
                "{} choices but {} scores",
                choice_texts.len(),
                scores.len()
            )));
        }
        if choice_texts.is_empty() {
            return Err(Error::usage("score distribution over an empty choice set"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::usage("scores must be finite"));
        }
        Ok(ScoreDistribution {
            choice_texts,
            scores,
            source: source.into(),
        })
    }

    /// Highest score, lowest index on ties.
    pub fn argmax(&self) -> ChoicePick {
        let mut best = 0;
        for (i, &s) in self.scores.iter().enumerate().skip(1) {
            if s > self.scores[best] {
                best = i;
            }
        }
        self.pick(best)
    }

    pub fn pick(&self, index: usize) -> ChoicePick {
        ChoicePick {
            index,
            text: self.choice_texts[index].clone(),
            score: self.scores[index],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoicePick {
    pub index: usize,
    pub text: String,
    pub score: f64,
}

/// Outcome of [`map_to_choice`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedAnswer {
    pub distribution: ScoreDistribution,
    pub pick: ChoicePick,
    /// The completion normalized to nothing; pick is index 0 at score -1.
    pub degenerate: bool,
    /// The completion equalled a choice after normalization.
    pub exact_match: bool,
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::usage(format!(
            "cosine over vectors of dim {} and {}",
            u.dim(),
            v.dim()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate("cosine with a zero vector".into()));
    }
    let dot: f64 = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Map `completion` onto `choices`.
///
/// When the normalized completion equals a normalized choice, that choice
/// is picked regardless of provider noise in the scores.
pub async fn map_to_choice(
    completion: &str,
    choices: &[String],
    embedder: &dyn Embedder,
    source: &str,
) -> Result<MappedAnswer> {
    if choices.is_empty() {
        return Err(Error::usage("map_to_choice needs at least one choice"));
    }
    let norm = normalize_text(completion);
    if norm.is_empty() {
        let dist = ScoreDistribution::new(choices.to_vec(), vec![DEGENERATE_SCORE; choices.len()], source)?;
        let pick = dist.pick(0);
        return Ok(MappedAnswer {
            distribution: dist,
            pick,
            degenerate: true,
            exact_match: false,
        });
    }
    let norm_choices: Vec<String> = choices.iter().map(|c| normalize_text(c).into_string()).collect();
    let mut batch = Vec::with_capacity(choices.len() + 1);
    batch.push(norm.as_str().to_string());
    batch.extend(norm_choices.iter().cloned());
    let vecs = embedder.embed(&batch).await?;
    if vecs.len() != batch.len() {
        return Err(Error::usage(format!(
            "embedder returned {} vectors for {} texts",
            vecs.len(),
            batch.len()
        )));
    }
    let scores = vecs[1..]
        .iter()
        .map(|c| match cosine(&vecs[0], c) {
            Ok(s) => Ok(s),
            Err(Error::Degenerate(_)) => Ok(DEGENERATE_SCORE),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<f64>>>()?;
    let dist = ScoreDistribution::new(choices.to_vec(), scores, source)?;
    let exact = norm_choices.iter().position(|c| c == norm.as_str());
    let pick = match exact {
        Some(i) => dist.pick(i),
        None => dist.argmax(),
    };
    Ok(MappedAnswer {
        distribution: dist,
        pick,
        degenerate: false,
        exact_match: exact.is_some(),
    })
}

/// Elementwise mean of aligned distributions.
pub fn ensemble_average(dists: &[ScoreDistribution]) -> Result<ScoreDistribution> {
    let first = dists
        .first()
        .ok_or_else(|| Error::usage("ensemble_average needs at least one distribution"))?;
    if let Some(bad) = dists.iter().find(|d| d.choice_texts != first.choice_texts) {
        return Err(Error::usage(format!(
            "distribution from `{}` is not aligned with `{}`",
            bad.source, first.source
        )));
    }
    let n = dists.len() as f64;
    let scores = (0..first.scores.len())
        .map(|j| dists.iter().map(|d| d.scores[j]).sum::<f64>() / n)
        .collect();
    ScoreDistribution::new(first.choice_texts.clone(), scores, "ensemble-avg")
}

/// Plurality vote over keys; ties go to the key first reached in
/// `fallback_order` (positions into `keys`, highest priority first; an
/// empty order means declared order). Returns the winning position.
pub fn plurality<K: PartialEq>(keys: &[K], fallback_order: &[usize]) -> Option<usize> {
    if keys.is_empty() {
        return None;
    }
    let natural: Vec<usize>;
    let order = if fallback_order.is_empty() {
        natural = (0..keys.len()).collect();
        &natural
    } else {
        fallback_order
    };
    let rank = |pos: usize| order.iter().position(|&p| p == pos).unwrap_or(order.len() + pos);
    let count = |k: &K| keys.iter().filter(|x| *x == k).count();
    (0..keys.len()).min_by_key(|&pos| {
        // The highest-priority voter for this key speaks for it.
        let best_rank = (0..keys.len())
            .filter(|&j| keys[j] == keys[pos])
            .map(rank)
            .min()
            .unwrap_or(usize::MAX);
        (std::cmp::Reverse(count(&keys[pos])), best_rank, rank(pos))
    })
}

/// Majority vote over per-expert picks, ties to the earliest expert.
pub fn majority_vote(picks: &[ChoicePick], fallback_order: &[usize]) -> Result<ChoicePick> {
    let indices: Vec<usize> = picks.iter().map(|p| p.index).collect();
    let winner =
        plurality(&indices, fallback_order).ok_or_else(|| Error::usage("majority_vote needs at least one pick"))?;
    Ok(picks[winner].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::TrigramEmbedder;

    fn ev(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    fn pick(i: usize) -> ChoicePick {
        ChoicePick {
            index: i,
            text: format!("c{i}"),
            score: 0.0,
        }
    }

    fn strings(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn cosine_examples() {
        let x = ev(&[0.3, -1.2, 4.0]);
        assert!((cosine(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(cosine(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
        // 32 / (sqrt(14) * sqrt(77))
        let c = cosine(&ev(&[1.0, 2.0, 3.0]), &ev(&[4.0, 5.0, 6.0])).unwrap();
        assert!((c - 0.974631846).abs() < 1e-9, "{c}");
        assert!((c - 32.0 / (14f64.sqrt() * 77f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(cosine(&ev(&[1.0]), &ev(&[1.0, 2.0])), Err(Error::Usage(_))));
        assert!(matches!(
            cosine(&ev(&[0.0, 0.0]), &ev(&[1.0, 2.0])),
            Err(Error::Degenerate(_))
        ));
    }

    #[tokio::test]
    async fn exact_match_short_circuit() {
        let choices = strings(&["water", "grass", "sand", "rocks"]);
        let m = map_to_choice("Grass.", &choices, &TrigramEmbedder, "t").await.unwrap();
        assert_eq!(m.pick.index, 1);
        assert_eq!(m.pick.text, "grass");
        assert!(m.exact_match);
        assert!((m.pick.score - 1.0).abs() < 1e-9);
    }

    #[tokio::test]
    async fn nearest_choice_by_trigrams() {
        // Oracle (tests/oracles/trigram_oracle.py): 0.335, 0.816, 0.224.
        let choices = strings(&["kayaking", "no parking zone", "swimming"]);
        let m = map_to_choice("no parking", &choices, &TrigramEmbedder, "t")
            .await
            .unwrap();
        assert_eq!(m.pick.index, 1);
        assert!(!m.exact_match);
        let expected = [0.335410196624968, 0.816496580927726, 0.223606797749979];
        for (s, e) in m.distribution.scores.iter().zip(expected) {
            assert!((s - e).abs() < 1e-12, "{s} vs {e}");
        }
    }

    #[tokio::test]
    async fn degenerate_completion() {
        let choices = strings(&["yes", "no"]);
        let m = map_to_choice("  . ", &choices, &TrigramEmbedder, "t").await.unwrap();
        assert!(m.degenerate);
        assert_eq!(m.pick.index, 0);
        assert_eq!(m.pick.score, -1.0);
        assert!(matches!(
            map_to_choice("x", &[], &TrigramEmbedder, "t").await,
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn average_examples() {
        let c = strings(&["a", "b"]);
        let a = ScoreDistribution::new(c.clone(), vec![0.2, 0.8], "x").unwrap();
        let b = ScoreDistribution::new(c.clone(), vec![0.6, 0.4], "y").unwrap();
        assert_eq!(ensemble_average(std::slice::from_ref(&a)).unwrap().scores, a.scores);
        let m = ensemble_average(&[a.clone(), b]).unwrap();
        assert!((m.scores[0] - 0.4).abs() < 1e-15 && (m.scores[1] - 0.6).abs() < 1e-15);
        assert_eq!(m.source, "ensemble-avg");
        let misaligned = ScoreDistribution::new(strings(&["b", "a"]), vec![0.1, 0.2], "z").unwrap();
        assert!(matches!(ensemble_average(&[a, misaligned]), Err(Error::Usage(_))));
        assert!(ensemble_average(&[]).is_err());
    }

    #[test]
    fn argmax_ties_to_lowest_index() {
        let d = ScoreDistribution::new(strings(&["a", "b", "c"]), vec![0.5, 0.9, 0.9], "x").unwrap();
        assert_eq!(d.argmax().index, 1);
    }

    #[test]
    fn vote_examples() {
        assert_eq!(majority_vote(&[pick(0), pick(0), pick(1)], &[]).unwrap().index, 0);
        assert_eq!(majority_vote(&[pick(0), pick(1)], &[0, 1]).unwrap().index, 0);
        assert_eq!(majority_vote(&[pick(0), pick(1)], &[1, 0]).unwrap().index, 1);
        assert!(majority_vote(&[], &[]).is_err());
    }

    #[test]
    fn vote_two_two_one() {
        // Experts e0..e4 pick [B, A, C, A, B]: A and B both have two votes.
        // Under declared order e0 owns B, so B wins; if e1 ranks first, A wins.
        let picks = [pick(1), pick(0), pick(2), pick(0), pick(1)];
        assert_eq!(majority_vote(&picks, &[0, 1, 2, 3, 4]).unwrap().index, 1);
        assert_eq!(majority_vote(&picks, &[1, 0, 2, 3, 4]).unwrap().index, 0);
        assert_eq!(majority_vote(&picks, &[2, 3, 4, 0, 1]).unwrap().index, 0);
    }
}
