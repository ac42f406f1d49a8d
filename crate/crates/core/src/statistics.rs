//! Evaluation metrics and the permutation significance test.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{stable_sum, Direction, DirectionScores, DirectionVerdict, GoldDirection, TranslationType};

pub const DEFAULT_PERMUTATIONS: u64 = 10_000;
pub const DEFAULT_EXACT_MAX_SEGMENTS: usize = 20;
pub const DEFAULT_BUCKET_WIDTH: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no items with gold direction {0}{context}", context = .1.as_deref().map(|c| format!(" in {c}")).unwrap_or_default())]
    NoItemsForDirection(Direction, Option<String>),
    #[error("item {0} has gold direction {1}, expected x2y or y2x")]
    UndirectedGold(usize, &'static str),
    #[error("empty input")]
    EmptyInput,
    #[error("permutation test needs at least {need} segments, got {got}")]
    TooFewSegments { need: usize, got: usize },
    #[error("exhaustive permutation test is limited to {max} segments, got {got}")]
    TooManySegments { max: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// How tied verdicts enter accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    /// Ties are ordinary Y2X predictions.
    #[default]
    CountAsY2X,
    /// Tied items are left out of numerators and denominators.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionAccuracy {
    pub acc_xy: f64,
    pub acc_yx: f64,
    pub n_xy: usize,
    pub n_yx: usize,
    pub correct_xy: usize,
    pub correct_yx: usize,
    pub ties_xy: usize,
    pub ties_yx: usize,
}

pub fn accuracy_by_direction(items: &[(DirectionVerdict, GoldDirection)]) -> Result<DirectionAccuracy, StatsError> {
    accuracy_by_direction_with(items, TiePolicy::default())
}

pub fn accuracy_by_direction_with(
    items: &[(DirectionVerdict, GoldDirection)],
    ties: TiePolicy,
) -> Result<DirectionAccuracy, StatsError> {
    let mut n = [0usize; 2];
    let mut correct = [0usize; 2];
    let mut tie_counts = [0usize; 2];
    for (i, (verdict, gold)) in items.iter().enumerate() {
        let gold = gold.direction().ok_or(StatsError::UndirectedGold(i, gold.as_str()))?;
        let slot = gold as usize;
        if verdict.tie {
            tie_counts[slot] += 1;
            if ties == TiePolicy::Exclude {
                continue;
            }
        }
        n[slot] += 1;
        if verdict.predicted == gold {
            correct[slot] += 1;
        }
    }
    for d in [Direction::X2Y, Direction::Y2X] {
        if n[d as usize] == 0 {
            return Err(StatsError::NoItemsForDirection(d, None));
        }
    }
    Ok(DirectionAccuracy {
        acc_xy: correct[0] as f64 / n[0] as f64,
        acc_yx: correct[1] as f64 / n[1] as f64,
        n_xy: n[0],
        n_yx: n[1],
        correct_xy: correct[0],
        correct_yx: correct[1],
        ties_xy: tie_counts[0],
        ties_yx: tie_counts[1],
    })
}

/// |acc_xy - acc_yx|: 0 for an unbiased detector, 1 for one that always
/// predicts the same direction.
pub fn directional_bias(acc_xy: f64, acc_yx: f64) -> f64 {
    (acc_xy - acc_yx).abs()
}

/// Fractions of verdicts predicting X2Y and Y2X.
pub fn prediction_ratio(verdicts: &[DirectionVerdict]) -> Result<(f64, f64), StatsError> {
    if verdicts.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let xy = verdicts.iter().filter(|v| v.predicted == Direction::X2Y).count();
    let total = verdicts.len() as f64;
    Ok((xy as f64 / total, (verdicts.len() - xy) as f64 / total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub index: usize,
    /// Inclusive lower bound in characters.
    pub lower: usize,
    /// Exclusive upper bound in characters.
    pub upper: usize,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Accuracy per half-open source-length bucket `[k*w, (k+1)*w)`, both gold
/// directions pooled. Items without a directional gold label are skipped and
/// empty buckets are omitted.
pub fn length_bucket_accuracy(
    items: &[(usize, DirectionVerdict, GoldDirection)],
    bucket_width: usize,
) -> Result<Vec<LengthBucket>, StatsError> {
    if bucket_width == 0 {
        return Err(StatsError::InvalidArgument("bucket width must be at least 1".into()));
    }
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (len, verdict, gold) in items {
        let Some(gold) = gold.direction() else { continue };
        let entry = buckets.entry(len / bucket_width).or_default();
        entry.0 += 1;
        if verdict.predicted == gold {
            entry.1 += 1;
        }
    }
    Ok(buckets
        .into_iter()
        .map(|(index, (n, correct))| LengthBucket {
            index,
            lower: index * bucket_width,
            upper: (index + 1) * bucket_width,
            n,
            correct,
            accuracy: correct as f64 / n as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PermutationMethod {
    MonteCarlo,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PValueReport {
    /// Pooled log P_tok(y|x) minus pooled log P_tok(x|y).
    pub observed_stat: f64,
    pub p_value: f64,
    pub n_permutations: u64,
    /// `None` for exhaustive enumeration.
    pub seed: Option<u64>,
    pub method: PermutationMethod,
    pub extreme_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationConfig {
    pub n_permutations: u64,
    pub seed: u64,
    /// Use `(count + 1) / (N + 1)` instead of `count / N` before doubling.
    pub small_sample_correction: bool,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        PermutationConfig {
            n_permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            small_sample_correction: false,
        }
    }
}

/// Reusable buffers for recomputing the pooled statistic under swaps.
struct SwapStatistic<'a> {
    scores: &'a [DirectionScores],
    xy: Vec<f64>,
    yx: Vec<f64>,
}

impl<'a> SwapStatistic<'a> {
    fn new(scores: &'a [DirectionScores]) -> Self {
        SwapStatistic {
            scores,
            xy: Vec::with_capacity(scores.len()),
            yx: Vec::with_capacity(scores.len()),
        }
    }

    /// Statistic with segment `i` swapped wherever `swapped(i)` holds. Swapping
    /// moves the whole (sum, count) pair.
    fn eval(&mut self, mut swapped: impl FnMut(usize) -> bool) -> f64 {
        self.xy.clear();
        self.yx.clear();
        let (mut count_xy, mut count_yx) = (0usize, 0usize);
        for (i, s) in self.scores.iter().enumerate() {
            let s = if swapped(i) { s.swapped() } else { *s };
            self.xy.push(s.sum_xy);
            self.yx.push(s.sum_yx);
            count_xy += s.count_xy;
            count_yx += s.count_yx;
        }
        stable_sum(&self.xy) / count_xy as f64 - stable_sum(&self.yx) / count_yx as f64
    }
}

fn is_extreme(d_perm: f64, d_obs: f64) -> bool {
    d_obs == 0.0 || d_perm * d_obs.signum() >= d_obs.abs()
}

/// Document statistic D: pooled log P_tok(y|x) - pooled log P_tok(x|y).
pub fn document_statistic(doc_scores: &[DirectionScores]) -> Result<f64, StatsError> {
    if doc_scores.is_empty() {
        return Err(StatsError::TooFewSegments { need: 1, got: 0 });
    }
    Ok(SwapStatistic::new(doc_scores).eval(|_| false))
}

/// Monte Carlo permutation test of the document statistic.
///
/// Each permutation flips one coin per segment in segment order (the top bit
/// of one `next_u64` draw from ChaCha20 seeded with `config.seed`) and swaps
/// the segment's two directions on heads. A permutation counts as extreme
/// when its statistic lies at least as far as the observed one in the
/// observed direction; every permutation counts when the observed statistic
/// is zero. The reported p-value is twice the extreme fraction, capped at 1.
pub fn permutation_test(
    doc_scores: &[DirectionScores],
    config: &PermutationConfig,
) -> Result<PValueReport, StatsError> {
    if doc_scores.len() < 2 {
        return Err(StatsError::TooFewSegments {
            need: 2,
            got: doc_scores.len(),
        });
    }
    if config.n_permutations == 0 {
        return Err(StatsError::InvalidArgument("n_permutations must be at least 1".into()));
    }
    let mut stat = SwapStatistic::new(doc_scores);
    let observed = stat.eval(|_| false);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut extreme = 0u64;
    for _ in 0..config.n_permutations {
        let d = stat.eval(|_| rng.next_u64() >> 63 == 1);
        if is_extreme(d, observed) {
            extreme += 1;
        }
    }
    let fraction = if config.small_sample_correction {
        (extreme + 1) as f64 / (config.n_permutations + 1) as f64
    } else {
        extreme as f64 / config.n_permutations as f64
    };
    Ok(PValueReport {
        observed_stat: observed,
        p_value: (2.0 * fraction).min(1.0),
        n_permutations: config.n_permutations,
        seed: Some(config.seed),
        method: PermutationMethod::MonteCarlo,
        extreme_count: extreme,
    })
}

/// Exact version of [`permutation_test`] over all `2^n` swap subsets.
pub fn exact_permutation_test(doc_scores: &[DirectionScores], max_segments: usize) -> Result<PValueReport, StatsError> {
    let n = doc_scores.len();
    if n == 0 {
        return Err(StatsError::TooFewSegments { need: 1, got: 0 });
    }
    if n > max_segments || n >= 63 {
        return Err(StatsError::TooManySegments {
            max: max_segments.min(62),
            got: n,
        });
    }
    let mut stat = SwapStatistic::new(doc_scores);
    let observed = stat.eval(|_| false);
    let total = 1u64 << n;
    let mut extreme = 0u64;
    for mask in 0..total {
        if is_extreme(stat.eval(|i| mask >> i & 1 == 1), observed) {
            extreme += 1;
        }
    }
    Ok(PValueReport {
        observed_stat: observed,
        p_value: (2.0 * extreme as f64 / total as f64).min(1.0),
        n_permutations: total,
        seed: None,
        method: PermutationMethod::Exhaustive,
        extreme_count: extreme,
    })
}

/// One evaluated unit (a sentence pair or a whole document).
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationItem {
    pub lang_x: String,
    pub lang_y: String,
    pub translation_type: TranslationType,
    pub dataset_tag: Option<String>,
    pub gold: GoldDirection,
    pub verdict: DirectionVerdict,
    /// Source length in Unicode scalar values, if meaningful for this unit.
    pub source_char_len: Option<usize>,
}

impl EvaluationItem {
    /// Re-expressed so that X is the alphabetically smaller language code.
    /// Stored orientation is arbitrary; this lets de->fr and fr->de items
    /// land in one de-fr row.
    fn canonical(&self) -> (String, String, GoldDirection, DirectionVerdict) {
        if self.lang_x <= self.lang_y {
            return (self.lang_x.clone(), self.lang_y.clone(), self.gold, self.verdict);
        }
        let gold = match self.gold {
            GoldDirection::X2Y => GoldDirection::Y2X,
            GoldDirection::Y2X => GoldDirection::X2Y,
            other => other,
        };
        let log_margin = -self.verdict.log_margin;
        let verdict = DirectionVerdict {
            predicted: if self.verdict.tie {
                Direction::Y2X
            } else {
                self.verdict.predicted.reversed()
            },
            tie: self.verdict.tie,
            log_margin,
            prob_ratio: log_margin.exp(),
        };
        (self.lang_y.clone(), self.lang_x.clone(), gold, verdict)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubsetKey {
    pub translation_type: TranslationType,
    pub dataset_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub lang_x: String,
    pub lang_y: String,
    #[serde(flatten)]
    pub subset: SubsetKey,
    pub acc_xy: f64,
    pub acc_yx: f64,
    pub avg: f64,
    pub bias: f64,
    pub n_xy: usize,
    pub n_yx: usize,
    pub ties_xy: usize,
    pub ties_yx: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroRow {
    #[serde(flatten)]
    pub subset: SubsetKey,
    pub acc_xy: f64,
    pub acc_yx: f64,
    pub avg: f64,
    pub bias: f64,
    pub n_pairs: usize,
}

/// Prediction shares for items whose gold direction is `none`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub lang_x: String,
    pub lang_y: String,
    #[serde(flatten)]
    pub subset: SubsetKey,
    pub ratio_xy: f64,
    pub ratio_yx: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub level: String,
    pub rows: Vec<AccuracyRow>,
    pub macro_rows: Vec<MacroRow>,
    pub ratio_rows: Vec<RatioRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_buckets: Option<Vec<LengthBucket>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvaluationOptions {
    pub ties: TiePolicy,
    /// Bucket width for length-bucketed accuracy; `None` skips buckets.
    pub bucket_width: Option<usize>,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            ties: TiePolicy::CountAsY2X,
            bucket_width: None,
        }
    }
}

type GroupKey = (String, String, SubsetKey);

/// Builds per language pair and subset accuracy rows, macro-averages across
/// pairs per subset (for subsets covering at least two pairs), and prediction
/// ratios for indirect items. Items with an
/// `unknown` gold direction are ignored.
pub fn evaluate(
    level: &str,
    items: &[EvaluationItem],
    options: &EvaluationOptions,
) -> Result<EvaluationReport, StatsError> {
    let mut directed: BTreeMap<GoldDirection, ()> = BTreeMap::new();
    let mut groups: BTreeMap<GroupKey, Vec<(DirectionVerdict, GoldDirection)>> = BTreeMap::new();
    let mut indirect: BTreeMap<GroupKey, Vec<DirectionVerdict>> = BTreeMap::new();
    for item in items {
        let (lx, ly, gold, verdict) = item.canonical();
        let key = (
            lx,
            ly,
            SubsetKey {
                translation_type: item.translation_type,
                dataset_tag: item.dataset_tag.clone(),
            },
        );
        match gold {
            GoldDirection::X2Y | GoldDirection::Y2X => {
                directed.insert(gold, ());
                groups.entry(key).or_default().push((verdict, gold));
            }
            GoldDirection::None => indirect.entry(key).or_default().push(verdict),
            GoldDirection::Unknown => {}
        }
    }
    if groups.is_empty() && indirect.is_empty() {
        return Err(StatsError::EmptyInput);
    }

    let mut rows = Vec::with_capacity(groups.len());
    for ((lang_x, lang_y, subset), verdicts) in groups {
        let acc = accuracy_by_direction_with(&verdicts, options.ties).map_err(|e| match e {
            StatsError::NoItemsForDirection(d, _) => StatsError::NoItemsForDirection(
                d,
                Some(format!(
                    "{lang_x}-{lang_y} {}{}",
                    subset.translation_type,
                    subset
                        .dataset_tag
                        .as_deref()
                        .map(|t| format!(" [{t}]"))
                        .unwrap_or_default()
                )),
            ),
            other => other,
        })?;
        rows.push(AccuracyRow {
            lang_x,
            lang_y,
            subset,
            acc_xy: acc.acc_xy,
            acc_yx: acc.acc_yx,
            avg: (acc.acc_xy + acc.acc_yx) / 2.0,
            bias: directional_bias(acc.acc_xy, acc.acc_yx),
            n_xy: acc.n_xy,
            n_yx: acc.n_yx,
            ties_xy: acc.ties_xy,
            ties_yx: acc.ties_yx,
        });
    }

    let mut by_subset: BTreeMap<SubsetKey, Vec<&AccuracyRow>> = BTreeMap::new();
    for row in &rows {
        by_subset.entry(row.subset.clone()).or_default().push(row);
    }
    let macro_rows = by_subset
        .into_iter()
        .filter(|(_, rs)| rs.len() >= 2)
        .map(|(subset, rs)| {
            let k = rs.len() as f64;
            let acc_xy = rs.iter().map(|r| r.acc_xy).sum::<f64>() / k;
            let acc_yx = rs.iter().map(|r| r.acc_yx).sum::<f64>() / k;
            MacroRow {
                subset,
                acc_xy,
                acc_yx,
                avg: rs.iter().map(|r| r.avg).sum::<f64>() / k,
                bias: directional_bias(acc_xy, acc_yx),
                n_pairs: rs.len(),
            }
        })
        .collect();

    let ratio_rows = indirect
        .into_iter()
        .map(|((lang_x, lang_y, subset), verdicts)| {
            let (ratio_xy, ratio_yx) = prediction_ratio(&verdicts).expect("groups are non-empty");
            RatioRow {
                lang_x,
                lang_y,
                subset,
                ratio_xy,
                ratio_yx,
                n: verdicts.len(),
            }
        })
        .collect();

    let length_buckets = match options.bucket_width {
        Some(w) => {
            let bucket_items: Vec<_> = items
                .iter()
                .filter_map(|it| it.source_char_len.map(|len| (len, it.verdict, it.gold)))
                .collect();
            Some(length_bucket_accuracy(&bucket_items, w)?)
        }
        None => None,
    };

    Ok(EvaluationReport {
        level: level.to_owned(),
        rows,
        macro_rows,
        ratio_rows,
        length_buckets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn verdict(d: Direction) -> DirectionVerdict {
        DirectionVerdict::from_log_averages(if d == Direction::X2Y { -0.1 } else { -0.3 }, -0.2)
    }

    fn tie() -> DirectionVerdict {
        DirectionVerdict::from_log_averages(-0.2, -0.2)
    }

    #[test]
    fn accuracy_direct_count() {
        let mut items = vec![(verdict(Direction::X2Y), GoldDirection::X2Y); 4];
        items.extend(vec![(verdict(Direction::Y2X), GoldDirection::Y2X); 2]);
        items.extend(vec![(verdict(Direction::X2Y), GoldDirection::Y2X); 2]);
        let acc = accuracy_by_direction(&items).unwrap();
        assert_eq!((acc.acc_xy, acc.acc_yx), (1.0, 0.5));
        assert_eq!((acc.n_xy, acc.n_yx), (4, 4));
    }

    #[test]
    fn always_x2y_is_fully_biased() {
        let items: Vec<_> = [
            GoldDirection::X2Y,
            GoldDirection::Y2X,
            GoldDirection::Y2X,
            GoldDirection::X2Y,
        ]
        .into_iter()
        .map(|g| (verdict(Direction::X2Y), g))
        .collect();
        let acc = accuracy_by_direction(&items).unwrap();
        assert_eq!((acc.acc_xy, acc.acc_yx), (1.0, 0.0));
        assert_eq!(directional_bias(acc.acc_xy, acc.acc_yx), 1.0);
    }

    #[test]
    fn ties_count_as_y2x_or_are_excluded() {
        let items = vec![
            (tie(), GoldDirection::Y2X),
            (tie(), GoldDirection::X2Y),
            (verdict(Direction::X2Y), GoldDirection::X2Y),
        ];
        let acc = accuracy_by_direction(&items).unwrap();
        assert_eq!((acc.acc_xy, acc.acc_yx), (0.5, 1.0));
        assert_eq!((acc.ties_xy, acc.ties_yx), (1, 1));
        let err = accuracy_by_direction_with(&items, TiePolicy::Exclude).unwrap_err();
        assert_eq!(err, StatsError::NoItemsForDirection(Direction::Y2X, None));
    }

    #[test]
    fn missing_direction_and_undirected_gold() {
        let items = vec![(verdict(Direction::X2Y), GoldDirection::X2Y)];
        assert_eq!(
            accuracy_by_direction(&items).unwrap_err(),
            StatsError::NoItemsForDirection(Direction::Y2X, None)
        );
        let items = vec![(verdict(Direction::X2Y), GoldDirection::None)];
        assert!(matches!(
            accuracy_by_direction(&items),
            Err(StatsError::UndirectedGold(0, "none"))
        ));
    }

    #[test]
    fn bias_examples() {
        assert_eq!(directional_bias(1.0, 0.0), 1.0);
        assert!((directional_bias(0.8972, 0.5050) - 0.3922).abs() < 1e-12);
        for a in [0.0, 0.3, 0.77, 1.0] {
            assert_eq!(directional_bias(a, a), 0.0);
        }
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(prediction_ratio(&[verdict(Direction::X2Y); 5]).unwrap(), (1.0, 0.0));
        let mut vs = vec![verdict(Direction::X2Y); 3];
        vs.extend(vec![verdict(Direction::Y2X); 5]);
        assert_eq!(prediction_ratio(&vs).unwrap(), (0.375, 0.625));
        assert_eq!(prediction_ratio(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn length_buckets_are_half_open() {
        let v = verdict(Direction::X2Y);
        let items = vec![
            (5, v, GoldDirection::X2Y),
            (25, v, GoldDirection::Y2X),
            (20, v, GoldDirection::X2Y),
            (19, v, GoldDirection::None),
        ];
        let buckets = length_bucket_accuracy(&items, 20).unwrap();
        assert_eq!(buckets.len(), 2);
        assert_eq!((buckets[0].index, buckets[0].n, buckets[0].accuracy), (0, 1, 1.0));
        assert_eq!((buckets[1].index, buckets[1].lower, buckets[1].upper), (1, 20, 40));
        assert_eq!((buckets[1].n, buckets[1].correct), (2, 1));
        assert!(length_bucket_accuracy(&items, 0).is_err());
    }

    fn ds(sum_xy: f64, count_xy: usize, sum_yx: f64, count_yx: usize) -> DirectionScores {
        DirectionScores::new(sum_xy, count_xy, sum_yx, count_yx).unwrap()
    }

    /// Independent exhaustive oracle: pooled statistic recomputed from scratch
    /// with plain sums for every subset.
    fn brute_force_p(doc: &[DirectionScores]) -> (u64, u64) {
        let stat = |mask: u64| {
            let (mut sx, mut cx, mut sy, mut cy) = (0.0, 0usize, 0.0, 0usize);
            for (i, d) in doc.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    sx += d.sum_yx;
                    cx += d.count_yx;
                    sy += d.sum_xy;
                    cy += d.count_xy;
                } else {
                    sx += d.sum_xy;
                    cx += d.count_xy;
                    sy += d.sum_yx;
                    cy += d.count_yx;
                }
            }
            sx / cx as f64 - sy / cy as f64
        };
        let obs = stat(0);
        let total = 1u64 << doc.len();
        let extreme = (0..total)
            .filter(|&m| obs == 0.0 || stat(m) * obs.signum() >= obs.abs())
            .count() as u64;
        (extreme, total)
    }

    #[test]
    fn three_segment_exact_and_monte_carlo() {
        let doc = [ds(-1.0, 1, -2.0, 1), ds(-2.0, 2, -4.0, 2), ds(-3.0, 3, -6.0, 3)];
        // every segment's forward average is -1 and backward -2; only the
        // identity subset reaches the observed D = 1
        let (extreme, total) = brute_force_p(&doc);
        assert_eq!((extreme, total), (1, 8));
        let exact = exact_permutation_test(&doc, 20).unwrap();
        assert_eq!(exact.extreme_count, 1);
        assert_eq!(exact.n_permutations, 8);
        assert_eq!(exact.p_value, 0.25);
        assert_eq!(exact.observed_stat, 1.0);
        assert_eq!(exact.method, PermutationMethod::Exhaustive);

        let mc = permutation_test(&doc, &PermutationConfig::default()).unwrap();
        let sd = 2.0 * (0.125f64 * 0.875 / 10_000.0).sqrt();
        assert!((mc.p_value - exact.p_value).abs() <= 3.0 * sd, "{mc:?}");
        assert_eq!(mc.p_value, (2 * mc.extreme_count) as f64 / 10_000.0);
    }

    #[test]
    fn symmetric_document_gives_p_one() {
        let doc = [ds(-1.0, 2, -1.0, 2), ds(-3.0, 4, -3.0, 4), ds(-0.5, 1, -0.5, 1)];
        let mc = permutation_test(&doc, &PermutationConfig::default()).unwrap();
        assert_eq!(mc.observed_stat, 0.0);
        assert_eq!(mc.p_value, 1.0);
        assert_eq!(mc.extreme_count, 10_000);
        assert_eq!(exact_permutation_test(&doc, 20).unwrap().p_value, 1.0);
    }

    #[test]
    fn single_segment_exact() {
        let exact = exact_permutation_test(&[ds(-1.0, 2, -3.0, 2)], 20).unwrap();
        assert_eq!(exact.n_permutations, 2);
        assert!(exact.extreme_count >= 1);
        assert_eq!(exact.p_value, 1.0);
    }

    #[test]
    fn argument_checks() {
        let one = [ds(-1.0, 1, -2.0, 1)];
        assert_eq!(
            permutation_test(&one, &PermutationConfig::default()),
            Err(StatsError::TooFewSegments { need: 2, got: 1 })
        );
        let doc = vec![ds(-1.0, 1, -2.0, 1); 4];
        let cfg = PermutationConfig {
            n_permutations: 0,
            ..Default::default()
        };
        assert!(matches!(
            permutation_test(&doc, &cfg),
            Err(StatsError::InvalidArgument(_))
        ));
        assert_eq!(
            exact_permutation_test(&doc, 3),
            Err(StatsError::TooManySegments { max: 3, got: 4 })
        );
    }

    #[test]
    fn small_sample_correction() {
        let doc = vec![ds(-1.0, 1, -5.0, 1); 12];
        let plain = permutation_test(
            &doc,
            &PermutationConfig {
                n_permutations: 999,
                seed: 3,
                small_sample_correction: false,
            },
        )
        .unwrap();
        let corrected = permutation_test(
            &doc,
            &PermutationConfig {
                n_permutations: 999,
                seed: 3,
                small_sample_correction: true,
            },
        )
        .unwrap();
        assert_eq!(plain.extreme_count, corrected.extreme_count);
        assert_eq!(corrected.p_value, 2.0 * (plain.extreme_count + 1) as f64 / 1000.0);
    }

    #[test]
    fn seeded_runs_repeat_and_seeds_differ() {
        let doc: Vec<_> = (0..15).map(|i| ds(-1.0 - i as f64 * 0.1, 3, -1.3, 3)).collect();
        let cfg = PermutationConfig {
            n_permutations: 2000,
            seed: 42,
            small_sample_correction: false,
        };
        assert_eq!(
            permutation_test(&doc, &cfg).unwrap(),
            permutation_test(&doc, &cfg).unwrap()
        );
        let other = PermutationConfig { seed: 43, ..cfg };
        assert_ne!(
            permutation_test(&doc, &cfg).unwrap().extreme_count,
            permutation_test(&doc, &other).unwrap().extreme_count
        );
    }

    fn item(lx: &str, ly: &str, gold: GoldDirection, pred: Direction, len: usize) -> EvaluationItem {
        EvaluationItem {
            lang_x: lx.into(),
            lang_y: ly.into(),
            translation_type: TranslationType::Ht,
            dataset_tag: None,
            gold,
            verdict: verdict(pred),
            source_char_len: Some(len),
        }
    }

    #[test]
    fn evaluation_groups_orientations_together() {
        use Direction::*;
        let items = vec![
            item("de", "fr", GoldDirection::X2Y, X2Y, 10),
            item("de", "fr", GoldDirection::X2Y, Y2X, 30),
            // stored as fr-de, gold fr->de, predicted fr->de
            item("fr", "de", GoldDirection::X2Y, X2Y, 50),
            item("en", "de", GoldDirection::Y2X, Y2X, 10),
            item("en", "de", GoldDirection::X2Y, X2Y, 10),
            item("en", "fr", GoldDirection::None, X2Y, 10),
            item("en", "fr", GoldDirection::Unknown, X2Y, 10),
        ];
        let report = evaluate(
            "sentence",
            &items,
            &EvaluationOptions {
                bucket_width: Some(20),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(report.rows.len(), 2);
        let de_en = &report.rows[0];
        assert_eq!((de_en.lang_x.as_str(), de_en.lang_y.as_str()), ("de", "en"));
        assert_eq!((de_en.acc_xy, de_en.acc_yx), (1.0, 1.0));
        let de_fr = &report.rows[1];
        assert_eq!((de_fr.acc_xy, de_fr.acc_yx, de_fr.n_xy, de_fr.n_yx), (0.5, 1.0, 2, 1));
        assert_eq!(de_fr.avg, 0.75);
        assert_eq!(de_fr.bias, 0.5);
        assert_eq!(report.macro_rows.len(), 1);
        assert_eq!(report.macro_rows[0].avg, 0.875);
        assert_eq!(report.ratio_rows.len(), 1);
        assert_eq!(report.ratio_rows[0].ratio_xy, 1.0);
        let buckets = report.length_buckets.unwrap();
        assert_eq!(buckets.iter().map(|b| b.n).sum::<usize>(), 5);
    }

    #[test]
    fn single_direction_group_is_an_error() {
        let items = vec![item("de", "en", GoldDirection::X2Y, Direction::X2Y, 3)];
        match evaluate("sentence", &items, &EvaluationOptions::default()) {
            Err(StatsError::NoItemsForDirection(Direction::Y2X, Some(ctx))) => assert!(ctx.contains("de-en")),
            other => panic!("unexpected {other:?}"),
        }
    }

    fn doc_strategy(max: usize) -> impl Strategy<Value = Vec<DirectionScores>> {
        prop::collection::vec((-30.0f64..-0.01, 1usize..20, -30.0f64..-0.01, 1usize..20), 1..max)
            .prop_map(|v| v.into_iter().map(|(a, b, c, d)| ds(a, b, c, d)).collect())
    }

    /// Sums are multiples of 1/8, so every partial sum is exact and the
    /// oracle's naive accumulation agrees bit for bit with ours.
    fn dyadic_doc_strategy(max: usize) -> impl Strategy<Value = Vec<DirectionScores>> {
        prop::collection::vec((-240i32..-1, 1usize..20, -240i32..-1, 1usize..20), 1..max).prop_map(|v| {
            v.into_iter()
                .map(|(a, b, c, d)| ds(f64::from(a) / 8.0, b, f64::from(c) / 8.0, d))
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn exact_matches_brute_force(doc in dyadic_doc_strategy(9)) {
            let exact = exact_permutation_test(&doc, 20).unwrap();
            let (extreme, total) = brute_force_p(&doc);
            prop_assert_eq!(exact.n_permutations, total);
            prop_assert_eq!(exact.extreme_count, extreme);
            prop_assert!(exact.extreme_count >= 1);
            prop_assert!(exact.p_value > 0.0 && exact.p_value <= 1.0);
        }

        #[test]
        fn exact_p_symmetric_under_global_swap(doc in doc_strategy(10)) {
            let swapped: Vec<_> = doc.iter().map(DirectionScores::swapped).collect();
            let a = exact_permutation_test(&doc, 20).unwrap();
            let b = exact_permutation_test(&swapped, 20).unwrap();
            prop_assert_eq!(a.p_value, b.p_value);
            prop_assert_eq!(a.observed_stat, -b.observed_stat);
        }

        #[test]
        fn accuracy_ignores_order(
            raw in prop::collection::vec((any::<bool>(), any::<bool>()), 2..40), seed in any::<u64>()
        ) {
            let mut items: Vec<_> = raw.iter().map(|&(p, g)| (
                verdict(if p { Direction::X2Y } else { Direction::Y2X }),
                if g { GoldDirection::X2Y } else { GoldDirection::Y2X },
            )).collect();
            let before = accuracy_by_direction(&items);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            for i in (1..items.len()).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                items.swap(i, j);
            }
            prop_assert_eq!(before, accuracy_by_direction(&items));
        }

        #[test]
        fn bias_bounds(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let bias = directional_bias(a, b);
            prop_assert!((0.0..=1.0).contains(&bias));
            prop_assert_eq!(bias == 0.0, a == b);
        }
    }
}
