use std::collections::HashMap;
use std::sync::Arc;

use super::{CacheKey, Result, ScoreCache, ScoreRecord, ScoreStore, ScoringError, TokenScores};
use crate::detection::SegmentPair;

/// One scoring query: log P(target | source) under the backend's model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScoreRequest {
    pub id: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub source: String,
    pub target: String,
}

impl ScoreRequest {
    pub fn new(
        id: impl Into<String>,
        src_lang: impl Into<String>,
        tgt_lang: impl Into<String>,
        source: impl Into<String>,
        target: impl Into<String>,
    ) -> Self {
        ScoreRequest {
            id: id.into(),
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(ScoringError::InvalidRequest("empty request id".into()));
        }
        if self.source.trim().is_empty() || self.target.trim().is_empty() {
            return Err(ScoringError::InvalidRequest(format!(
                "request {} has an empty source or target",
                self.id
            )));
        }
        Ok(())
    }

    pub fn key(&self, scorer_id: &str) -> CacheKey {
        CacheKey::new(scorer_id, &self.src_lang, &self.tgt_lang, &self.source, &self.target)
    }
}

/// Something that can produce token scores. Handles are driven by one flow at
/// a time.
pub trait ScorerBackend {
    fn scorer_id(&self) -> &str;

    /// Scores `requests`, returning one result per request in request order.
    /// The outer error means the backend itself failed and nothing can be
    /// trusted; inner errors are per-request failures.
    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<Result<TokenScores>>>;
}

/// Serves scores from a preloaded [`ScoreStore`].
#[derive(Debug, Clone)]
pub struct StoreBackend {
    store: Arc<ScoreStore>,
    scorer_id: String,
    requests_served: usize,
}

impl StoreBackend {
    /// Uses `scorer_id` if given, otherwise the store's only scorer id.
    pub fn new(store: Arc<ScoreStore>, scorer_id: Option<&str>) -> Result<Self> {
        let scorer_id = match scorer_id {
            Some(id) => id.to_owned(),
            None => {
                let ids: Vec<&str> = store.scorer_ids().collect();
                match ids.as_slice() {
                    [only] => (*only).to_owned(),
                    [] => return Err(ScoringError::ScorerUnavailable("score file is empty".into())),
                    many => {
                        return Err(ScoringError::ScorerUnavailable(format!(
                            "score file holds several scorers ({}); choose one",
                            many.join(", ")
                        )))
                    }
                }
            }
        };
        Ok(StoreBackend {
            store,
            scorer_id,
            requests_served: 0,
        })
    }

    /// Number of requests this backend has been asked to answer.
    pub fn requests_served(&self) -> usize {
        self.requests_served
    }
}

impl ScorerBackend for StoreBackend {
    fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<Result<TokenScores>>> {
        self.requests_served += requests.len();
        Ok(requests
            .iter()
            .map(|req| {
                self.store.get(&req.key(&self.scorer_id)).cloned().ok_or_else(|| {
                    ScoringError::ScorerUnavailable(format!(
                        "no {} score for direction {}->{} (request {})",
                        self.scorer_id, req.src_lang, req.tgt_lang, req.id
                    ))
                })
            })
            .collect())
    }
}

/// Front door for scoring: memoizes in process, consults and fills the disk
/// cache, and sends only misses to the backend.
pub struct Scorer {
    scorer_id: String,
    backend: Option<Box<dyn ScorerBackend + Send>>,
    cache: Option<ScoreCache>,
    memo: HashMap<CacheKey, TokenScores>,
    backend_requests: usize,
}

impl Scorer {
    pub fn new(backend: Box<dyn ScorerBackend + Send>, cache: Option<ScoreCache>) -> Self {
        Scorer {
            scorer_id: backend.scorer_id().to_owned(),
            backend: Some(backend),
            cache,
            memo: HashMap::new(),
            backend_requests: 0,
        }
    }

    /// A scorer that only replays what the cache already holds.
    pub fn cache_only(scorer_id: impl Into<String>, cache: ScoreCache) -> Self {
        Scorer {
            scorer_id: scorer_id.into(),
            backend: None,
            cache: Some(cache),
            memo: HashMap::new(),
            backend_requests: 0,
        }
    }

    pub fn scorer_id(&self) -> &str {
        &self.scorer_id
    }

    /// Requests forwarded to the backend so far.
    pub fn backend_requests(&self) -> usize {
        self.backend_requests
    }

    pub fn score_pair(&mut self, req: &ScoreRequest) -> Result<TokenScores> {
        let mut out = self.score_many(std::slice::from_ref(req))?;
        Ok(out.pop().expect("one result per request"))
    }

    /// Scores both directions of `pair`: `xy` is P(text_y | text_x) and `yx` is
    /// P(text_x | text_y). Either direction failing fails the call.
    pub fn score_bidirectional(&mut self, pair: &SegmentPair) -> Result<(TokenScores, TokenScores)> {
        let mut out = self.score_segment_pairs(std::slice::from_ref(pair))?;
        Ok(out.pop().expect("one result per pair"))
    }

    pub fn score_segment_pairs(&mut self, pairs: &[SegmentPair]) -> Result<Vec<(TokenScores, TokenScores)>> {
        let requests: Vec<ScoreRequest> = pairs.iter().flat_map(bidirectional_requests).collect();
        let mut scores = self.score_many(&requests)?.into_iter();
        Ok(pairs
            .iter()
            .map(|_| {
                let xy = scores.next().expect("xy result");
                let yx = scores.next().expect("yx result");
                (xy, yx)
            })
            .collect())
    }

    /// Scores every request, batching cache misses into backend calls.
    /// Results come back in request order.
    pub fn score_many(&mut self, requests: &[ScoreRequest]) -> Result<Vec<TokenScores>> {
        let mut keys = Vec::with_capacity(requests.len());
        let mut misses: Vec<ScoreRequest> = Vec::new();
        let mut queued: HashMap<CacheKey, ()> = HashMap::new();
        for req in requests {
            req.validate()?;
            let key = req.key(&self.scorer_id);
            keys.push(key);
            if self.memo.contains_key(&key) || queued.contains_key(&key) {
                continue;
            }
            if let Some(cache) = &self.cache {
                if let Some(hit) = cache.get(&key)? {
                    self.memo.insert(key, hit);
                    continue;
                }
            }
            queued.insert(key, ());
            misses.push(req.clone());
        }

        if !misses.is_empty() {
            let backend = self.backend.as_mut().ok_or_else(|| {
                ScoringError::ScorerUnavailable(format!(
                    "no backend configured and {} request(s) missing from the cache, first: {} ({}->{})",
                    misses.len(),
                    misses[0].id,
                    misses[0].src_lang,
                    misses[0].tgt_lang
                ))
            })?;
            self.backend_requests += misses.len();
            let results = backend.score_batch(&misses)?;
            if results.len() != misses.len() {
                return Err(ScoringError::ProtocolViolation(format!(
                    "backend answered {} of {} requests",
                    results.len(),
                    misses.len()
                )));
            }
            for (req, result) in misses.iter().zip(results) {
                let scores = result?;
                let scores = TokenScores::new(
                    scores.token_logprobs().to_vec(),
                    scores.tokens().map(<[String]>::to_vec),
                    self.scorer_id.clone(),
                    req.src_lang.clone(),
                    req.tgt_lang.clone(),
                )
                .map_err(|e| ScoringError::InvalidScores(format!("request {}: {e}", req.id)))?;
                if let Some(cache) = &self.cache {
                    cache.put(&ScoreRecord::from_scores(&scores, &req.source, &req.target))?;
                }
                self.memo.insert(req.key(&self.scorer_id), scores);
            }
        }

        Ok(keys.iter().map(|k| self.memo[k].clone()).collect())
    }
}

fn bidirectional_requests(pair: &SegmentPair) -> [ScoreRequest; 2] {
    [
        ScoreRequest::new(
            format!("{}/xy", pair.pair_id),
            &pair.lang_x,
            &pair.lang_y,
            &pair.text_x,
            &pair.text_y,
        ),
        ScoreRequest::new(
            format!("{}/yx", pair.pair_id),
            &pair.lang_y,
            &pair.lang_x,
            &pair.text_y,
            &pair.text_x,
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{GoldDirection, TranslationType};
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn record(src_lang: &str, tgt_lang: &str, source: &str, target: &str, lp: Vec<f64>) -> ScoreRecord {
        ScoreRecord {
            scorer_id: "fixture".into(),
            src_lang: src_lang.into(),
            tgt_lang: tgt_lang.into(),
            source: source.into(),
            target: target.into(),
            token_logprobs: lp,
            tokens: None,
        }
    }

    fn store_scorer(records: Vec<ScoreRecord>) -> Scorer {
        let store = Arc::new(ScoreStore::from_records(records).unwrap());
        Scorer::new(Box::new(StoreBackend::new(store, None).unwrap()), None)
    }

    fn pair(x: &str, y: &str) -> SegmentPair {
        SegmentPair {
            pair_id: "p1".into(),
            doc_id: "d1".into(),
            text_x: x.into(),
            text_y: y.into(),
            lang_x: "en".into(),
            lang_y: "de".into(),
            gold_direction: GoldDirection::Unknown,
            translation_type: TranslationType::Unknown,
            system_id: None,
            dataset_tag: None,
        }
    }

    #[test]
    fn fixture_passthrough() {
        let mut scorer = store_scorer(vec![record("en", "de", "Hello.", "Hallo.", vec![-0.2, -0.1])]);
        let ts = scorer
            .score_pair(&ScoreRequest::new("q1", "en", "de", "Hello.", "Hallo."))
            .unwrap();
        assert_eq!(ts.token_logprobs(), &[-0.2, -0.1]);
        assert_eq!(ts.scorer_id(), "fixture");
    }

    /// Counts every request that reaches it.
    struct Counting {
        calls: Arc<AtomicUsize>,
    }

    impl ScorerBackend for Counting {
        fn scorer_id(&self) -> &str {
            "counting"
        }

        fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<Result<TokenScores>>> {
            self.calls.fetch_add(requests.len(), Ordering::SeqCst);
            Ok(requests
                .iter()
                .map(|r| {
                    TokenScores::new(
                        vec![-(r.target.len() as f64) / 10.0],
                        None,
                        "counting",
                        &r.src_lang,
                        &r.tgt_lang,
                    )
                })
                .collect())
        }
    }

    #[test]
    fn second_identical_request_is_served_from_cache() {
        let calls = Arc::new(AtomicUsize::new(0));
        let dir = tempfile::tempdir().unwrap();
        let cache = ScoreCache::open(dir.path()).unwrap();
        let mut scorer = Scorer::new(Box::new(Counting { calls: calls.clone() }), Some(cache.clone()));
        let req = ScoreRequest::new("q1", "en", "de", "Hello.", "Hallo.");
        let first = scorer.score_pair(&req).unwrap();
        let second = scorer.score_pair(&req).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);

        // a fresh scorer over the same directory needs no backend at all
        let mut replay = Scorer::cache_only("counting", cache);
        assert_eq!(replay.score_pair(&req).unwrap(), first);
        assert_eq!(replay.backend_requests(), 0);
    }

    #[test]
    fn duplicate_requests_in_one_batch_hit_backend_once() {
        let calls = Arc::new(AtomicUsize::new(0));
        let mut scorer = Scorer::new(Box::new(Counting { calls: calls.clone() }), None);
        let req = ScoreRequest::new("q1", "en", "de", "Hello.", "Hallo.");
        let out = scorer.score_many(&[req.clone(), req]).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn bidirectional_passthrough() {
        let mut scorer = store_scorer(vec![
            record("en", "de", "a", "b", vec![-1.0]),
            record("de", "en", "b", "a", vec![-2.0]),
        ]);
        let (xy, yx) = scorer.score_bidirectional(&pair("a", "b")).unwrap();
        assert_eq!(xy.token_logprobs(), &[-1.0]);
        assert_eq!(yx.token_logprobs(), &[-2.0]);
        assert_eq!((xy.src_lang(), xy.tgt_lang()), ("en", "de"));
        assert_eq!((yx.src_lang(), yx.tgt_lang()), ("de", "en"));
    }

    #[test]
    fn symmetric_fixture_swaps_lang_codes() {
        let mut scorer = store_scorer(vec![
            record("en", "de", "a", "b", vec![-0.5]),
            record("de", "en", "b", "a", vec![-0.5]),
        ]);
        let (xy, yx) = scorer.score_bidirectional(&pair("a", "b")).unwrap();
        assert_eq!(xy.token_logprobs(), yx.token_logprobs());
        assert_eq!(xy.src_lang(), yx.tgt_lang());
        assert_eq!(xy.tgt_lang(), yx.src_lang());
    }

    #[test]
    fn missing_direction_is_named() {
        let mut scorer = store_scorer(vec![record("en", "de", "a", "b", vec![-1.0])]);
        match scorer.score_bidirectional(&pair("a", "b")) {
            Err(ScoringError::ScorerUnavailable(msg)) => assert!(msg.contains("de->en"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cache_only_miss_is_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let mut scorer = Scorer::cache_only("m", ScoreCache::open(dir.path()).unwrap());
        let err = scorer.score_pair(&ScoreRequest::new("q1", "en", "de", "a", "b"));
        assert!(matches!(err, Err(ScoringError::ScorerUnavailable(_))));
    }

    #[test]
    fn blank_request_is_rejected() {
        let mut scorer = store_scorer(vec![record("en", "de", "a", "b", vec![-1.0])]);
        let err = scorer.score_pair(&ScoreRequest::new("q1", "en", "de", "  ", "b"));
        assert!(matches!(err, Err(ScoringError::InvalidRequest(_))));
    }
}
