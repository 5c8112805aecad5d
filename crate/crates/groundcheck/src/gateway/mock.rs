//! Deterministic mock models and embedders. These satisfy every gateway
//! contract, so the full filter, reward, and evaluation suites run with
//! zero model weights.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{Embedder, EmbedError, GenerationParams, LanguageModel, LmError};

/// Uniform distribution over a byte vocabulary of size `vocab_size`:
/// every token scores -ln(V), so perplexity is exactly V.
pub struct UniformLm {
    vocab_size: usize,
    window: Option<usize>,
}

impl UniformLm {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            window: None,
        }
    }

    pub fn with_window(vocab_size: usize, window: usize) -> Self {
        Self {
            vocab_size,
            window: Some(window),
        }
    }

    fn check_window(&self, prompt: &str, continuation: &str) -> Result<(), LmError> {
        if let Some(limit) = self.window {
            if prompt.len() + continuation.len() > limit {
                return Err(LmError::ContextOverflow { limit });
            }
        }
        Ok(())
    }
}

impl LanguageModel for UniformLm {
    fn model_id(&self) -> &str {
        "mock-uniform"
    }

    fn continuation_logprobs(
        &self,
        prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        self.check_window(prompt, continuation)?;
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        let lp = -(self.vocab_size as f64).ln();
        Ok(vec![lp; continuation.len()])
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, LmError> {
        self.check_window(prompt, "")?;
        Ok("a".repeat(params.max_new_tokens))
    }
}

/// Assigns a fixed probability `p` to every target token.
pub struct FixedProbLm {
    p: f64,
}

impl FixedProbLm {
    pub fn new(p: f64) -> Self {
        assert!(p > 0.0 && p <= 1.0);
        Self { p }
    }
}

impl LanguageModel for FixedProbLm {
    fn model_id(&self) -> &str {
        "mock-fixed-prob"
    }

    fn continuation_logprobs(
        &self,
        _prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        Ok(vec![self.p.ln(); continuation.len()])
    }

    fn generate(&self, _prompt: &str, params: &GenerationParams) -> Result<String, LmError> {
        Ok("a".repeat(params.max_new_tokens))
    }
}

/// Per-byte NLL decided by the byte identity alone. Lets tests pin exact
/// token-level arithmetic and prove loss masking.
pub struct ByteNllLm {
    nll_of: Box<dyn Fn(u8) -> f64 + Send + Sync>,
}

impl ByteNllLm {
    pub fn new(nll_of: impl Fn(u8) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            nll_of: Box::new(nll_of),
        }
    }
}

impl LanguageModel for ByteNllLm {
    fn model_id(&self) -> &str {
        "mock-byte-nll"
    }

    fn continuation_logprobs(
        &self,
        _prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        Ok(continuation.bytes().map(|b| -(self.nll_of)(b)).collect())
    }

    fn generate(&self, _prompt: &str, params: &GenerationParams) -> Result<String, LmError> {
        Ok("a".repeat(params.max_new_tokens))
    }
}

/// Scoring mock driven by a closure over the full (prompt, continuation)
/// pair, returning a total NLL. Token count is the continuation byte
/// count. Counts invocations so tests can assert how often a filter stage
/// touched the scorer.
type TotalNllFn = Box<dyn Fn(&str, &str) -> f64 + Send + Sync>;

pub struct ScriptedScorer {
    total_nll_of: TotalNllFn,
    calls: AtomicUsize,
}

impl ScriptedScorer {
    pub fn new(total_nll_of: impl Fn(&str, &str) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            total_nll_of: Box::new(total_nll_of),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LanguageModel for ScriptedScorer {
    fn model_id(&self) -> &str {
        "mock-scripted-scorer"
    }

    fn continuation_logprobs(
        &self,
        prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let total = (self.total_nll_of)(prompt, continuation);
        let n = continuation.len();
        Ok(vec![-total / n as f64; n])
    }

    fn generate(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, LmError> {
        Err(LmError::Failed("scorer mock does not generate".into()))
    }
}

/// Pseudo-random but fully deterministic scorer: each token's NLL is a
/// hash of the entire preceding context (prompt plus continuation
/// prefix) and the token itself. Unlike a fixed-window model it is
/// sensitive to arbitrarily distant context, so paired-perplexity
/// comparisons vary per record, and it factorizes exactly: scoring "AB"
/// equals scoring "A" then "B" given prompt+"A".
pub struct HashScorer {
    seed: u64,
}

impl HashScorer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn nll_from_state(state: u64) -> f64 {
        // Map the hash into a per-token NLL in [0.5, 2.5).
        0.5 + 2.0 * ((state >> 11) as f64 / (1u64 << 53) as f64)
    }
}

impl LanguageModel for HashScorer {
    fn model_id(&self) -> &str {
        "mock-hash-scorer"
    }

    fn continuation_logprobs(
        &self,
        prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        let mut state = fnv1a(prompt.bytes(), self.seed);
        let mut logprobs = Vec::with_capacity(continuation.len());
        for byte in continuation.bytes() {
            state ^= byte as u64;
            state = state.wrapping_mul(FNV_PRIME);
            logprobs.push(-Self::nll_from_state(state));
        }
        Ok(logprobs)
    }

    fn generate(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, LmError> {
        Err(LmError::Failed("scorer mock does not generate".into()))
    }
}

enum Script {
    Constant(String),
    Queue(Mutex<std::collections::VecDeque<String>>),
    ByPrompt(Box<dyn Fn(&str) -> String + Send + Sync>),
}

/// Generation mock: emits canned strings, either a constant, a queue
/// consumed one response per call, or a function of the prompt.
pub struct ScriptedLm {
    script: Script,
    calls: AtomicUsize,
}

impl ScriptedLm {
    /// Echoes the same canned string on every call.
    pub fn constant(response: impl Into<String>) -> Self {
        Self {
            script: Script::Constant(response.into()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Pops one response per call; errors when exhausted.
    pub fn queue(responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            script: Script::Queue(Mutex::new(
                responses.into_iter().map(Into::into).collect(),
            )),
            calls: AtomicUsize::new(0),
        }
    }

    /// Computes the response from the prompt.
    pub fn respond_with(f: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Self {
            script: Script::ByPrompt(Box::new(f)),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LanguageModel for ScriptedLm {
    fn model_id(&self) -> &str {
        "mock-scripted"
    }

    fn continuation_logprobs(
        &self,
        _prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        // Scripted generators score like a fair coin per byte.
        Ok(vec![0.5f64.ln(); continuation.len()])
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<String, LmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        match &self.script {
            Script::Constant(s) => Ok(s.clone()),
            Script::Queue(q) => q
                .lock()
                .expect("script queue poisoned")
                .pop_front()
                .ok_or_else(|| LmError::Failed("script queue exhausted".into())),
            Script::ByPrompt(f) => Ok(f(prompt)),
        }
    }
}

/// Extracts the `Document:` and `Claim:` fields from a rendered detection
/// prompt. Returns None when the prompt does not carry them.
pub fn parse_detection_fields(prompt: &str) -> Option<(String, String)> {
    let doc_start = prompt.find("Document: ")? + "Document: ".len();
    let claim_marker = prompt[doc_start..].find("\n\nClaim: ")?;
    let doc = &prompt[doc_start..doc_start + claim_marker];
    let claim_start = doc_start + claim_marker + "\n\nClaim: ".len();
    let claim_end = prompt[claim_start..]
        .find("\n\n")
        .map(|rel| claim_start + rel)
        .unwrap_or(prompt.len());
    Some((
        doc.to_string(),
        prompt[claim_start..claim_end].to_string(),
    ))
}

/// Deterministic offline detector: answers "Yes" iff the claim appears
/// verbatim in the document, with a fabricated chain-of-thought and
/// explanation in the tagged format. Useful as a stand-in detection model
/// for fixtures built so that substring containment equals the gold label.
pub struct SubstringJudgeLm;

impl LanguageModel for SubstringJudgeLm {
    fn model_id(&self) -> &str {
        "mock-substring-judge"
    }

    fn continuation_logprobs(
        &self,
        _prompt: &str,
        continuation: &str,
    ) -> Result<Vec<f64>, LmError> {
        if continuation.is_empty() {
            return Err(LmError::EmptyContinuation);
        }
        Ok(vec![0.5f64.ln(); continuation.len()])
    }

    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<String, LmError> {
        let (doc, claim) = parse_detection_fields(prompt)
            .ok_or_else(|| LmError::Failed("prompt lacks Document:/Claim: fields".into()))?;
        let supported = doc.contains(&claim);
        let answer = if supported { "Yes" } else { "No" };
        let verdict = if supported {
            "every statement in the claim appears in the document"
        } else {
            "the claim contains content the document does not state"
        };
        Ok(format!(
            "<think>Compared the claim against the document: {verdict}.</think>\
             <reason>The claim \"{claim}\" was checked against the document and {verdict}.</reason>\
             <answer>{answer}</answer>"
        ))
    }
}

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>, seed: u64) -> u64 {
    let mut hash = FNV_OFFSET ^ seed;
    for byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Feature-hashing embedder: character trigrams hashed into `dim` buckets
/// with a signed contribution, then L2-normalized. Deterministic across
/// processes.
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2);
        Self { dim }
    }
}

impl Embedder for HashEmbedder {
    fn embedder_id(&self) -> &str {
        "hash-trigram"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, content: &str) -> Result<Vec<f64>, EmbedError> {
        if content.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let bytes = content.as_bytes();
        let mut vector = vec![0.0f64; self.dim];
        let upper = bytes.len().max(3) - 2;
        for i in 0..upper {
            let end = (i + 3).min(bytes.len());
            let h = fnv1a(bytes[i..end].iter().copied(), 0x5eed);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            vector[bucket] += sign;
        }
        let norm = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut vector {
                *v /= norm;
            }
        } else {
            // All trigrams cancelled; fall back to a stable unit vector.
            vector[(fnv1a(bytes.iter().copied(), 1) % self.dim as u64) as usize] = 1.0;
        }
        Ok(vector)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::score_continuation;

    #[test]
    fn uniform_perplexity_equals_vocab_size() {
        let lm = UniformLm::new(50);
        let score = score_continuation(&lm, "any prompt", "x").unwrap();
        assert_eq!(score.token_count, 1);
        assert!((score.perplexity - 50.0).abs() <= 1e-9 * 50.0);
    }

    #[test]
    fn fixed_prob_half_over_four_tokens() {
        let lm = FixedProbLm::new(0.5);
        let score = score_continuation(&lm, "p", "abcd").unwrap();
        assert!((score.total_nll - 4.0 * 2.0f64.ln()).abs() < 1e-12);
        assert!((score.perplexity - 2.0).abs() < 1e-12);
    }

    #[test]
    fn window_overflow_is_reported() {
        let lm = UniformLm::with_window(10, 8);
        let err = score_continuation(&lm, "12345678", "x").unwrap_err();
        assert!(matches!(err, LmError::ContextOverflow { limit: 8 }));
    }

    #[test]
    fn scripted_queue_pops_in_order_and_exhausts() {
        let lm = ScriptedLm::queue(["one", "two"]);
        let params = GenerationParams::default();
        assert_eq!(lm.generate("p", &params).unwrap(), "one");
        assert_eq!(lm.generate("p", &params).unwrap(), "two");
        assert!(lm.generate("p", &params).is_err());
        assert_eq!(lm.call_count(), 3);
    }

    #[test]
    fn substring_judge_reads_the_prompt() {
        let prompt = crate::prompt::detection_prompt("the cat sat on the mat", "cat sat");
        let lm = SubstringJudgeLm;
        let out = lm.generate(&prompt, &GenerationParams::default()).unwrap();
        let parsed = crate::tags::parse_tagged_response(&out);
        assert!(parsed.well_formed);
        assert_eq!(parsed.answer_label, Some(1));

        let prompt = crate::prompt::detection_prompt("the cat sat", "a dog barked");
        let out = lm.generate(&prompt, &GenerationParams::default()).unwrap();
        assert_eq!(crate::tags::parse_tagged_response(&out).answer_label, Some(0));
    }

    #[test]
    fn hash_scorer_factorizes_and_discriminates_context() {
        let scorer = HashScorer::new(7);
        let whole = score_continuation(&scorer, "prompt", "ABCD").unwrap();
        let left = score_continuation(&scorer, "prompt", "AB").unwrap();
        let right = score_continuation(&scorer, "promptAB", "CD").unwrap();
        assert!((whole.total_nll - (left.total_nll + right.total_nll)).abs() < 1e-9);

        // Distant context changes the score.
        let a = score_continuation(&scorer, "context one ... tail", "Yes").unwrap();
        let b = score_continuation(&scorer, "context two ... tail", "Yes").unwrap();
        assert_ne!(a.total_nll, b.total_nll);
    }

    #[test]
    fn hash_embedder_contract() {
        let embedder = HashEmbedder::new(16);
        let a = embedder.embed("hello world").unwrap();
        let b = embedder.embed("hello world").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
        assert!(matches!(embedder.embed(""), Err(EmbedError::EmptyInput)));
    }

    #[test]
    fn hash_embedder_distinct_inputs_rarely_collide() {
        let embedder = HashEmbedder::new(32);
        let mut collisions = 0;
        for i in 0..1000 {
            let a = embedder.embed(&format!("left text {i}")).unwrap();
            let b = embedder.embed(&format!("right body {i}")).unwrap();
            let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            if cos >= 1.0 - 1e-12 {
                collisions += 1;
            }
        }
        assert_eq!(collisions, 0);
    }
}
