//! Prompt templates and rendering. Template bodies are fixed strings with
//! named `[PLACEHOLDER]` slots; rendering substitutes every declared slot
//! in a single pass and fails if any slot is unbound.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("missing binding for placeholder [{0}]")]
    MissingBinding(String),
}

/// A named prompt template. `placeholders` lists the slot names the body
/// carries, each appearing as `[NAME]` in the text.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub body: &'static str,
    placeholders: &'static [&'static str],
}

impl PromptTemplate {
    pub const fn new(
        name: &'static str,
        body: &'static str,
        placeholders: &'static [&'static str],
    ) -> Self {
        Self {
            name,
            body,
            placeholders,
        }
    }

    pub fn placeholders(&self) -> &[&str] {
        self.placeholders
    }

    /// Substitutes every placeholder with its binding. Substitution is a
    /// single left-to-right pass over the original body, so binding values
    /// are never re-scanned for markers.
    pub fn render(&self, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        for name in self.placeholders {
            if !bindings.iter().any(|(key, _)| key == name) {
                return Err(PromptError::MissingBinding(name.to_string()));
            }
        }
        let mut out = String::with_capacity(self.body.len());
        let mut rest = self.body;
        while !rest.is_empty() {
            let next = self
                .placeholders
                .iter()
                .filter_map(|name| {
                    let marker = format!("[{name}]");
                    rest.find(&marker).map(|pos| (pos, *name, marker.len()))
                })
                .min_by_key(|(pos, _, _)| *pos);
            match next {
                Some((pos, name, marker_len)) => {
                    out.push_str(&rest[..pos]);
                    let value = bindings
                        .iter()
                        .find(|(key, _)| *key == name)
                        .map(|(_, value)| *value)
                        .expect("checked above");
                    out.push_str(value);
                    rest = &rest[pos + marker_len..];
                }
                None => {
                    out.push_str(rest);
                    break;
                }
            }
        }
        Ok(out)
    }
}

/// Renders `template` with `bindings`; the returned text contains no
/// unreplaced placeholder markers.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &[(&str, &str)],
) -> Result<String, PromptError> {
    template.render(bindings)
}

/// Joins an instruction prompt and a model-side response the way every
/// scoring and training path lays them out: one blank line between them.
pub fn concat_prompt_response(prompt: &str, response: &str) -> String {
    format!("{prompt}\n\n{response}")
}

const TRAINING_BODY: &str = "Determine whether the provided claim is consistent with the corresponding document.

Consistency in this context implies that all information presented in the claim is substantiated by the document. If not, it should be considered inconsistent.

- First, think step by step about whether all the information in the claim is fully supported by the document within <think> and </think> tags.

- Then, please provide an easy-to-understand explanation for your answer within <reason> and </reason> tags.

- Finally, assess the claim's consistency with the document by responding with either \"Yes\" or \"No\" and wrap your final answer in <answer> and </answer> tags.

Document: [DOCUMENT]

Claim: [CLAIM]";

const COT_ANSWER_BODY: &str = "Determine whether the provided claim is consistent with the corresponding document.

Consistency in this context implies that all information presented in the claim is substantiated by the document. If not, it should be considered inconsistent.

- First, think step by step about whether all the information in the claim is fully supported by the document within <think> and </think> tags.

- Finally, assess the claim's consistency with the document by responding with either \"Yes\" or \"No\" and wrap your final answer in <answer> and </answer> tags.

Document: [DOCUMENT]

Claim: [CLAIM]";

const EXP_ANSWER_BODY: &str = "Determine whether the provided claim is consistent with the corresponding document.

Consistency in this context implies that all information presented in the claim is substantiated by the document. If not, it should be considered inconsistent.

- First, please provide an easy-to-understand explanation for your answer within <reason> and </reason> tags.

- Finally, assess the claim's consistency with the document by responding with either \"Yes\" or \"No\" and wrap your final answer in <answer> and </answer> tags.

Document: [DOCUMENT]

Claim: [CLAIM]";

const DIVERSITY_DEMO_BODY: &str = "Determine whether the provided claim is consistent with the corresponding document.

Consistency in this context implies that all information presented in the claim is substantiated by the document. If not, it should be considered inconsistent.

- First, think step by step about whether all the information in the claim is fully supported by the document within <think> and </think> tags.

- Then, please provide an easy-to-understand explanation for your answer within <reason> and </reason> tags.

- Finally, assess the claim's consistency with the document by responding with either \"Yes\" or \"No\" and wrap your final answer in <answer> and </answer> tags.

Document: [DOCUMENT]

Claim: [CLAIM]

Example: [Tested Sample]";

const EXPLANATION_REWARD_BODY: &str = "Determine whether the provided claim is consistent with the corresponding document.

Consistency in this context implies that all information presented in the claim is substantiated by the document. If not, it should be considered inconsistent.

- First, please refer to the provided explanation to assist you to answer the question.

- Then, please assess the claim's consistency with the document by responding with either \"Yes\" or \"No\". Please wrap your final answer in <answer> and </answer>.

Document: [DOCUMENT]

Claim: [CLAIM]

Explanation: [EXPLANATION]";

const EXPLANATION_REWARD_BASE_BODY: &str = "Determine whether the provided claim is consistent with the corresponding document.

Consistency in this context implies that all information presented in the claim is substantiated by the document. If not, it should be considered inconsistent.

- Please assess the claim's consistency with the document by responding with either \"Yes\" or \"No\". Please wrap your final answer in <answer> and </answer>.

Document: [DOCUMENT]

Claim: [CLAIM]";

const DECONTEXTUALIZATION_BODY: &str = "You are provied with a context and a claim. Please first determine if the claim can stand alone whitout the conext. If not, provide a decontextualzied version of the claim that incorporates necessary information from the context to make it self-contained. The revision should be as minimum as possible. Please respond with a JSON format: {\"label\": \"yes\"/\"no\", \"decontext\": \"NA\"/decontextualized claim}.

Example 1:

Context: There are many reasons why poetry is important for children. Poetry can help children build confidence through memorizing and reciting poems. It can also provide an easy way for children to remember a lesson or value.

Claim: It can also provide an easy way for children to remember a lesson or value.

Answer: {\"label\": \"no\", \"decontext\": \"Poetry can provide an easy way for children to remember a lesson or value.\"}

Example 2:
Context: Yes, ancient societies had concepts of rights. The concept of rights first appeared in the theory of natural law which existed in the state of nature. In this state, people enjoyed certain rights sanctioned by natural law.

Claim: In this state, people enjoyed certain rights sanctioned by natural law.

Answer: {\"label\": \"no\", \"decontext\": \"In the state of nature, people enjoyed certain rights sanctioned by natural law\"}

Example 3:

Context: The ancient Greeks had some concept of human rights, although there is no single word in classical Greek that captures the sense of \"rights\" as it is used in modern political thought. However, Greek customs and institutions provided protection to private property unique in the ancient world, instilling a strong sense of equality. The idea of human rights spread quickly from Babylon to Greece and eventually Rome, where the concept of \"natural law\" arose.

Claim: The idea of human rights spread quickly from Babylon to Greece and eventually Rome, where the concept of \"natural law\" arose.

Answer: {\"label\": \"yes\", \"decontext\": \"NA\"}

Your Turn:

Context: [CONTEXT]

Claim: [CLAIM]

Answer:";

const DECOMPOSITION_BODY: &str = "Segment the following sentence into individual facts:

Sentence: Other title changes included Lord Steven Regal and The Nasty Boys winning the World Television Championship and the World Tag Team Championship respectively.

Facts:

- Lord Steven Regal won the World Television Championship.

- The Nasty Boys won the World Tag Team Championship.

Sentence: The parkway was opened in 2001 after just under a year of construction and almost two decades of community requests.

Facts:

- The parkway was opened in 2001.

- The parkway was opened after just under a year of construction.

- The parkway was opened after two decades of community requests.

Sentence: Touring began in Europe in April-June with guitarist Paul Gilbert as the opening act, followed by Australia and New Zealand in July, Mexico and South America in late July-August, and concluding in North America in October-November.

Facts:

- Touring began in Europe in April-June.

- The opening act of the tour was guitarist Paul Gilbert.

- The tour was in Australia and New Zealand in July.

- The tour was in Mexico and South America in late July-August.

- The tour was concluded in North America in October-November.

Sentence: In March 2018, the company partnered With Amazon Web Services (AWS) to offer Al-enabled conversational solutions to customers in India.

Facts:

- The company partnered with Amazon Web Services (AWS) in March 2018.

- The two companies partnered to offer Al-enabled conversational solutions to customers in India.

Sentence: The most significant of these is in Germany, which now has a Yazidi community of more than 200,000 living primarily in Hannover, Bielefeld, Celle, Bremen, Bad Oeynhausen, Pforzheim and Oldenburg.

Facts:

- The most significant of these is in Germany.

- Germany now has a Yazidi community of more than 200,000.

- Yazidi community in Germany lives primarily in Hannover, Bielefeld, Celle, Bremen, Bad Oeynhausen, Pforzheim and Oldenburg.

Sentence: A previous six-time winner of the Nations\u{2019} Cup, Sebastian Vettel became Champion of Champions for the first time, defeating Tom Kristensen, who made the final for the fourth time, 2-0.

Facts:

- Sebastian Vettel is a previous six-time winner of the Nations\u{2019} Cup.

- Sebastian Vettel became Champion of Champions for the first time, defeating Tom Kristensen, 2-0.

- Tom Kristensen made the final for the fourth time.

Sentence: [SENTENCE]

Facts:";

const JUDGE_BODY: &str = "You are an evaluator. Another model was tasked with assessing whether a source document supports a given claim, and it successfully arrived at the correct determination based on the provided task instruction. The model then generated an explanation for its conclusion. Your role is to evaluate the quality of that explanation along the specified dimensions.

### Scoring Criteria:

1. Readability (1\u{2013}5): The explanation should be written in a clear and well-structured manner that enables the reader to easily follow the reasoning behind the model\u{2019}s conclusion. Beyond sentence fluency, focus on whether the explanation presents ideas in a logical sequence, avoids ambiguity, and makes it straightforward for the user to correctly understand why the model arrived at its prediction.

2. Helpfulness (1\u{2013}5): The explanation should effectively guide the user to understand why the model arrived at its conclusion. Focus on whether the reasoning is clear and logically connected to the claim and document, enabling the user to act on, adapt, or reconsider the claim if needed.

3. Informativeness (1\u{2013}5): The explanation should provide detailed, specific, and substantive information relevant to the claim and document. Focus on the richness and completeness of content, such as explicit evidence cited, nuanced reasoning, or contextual details that give a deeper understanding, even beyond what is strictly needed to justify the conclusion.

### Output Format (JSON only):

{
  \"readability\": <1-5>,
  \"helpfulness\": <1-5>,
  \"informativeness\": <1-5>
}

### Task Instruction (includes the claim and document):

[Task Instruction]

### Explanation to Evaluate:

[Explanation_Text]";

/// Detection prompt used for training, rollout, and evaluation.
pub const TRAINING: PromptTemplate =
    PromptTemplate::new("training", TRAINING_BODY, &["DOCUMENT", "CLAIM"]);

/// Data-synthesis prompt sent to the remote generator (same wording as
/// the detection prompt).
pub const SYNTHESIS: PromptTemplate =
    PromptTemplate::new("synthesis", TRAINING_BODY, &["DOCUMENT", "CLAIM"]);

/// Think-then-answer variant: no explanation instruction. Used as the
/// no-explanation context in explanation-quality filtering and as the
/// cot_answer SFT target mode.
pub const COT_ANSWER: PromptTemplate =
    PromptTemplate::new("cot_answer", COT_ANSWER_BODY, &["DOCUMENT", "CLAIM"]);

/// Explanation-then-answer variant: no think instruction. The exp_answer
/// SFT target mode.
pub const EXP_ANSWER: PromptTemplate =
    PromptTemplate::new("exp_answer", EXP_ANSWER_BODY, &["DOCUMENT", "CLAIM"]);

/// Detection prompt with a candidate sample spliced in as an in-context
/// demonstration, for diversity filtering.
pub const DIVERSITY_DEMO: PromptTemplate = PromptTemplate::new(
    "diversity_demo",
    DIVERSITY_DEMO_BODY,
    &["DOCUMENT", "CLAIM", "Tested Sample"],
);

/// Novice prompt for the explanation-quality reward.
pub const EXPLANATION_REWARD: PromptTemplate = PromptTemplate::new(
    "explanation_reward",
    EXPLANATION_REWARD_BODY,
    &["DOCUMENT", "CLAIM", "EXPLANATION"],
);

/// Same novice task with the explanation instruction and field removed;
/// the no-explanation side of the perplexity reward variant.
pub const EXPLANATION_REWARD_BASE: PromptTemplate = PromptTemplate::new(
    "explanation_reward_base",
    EXPLANATION_REWARD_BASE_BODY,
    &["DOCUMENT", "CLAIM"],
);

/// Claim decontextualization prompt with its three worked examples.
pub const DECONTEXTUALIZATION: PromptTemplate = PromptTemplate::new(
    "decontextualization",
    DECONTEXTUALIZATION_BODY,
    &["CONTEXT", "CLAIM"],
);

/// Claim decomposition prompt with its six worked examples.
pub const DECOMPOSITION: PromptTemplate =
    PromptTemplate::new("decomposition", DECOMPOSITION_BODY, &["SENTENCE"]);

/// Explanation-scoring judge prompt.
pub const JUDGE: PromptTemplate = PromptTemplate::new(
    "judge",
    JUDGE_BODY,
    &["Task Instruction", "Explanation_Text"],
);

/// Every shipped template, for listing and validation.
pub fn shipped_templates() -> Vec<&'static PromptTemplate> {
    vec![
        &TRAINING,
        &SYNTHESIS,
        &COT_ANSWER,
        &EXP_ANSWER,
        &DIVERSITY_DEMO,
        &EXPLANATION_REWARD,
        &EXPLANATION_REWARD_BASE,
        &DECONTEXTUALIZATION,
        &DECOMPOSITION,
        &JUDGE,
    ]
}

/// Renders the detection prompt for one document-claim pair.
pub fn detection_prompt(doc: &str, claim: &str) -> String {
    TRAINING
        .render(&[("DOCUMENT", doc), ("CLAIM", claim)])
        .expect("detection template bindings are total")
}
