//! Prompt templates for fact generation and fact validation.
//!
//! Placeholders are substituted literally, exactly once, with no escaping.

pub const AFG_SYSTEM_TEMPLATE: &str = "You are an annotator that breaks down sentences into independent facts, short statements that each contain one piece of information contained in the given sentence. In the next paragraphs you have examples of sentences broken down in atomic facts. You have to complete the example given by the user. Do not add new entities, do not deviate from the subject of the sentence given by the user, do not hallucinate, do not repeat facts in the system prompt. List the sentences using -\n\nPlease break down the following sentence into independent facts: <demo>";

pub const AFG_USER_TEMPLATE: &str =
    "Please break down the following sentence into independent facts: <sentence>";

pub const AFV_SYSTEM_PROMPT: &str = "You are an annotator that verifies the factuality of a sentence according to a given source text. You answer only True or False and provide no further explanations.";

pub const AFV_USER_HEADER_TEMPLATE: &str =
    "Input: \"Answer the question about <entity> based on the given context.";

pub const AFV_QUESTION: &str = "True or False?";
pub const AFV_ANSWER_CUE: &str = "Answer:";

pub(crate) fn fill(template: &str, placeholder: &str, value: &str) -> String {
    template.replacen(placeholder, value, 1)
}
