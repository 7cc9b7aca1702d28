//! Prompt templates. The wording is fixed; tests compare renderings against
//! golden files byte for byte.

use crate::kb::{FactHistory, Timestamp};

const EXTRACT_INSTRUCTION: &str = "Extract all facts from the input text, with each fact on a new line and without bullet points or numbered lists. Facts should be simple, independent, standalone, and decontextualized. Break up long facts into smaller facts. Resolve all references (e.g. pronouns, definite articles, etc.) by copying full reference object everywhere it is referenced. Only include facts referring to the current world state (what is true *now*), as opposed to facts true in the past. If there are no facts, please output \"No new facts.\" Do not include any other text.";

pub fn classification(ts: &Timestamp, context: &str, fact: &str) -> String {
    format!(
        "[Input] [Timestamp: {ts}] {context} [End Input]\n\n\
         The fact \"{fact}\" was previously true. In light of the input, is \"{fact}\" likely still true as of {ts}? \
         Begin by summarizing the changes we learned from the input, then reasoning briefly about them to give your final answer with \
         \"Answer: Reinforce\" (if the input makes the fact more likely) or \"Answer: Make False\" (if the input makes the fact less likely) \
         or \"Answer: No Change\" (if the input doesn't affect the fact, e.g. if the input is irrelevant to the fact). \
         Assume that the fact is still true (keep true) if nothing in the input contradicts it."
    )
}

pub fn rewrite(ts: &Timestamp, context: &str, fact: &str, still_true: &[String]) -> String {
    format!(
        "[Input] [Timestamp: {ts}] {context}\n\
         Other True Facts at {ts}: {}\n\
         [End Input]\n\n\
         The fact \"{fact}\" was previously true but no longer. Given the above input and true facts, \
         can you rewrite it into one that is true as of {ts}? \
         Output your answer in form \"rewrite: rewritten fact\" or \"no rewrite possible\".",
        still_true.join(", ")
    )
}

pub fn extraction(ts: &Timestamp, context: &str) -> String {
    format!("[Input] [Timestamp: {ts}] {context} [End Input]\n\n{EXTRACT_INSTRUCTION}")
}

/// One statement line: the fact followed by its dated truth history.
pub fn statement_line(fact: &str, history: &FactHistory) -> String {
    format!("{fact} ({})", history.render())
}

/// One retrieved passage line for the document-store baselines.
pub fn passage_line(ts: &Timestamp, text: &str) -> String {
    format!("[Timestamp: {ts}] {text}")
}

fn choices_json(choices: &[String]) -> String {
    serde_json::to_string(choices).expect("strings serialize")
}

/// Final answer instruction; `list` switches to the JSON-list form.
pub fn answer_instruction(choices: &[String], list: bool) -> String {
    if list {
        format!(
            "Briefly reason then answer with a JSON list, [\"item1\", \"item2\", ...], of zero or more of the following items: {}. \
             If you include any of the above items, make sure to copy their names exactly as is from the list. \
             Your list may be empty, [], if none of the answers are true.",
            choices_json(choices)
        )
    } else {
        format!("Briefly reason then answer with one of: {}.", choices_json(choices))
    }
}

pub fn inference(statements: &[String], ts: &Timestamp, question: &str, choices: &[String], list: bool) -> String {
    let mut body = String::new();
    for s in statements {
        body.push_str(s);
        body.push('\n');
    }
    format!(
        "Read the statements/passages below then answer the question below\n\n\
         ***BEGIN STATEMENTS***\n{body}***END STATEMENTS***\n\n\
         Given the above statements are true and any prior knowledge you have, answer the following question at timestep {ts}?:\n\
         {question}\n\n{}",
        answer_instruction(choices, list)
    )
}
