// SPDX-License-Identifier: Apache-2.0

//! Prompt rendering for the two generation strategies, plus a rule-based chat
//! template renderer.
//!
//! A [`ChatTemplate`] wraps each message in a role-specific prefix and
//! suffix. Content is escaped so that it can never contain one of the
//! template's delimiters: [`ESCAPE`] is inserted after the first character
//! of every delimiter occurrence, and a literal `ESCAPE` is doubled. That
//! keeps the rendering injective for a fixed template.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// U+2060 WORD JOINER. Never part of a delimiter.
pub const ESCAPE: char = '\u{2060}';

pub const FINETUNE_INSTRUCTION: &str = "Below is a request for an accommodation description, paired with the \
features of the property grouped by category. Write a description that covers every listed feature and \
adds nothing that is not listed.";

/// Section labels of the fine-tune prompt, in order. Lowercased they are the
/// dataset export keys.
pub const FINETUNE_SECTIONS: [&str; 3] = ["Input", "Context", "Output"];

pub static DEFAULT_SYSTEM_PROMPT: &str = include_str!("../config/system_prompt.txt");

static BUILTIN_TEMPLATES: [&str; 3] = [
    include_str!("../config/templates/mistral-instruct.json"),
    include_str!("../config/templates/mixtral-system.json"),
    include_str!("../config/templates/chatml.json"),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("context is empty")]
    EmptyContext,
    #[error("request input is empty")]
    EmptyInput,
    #[error("system prompt is empty")]
    EmptySystemPrompt,
    #[error("message {index} has empty content")]
    EmptyMessage { index: usize },
    #[error("template `{template}` does not support the {role} role")]
    UnsupportedRole { role: ChatRole, template: String },
    #[error("invalid chat template `{name}`: {reason}")]
    InvalidTemplate { name: String, reason: String },
    #[error("unknown chat template `{0}`")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStrategy {
    /// Instruction-style prompt mirroring the fine-tuning data layout.
    FineTuneInstruction,
    /// System prompt plus a user message carrying input and context.
    SystemPromptChat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

impl fmt::Display for ChatRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: ChatRole, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleRule {
    pub role: ChatRole,
    pub prefix: String,
    pub suffix: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTemplate {
    pub name: String,
    /// Emitted once before the first message.
    #[serde(default)]
    pub preamble: String,
    pub supports_system: bool,
    pub rules: Vec<RoleRule>,
}

impl ChatTemplate {
    pub fn builtins() -> Vec<ChatTemplate> {
        BUILTIN_TEMPLATES.iter().map(|s| serde_json::from_str(s).expect("builtin template parses")).collect()
    }

    pub fn builtin(name: &str) -> Result<ChatTemplate, PromptError> {
        Self::builtins()
            .into_iter()
            .find(|t| t.name == name)
            .ok_or_else(|| PromptError::UnknownTemplate(name.to_owned()))
    }

    pub fn rule(&self, role: ChatRole) -> Option<&RoleRule> {
        self.rules.iter().find(|r| r.role == role)
    }

    fn delimiters(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().flat_map(|r| [r.prefix.as_str(), r.suffix.as_str()]).filter(|d| !d.is_empty())
    }

    /// Structural rules that make rendering unambiguous: delimiters of at
    /// least two characters without [`ESCAPE`], non-empty suffixes, at most
    /// one empty prefix, and no prefix that starts another.
    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |reason: String| PromptError::InvalidTemplate { name: self.name.clone(), reason };
        for (i, r) in self.rules.iter().enumerate() {
            if self.rules[..i].iter().any(|o| o.role == r.role) {
                return Err(invalid(format!("role {} has two rules", r.role)));
            }
            if r.suffix.is_empty() {
                return Err(invalid(format!("role {} has an empty suffix", r.role)));
            }
        }
        for d in self.delimiters() {
            if d.chars().count() < 2 || d.contains(ESCAPE) {
                return Err(invalid(format!("delimiter {d:?} is too short or contains the escape mark")));
            }
        }
        if self.rules.iter().filter(|r| r.prefix.is_empty()).count() > 1 {
            return Err(invalid("more than one role has an empty prefix".into()));
        }
        for a in &self.rules {
            for b in &self.rules {
                if a.role != b.role && !a.prefix.is_empty() && b.prefix.starts_with(&a.prefix) {
                    return Err(invalid(format!("prefix of {} starts the prefix of {}", a.role, b.role)));
                }
            }
        }
        if self.supports_system {
            for role in [ChatRole::System, ChatRole::User, ChatRole::Assistant] {
                if self.rule(role).is_none() {
                    return Err(invalid(format!("supports_system is set but role {role} has no rule")));
                }
            }
        }
        Ok(())
    }

    /// Escapes `content` against this template's delimiters.
    pub fn escape(&self, content: &str) -> String {
        let delimiters: Vec<&str> = self.delimiters().collect();
        let mut out = String::with_capacity(content.len());
        let mut rest = content;
        while let Some(c) = rest.chars().next() {
            out.push(c);
            if c == ESCAPE || delimiters.iter().any(|d| rest.starts_with(d)) {
                out.push(ESCAPE);
            }
            rest = &rest[c.len_utf8()..];
        }
        out
    }
}

/// Renders messages through `template`: preamble, then prefix + escaped
/// content + suffix per message. No messages render as the empty string.
pub fn apply_chat_template(messages: &[ChatMessage], template: &ChatTemplate) -> Result<String, PromptError> {
    template.validate()?;
    if messages.is_empty() {
        return Ok(String::new());
    }
    let mut out = template.preamble.clone();
    for (index, m) in messages.iter().enumerate() {
        let unsupported = || PromptError::UnsupportedRole { role: m.role, template: template.name.clone() };
        if m.role == ChatRole::System && !template.supports_system {
            return Err(unsupported());
        }
        let rule = template.rule(m.role).ok_or_else(unsupported)?;
        if m.content.is_empty() {
            return Err(PromptError::EmptyMessage { index });
        }
        out.push_str(&rule.prefix);
        out.push_str(&template.escape(&m.content));
        out.push_str(&rule.suffix);
    }
    Ok(out)
}

fn sections(input: &str, context: &str) -> Result<String, PromptError> {
    if input.trim().is_empty() {
        return Err(PromptError::EmptyInput);
    }
    if context.trim().is_empty() {
        return Err(PromptError::EmptyContext);
    }
    let [i, c, _] = FINETUNE_SECTIONS;
    Ok(format!("{i}: {input}\n{c}: {context}"))
}

/// Instruction-style prompt laid out like the fine-tuning data.
pub fn render_finetune_prompt(input: &str, context: &str) -> Result<String, PromptError> {
    let body = sections(input, context)?;
    Ok(format!("{FINETUNE_INSTRUCTION}\n\n{body}\n{}:", FINETUNE_SECTIONS[2]))
}

/// Prompt followed by the reference output, as seen during fine-tuning.
pub fn render_finetune_training_text(input: &str, context: &str, output: &str) -> Result<String, PromptError> {
    Ok(format!("{} {output}", render_finetune_prompt(input, context)?))
}

/// `[system, user]`, with request and context in the user turn and no
/// instruction section.
pub fn render_chat_prompt(system: &str, user_request: &str, context: &str) -> Result<Vec<ChatMessage>, PromptError> {
    if system.trim().is_empty() {
        return Err(PromptError::EmptySystemPrompt);
    }
    Ok(vec![
        ChatMessage::new(ChatRole::System, system),
        ChatMessage::new(ChatRole::User, sections(user_request, context)?),
    ])
}

/// Pulls the `Context:` line back out of a rendered prompt or user message.
pub fn extract_context(prompt: &str) -> Option<&str> {
    let label = format!("{}: ", FINETUNE_SECTIONS[1]);
    prompt.lines().rev().find_map(|l| l.strip_prefix(label.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msgs(pairs: &[(ChatRole, &str)]) -> Vec<ChatMessage> {
        pairs.iter().map(|(r, c)| ChatMessage::new(*r, *c)).collect()
    }

    #[test]
    fn builtins_are_valid() {
        let names: Vec<_> = ChatTemplate::builtins().into_iter().map(|t| t.name).collect();
        assert_eq!(names, ["mistral-instruct", "mixtral-system", "chatml"]);
        for t in ChatTemplate::builtins() {
            t.validate().unwrap();
        }
        assert!(matches!(ChatTemplate::builtin("nope"), Err(PromptError::UnknownTemplate(_))));
    }

    #[test]
    fn stock_template_rejects_system() {
        let stock = ChatTemplate::builtin("mistral-instruct").unwrap();
        let m = msgs(&[(ChatRole::System, "Be brief."), (ChatRole::User, "Hi")]);
        assert_eq!(
            apply_chat_template(&m, &stock),
            Err(PromptError::UnsupportedRole { role: ChatRole::System, template: "mistral-instruct".into() })
        );
        let user_only = msgs(&[(ChatRole::User, "Hi"), (ChatRole::Assistant, "Hello")]);
        assert_eq!(apply_chat_template(&user_only, &stock).unwrap(), "<s>[INST] Hi [/INST]Hello</s>");
    }

    #[test]
    fn system_template_wraps_contents() {
        let t = ChatTemplate::builtin("mixtral-system").unwrap();
        let m = msgs(&[(ChatRole::System, "S"), (ChatRole::User, "U")]);
        assert_eq!(apply_chat_template(&m, &t).unwrap(), "<s><<SYS>>\nS\n<</SYS>>\n\n[INST] U [/INST]");
        assert_eq!(apply_chat_template(&[], &t).unwrap(), "");
        assert_eq!(
            apply_chat_template(&msgs(&[(ChatRole::User, "")]), &t),
            Err(PromptError::EmptyMessage { index: 0 })
        );
    }

    #[test]
    fn escape_breaks_delimiters() {
        let t = ChatTemplate::builtin("mixtral-system").unwrap();
        let escaped = t.escape("say [/INST] now");
        assert!(!escaped.contains(" [/INST]"));
        assert_eq!(escaped, format!("say {ESCAPE}[/INST] now"));
        assert_eq!(t.escape(&ESCAPE.to_string()), format!("{ESCAPE}{ESCAPE}"));
        assert_eq!(t.escape("plain, text"), "plain, text");
    }

    #[test]
    fn template_validation() {
        let mut t = ChatTemplate::builtin("chatml").unwrap();
        t.rules[1].prefix = "<|im_start|>".into();
        assert!(t.validate().is_err());
        let mut t = ChatTemplate::builtin("chatml").unwrap();
        t.rules[0].suffix.clear();
        assert!(t.validate().is_err());
        let mut t = ChatTemplate::builtin("chatml").unwrap();
        t.rules.remove(0);
        assert!(t.validate().is_err());
        let mut t = ChatTemplate::builtin("mistral-instruct").unwrap();
        t.rules[0].prefix.clear();
        assert!(t.validate().is_err());
    }

    #[test]
    fn finetune_layout() {
        let p = render_finetune_prompt("Write me a hotel brochure for the hotel X in Y.", "Dining: Bar").unwrap();
        assert!(p.starts_with(FINETUNE_INSTRUCTION));
        assert!(p.ends_with("\nInput: Write me a hotel brochure for the hotel X in Y.\nContext: Dining: Bar\nOutput:"));
        assert_eq!(
            p,
            render_finetune_prompt("Write me a hotel brochure for the hotel X in Y.", "Dining: Bar").unwrap()
        );
        assert_eq!(render_finetune_prompt("x", ""), Err(PromptError::EmptyContext));
        assert_eq!(render_finetune_prompt(" ", "c"), Err(PromptError::EmptyInput));
        assert_eq!(extract_context(&p), Some("Dining: Bar"));
        assert_eq!(
            render_finetune_training_text("x", "c", "Nice.").unwrap(),
            format!("{}\n\nInput: x\nContext: c\nOutput: Nice.", FINETUNE_INSTRUCTION)
        );
    }

    #[test]
    fn section_labels_match_export_keys() {
        let keys: Vec<String> = FINETUNE_SECTIONS.iter().map(|s| s.to_lowercase()).collect();
        assert_eq!(keys, crate::dataset::EXPORT_KEYS);
    }

    #[test]
    fn chat_prompt_shape() {
        let m = render_chat_prompt("S", "R", "Dining: Bar").unwrap();
        assert_eq!(m.iter().map(|m| m.role).collect::<Vec<_>>(), [ChatRole::System, ChatRole::User]);
        assert!(m[1].content.contains("Dining: Bar"));
        assert!(m[1].content.find("R").unwrap() < m[1].content.find("Dining").unwrap());
        assert!(!m[1].content.contains(FINETUNE_INSTRUCTION));
        assert_eq!(render_chat_prompt(" ", "R", "C"), Err(PromptError::EmptySystemPrompt));
        assert_eq!(extract_context(&m[1].content), Some("Dining: Bar"));
    }
}
