//! Line-oriented human adapter.
//!
//! Prints exactly the prompts a model would receive and reads one line per
//! turn, so a person at a terminal plays under identical conditions. The
//! reader and writer are injectable; tests feed a scripted input stream to
//! show the adapter is interchangeable with any other agent.

use std::io::{BufRead, Write};

use crate::error::AgentError;
use crate::session::{ChatMessage, Role};

use super::Agent;

pub struct HumanAgent<R: BufRead, W: Write> {
    input: R,
    output: W,
    printed: usize,
}

impl HumanAgent<std::io::StdinLock<'static>, std::io::StdoutLock<'static>> {
    pub fn stdio() -> Self {
        HumanAgent::new(std::io::stdin().lock(), std::io::stdout().lock())
    }
}

impl<R: BufRead, W: Write> HumanAgent<R, W> {
    pub fn new(input: R, output: W) -> Self {
        HumanAgent { input, output, printed: 0 }
    }

    fn show(&mut self, message: &ChatMessage) -> Result<(), AgentError> {
        let label = match message.role {
            Role::System => "[system]",
            Role::User => "[task]",
            Role::Assistant => "[you]",
        };
        writeln!(self.output, "{label} {}", message.content)
            .and_then(|()| self.output.flush())
            .map_err(|e| AgentError::Transport { attempts: 1, message: e.to_string() })
    }
}

impl<R: BufRead, W: Write> Agent for HumanAgent<R, W> {
    fn name(&self) -> &str {
        "human"
    }

    fn reply(&mut self, messages: &[ChatMessage]) -> Result<String, AgentError> {
        // Print anything not yet shown (system prompt, new feedback/prompts),
        // skipping the player's own previous replies.
        for i in self.printed..messages.len() {
            if messages[i].role != Role::Assistant {
                let message = messages[i].clone();
                self.show(&message)?;
            }
        }
        self.printed = messages.len() + 1; // +1 for the reply recorded next

        let mut line = String::new();
        let read = self
            .input
            .read_line(&mut line)
            .map_err(|e| AgentError::Transport { attempts: 1, message: e.to_string() })?;
        if read == 0 {
            return Err(AgentError::InputClosed);
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn replays_scripted_input_lines() {
        let script = "left arm\nright arm\n";
        let mut out = Vec::new();
        let mut agent = HumanAgent::new(Cursor::new(script), &mut out);
        let messages = vec![ChatMessage::system("sys"), ChatMessage::user("Choose.")];
        assert_eq!(agent.reply(&messages).unwrap(), "left arm");
        let mut messages = messages;
        messages.push(ChatMessage::assistant("left arm"));
        messages.push(ChatMessage::user("Reward: 1. Choose."));
        assert_eq!(agent.reply(&messages).unwrap(), "right arm");
        let shown = String::from_utf8(out).unwrap();
        assert!(shown.contains("[system] sys"));
        assert!(shown.contains("[task] Choose."));
        assert!(!shown.contains("[you]"));
    }

    #[test]
    fn closed_input_is_reported() {
        let mut out = Vec::new();
        let mut agent = HumanAgent::new(Cursor::new(""), &mut out);
        let err = agent.reply(&[ChatMessage::user("Choose.")]).unwrap_err();
        assert!(matches!(err, AgentError::InputClosed));
    }
}
