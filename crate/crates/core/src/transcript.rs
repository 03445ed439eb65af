//! Line-oriented event log: one `key=value` record per event.
//!
//! ```text
//! t=12 node=3 event=reject vid=00..2d reason=DuplicateVID
//! ```

use std::fmt;

use crate::ballot::Vid;
use crate::ledger::{NodeId, Tick};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub tick: Tick,
    fields: Vec<(String, String)>,
}

impl Event {
    pub fn new(tick: Tick, event: &str) -> Self {
        Self {
            tick,
            fields: vec![("event".into(), event.into())],
        }
    }

    pub fn node(self, node: NodeId) -> Self {
        self.with("node", node)
    }

    pub fn actor(self, actor: &str) -> Self {
        self.with("actor", actor)
    }

    pub fn vid(self, vid: &Vid) -> Self {
        self.with("vid", vid)
    }

    pub fn reason(self, reason: impl fmt::Display) -> Self {
        self.with("reason", reason)
    }

    /// Appends a field. Values must not contain whitespace.
    pub fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        let value = value.to_string();
        debug_assert!(!value.contains(char::is_whitespace), "{key}={value:?}");
        self.fields.push((key.into(), value));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn kind(&self) -> &str {
        self.get("event").unwrap_or("")
    }

    pub fn parse(line: &str) -> Option<Self> {
        let mut parts = line.split_whitespace();
        let tick = parts.next()?.strip_prefix("t=")?.parse().ok()?;
        let fields = parts
            .map(|p| p.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { tick, fields })
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={}", self.tick)?;
        for (k, v) in &self.fields {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    pub events: Vec<Event>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| e.kind() == kind)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Option<Self> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(Event::parse)
            .collect::<Option<Vec<_>>>()
            .map(|events| Self { events })
    }
}
