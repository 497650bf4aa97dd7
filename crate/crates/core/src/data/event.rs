use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The network an interaction was observed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Network {
    SourceA,
    SourceB,
    Target,
}

impl Network {
    pub fn tag(self) -> &'static str {
        match self {
            Network::SourceA => "src_a",
            Network::SourceB => "src_b",
            Network::Target => "target",
        }
    }

    pub fn is_source(self) -> bool {
        !matches!(self, Network::Target)
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Network {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "src_a" => Ok(Network::SourceA),
            "src_b" => Ok(Network::SourceB),
            "target" => Ok(Network::Target),
            other => Err(format!("unknown network tag `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// Pre-tokenized text of a source-network post.
    Tokens(Vec<String>),
    /// Target-network item id.
    Item(String),
}

/// One timestamped user action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionEvent {
    pub timestamp: i64,
    pub user_id: String,
    pub network: Network,
    pub payload: Payload,
}

impl InteractionEvent {
    pub fn source(timestamp: i64, user_id: &str, network: Network, tokens: &[&str]) -> Self {
        debug_assert!(network.is_source());
        InteractionEvent {
            timestamp,
            user_id: user_id.to_string(),
            network,
            payload: Payload::Tokens(tokens.iter().map(|t| t.to_string()).collect()),
        }
    }

    pub fn target(timestamp: i64, user_id: &str, item: &str) -> Self {
        InteractionEvent {
            timestamp,
            user_id: user_id.to_string(),
            network: Network::Target,
            payload: Payload::Item(item.to_string()),
        }
    }

    pub fn item(&self) -> Option<&str> {
        match &self.payload {
            Payload::Item(id) => Some(id),
            Payload::Tokens(_) => None,
        }
    }

    pub fn tokens(&self) -> Option<&[String]> {
        match &self.payload {
            Payload::Tokens(t) => Some(t),
            Payload::Item(_) => None,
        }
    }

    /// Checks the per-event invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.timestamp < 0 {
            return Err(format!("negative timestamp {}", self.timestamp));
        }
        if self.user_id.is_empty() || self.user_id.contains(char::is_whitespace) {
            return Err(format!("invalid user id `{}`", self.user_id));
        }
        match (&self.payload, self.network.is_source()) {
            (Payload::Tokens(tokens), true) => {
                if tokens.is_empty() {
                    return Err("source event without tokens".into());
                }
            }
            (Payload::Item(item), false) => {
                if item.is_empty() || item.contains(char::is_whitespace) {
                    return Err(format!("invalid item id `{item}`"));
                }
            }
            _ => return Err("payload does not match network".into()),
        }
        Ok(())
    }

    /// Renders the event as one event-log line (without newline).
    pub fn to_line(&self) -> String {
        let payload = match &self.payload {
            Payload::Tokens(t) => t.join(" "),
            Payload::Item(i) => i.clone(),
        };
        format!("{}\t{}\t{}\t{}", self.timestamp, self.user_id, self.network, payload)
    }
}

fn parse_line(line: &str) -> std::result::Result<InteractionEvent, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 tab-separated fields, found {}", fields.len()));
    }
    let timestamp: i64 = fields[0]
        .trim()
        .parse()
        .map_err(|e| format!("bad timestamp `{}`: {e}", fields[0]))?;
    let network: Network = fields[2].trim().parse()?;
    let payload = if network.is_source() {
        Payload::Tokens(fields[3].split_whitespace().map(str::to_string).collect())
    } else {
        let tokens: Vec<&str> = fields[3].split_whitespace().collect();
        if tokens.len() != 1 {
            return Err(format!("target payload must be one item id, found {}", tokens.len()));
        }
        Payload::Item(tokens[0].to_string())
    };
    let event = InteractionEvent {
        timestamp,
        user_id: fields[1].trim().to_string(),
        network,
        payload,
    };
    event.validate()?;
    Ok(event)
}

/// Parses event-log text. Blank lines and `#` comments are skipped.
/// Events come back sorted by `(timestamp, user_id)`, stable on line order.
pub fn parse_event_str(text: &str) -> Result<Vec<InteractionEvent>> {
    let mut events = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let event = parse_line(line).map_err(|m| Error::parse(idx + 1, m))?;
        events.push(event);
    }
    sort_events(&mut events);
    Ok(events)
}

pub fn parse_event_log(path: impl AsRef<Path>) -> Result<Vec<InteractionEvent>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_event_str(&text)
}

pub fn sort_events(events: &mut [InteractionEvent]) {
    events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.user_id.cmp(&b.user_id)));
}

pub fn write_event_log<'a>(
    path: impl AsRef<Path>,
    events: impl IntoIterator<Item = &'a InteractionEvent>,
) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for e in events {
        writeln!(out, "{}", e.to_line()).expect("write to vec");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
