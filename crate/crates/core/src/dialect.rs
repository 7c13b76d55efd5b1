use std::fmt;

use thiserror::Error;

use crate::model::ProcessModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    /// Sub-processes live in pools and talk through message flows.
    PoolBased,
    /// Pools are gone; diagrams synchronise through throw/catch signals.
    EventBased,
}

impl fmt::Display for Dialect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dialect::PoolBased => "pool-based",
            Dialect::EventBased => "event-based",
        })
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DialectError {
    #[error("model mixes message flows ({message_flows}) with event links ({event_links})")]
    Ambiguous {
        message_flows: usize,
        event_links: usize,
    },
}

/// Decides which dialect `model` is written in. Only the pool, message-flow
/// and event-link collections are inspected.
pub fn classify_dialect(model: &ProcessModel) -> Result<Dialect, DialectError> {
    if !model.message_flows.is_empty() && !model.event_links.is_empty() {
        return Err(DialectError::Ambiguous {
            message_flows: model.message_flows.len(),
            event_links: model.event_links.len(),
        });
    }
    if !model.pools.is_empty() || !model.message_flows.is_empty() {
        Ok(Dialect::PoolBased)
    } else {
        Ok(Dialect::EventBased)
    }
}
