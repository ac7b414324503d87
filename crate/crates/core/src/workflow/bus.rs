use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WorkflowError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topic {
    FlexBidRequest,
    BidOffer,
    DfScheduling,
    DfFulfilled,
}

impl Topic {
    pub const ALL: [Topic; 4] = [Topic::FlexBidRequest, Topic::BidOffer, Topic::DfScheduling, Topic::DfFulfilled];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::FlexBidRequest => "flex_bid_request",
            Topic::BidOffer => "bid_offer",
            Topic::DfScheduling => "df_scheduling",
            Topic::DfFulfilled => "df_fulfilled",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Topic {
    type Err = WorkflowError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topic::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| WorkflowError::UnknownTopic(s.to_owned()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Notification {
    pub topic: Topic,
    pub payload: serde_json::Value,
    pub publisher: String,
}

/// Synchronous fan-out to per-topic subscriber lists.
#[derive(Clone, Debug, Default)]
pub struct NotificationBus {
    subscribers: BTreeMap<Topic, Vec<String>>,
    inboxes: BTreeMap<String, Vec<Notification>>,
}

impl NotificationBus {
    /// Idempotent: an actor appears at most once per topic.
    pub fn subscribe(&mut self, actor_id: &str, topic: Topic) {
        let subs = self.subscribers.entry(topic).or_default();
        if !subs.iter().any(|s| s == actor_id) {
            subs.push(actor_id.to_owned());
        }
    }

    pub fn subscribers(&self, topic: Topic) -> &[String] {
        self.subscribers.get(&topic).map_or(&[], Vec::as_slice)
    }

    /// Delivers to every current subscriber once, in subscription order.
    /// Returns the recipients.
    pub fn publish(&mut self, notification: Notification) -> Vec<String> {
        let recipients = self.subscribers(notification.topic).to_vec();
        for r in &recipients {
            self.inboxes.entry(r.clone()).or_default().push(notification.clone());
        }
        recipients
    }

    pub fn inbox(&self, actor_id: &str) -> &[Notification] {
        self.inboxes.get(actor_id).map_or(&[], Vec::as_slice)
    }
}
