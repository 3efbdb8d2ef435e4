//! Hybrid logical clock timestamps.
//!
//! A timestamp is a pair `(l, c)`: `l` tracks the largest physical clock
//! reading (in milliseconds) the owner has seen, `c` is a bounded logical
//! counter that orders events sharing the same `l`. Ordering is
//! lexicographic on `(l, c)`.
//!
//! All update rules are pure functions. The owner keeps the current value
//! and passes it back in on the next event.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Width of the logical counter in the packed encoding.
pub const COUNTER_BITS: u32 = 16;
/// Largest representable logical counter.
pub const MAX_COUNTER: u64 = (1 << COUNTER_BITS) - 1;
/// Largest representable physical component.
pub const MAX_PHYSICAL: u64 = (1 << (64 - COUNTER_BITS)) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HlcError {
    #[error("logical counter overflow at l={l}")]
    CounterOverflow { l: u64 },
    #[error("physical component {l} does not fit in 48 bits")]
    PhysicalOverflow { l: u64 },
}

/// `(l, c)` hybrid logical clock value. The derived ordering is the
/// lexicographic order on `(l, c)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HlcTimestamp {
    pub l: u64,
    pub c: u64,
}

impl HlcTimestamp {
    pub const ZERO: HlcTimestamp = HlcTimestamp { l: 0, c: 0 };

    pub const fn new(l: u64, c: u64) -> Self {
        HlcTimestamp { l, c }
    }

    fn checked(self) -> Result<Self, HlcError> {
        if self.l > MAX_PHYSICAL {
            Err(HlcError::PhysicalOverflow { l: self.l })
        } else if self.c > MAX_COUNTER {
            Err(HlcError::CounterOverflow { l: self.l })
        } else {
            Ok(self)
        }
    }

    /// Packs into `(l << 16) | c`. Integer order of encodings equals
    /// timestamp order.
    pub fn encode(self) -> Result<u64, HlcError> {
        let t = self.checked()?;
        Ok((t.l << COUNTER_BITS) | t.c)
    }

    pub fn decode(raw: u64) -> Self {
        HlcTimestamp {
            l: raw >> COUNTER_BITS,
            c: raw & MAX_COUNTER,
        }
    }

    pub fn to_be_bytes(self) -> Result<[u8; 8], HlcError> {
        Ok(self.encode()?.to_be_bytes())
    }

    pub fn from_be_bytes(bytes: [u8; 8]) -> Self {
        Self::decode(u64::from_be_bytes(bytes))
    }
}

impl fmt::Display for HlcTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{},{}>", self.l, self.c)
    }
}

impl Serialize for HlcTimestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let raw = self.encode().map_err(serde::ser::Error::custom)?;
        serializer.serialize_u64(raw)
    }
}

impl<'de> Deserialize<'de> for HlcTimestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        u64::deserialize(deserializer).map(HlcTimestamp::decode)
    }
}

/// Send or local event: `l = max(l, pt)`, counter bumps only when `l`
/// did not move.
pub fn tick_local(current: HlcTimestamp, pt: u64) -> Result<HlcTimestamp, HlcError> {
    let l = current.l.max(pt);
    let c = if l == current.l { current.c + 1 } else { 0 };
    HlcTimestamp { l, c }.checked()
}

/// Receive event for a message stamped `msg`.
pub fn tick_recv(
    current: HlcTimestamp,
    msg: HlcTimestamp,
    pt: u64,
) -> Result<HlcTimestamp, HlcError> {
    let l = current.l.max(msg.l).max(pt);
    let c = if l == current.l && l == msg.l {
        current.c.max(msg.c) + 1
    } else if l == current.l {
        current.c + 1
    } else if l == msg.l {
        msg.c + 1
    } else {
        0
    };
    HlcTimestamp { l, c }.checked()
}

/// Timestamp for a new local write that must strictly dominate `dt`, the
/// largest timestamp the write depends on. Same case split as a receive
/// event with `dt` in place of the message timestamp.
pub fn tick_put(
    current: HlcTimestamp,
    dt: HlcTimestamp,
    pt: u64,
) -> Result<HlcTimestamp, HlcError> {
    tick_recv(current, dt, pt)
}
