//! Dense integer identifiers for the entities of a phase.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! dense_id {
    ($(#[$doc:meta])* $name:ident, $prefix:literal) => {
        $(#[$doc])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl From<usize> for $name {
            fn from(v: usize) -> Self {
                Self(v)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

dense_id!(
    /// Task index in `[0, K)`.
    TaskId,
    "t"
);
dense_id!(
    /// Rank index in `[0, I)`. The total order is used by the lock protocol.
    RankId,
    "r"
);
dense_id!(
    /// Shared block index in `[0, N)`.
    BlockId,
    "s"
);
dense_id!(
    /// Communication edge index in `[0, M)`.
    CommId,
    "c"
);
dense_id!(
    /// Compute node index.
    NodeId,
    "n"
);
