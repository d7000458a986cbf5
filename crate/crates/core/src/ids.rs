//! Dense 0-based identifiers for the four namespaces.

use std::fmt;

macro_rules! dense_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }

            #[inline]
            pub fn from_index(i: usize) -> Self {
                Self(u32::try_from(i).expect(concat!(stringify!($name), " overflow")))
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

dense_id!(
    /// Index into the knowledge-graph entity table.
    EntityId
);
dense_id!(
    /// Index into the relation-type table. [`RelationId::SELF`] is reserved.
    RelationId
);
dense_id!(UserId);
dense_id!(
    /// Index into the item table. Every item is also an entity.
    ItemId
);

impl RelationId {
    /// Sentinel relation attached to isolated entities by neighbor sampling.
    pub const SELF: RelationId = RelationId(u32::MAX);

    pub fn is_self(self) -> bool {
        self == Self::SELF
    }
}
