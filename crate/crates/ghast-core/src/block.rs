//! Block identifiers, block tuples and the keyed digest function.

use alloc::vec::Vec;
use core::fmt;
#[allow(deprecated)]
use core::hash::{Hasher, SipHasher};

/// 64-bit block digest. Doubles as hash, tie-breaker and tag source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BlockId(pub u64);

/// Reserved digest of the genesis block.
pub const GENESIS_ID: BlockId = BlockId(0);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl BlockId {
    /// Parses the 16-digit hex form produced by `Display`.
    pub fn parse_hex(s: &str) -> Option<BlockId> {
        if s.is_empty() || s.len() > 16 {
            return None;
        }
        u64::from_str_radix(s, 16).ok().map(BlockId)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Creator {
    Honest,
    Malicious,
}

impl Creator {
    pub fn as_str(self) -> &'static str {
        match self {
            Creator::Honest => "honest",
            Creator::Malicious => "malicious",
        }
    }

    pub fn parse(s: &str) -> Option<Creator> {
        match s {
            "honest" => Some(Creator::Honest),
            "malicious" => Some(Creator::Malicious),
            _ => None,
        }
    }
}

/// Immutable block tuple. `parent` is `None` only for genesis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub id: BlockId,
    pub parent: Option<BlockId>,
    pub refs: Vec<BlockId>,
    pub creator: Creator,
    pub born_round: u64,
}

impl Block {
    pub fn genesis() -> Block {
        Block { id: GENESIS_ID, parent: None, refs: Vec::new(), creator: Creator::Honest, born_round: 0 }
    }

    /// Parent followed by refs.
    pub fn deps(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.parent.iter().copied().chain(self.refs.iter().copied())
    }
}

/// Seeded keyed PRF producing block digests and tag samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DigestKey {
    k0: u64,
    k1: u64,
}

pub(crate) const DOMAIN_DIGEST: u64 = 0x6469_6765_7374_0001;
pub(crate) const DOMAIN_WEIGHT: u64 = 0x7765_6967_6874_0002;
pub(crate) const DOMAIN_TIMER: u64 = 0x7469_6d65_7200_0003;

impl DigestKey {
    pub fn new(seed: u64) -> DigestKey {
        DigestKey { k0: seed ^ 0x736f_6d65_7073_6575, k1: seed.rotate_left(32) ^ 0x646f_7261_6e64_6f83 }
    }

    #[allow(deprecated)]
    fn hasher(&self, domain: u64) -> SipHasher {
        let mut h = SipHasher::new_with_keys(self.k0, self.k1);
        h.write_u64(domain);
        h
    }

    /// Digest over (parent, refs, creator, nonce). Never returns the genesis digest.
    pub fn digest(&self, parent: Option<BlockId>, refs: &[BlockId], creator: Creator, nonce: u64) -> BlockId {
        let mut n = nonce;
        loop {
            let mut h = self.hasher(DOMAIN_DIGEST);
            match parent {
                Some(p) => {
                    h.write_u8(1);
                    h.write_u64(p.0);
                }
                None => h.write_u8(0),
            }
            h.write_usize(refs.len());
            for r in refs {
                h.write_u64(r.0);
            }
            h.write_u8(creator as u8);
            h.write_u64(n);
            let out = h.finish();
            if out != GENESIS_ID.0 {
                return BlockId(out);
            }
            n = n.wrapping_add(1);
        }
    }
}

/// Fixed-key PRF used for weight and timer tags; independent of the run seed
/// so a block's tags are a function of its digest alone.
#[allow(deprecated)]
pub fn tag_sample(domain: u64, id: BlockId) -> u64 {
    let mut h = SipHasher::new_with_keys(0x0123_4567_89ab_cdef ^ domain, 0xfedc_ba98_7654_3210);
    h.write_u64(id.0);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_deterministic_and_never_genesis() {
        let k = DigestKey::new(7);
        let a = k.digest(Some(GENESIS_ID), &[], Creator::Honest, 3);
        let b = k.digest(Some(GENESIS_ID), &[], Creator::Honest, 3);
        assert_eq!(a, b);
        assert_ne!(a, GENESIS_ID);
        assert_ne!(a, k.digest(Some(GENESIS_ID), &[], Creator::Malicious, 3));
        assert_ne!(a, DigestKey::new(8).digest(Some(GENESIS_ID), &[], Creator::Honest, 3));
    }

    #[test]
    fn hex_round_trip() {
        let id = BlockId(0x00ab_cdef_0123_4567);
        assert_eq!(BlockId::parse_hex(&alloc::format!("{id}")), Some(id));
        assert_eq!(BlockId::parse_hex(""), None);
        assert_eq!(BlockId::parse_hex("zz"), None);
    }
}
