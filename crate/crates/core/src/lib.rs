//! A virtual-switch data plane (extract, match, action) with modeled
//! versions of three Open vSwitch packet-parsing vulnerabilities, plus the
//! tooling around them: attack frame crafting, a differential fuzz harness,
//! a worm propagation timeline and a slow/fast path benchmark.

pub mod extract;
pub mod packet;
pub mod flowtable;
pub mod attacks;
pub mod wormsim;
pub mod bench;
pub mod cli;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/packets.md")]
    mod packets {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/flow-caching.md")]
    mod flow_caching {}
    #[doc = include_str!("../../../book/src/attacks.md")]
    mod attacks {}
    #[doc = include_str!("../../../book/src/worm.md")]
    mod worm {}
    #[doc = include_str!("../../../book/src/bench.md")]
    mod bench {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
