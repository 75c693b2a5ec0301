//! Builders for the synthetic, PC-configuration and trip-planning domains.

mod pc;
mod synthetic;
mod trip;

use alloc::vec::Vec;

use rand::Rng;

pub use pc::{build_pc, HornRule, Part, PartAttribute, PcInstance};
pub use synthetic::build_synthetic;
pub use trip::{build_trip, City, TripInstance, TripVariant};

use crate::domain::{Context, DomainSpec};

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
fn unrank_subset(n: usize, k: usize, mut rank: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    for remaining in (1..=k).rev() {
        loop {
            let c = binomial(n - next - 1, remaining - 1);
            if rank < c {
                out.push(next);
                next += 1;
                break;
            }
            rank -= c;
            next += 1;
        }
    }
    out
}

/// Draws a context uniformly from the domain's context pool: every subset
/// (of any allowed size) of the listed boolean attributes is equally
/// likely. Domains without a pool always get the empty context.
pub fn sample_context<R: Rng + ?Sized>(domain: &DomainSpec, rng: &mut R) -> Context {
    let Some(pool) = domain.context_pool() else {
        return Context::empty();
    };
    let n = pool.required_true.len();
    let counts: Vec<usize> = pool.sizes.iter().map(|&s| binomial(n, s)).collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Context::empty();
    }
    let mut r = rng.random_range(0..total);
    for (&size, &count) in pool.sizes.iter().zip(&counts) {
        if r < count {
            let idx = unrank_subset(n, size, r);
            return Context::require_true(idx.into_iter().map(|i| pool.required_true[i].clone()));
        }
        r -= count;
    }
    Context::empty()
}
