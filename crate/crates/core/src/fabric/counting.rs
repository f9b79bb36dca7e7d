//! Per-rank send charges of the collective algorithms.
//!
//! Each function returns `(messages, words)` sent by the member at group
//! position `pos`. Payload sizes are already in words.

/// Ring allgather(v): `g-1` steps; at each step a rank forwards one block.
/// Over the whole ring a rank forwards every block except the one owned by
/// its successor, so the group total is `(g-1)·Σ sizes`.
pub fn ring_allgather(sizes: &[usize], pos: usize) -> (usize, usize) {
    let g = sizes.len();
    if g <= 1 {
        return (0, 0);
    }
    let total: usize = sizes.iter().sum();
    (g - 1, total - sizes[(pos + 1) % g])
}

/// Number of children of group position `pos` in a binomial tree of `g`
/// nodes rooted at `root`.
pub fn binomial_children(g: usize, root: usize, pos: usize) -> usize {
    let rel = (pos + g - root) % g;
    let limit = if rel == 0 {
        usize::MAX
    } else {
        1 << rel.trailing_zeros()
    };
    let mut children = 0;
    let mut mask = 1;
    while mask < limit && rel + mask < g {
        children += 1;
        mask <<= 1;
    }
    children
}

/// Binomial-tree broadcast of `m` words: `g-1` messages in total.
pub fn binomial_broadcast(g: usize, root: usize, pos: usize, m: usize) -> (usize, usize) {
    let c = binomial_children(g, root, pos);
    (c, c * m)
}

/// Flat gather: every non-root sends its payload straight to the root.
pub fn flat_gather(root: usize, pos: usize, local: usize) -> (usize, usize) {
    if pos == root {
        (0, 0)
    } else {
        (1, local)
    }
}

/// Size of block `l` when `m` elements are split into `g` near-equal blocks.
pub fn ring_block(m: usize, g: usize, l: usize) -> usize {
    m / g + usize::from(l < m % g)
}

/// Ring allreduce on `m` elements of `words_per_elem` words: a ring
/// reduce-scatter followed by a ring allgather over `g` near-equal blocks.
/// Each rank sends `2(g-1)` messages; the group total is `2(g-1)·m` elements.
pub fn ring_allreduce(m: usize, words_per_elem: usize, g: usize, pos: usize) -> (usize, usize) {
    if g <= 1 {
        return (0, 0);
    }
    // Reduce-scatter: a rank forwards every block but the one it ends up owning.
    let rs = m - ring_block(m, g, pos);
    // Allgather: a rank forwards every block but its successor's.
    let ag = m - ring_block(m, g, (pos + 1) % g);
    (2 * (g - 1), (rs + ag) * words_per_elem)
}

/// Ring reduce-scatter with equal blocks of `block` words.
pub fn ring_reduce_scatter_block(g: usize, block: usize) -> (usize, usize) {
    (g.saturating_sub(1), g.saturating_sub(1) * block)
}

/// Direct pairwise exchange: one message per destination other than self
/// with a nonempty payload.
pub fn pairwise_alltoallv(dest_sizes: &[usize], pos: usize) -> (usize, usize) {
    dest_sizes
        .iter()
        .enumerate()
        .filter(|&(d, &s)| d != pos && s > 0)
        .fold((0, 0), |(m, w), (_, &s)| (m + 1, w + s))
}
