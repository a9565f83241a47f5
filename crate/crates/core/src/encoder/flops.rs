use super::config::{Component, EncoderConfig};

/// `2·m·n·k` for an (m×k)·(k×n) product.
pub fn dense_flops(m: u64, n: u64, k: u64) -> u64 {
    2 * m * n * k
}

/// Dense-product FLOPs of one forward pass over `seq_len` tokens, times the pass count.
///
/// Embedding lookups, norms and softmax are not counted; attention counts the
/// four projections plus the score and mixing products.
pub fn flops_estimate(cfg: &EncoderConfig, seq_len: usize) -> u64 {
    let t = seq_len as u64;
    let d = cfg.d_model as u64;
    let mut per_pass = 0;
    if cfg.has(Component::Attn) {
        per_pass += 4 * dense_flops(t, d, d);
        // scores: per head t×hd by hd×t, summed over heads
        per_pass += dense_flops(t, t, d);
        // mixing: per head t×t by t×hd
        per_pass += dense_flops(t, d, t);
    }
    if cfg.has(Component::Mlp) {
        let h = cfg.mlp_hidden as u64;
        per_pass += dense_flops(t, h, d) + dense_flops(t, d, h);
    }
    per_pass * cfg.passes(seq_len) as u64
}
