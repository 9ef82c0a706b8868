//! Seed derivation.
//!
//! Every random stream in the system is derived from one master seed through a
//! stable hash, so runs are reproducible across platforms, worker counts, and
//! process restarts. `std`'s hashers are deliberately avoided (SipHash keys are
//! not stable across std versions); FNV-1a is fixed forever.

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for a named pipeline stage (`train`, `generate`, ...).
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    master ^ fnv1a(stage.as_bytes())
}

/// Seed for one (template, route, generator) work item within a stage.
pub fn task_seed(stage: u64, template_id: u8, route_id: u8, generator: &str) -> u64 {
    let mut key = Vec::with_capacity(generator.len() + 8);
    key.extend_from_slice(&[template_id, route_id]);
    key.extend_from_slice(generator.as_bytes());
    stage ^ fnv1a(&key)
}

/// Seed for the `index`-th independent sub-stream of a task (one rollout, one
/// objective evaluation, one training episode, ...). Indexed derivation keeps
/// parallel execution order-independent: stream `i` is the same no matter which
/// worker runs it.
pub fn stream_seed(task: u64, index: u64) -> u64 {
    task ^ fnv1a(&index.to_le_bytes()).rotate_left(17)
}
