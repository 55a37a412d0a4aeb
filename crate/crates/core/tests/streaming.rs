mod common;

#[global_allocator]
static ALLOC: common::CountingAlloc = common::CountingAlloc;

#[test]
fn suffix_mutations_leave_prefix_untouched() {
    let compared = common::check_causality(200, 21).unwrap();
    assert!(compared > 200);
}

#[test]
fn million_frames_in_constant_memory() {
    let before = common::live_bytes();
    let probe = vec![0u8; 4096];
    assert_eq!(
        common::live_bytes() - before,
        4096,
        "allocator is not counting"
    );
    drop(probe);
    let (growth, max_ring, bound) = common::stream_memory(1_000_000).unwrap();
    assert_eq!(growth, 0, "live heap grew by {growth} bytes");
    assert!(max_ring <= bound, "ring reached {max_ring}, bound {bound}");
}
