mod common;

#[test]
fn proposals_match_brute_force() {
    let nonempty = common::check_proposals(600, 11).unwrap();
    assert!(nonempty > 200, "only {nonempty} instances had proposals");
}

#[test]
fn frame_ap_matches_rational_oracle() {
    let defined = common::check_frame_ap(600, 12).unwrap();
    assert!(defined > 500, "only {defined} defined APs");
}

#[test]
fn point_ap_matches_rational_oracle() {
    let nonzero = common::check_point_ap(600, 13).unwrap();
    assert!(nonzero > 500, "only {nonzero} nonzero APs");
}
