use p2px_bench::{feature_maps, random_rays, room};

#[test]
fn fixtures_are_deterministic() {
    assert_eq!(random_rays(4, 8, 7), random_rays(4, 8, 7));
    assert_eq!(feature_maps(3, 5, 4, 1).maps, feature_maps(3, 5, 4, 1).maps);
}

#[test]
fn room_fixture_has_cloud_and_cameras() {
    let (cloud, cams) = room();
    assert!(!cloud.is_empty());
    assert_eq!(cams.len(), 4);
}
