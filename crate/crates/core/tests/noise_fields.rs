use noisefield_core::noise::{BoundaryMode, FieldSampler, NoiseSpec, SeedBundle, TemporalMode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn samples_stay_in_range(
        frequency in 0.001f64..0.2,
        octaves in 1u32..7,
        persistence in 0.2f64..0.8,
        lacunarity in 1.5f64..2.5,
        seed in any::<u64>(),
        x in -1e4f64..1e4,
        y in -1e4f64..1e4,
    ) {
        let spec = NoiseSpec::new(frequency, octaves, persistence, lacunarity).with_seed(seed);
        let f = FieldSampler::stationary(spec, BoundaryMode::Unbounded).unwrap();
        let v = f.sample(x, y);
        prop_assert!((-1.0..=1.0).contains(&v), "{v}");
        let u = f.sample_unit(x, y);
        prop_assert!((0.0..=1.0).contains(&u), "{u}");
    }

    #[test]
    fn toroidal_fields_wrap(x in 0.0f64..200.0, y in 0.0f64..200.0, seed in any::<u64>()) {
        let spec = NoiseSpec::new(0.02, 4, 0.5, 2.0).with_seed(seed);
        let f = FieldSampler::stationary(spec, BoundaryMode::Toroidal { period: 200.0 }).unwrap();
        // Equal up to the rounding of the wrapped coordinate.
        prop_assert!((f.sample(x, y) - f.sample(x + 200.0, y - 200.0)).abs() < 1e-9);
    }
}

#[test]
fn advancing_is_reproducible() {
    let spec = NoiseSpec::new(0.03, 4, 0.5, 2.0).with_seed(5);
    let mk = || FieldSampler::new(spec.clone(), TemporalMode::Drift { velocity: 0.01 }, BoundaryMode::Unbounded).unwrap();
    let (mut a, mut b) = (mk(), mk());
    a.advance(37);
    for _ in 0..37 {
        b.advance(1);
    }
    assert_eq!(a.sample(12.5, -3.0), b.sample(12.5, -3.0));
    assert_ne!(a.sample(12.5, -3.0), mk().sample(12.5, -3.0));
}

#[test]
fn substreams_are_isolated() {
    let base = SeedBundle::new(11);
    let moved = base.clone().with_override("crowd.heading", 99);
    assert_eq!(moved.substream("crowd.heading"), 99);
    for tag in ["crowd.speed", "crowd.init", "spawn.policy", "world.place"] {
        assert_eq!(base.substream(tag), moved.substream(tag), "{tag}");
    }
    assert_ne!(base.substream("crowd.heading"), base.substream("crowd.speed"));
    assert_ne!(SeedBundle::new(12).substream("crowd.heading"), base.substream("crowd.heading"));
}
