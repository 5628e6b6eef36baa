mod support;

use previz_core::prompting::MenuSchema;
use previz_core::session::{create_session, export_manifest, import_manifest, FixedClock, RenderContext};
use previz_core::store::DirStore;
use previz_core::{FrameId, MemoryStore, MockBackend, Resolution, Session};
use proptest::prelude::*;
use rand::Rng;
use support::*;

const SMALL: Resolution = Resolution { width: 40, height: 24 };

fn fresh(seed: u64) -> Session {
    let schema = MenuSchema::shipped();
    create_session("fuzz", study_script(), study_group(), study_settings(&schema), seed, &FixedClock(0)).unwrap()
}

fn line_indices(s: &Session) -> Vec<i64> {
    s.frames.iter().map(|f| f.line_index).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reshot_sequences_isolate_unpinned_frames(seed in any::<u64>(), steps in 1usize..6) {
        let schema = MenuSchema::shipped();
        let store = MemoryStore::new();
        let ctx = RenderContext { backend: &MockBackend, store: &store, schema: &schema, resolution: SMALL, clock: &FixedClock(1) };
        let mut s = fresh(seed);
        s.render_all(&ctx, false);
        let mut rng = rng(seed);
        let mut expected = vec![1usize; s.frames.len()];

        for _ in 0..steps {
            let pins: Vec<FrameId> = (0..7).filter(|_| rng.random_bool(0.4)).map(FrameId).collect();
            let unpins: Vec<FrameId> = (0..7).filter(|_| rng.random_bool(0.3)).map(FrameId).collect();
            s.pin(&pins).unwrap();
            s.unpin(&unpins).unwrap();
            let before = s.clone();
            let settings = random_spec(&mut rng, &schema);
            match s.reshot(settings, &ctx, rng.random_bool(0.3)) {
                Ok(report) => prop_assert!(report.is_complete()),
                Err(_) => {
                    prop_assert!(before.pinned().is_empty());
                    prop_assert_eq!(&s, &before);
                    continue;
                }
            }
            for (i, (now, old)) in s.frames.iter().zip(&before.frames).enumerate() {
                if old.pinned {
                    expected[i] += 1;
                    prop_assert_eq!(&now.revisions[..old.revisions.len()], &old.revisions[..]);
                } else {
                    prop_assert_eq!(now, old);
                }
            }
        }
        for (f, n) in s.frames.iter().zip(&expected) {
            let numbers: Vec<u32> = f.revisions.iter().map(|r| r.revision_no).collect();
            prop_assert_eq!(numbers, (1..=*n as u32).collect::<Vec<_>>());
        }
        prop_assert_eq!(line_indices(&s), (-1..6).collect::<Vec<_>>());
        prop_assert!(s.check_invariants().is_ok());
    }

    #[test]
    fn manifest_round_trips_through_a_directory(seed in any::<u64>(), reshots in 0usize..3) {
        let dir = tempfile::tempdir().unwrap();
        let store = DirStore::open(dir.path()).unwrap();
        let schema = MenuSchema::shipped();
        let ctx = RenderContext { backend: &MockBackend, store: &store, schema: &schema, resolution: SMALL, clock: &FixedClock(3) };
        let mut s = fresh(seed);
        s.render_all(&ctx, false);
        s.pin(&[FrameId(2)]).unwrap();
        let mut rng = rng(seed);
        for _ in 0..reshots {
            s.reshot(random_spec(&mut rng, &schema), &ctx, false).unwrap();
        }
        let bytes = export_manifest(&s).unwrap().to_json();
        std::fs::write(dir.path().join("manifest.json"), &bytes).unwrap();

        let reopened = DirStore::open(dir.path()).unwrap();
        let back = import_manifest(&std::fs::read(dir.path().join("manifest.json")).unwrap(), &reopened).unwrap();
        prop_assert_eq!(&back, &s);
        let json: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        prop_assert_eq!(json["frames"][2]["revisions"].as_array().unwrap().len(), 1 + reshots);
        prop_assert_eq!(export_manifest(&back).unwrap().to_json(), bytes);
    }
}

#[test]
fn missing_image_file_is_an_integrity_error() {
    let dir = tempfile::tempdir().unwrap();
    let store = DirStore::open(dir.path()).unwrap();
    let schema = MenuSchema::shipped();
    let ctx = RenderContext { backend: &MockBackend, store: &store, schema: &schema, resolution: SMALL, clock: &FixedClock(3) };
    let mut s = fresh(9);
    s.render_all(&ctx, false);
    let bytes = export_manifest(&s).unwrap().to_json();
    std::fs::remove_file(store.path_for(&s.frames[0].revisions[0].result.image)).unwrap();
    assert!(matches!(import_manifest(&bytes, &store), Err(previz_core::session::SessionError::Integrity(_))));
}
