mod support;

use std::collections::BTreeSet;

use previz_core::retrieval::{compile_query, Embedder, RetrievalError};
use previz_core::screenplay::parse_script;
use previz_core::{Catalog, CurationRules, HashedBagOfWords, SceneQuery, ScoreWeights, Script, ShotGroup, TimeOfDay};
use previz_core::retrieval::Retriever;
use proptest::prelude::*;
use support::*;

fn study() -> Script {
    parse_script(STUDY_SCRIPT).unwrap()
}

fn ranking(groups: &[ShotGroup]) -> Vec<String> {
    groups.iter().map(|g| g.group_id.clone()).collect()
}

fn all_groups(r: &Retriever, catalog: &Catalog, q: &SceneQuery) -> Vec<ShotGroup> {
    match r.match_groups(&study(), q, catalog, usize::MAX) {
        Ok(g) => g,
        Err(RetrievalError::NoMatch) => Vec::new(),
        Err(e) => panic!("{e}"),
    }
}

fn instance(seed: u64) -> (Catalog, SceneQuery) {
    let mut rng = rng(seed);
    let n = (seed % 100) as usize + 1;
    let records = random_records(&mut rng, n, 8, 3);
    let (catalog, _) = Catalog::ingest_str(&to_jsonl(&records), &CurationRules::permissive()).unwrap();
    let query = compile_query(&study(), &random_query(&mut rng), 6).unwrap();
    (catalog, query)
}

#[test]
fn embedder_ordering_matches_oracle() {
    let e = HashedBagOfWords::default();
    let cos = |a: &str, b: &str| e.embed(a).unwrap().cosine(&e.embed(b).unwrap());
    let near = cos("beach sunset", "beach dusk");
    let far = cos("beach sunset", "office noon");
    assert!((near - oracle_cosine("beach sunset", "beach dusk")).abs() < 1e-12);
    assert!((far - oracle_cosine("beach sunset", "office noon")).abs() < 1e-12);
    assert!(near > far, "{near} <= {far}");
}

#[test]
fn study_fixture_yields_one_seven_frame_group() {
    let (catalog, _) = Catalog::ingest_str(BEACH_CATALOG, &CurationRules::default()).unwrap();
    let input: SceneQuery = serde_json::from_str(STUDY_QUERY).unwrap();
    let query = compile_query(&study(), &input, 6).unwrap();
    let groups = Retriever::with_test_embedder(ScoreWeights::default())
        .unwrap()
        .match_groups(&study(), &query, &catalog, 5)
        .unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].frames().count(), 7);
    assert!(groups[0].frames().all(|s| s.record.scene_key() == groups[0].scene_key));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ranking_equals_brute_force(seed in any::<u64>()) {
        let (catalog, query) = instance(seed);
        let w = ScoreWeights::default();
        let got = all_groups(&Retriever::with_test_embedder(w).unwrap(), &catalog, &query);
        let records: Vec<_> = catalog.records().collect();
        let want = oracle_ranking(&records, &query, w);
        prop_assert_eq!(ranking(&got), want.iter().map(|(id, _)| id.clone()).collect::<Vec<_>>());
        for (g, (_, score)) in got.iter().zip(&want) {
            prop_assert!((g.mean_score - score).abs() < 1e-9);
        }
    }

    #[test]
    fn groups_are_coherent_and_aligned(seed in any::<u64>()) {
        let (catalog, query) = instance(seed);
        for g in all_groups(&Retriever::with_test_embedder(ScoreWeights::default()).unwrap(), &catalog, &query) {
            prop_assert_eq!(g.dialogue_frames.len(), 6);
            prop_assert!(g.frames().all(|s| s.record.scene_key() == g.scene_key && query.fixed.admits(&s.record)));
        }
    }

    #[test]
    fn variable_changes_only_reorder(seed in any::<u64>(), other in any::<u64>()) {
        let (catalog, query) = instance(seed);
        let mut changed = query.clone();
        changed.variable = random_query(&mut rng(other)).variable;
        for key in ["location_tag", "time_of_day"] {
            // keep the variable side disjoint from the fixed side
            match key {
                "location_tag" if changed.fixed.location_tag.is_some() => changed.variable.location_tag = None,
                "time_of_day" if changed.fixed.time_of_day.is_some() => changed.variable.time_of_day = None,
                _ => {}
            }
        }
        let r = Retriever::with_test_embedder(ScoreWeights::default()).unwrap();
        let a: BTreeSet<String> = ranking(&all_groups(&r, &catalog, &query)).into_iter().collect();
        let b: BTreeSet<String> = ranking(&all_groups(&r, &catalog, &changed)).into_iter().collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fixed_constraint_only_shrinks(seed in any::<u64>(), time in 0usize..3) {
        let (catalog, mut query) = instance(seed);
        query.fixed.time_of_day = None;
        query.variable.time_of_day = None;
        let r = Retriever::with_test_embedder(ScoreWeights::default()).unwrap();
        let loose: BTreeSet<String> = ranking(&all_groups(&r, &catalog, &query)).into_iter().collect();
        query.fixed.time_of_day = Some([TimeOfDay::Noon, TimeOfDay::Night, TimeOfDay::SunriseSunset][time]);
        let tight: BTreeSet<String> = ranking(&all_groups(&r, &catalog, &query)).into_iter().collect();
        prop_assert!(tight.is_subset(&loose));
    }

    #[test]
    fn ranking_is_scale_invariant(seed in any::<u64>(), exp in -8i32..8) {
        let (catalog, query) = instance(seed);
        let w = ScoreWeights::default();
        let c = 2f64.powi(exp);
        let base = all_groups(&Retriever::with_test_embedder(w).unwrap(), &catalog, &query);
        let scaled = all_groups(&Retriever::with_test_embedder(w.scaled(c)).unwrap(), &catalog, &query);
        prop_assert_eq!(ranking(&base), ranking(&scaled));
    }

    #[test]
    fn output_is_deterministic(seed in any::<u64>(), k in 1usize..5) {
        let (catalog, query) = instance(seed);
        let r = Retriever::with_test_embedder(ScoreWeights::default()).unwrap();
        let a = r.match_groups(&study(), &query, &catalog, k).map(|g| serde_json::to_string(&g).unwrap());
        let b = r.match_groups(&study(), &query, &catalog, k).map(|g| serde_json::to_string(&g).unwrap());
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }
}
