use attrlabel_core::model::{AgentKind, BoundingBox, CanonicalAgent};
use attrlabel_service::{propose_groups, GroupParams};
use proptest::prelude::*;

fn agents() -> impl Strategy<Value = Vec<CanonicalAgent>> {
    prop::collection::vec((0.0..1800.0f64, 0.0..900.0f64, 10.0..120.0f64, 20.0..180.0f64), 0..12).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (x, y, w, h))| {
                CanonicalAgent::new(i as u32, format!("u{i}"), "ped", BoundingBox::new(x, y, x + w, y + h))
                    .with_kind(AgentKind::Person)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn proposal_ignores_input_order(agents in agents(), seed in any::<u64>()) {
        let refs: Vec<&CanonicalAgent> = agents.iter().collect();
        let mut shuffled = refs.clone();
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let p = GroupParams::default();
        prop_assert_eq!(propose_groups("i", &refs, p), propose_groups("i", &shuffled, p));
    }

    #[test]
    fn proposal_is_a_partition_of_linked_components(agents in agents()) {
        let refs: Vec<&CanonicalAgent> = agents.iter().collect();
        let p = GroupParams::default();
        let g = propose_groups("i", &refs, p);
        let mut seen = std::collections::BTreeSet::new();
        for group in &g.groups {
            prop_assert!(group.members.len() >= 2);
            prop_assert!(group.members.windows(2).all(|w| w[0] < w[1]));
            for m in &group.members {
                prop_assert!(seen.insert(*m));
                // Each member links to some other member of its group.
                let a = &agents[*m as usize];
                prop_assert!(group.members.iter().any(|o| o != m
                    && attrlabel_service::groups::linked(&a.bbox, &agents[*o as usize].bbox, &p)));
            }
        }
        // Linked pairs always share a group.
        for i in 0..agents.len() {
            for j in i + 1..agents.len() {
                if attrlabel_service::groups::linked(&agents[i].bbox, &agents[j].bbox, &p) {
                    let gi = g.groups.iter().position(|x| x.members.contains(&(i as u32)));
                    prop_assert!(gi.is_some());
                    prop_assert_eq!(gi, g.groups.iter().position(|x| x.members.contains(&(j as u32))));
                }
            }
        }
    }
}
