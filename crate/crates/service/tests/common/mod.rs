#![allow(dead_code)]

use std::path::Path;

use attrlabel_core::allocation::{build_plan, filter_by_area, AllocationPlan, FilterConfig, Fraction, PlanRequest};
use attrlabel_core::model::{
    AgentKind, BoundingBox, CanonicalAgent, CanonicalImage, ImageMeta, Resolution, SequenceInfo, Split,
};
use attrlabel_service::{install_dataset, Service, ServiceConfig};

pub fn image(id: &str, agents: Vec<CanonicalAgent>) -> CanonicalImage {
    let mut img = CanonicalImage::new(ImageMeta {
        image_id: id.into(),
        source_dataset: "t".into(),
        split: Split::Train,
        file_path: format!("images/{id}.png"),
        resolution: Resolution::new(1920, 1080),
        annotator_id: None,
        discard_flag: false,
        unresolved_path: false,
        sequence: None,
    });
    img.agents = agents;
    img
}

pub fn person(id: u32, uuid: &str, x: f64) -> CanonicalAgent {
    CanonicalAgent::new(id, uuid, "pedestrian", BoundingBox::new(x, 100.0, x + 60.0, 250.0)).with_kind(AgentKind::Person)
}

pub fn vehicle(id: u32, uuid: &str, x: f64) -> CanonicalAgent {
    CanonicalAgent::new(id, uuid, "car", BoundingBox::new(x, 500.0, x + 200.0, 600.0)).with_kind(AgentKind::Vehicle)
}

/// Plan over `images` with the given inter pool; everything else is
/// exclusive in the order given.
pub fn plan_with_pools(images: &[CanonicalImage], annotators: usize, inter: &[&str]) -> AllocationPlan {
    let filter = FilterConfig::default();
    let index = filter_by_area("t", images, &filter);
    let goal = index.total_agents();
    let mut plan = build_plan(&index, filter, &PlanRequest::numbered(goal, annotators, Fraction::new(1, goal.max(2)), 1)).unwrap();
    let entries: Vec<_> = plan.inter_pool.drain(..).chain(plan.exclusive_pool.drain(..)).collect();
    for img in images {
        let e = entries.iter().find(|e| e.image_id == img.image_id()).cloned();
        if let Some(e) = e {
            if inter.contains(&img.image_id()) {
                plan.inter_pool.push(e);
            } else {
                plan.exclusive_pool.push(e);
            }
        }
    }
    plan.quota = plan.inter_pool_agents();
    plan
}

pub fn open(root: &Path, plan: &AllocationPlan, images: &[CanonicalImage]) -> Service {
    install_dataset(root, plan, images).unwrap();
    Service::open(ServiceConfig {
        data_root: root.to_path_buf(),
        sync_journal: false,
        ..ServiceConfig::default()
    })
    .unwrap()
}

/// One inter image with a person and a car, then a 12-frame sequence of one
/// person, all exclusive.
pub fn sequence_dataset() -> Vec<CanonicalImage> {
    let mut images = vec![image("a_inter", vec![person(0, "p0", 100.0), vehicle(1, "v0", 800.0)])];
    for f in 0..12u32 {
        let mut img = image(&format!("s_{f:02}"), vec![person(0, "walker", 300.0 + f as f64)]);
        img.image_meta.sequence = Some(SequenceInfo {
            sequence_id: "seq".into(),
            frame_index: f,
            key_frame: f == 0,
        });
        images.push(img);
    }
    images
}
