mod common;

use std::collections::BTreeSet;

use infotamp::geometry::{vec2, Polygon, Shape};
use infotamp::grid::{topology_check, topology_check_grid, Cell, Grid};
use infotamp::map::{Disk, MapSnapshot};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn blocking_sets_match_subset_search_on_random_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x70);
    let (mut feasible, mut unique, mut nonempty) = (0, 0, 0);
    for n in 0..200 {
        let w = common::random_grid_world(&mut rng);
        let report = topology_check_grid(&w.grid, w.start, w.goal);
        let truth = common::minimal_blocking_sets(&w);
        assert_eq!(report.is_feasible, truth.is_some(), "world {n}");
        let Some(sets) = truth else { continue };
        feasible += 1;
        let got: BTreeSet<usize> = report.blocking.iter().copied().collect();
        assert_eq!(got.len(), report.blocking.len());
        assert!(sets.contains(&got), "world {n}: {got:?} not among {sets:?}");
        if sets.len() == 1 && sets[0].len() <= 2 {
            unique += 1;
            nonempty += usize::from(!got.is_empty());
        }
    }
    assert!(
        feasible >= 120 && unique >= 100 && nonempty >= 30,
        "{feasible} feasible, {unique} unique, {nonempty} nonempty"
    );
}

#[test]
fn doorway_object_is_reported_in_world_coordinates() {
    let map = MapSnapshot {
        workspace: Polygon::rectangle(vec2(0.0, 0.0), vec2(4.0, 2.0)),
        obstacles: vec![
            Shape::Polygon(Polygon::rectangle(vec2(1.9, 0.0), vec2(2.1, 0.7))),
            Shape::Polygon(Polygon::rectangle(vec2(1.9, 1.3), vec2(2.1, 2.0))),
        ],
        objects: vec![
            Some(Disk { center: vec2(3.5, 1.5), radius: 0.1 }),
            Some(Disk { center: vec2(2.0, 1.0), radius: 0.15 }),
        ],
    };
    let (report, _) = topology_check(vec2(0.5, 1.0), vec2(3.5, 0.5), 0.2, &map, 0.05).unwrap();
    assert!(report.is_feasible);
    assert_eq!(report.blocking, vec![1]);
    let (clear, _) = topology_check(vec2(0.5, 1.0), vec2(1.0, 0.5), 0.2, &map, 0.05).unwrap();
    assert!(clear.is_feasible && clear.blocking.is_empty());
}

#[test]
fn walled_off_goal_is_infeasible() {
    let mut g = Grid::new(nalgebra::Vector2::zeros(), 1.0, 6, 3, Cell::Free);
    for j in 0..3 {
        g.set((3, j), Cell::Fixed);
    }
    g.set((1, 1), Cell::Object(1));
    let r = topology_check_grid(&g, (0, 0), (5, 2));
    assert!(!r.is_feasible && r.blocking.is_empty());
}
