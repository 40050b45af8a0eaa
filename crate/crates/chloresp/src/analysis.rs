//! Terminal Pareto-front analysis: pick the best individuals, min-max
//! normalize both objectives against that set, flag the non-dominated
//! points, and emit `pareto.csv` plus a `pareto.svg` scatter with the front
//! stroked in red.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nsga2::Individual;
use crate::reward::ObjectiveVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub genome_id: u64,
    pub violation_raw: f64,
    pub cost_raw: f64,
    pub violation_norm: f64,
    pub cost_norm: f64,
    pub on_front: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    pub points: Vec<ParetoPoint>,
    /// (min, max) of the raw violation values used for normalization.
    pub violation_bounds: (f64, f64),
    /// (min, max) of the raw cost values used for normalization.
    pub cost_bounds: (f64, f64),
}

/// First `n` individuals by (rank asc, crowding desc, id asc); everyone if
/// the population is smaller.
pub fn select_top(pop: &[Individual], n: usize) -> Vec<Individual> {
    let mut order = crate::nsga2::selection_order(pop);
    order.truncate(n);
    order.into_iter().map(|i| pop[i].clone()).collect()
}

/// Min-max normalization into [0, 1]; a degenerate range maps to all 0.5.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        values.iter().map(|v| (v - min) / (max - min)).collect()
    } else {
        vec![0.5; values.len()]
    }
}

/// Non-domination mask for minimization: true where no other point
/// dominates. Equal points do not dominate each other, so duplicates stay
/// on the front together.
pub fn pareto_front(points: &[ObjectiveVector]) -> Vec<bool> {
    points
        .iter()
        .map(|a| {
            !points.iter().any(|b| {
                (b.violation <= a.violation && b.cost <= a.cost)
                    && (b.violation < a.violation || b.cost < a.cost)
            })
        })
        .collect()
}

/// Build the terminal report from a ranked population.
pub fn pareto_report(pop: &[Individual], top_n: usize) -> ParetoReport {
    let top = select_top(pop, top_n);
    let violations: Vec<f64> = top.iter().map(|i| i.objectives.violation).collect();
    let costs: Vec<f64> = top.iter().map(|i| i.objectives.cost).collect();
    let violation_norm = normalize(&violations);
    let cost_norm = normalize(&costs);
    let objectives: Vec<ObjectiveVector> = top.iter().map(|i| i.objectives).collect();
    let mask = pareto_front(&objectives);

    let min_max = |xs: &[f64]| {
        (
            xs.iter().copied().fold(f64::INFINITY, f64::min),
            xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };

    ParetoReport {
        points: top
            .iter()
            .enumerate()
            .map(|(i, ind)| ParetoPoint {
                genome_id: ind.genome.id,
                violation_raw: violations[i],
                cost_raw: costs[i],
                violation_norm: violation_norm[i],
                cost_norm: cost_norm[i],
                on_front: mask[i],
            })
            .collect(),
        violation_bounds: min_max(&violations),
        cost_bounds: min_max(&costs),
    }
}

pub const PARETO_CSV_HEADER: &str =
    "genome_id,violation_raw,cost_raw,violation_norm,cost_norm,on_front";

fn pareto_csv(report: &ParetoReport) -> String {
    let mut s = String::from(PARETO_CSV_HEADER);
    s.push('\n');
    for p in &report.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            p.genome_id, p.violation_raw, p.cost_raw, p.violation_norm, p.cost_norm, p.on_front
        );
    }
    s
}

fn pareto_svg(report: &ParetoReport) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const MARGIN: f64 = 50.0;
    let plot_w = W - 2.0 * MARGIN;
    let plot_h = H - 2.0 * MARGIN;
    let x = |cost_norm: f64| MARGIN + cost_norm * plot_w;
    let y = |violation_norm: f64| H - MARGIN - violation_norm * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(
        s,
        r#"  <rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"  <line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN
    );
    let _ = writeln!(
        s,
        r#"  <line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = H - MARGIN
    );
    let _ = writeln!(
        s,
        r#"  <text x="{cx}" y="{cy}" text-anchor="middle" font-size="14">cost (normalized)</text>"#,
        cx = W / 2.0,
        cy = H - 12.0
    );
    let _ = writeln!(
        s,
        r#"  <text x="14" y="{cy}" text-anchor="middle" font-size="14" transform="rotate(-90 14 {cy})">violation (normalized)</text>"#,
        cy = H / 2.0
    );

    // Front polyline in cost-ascending order.
    let mut front: Vec<&ParetoPoint> = report.points.iter().filter(|p| p.on_front).collect();
    front.sort_by(|a, b| a.cost_norm.partial_cmp(&b.cost_norm).unwrap());
    if front.len() > 1 {
        let path: Vec<String> = front
            .iter()
            .map(|p| format!("{:.2},{:.2}", x(p.cost_norm), y(p.violation_norm)))
            .collect();
        let _ = writeln!(
            s,
            r#"  <polyline points="{}" fill="none" stroke="red" stroke-width="1.5"/>"#,
            path.join(" ")
        );
    }

    for p in &report.points {
        let stroke = if p.on_front { "red" } else { "none" };
        let _ = writeln!(
            s,
            r#"  <circle cx="{:.2}" cy="{:.2}" r="4" fill="steelblue" fill-opacity="0.7" stroke="{stroke}" stroke-width="1.5"/>"#,
            x(p.cost_norm),
            y(p.violation_norm)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `pareto.csv` and `pareto.svg` into `out_dir`.
pub fn emit(report: &ParetoReport, out_dir: &Path) -> Result<()> {
    let csv_path = out_dir.join("pareto.csv");
    fs::write(&csv_path, pareto_csv(report)).map_err(|e| Error::io(&csv_path, e))?;
    let svg_path = out_dir.join("pareto.svg");
    fs::write(&svg_path, pareto_svg(report)).map_err(|e| Error::io(&svg_path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neat::Genome;
    use crate::nsga2::{rank_population, ObjectiveSource};
    use proptest::prelude::*;

    fn individual(id: u64, violation: f64, cost: f64) -> Individual {
        Individual::new(
            Genome {
                id,
                nodes: Vec::new(),
                connections: Vec::new(),
            },
            ObjectiveVector { violation, cost },
            ObjectiveSource::Environment,
        )
    }

    fn ranked_population(objs: &[(f64, f64)]) -> Vec<Individual> {
        let mut pop: Vec<Individual> = objs
            .iter()
            .enumerate()
            .map(|(i, (v, c))| individual(i as u64, *v, *c))
            .collect();
        rank_population(&mut pop);
        pop
    }

    #[test]
    fn top_selection_respects_rank_then_crowding() {
        let mut rng_state = 1u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64
        };
        let objs: Vec<(f64, f64)> = (0..100).map(|_| (next(), next() * 100.0)).collect();
        let pop = ranked_population(&objs);
        let top = select_top(&pop, 60);
        assert_eq!(top.len(), 60);
        let worst_selected = top.iter().map(|i| i.rank).max().unwrap();
        let best_unselected = pop
            .iter()
            .filter(|p| !top.iter().any(|t| t.genome.id == p.genome.id))
            .map(|p| p.rank)
            .min()
            .unwrap();
        assert!(worst_selected <= best_unselected);
    }

    #[test]
    fn top_zero_and_overflow() {
        let pop = ranked_population(&[(0.1, 1.0), (0.2, 2.0)]);
        assert!(select_top(&pop, 0).is_empty());
        assert_eq!(select_top(&pop, 10).len(), 2);
    }

    #[test]
    fn normalize_endpoints() {
        assert_eq!(normalize(&[864.0, 3709.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn normalize_interior_hand_value() {
        let out = normalize(&[864.0, 2000.0, 3709.0]);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[2], 1.0);
        assert!((out[1] - 1136.0 / 2845.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_degenerate_maps_to_half() {
        assert_eq!(normalize(&[5.0, 5.0, 5.0]), vec![0.5, 0.5, 0.5]);
    }

    #[test]
    fn front_mask_basics() {
        let o = |v: f64, c: f64| ObjectiveVector { violation: v, cost: c };
        assert_eq!(pareto_front(&[o(1.0, 1.0), o(2.0, 2.0)]), vec![true, false]);
        assert_eq!(
            pareto_front(&[o(1.0, 3.0), o(2.0, 2.0), o(3.0, 1.0)]),
            vec![true, true, true]
        );
        assert_eq!(
            pareto_front(&[o(1.0, 1.0), o(1.0, 1.0)]),
            vec![true, true]
        );
    }

    #[test]
    fn emit_empty_report() {
        let report = ParetoReport {
            points: Vec::new(),
            violation_bounds: (f64::INFINITY, f64::NEG_INFINITY),
            cost_bounds: (f64::INFINITY, f64::NEG_INFINITY),
        };
        let dir = tempfile::tempdir().unwrap();
        emit(&report, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("pareto.csv")).unwrap();
        assert_eq!(csv.trim(), PARETO_CSV_HEADER);
        let svg = fs::read_to_string(dir.path().join("pareto.svg")).unwrap();
        assert!(svg.contains("<svg"));
        assert!(!svg.contains("<circle"));
    }

    #[test]
    fn emit_three_points_and_round_trip() {
        let pop = ranked_population(&[(0.1, 9.0), (0.5, 5.0), (0.9, 1.0)]);
        let report = pareto_report(&pop, 3);
        let dir = tempfile::tempdir().unwrap();
        emit(&report, dir.path()).unwrap();

        let svg = fs::read_to_string(dir.path().join("pareto.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);

        let csv = fs::read_to_string(dir.path().join("pareto.csv")).unwrap();
        let lines: Vec<&str> = csv.trim().lines().collect();
        assert_eq!(lines.len(), 4);
        for (line, point) in lines[1..].iter().zip(report.points.iter()) {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[0].parse::<u64>().unwrap(), point.genome_id);
            assert!((cols[1].parse::<f64>().unwrap() - point.violation_raw).abs() < 1e-9);
            assert!((cols[2].parse::<f64>().unwrap() - point.cost_raw).abs() < 1e-9);
            assert!((cols[3].parse::<f64>().unwrap() - point.violation_norm).abs() < 1e-9);
            assert!((cols[4].parse::<f64>().unwrap() - point.cost_norm).abs() < 1e-9);
            assert_eq!(cols[5].parse::<bool>().unwrap(), point.on_front);
        }
    }

    #[test]
    fn front_is_a_staircase_in_cost_order() {
        let mut rng_state = 99u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64
        };
        for _ in 0..20 {
            let objs: Vec<(f64, f64)> = (0..50).map(|_| (next(), next() * 100.0)).collect();
            let pop = ranked_population(&objs);
            let report = pareto_report(&pop, 50);
            let mut front: Vec<&ParetoPoint> =
                report.points.iter().filter(|p| p.on_front).collect();
            front.sort_by(|a, b| a.cost_raw.partial_cmp(&b.cost_raw).unwrap());
            for pair in front.windows(2) {
                if pair[0].cost_raw != pair[1].cost_raw {
                    assert!(
                        pair[0].violation_raw > pair[1].violation_raw,
                        "front is not strictly decreasing in violation"
                    );
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mask_matches_brute_force_oracle(
            objs in prop::collection::vec((0.0f64..1.0, 0.0f64..100.0), 1..200),
        ) {
            let points: Vec<ObjectiveVector> = objs
                .iter()
                .map(|(v, c)| ObjectiveVector { violation: *v, cost: *c })
                .collect();
            let mask = pareto_front(&points);
            for (i, a) in points.iter().enumerate() {
                let mut dominated = false;
                for (j, b) in points.iter().enumerate() {
                    if i == j {
                        continue;
                    }
                    let weakly = b.violation <= a.violation && b.cost <= a.cost;
                    let strictly = b.violation < a.violation || b.cost < a.cost;
                    if weakly && strictly {
                        dominated = true;
                        break;
                    }
                }
                prop_assert_eq!(mask[i], !dominated);
            }
        }

        #[test]
        fn normalize_is_idempotent_and_mask_invariant(
            objs in prop::collection::vec((0.0f64..1.0, 0.0f64..100.0), 2..60),
        ) {
            let violations: Vec<f64> = objs.iter().map(|o| o.0).collect();
            let normalized = normalize(&violations);
            let twice = normalize(&normalized);
            let spread = violations.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                > violations.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread {
                for (a, b) in normalized.iter().zip(twice.iter()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }

            let raw: Vec<ObjectiveVector> = objs
                .iter()
                .map(|(v, c)| ObjectiveVector { violation: *v, cost: *c })
                .collect();
            let costs: Vec<f64> = objs.iter().map(|o| o.1).collect();
            let nv = normalize(&violations);
            let nc = normalize(&costs);
            let scaled: Vec<ObjectiveVector> = nv
                .iter()
                .zip(nc.iter())
                .map(|(v, c)| ObjectiveVector { violation: *v, cost: *c })
                .collect();
            prop_assert_eq!(pareto_front(&raw), pareto_front(&scaled));
        }
    }
}
