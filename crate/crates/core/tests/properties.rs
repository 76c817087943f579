mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use regularity_lab::grid::{gradient_magnitude, laplacian_neumann, poisson_neumann, Domain, Field};
use regularity_lab::heat_kernel::kernel_evolve;
use regularity_lab::interp::{
    build_covering, interpolation_measure, radius_function, random_case, BallCover, InterpOptions,
};
use regularity_lab::rd::{c_table, lower_triangular_inverse};
use regularity_lab::report::{write_rows_csv, CheckRow, EstimateReport};
use regularity_lab::rough::comparison_pair;

use common::{dense_inverse, matmul, unit_box};

/// `Σ c_k Π_i cos(k_i π x_i)` with the mode list cycling through low frequencies.
fn cosine_sum(dom: &Arc<Domain>, coeffs: &[f64]) -> Field {
    Field::from_fn(dom, |x| {
        coeffs
            .iter()
            .enumerate()
            .map(|(k, c)| {
                c * x
                    .iter()
                    .enumerate()
                    .map(|(i, xi)| (((k + i) % 3) as f64 * PI * xi).cos())
                    .product::<f64>()
            })
            .sum()
    })
    .unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Direct `R(x)`: sweep distinct pair distances and solve for the crossing inside each shell.
fn radius_oracle(u: &Field, threshold: f64, p: f64, alpha: f64, r0: f64) -> Vec<f64> {
    let dom = u.domain();
    let e = 3.0 - alpha - dom.dim() as f64 / p;
    let vol = dom.cell_volume();
    let gp: Vec<f64> = gradient_magnitude(u).iter().map(|g| g.powf(p) * vol).collect();
    let need = |r: f64| (threshold / r.powf(e)).powf(p);
    let tol = 1e-9 * dom.h();
    (0..dom.len())
        .map(|s| {
            let mut pairs: Vec<(f64, f64)> = (0..dom.len())
                .map(|t| (dist(dom.point(s), dom.point(t)), gp[t]))
                .filter(|(r, _)| *r <= r0 + tol)
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut acc = 0.0;
            let mut k = 0;
            while k < pairs.len() {
                let r = pairs[k].0;
                while k < pairs.len() && pairs[k].0 <= r + tol {
                    acc += pairs[k].1;
                    k += 1;
                }
                let next = pairs.get(k).map_or(r0, |q| q.0);
                if acc > need(next) {
                    let r = if acc >= need(r) {
                        r
                    } else {
                        (threshold / acc.powf(1.0 / p)).powf(1.0 / e)
                    };
                    return r.min(r0);
                }
            }
            r0
        })
        .collect()
}

fn lower_triangular(m: usize, seed: &[f64]) -> Vec<Vec<f64>> {
    let mut it = seed.iter().cycle();
    (0..m)
        .map(|i| {
            (0..m)
                .map(|j| match j.cmp(&i) {
                    std::cmp::Ordering::Less => *it.next().unwrap() * 4.0 - 2.0,
                    std::cmp::Ordering::Equal => 0.5 + *it.next().unwrap() * 2.0,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inverse_of_lower_triangular(m in 1usize..7, seed in prop::collection::vec(0.0f64..1.0, 21)) {
        let a = lower_triangular(m, &seed);
        let b = lower_triangular_inverse(&a).unwrap();
        for (i, row) in matmul(&b, &a).iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((v - want).abs() < 1e-10, "({i}, {j}): {v}");
            }
        }
    }

    #[test]
    fn c_table_matches_matrix_expansion(
        m in 1usize..7,
        seed in prop::collection::vec(0.0f64..1.0, 21),
        diff in prop::collection::vec(0.05f64..3.0, 6),
    ) {
        let a = lower_triangular(m, &seed);
        let diff = &diff[..m];
        let c = c_table(&a, diff).unwrap();
        // c = A·D·A⁻¹ − D below the diagonal, with an inverse computed independently.
        let dmat: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { diff[i] } else { 0.0 }).collect()).collect();
        let adb = matmul(&matmul(&a, &dmat), &dense_inverse(&a));
        let scale = 1.0 + adb.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
        for i in 0..m {
            for k in 0..m {
                let want = if k < i { adb[i][k] } else { 0.0 };
                prop_assert!((c[i][k] - want).abs() <= 1e-12 * scale, "c[{i}][{k}] = {} vs {want}", c[i][k]);
            }
            prop_assert!((adb[i][i] - diff[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn radius_matches_direct_sweep(
        d in 1usize..3,
        coeffs in prop::collection::vec(-1.0f64..1.0, 4),
        threshold in 0.01f64..2.0,
    ) {
        let dom = unit_box(d, if d == 1 { 40 } else { 12 });
        let u = cosine_sum(&dom, &coeffs);
        let (p, alpha, r0) = (2.0, 0.3, 0.4);
        let fast = radius_function(&u, threshold, p, alpha, r0).unwrap();
        let slow = radius_oracle(&u, threshold, p, alpha, r0);
        for (s, (a, b)) in fast.iter().zip(&slow).enumerate() {
            prop_assert!((a - b).abs() <= 1e-9 * b.max(dom.h()), "slot {s}: {a} vs {b}");
        }
    }

    #[test]
    fn radius_is_monotone_in_threshold(
        coeffs in prop::collection::vec(-1.0f64..1.0, 4),
        threshold in 0.01f64..1.0,
        factor in 1.0f64..10.0,
    ) {
        let dom = unit_box(2, 16);
        let u = cosine_sum(&dom, &coeffs);
        let lo = radius_function(&u, threshold, 2.0, 0.3, 0.4).unwrap();
        let hi = radius_function(&u, threshold * factor, 2.0, 0.3, 0.4).unwrap();
        prop_assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
    }

    #[test]
    fn covering_is_complete_with_audited_overlap(
        d in 1usize..3,
        coeffs in prop::collection::vec(-1.0f64..1.0, 4),
        threshold in 0.01f64..2.0,
    ) {
        let dom = unit_box(d, if d == 1 { 64 } else { 16 });
        let u = cosine_sum(&dom, &coeffs);
        let cover = build_covering(&u, threshold, 2.0, 0.3, 0.4).unwrap();
        prop_assert_eq!(cover.uncovered, 0);
        for s in 0..dom.len() {
            let count = cover
                .balls
                .iter()
                .filter(|b| dist(dom.point(s), &b.center) <= b.radius * (1.0 + 1e-12))
                .count();
            prop_assert!(count >= 1);
            prop_assert_eq!(count as u32, cover.overlap[s]);
        }
        prop_assert!(cover.max_overlap as f64 <= BallCover::default_overlap_bound(d));
        prop_assert_eq!(cover.max_overlap, cover.overlap.iter().cloned().max().unwrap());
    }

    #[test]
    fn poisson_inverts_the_laplacian(d in 1usize..3, coeffs in prop::collection::vec(-1.0f64..1.0, 5)) {
        let dom = unit_box(d, if d == 1 { 64 } else { 24 });
        let raw = cosine_sum(&dom, &coeffs);
        let mean = raw.mean();
        let rhs = raw.map(|v| v - mean);
        let u = poisson_neumann(&rhs).unwrap();
        let lap = laplacian_neumann(&u).unwrap();
        let err = lap.values().iter().zip(rhs.values()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err <= 1e-8 * (1.0 + rhs.sup_abs()), "residual {err:e}");
        prop_assert!(u.mean().abs() <= 1e-10 * (1.0 + u.sup_abs()));
    }

    #[test]
    fn heat_kernel_conserves_mass(d in 1usize..3, source_frac in 0.0f64..1.0) {
        let dom = unit_box(d, if d == 1 { 48 } else { 16 });
        let source = ((dom.len() - 1) as f64 * source_frac) as usize;
        let k = kernel_evolve(&dom, source, 0.05, None).unwrap();
        for i in 0..k.len() {
            prop_assert!((k.mass(i) - 1.0).abs() <= 1e-10);
            prop_assert!(k.frame(i).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn report_json_round_trip_and_csv_rows(rows in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 0..12)) {
        let mut rep = EstimateReport::new("prop");
        for (i, (l, r)) in rows.iter().enumerate() {
            rep.push(CheckRow::le(format!("c{i}"), *l, *r).param("i", i as f64));
        }
        let text = serde_json::to_string(&rep).unwrap();
        let back: EstimateReport = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(&back, &rep);
        let mut buf = Vec::new();
        write_rows_csv(&mut buf, std::slice::from_ref(&rep)).unwrap();
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        prop_assert_eq!(reader.headers().unwrap().len(), 8);
        prop_assert_eq!(reader.records().count(), rows.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn comparison_and_sandwich_hold(seed in 0u64..1_000_000, d in 1usize..3, c0 in 1.0f64..3.0) {
        let dom = unit_box(d, if d == 1 { 32 } else { 12 });
        let rep = comparison_pair(&dom, 1.0, c0, 0.05, seed).unwrap();
        prop_assert_eq!(rep.rows.len(), 3);
        prop_assert!(rep.passed(), "{:?}", rep.failures().collect::<Vec<_>>());
    }

    #[test]
    fn interpolation_ratio_is_scale_invariant(seed in 0u64..1000, lambda_exp in -3i32..4) {
        let dom = unit_box(2, 16);
        let opts = InterpOptions::usage_point(2, 0.3);
        let (u, w) = random_case(&dom, seed).unwrap();
        let base = interpolation_measure(&u, &w, &opts, seed).unwrap();
        let lambda = 10f64.powi(lambda_exp);
        let scaled = interpolation_measure(&u.scaled(lambda), &w.scaled(lambda), &opts, seed).unwrap();
        prop_assert!((scaled.ratio / base.ratio - 1.0).abs() <= 1e-9);
        prop_assert_eq!(scaled.balls, base.balls);
    }
}

#[test]
fn empty_report_writes_header_only() {
    let mut buf = Vec::new();
    write_rows_csv(&mut buf, &[EstimateReport::new("empty")]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("schema,report,check"));
}

/// Greedy selection by decreasing radius, ties by slot, over direct distances.
fn greedy_oracle(dom: &Arc<Domain>, radii: &[f64]) -> usize {
    let mut order: Vec<usize> = (0..dom.len()).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]).then(a.cmp(&b)));
    let mut covered = vec![false; dom.len()];
    let mut balls = 0;
    for s in order {
        if covered[s] {
            continue;
        }
        balls += 1;
        for (t, c) in covered.iter_mut().enumerate() {
            if dist(dom.point(s), dom.point(t)) <= radii[s] * (1.0 + 1e-12) {
                *c = true;
            }
        }
    }
    balls
}

#[test]
fn sharp_bump_cover_matches_direct_greedy() {
    let dom = unit_box(2, 24);
    let u = Field::from_fn(&dom, |x| {
        let r2 = (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2);
        (-r2 / 0.002).exp()
    })
    .unwrap();
    let (threshold, r0) = (0.05, 0.4);
    let cover = build_covering(&u, threshold, 2.0, 0.3, r0).unwrap();
    let oracle = radius_oracle(&u, threshold, 2.0, 0.3, r0);
    assert_eq!(cover.balls.len(), greedy_oracle(&dom, &oracle));
    let near = dom.nearest_slot(&[0.3, 0.6]);
    let far = dom.nearest_slot(&[0.95, 0.05]);
    assert!(cover.radii[near] < r0 && cover.radii[far] == r0);
}

#[test]
fn constant_field_gets_capped_radii() {
    let dom = unit_box(2, 20);
    let u = Field::constant(&dom, 0.7);
    let cover = build_covering(&u, 1.0, 2.0, 0.3, 0.4).unwrap();
    assert!(cover.radii.iter().all(|&r| r == 0.4));
    assert!(cover.balls.iter().all(|b| b.capped));
    assert_eq!(cover.uncovered, 0);
    assert_eq!(cover.balls.len(), greedy_oracle(&dom, &cover.radii));
}
