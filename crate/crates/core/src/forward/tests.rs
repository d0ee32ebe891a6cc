use super::*;
use crate::assembly::{BoundaryConditions, Condition, FractureStorage, ModelCoefficients, Sources, Wall};
use crate::geometry::{build_geometry, generate_mesh, CaseSpec, Rect};
use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mesh_for(spec: CaseSpec, h: f64) -> TriangularMesh {
    generate_mesh(&build_geometry(&spec).unwrap(), h).unwrap()
}

fn case1(h: f64) -> TriangularMesh {
    mesh_for(CaseSpec::Single { domain: Rect::new(0.0, 2.0, 0.0, 1.0), x: 1.0, width: 1e-3 }, h)
}

fn cross(h: f64) -> TriangularMesh {
    mesh_for(CaseSpec::Intersecting { domain: Rect::new(0.0, 1.0, 0.0, 1.0), x: 0.5, y: 0.5, widths: [1e-3, 6e-4] }, h)
}

fn case1_bc() -> BoundaryConditions {
    BoundaryConditions::sealed()
        .with_patch(Wall::Left, 0.0, 0.2, Condition::Pressure(0.0))
        .with_patch(Wall::Right, 0.0, 0.2, Condition::Pressure(1.0))
        .with_fracture_end(0, SegmentEnd::Start, Condition::Pressure(1.0))
        .with_fracture_end(0, SegmentEnd::End, Condition::Pressure(0.0))
}

/// Horizontal fracture ends at `a`, vertical ends at `b`, sealed walls.
fn cross_bc(a: f64, b: f64) -> BoundaryConditions {
    BoundaryConditions::sealed()
        .with_fracture_end(0, SegmentEnd::Start, Condition::Pressure(a))
        .with_fracture_end(0, SegmentEnd::End, Condition::Pressure(a))
        .with_fracture_end(1, SegmentEnd::Start, Condition::Pressure(b))
        .with_fracture_end(1, SegmentEnd::End, Condition::Pressure(b))
}

fn system(mesh: &TriangularMesh, coeffs: &ModelCoefficients, bc: &BoundaryConditions) -> Arc<SystemMatrices> {
    let mats = SystemMatrices::assemble(mesh, coeffs, bc).unwrap();
    Arc::new(constrain_all_intersections(&mats, mesh).unwrap())
}

fn random_state(layout: &DofLayout, seed: u64) -> DiscreteState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DiscreteState { step: 0, values: (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect() }
}

fn dense(m: &CscMatrix) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(m.n_rows, m.n_cols, |i, j| d[i][j])
}

#[test]
fn toy_system_dimensions() {
    let mesh = case1(1.0);
    let mats = system(&mesh, &ModelCoefficients::uniform(2), &case1_bc());
    let sys = BlockSystem::new(mats.clone(), 0.1, &[1e-3]).unwrap();
    let l = sys.lambda_matrix().unwrap();
    let n_flux = mesh.edges.len() + mesh.fracture_nodes.len();
    let n_pressure = mesh.triangles.len() + mesh.fracture_edges.len();
    assert_eq!(mesh.triangles.len(), 4);
    assert_eq!((l.n_rows, l.n_cols), (n_flux + n_pressure, n_flux + n_pressure));
}

#[test]
fn widths_only_change_fracture_blocks() {
    let mesh = case1(0.25);
    let mut coeffs = ModelCoefficients::uniform(2);
    coeffs.fracture_storage = FractureStorage::Fixed(1e-3);
    for (storage, scaled) in [(FractureStorage::Fixed(1e-3), false), (FractureStorage::Scaled { porosity: 1.0 }, true)]
    {
        coeffs.fracture_storage = storage;
        let mats = system(&mesh, &coeffs, &case1_bc());
        let l1 = BlockSystem::new(mats.clone(), 0.1, &[1e-3]).unwrap().lambda_matrix().unwrap();
        let l2 = BlockSystem::new(mats.clone(), 0.1, &[3e-3]).unwrap().lambda_matrix().unwrap();
        assert!(l1.same_pattern(&l2));
        let layout = mats.layout;
        let frac_flux = layout.n_flux..layout.n_u();
        let frac_press = layout.fracture_pressure(0)..layout.multiplier(0);
        for j in 0..l1.n_cols {
            for ((i, a), (_, b)) in l1.column(j).zip(l2.column(j)) {
                if a != b {
                    let in_flux = frac_flux.contains(&i) && frac_flux.contains(&j);
                    let in_storage = scaled && i == j && frac_press.contains(&i);
                    assert!(in_flux || in_storage, "entry ({i}, {j}) changed");
                }
            }
        }
    }
}

#[test]
fn condition_number_grows_as_width_shrinks() {
    let mesh = mesh_for(CaseSpec::Single { domain: Rect::new(0.0, 1.0, 0.0, 1.0), x: 0.5, width: 1e-2 }, 0.1);
    let mut coeffs = ModelCoefficients::uniform(2);
    coeffs.fracture_conductivity = 1.0;
    let mats = system(&mesh, &coeffs, &BoundaryConditions::homogeneous());
    let mut conds = Vec::new();
    for d in [1e-2, 1e-3, 1e-4] {
        let l = BlockSystem::new(mats.clone(), 0.1, &[d]).unwrap().lambda_matrix().unwrap();
        let sv = dense(&l).singular_values();
        let (max, min) = (sv.max(), sv.min());
        conds.push(max / min);
    }
    assert!(conds[0] < conds[1] && conds[1] < conds[2], "{conds:?}");
}

#[test]
fn zero_data_keeps_zero_state() {
    let mesh = case1(0.1);
    let mats = system(&mesh, &ModelCoefficients::uniform(2), &BoundaryConditions::homogeneous());
    let sys = BlockSystem::new(mats.clone(), 0.1, &[1e-3]).unwrap();
    let traj = simulate(&sys, &DiscreteState::zeros(&mats.layout), 5, |_| sys.zero_load()).unwrap();
    assert!(traj.iter().all(|x| x.values.iter().all(|&v| v == 0.0)));
}

#[test]
fn constant_pressure_is_a_fixed_point() {
    let mesh = cross(0.1);
    let c = 0.7;
    let mut bc = BoundaryConditions::homogeneous();
    bc.default_wall = Condition::Pressure(c);
    bc.default_fracture_end = Condition::Pressure(c);
    let mats = system(&mesh, &ModelCoefficients::uniform(4), &bc);
    let sys = BlockSystem::new(mats.clone(), 0.1, &[1e-3, 6e-4]).unwrap();
    let mut x0 = initial_state(&mesh, &mats.layout, |_, _| c, |_, _| c);
    x0.values[mats.layout.multiplier(0)] = c;
    let x1 = sys.step(&x0, &sys.zero_load()).unwrap();
    assert!(relative_difference(x1.pressures(&mats.layout), x0.pressures(&mats.layout)) < 1e-10);
    assert!(norm_inf(x1.fluxes(&mats.layout)) < 1e-10);
}

#[test]
fn storage_energy_does_not_increase() {
    let mesh = cross(0.1);
    let mats = system(&mesh, &ModelCoefficients::uniform(4), &BoundaryConditions::homogeneous());
    let sys = BlockSystem::new(mats.clone(), 0.05, &[1e-3, 6e-4]).unwrap();
    let x0 = random_state(&mats.layout, 5);
    let traj = simulate(&sys, &x0, 20, |_| sys.zero_load()).unwrap();
    let energy: Vec<f64> = traj.iter().map(|x| storage_energy(&mats.layout, sys.storage(), x)).collect();
    for w in energy.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn one_step_simulation_equals_step_and_is_deterministic() {
    let mesh = case1(0.1);
    let mats = system(&mesh, &ModelCoefficients::uniform(2), &case1_bc());
    let sys = BlockSystem::new(mats.clone(), 0.1, &[1e-3]).unwrap();
    let x0 = DiscreteState::zeros(&mats.layout);
    let traj = simulate(&sys, &x0, 1, |_| sys.zero_load()).unwrap();
    assert_eq!(traj.len(), 2);
    assert_eq!(traj[1], sys.step(&x0, &sys.zero_load()).unwrap());
    let again = simulate(&sys, &x0, 1, |_| sys.zero_load()).unwrap();
    assert_eq!(traj, again);
}

#[test]
fn case1_fracture_flow_points_upward() {
    let mesh = case1(0.1);
    let mats = system(&mesh, &ModelCoefficients::uniform(2), &case1_bc());
    let sys = BlockSystem::new(mats.clone(), 0.1, &[1e-3]).unwrap();
    let traj = simulate(&sys, &DiscreteState::zeros(&mats.layout), 50, |_| sys.zero_load()).unwrap();
    let last = traj.last().unwrap();
    for (n, _) in mesh.fracture_nodes.iter().enumerate() {
        assert!(last.values[mats.layout.fracture_flux(n)] > 0.0);
    }
}

#[test]
fn mass_balance_holds_every_step() {
    for (mesh, bc, widths) in [(case1(0.1), case1_bc(), vec![1e-3]), (cross(0.1), cross_bc(1.0, 0.0), vec![1e-3, 6e-4])]
    {
        let mats = system(&mesh, &ModelCoefficients::uniform(mesh.n_subdomains()), &bc);
        let sys = BlockSystem::new(mats.clone(), 0.1, &widths).unwrap();
        let traj = simulate(&sys, &DiscreteState::zeros(&mats.layout), 10, |_| sys.zero_load()).unwrap();
        for w in traj.windows(2) {
            assert!(sys.mass_balance_residual(&w[0], &w[1], &sys.zero_load()) <= 1e-10);
        }
        // The measure notices a small defect in a single fracture cell.
        let mut bad = traj[5].clone();
        bad.values[mats.layout.fracture_pressure(3)] += 1e-6;
        assert!(sys.mass_balance_residual(&traj[4], &bad, &sys.zero_load()) > 1e-10);
        let mut bad = traj[5].clone();
        bad.values[mats.layout.fracture_flux(3)] *= 1.0 + 1e-6;
        assert!(sys.mass_balance_residual(&traj[4], &bad, &sys.zero_load()) > 1e-10);
    }
}

#[test]
fn intersection_flux_sum_vanishes() {
    let mesh = cross(0.1);
    let mats = system(&mesh, &ModelCoefficients::uniform(4), &cross_bc(5.0, 0.0));
    assert_eq!(mats.layout.n_multiplier, 1);
    let sys = BlockSystem::new(mats.clone(), 0.1, &[1e-3, 6e-4]).unwrap();
    let traj = simulate(&sys, &DiscreteState::zeros(&mats.layout), 10, |_| sys.zero_load()).unwrap();
    for x in &traj[1..] {
        let sums = sys.intersection_flux_sums(x);
        assert_eq!(sums.len(), 1);
        assert!(sums[0].abs() <= 1e-10);
    }
}

#[test]
fn intersection_pressure_is_shared_by_all_segment_ends() {
    let mesh = cross(0.1);
    let mats = system(&mesh, &ModelCoefficients::uniform(4), &cross_bc(5.0, 0.0));
    let sys = BlockSystem::new(mats.clone(), 0.1, &[1e-3, 6e-4]).unwrap();
    let traj = simulate(&sys, &DiscreteState::zeros(&mats.layout), 5, |_| sys.zero_load()).unwrap();
    let nodes = &mesh.intersection_nodes()[0];
    for x in &traj[1..] {
        let ends = sys.intersection_end_pressures(x).unwrap();
        assert_eq!(ends.len(), 1);
        assert_eq!(ends[0].len(), 4);
        let lambda = x.values[mats.layout.multiplier(0)];
        for p in &ends[0] {
            assert!((p - lambda).abs() <= 1e-10 * lambda.abs().max(1.0), "{p} vs {lambda}");
        }
        // The shared value sits between the pressures of the adjacent fracture cells.
        let adjacent: Vec<f64> = nodes
            .iter()
            .map(|&(n, _)| {
                let e = mesh.segment_edges[mesh.fracture_nodes[n].segment]
                    .iter()
                    .copied()
                    .find(|&e| mesh.fracture_edges[e].nodes.contains(&n))
                    .unwrap();
                x.values[mats.layout.fracture_pressure(e)]
            })
            .collect();
        let lo = adjacent.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = adjacent.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= lambda && lambda <= hi, "{lambda} outside [{lo}, {hi}]");
    }
}

#[test]
fn symmetric_cross_gives_opposite_colinear_fluxes() {
    // The mesh and these conditions are invariant under rotation by pi about
    // the centre, which reverses the tangent of the colinear segment pairs.
    let mesh = cross(0.1);
    let mats = system(&mesh, &ModelCoefficients::uniform(4), &cross_bc(1.0, 0.0));
    let sys = BlockSystem::new(mats.clone(), 0.1, &[1e-3, 6e-4]).unwrap();
    let traj = simulate(&sys, &DiscreteState::zeros(&mats.layout), 5, |_| sys.zero_load()).unwrap();
    let x = traj.last().unwrap();
    let nodes = &mesh.intersection_nodes()[0];
    let flux_at = |segment: usize| {
        let &(n, _) = nodes.iter().find(|&&(n, _)| mesh.fracture_nodes[n].segment == segment).unwrap();
        x.values[mats.layout.fracture_flux(n)]
    };
    // Segments 0, 1 split the horizontal fracture; 2, 3 the vertical one.
    for (a, b) in [(0, 1), (2, 3)] {
        let (ua, ub) = (flux_at(a), flux_at(b));
        assert!(ua.abs() > 1e-6);
        assert!((ua + ub).abs() <= 1e-10 * ua.abs().max(1.0), "{ua} vs {ub}");
    }
}

#[test]
fn removing_the_constraint_changes_the_solution() {
    let mesh = cross(0.1);
    let raw = SystemMatrices::assemble(&mesh, &ModelCoefficients::uniform(4), &cross_bc(1.0, 0.0)).unwrap();
    let constrained = constrain_all_intersections(&raw, &mesh).unwrap();
    let free = BlockSystem::new(Arc::new(raw.clone()), 0.1, &[1e-3, 6e-4]).unwrap();
    let tied = BlockSystem::new(Arc::new(constrained.clone()), 0.1, &[1e-3, 6e-4]).unwrap();
    let a = free.step(&DiscreteState::zeros(&raw.layout), &free.zero_load()).unwrap();
    let b = tied.step(&DiscreteState::zeros(&constrained.layout), &tied.zero_load()).unwrap();
    let n = raw.layout.n_u();
    assert!(relative_difference(&a.values[..n], &b.values[..n]) > 1e-3);
}

#[test]
fn constraint_needs_an_intersection_vertex() {
    let mesh = cross(0.1);
    let raw = SystemMatrices::assemble(&mesh, &ModelCoefficients::uniform(4), &cross_bc(1.0, 0.0)).unwrap();
    assert!(matches!(apply_intersection_constraints(&raw, &mesh, 0), Err(Error::Constraint(_))));
    let once = constrain_all_intersections(&raw, &mesh).unwrap();
    let v = once.multiplier_vertices[0];
    assert!(apply_intersection_constraints(&once, &mesh, v).is_err());
}

#[test]
fn one_analysis_serves_many_widths() {
    let mesh = case1(0.1);
    let mats = system(&mesh, &ModelCoefficients::uniform(2), &case1_bc());
    let first = BlockSystem::new(mats.clone(), 0.1, &[1e-3]).unwrap();
    let symbolic = first.symbolic().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..80 {
        let d = 1.0 / rng.random_range(500.0..2000.0);
        let sys = BlockSystem::with_symbolic(mats.clone(), 0.1, &[d], symbolic.clone()).unwrap();
        assert!(symbolic.matches(&sys.solver_matrix().unwrap()));
    }
}

fn check_reduced_route(mesh: &TriangularMesh, bc: &BoundaryConditions, widths: &[f64], storage: FractureStorage) {
    let mut coeffs = ModelCoefficients::uniform(mesh.n_subdomains());
    coeffs.fracture_storage = storage;
    coeffs.fracture_conductivity = 1e4;
    let mats = system(mesh, &coeffs, bc);
    let full = BlockSystem::new(mats.clone(), 0.1, widths).unwrap();
    let reduced = ReducedPropagator::new(mats.clone(), 0.1, PropagationMode::Companion).unwrap();
    let prev = random_state(&mats.layout, 9);
    let load: Vec<f64> = (0..mats.layout.n_p()).map(|i| 0.01 * i as f64 / mats.layout.n_p() as f64).collect();
    let expected = full.step(&prev, &load).unwrap();
    let prepared = reduced.prepare(&prev, &load).unwrap();
    let obs = reduced.observe_next(&prepared, widths).unwrap();
    let observed: Vec<f64> = mats.layout.observed().iter().map(|&i| expected.values[i]).collect();
    assert!(relative_difference(&obs, &observed) < 1e-9);
    let next = reduced.full_next(&prepared, widths).unwrap();
    assert!(relative_difference(&next.values, &expected.values) < 1e-9);
    assert_eq!(next.step, 1);
}

#[test]
fn reduced_route_matches_full_system() {
    let scaled = FractureStorage::Scaled { porosity: 1.0 };
    check_reduced_route(&case1(0.1), &case1_bc(), &[1e-3], scaled);
    check_reduced_route(&case1(0.1), &case1_bc(), &[2.7e-3], FractureStorage::Fixed(1e-3));
    check_reduced_route(&cross(0.1), &cross_bc(5.0, 0.0), &[1e-3, 6e-4], scaled);
}

struct Manufactured {
    fracture_conductivity: f64,
    width: f64,
}

impl Manufactured {
    fn pressure(x: [f64; 2], t: f64) -> f64 {
        x[0] * (2.0 - x[0]) * x[1] * (1.0 - x[1]) * libm::exp(-t)
    }
}

impl Sources for Manufactured {
    fn rock(&self, _: usize, x: [f64; 2], t: f64) -> f64 {
        let e = libm::exp(-t);
        -Self::pressure(x, t) + 2.0 * (x[1] * (1.0 - x[1]) + x[0] * (2.0 - x[0])) * e
    }

    fn fracture(&self, _: usize, x: [f64; 2], t: f64) -> f64 {
        let e = libm::exp(-t);
        -self.width * x[1] * (1.0 - x[1]) * e + 2.0 * self.fracture_conductivity * self.width * e
    }
}

fn manufactured_error(h: f64) -> f64 {
    let mesh = case1(h);
    let coeffs = ModelCoefficients::uniform(2);
    let src = Manufactured { fracture_conductivity: coeffs.fracture_conductivity, width: 1e-3 };
    let mats = system(&mesh, &coeffs, &BoundaryConditions::homogeneous());
    let dt = h;
    let n_steps = libm::round(1.0 / dt) as usize;
    let sys = BlockSystem::new(mats.clone(), dt, &[1e-3]).unwrap();
    let x0 = initial_state(
        &mesh,
        &mats.layout,
        |_, x| Manufactured::pressure(x, 0.0),
        |_, x| Manufactured::pressure(x, 0.0),
    );
    let layout = mats.layout;
    let traj = simulate(&sys, &x0, n_steps, |n| crate::assembly::assemble_sources(&mesh, &layout, &src, n as f64 * dt))
        .unwrap();
    let x = traj.last().unwrap();
    let mut err2 = 0.0;
    for k in 0..mesh.triangles.len() {
        let ph = x.values[layout.pressure(k)];
        err2 += integrate_triangle(mesh.triangle_points(k), |p| {
            let e = Manufactured::pressure(p, 1.0) - ph;
            e * e
        });
    }
    libm::sqrt(err2)
}

#[test]
fn manufactured_solution_converges() {
    let e1 = manufactured_error(0.1);
    let e2 = manufactured_error(0.05);
    let order = libm::log2(e1 / e2);
    assert!(order >= 0.9, "errors {e1}, {e2}, order {order}");
}
