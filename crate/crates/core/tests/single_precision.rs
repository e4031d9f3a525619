use mintime_mfg::hjb::solve_value;
use mintime_mfg::trajectories::{dpp_audit, integrate};
use mintime_mfg::{Constraint, Domain32, Point, SolverParams, SpaceGrid, Speed32, Target32, Phi32};

#[test]
fn disk_value_in_f32() {
    let dom = Domain32::disk(Point::new(0.0, 0.0), 1.0).unwrap();
    let tgt = Target32::boundary(&dom);
    let k = Speed32::constant(SpaceGrid::covering(&dom, 0.05, 2).unwrap(), 1.0).unwrap();
    let phi: Phi32 = solve_value(&k, &dom, &tgt, Constraint::State, &SolverParams::new(2, 0.05, 1.0)).unwrap();
    for x in [Point::new(0.0, 0.0), Point::new(0.3, -0.4), Point::new(-0.7, 0.1)] {
        let exact = 1.0 - x.norm();
        assert!((phi.eval(0.0, x) - exact).abs() <= 3.0 * 0.05, "{x:?}");
    }
    let g = integrate(&phi, &k, 0.0, Point::new(0.2, 0.1)).unwrap();
    assert!(dpp_audit(&g, &phi) <= 3.0 * (0.05 + phi.params().dt_traj));
}
