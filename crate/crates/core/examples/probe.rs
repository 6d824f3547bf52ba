// Scratch probe for tuning the reference problem; not part of the artifact.
use impulse_qvi::*;

fn spec(amp: f64, width: f64, priority: Priority) -> ProblemSpec {
    ProblemSpec {
        dim: 1,
        horizon: 1.0,
        drift: DriftFamily::Affine { matrix: vec![0.0], offset: vec![0.0] },
        diffusion: DiffusionFamily::Constant { matrix: vec![0.5] },
        running_gain: RunningGain::Bump { amplitude: amp, center: vec![0.0], width },
        terminal_gain: TerminalGain::Hat { amplitude: 1.0, center: vec![0.0], halfwidth: 1.0 },
        cost_i: CostFamily::constant(0.3, 1.2),
        cost_ii: CostFamily::constant(0.15, 1.1),
        cone_i: Cone::new(vec![ConeAxis::NonNeg]),
        cone_ii: Cone::new(vec![ConeAxis::NonPos]),
        actions_i: vec![vec![0.25], vec![0.5]],
        actions_ii: vec![vec![-0.25], vec![-0.5]],
        priority,
    }
}

fn main() {
    for (amp, width) in [(2.0, 0.3), (4.0, 0.3), (6.0, 0.25)] {
        let s2 = spec(amp, width, Priority::PlayerII);
        let grid = build_grid(&s2, &GridRequest {
            bounds: vec![(-2.0, 2.0)],
            nodes_per_dim: vec![401],
            time_steps: None,
            boundary: BoundaryPolicy::NeumannZeroSecond,
        }).unwrap();
        let t_start = std::time::Instant::now();
        let opts = SolveOpts::default();
        let r2 = solve_backward(&s2, &grid, &opts).unwrap();
        let solve_secs = t_start.elapsed().as_secs_f64();
        let s1 = spec(amp, width, Priority::PlayerI);
        let r1 = solve_backward(&s1, &grid, &opts).unwrap();
        let policy = extract_policy(&r2, &s2, &grid, 1e-8);
        let masks = region_masks(&policy);
        let mut tot = [0usize; 3];
        for m in &masks {
            for k in 0..3 { tot[k] += m.counts[k]; }
        }
        let mut max_diff = 0.0f64;
        for (a, b) in r2.stack.iter().zip(&r1.stack) {
            for (va, vb) in a.values.iter().zip(&b.values) {
                max_diff = max_diff.max((va - vb).abs());
            }
        }
        let max_iters = r2.iterations.iter().max().unwrap();
        let v00 = r2.stack[0].values[200];
        let max_res = r2.residuals.iter().cloned().fold(0.0f64, f64::max);
        println!(
            "amp={amp} w={width}: nt={} solve={solve_secs:.2}s V(0,0)={v00:.4} \
             regions: cont={} I={} II={} | priority-diff={max_diff:.3e} max_fp_iters={max_iters} max_res={max_res:.2e} clamps={}",
            grid.time_steps(), tot[0], tot[1], tot[2], r2.clamp_events
        );
    }
}
