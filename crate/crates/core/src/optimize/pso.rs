use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Bounds, FitConfig, OptimOutcome, Params, DIM};

pub const INERTIA: f64 = 0.729;
pub const COGNITIVE: f64 = 1.494;
pub const SOCIAL: f64 = 1.494;

/// Inertia-weight particle swarm with `cfg.pso_particles` particles and
/// `cfg.pso_iters` iterations. Velocities are clamped to half the box span
/// per coordinate and positions to the box.
pub fn particle_swarm<F>(f: F, bounds: &Bounds, cfg: &FitConfig, seed: u64) -> OptimOutcome
where
    F: Fn(&Params) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.pso_particles.max(1);
    let vmax: Params = std::array::from_fn(|i| 0.5 * bounds.span(i));

    let mut pos: Vec<Params> = (0..n)
        .map(|_| std::array::from_fn(|i| rng.gen_range(bounds.lower[i]..=bounds.upper[i])))
        .collect();
    let mut vel: Vec<Params> = (0..n)
        .map(|_| std::array::from_fn(|i| rng.gen_range(-vmax[i]..=vmax[i])))
        .collect();
    let mut best_pos = pos.clone();
    let mut best_val: Vec<f64> = pos.iter().map(&f).collect();
    let mut evaluations = n;
    let mut g = (0..n)
        .min_by(|&a, &b| best_val[a].total_cmp(&best_val[b]))
        .expect("non-empty swarm");
    let (mut g_pos, mut g_val) = (best_pos[g], best_val[g]);

    for _ in 0..cfg.pso_iters {
        for k in 0..n {
            for i in 0..DIM {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let v = INERTIA * vel[k][i]
                    + COGNITIVE * r1 * (best_pos[k][i] - pos[k][i])
                    + SOCIAL * r2 * (g_pos[i] - pos[k][i]);
                vel[k][i] = v.clamp(-vmax[i], vmax[i]);
                pos[k][i] = (pos[k][i] + vel[k][i]).clamp(bounds.lower[i], bounds.upper[i]);
            }
            let val = f(&pos[k]);
            evaluations += 1;
            if val < best_val[k] {
                best_val[k] = val;
                best_pos[k] = pos[k];
            }
        }
        g = (0..n)
            .min_by(|&a, &b| best_val[a].total_cmp(&best_val[b]))
            .expect("non-empty swarm");
        if best_val[g] < g_val {
            g_val = best_val[g];
            g_pos = best_pos[g];
        }
    }

    OptimOutcome {
        x: g_pos,
        value: g_val,
        iterations: cfg.pso_iters,
        evaluations,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(half: f64) -> Bounds {
        Bounds {
            lower: [-half; DIM],
            upper: [half; DIM],
        }
    }

    fn sphere(x: &Params) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_minimum() {
        let out = particle_swarm(sphere, &cube(5.0), &FitConfig::default(), 3);
        assert!(out.x.iter().all(|v| v.abs() < 1e-2), "{:?}", out.x);
    }

    #[test]
    fn single_particle_no_iterations_returns_initial_position() {
        let cfg = FitConfig {
            pso_particles: 1,
            pso_iters: 0,
            ..FitConfig::default()
        };
        let bounds = cube(1.0);
        let out = particle_swarm(sphere, &bounds, &cfg, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let expected: Params = std::array::from_fn(|i| rng.gen_range(bounds.lower[i]..=bounds.upper[i]));
        assert_eq!(out.x, expected);
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = FitConfig::default();
        let a = particle_swarm(sphere, &cube(2.0), &cfg, 5);
        let b = particle_swarm(sphere, &cube(2.0), &cfg, 5);
        assert_eq!(a, b);
    }

    #[test]
    fn positions_stay_in_box() {
        // minimum outside the box: best point must sit on the boundary
        let bounds = cube(1.0);
        let out = particle_swarm(|x| x.iter().map(|v| (v - 3.0).powi(2)).sum(), &bounds, &FitConfig::default(), 1);
        assert!(bounds.contains(&out.x));
        assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-9));
    }
}
