/// 2-D histogram of `states` over coordinates `dims`, `bins x bins` cells
/// spanning `bounds`. Out-of-range values land in the edge bins, so every
/// state is counted exactly once. Rows index `dims.0`, columns `dims.1`.
pub fn visitation_grid(
    states: &[Vec<f64>],
    dims: (usize, usize),
    bins: usize,
    bounds: ((f64, f64), (f64, f64)),
) -> Vec<Vec<u64>> {
    let bins = bins.max(1);
    let mut grid = vec![vec![0u64; bins]; bins];
    let cell = |v: f64, (lo, hi): (f64, f64)| -> usize {
        let t = (v - lo) / (hi - lo);
        if t.is_nan() {
            return 0;
        }
        ((t * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    };
    for s in states {
        let i = cell(s[dims.0], bounds.0);
        let j = cell(s[dims.1], bounds.1);
        grid[i][j] += 1;
    }
    grid
}

pub fn occupied_cells(grid: &[Vec<u64>]) -> usize {
    grid.iter().flatten().filter(|&&c| c > 0).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const UNIT: ((f64, f64), (f64, f64)) = ((0.0, 1.0), (0.0, 1.0));

    #[test]
    fn centre_state_in_centre_cell() {
        let g = visitation_grid(&[vec![0.5, 0.5]], (0, 1), 3, UNIT);
        assert_eq!(g[1][1], 1);
        assert_eq!(g.iter().flatten().sum::<u64>(), 1);
    }

    #[test]
    fn identical_states_share_a_cell() {
        let states = vec![vec![0.1, 0.9]; 7];
        let g = visitation_grid(&states, (0, 1), 4, UNIT);
        assert_eq!(g[0][3], 7);
        assert_eq!(occupied_cells(&g), 1);
    }

    #[test]
    fn out_of_range_goes_to_edges() {
        let g = visitation_grid(&[vec![-5.0, 5.0], vec![1.0, 0.0]], (0, 1), 2, UNIT);
        assert_eq!(g[0][1], 1);
        assert_eq!(g[1][0], 1);
    }

    #[test]
    fn dense_uniform_states_fill_the_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let states: Vec<Vec<f64>> = (0..20_000).map(|_| vec![rng.random(), rng.random()]).collect();
        let g = visitation_grid(&states, (0, 1), 20, UNIT);
        assert_eq!(g.iter().flatten().sum::<u64>(), 20_000);
        assert!(occupied_cells(&g) as f64 / 400.0 > 0.99);
    }
}
