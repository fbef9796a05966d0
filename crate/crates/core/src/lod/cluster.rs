use super::{LodError, LodKind, LodLevel, LodPoint};
use crate::field::{ParticleGrid, Point};

/// Averages the lattice over `factor`-sided blocks of particles.
///
/// Blocks are aligned with the lattice and counted with ceiling division,
/// so the last block on an axis may be partial. Each block becomes one new
/// point at the barycenter of its members carrying their mean value.
pub fn cluster_grid(grid: &ParticleGrid, factor: usize) -> Result<LodLevel, LodError> {
    if factor == 0 {
        return Err(LodError::InvalidArgument("cluster factor must be at least 1".into()));
    }
    if factor == 1 {
        let points = (0..grid.len())
            .map(|p| LodPoint {
                position: grid.position(p),
                value: grid.values()[p],
            })
            .collect();
        return Ok(LodLevel::new(LodKind::Cluster, points, None));
    }
    let [nx, ny, nz] = grid.dims();
    let cells = [nx.div_ceil(factor), ny.div_ceil(factor), nz.div_ceil(factor)];
    let total = cells[0] * cells[1] * cells[2];
    let mut sum_value = vec![0.0; total];
    let mut sum_pos = vec![[0.0; 3]; total];
    let mut count = vec![0usize; total];
    let values = grid.values();
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let c = ((k / factor) * cells[1] + j / factor) * cells[0] + i / factor;
                let p = grid.index(i, j, k);
                let pos = grid.lattice_position(i, j, k);
                sum_value[c] += values[p];
                sum_pos[c][0] += pos.x;
                sum_pos[c][1] += pos.y;
                sum_pos[c][2] += pos.z;
                count[c] += 1;
            }
        }
    }
    let points = (0..total)
        .map(|c| {
            let n = count[c] as f64;
            LodPoint {
                position: Point::new(sum_pos[c][0] / n, sum_pos[c][1] / n, sum_pos[c][2] / n),
                value: sum_value[c] / n,
            }
        })
        .collect();
    Ok(LodLevel::new(LodKind::Cluster, points, None))
}
