use super::cost::{BShape, CostModel};
use super::{FusedTile, SchedulerConfig};
use crate::SparseMatrixCsr;

/// Bisects a first-wavefront tile until every piece fits in `cacheSize`.
///
/// Returns the leaf tiles ordered by range and the second-operation
/// iterations whose dependencies straddle a cut; those move to the second
/// wavefront. Width-1 tiles are returned as they are.
pub fn split_tile<T>(
    tile: FusedTile,
    config: &SchedulerConfig,
    a: &SparseMatrixCsr<T>,
) -> (Vec<FusedTile>, Vec<usize>) {
    split_tile_with(tile, config, a, BShape::Dense)
}

pub fn split_tile_with<T>(
    tile: FusedTile,
    config: &SchedulerConfig,
    a: &SparseMatrixCsr<T>,
    b: BShape<'_>,
) -> (Vec<FusedTile>, Vec<usize>) {
    let mut model = CostModel::new(a, b, config);
    let (mut tiles, mut demoted) = (Vec::new(), Vec::new());
    split_fused(tile, &mut model, config.cache_size, &mut tiles, &mut demoted);
    demoted.sort_unstable();
    (tiles, demoted)
}

pub(crate) fn split_fused<T>(
    tile: FusedTile,
    model: &mut CostModel<'_, T>,
    cache_size: usize,
    out: &mut Vec<FusedTile>,
    demoted: &mut Vec<usize>,
) {
    if tile.width() <= 1 || model.cost(&tile) <= cache_size {
        out.push(tile);
        return;
    }
    let a = model.matrix();
    let mid = tile.i_lo + tile.width() / 2;
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for j in tile.j_list {
        if a.row_within(j, tile.i_lo, mid) {
            left.push(j);
        } else if a.row_within(j, mid, tile.i_hi) {
            right.push(j);
        } else {
            demoted.push(j);
        }
    }
    split_fused(FusedTile::new(tile.i_lo..mid, left), model, cache_size, out, demoted);
    split_fused(FusedTile::new(mid..tile.i_hi, right), model, cache_size, out, demoted);
}

/// Second-wavefront tiles have no first-operation range; they are bisected
/// by iteration count.
pub(crate) fn split_unfused<T>(
    tile: FusedTile,
    model: &mut CostModel<'_, T>,
    cache_size: usize,
    out: &mut Vec<FusedTile>,
) {
    if tile.j_list.len() <= 1 || model.cost(&tile) <= cache_size {
        out.push(tile);
        return;
    }
    let mut left = tile.j_list;
    let right = left.split_off(left.len() / 2);
    split_unfused(FusedTile::unfused(left), model, cache_size, out);
    split_unfused(FusedTile::unfused(right), model, cache_size, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gen_banded;
    use crate::schedule::tile_cost;

    fn config(cache_size: usize) -> SchedulerConfig {
        SchedulerConfig {
            cache_size,
            b_col: 1,
            c_col: 1,
            index_to_scalar_ratio: 1.0,
            ..SchedulerConfig::default()
        }
    }

    #[test]
    fn fitting_tile_is_unchanged() {
        let a = SparseMatrixCsr::<f64>::identity(8);
        let tile = FusedTile::new(0..8, (0..8).collect());
        let (tiles, demoted) = split_tile(tile.clone(), &config(1000), &a);
        assert_eq!(tiles, vec![tile]);
        assert!(demoted.is_empty());
    }

    #[test]
    fn identity_single_bisection() {
        let a = SparseMatrixCsr::<f64>::identity(8);
        let tile = FusedTile::new(0..8, (0..8).collect());
        let whole = tile_cost(&tile, &a, BShape::Dense, &config(1));
        let half = tile_cost(&FusedTile::new(0..4, (0..4).collect()), &a, BShape::Dense, &config(1));
        assert!(half < whole);
        let (tiles, demoted) = split_tile(tile, &config(half), &a);
        assert_eq!(
            tiles,
            vec![FusedTile::new(0..4, vec![0, 1, 2, 3]), FusedTile::new(4..8, vec![4, 5, 6, 7])]
        );
        assert!(demoted.is_empty());
    }

    #[test]
    fn tridiagonal_cut_demotes_spanning_rows() {
        let a = gen_banded::<f64>(16, 1);
        let tile = FusedTile::new(0..8, (0..7).collect());
        let left = FusedTile::new(0..4, vec![0, 1, 2]);
        let right = FusedTile::new(4..8, vec![5, 6]);
        let cache = tile_cost(&left, &a, BShape::Dense, &config(1)).max(tile_cost(&right, &a, BShape::Dense, &config(1)));
        assert!(tile_cost(&tile, &a, BShape::Dense, &config(1)) > cache);
        let (tiles, demoted) = split_tile(tile, &config(cache), &a);
        assert_eq!(tiles, vec![left, right]);
        assert_eq!(demoted, vec![3, 4]);
    }

    #[test]
    fn recursion_stops_at_width_one() {
        let a = gen_banded::<f64>(8, 1);
        let (tiles, demoted) = split_tile(FusedTile::new(0..8, (0..8).collect()), &config(1), &a);
        assert_eq!(tiles.len(), 8);
        assert!(tiles.iter().all(|t| t.width() == 1 && t.j_list.is_empty()));
        assert_eq!(demoted, (0..8).collect::<Vec<_>>());
    }
}
