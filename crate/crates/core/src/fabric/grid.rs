use crate::fabric::FabricError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `P` ranks in a single column.
    OneD,
    /// `q×q` ranks, position `(i, j)` has global rank `i + j·q`.
    TwoDColumnMajor,
}

/// Arrangement of `P` virtual ranks.
///
/// For the 2D layout the ranks of one grid column are contiguous, so a
/// reduce-scatter along a column leaves its blocks on consecutive global
/// ranks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grid {
    ranks: usize,
    side: usize,
    layout: Layout,
}

impl Grid {
    pub fn one_d(ranks: usize) -> Result<Self, FabricError> {
        if ranks == 0 {
            return Err(FabricError::InvalidGrid("at least one rank is required".into()));
        }
        Ok(Self {
            ranks,
            side: ranks,
            layout: Layout::OneD,
        })
    }

    pub fn two_d(ranks: usize) -> Result<Self, FabricError> {
        let q = (ranks as f64).sqrt().round() as usize;
        if ranks == 0 || q * q != ranks {
            return Err(FabricError::InvalidGrid(format!(
                "{ranks} ranks do not form a square grid"
            )));
        }
        Ok(Self {
            ranks,
            side: q,
            layout: Layout::TwoDColumnMajor,
        })
    }

    pub fn ranks(&self) -> usize {
        self.ranks
    }

    /// `q`: the grid side for 2D layouts, `P` for 1D.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Number of grid rows.
    fn height(&self) -> usize {
        match self.layout {
            Layout::OneD => self.ranks,
            Layout::TwoDColumnMajor => self.side,
        }
    }

    /// Number of grid columns.
    fn width(&self) -> usize {
        self.ranks / self.height()
    }

    /// `(row, column)` of a global rank.
    pub fn coords(&self, rank: usize) -> (usize, usize) {
        (rank % self.height(), rank / self.height())
    }

    pub fn rank_at(&self, row: usize, col: usize) -> usize {
        row + col * self.height()
    }

    pub fn world(&self) -> GroupHandle {
        GroupHandle::new((0..self.ranks).collect(), GroupKind::World)
    }

    /// Ranks sharing grid row `row`.
    pub fn row_group(&self, row: usize) -> GroupHandle {
        GroupHandle::new(
            (0..self.width()).map(|c| self.rank_at(row, c)).collect(),
            GroupKind::Row,
        )
    }

    /// Ranks sharing grid column `col`.
    pub fn col_group(&self, col: usize) -> GroupHandle {
        GroupHandle::new(
            (0..self.height()).map(|r| self.rank_at(r, col)).collect(),
            GroupKind::Column,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupKind {
    World,
    Row,
    Column,
}

/// Ordered set of ranks taking part in a collective.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupHandle {
    members: Vec<usize>,
    kind: GroupKind,
}

impl GroupHandle {
    /// Members are sorted ascending; that order is the reduction order.
    pub fn new(mut members: Vec<usize>, kind: GroupKind) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { members, kind }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn kind(&self) -> GroupKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn position(&self, rank: usize) -> Option<usize> {
        self.members.binary_search(&rank).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_major_numbering() {
        let g = Grid::two_d(4).unwrap();
        assert_eq!(g.side(), 2);
        assert_eq!(g.rank_at(0, 0), 0);
        assert_eq!(g.rank_at(1, 0), 1);
        assert_eq!(g.rank_at(0, 1), 2);
        assert_eq!(g.coords(3), (1, 1));
        assert_eq!(g.row_group(1).members(), &[1, 3]);
        assert_eq!(g.col_group(1).members(), &[2, 3]);
    }

    #[test]
    fn groups_partition_the_grid() {
        let g = Grid::two_d(16).unwrap();
        for r in 0..16 {
            let (i, j) = g.coords(r);
            assert_eq!(g.rank_at(i, j), r);
            assert!(g.row_group(i).position(r).is_some());
            assert_eq!(g.col_group(j).position(r), Some(i));
            assert_eq!(g.row_group(i).position(r), Some(j));
        }
    }

    #[test]
    fn non_square_rejected() {
        assert!(Grid::two_d(8).is_err());
        assert!(Grid::two_d(0).is_err());
        assert!(Grid::one_d(0).is_err());
        assert_eq!(Grid::one_d(5).unwrap().side(), 5);
    }
}
