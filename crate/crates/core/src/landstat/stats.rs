use alloc::vec::Vec;

use crate::raster::CategoricalRaster;

/// The four per-image summaries used to judge predictive diversity.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StatisticVector {
    pub entropy: f64,
    pub adjacency: f64,
    pub patch_count: f64,
    pub modal_proportion: f64,
}

/// Names a component of [`StatisticVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Entropy,
    Adjacency,
    PatchCount,
    ModalProportion,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::Entropy,
        Statistic::Adjacency,
        Statistic::PatchCount,
        Statistic::ModalProportion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Entropy => "entropy",
            Statistic::Adjacency => "adjacency",
            Statistic::PatchCount => "patch_count",
            Statistic::ModalProportion => "modal_proportion",
        }
    }
}

impl StatisticVector {
    pub fn of(raster: &CategoricalRaster) -> Self {
        Self {
            entropy: entropy(raster),
            adjacency: adjacency(raster) as f64,
            patch_count: patch_count(raster) as f64,
            modal_proportion: modal_proportion(raster),
        }
    }

    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::Entropy => self.entropy,
            Statistic::Adjacency => self.adjacency,
            Statistic::PatchCount => self.patch_count,
            Statistic::ModalProportion => self.modal_proportion,
        }
    }
}

/// Shannon entropy of the class proportions, in nats.
pub fn entropy(raster: &CategoricalRaster) -> f64 {
    let n = raster.len() as f64;
    raster
        .class_counts()
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum()
}

/// Number of ordered 4-neighbor pairs sharing a class; every matching
/// undirected edge counts twice.
pub fn adjacency(raster: &CategoricalRaster) -> usize {
    let (h, w) = raster.dims();
    let d = raster.data();
    let mut same = 0;
    for r in 0..h {
        for c in 0..w {
            let v = d[r * w + c];
            if c + 1 < w && d[r * w + c + 1] == v {
                same += 1;
            }
            if r + 1 < h && d[(r + 1) * w + c] == v {
                same += 1;
            }
        }
    }
    2 * same
}

/// Number of undirected 4-neighbor edges in an H×W grid.
pub fn edge_count(height: usize, width: usize) -> usize {
    2 * height * width - height - width
}

/// Number of maximal 4-connected single-class regions.
pub fn patch_count(raster: &CategoricalRaster) -> usize {
    let (h, w) = raster.dims();
    let d = raster.data();
    let mut sets = DisjointSets::new(h * w);
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            if c + 1 < w && d[i + 1] == d[i] {
                sets.union(i, i + 1);
            }
            if r + 1 < h && d[i + w] == d[i] {
                sets.union(i, i + w);
            }
        }
    }
    sets.count()
}

/// Share of pixels in the most frequent class.
pub fn modal_proportion(raster: &CategoricalRaster) -> f64 {
    let max = raster.class_counts().into_iter().max().unwrap_or(0);
    max as f64 / raster.len() as f64
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
    roots: usize,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: alloc::vec![0; n],
            roots: n,
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        self.roots -= 1;
        match self.rank[ra].cmp(&self.rank[rb]) {
            core::cmp::Ordering::Less => self.parent[ra] = rb,
            core::cmp::Ordering::Greater => self.parent[rb] = ra,
            core::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }

    fn count(&self) -> usize {
        self.roots
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn raster(h: usize, w: usize, k: usize, data: Vec<u8>) -> CategoricalRaster {
        CategoricalRaster::new(h, w, k, data).unwrap()
    }

    fn checkerboard(n: usize) -> CategoricalRaster {
        raster(n, n, 2, (0..n * n).map(|i| ((i / n + i % n) % 2) as u8).collect())
    }

    #[test]
    fn entropy_analytic_cases() {
        assert_eq!(entropy(&raster(3, 3, 4, vec![2; 9])), 0.0);
        let half = raster(2, 2, 2, vec![0, 1, 1, 0]);
        assert!((entropy(&half) - core::f64::consts::LN_2).abs() < 1e-12);
        let even = raster(8, 8, 4, (0..64).map(|i| (i % 4) as u8).collect());
        assert!((entropy(&even) - libm::log(4.0)).abs() < 1e-12);
    }

    #[test]
    fn adjacency_simple_cases() {
        assert_eq!(adjacency(&raster(2, 2, 2, vec![1; 4])), 8);
        assert_eq!(adjacency(&checkerboard(5)), 0);
    }

    #[test]
    fn patch_count_simple_cases() {
        assert_eq!(patch_count(&raster(4, 5, 3, vec![1; 20])), 1);
        assert_eq!(patch_count(&checkerboard(3)), 9);
        // U shape: the two arms join through the bottom row.
        let u = raster(3, 3, 2, vec![1, 0, 1, 1, 0, 1, 1, 1, 1]);
        assert_eq!(patch_count(&u), 2);
    }

    #[test]
    fn modal_proportion_cases() {
        assert_eq!(modal_proportion(&raster(2, 2, 3, vec![1; 4])), 1.0);
        assert_eq!(modal_proportion(&raster(2, 2, 3, vec![0, 0, 1, 2])), 0.5);
    }

    fn arb_raster() -> impl Strategy<Value = CategoricalRaster> {
        (1usize..7, 1usize..7, 2usize..5).prop_flat_map(|(h, w, k)| {
            proptest::collection::vec(0..k as u8, h * w)
                .prop_map(move |d| CategoricalRaster::new(h, w, k, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn statistics_ignore_flips_and_relabeling(r in arb_raster(), hf: bool, vf: bool, rot in 0u8..4) {
            let k = r.num_classes() as u8;
            let flipped = r.flipped(hf, vf);
            let relabeled = CategoricalRaster::new(
                r.height(), r.width(), r.num_classes(),
                r.data().iter().map(|&v| (v + rot) % k).collect(),
            ).unwrap();
            let s = StatisticVector::of(&r);
            for other in [&flipped, &relabeled] {
                let t = StatisticVector::of(other);
                prop_assert!((s.entropy - t.entropy).abs() < 1e-12);
                prop_assert_eq!(s.adjacency, t.adjacency);
                prop_assert_eq!(s.patch_count, t.patch_count);
                prop_assert_eq!(s.modal_proportion, t.modal_proportion);
            }
        }

        #[test]
        fn adjacency_plus_mismatches_is_edge_count(r in arb_raster()) {
            let (h, w) = r.dims();
            let d = r.data();
            let mut mismatched = 0;
            for i in 0..h * w {
                if i % w + 1 < w && d[i] != d[i + 1] { mismatched += 1; }
                if i / w + 1 < h && d[i] != d[i + w] { mismatched += 1; }
            }
            prop_assert_eq!(adjacency(&r) / 2 + mismatched, edge_count(h, w));
        }

        #[test]
        fn single_class_means_single_patch(r in arb_raster()) {
            if modal_proportion(&r) == 1.0 {
                prop_assert_eq!(patch_count(&r), 1);
            }
            let s = StatisticVector::of(&r);
            prop_assert!(s.entropy >= 0.0 && s.entropy <= libm::log(r.num_classes() as f64) + 1e-12);
            prop_assert!(s.patch_count >= 1.0 && s.patch_count <= r.len() as f64);
            prop_assert!(s.modal_proportion > 0.0 && s.modal_proportion <= 1.0);
        }
    }
}
