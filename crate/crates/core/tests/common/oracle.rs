//! Straightforward reference implementations on plain `Vec<f64>` rows.

fn mean_rows<'a>(rows: impl IntoIterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let rows: Vec<&Vec<f64>> = rows.into_iter().collect();
    let d = rows[0].len();
    (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Lexicographic order on values; both rules break exact score ties this way.
fn lex(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn subsets(n: usize, m: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u32..1 << n)
        .filter(move |mask| mask.count_ones() as usize == m)
        .map(move |mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
}

/// Mean of the `(n − f)`-subset of minimal diameter.
pub fn mda(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    let n = rows.len();
    let diameter = |s: &[usize]| {
        s.iter()
            .flat_map(|&i| s.iter().map(move |&j| (i, j)))
            .map(|(i, j)| dist(&rows[i], &rows[j]))
            .fold(0.0, f64::max)
    };
    let candidates: Vec<Vec<usize>> = subsets(n, n - f).collect();
    let min = candidates.iter().map(|s| diameter(s)).fold(f64::INFINITY, f64::min);
    candidates
        .iter()
        .filter(|s| diameter(s) == min)
        .map(|s| mean_rows(s.iter().map(|&i| &rows[i])))
        .min_by(|a, b| lex(a, b))
        .unwrap()
}

/// The report whose `n − f − 2` nearest neighbours are closest in squared
/// distance.
pub fn krum(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    let n = rows.len();
    let score = |i: usize| {
        let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dist(&rows[i], &rows[j]).powi(2)).collect();
        d.sort_by(f64::total_cmp);
        d[..n - f - 2].iter().sum::<f64>()
    };
    let best = (0..n)
        .min_by(|&a, &b| score(a).total_cmp(&score(b)).then_with(|| lex(&rows[a], &rows[b])))
        .unwrap();
    rows[best].clone()
}

fn columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..rows[0].len())
        .map(|j| {
            let mut c: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect()
}

fn median_sorted(c: &[f64]) -> f64 {
    let m = c.len() / 2;
    if c.len() % 2 == 1 {
        c[m]
    } else {
        (c[m - 1] + c[m]) / 2.0
    }
}

fn trimmed_sorted(c: &[f64], f: usize) -> f64 {
    let kept = &c[f..c.len() - f];
    kept.iter().sum::<f64>() / kept.len() as f64
}

/// Mean of the `m` sorted values nearest `pivot`, grown outwards from the
/// pivot's position.
fn nearest_window(c: &[f64], pivot: f64, m: usize) -> f64 {
    let mut hi = c.partition_point(|&v| v < pivot);
    let mut lo = hi;
    while hi - lo < m {
        let take_left = lo > 0 && (hi == c.len() || pivot - c[lo - 1] <= c[hi] - pivot);
        if take_left {
            lo -= 1;
        } else {
            hi += 1;
        }
    }
    c[lo..hi].iter().sum::<f64>() / m as f64
}

pub fn median(rows: &[Vec<f64>]) -> Vec<f64> {
    columns(rows).iter().map(|c| median_sorted(c)).collect()
}

pub fn trimmed_mean(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    columns(rows).iter().map(|c| trimmed_sorted(c, f)).collect()
}

pub fn meamed(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    let m = rows.len() - f;
    columns(rows).iter().map(|c| nearest_window(c, median_sorted(c), m)).collect()
}

pub fn phocas(rows: &[Vec<f64>], f: usize) -> Vec<f64> {
    let m = rows.len() - f;
    columns(rows)
        .iter()
        .map(|c| nearest_window(c, trimmed_sorted(c, f), m))
        .collect()
}

/// Whether `point` equals, to rounding, the mean of some `m`-subset of rows.
pub fn is_subset_mean(rows: &[Vec<f64>], m: usize, point: &[f64]) -> bool {
    subsets(rows.len(), m).any(|s| {
        let mean = mean_rows(s.iter().map(|&i| &rows[i]));
        mean.iter().zip(point).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    })
}

/// Planar convex-hull membership: `p` is inside iff it lies on the inner side
/// of every hull edge.
pub fn in_hull_2d(rows: &[Vec<f64>], p: &[f64]) -> bool {
    let cross = |a: &[f64], b: &[f64], c: &[f64]| (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let sides: Vec<f64> = rows.iter().map(|c| cross(a, b, c)).collect();
            let left = sides.iter().all(|&s| s >= -1e-12);
            let right = sides.iter().all(|&s| s <= 1e-12);
            if left && cross(a, b, p) < -1e-12 || right && cross(a, b, p) > 1e-12 {
                return false;
            }
        }
    }
    true
}
