//! Brute-force reference computations for the test suites.
//!
//! Everything here is written directly from the defining formulas, on plain
//! `f64` slices, and shares no code with `psyman-core`.

/// splitmix64 followed by xoshiro256** as published by Vigna and Blackman.
pub struct ReferenceXoshiro {
    s: [u64; 4],
}

impl ReferenceXoshiro {
    pub fn new(seed: u64) -> Self {
        let mut z = seed;
        let mut next = || {
            z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
            let mut x = z;
            x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
            x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
            x ^ (x >> 31)
        };
        Self {
            s: [next(), next(), next(), next()],
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.s;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }
}

/// Test-data generator on top of [`ReferenceXoshiro`].
pub struct Gen(ReferenceXoshiro);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self(ReferenceXoshiro::new(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer in `lo..=hi`.
    pub fn int(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.0.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Multiple of `2^-10` in `[-50, 50]`.
    pub fn dyadic(&mut self) -> f64 {
        self.int(0, 102_400) as f64 / 1024.0 - 50.0
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.int(0, i);
            v.swap(i, j);
        }
        v
    }
}

/// Three unit-variance Gaussian clusters in 8 dimensions centred at `20 e1`,
/// `20 e2` and `20 e3`, `per_cluster` points each, in label order.
pub fn three_blobs(seed: u64, per_cluster: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut g = Gen::new(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3 {
        for _ in 0..per_cluster {
            let mut p: Vec<f64> = (0..8).map(|_| g.gaussian()).collect();
            p[c] += 20.0;
            points.push(p);
            labels.push(c);
        }
    }
    (points, labels)
}

/// Correlation matrix with two planted blocks: within-block `r = 0.9`, across
/// blocks `r = 0.0`, each off-diagonal entry jittered by up to `jitter`.
/// Attributes are shuffled; the returned vector gives each attribute's block.
pub fn planted_blocks(seed: u64, jitter: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut g = Gen::new(seed);
    let a = g.int(2, 6);
    let b = g.int(2, 6);
    let n = a + b;
    let perm = g.permutation(n);
    let block: Vec<usize> = (0..n).map(|i| usize::from(perm[i] >= a)).collect();
    let mut r = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let base = if block[i] == block[j] { 0.9 } else { 0.0 };
            let v = base + g.range(-jitter, jitter);
            r[i][j] = v;
            r[j][i] = v;
        }
    }
    (r, block)
}

/// Symmetric matrix with zero diagonal and entries uniform in `(0, 10)`.
#[allow(clippy::needless_range_loop)]
pub fn random_dissimilarity(g: &mut Gen, n: usize) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = g.range(0.0, 10.0);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Noisy `size x size` images in `[0, 1]`: label 0 has a bright left half,
/// label 1 a bright right half. Labels alternate.
pub fn left_right_images(seed: u64, size: usize, count: usize) -> Vec<(Vec<f64>, usize)> {
    let mut g = Gen::new(seed);
    (0..count)
        .map(|k| {
            let label = k % 2;
            let px = (0..size * size)
                .map(|i| {
                    let left = i % size < size / 2;
                    let bright = (label == 0) == left;
                    let base = if bright { 0.8 } else { 0.2 };
                    (base + g.range(-0.15, 0.15)).clamp(0.0, 1.0)
                })
                .collect();
            (px, label)
        })
        .collect()
}

/// Single-pass textbook Pearson formula. Every sum is exact when the inputs
/// are multiples of `2^-10` below `2^6` in magnitude and `n <= 64`, leaving only
/// the final square root and division to round.
pub fn pearson_direct(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// One agglomeration step of the oracle: `(left, right, height, size)`.
pub type OracleMerge = (usize, usize, f64, usize);

/// Ward clustering by exhaustive search. At every step the cost of every pair of
/// current clusters is recomputed from the original squared dissimilarities:
///
/// `cost(A, B) = 2|A||B| / (|A|+|B|) * (mean_AB D^2 - mean_AA D^2 / 2 - mean_BB D^2 / 2)`
///
/// (means over all ordered pairs, diagonal included). Height is `sqrt(cost)`.
/// Ties go to the smallest `(left, right)` node-id pair.
pub fn ward_naive(d: &[Vec<f64>]) -> Vec<OracleMerge> {
    let n = d.len();
    let sq = |i: usize, j: usize| d[i][j] * d[i][j];
    let mean_between = |a: &[usize], b: &[usize]| -> f64 {
        let mut s = 0.0;
        for &i in a {
            for &j in b {
                s += sq(i, j);
            }
        }
        s / (a.len() * b.len()) as f64
    };
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let (a, b) = (&clusters[x].1, &clusters[y].1);
                let (na, nb) = (a.len() as f64, b.len() as f64);
                let cost = 2.0 * na * nb / (na + nb)
                    * (mean_between(a, b) - 0.5 * mean_between(a, a) - 0.5 * mean_between(b, b));
                let ids = (clusters[x].0.min(clusters[y].0), clusters[x].0.max(clusters[y].0));
                let better = match best {
                    None => true,
                    Some((c, l, r, _, _)) => cost < c || (cost == c && ids < (l, r)),
                };
                if better {
                    best = Some((cost, ids.0, ids.1, x, y));
                }
            }
        }
        let (cost, l, r, x, y) = best.unwrap();
        let mut members = clusters[x].1.clone();
        members.extend_from_slice(&clusters[y].1);
        clusters.remove(y);
        clusters.remove(x);
        merges.push((l, r, cost.max(0.0).sqrt(), members.len()));
        clusters.push((n + step, members));
    }
    merges
}

/// Grad-CAM by looping pixels, then channels, then the gradient plane, with no
/// shared intermediate. `act` and `grad` are `[k, h, w]` row-major.
pub fn cam_brute(act: &[f64], grad: &[f64], k: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.0;
            for c in 0..k {
                let mut g = 0.0;
                for yy in 0..h {
                    for xx in 0..w {
                        g += grad[(c * h + yy) * w + xx];
                    }
                }
                v += g / (h * w) as f64 * act[(c * h + y) * w + x];
            }
            out[y * w + x] = if v > 0.0 { v } else { 0.0 };
        }
    }
    out
}

/// Mean silhouette by direct per-point evaluation.
pub fn silhouette_brute(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let n = points.len();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
        others.sort_unstable();
        others.dedup();
        for l in others {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == l).collect();
            let m = members.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / members.len() as f64;
            b = b.min(m);
        }
        let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
        total += s;
    }
    total / n as f64
}

/// `2^H(row)` with H in bits.
pub fn perplexity(row: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in row {
        if p > 0.0 {
            h -= p * p.log2();
        }
    }
    2f64.powf(h)
}

/// Student-t low-dimensional affinities by double loop.
pub fn student_q(coords: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = coords.len();
    let kernel = |i: usize, j: usize| -> f64 {
        let sq: f64 = coords[i].iter().zip(&coords[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        1.0 / (1.0 + sq)
    };
    let mut z = 0.0;
    for k in 0..n {
        for l in 0..n {
            if k != l {
                z += kernel(k, l);
            }
        }
    }
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { kernel(i, j) / z }).collect())
        .collect()
}

/// KL(P || Q) over off-diagonal entries with positive p.
pub fn kl(p: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        for j in 0..p.len() {
            if i != j && p[i][j] > 0.0 {
                s += p[i][j] * (p[i][j] / q[i][j]).ln();
            }
        }
    }
    s
}

/// Sum of squared distance residuals over all unordered pairs.
pub fn stress_brute(high: &[Vec<f64>], low: &[Vec<f64>]) -> f64 {
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut s = 0.0;
    for i in 0..high.len() {
        for j in i + 1..high.len() {
            let r = dist(&high[i], &high[j]) - dist(&low[i], &low[j]);
            s += r * r;
        }
    }
    s
}

/// Central finite difference of `f` with respect to every coordinate of `x`.
pub fn central_gradient(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Relative Frobenius error `||a - b|| / ||b||`.
pub fn relative_frobenius(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}
