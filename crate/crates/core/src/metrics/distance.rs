//! Exact squared Euclidean distance transform on the pixel grid.
//!
//! Separable lower-envelope algorithm with intersections kept as exact
//! rationals, so the result equals a brute-force nearest-site search
//! bit for bit.

/// Squared distance from every pixel to the nearest `true` site, or `None`
/// when there are no sites at all.
pub fn squared_edt(width: usize, height: usize, sites: &[bool]) -> Vec<Option<u64>> {
    debug_assert_eq!(sites.len(), width * height);
    let mut cols = vec![None; width * height];
    let mut f = vec![None; height];
    let mut out = vec![None; height];
    for x in 0..width {
        for y in 0..height {
            f[y] = sites[y * width + x].then_some(0);
        }
        transform_1d(&f, &mut out);
        for y in 0..height {
            cols[y * width + x] = out[y];
        }
    }
    let mut result = vec![None; width * height];
    for y in 0..height {
        let row = &cols[y * width..(y + 1) * width];
        transform_1d(row, &mut result[y * width..(y + 1) * width]);
    }
    result
}

/// `out[q] = min_p (q - p)^2 + f[p]` over finite `f[p]`.
fn transform_1d(f: &[Option<u64>], out: &mut [Option<u64>]) {
    let sites: Vec<(i128, i128)> = f
        .iter()
        .enumerate()
        .filter_map(|(p, v)| v.map(|v| (p as i128, v as i128)))
        .collect();
    if sites.is_empty() {
        out.iter_mut().for_each(|o| *o = None);
        return;
    }
    // envelope[k] = site, bound[k] = left end of its interval as num/den
    let mut envelope: Vec<(i128, i128)> = Vec::with_capacity(sites.len());
    let mut bound: Vec<(i128, i128)> = Vec::with_capacity(sites.len());
    for &q in &sites {
        let mut s = (0, 1);
        while let Some(&r) = envelope.last() {
            s = intersection(r, q);
            let b = *bound.last().unwrap();
            if envelope.len() > 1 && s.0 * b.1 <= b.0 * s.1 {
                envelope.pop();
                bound.pop();
            } else {
                break;
            }
        }
        if envelope.is_empty() {
            bound.push((i128::MIN / 4, 1));
        } else {
            bound.push(s);
        }
        envelope.push(q);
    }
    let mut k = 0;
    for (x, o) in out.iter_mut().enumerate() {
        let x = x as i128;
        while k + 1 < envelope.len() && bound[k + 1].0 < x * bound[k + 1].1 {
            k += 1;
        }
        let (p, fp) = envelope[k];
        *o = Some(((x - p) * (x - p) + fp) as u64);
    }
}

/// Abscissa where the parabolas rooted at `r` and `q` (r before q) meet.
fn intersection(r: (i128, i128), q: (i128, i128)) -> (i128, i128) {
    let num = (q.1 + q.0 * q.0) - (r.1 + r.0 * r.0);
    let den = 2 * (q.0 - r.0);
    (num, den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_matches_scan() {
        let f = [None, Some(3), None, None, Some(0), Some(9), None];
        let mut out = [None; 7];
        transform_1d(&f, &mut out);
        for q in 0..7i64 {
            let want = f
                .iter()
                .enumerate()
                .filter_map(|(p, v)| v.map(|v| ((q - p as i64).pow(2) as u64) + v))
                .min();
            assert_eq!(out[q as usize], want);
        }
    }

    #[test]
    fn no_sites_gives_none() {
        assert!(squared_edt(3, 2, &[false; 6]).iter().all(Option::is_none));
    }

    #[test]
    fn single_site() {
        let mut s = [false; 12];
        s[5] = true;
        let d = squared_edt(4, 3, &s);
        assert_eq!(d[5], Some(0));
        assert_eq!(d[0], Some(2));
        assert_eq!(d[11], Some(5));
    }
}
