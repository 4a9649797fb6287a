//! Sampled image curves: arc length, three-point curvature, local projection
//! of the spot and abscissa prediction.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// One sample of a curve: position, arc length, curvature and its slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub x: f64,
    pub y: f64,
    pub s: f64,
    /// Signed curvature, left turns positive (1/px).
    pub c: f64,
    /// `dC/ds` by central differences.
    pub dcds: f64,
}

impl PathSample {
    pub fn point(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathCurve {
    samples: Vec<PathSample>,
    closed: bool,
    length: f64,
}

impl PathCurve {
    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Total arc length, including the closing segment of a closed curve.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.samples.len()
        } else {
            self.samples.len() - 1
        }
    }

    pub fn mean_spacing(&self) -> f64 {
        self.length / self.segment_count() as f64
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.samples.iter().map(|s| s.c.abs()).fold(0.0, f64::max)
    }

    fn segment(&self, j: usize) -> (&PathSample, &PathSample) {
        (&self.samples[j], &self.samples[(j + 1) % self.samples.len()])
    }

    /// Point on the polyline at arc length `s` (clamped or wrapped).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = self.wrap(s);
        let j = match self.samples.partition_point(|q| q.s <= s) {
            0 => 0,
            k => (k - 1).min(self.segment_count() - 1),
        };
        let (a, b) = self.segment(j);
        let seg_len = (b.point() - a.point()).norm();
        let r = ((s - a.s) / seg_len).clamp(0.0, 1.0);
        a.point() + (b.point() - a.point()) * r
    }

    fn wrap(&self, s: f64) -> f64 {
        if self.closed {
            s.rem_euclid(self.length)
        } else {
            s.clamp(0.0, self.length)
        }
    }

    /// Unit tangent of the segment containing arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let s = self.wrap(s);
        let j = match self.samples.partition_point(|q| q.s <= s) {
            0 => 0,
            k => (k - 1).min(self.segment_count() - 1),
        };
        let (a, b) = self.segment(j);
        (b.point() - a.point()).normalize()
    }

    /// Axis-aligned bounding box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for q in &self.samples {
            lo = lo.inf(&q.point());
            hi = hi.sup(&q.point());
        }
        (hi - lo).norm()
    }
}

fn signed_curvature(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    let (ab, bc, ac) = (b - a, c - b, c - a);
    let cross = ab.x * bc.y - ab.y * bc.x;
    if cross == 0.0 {
        return 0.0;
    }
    2.0 * cross / (ab.norm() * bc.norm() * ac.norm())
}

/// Builds a curve with chord-length abscissa and three-point curvature.
pub fn build_path(points: &[Vec2], closed: bool) -> Result<PathCurve> {
    let n = points.len();
    if n < 3 {
        return Err(Error::TooFewPoints(n));
    }
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::invalid("path", "non-finite coordinate"));
    }
    let mut s = Vec::with_capacity(n);
    s.push(0.0);
    for i in 1..n {
        let step = (points[i] - points[i - 1]).norm();
        if step < 1e-9 {
            return Err(Error::DuplicatePoints(i - 1, i));
        }
        s.push(s[i - 1] + step);
    }
    let mut length = s[n - 1];
    if closed {
        let step = (points[0] - points[n - 1]).norm();
        if step < 1e-9 {
            return Err(Error::DuplicatePoints(n - 1, 0));
        }
        length += step;
    }

    let mut c = vec![0.0; n];
    for i in 0..n {
        if !closed && (i == 0 || i == n - 1) {
            continue;
        }
        c[i] = signed_curvature(&points[(i + n - 1) % n], &points[i], &points[(i + 1) % n]);
    }
    if !closed {
        c[0] = c[1];
        c[n - 1] = c[n - 2];
    }

    let mut dcds = vec![0.0; n];
    let ds = |i: usize, j: usize| -> f64 {
        // arc length from sample i forward to sample j
        let d = s[j] - s[i];
        if d <= 0.0 {
            d + length
        } else {
            d
        }
    };
    for i in 0..n {
        dcds[i] = if closed {
            let (p, q) = ((i + n - 1) % n, (i + 1) % n);
            (c[q] - c[p]) / ds(p, q)
        } else if i == 0 {
            (c[1] - c[0]) / (s[1] - s[0])
        } else if i == n - 1 {
            (c[n - 1] - c[n - 2]) / (s[n - 1] - s[n - 2])
        } else {
            (c[i + 1] - c[i - 1]) / (s[i + 1] - s[i - 1])
        };
    }

    let samples = (0..n)
        .map(|i| PathSample {
            x: points[i].x,
            y: points[i].y,
            s: s[i],
            c: c[i],
            dcds: dcds[i],
        })
        .collect();
    Ok(PathCurve {
        samples,
        closed,
        length,
    })
}

/// Foot point of the spot on the curve and the Frenet frame there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    pub foot: Vec2,
    /// Signed lateral error, positive on the `y_s` side.
    pub d: f64,
    pub s: f64,
    pub c: f64,
    pub dcds: f64,
    pub x_s: Vec2,
    pub y_s: Vec2,
    /// Position of the foot along its segment, in `[0, 1]`.
    pub r: f64,
    pub segment: usize,
}

fn rot90(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// Projects `p` on the segments whose end samples lie within `window` mean
/// spacings of `s_pred`.
pub fn project_onto_path(p: &Vec2, path: &PathCurve, s_pred: f64, window: usize) -> Result<PathProjection> {
    if window < 2 {
        return Err(Error::invalid("window", "must be at least 2"));
    }
    let half = window as f64 * path.mean_spacing();
    let n = path.samples.len();
    let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(3);
    let shifts: &[f64] = if path.closed { &[-1.0, 0.0, 1.0] } else { &[0.0] };
    for k in shifts {
        let centre = s_pred + k * path.length;
        let lo = path.samples.partition_point(|q| q.s < centre - half);
        let hi = path.samples.partition_point(|q| q.s <= centre + half);
        if lo < hi {
            ranges.push((lo, hi));
        }
    }
    if ranges.is_empty() {
        return Err(Error::EmptyWindow);
    }

    let mut segments: Vec<usize> = Vec::new();
    for (lo, hi) in ranges {
        for j in lo..hi {
            if j > 0 {
                segments.push(j - 1);
            } else if path.closed {
                segments.push(n - 1);
            }
            if j < path.segment_count() {
                segments.push(j);
            }
        }
    }
    segments.sort_unstable();
    segments.dedup();

    let mut best: Option<(f64, usize, f64, Vec2)> = None;
    for &j in &segments {
        let (a, b) = path.segment(j);
        let (pa, pb) = (a.point(), b.point());
        let ab = pb - pa;
        let t = ((p - pa).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let foot = pa + ab * t;
        let dist = (p - foot).norm();
        if best.is_none_or(|(bd, ..)| dist < bd) {
            best = Some((dist, j, t, foot));
        }
    }
    let (dist, j, t, foot) = best.ok_or(Error::EmptyWindow)?;
    let (a, b) = path.segment(j);
    let seg = b.point() - a.point();
    let mut x_s = seg / seg.norm();
    let mut y_s = rot90(&x_s);
    if (t == 0.0 || t == 1.0) && dist > 1e-12 {
        let off = (p - foot) / dist;
        let sign = if off.dot(&y_s) < 0.0 { -1.0 } else { 1.0 };
        y_s = off * sign;
        x_s = Vec2::new(y_s.y, -y_s.x);
    }
    let s = a.s + t * seg.norm();
    Ok(PathProjection {
        foot,
        d: (p - foot).dot(&y_s),
        s: if path.closed { s.rem_euclid(path.length) } else { s },
        c: a.c * (1.0 - t) + b.c * t,
        dcds: a.dcds * (1.0 - t) + b.dcds * t,
        x_s,
        y_s,
        r: t,
        segment: j,
    })
}

/// `s_k + s_dot Te`, clamped to the curve (wrapped on closed curves).
pub fn predict_abscissa(path: &PathCurve, s_k: f64, s_dot: f64, te: f64) -> f64 {
    path.wrap(s_k + s_dot * te)
}

/// Angle from the tangent `x_s` to the unit direction `v`, in `(-pi, pi]`.
pub fn orientation_error(v: &Vec2, x_s: &Vec2, y_s: &Vec2) -> f64 {
    v.dot(y_s).atan2(v.dot(x_s))
}

/// Reads `x,y` rows. A first line `# closed` marks a closed curve; any other
/// `#` line is a comment.
pub fn read_path_csv<R: Read>(mut reader: R) -> Result<(Vec<Vec2>, bool)> {
    let mut text = String::new();
    reader.read_to_string(&mut text).map_err(|e| Error::Io(e.to_string()))?;
    let closed = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .is_some_and(|l| l.trim_start_matches('#').trim().eq_ignore_ascii_case("closed") && l.starts_with('#'));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::invalid("path", format!("record {} has {} fields, expected x,y", k + 1, rec.len())));
        }
        let parse = |f: &str| {
            f.parse::<f64>()
                .map_err(|_| Error::invalid("path", format!("record {}: bad number {f:?}", k + 1)))
        };
        points.push(Vec2::new(parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok((points, closed))
}

pub fn load_path(path: &Path) -> Result<PathCurve> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let (points, closed) = read_path_csv(file)?;
    build_path(&points, closed)
}

pub fn write_path_csv(points: &[Vec2], closed: bool) -> String {
    let mut out = String::new();
    if closed {
        out.push_str("# closed\n");
    }
    for p in points {
        out.push_str(&format!("{},{}\n", p.x, p.y));
    }
    out
}

/// Generators for test and scenario curves, in pixels.
pub mod shapes {
    use super::Vec2;
    use std::f64::consts::PI;

    pub fn line(n: usize, from: Vec2, to: Vec2) -> Vec<Vec2> {
        (0..n).map(|i| from + (to - from) * (i as f64 / (n - 1) as f64)).collect()
    }

    pub fn circle(n: usize, center: Vec2, radius: f64) -> Vec<Vec2> {
        (0..n)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / n as f64;
                center + Vec2::new(a.cos(), a.sin()) * radius
            })
            .collect()
    }

    pub fn sinusoid(n: usize, start: Vec2, length: f64, amplitude: f64, wavelength: f64) -> Vec<Vec2> {
        let dense: Vec<Vec2> = (0..n * 8)
            .map(|i| {
                let x = length * i as f64 / (n * 8 - 1) as f64;
                start + Vec2::new(x, amplitude * (2.0 * PI * x / wavelength).sin())
            })
            .collect();
        resample_uniform(&dense, n, false)
    }

    /// Archimedean spiral from radius `r0` to `r1`.
    pub fn spiral(n: usize, center: Vec2, r0: f64, r1: f64, turns: f64) -> Vec<Vec2> {
        let dense: Vec<Vec2> = (0..n * 8)
            .map(|i| {
                let u = i as f64 / (n * 8 - 1) as f64;
                let a = 2.0 * PI * turns * u;
                center + Vec2::new(a.cos(), a.sin()) * (r0 + (r1 - r0) * u)
            })
            .collect();
        resample_uniform(&dense, n, false)
    }

    /// S-shaped curve: two opposite half circles joined smoothly.
    pub fn sigma(n: usize, center: Vec2, radius: f64) -> Vec<Vec2> {
        let dense: Vec<Vec2> = (0..n * 8)
            .map(|i| {
                let u = i as f64 / (n * 8 - 1) as f64;
                if u < 0.5 {
                    let a = PI * (1.0 - 2.0 * u) + PI / 2.0;
                    center + Vec2::new(0.0, -radius) + Vec2::new(a.cos(), a.sin()) * radius
                } else {
                    let a = -PI / 2.0 - PI * (2.0 * u - 1.0);
                    center + Vec2::new(0.0, radius) + Vec2::new(-a.cos(), a.sin()) * radius
                }
            })
            .collect();
        resample_uniform(&dense, n, false)
    }

    /// Smooth freehand-like stroke: a sum of incommensurate sines along a
    /// gently curving baseline.
    pub fn handdrawn(n: usize, start: Vec2, length: f64) -> Vec<Vec2> {
        let dense: Vec<Vec2> = (0..n * 8)
            .map(|i| {
                let x = length * i as f64 / (n * 8 - 1) as f64;
                let y = 45.0 * (2.0 * PI * x / 310.0).sin()
                    + 14.0 * (2.0 * PI * x / 127.0 + 0.7).sin()
                    + 0.00012 * x * x;
                start + Vec2::new(x, y)
            })
            .collect();
        resample_uniform(&dense, n, false)
    }

    /// Lemniscate of Gerono, self-intersecting at `center`.
    pub fn figure8(n: usize, center: Vec2, width: f64, height: f64) -> Vec<Vec2> {
        (0..n)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / n as f64 + PI / 2.0;
                center + Vec2::new(width * t.sin(), height * t.sin() * t.cos())
            })
            .collect()
    }

    /// Re-samples a polyline at `n` points equally spaced in arc length.
    pub fn resample_uniform(points: &[Vec2], n: usize, closed: bool) -> Vec<Vec2> {
        let mut pts = points.to_vec();
        if closed {
            pts.push(points[0]);
        }
        let mut s = vec![0.0];
        for w in pts.windows(2) {
            s.push(s.last().unwrap() + (w[1] - w[0]).norm());
        }
        let total = *s.last().unwrap();
        let count = if closed { n } else { n - 1 };
        let mut out = Vec::with_capacity(n);
        let mut j = 0;
        for i in 0..n {
            let target = total * i as f64 / count as f64;
            while j + 2 < s.len() && s[j + 1] < target {
                j += 1;
            }
            let seg = s[j + 1] - s[j];
            let r = if seg > 0.0 { ((target - s[j]) / seg).clamp(0.0, 1.0) } else { 0.0 };
            out.push(pts[j] + (pts[j + 1] - pts[j]) * r);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::shapes::*;
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn circle_oracle() {
        let pts = circle(100, Vec2::new(320.0, 240.0), 200.0);
        let open = build_path(&pts, false).unwrap();
        for q in &open.samples()[1..99] {
            assert_abs_diff_eq!(q.c, 0.005, epsilon = 1e-6);
        }
        let chord = 2.0 * 200.0 * (std::f64::consts::PI / 100.0).sin();
        assert_abs_diff_eq!(open.length(), 99.0 * chord, epsilon = 1e-9);
        assert!((open.length() - 2.0 * std::f64::consts::PI * 200.0 * 0.99).abs() < 1.0);

        let closed = build_path(&pts, true).unwrap();
        assert_abs_diff_eq!(closed.length(), 100.0 * chord, epsilon = 1e-9);
        for q in closed.samples() {
            assert_abs_diff_eq!(q.c, 0.005, epsilon = 1e-6);
            assert!(q.dcds.abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_and_square_wave() {
        let pts: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64, 2.0 * i as f64 + 1.0)).collect();
        let p = build_path(&pts, false).unwrap();
        assert!(p.samples().iter().all(|q| q.c == 0.0));

        let mut sq = Vec::new();
        for k in 0..4 {
            let x0 = 40.0 * k as f64;
            let (ya, yb) = if k % 2 == 0 { (0.0, 40.0) } else { (40.0, 0.0) };
            for i in 0..4 {
                sq.push(Vec2::new(x0, ya + (yb - ya) * i as f64 / 4.0));
            }
            for i in 0..4 {
                sq.push(Vec2::new(x0 + 10.0 * i as f64, yb));
            }
        }
        let p = build_path(&sq, false).unwrap();
        assert!(p.samples().iter().all(|q| q.c.is_finite() && q.dcds.is_finite()));
        assert_eq!(p.samples()[2].c, 0.0);
        assert!(p.samples()[4].c.abs() > 0.01);
    }

    #[test]
    fn build_errors() {
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 0.0);
        assert_eq!(build_path(&[a, b], false), Err(Error::TooFewPoints(2)));
        assert_eq!(build_path(&[a, b, b], false), Err(Error::DuplicatePoints(1, 2)));
        assert_eq!(build_path(&[a, b, a], true), Err(Error::DuplicatePoints(2, 0)));
    }

    #[test]
    fn projection_examples() {
        let path = build_path(&line(11, Vec2::new(0.0, 100.0), Vec2::new(100.0, 100.0)), false).unwrap();
        let on = project_onto_path(&Vec2::new(30.0, 100.0), &path, 30.0, 4).unwrap();
        assert_eq!(on.d, 0.0);
        assert_eq!(on.foot, Vec2::new(30.0, 100.0));

        let above = project_onto_path(&Vec2::new(42.0, 105.0), &path, 40.0, 4).unwrap();
        assert_abs_diff_eq!(above.d, 5.0, epsilon = 1e-12);
        assert_eq!(above.y_s, Vec2::new(0.0, 1.0));
        assert_abs_diff_eq!(above.s, 42.0, epsilon = 1e-12);
        let below = project_onto_path(&Vec2::new(42.0, 95.0), &path, 40.0, 4).unwrap();
        assert_abs_diff_eq!(below.d, -5.0, epsilon = 1e-12);

        assert_eq!(project_onto_path(&Vec2::new(42.0, 95.0), &path, 500.0, 4), Err(Error::EmptyWindow));
    }

    #[test]
    fn figure_eight_window_picks_branch() {
        let pts = figure8(400, Vec2::new(320.0, 240.0), 150.0, 80.0);
        let path = build_path(&pts, true).unwrap();
        // self-intersection at the centre is visited at two abscissae
        let near: Vec<f64> = path
            .samples()
            .iter()
            .filter(|q| (q.point() - Vec2::new(320.0, 240.0)).norm() < 1.0)
            .map(|q| q.s)
            .collect();
        assert!(near.len() >= 2);
        let (s1, s2) = (near[0], *near.last().unwrap());
        for s_pred in [s1, s2] {
            let proj = project_onto_path(&Vec2::new(320.3, 240.2), &path, s_pred, 8).unwrap();
            let half = 8.0 * path.mean_spacing();
            assert!((proj.s - s_pred).abs() <= half + path.mean_spacing());
        }
    }

    #[test]
    fn prediction_rules() {
        let open = build_path(&line(11, Vec2::zeros(), Vec2::new(200.0, 0.0)), false).unwrap();
        assert_abs_diff_eq!(predict_abscissa(&open, 100.0, 50.0, 0.01), 100.5, epsilon = 1e-12);
        assert_eq!(predict_abscissa(&open, 199.9, 50.0, 0.01), 200.0);
        let circ = build_path(&circle(100, Vec2::zeros(), 50.0), true).unwrap();
        let l = circ.length();
        assert_abs_diff_eq!(predict_abscissa(&circ, l - 0.1, 50.0, 0.01), 0.4, epsilon = 1e-9);
    }

    #[test]
    fn orientation_examples() {
        let x = Vec2::new(0.6, 0.8);
        let y = rot90(&x);
        assert_eq!(orientation_error(&x, &x, &y), 0.0);
        assert_abs_diff_eq!(orientation_error(&y, &x, &y), std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        let a = std::f64::consts::FRAC_PI_6;
        let v = x * a.cos() + y * a.sin();
        assert_abs_diff_eq!(orientation_error(&v, &x, &y), a, epsilon = 1e-12);
    }

    #[test]
    fn vertex_clamp_keeps_collinearity() {
        let pts = vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 10.0)];
        let path = build_path(&pts, false).unwrap();
        let p = Vec2::new(13.0, -4.0);
        let proj = project_onto_path(&p, &path, 10.0, 4).unwrap();
        assert_eq!(proj.foot, Vec2::new(10.0, 0.0));
        let off = p - proj.foot;
        assert!((off.x * proj.y_s.y - off.y * proj.y_s.x).abs() < 1e-12);
        assert_abs_diff_eq!(proj.d.abs(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let pts = circle(12, Vec2::new(1.5, -2.0), 7.0);
        let text = write_path_csv(&pts, true);
        assert!(text.starts_with("# closed\n"));
        let (back, closed) = read_path_csv(text.as_bytes()).unwrap();
        assert!(closed);
        assert_eq!(back, pts);
        let (_, closed) = read_path_csv("# a comment\n1,2\n3,4\n".as_bytes()).unwrap();
        assert!(!closed);
        assert!(read_path_csv("1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn resample_is_uniform() {
        let pts = handdrawn(2000, Vec2::new(60.0, 240.0), 520.0);
        let path = build_path(&pts, false).unwrap();
        let h = path.mean_spacing();
        for w in path.samples().windows(2) {
            assert!(((w[1].s - w[0].s) - h).abs() < 0.02 * h);
        }
    }
}
