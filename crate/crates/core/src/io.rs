//! Image and point-cloud file formats.

use std::io::Write;

use crate::error::{Error, Result};
use crate::geom::{Point3, Rgb, Vec3};
use crate::num::Real;

/// Row-major image, top row first.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<S = f64> {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb<S>>,
}

impl<S: Real> Image<S> {
    pub fn filled(width: usize, height: usize, c: Rgb<S>) -> Self {
        Self {
            width,
            height,
            pixels: vec![c; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb<S> {
        self.pixels[y * self.width + x]
    }

    pub fn max_abs_diff(&self, other: &Self) -> S {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.pixels
            .iter()
            .zip(&other.pixels)
            .fold(S::zero(), |m, (a, b)| m.max(a.max_abs_diff(*b)))
    }

    /// Binary PPM (P6, maxval 255), each channel `floor(clamp(c) * 255 + 0.5)`.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for px in &self.pixels {
            for c in px.clamped().channels() {
                out.push(quantize(c));
            }
        }
        out
    }

    pub fn write_ppm(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_ppm())?;
        Ok(())
    }
}

fn quantize<S: Real>(c: S) -> u8 {
    let v = (c.to_f64_lossy() * 255.0 + 0.5).floor();
    v.clamp(0.0, 255.0) as u8
}

/// Parses a binary P6 file with maxval 255 back into `[0,1]` colors.
pub fn read_ppm(bytes: &[u8]) -> Result<Image<f64>> {
    let mut fields = Vec::new();
    let mut pos = 0usize;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse(1, "truncated PPM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P6" || fields[3] != "255" {
        return Err(parse(1, "expected P6 with maxval 255"));
    }
    let width: usize = fields[1].parse().map_err(|_| parse(1, "bad width"))?;
    let height: usize = fields[2].parse().map_err(|_| parse(1, "bad height"))?;
    let data = bytes.get(pos..pos + width * height * 3).ok_or_else(|| parse(1, "truncated PPM data"))?;
    let pixels = data
        .chunks_exact(3)
        .map(|c| Rgb::new(c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0))
        .collect();
    Ok(Image { width, height, pixels })
}

fn parse(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

/// Reads ASCII PLY (`element vertex` with `x`, `y`, `z` properties) or plain
/// `x y z` lines. Blank lines and `#` comments are skipped in the plain form.
pub fn parse_points<S: Real>(text: &str) -> Result<Vec<Point3<S>>> {
    if text.trim_start().starts_with("ply") {
        parse_ply(text)
    } else {
        parse_xyz(text)
    }
}

fn number<S: Real>(tok: &str, line: usize) -> Result<S> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse(line, &format!("not a number: {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse(line, "non-finite coordinate"));
    }
    Ok(S::lit(v))
}

fn parse_xyz<S: Real>(text: &str) -> Result<Vec<Point3<S>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 3 {
            return Err(parse(i + 1, "expected three coordinates"));
        }
        out.push(Vec3::new(number(toks[0], i + 1)?, number(toks[1], i + 1)?, number(toks[2], i + 1)?));
    }
    Ok(out)
}

fn parse_ply<S: Real>(text: &str) -> Result<Vec<Point3<S>>> {
    let mut lines = text.lines().enumerate();
    let mut format_ok = false;
    // (name, count, property names) for every element, in declaration order
    let mut elements: Vec<(String, usize, Vec<String>)> = Vec::new();
    loop {
        let (i, line) = lines.next().ok_or_else(|| parse(0, "missing end_header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", "ascii", _] => format_ok = true,
            ["format", ..] => return Err(parse(i + 1, "only ASCII PLY is supported")),
            ["element", name, count] => {
                let n = count.parse().map_err(|_| parse(i + 1, "bad element count"))?;
                elements.push((name.to_string(), n, Vec::new()));
            }
            ["property", "list", ..] => {
                let (name, _, props) = elements.last_mut().ok_or_else(|| parse(i + 1, "property before element"))?;
                if name == "vertex" {
                    return Err(parse(i + 1, "list properties on vertices are not supported"));
                }
                props.push("list".into());
            }
            ["property", _ty, pname] => {
                let (_, _, props) = elements.last_mut().ok_or_else(|| parse(i + 1, "property before element"))?;
                props.push(pname.to_string());
            }
            ["end_header"] => break,
            _ => return Err(parse(i + 1, &format!("unexpected header line {line:?}"))),
        }
    }
    if !format_ok {
        return Err(parse(1, "missing format line"));
    }
    let mut out = Vec::new();
    for (name, count, props) in &elements {
        if name != "vertex" {
            for _ in 0..*count {
                lines.next().ok_or_else(|| parse(0, "truncated element data"))?;
            }
            continue;
        }
        let col = |p: &str| {
            props
                .iter()
                .position(|q| q == p)
                .ok_or_else(|| parse(0, &format!("vertex element lacks property {p}")))
        };
        let (cx, cy, cz) = (col("x")?, col("y")?, col("z")?);
        for _ in 0..*count {
            let (i, line) = lines.next().ok_or_else(|| parse(0, "truncated vertex data"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < props.len() {
                return Err(parse(i + 1, "too few vertex values"));
            }
            out.push(Vec3::new(number(toks[cx], i + 1)?, number(toks[cy], i + 1)?, number(toks[cz], i + 1)?));
        }
        return Ok(out);
    }
    Err(parse(0, "no vertex element"))
}

/// ASCII PLY with `x y z` float properties.
pub fn write_ply<S: Real>(points: &[Point3<S>], w: &mut impl Write) -> Result<()> {
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", points.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z\nend_header")?;
    for p in points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_rounding() {
        let img: Image<f64> = Image {
            width: 2,
            height: 1,
            pixels: vec![Rgb::lit(0.0, 0.5, 1.0), Rgb::lit(-1.0, 2.0, 0.499 / 255.0)],
        };
        let bytes = img.to_ppm();
        assert_eq!(&bytes[..11], b"P6\n2 1\n255\n");
        assert_eq!(&bytes[11..], &[0, 128, 255, 0, 255, 0]);
        let back = read_ppm(&bytes).unwrap();
        assert_eq!(back.width, 2);
        assert_eq!(back.get(0, 0), Rgb::new(0.0, 128.0 / 255.0, 1.0));
    }

    #[test]
    fn plain_points() {
        let p: Vec<Point3<f64>> = parse_points("# cloud\n0 1 2\n\n3.5 -1 0 extra\n").unwrap();
        assert_eq!(p, vec![Vec3::lit(0.0, 1.0, 2.0), Vec3::lit(3.5, -1.0, 0.0)]);
        assert!(parse_points::<f64>("1 2\n").is_err());
        assert!(parse_points::<f64>("1 2 nan\n").is_err());
    }

    #[test]
    fn ply_with_extra_properties_and_elements() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\n\
                    property float nx\nproperty float x\nproperty float y\nproperty float z\n\
                    property uchar red\nelement face 1\nproperty list uchar int vertex_indices\n\
                    end_header\n9 0 1 2 255\n9 3 4 5 0\n3 0 1 1\n";
        let p: Vec<Point3<f64>> = parse_points(text).unwrap();
        assert_eq!(p, vec![Vec3::lit(0.0, 1.0, 2.0), Vec3::lit(3.0, 4.0, 5.0)]);
    }

    #[test]
    fn ply_round_trip() {
        let pts = vec![Vec3::lit(0.25, -1.5, 3.0), Vec3::lit(1e-3, 2.0, 0.0)];
        let mut buf = Vec::new();
        write_ply(&pts, &mut buf).unwrap();
        let back: Vec<Point3<f64>> = parse_points(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, pts);
    }

    #[test]
    fn binary_ply_is_rejected() {
        let text = "ply\nformat binary_little_endian 1.0\nelement vertex 1\nend_header\n";
        assert!(parse_points::<f64>(text).is_err());
    }
}
