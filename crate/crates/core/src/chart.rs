//! Chart emission for spectral sequence run reports.
//!
//! Charts use the Adams convention: total dimension n on the horizontal
//! axis, cohomological degree s on the vertical one. When a third grading
//! is present its value picks the symbol color, cycling through nine hues.
//! Glyph grammar: a filled square is a free summand, a circle with an
//! order label is a cyclic torsion summand, and tower summaries in a cell
//! corner use filled square / filled dot for full integral / torsion
//! towers and k nested open circles (or squares) for truncated ones.
//! Output is a pure function of the report, byte for byte.

use std::fmt::Write as _;

use crate::linalg::GroupDescriptor;
use crate::sseq::{DegreeEntry, DifferentialShape, RunReport, SseqError, TowerDescriptor};

// index mod 9, in the order black, brown, red, orange, yellow, green,
// blue, purple, gray
const PALETTE: [&str; 9] = [
    "black", "#8B4513", "red", "orange", "#C8B400", "green", "blue", "purple", "gray",
];

const CELL: i64 = 30;
const ML: i64 = 44;
const MT: i64 = 34;
const MR: i64 = 14;
const MB: i64 = 34;

// slot offsets for stacking several graded pieces inside one (n, s) cell
const SLOTS: [(i64, i64); 9] = [
    (0, 0),
    (10, 0),
    (-10, 0),
    (0, -10),
    (0, 10),
    (10, -10),
    (-10, 10),
    (10, 10),
    (-10, -10),
];

fn shape_name(shape: DifferentialShape) -> &'static str {
    match shape {
        DifferentialShape::Cell => "cell",
        DifferentialShape::Descent => "descent",
        DifferentialShape::Bockstein => "bockstein",
    }
}

fn color_of(entry: &DegreeEntry) -> &'static str {
    match entry.degree.get(2) {
        Some(&m) => PALETTE[(m.rem_euclid(9)) as usize],
        None => PALETTE[0],
    }
}

fn order_label(p: u64, e: u32) -> String {
    if e == 1 {
        p.to_string()
    } else if e <= 3 {
        (p as u128).pow(e).to_string()
    } else {
        format!("{}^{}", p, e)
    }
}

fn page_entries(report: &RunReport, page: i64) -> Result<&[DegreeEntry], SseqError> {
    report.entries(page).ok_or_else(|| {
        SseqError::BadSpec(format!("page {} was not recorded in this report", page))
    })
}

fn summand_count(g: &GroupDescriptor) -> usize {
    g.free + g.torsion.len()
}

fn tower_text(t: &TowerDescriptor) -> String {
    let mut parts = Vec::new();
    if t.free_z > 0 {
        parts.push(if t.free_z == 1 {
            "full integral tower".to_string()
        } else {
            format!("full integral tower x{}", t.free_z)
        });
    }
    if t.free_p > 0 {
        parts.push(if t.free_p == 1 {
            "full torsion tower".to_string()
        } else {
            format!("full torsion tower x{}", t.free_p)
        });
    }
    for &l in &t.truncated_z {
        parts.push(format!("integral tower of length {}", l));
    }
    for &k in &t.truncated_p {
        parts.push(format!("torsion tower of length {}", k));
    }
    parts.join(", ")
}

fn fmt_degree(d: &[i64]) -> String {
    let inner: Vec<String> = d.iter().map(|x| x.to_string()).collect();
    format!("[{}]", inner.join(","))
}

// nested rings shared by the circle and square truncation glyphs; more
// than three rings collapse to three plus a count label
fn nested(out: &mut String, cx: i64, cy: i64, k: u32, square: bool) {
    let rings = k.min(3);
    for j in 0..rings {
        let r = 2 + 2 * j as i64;
        if square {
            let _ = write!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>",
                cx - r,
                cy - r,
                2 * r,
                2 * r
            );
        } else {
            let _ = write!(
                out,
                "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>",
                cx, cy, r
            );
        }
    }
    if k > 3 {
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"7\" fill=\"black\">{}</text>",
            cx + 8,
            cy + 3,
            k
        );
    }
}

fn entry_glyph(out: &mut String, cx: i64, cy: i64, entry: &DegreeEntry) {
    let color = color_of(entry);
    let mut dx = 0i64;
    if entry.group.free > 0 {
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"6\" height=\"6\" fill=\"{}\"/>",
            cx - 3,
            cy - 3,
            color
        );
        if entry.group.free > 1 {
            let _ = write!(
                out,
                "<text x=\"{}\" y=\"{}\" font-size=\"7\" fill=\"{}\">{}</text>",
                cx + 4,
                cy - 3,
                color,
                entry.group.free
            );
        }
        dx += 8;
    }
    for &(p, e) in &entry.group.torsion {
        let _ = write!(
            out,
            "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"/>",
            cx + dx,
            cy,
            color
        );
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"7\" fill=\"{}\">{}</text>",
            cx + dx + 4,
            cy - 3,
            color,
            order_label(p, e)
        );
        dx += 8;
    }
}

/// Renders one recorded page as a standalone SVG document.
pub fn chart_svg(report: &RunReport, page: i64) -> Result<String, SseqError> {
    let entries = page_entries(report, page)?;
    let nmax = report.window.0[0];
    let smax = if report.window.0.len() > 1 {
        report.window.0[1]
    } else {
        0
    };
    let width = ML + (nmax + 1) * CELL + MR;
    let height = MT + (smax + 1) * CELL + MB;
    let x = |n: i64| ML + n * CELL + CELL / 2;
    let y = |s: i64| MT + (smax - s) * CELL + CELL / 2;

    let mut out = String::new();
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">",
        width, height, width, height
    );
    let _ = write!(
        out,
        "<style>text{{font-family:monospace}}</style>"
    );
    let _ = write!(
        out,
        "<text x=\"{}\" y=\"20\" font-size=\"12\" fill=\"black\">page {} of {}; window {}; {} differentials</text>",
        ML,
        page,
        report.final_page,
        fmt_degree(&report.window.0),
        shape_name(report.shape)
    );
    // grid
    for n in 0..=nmax + 1 {
        let gx = ML + n * CELL;
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#DDDDDD\" stroke-width=\"0.5\"/>",
            gx,
            MT,
            gx,
            MT + (smax + 1) * CELL
        );
    }
    for s in 0..=smax + 1 {
        let gy = MT + s * CELL;
        let _ = write!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#DDDDDD\" stroke-width=\"0.5\"/>",
            ML,
            gy,
            ML + (nmax + 1) * CELL,
            gy
        );
    }
    // axes
    let _ = write!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>",
        ML,
        MT + (smax + 1) * CELL,
        ML + (nmax + 1) * CELL,
        MT + (smax + 1) * CELL
    );
    let _ = write!(
        out,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" stroke-width=\"1\"/>",
        ML,
        MT,
        ML,
        MT + (smax + 1) * CELL
    );
    let step = if nmax > 16 {
        4
    } else if nmax > 8 {
        2
    } else {
        1
    };
    for n in (0..=nmax).step_by(step as usize) {
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" fill=\"black\" text-anchor=\"middle\">{}</text>",
            x(n),
            MT + (smax + 1) * CELL + 14,
            n
        );
    }
    for s in 0..=smax {
        let _ = write!(
            out,
            "<text x=\"{}\" y=\"{}\" font-size=\"9\" fill=\"black\" text-anchor=\"end\">{}</text>",
            ML - 6,
            y(s) + 3,
            s
        );
    }

    // graded pieces, stacked per (n, s) cell in recorded order
    let mut slot = 0usize;
    let mut last_ns = (i64::MIN, i64::MIN);
    for e in entries {
        let n = e.degree[0];
        let s = *e.degree.get(1).unwrap_or(&0);
        if n > nmax || s > smax || n < 0 || s < 0 {
            continue;
        }
        if (n, s) != last_ns {
            last_ns = (n, s);
            slot = 0;
        }
        if slot >= SLOTS.len() {
            if slot == SLOTS.len() {
                let _ = write!(
                    out,
                    "<text x=\"{}\" y=\"{}\" font-size=\"8\" fill=\"black\">+</text>",
                    x(n) + 11,
                    y(s) + 13
                );
            }
            slot += 1;
            continue;
        }
        let (dx, dy) = SLOTS[slot];
        entry_glyph(&mut out, x(n) + dx, y(s) + dy, e);
        slot += 1;
    }

    // tower summaries sit in the lower left corner of their cell
    if page == report.final_page {
        for t in &report.towers {
            let n = t.degree[0];
            let s = *t.degree.get(1).unwrap_or(&0);
            if n > nmax || s > smax || n < 0 || s < 0 {
                continue;
            }
            let mut cx = x(n) - CELL / 2 + 6;
            let cy = y(s) + CELL / 2 - 7;
            for _ in 0..t.tower.free_z {
                let _ = write!(
                    out,
                    "<rect x=\"{}\" y=\"{}\" width=\"5\" height=\"5\" fill=\"black\"/>",
                    cx - 2,
                    cy - 2
                );
                cx += 9;
            }
            for _ in 0..t.tower.free_p {
                let _ = write!(
                    out,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"black\"/>",
                    cx, cy
                );
                cx += 9;
            }
            for &l in &t.tower.truncated_z {
                nested(&mut out, cx, cy, l, true);
                cx += 9 + 2 * (l.min(3) as i64 - 1);
            }
            for &k in &t.tower.truncated_p {
                nested(&mut out, cx, cy, k, false);
                cx += 9 + 2 * (k.min(3) as i64 - 1);
            }
        }
    }
    out.push_str("</svg>");
    Ok(out)
}

/// Renders one recorded page as a plain-text grid followed by the degree
/// and tower listings. Cells show the summand count at that (n, s) spot.
pub fn chart_text(report: &RunReport, page: i64) -> Result<String, SseqError> {
    let entries = page_entries(report, page)?;
    let nmax = report.window.0[0];
    let smax = if report.window.0.len() > 1 {
        report.window.0[1]
    } else {
        0
    };
    let mut counts = std::collections::BTreeMap::<(i64, i64), usize>::new();
    for e in entries {
        let n = e.degree[0];
        let s = *e.degree.get(1).unwrap_or(&0);
        if n >= 0 && n <= nmax && s >= 0 && s <= smax {
            *counts.entry((n, s)).or_insert(0) += summand_count(&e.group);
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "page {} of {}; window {}; {} differentials",
        page,
        report.final_page,
        fmt_degree(&report.window.0),
        shape_name(report.shape)
    );
    for s in (0..=smax).rev() {
        let _ = write!(out, "{:>3} |", s);
        for n in 0..=nmax {
            match counts.get(&(n, s)) {
                None | Some(0) => out.push_str(" ."),
                Some(c) if *c <= 9 => {
                    let _ = write!(out, " {}", c);
                }
                Some(_) => out.push_str(" *"),
            }
        }
        out.push('\n');
    }
    let _ = write!(out, "    +");
    for _ in 0..=nmax {
        out.push_str("--");
    }
    out.push('\n');
    let _ = write!(out, "     ");
    for n in 0..=nmax {
        if n % 4 == 0 {
            let _ = write!(out, "{:>2}", n % 100);
        } else {
            out.push_str("  ");
        }
    }
    out.push('\n');
    let listed: Vec<&DegreeEntry> = entries
        .iter()
        .filter(|e| {
            e.degree[0] >= 0
                && e.degree[0] <= nmax
                && *e.degree.get(1).unwrap_or(&0) >= 0
                && *e.degree.get(1).unwrap_or(&0) <= smax
        })
        .collect();
    if !listed.is_empty() {
        out.push_str("\nclasses:\n");
        for e in listed {
            let _ = writeln!(out, "  {}  {}", fmt_degree(&e.degree), e.group);
        }
    }
    if page == report.final_page && !report.towers.is_empty() {
        out.push_str("\ntowers:\n");
        for t in &report.towers {
            let _ = writeln!(out, "  {}  {}", fmt_degree(&t.degree), tower_text(&t.tower));
        }
    }
    if page == report.final_page && !report.extensions.is_empty() {
        out.push_str("\nextensions:\n");
        for x in &report.extensions {
            let _ = writeln!(out, "  {}", x);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::Coefficients;
    use crate::graded::{Generator, MultiDegree, RingPresentation};
    use crate::sseq::{run, uaahss_lift, PageSpec, Rule, Stage};

    fn inv2() -> Coefficients {
        Coefficients::Inverted {
            primes: [2u64].into_iter().collect(),
        }
    }

    fn gens(list: &[(&str, &[i64])]) -> Vec<Generator> {
        list.iter()
            .map(|(n, d)| Generator {
                name: n.to_string(),
                degree: MultiDegree(d.to_vec()),
                inverted: false,
            })
            .collect()
    }

    fn mini_report() -> crate::sseq::RunReport {
        let ring = RingPresentation::new(
            inv2(),
            gens(&[
                ("a", &[0, 0, 1, 0]),
                ("tau", &[1, 1, 0, 0]),
                ("z", &[2, 0, 1, 1]),
            ]),
            vec!["tau^2".into(), "z*tau".into()],
        )
        .unwrap();
        let stage = Stage {
            from_page: 1,
            ring,
            rules: vec![Rule {
                page: 1,
                source: "z".into(),
                target: "tau".into(),
                citation: String::new(),
            }],
        };
        uaahss_lift(&[stage], &MultiDegree(vec![10, 2, 5, 5]), 2).unwrap()
    }

    #[test]
    fn svg_is_deterministic_and_colored_by_weight() {
        let report = mini_report();
        let a = chart_svg(&report, 2).unwrap();
        let b = chart_svg(&report, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.ends_with("</svg>"));
        // z^2 survives at weight 2, so a red square must appear
        assert!(a.contains("fill=\"red\""), "missing weight-2 color");
        // the tau tower is truncated at length one: one nested circle ring
        assert!(a.contains("fill=\"none\" stroke=\"black\""));
        let text = chart_text(&report, 2).unwrap();
        assert!(text.contains("towers:"));
        assert!(text.contains("torsion tower") || text.contains("integral tower"));
    }

    #[test]
    fn text_grid_matches_the_page() {
        let ring = RingPresentation::new(
            inv2(),
            gens(&[("z", &[2, 0, 1]), ("tau", &[1, 1, 0])]),
            vec!["tau^2".into(), "z*tau".into()],
        )
        .unwrap();
        let page = PageSpec {
            ring,
            shape: crate::sseq::DifferentialShape::Cell,
            start: 1,
        };
        let rules = [Rule {
            page: 1,
            source: "z".into(),
            target: "tau".into(),
            citation: String::new(),
        }];
        let report = run(&page, &rules, &MultiDegree(vec![8, 2, 4]), 2).unwrap();
        let text = chart_text(&report, 2).unwrap();
        let row0 = text
            .lines()
            .find(|l| l.starts_with("  0 |"))
            .expect("s = 0 row");
        // unit, z^2, z^3, z^4 survive; z and odd tau classes die
        assert_eq!(row0, "  0 | 1 . . . 1 . 1 . 1");
        assert!(text.contains("[4,0,2]  Z"));
        assert!(chart_text(&report, 9).is_err());
    }

    #[test]
    fn empty_page_gives_axes_only() {
        let ring = RingPresentation::new(
            inv2(),
            gens(&[("w", &[2, 0, 1])]),
            vec!["1".into()],
        )
        .unwrap();
        let page = PageSpec {
            ring,
            shape: crate::sseq::DifferentialShape::Cell,
            start: 1,
        };
        let report = run(&page, &[], &MultiDegree(vec![6, 2, 3]), 1).unwrap();
        let svg = chart_svg(&report, 1).unwrap();
        assert!(!svg.contains("<circle"));
        assert!(!svg.contains("<rect"));
        assert!(svg.contains("<line"));
    }
}
