//! Heatmaps of relevance maps as HTML or 24-bit ANSI text.
//!
//! Scores are divided by 1.1 times the largest magnitude in the document.
//! Positive relevance goes to the green channel, negative to red, blue is
//! always 0. Channels are scaled to 0..=255 with round-half-up.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::rmax;

/// Headroom factor: the strongest token gets channel value 1/1.1.
pub const HEADROOM: f64 = 1.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColoredToken {
    pub text: String,
    pub rgb: [f64; 3],
    pub bold: bool,
    pub underline: bool,
    pub italic: bool,
}

impl ColoredToken {
    pub fn rgb255(&self) -> [u8; 3] {
        self.rgb.map(quantize)
    }
}

/// Which tokens get typographic markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Markers {
    /// Bold the position of maximal relevance.
    pub bold_rmax: bool,
    pub ground_truth: BTreeSet<usize>,
    pub oov: BTreeSet<usize>,
}

impl Default for Markers {
    fn default() -> Self {
        Markers {
            bold_rmax: true,
            ground_truth: BTreeSet::new(),
            oov: BTreeSet::new(),
        }
    }
}

pub fn quantize(channel: f64) -> u8 {
    (channel * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn colorize<S: AsRef<str>>(
    scores: &[f64],
    tokens: &[S],
    markers: &Markers,
) -> Result<Vec<ColoredToken>> {
    if scores.len() != tokens.len() {
        return Err(Error::shape(format!(
            "{} scores for {} tokens",
            scores.len(),
            tokens.len()
        )));
    }
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("relevance map is not finite"));
    }
    let peak = scores.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let strongest = if markers.bold_rmax && !scores.is_empty() {
        Some(rmax(scores)?)
    } else {
        None
    };
    Ok(scores
        .iter()
        .zip(tokens)
        .enumerate()
        .map(|(t, (&phi, tok))| {
            let v = if peak > 0.0 {
                phi / (HEADROOM * peak)
            } else {
                0.0
            };
            let rgb = if v > 0.0 {
                [0.0, v, 0.0]
            } else if v < 0.0 {
                [-v, 0.0, 0.0]
            } else {
                [0.0; 3]
            };
            ColoredToken {
                text: tok.as_ref().to_string(),
                rgb,
                bold: strongest == Some(t),
                underline: markers.ground_truth.contains(&t),
                italic: markers.oov.contains(&t),
            }
        })
        .collect())
}

fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn html_paragraph(doc: &[ColoredToken]) -> String {
    let spans: Vec<String> = doc
        .iter()
        .map(|tok| {
            let [r, g, b] = tok.rgb255();
            let mut inner = escape_html(&tok.text);
            for (on, tag) in [(tok.italic, "i"), (tok.underline, "u"), (tok.bold, "b")] {
                if on {
                    inner = format!("<{tag}>{inner}</{tag}>");
                }
            }
            format!("<span style=\"color:rgb({r},{g},{b})\">{inner}</span>")
        })
        .collect();
    format!("<p>{}</p>\n", spans.join(" "))
}

/// Standalone page, one paragraph per document.
pub fn emit_html_all(docs: &[Vec<ColoredToken>]) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>relevance</title>\n</head>\n<body>\n",
    );
    for doc in docs {
        out.push_str(&html_paragraph(doc));
    }
    out.push_str("</body>\n</html>\n");
    out
}

pub fn emit_html(doc: &[ColoredToken]) -> String {
    emit_html_all(&[doc.to_vec()])
}

/// One line of foreground-colored tokens, each reset after itself.
pub fn emit_ansi(doc: &[ColoredToken]) -> String {
    let mut out = String::new();
    for (i, tok) in doc.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let [r, g, b] = tok.rgb255();
        let _ = write!(out, "\x1b[38;2;{r};{g};{b}m");
        for (on, code) in [(tok.bold, 1), (tok.italic, 3), (tok.underline, 4)] {
            if on {
                let _ = write!(out, "\x1b[{code}m");
            }
        }
        out.push_str(&tok.text);
        out.push_str("\x1b[0m");
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use regex::Regex;

    fn parse_rgb(html: &str) -> Vec<[u8; 3]> {
        let re = Regex::new(r"color:rgb\((\d+),(\d+),(\d+)\)").unwrap();
        re.captures_iter(html)
            .map(|c| [1, 2, 3].map(|i| c[i].parse().unwrap()))
            .collect()
    }

    #[test]
    fn strongest_token_reaches_headroom() {
        let doc = colorize(&[0.5, 2.0, -1.0], &["a", "b", "c"], &Markers::default()).unwrap();
        assert!((doc[1].rgb[1] - 1.0 / 1.1).abs() < 1e-12);
        assert_eq!(doc[1].rgb255(), [0, 232, 0]);
        assert!((doc[2].rgb[0] - 0.5 / 1.1).abs() < 1e-12);
        assert!(doc[1].bold && !doc[0].bold);
        // strongest negative sets the scale too
        let doc = colorize(&[-4.0, 1.0], &["a", "b"], &Markers::default()).unwrap();
        assert_eq!(doc[0].rgb255(), [232, 0, 0]);
    }

    #[test]
    fn zero_map_is_black() {
        let doc = colorize(&[0.0; 3], &["a", "b", "c"], &Markers::default()).unwrap();
        assert!(doc.iter().all(|t| t.rgb == [0.0; 3]));
        assert!(colorize(&[1.0], &["a", "b"], &Markers::default()).is_err());
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(0.9091), 232);
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(2.0), 255);
    }

    proptest! {
        #[test]
        fn colors_are_normalized(v in prop::collection::vec(-10.0f64..10.0, 1..20), c in 0.01f64..100.0) {
            let tokens = vec!["w"; v.len()];
            let doc = colorize(&v, &tokens, &Markers::default()).unwrap();
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let flipped: Vec<f64> = v.iter().map(|x| -x).collect();
            let doc_scaled = colorize(&scaled, &tokens, &Markers::default()).unwrap();
            let doc_flipped = colorize(&flipped, &tokens, &Markers::default()).unwrap();
            let mut top = 0.0f64;
            for ((a, b), f) in doc.iter().zip(&doc_scaled).zip(&doc_flipped) {
                prop_assert_eq!(a.rgb[2], 0.0);
                prop_assert!(a.rgb[0] == 0.0 || a.rgb[1] == 0.0);
                prop_assert_eq!(a.rgb255(), b.rgb255());
                prop_assert_eq!([a.rgb[1], a.rgb[0]], [f.rgb[0], f.rgb[1]]);
                top = top.max(a.rgb[0]).max(a.rgb[1]);
            }
            if v.iter().any(|&x| x != 0.0) {
                prop_assert!((top - 1.0 / 1.1).abs() < 1e-12);
            }
        }

        #[test]
        fn html_round_trips_colors(v in prop::collection::vec(-5.0f64..5.0, 0..15)) {
            let tokens: Vec<String> = (0..v.len()).map(|i| format!("t<{i}>")).collect();
            let doc = colorize(&v, &tokens, &Markers::default()).unwrap();
            let expected: Vec<[u8; 3]> = doc.iter().map(ColoredToken::rgb255).collect();
            prop_assert_eq!(parse_rgb(&emit_html(&doc)), expected);
        }
    }

    #[test]
    fn markers_render_as_tags() {
        let markers = Markers {
            bold_rmax: true,
            ground_truth: BTreeSet::from([1]),
            oov: BTreeSet::from([2]),
        };
        let doc = colorize(&[1.0, 0.0, -1.0], &["a&b", "c", "d"], &markers).unwrap();
        let html = emit_html(&doc);
        assert!(html.contains("<b>a&amp;b</b>"));
        assert!(html.contains("<u>c</u>"));
        assert!(html.contains("<i>d</i>"));
        let ansi = emit_ansi(&doc);
        assert!(ansi.starts_with("\x1b[38;2;0;232;0m\x1b[1ma&b\x1b[0m"));
        assert!(ansi.contains("\x1b[4mc\x1b[0m"));
        assert!(ansi.contains("\x1b[3md\x1b[0m"));
    }

    #[test]
    fn empty_document() {
        let doc = colorize::<&str>(&[], &[], &Markers::default()).unwrap();
        assert!(doc.is_empty());
        let html = emit_html(&doc);
        assert!(
            html.starts_with("<!DOCTYPE html>")
                && html.contains("<p></p>")
                && html.ends_with("</html>\n")
        );
        assert_eq!(emit_ansi(&doc), "\n");
    }
}
