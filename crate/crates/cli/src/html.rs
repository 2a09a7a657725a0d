//! Standalone HTML choropleth. Geometry is projected to inline SVG, values
//! travel as the exact strings of the index export, and a small script
//! handles layer switching and popups. Nothing is fetched at view time.

use std::collections::HashMap;
use std::fmt::Write as _;

use geoses::spatial::UnitGeometry;

use crate::exports::IndexExport;

const VIEW_WIDTH: f64 = 1000.0;

pub struct MapInput<'a> {
    pub title: &'a str,
    /// Colors at -1, 0 and +1.
    pub palette: &'a [String; 3],
    pub export: &'a IndexExport,
    pub geometry_ids: &'a [String],
    pub shapes: &'a [UnitGeometry],
}

pub struct RenderedMap {
    pub html: String,
    pub warnings: Vec<String>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
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

fn rgb(hex: &str) -> [f64; 3] {
    let c = |i: usize| f64::from(u8::from_str_radix(&hex[i..i + 2], 16).unwrap_or(0));
    [c(1), c(3), c(5)]
}

/// Diverging color for `v` in [-1, 1]: palette[0] at -1, palette[1] at 0,
/// palette[2] at +1, linear in RGB in between.
pub fn diverging_color(v: f64, palette: &[String; 3]) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (from, to, t) = if v < 0.0 {
        (rgb(&palette[1]), rgb(&palette[0]), -v)
    } else {
        (rgb(&palette[1]), rgb(&palette[2]), v)
    };
    let mix = |k: usize| (from[k] + (to[k] - from[k]) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

struct Projection {
    x0: f64,
    y1: f64,
    scale: f64,
    height: f64,
}

impl Projection {
    fn fit(shapes: &[UnitGeometry]) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in shapes.iter().flatten().flat_map(|p| p.exterior.iter()) {
            x0 = x0.min(p[0]);
            y0 = y0.min(p[1]);
            x1 = x1.max(p[0]);
            y1 = y1.max(p[1]);
        }
        if !x0.is_finite() {
            return Self {
                x0: 0.0,
                y1: 0.0,
                scale: 1.0,
                height: VIEW_WIDTH,
            };
        }
        let span = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
        let scale = VIEW_WIDTH / span;
        Self {
            x0,
            y1,
            scale,
            height: ((y1 - y0) * scale).max(1.0),
        }
    }

    fn point(&self, p: &[f64; 2]) -> (f64, f64) {
        ((p[0] - self.x0) * self.scale, (self.y1 - p[1]) * self.scale)
    }

    fn path(&self, shape: &UnitGeometry) -> String {
        let mut d = String::new();
        for poly in shape {
            for ring in std::iter::once(&poly.exterior).chain(&poly.holes) {
                for (k, p) in ring.iter().enumerate() {
                    let (x, y) = self.point(p);
                    let _ = write!(d, "{}{x:.2} {y:.2}", if k == 0 { "M" } else { "L" });
                }
                d.push('Z');
            }
        }
        d
    }
}

/// JSON string literal safe inside a `<script>` element.
fn script_json(v: &serde_json::Value) -> String {
    serde_json::to_string(v)
        .expect("json serializes")
        .replace("</", "<\\/")
}

pub fn render(input: &MapInput) -> RenderedMap {
    let export = input.export;
    let geo_pos: HashMap<&str, usize> = input
        .geometry_ids
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();
    let export_ids: HashMap<&str, usize> = export
        .unit_ids
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i))
        .collect();

    let mut warnings = Vec::new();
    let no_geometry: Vec<&str> = export
        .unit_ids
        .iter()
        .map(String::as_str)
        .filter(|u| !geo_pos.contains_key(u))
        .collect();
    if !no_geometry.is_empty() {
        warnings.push(format!("units without geometry: {}", no_geometry.join(", ")));
    }
    let no_value: Vec<&str> = input
        .geometry_ids
        .iter()
        .map(String::as_str)
        .filter(|u| !export_ids.contains_key(u))
        .collect();
    if !no_value.is_empty() {
        warnings.push(format!("geometry without index values: {}", no_value.join(", ")));
    }

    let proj = Projection::fit(input.shapes);
    let mut paths = String::new();
    for (g, id) in input.geometry_ids.iter().enumerate() {
        let d = proj.path(&input.shapes[g]);
        match export_ids.get(id.as_str()) {
            Some(&i) => {
                let fill = diverging_color(export.values[0][i], input.palette);
                let _ = writeln!(
                    paths,
                    r#"<path class="unit" data-row="{i}" data-id="{}" fill="{fill}" d="{d}"><title>{}</title></path>"#,
                    escape(id),
                    escape(id)
                );
            }
            None => {
                let _ = writeln!(paths, r#"<path class="nodata" d="{d}"><title>{}</title></path>"#, escape(id));
            }
        }
    }

    let data = serde_json::json!({
        "layers": export.layers,
        "palette": input.palette,
        "units": export.unit_ids.iter().enumerate().map(|(i, id)| serde_json::json!({
            "id": id,
            "values": export.text.iter().map(|col| col[i].as_str()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });

    let mut radios = String::new();
    for (k, layer) in export.layers.iter().enumerate() {
        let _ = writeln!(
            radios,
            r#"<label><input type="radio" name="layer" value="{k}"{}> {}</label>"#,
            if k == 0 { " checked" } else { "" },
            escape(layer)
        );
    }

    let mut warn_html = String::new();
    if !warnings.is_empty() {
        warn_html.push_str("<section id=\"warnings\"><h2>Warnings</h2><ul>\n");
        for w in &warnings {
            let _ = writeln!(warn_html, "<li>{}</li>", escape(w));
        }
        warn_html.push_str("</ul></section>\n");
    }

    let [lo, mid, hi] = input.palette;
    let html = format!(
        r##"<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>
body {{ font-family: sans-serif; margin: 0; display: flex; }}
#side {{ width: 16em; padding: 1em; }}
#map {{ flex: 1; padding: 1em; }}
svg {{ width: 100%; height: auto; }}
path.unit {{ stroke: #555; stroke-width: 0.5; cursor: pointer; }}
path.unit.sel {{ stroke: #000; stroke-width: 2; }}
path.nodata {{ fill: #ccc; stroke: #999; stroke-width: 0.5; }}
#legend {{ height: 1em; background: linear-gradient(to right, {lo}, {mid}, {hi}); }}
#scale {{ display: flex; justify-content: space-between; font-size: 0.8em; }}
#popup table {{ border-collapse: collapse; }}
#popup td {{ padding: 0 0.5em; }}
#warnings {{ color: #8a1f11; }}
</style>
</head>
<body>
<div id="side">
<h1>{title}</h1>
<form id="layers">
{radios}</form>
<div id="legend"></div>
<div id="scale"><span>-1</span><span>0</span><span>+1</span></div>
<div id="popup"></div>
{warn_html}</div>
<div id="map">
<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.2} {h:.2}" fill-rule="evenodd">
{paths}</svg>
</div>
<script type="application/json" id="data">{data}</script>
<script>
(function () {{
  var data = JSON.parse(document.getElementById("data").textContent);
  function rgb(h) {{ return [1, 3, 5].map(function (i) {{ return parseInt(h.substr(i, 2), 16); }}); }}
  var pal = data.palette.map(rgb);
  function hex(n) {{ var s = n.toString(16); return s.length < 2 ? "0" + s : s; }}
  function color(v) {{
    v = Math.max(-1, Math.min(1, v));
    var to = v < 0 ? pal[0] : pal[2], t = Math.abs(v);
    return "#" + [0, 1, 2].map(function (k) {{ return hex(Math.round(pal[1][k] + (to[k] - pal[1][k]) * t)); }}).join("");
  }}
  var paths = document.querySelectorAll("path.unit");
  function show(layer) {{
    paths.forEach(function (p) {{
      p.setAttribute("fill", color(parseFloat(data.units[+p.dataset.row].values[layer])));
    }});
  }}
  document.getElementById("layers").addEventListener("change", function (e) {{ show(+e.target.value); }});
  var popup = document.getElementById("popup");
  paths.forEach(function (p) {{
    p.addEventListener("click", function () {{
      paths.forEach(function (q) {{ q.classList.remove("sel"); }});
      p.classList.add("sel");
      var u = data.units[+p.dataset.row];
      var rows = data.layers.map(function (l, k) {{
        return "<tr><td>" + l + "</td><td>" + u.values[k] + "</td></tr>";
      }}).join("");
      popup.innerHTML = "<h2></h2><table>" + rows + "</table>";
      popup.firstChild.textContent = u.id;
    }});
  }});
}})();
</script>
</body>
</html>
"##,
        title = escape(input.title),
        w = VIEW_WIDTH,
        h = proj.height,
        data = script_json(&data),
    );
    RenderedMap { html, warnings }
}

/// Pulls the embedded data block back out of a rendered report.
pub fn embedded_data(html: &str) -> Option<serde_json::Value> {
    let start = html.find(r#"<script type="application/json" id="data">"#)?;
    let rest = &html[start..];
    let open = rest.find('>')? + 1;
    let close = rest.find("</script>")?;
    serde_json::from_str(&rest[open..close].replace("<\\/", "</")).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DEFAULT_PALETTE;
    use geoses::spatial::grid_polygons;

    fn palette() -> [String; 3] {
        DEFAULT_PALETTE.map(str::to_owned)
    }

    #[test]
    fn color_scale_endpoints() {
        let p = palette();
        assert_eq!(diverging_color(-1.0, &p), "#b2182b");
        assert_eq!(diverging_color(0.0, &p), "#f7f7f7");
        assert_eq!(diverging_color(1.0, &p), "#2166ac");
        assert_eq!(diverging_color(5.0, &p), "#2166ac");
    }

    #[test]
    fn layers_popups_and_warnings() {
        let export = IndexExport {
            unit_ids: vec!["a".into(), "b<".into(), "c".into()],
            layers: vec!["geoses".into(), "income".into()],
            text: vec![
                vec!["-1".into(), "1".into(), "0.25".into()],
                vec!["0.5".into(), "-1".into(), "1".into()],
            ],
            values: vec![vec![-1.0, 1.0, 0.25], vec![0.5, -1.0, 1.0]],
        };
        let ids = vec!["a".to_owned(), "b<".to_owned()];
        let shapes = grid_polygons(2, 1);
        let p = palette();
        let out = render(&MapInput {
            title: "t",
            palette: &p,
            export: &export,
            geometry_ids: &ids,
            shapes: &shapes,
        });
        assert_eq!(out.html.matches(r#"class="unit""#).count(), 2);
        assert_eq!(out.html.matches(r#"name="layer""#).count(), 2);
        assert!(out.html.contains("b&lt;"));
        assert_eq!(out.warnings, vec!["units without geometry: c".to_owned()]);
        assert!(out.html.contains("id=\"warnings\""));
        let data = embedded_data(&out.html).unwrap();
        assert_eq!(data["units"][2]["values"][0], "0.25");
        assert!(!out.html.contains("src=") && !out.html.contains("href="));
    }
}
