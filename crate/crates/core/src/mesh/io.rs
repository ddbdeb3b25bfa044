//! Line-oriented mesh text format.
//!
//! ```text
//! nodes <count> elements <count>
//! <x> <y> <boundary_flag>     (one line per node, creation order)
//! <i> <j> <k>                 (one line per element, creation order)
//! ```

use super::{Mesh, Point2};
use crate::util::fmt_e17;
use crate::{Error, Result};

impl Mesh {
    /// Serializes the mesh in the text format, deterministically.
    pub fn write_text(&self, out: &mut impl std::io::Write) -> Result<()> {
        writeln!(out, "nodes {} elements {}", self.n_nodes(), self.n_elements())?;
        for (k, p) in self.nodes().iter().enumerate() {
            let flag = if self.is_boundary_node(k) { 1 } else { 0 };
            writeln!(out, "{} {} {}", fmt_e17(p.x), fmt_e17(p.y), flag)?;
        }
        for el in self.elements() {
            let [a, b, c] = el.vertex_ids;
            writeln!(out, "{a} {b} {c}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("mesh text is ASCII")
    }

    /// Parses the text format and revalidates the mesh. The stored boundary
    /// flags must agree with the flags derived from the connectivity.
    pub fn from_text(text: &str) -> Result<Self> {
        let parse = |context: &str, message: String| Error::Parse {
            context: context.to_string(),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse("header", "empty input".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "nodes" || fields[2] != "elements" {
            return Err(parse("header", format!("expected `nodes <n> elements <m>`, got `{header}`")));
        }
        let n_nodes: usize =
            fields[1].parse().map_err(|e| parse("header", format!("node count: {e}")))?;
        let n_elements: usize =
            fields[3].parse().map_err(|e| parse("header", format!("element count: {e}")))?;

        let mut nodes = Vec::with_capacity(n_nodes);
        let mut flags = Vec::with_capacity(n_nodes);
        for k in 0..n_nodes {
            let line = lines
                .next()
                .ok_or_else(|| parse("nodes", format!("missing node line {k}")))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(parse("nodes", format!("node line {k}: expected `x y flag`")));
            }
            let x: f64 = parts[0].parse().map_err(|e| parse("nodes", format!("line {k}: {e}")))?;
            let y: f64 = parts[1].parse().map_err(|e| parse("nodes", format!("line {k}: {e}")))?;
            let flag: u8 = parts[2].parse().map_err(|e| parse("nodes", format!("line {k}: {e}")))?;
            if flag > 1 {
                return Err(parse("nodes", format!("line {k}: boundary flag must be 0 or 1")));
            }
            nodes.push(Point2::new(x, y));
            flags.push(flag == 1);
        }

        let mut element_vertices = Vec::with_capacity(n_elements);
        for k in 0..n_elements {
            let line = lines
                .next()
                .ok_or_else(|| parse("elements", format!("missing element line {k}")))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(parse("elements", format!("element line {k}: expected `i j k`")));
            }
            let mut ids = [0usize; 3];
            for (slot, part) in ids.iter_mut().zip(parts) {
                *slot = part.parse().map_err(|e| parse("elements", format!("line {k}: {e}")))?;
            }
            element_vertices.push(ids);
        }

        let mesh = Mesh::from_raw(nodes, element_vertices)?;
        for (k, &stored) in flags.iter().enumerate() {
            if stored != mesh.is_boundary_node(k) {
                return Err(parse(
                    "nodes",
                    format!("boundary flag of node {k} contradicts the connectivity"),
                ));
            }
        }
        Ok(mesh)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{generate_mesh, Domain};
    use super::*;

    #[test]
    fn text_roundtrip_is_exact_and_deterministic() {
        let mesh = generate_mesh(Domain::LShape, None, Some(0.2)).unwrap();
        let text = mesh.to_text();
        assert_eq!(text, mesh.to_text());
        let reread = Mesh::from_text(&text).unwrap();
        assert_eq!(reread.to_text(), text);
        assert_eq!(reread.n_elements(), mesh.n_elements());
        for (a, b) in reread.elements().iter().zip(mesh.elements()) {
            assert_eq!(a.vertex_ids, b.vertex_ids);
            assert!((a.width - b.width).abs() < 1e-15);
        }
    }

    #[test]
    fn corrupted_flags_are_rejected() {
        let mesh = generate_mesh(Domain::UnitSquare, None, Some(0.5)).unwrap();
        let text = mesh.to_text();
        // Flip the first boundary flag.
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let flipped = if lines[1].ends_with('1') {
            lines[1].replace(" 1", " 0")
        } else {
            lines[1].replace(" 0", " 1")
        };
        lines[1] = flipped;
        assert!(Mesh::from_text(&lines.join("\n")).is_err());
    }
}
