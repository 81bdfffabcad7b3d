//! A small PDF writer over a fixed layout model.
//!
//! Only what the reports need: Letter pages, the two standard Helvetica
//! faces, left-aligned text runs and horizontal rules. Output is byte-stable:
//! objects are numbered in page order and nothing time-dependent is written
//! except the caller-supplied creation date.

use std::fmt::Write as _;

pub const PAGE_WIDTH: f32 = 612.0;
pub const PAGE_HEIGHT: f32 = 792.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Font {
    Regular,
    Bold,
}

impl Font {
    fn resource(self) -> &'static str {
        match self {
            Font::Regular => "F1",
            Font::Bold => "F2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Text { x: f32, y: f32, size: f32, font: Font, text: String },
    Rule { x1: f32, x2: f32, y: f32 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Page {
    pub elements: Vec<Element>,
}

impl Page {
    pub fn text(&mut self, x: f32, y: f32, size: f32, font: Font, text: impl Into<String>) {
        self.elements.push(Element::Text { x, y, size, font, text: text.into() });
    }

    pub fn rule(&mut self, x1: f32, x2: f32, y: f32) {
        self.elements.push(Element::Rule { x1, x2, y });
    }

    fn content(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for el in &self.elements {
            match el {
                Element::Text { x, y, size, font, text } => {
                    out.extend_from_slice(
                        format!("BT /{} {} Tf {} {} Td (", font.resource(), num(*size), num(*x), num(*y))
                            .as_bytes(),
                    );
                    out.extend(escape(text));
                    out.extend_from_slice(b") Tj ET\n");
                }
                Element::Rule { x1, x2, y } => {
                    out.extend_from_slice(
                        format!("0.5 w {} {} m {} {} l S\n", num(*x1), num(*y), num(*x2), num(*y))
                            .as_bytes(),
                    );
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PdfDocument {
    pub title: String,
    pub producer: String,
    /// `D:YYYYMMDDHHmmSSZ`
    pub creation_date: String,
    pub pages: Vec<Page>,
}

fn num(v: f32) -> String {
    let rounded = (v * 100.0).round() / 100.0;
    if rounded.fract() == 0.0 {
        format!("{}", rounded as i64)
    } else {
        format!("{rounded:.2}")
    }
}

/// Encodes as WinAnsi (Latin-1 subset) and escapes string delimiters.
fn escape(text: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(text.len());
    for ch in text.chars() {
        let byte = match ch {
            '\u{20}'..='\u{7e}' | '\u{a0}'..='\u{ff}' => ch as u32 as u8,
            _ => b'?',
        };
        if matches!(byte, b'(' | b')' | b'\\') {
            out.push(b'\\');
        }
        out.push(byte);
    }
    out
}

impl PdfDocument {
    pub fn to_bytes(&self) -> Vec<u8> {
        // Object layout: 1 catalog, 2 pages, 3 info, 4 Helvetica, 5 Helvetica-Bold,
        // then (page, contents) pairs.
        let page_count = self.pages.len();
        let first_page = 6;
        let mut objects: Vec<Vec<u8>> = Vec::new();

        objects.push(b"<< /Type /Catalog /Pages 2 0 R >>".to_vec());
        let kids: Vec<String> =
            (0..page_count).map(|i| format!("{} 0 R", first_page + 2 * i)).collect();
        objects.push(
            format!("<< /Type /Pages /Kids [{}] /Count {} >>", kids.join(" "), page_count)
                .into_bytes(),
        );
        let mut info = b"<< /Title (".to_vec();
        info.extend(escape(&self.title));
        info.extend_from_slice(b") /Producer (");
        info.extend(escape(&self.producer));
        info.extend_from_slice(b") /CreationDate (");
        info.extend(escape(&self.creation_date));
        info.extend_from_slice(b") >>");
        objects.push(info);
        for base in ["Helvetica", "Helvetica-Bold"] {
            objects.push(
                format!(
                    "<< /Type /Font /Subtype /Type1 /BaseFont /{base} /Encoding /WinAnsiEncoding >>"
                )
                .into_bytes(),
            );
        }
        for (i, page) in self.pages.iter().enumerate() {
            let contents_id = first_page + 2 * i + 1;
            objects.push(
                format!(
                    "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {} {}] \
                     /Resources << /Font << /F1 4 0 R /F2 5 0 R >> >> /Contents {} 0 R >>",
                    num(PAGE_WIDTH),
                    num(PAGE_HEIGHT),
                    contents_id
                )
                .into_bytes(),
            );
            let stream = page.content();
            let mut obj = format!("<< /Length {} >>\nstream\n", stream.len()).into_bytes();
            obj.extend(stream);
            obj.extend_from_slice(b"endstream");
            objects.push(obj);
        }

        let mut out = b"%PDF-1.7\n%\xe2\xe3\xcf\xd3\n".to_vec();
        let mut offsets = Vec::with_capacity(objects.len());
        for (i, body) in objects.iter().enumerate() {
            offsets.push(out.len());
            out.extend_from_slice(format!("{} 0 obj\n", i + 1).as_bytes());
            out.extend_from_slice(body);
            out.extend_from_slice(b"\nendobj\n");
        }
        let xref_at = out.len();
        let mut xref = format!("xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1);
        for off in offsets {
            let _ = writeln!(xref, "{off:010} 00000 n ");
        }
        let _ = write!(
            xref,
            "trailer\n<< /Size {} /Root 1 0 R /Info 3 0 R >>\nstartxref\n{}\n%%EOF\n",
            objects.len() + 1,
            xref_at
        );
        out.extend_from_slice(xref.as_bytes());
        out
    }
}

/// Greedy word wrap on a character budget.
pub fn wrap(text: &str, width: usize) -> Vec<String> {
    let mut lines = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        if !current.is_empty() && current.len() + 1 + word.len() > width {
            lines.push(std::mem::take(&mut current));
        }
        if !current.is_empty() {
            current.push(' ');
        }
        current.push_str(word);
    }
    if !current.is_empty() {
        lines.push(current);
    }
    lines
}
