//! Parser round-trip oracle.
//!
//! A reference serializer, written independently of the parser, renders
//! randomly generated diff descriptions to unified-diff text. The parser
//! must recover exactly the generated structure, its own rendering must
//! reproduce every hunk body line, and parse(render(parse(d))) must be a
//! fixpoint.

use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

use diffjudge_core::diff::{
    classify_change_type, diff_stats, parse_unified_diff, ChangeType, LineKind,
};

// ---------------------------------------------------------------------------
// Independent diff description + reference serializer (the oracle side).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum GenKind {
    Context,
    Added,
    Removed,
}

#[derive(Debug, Clone)]
struct GenLine {
    kind: GenKind,
    content: String,
    no_newline: bool,
}

#[derive(Debug, Clone)]
struct GenHunk {
    old_start: u64,
    new_start: u64,
    section: String,
    lines: Vec<GenLine>,
}

#[derive(Debug, Clone)]
struct GenFile {
    old_path: Option<String>,
    new_path: Option<String>,
    hunks: Vec<GenHunk>,
}

fn reference_render(files: &[GenFile]) -> String {
    let mut out = String::new();
    for file in files {
        match &file.old_path {
            Some(p) => out.push_str(&format!("--- a/{p}\n")),
            None => out.push_str("--- /dev/null\n"),
        }
        match &file.new_path {
            Some(p) => out.push_str(&format!("+++ b/{p}\n")),
            None => out.push_str("+++ /dev/null\n"),
        }
        for hunk in &file.hunks {
            let old_count = hunk.lines.iter().filter(|l| l.kind != GenKind::Added).count();
            let new_count = hunk.lines.iter().filter(|l| l.kind != GenKind::Removed).count();
            out.push_str(&format!(
                "@@ -{},{} +{},{} @@",
                hunk.old_start, old_count, hunk.new_start, new_count
            ));
            if !hunk.section.is_empty() {
                out.push(' ');
                out.push_str(&hunk.section);
            }
            out.push('\n');
            for line in &hunk.lines {
                let marker = match line.kind {
                    GenKind::Context => ' ',
                    GenKind::Added => '+',
                    GenKind::Removed => '-',
                };
                out.push(marker);
                out.push_str(&line.content);
                out.push('\n');
                if line.no_newline {
                    out.push_str("\\ No newline at end of file\n");
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Random generation over the five strata languages plus an "other" bucket.
// ---------------------------------------------------------------------------

const EXTENSIONS: [&str; 7] = ["java", "py", "js", "ts", "kt", "tsx", "go"];
const DIRS: [&str; 4] = ["src", "src/main", "lib/util", ""];

// Line contents are chosen to stress the parser: header look-alikes, hunk
// markers, blanks after the marker, tabs.
const CONTENTS: [&str; 9] = [
    "let x = compute();",
    "",
    "--- not a header",
    "+++ also not a header",
    "@@ looks like a hunk @@",
    "    indented code",
    "\tafter tab",
    "} // closing",
    "return f.thenApply(u -> ok(render(u)))",
];

fn gen_path(rng: &mut StdRng) -> String {
    let dir = DIRS[rng.random_range(0..DIRS.len())];
    let ext = EXTENSIONS[rng.random_range(0..EXTENSIONS.len())];
    let stem = format!("File{}", rng.random_range(0..1000));
    if dir.is_empty() {
        format!("{stem}.{ext}")
    } else {
        format!("{dir}/{stem}.{ext}")
    }
}

fn gen_hunk(rng: &mut StdRng, pure_addition: bool) -> GenHunk {
    let line_count = rng.random_range(1..=8);
    let mut lines = Vec::new();
    for _ in 0..line_count {
        let kind = if pure_addition {
            if rng.random_bool(0.3) {
                GenKind::Context
            } else {
                GenKind::Added
            }
        } else {
            match rng.random_range(0..3) {
                0 => GenKind::Context,
                1 => GenKind::Added,
                _ => GenKind::Removed,
            }
        };
        lines.push(GenLine {
            kind,
            content: CONTENTS[rng.random_range(0..CONTENTS.len())].to_string(),
            no_newline: false,
        });
    }
    if rng.random_bool(0.2) {
        lines.last_mut().unwrap().no_newline = true;
    }
    let old_start = rng.random_range(1..500);
    GenHunk {
        old_start,
        new_start: old_start + rng.random_range(0..5),
        section: if rng.random_bool(0.5) {
            "fn context()".to_string()
        } else {
            String::new()
        },
        lines,
    }
}

fn gen_file(rng: &mut StdRng) -> GenFile {
    let pure_addition = rng.random_bool(0.4);
    let hunks: Vec<GenHunk> = (0..rng.random_range(0..=3))
        .map(|_| gen_hunk(rng, pure_addition))
        .collect();
    // New file, deleted file, rename, or plain change.
    let (old_path, new_path) = match rng.random_range(0..8) {
        0 if pure_addition => (None, Some(gen_path(rng))),
        1 if !hunks.is_empty() && !pure_addition => (Some(gen_path(rng)), None),
        2 => (Some(gen_path(rng)), Some(gen_path(rng))),
        _ => {
            let p = gen_path(rng);
            (Some(p.clone()), Some(p))
        }
    };
    GenFile {
        old_path,
        new_path,
        hunks,
    }
}

fn gen_corpus(seed: u64, count: usize) -> Vec<Vec<GenFile>> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..rng.random_range(1..=3)).map(|_| gen_file(&mut rng)).collect())
        .collect()
}

fn body_lines(files: &[GenFile]) -> Vec<String> {
    let mut out = Vec::new();
    for file in files {
        for hunk in &file.hunks {
            for line in &hunk.lines {
                let marker = match line.kind {
                    GenKind::Context => ' ',
                    GenKind::Added => '+',
                    GenKind::Removed => '-',
                };
                out.push(format!("{marker}{}", line.content));
                if line.no_newline {
                    out.push("\\ No newline at end of file".to_string());
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// The round-trip checks.
// ---------------------------------------------------------------------------

#[test]
fn parser_recovers_generated_structure_and_round_trips() {
    let corpus = gen_corpus(0x5eed, 120);
    assert!(corpus.len() >= 50);
    for (index, description) in corpus.iter().enumerate() {
        let text = reference_render(description);
        let parsed = parse_unified_diff(&text)
            .unwrap_or_else(|e| panic!("corpus diff {index} failed to parse: {e}\n{text}"));

        // Structure equality against the generated description.
        assert_eq!(parsed.files.len(), description.len(), "diff {index}");
        for (file, expected) in parsed.files.iter().zip(description) {
            assert_eq!(file.old_path, expected.old_path);
            assert_eq!(file.new_path, expected.new_path);
            assert_eq!(file.hunks.len(), expected.hunks.len());
            for (hunk, expected_hunk) in file.hunks.iter().zip(&expected.hunks) {
                assert_eq!(hunk.old_start, expected_hunk.old_start);
                assert_eq!(hunk.new_start, expected_hunk.new_start);
                assert_eq!(hunk.lines.len(), expected_hunk.lines.len());
                for (line, expected_line) in hunk.lines.iter().zip(&expected_hunk.lines) {
                    let expected_kind = match expected_line.kind {
                        GenKind::Context => LineKind::Context,
                        GenKind::Added => LineKind::Added,
                        GenKind::Removed => LineKind::Removed,
                    };
                    assert_eq!(line.kind, expected_kind);
                    assert_eq!(line.content, expected_line.content);
                    assert_eq!(line.no_newline, expected_line.no_newline);
                }
            }
        }

        // Hunk arithmetic invariants.
        for file in &parsed.files {
            for hunk in &file.hunks {
                assert_eq!(hunk.old_lines() as u64, hunk.old_count, "diff {index}");
                assert_eq!(hunk.new_lines() as u64, hunk.new_count, "diff {index}");
            }
        }

        // The implementation's rendering reproduces every body line in order.
        let rendered = parsed.render();
        let expected_bodies = body_lines(description);
        let mut remaining: &str = &rendered;
        let mut found = Vec::new();
        // Body lines are recovered positionally: skip the two header lines
        // and the hunk header of each hunk as the structure dictates.
        for file in &parsed.files {
            remaining = skip_line(remaining); // ---
            remaining = skip_line(remaining); // +++
            for hunk in &file.hunks {
                remaining = skip_line(remaining); // @@
                let mut body_count = hunk.lines.len()
                    + hunk.lines.iter().filter(|l| l.no_newline).count();
                while body_count > 0 {
                    let (line, rest) = take_line(remaining);
                    found.push(line.to_string());
                    remaining = rest;
                    body_count -= 1;
                }
            }
        }
        assert_eq!(found, expected_bodies, "diff {index} body lines diverge");

        // Fixpoint: parsing the rendering yields the same structure.
        let reparsed = parse_unified_diff(&rendered)
            .unwrap_or_else(|e| panic!("re-parse of rendering failed: {e}\n{rendered}"));
        assert_eq!(reparsed.files, parsed.files, "diff {index} fixpoint");
        assert_eq!(reparsed.stats, parsed.stats);

        // Stats against brute-force counts over the description.
        let changed: u64 = description
            .iter()
            .flat_map(|f| &f.hunks)
            .flat_map(|h| &h.lines)
            .filter(|l| l.kind != GenKind::Context)
            .count() as u64;
        assert_eq!(parsed.stats.changed_lines, changed);
        assert_eq!(parsed.stats.files_touched, description.len() as u64);
        assert_eq!(parsed.stats, diff_stats(&parsed.files));

        // Change-type classification matches a brute-force removal scan.
        for (file, expected) in parsed.files.iter().zip(description) {
            let any_removed = expected
                .hunks
                .iter()
                .flat_map(|h| &h.lines)
                .any(|l| l.kind == GenKind::Removed);
            let expected_type = if any_removed { ChangeType::Modify } else { ChangeType::Add };
            assert_eq!(classify_change_type(file), expected_type);
            assert_eq!(file.change_type, expected_type);
        }
    }
}

fn skip_line(text: &str) -> &str {
    match text.split_once('\n') {
        Some((_, rest)) => rest,
        None => "",
    }
}

fn take_line(text: &str) -> (&str, &str) {
    match text.split_once('\n') {
        Some((line, rest)) => (line, rest),
        None => (text, ""),
    }
}
