//! Shared fixtures and independent oracles for integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use stalecomment_core::testutil::FixtureRepo;

/// Independent SZZ: parse `git diff -U0` by hand and blame each removed
/// line on its own with `git blame -L n,n`.
pub fn szz_oracle(f: &FixtureRepo, fix: &str, skip_blank: bool, skip_comments: bool, java_only: bool) -> BTreeSet<String> {
    let parent = f.git(&["rev-parse", &format!("{fix}^")]);
    let fix_time: i64 = f.git(&["show", "-s", "--format=%at", fix]).parse().unwrap();
    let patch = f.git(&["diff", "-U0", "-M", "--diff-algorithm=myers", &parent, fix]);

    let mut removed: Vec<(String, u32)> = Vec::new();
    let mut old_path: Option<String> = None;
    for line in patch.lines() {
        if let Some(rest) = line.strip_prefix("diff --git a/") {
            let (a, _) = rest.split_once(" b/").unwrap();
            old_path = Some(a.to_string());
        } else if let Some(rest) = line.strip_prefix("@@ -") {
            let old = rest.split_whitespace().next().unwrap();
            let (start, count) = match old.split_once(',') {
                Some((s, c)) => (s.parse::<u32>().unwrap(), c.parse::<u32>().unwrap()),
                None => (old.parse::<u32>().unwrap(), 1),
            };
            for n in start..start + count {
                removed.push((old_path.clone().unwrap(), n));
            }
        }
    }

    let mut out = BTreeSet::new();
    for (path, n) in removed {
        let is_java = path.ends_with(".java");
        if java_only && !is_java {
            continue;
        }
        let text = f.git(&["show", &format!("{parent}:{path}")]);
        let lines: Vec<&str> = text.split('\n').collect();
        let content = lines.get(n as usize - 1).copied().unwrap_or("");
        if skip_blank && content.trim().is_empty() {
            continue;
        }
        if skip_comments && is_java && comment_only_lines(&text)[n as usize - 1] {
            continue;
        }
        let range = format!("{n},{n}");
        let blamed = f.git(&["blame", "--root", "-s", "-l", "-L", &range, &parent, "--", &path]);
        let origin = blamed.split_whitespace().next().unwrap().to_string();
        let t: i64 = f.git(&["show", "-s", "--format=%at", &origin]).parse().unwrap();
        if origin != fix && t <= fix_time {
            out.insert(origin);
        }
    }
    out
}

/// Lines holding only comment text or whitespace, for sources whose string
/// literals contain no comment markers.
pub fn comment_only_lines(src: &str) -> Vec<bool> {
    let mut in_block = false;
    src.split('\n')
        .map(|line| {
            let mut code = String::new();
            let mut rest = line;
            loop {
                if in_block {
                    match rest.find("*/") {
                        Some(i) => {
                            rest = &rest[i + 2..];
                            in_block = false;
                        }
                        None => break,
                    }
                } else {
                    let block = rest.find("/*");
                    let line_c = rest.find("//");
                    match (block, line_c) {
                        (Some(b), Some(l)) if l < b => {
                            code.push_str(&rest[..l]);
                            break;
                        }
                        (_, Some(l)) if block.is_none() => {
                            code.push_str(&rest[..l]);
                            break;
                        }
                        (Some(b), _) => {
                            code.push_str(&rest[..b]);
                            rest = &rest[b + 2..];
                            in_block = true;
                        }
                        (None, None) => {
                            code.push_str(rest);
                            break;
                        }
                        _ => unreachable!(),
                    }
                }
            }
            code.trim().is_empty() && !line.trim().is_empty()
        })
        .collect()
}

pub struct Scenario {
    pub name: &'static str,
    pub repo: FixtureRepo,
    /// Hand-derived introducers per non-root fix under the default filters.
    pub expected: Vec<(String, BTreeSet<String>)>,
    /// Root commits whose message matches the fix keywords.
    pub roots: Vec<String>,
}

fn set(ids: &[&String]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

/// Straight history: edits, a comment-only fix, an add-only fix.
pub fn scenario_linear() -> Scenario {
    let f = FixtureRepo::new();
    f.write(
        "src/Calc.java",
        "class Calc {\n    /** Adds. */\n    int add(int a, int b) {\n        return a + b;\n    }\n\n    int sub(int a, int b) {\n        return a - b;\n    }\n}\n",
    );
    f.commit_day("initial calculator", 0.0);
    f.write(
        "src/Calc.java",
        "class Calc {\n    /** Adds. */\n    int add(int a, int b) {\n        return a + b + 1;\n    }\n\n    int sub(int a, int b) {\n        return a - b;\n    }\n}\n",
    );
    let c2 = f.commit_day("tweak add", 1.0);
    f.write(
        "src/Calc.java",
        "class Calc {\n    /** Adds. */\n    int add(int a, int b) {\n        return a + b + 1;\n    }\n\n    int sub(int a, int b) {\n        return b - a;\n    }\n\n    int mul(int a, int b) {\n        return a * b;\n    }\n}\n",
    );
    let c3 = f.commit_day("add mul, rework sub", 2.0);
    f.write(
        "src/Calc.java",
        "class Calc {\n    /** Adds. */\n    int add(int a, int b) {\n        return a + b;\n    }\n\n    int sub(int a, int b) {\n        return a - b;\n    }\n\n    int mul(int a, int b) {\n        return a * b;\n    }\n}\n",
    );
    let fix1 = f.commit_day("Fix off-by-one in add and operand order in sub", 3.0);
    f.write(
        "src/Calc.java",
        "class Calc {\n    /** Adds two ints. */\n    int add(int a, int b) {\n        return a + b;\n    }\n    int sub(int a, int b) {\n        return a - b;\n    }\n\n    int mul(int a, int b) {\n        return a * b;\n    }\n}\n",
    );
    let fix2 = f.commit_day("fix javadoc wording", 4.0);
    f.write(
        "src/Calc.java",
        "class Calc {\n    /** Adds two ints. */\n    int add(int a, int b) {\n        return a + b;\n    }\n    int sub(int a, int b) {\n        return a - b;\n    }\n\n    int mul(int a, int b) {\n        return a * b;\n    }\n\n    int neg(int a) {\n        return -a;\n    }\n}\n",
    );
    let fix3 = f.commit_day("Resolve missing negation", 5.0);
    f.write("README.md", "calc\n");
    let _c4 = f.commit_day("docs", 6.0);
    Scenario {
        name: "linear",
        repo: f,
        expected: vec![
            (fix1, set(&[&c2, &c3])),
            (fix2, BTreeSet::new()),
            (fix3, BTreeSet::new()),
        ],
        roots: vec![],
    }
}

/// A rename between introduction and fix, and a fix that deletes a file.
pub fn scenario_rename() -> Scenario {
    let f = FixtureRepo::new();
    let filler: String = (0..12).map(|i| format!("    int k{i}() {{ return {i}; }}\n")).collect();
    f.write("a/Old.java", &format!("class Old {{\n{filler}    int bad() {{ return 0; }}\n}}\n"));
    f.write("a/Tmp.java", "class Tmp {\n    int t() { return 1; }\n}\n");
    let c1 = f.commit_day("start", 0.0);
    f.write("a/Old.java", &format!("class Old {{\n{filler}    int bad() {{ return -1; }}\n}}\n"));
    let c2 = f.commit_day("change bad", 1.0);
    f.rename("a/Old.java", "b/New.java");
    f.commit_day("move file", 2.0);
    f.write("b/New.java", &format!("class Old {{\n{filler}    int bad() {{ return 1; }}\n}}\n"));
    f.remove("a/Tmp.java");
    let fix = f.commit_day("bug: bad returned wrong value; drop Tmp", 3.0);
    Scenario {
        name: "rename",
        repo: f,
        expected: vec![(fix, set(&[&c2, &c1]))],
        roots: vec![],
    }
}

/// Branches, a merge, non-Java files, a root "fix" and an introducer
/// dated after its fix.
pub fn scenario_branches() -> Scenario {
    let f = FixtureRepo::new();
    f.write("src/S.java", "class S {\n    int a() { return 1; }\n    int b() { return 2; }\n}\n");
    f.write("build.xml", "<project/>\n");
    let root = f.commit_day("fix: initial import", 0.0);
    f.git(&["checkout", "-q", "-b", "side"]);
    f.write("src/S.java", "class S {\n    int a() { return 10; }\n    int b() { return 2; }\n}\n");
    f.commit_day("side edit", 10.0);
    f.git(&["checkout", "-q", "main"]);
    f.write("build.xml", "<project name=\"x\"/>\n");
    f.commit_day("build tweak", 2.0);
    f.merge_at("side", "merge side", stalecomment_core::testutil::BASE_TIME + 11 * 86_400);
    f.write("src/S.java", "class S {\n    int a() { return 1; }\n    int b() { return 3; }\n}\n");
    f.write("build.xml", "<project name=\"y\"/>\n");
    // Dated before the side commit whose line it replaces.
    let fix = f.commit_day("Fixes crash in a() and b()", 9.0);
    Scenario {
        name: "branches",
        repo: f,
        expected: vec![(fix, set(&[&root]))],
        roots: vec![root],
    }
}

impl Scenario {
    pub fn commit_count(&self) -> usize {
        self.repo.git(&["rev-list", "--all", "--count"]).parse().unwrap()
    }
}

pub fn all_scenarios() -> Vec<Scenario> {
    vec![scenario_linear(), scenario_rename(), scenario_branches()]
}

fn calc_source(m1: u32, m2: u32, m3: u32) -> String {
    format!(
        "class Calc {{\n    /** First value. */\n    int m1() {{\n        return {m1};\n    }}\n\n    /** Second value. */\n    int m2() {{\n        return {m2};\n    }}\n\n    /** Third value. */\n    int m3() {{\n        return {m3};\n    }}\n}}\n"
    )
}

/// A repository whose full pipeline output can be worked out by hand.
///
/// | day | commit | m1 m2 m3 |
/// |-----|--------|----------|
/// | 0   | c0     | 0  0  0  |
/// | 1   | c1     | 1  0  0  |
/// | 3   | b      | 1  1  0  |
/// | 4   | fix    | 2  2  2  |
/// | 12  | d      | 3  2  2  |
///
/// The fix removes lines from c0 (m3), c1 (m1) and b (m2), so all three are
/// bug-introducing. The sample takes the whole population of 3 and the
/// non-bug pool {fix, d} is short, so both are taken.
///
/// Records (old, new, method) over (0,14]:
/// - c1: (c0,c1,m1)                                   bug, 1 day
/// - b: (c1,b,m2) (c0,b,m1) (c0,b,m2)                bug, 2-3 days
/// - fix: {b,c1,c0} x {m1,m2,m3}                     non-bug, 1-4 days
/// - d: (fix,d,m1) + {b,c1,c0} x {m1,m2,m3}          non-bug, 8-12 days
///
/// With m1 scripted Outdated, m2 Normal and m3 EarlierOutdated:
/// (0,7] a=2 b=2 c=6 d=3, OR 0.5; (7,14] a=0 b=0 c=7 d=3, OR undefined.
pub struct PipelineFixture {
    pub repo: FixtureRepo,
    pub c0: String,
    pub c1: String,
    pub b: String,
    pub fix: String,
    pub d: String,
}

pub const PIPELINE_TABLES: [[u64; 4]; 2] = [[2, 2, 6, 3], [0, 0, 7, 3]];

pub fn pipeline_fixture() -> PipelineFixture {
    let f = FixtureRepo::new();
    let step = |v: (u32, u32, u32), msg: &str, day: f64| {
        f.write("src/Calc.java", &calc_source(v.0, v.1, v.2));
        f.commit_day(msg, day)
    };
    let c0 = step((0, 0, 0), "start", 0.0);
    let c1 = step((1, 0, 0), "tune m1", 1.0);
    let b = step((1, 1, 0), "tune m2", 3.0);
    let fix = step((2, 2, 2), "fix wrong values in m1, m2 and m3", 4.0);
    let d = step((3, 2, 2), "polish m1", 12.0);
    PipelineFixture { repo: f, c0, c1, b, fix, d }
}

/// JSONL script: m1 Outdated, m2 Normal, m3 EarlierOutdated.
pub const PIPELINE_SCRIPT: &str = concat!(
    "{\"signature_key\":\"Calc#m1()\",\"consistent_with_new_code\":false,\"consistent_with_old_code\":true}\n",
    "{\"signature_key\":\"Calc#m2()\",\"consistent_with_new_code\":true,\"consistent_with_old_code\":true}\n",
    "{\"signature_key\":\"Calc#m3()\",\"consistent_with_new_code\":false,\"consistent_with_old_code\":false}\n",
);
