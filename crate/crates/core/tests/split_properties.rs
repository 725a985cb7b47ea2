use proptest::prelude::*;

use repairloop::bench::split_tests;
use repairloop::Language;

#[derive(Debug, Clone)]
enum Stmt {
    Setup,
    Assert,
    LoopAssert,
}

fn stmt() -> impl Strategy<Value = Stmt> {
    prop_oneof![Just(Stmt::Setup), Just(Stmt::Assert), Just(Stmt::LoopAssert)]
}

fn assertion_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter(|l| l.contains("assert "))
        .map(|l| l.trim().to_string())
        .collect()
}

fn python_source(stmts: &[Stmt]) -> String {
    let mut body = String::new();
    for (i, s) in stmts.iter().enumerate() {
        match s {
            Stmt::Setup => body.push_str(&format!("    v{i} = [{i},\n          {i}]\n")),
            Stmt::Assert => body.push_str(&format!("    assert candidate({i}) == {i}, 'case {i}'\n")),
            Stmt::LoopAssert => body.push_str(&format!(
                "    for x in range({i}):\n        # inner\n        assert candidate(x) >= 0, \"loop {i}\"\n"
            )),
        }
    }
    format!("import math\n\n\ndef check(candidate):\n{body}\n\ncheck(f)\n")
}

fn cpp_source(stmts: &[Stmt]) -> String {
    let mut body = String::new();
    for (i, s) in stmts.iter().enumerate() {
        match s {
            Stmt::Setup => body.push_str(&format!("    vector<int> v{i} = {{{i}, {i}}};\n")),
            Stmt::Assert => body.push_str(&format!("    assert (f({i}) == {i});\n")),
            Stmt::LoopAssert => body.push_str(&format!(
                "    for (int x = 0; x < {i}; x++) {{\n        assert (f(x) >= 0); // loop {i}\n    }}\n"
            )),
        }
    }
    format!("#undef NDEBUG\n#include<assert.h>\nint main(){{\n{body}}}\n")
}

fn check(source: &str, language: Language, stmts: &[Stmt]) -> Result<(), TestCaseError> {
    let asserting = stmts.iter().filter(|s| !matches!(s, Stmt::Setup)).count();
    match split_tests(source, language) {
        Err(_) => prop_assert_eq!(asserting, 0),
        Ok(cases) => {
            prop_assert_eq!(cases.len(), asserting);
            let recovered: Vec<String> = cases
                .iter()
                .flat_map(|c| assertion_lines(c.snippet().unwrap()))
                .collect();
            prop_assert_eq!(recovered, assertion_lines(source));
            let header = match language {
                Language::Python => "def check(candidate):",
                Language::Cpp => "int main(){",
            };
            for case in &cases {
                let has_header = case.snippet().unwrap().contains(header);
                prop_assert!(has_header);
            }
        }
    }
    Ok(())
}

proptest! {
    #[test]
    fn python_assertions_recovered_once_in_order(stmts in prop::collection::vec(stmt(), 0..10)) {
        check(&python_source(&stmts), Language::Python, &stmts)?;
    }

    #[test]
    fn cpp_assertions_recovered_once_in_order(stmts in prop::collection::vec(stmt(), 0..10)) {
        check(&cpp_source(&stmts), Language::Cpp, &stmts)?;
    }

    #[test]
    fn setup_replicated_into_later_cases(stmts in prop::collection::vec(stmt(), 1..10)) {
        let source = python_source(&stmts);
        if let Ok(cases) = split_tests(&source, Language::Python) {
            let mut case = 0;
            for (i, s) in stmts.iter().enumerate() {
                if matches!(s, Stmt::Setup) {
                    let marker = format!("v{i} = [");
                    for later in &cases[case..] {
                        let carried = later.snippet().unwrap().contains(&marker);
                        prop_assert!(carried);
                    }
                } else {
                    case += 1;
                }
            }
        }
    }
}
