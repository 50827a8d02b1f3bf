//! Parses a policy document and prints lint diagnostics and compiled rules.
//!
//! cargo run --example policy_lint [file.yaml]

use patrol::policy::{compile, lint, parse_policy_document, Severity};

const SAMPLE: &str = r#"
policy:
  name: block-shadow-access
  syscall: open
  match:
    path: "/etc/shadow"
    container: "*"
  action: deny
---
policy:
  name: shadow-any-container
  syscall: open
  match:
    path: "/etc/shadow"
    container: "web-*"
  action: alert
---
policy:
  name: argv-on-open
  syscall: open
  match:
    argv:
      contains: ["cat"]
  action: log
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let set = parse_policy_document(&text)?;
    println!("{} rule(s) parsed", set.len());
    for d in lint(&set) {
        println!("{d}");
    }
    if lint(&set).iter().any(|d| d.severity == Severity::Error) {
        return Err("policy set has errors".into());
    }
    let compiled = compile(&set)?;
    for syscall in compiled.syscalls() {
        let names: Vec<&str> = compiled.rules_for(syscall).iter().map(|r| r.name.as_str()).collect();
        println!("{syscall}: {names:?}");
    }
    println!("inline-critical syscalls: {:?}", compiled.critical_syscalls());
    println!("---\n{}", set.to_yaml());
    Ok(())
}
