//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! Tolerances are restated here so that a change in the library cannot
//! quietly loosen them.

use std::process::ExitCode;

use growcon::verify::{Cmp, CriterionOutcome, Verifier};

/// `(criterion, [(comparison, limit)])` in the order the checks are reported.
/// Runtime and structural checks included.
const TOLERANCES: &[(u8, &[(Cmp, f64)])] = &[
    (1, &[(Cmp::Le, 1e-12), (Cmp::Le, 2e-3), (Cmp::Le, 60.0)]),
    (2, &[(Cmp::Le, 2e-2), (Cmp::Ge, 0.5), (Cmp::Le, 0.0)]),
    (3, &[(Cmp::Le, 1.05)]),
    (4, &[(Cmp::Le, 0.15), (Cmp::Le, 300.0), (Cmp::Le, 0.15), (Cmp::Le, 300.0)]),
    (
        5,
        &[
            (Cmp::Ge, 2.0),
            (Cmp::Le, 3.0),
            (Cmp::Le, 0.05),
            (Cmp::Ge, 0.95),
            (Cmp::Le, 1e-10),
            (Cmp::Le, 1e-2),
            (Cmp::Le, 0.01),
        ],
    ),
    (6, &[(Cmp::Le, 0.0); 12]),
    (7, &[(Cmp::Le, 5e-3), (Cmp::Le, 1e-12)]),
    (8, &[(Cmp::Le, 5e-2), (Cmp::Ge, 0.3)]),
    (9, &[(Cmp::Le, 1.1), (Cmp::Ge, 1.0), (Cmp::Le, 5e-2)]),
    (10, &[(Cmp::Le, f64::MAX), (Cmp::Le, 0.05), (Cmp::Le, 0.05)]),
    (
        11,
        &[
            (Cmp::Le, 1e-15),
            (Cmp::Le, 0.0),
            (Cmp::Ge, 1e-6),
            (Cmp::Le, 1e-12),
            (Cmp::Le, 1e-12),
            (Cmp::Le, 1e-12),
            (Cmp::Le, 1e-12),
        ],
    ),
    (12, &[(Cmp::Ge, 100.0 - 1e-9), (Cmp::Le, 0.01)]),
];

fn judge(o: &CriterionOutcome, expected: &[(Cmp, f64)]) -> Result<(), String> {
    if let Some(e) = &o.error {
        return Err(e.clone());
    }
    if o.checks.len() != expected.len() {
        return Err(format!("{} checks reported, {} expected", o.checks.len(), expected.len()));
    }
    for (c, &(cmp, limit)) in o.checks.iter().zip(expected) {
        if c.cmp != cmp || c.limit != limit {
            return Err(format!("check {:?} uses limit {} instead of {limit}", c.name, c.limit));
        }
        let ok = match cmp {
            Cmp::Le => c.measured <= limit,
            Cmp::Ge => c.measured >= limit,
        };
        if !ok {
            return Err(c.to_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let only: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let verifier = Verifier::new();
    let mut failed = 0;
    for &(id, expected) in TOLERANCES {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let o = verifier.criterion(id);
        match judge(&o, expected) {
            Ok(()) => println!("PASS criterion {id:>2}: {} ({:.1} s)", o.title, o.seconds),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {id:>2}: {} ({:.1} s): {why}", o.title, o.seconds);
            }
        }
        for c in &o.checks {
            println!("       {c}");
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        println!("all acceptance criteria passed");
        ExitCode::SUCCESS
    }
}
