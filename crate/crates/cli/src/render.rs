//! Plain-text report rendering and CSV number formatting.

use cycledeg::degree::DegreeReport;
use cycledeg::malkin::{BifurcationFunction, ZeroKind};
use cycledeg::nalgebra::DMatrix;
use cycledeg::num_complex::Complex64;
use cycledeg::verify::ConditionSummary;

/// 17 significant digits: round-trip exact for f64.
pub fn csv_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn num(v: f64) -> String {
    format!("{v:.12}")
}

pub fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|c| num(*c)).collect();
    format!("({})", parts.join(", "))
}

pub fn complex(l: Complex64) -> String {
    if l.im >= 0.0 {
        format!("{:.12} + {:.12}i", l.re, l.im)
    } else {
        format!("{:.12} - {:.12}i", l.re, -l.im)
    }
}

pub fn print_matrix(m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:+.12e}", m[(i, j)]))
            .collect();
        println!("  [{}]", row.join(", "));
    }
}

pub fn print_zero_table(bf: &BifurcationFunction) {
    if bf.zeros().is_empty() {
        println!("no zeros detected");
        return;
    }
    println!("zeros of f:");
    println!("  theta_star          kind                bracket                      |f(theta_star)|");
    for z in bf.zeros() {
        let kind = match z.kind {
            ZeroKind::SignChange => "sign_change       ",
            ZeroKind::TangentialSuspect => "tangential_suspect",
        };
        println!(
            "  {: <19} {kind}  [{:.9}, {:.9}]  {:.3e}",
            format!("{:.12}", z.theta_star),
            z.bracket.0,
            z.bracket.1,
            z.residual
        );
    }
}

pub fn print_degree_report(report: &DegreeReport) {
    println!("n = {}", report.n);
    println!("d(psi, U) = {}", report.d_psi);
    if report.contributions.is_empty() {
        println!("no cycle-boundary contacts (empty sum)");
    } else {
        println!("contacts:");
        for c in &report.contributions {
            match (c.entering, c.theta_exit, c.interval_degree) {
                (true, Some(theta_exit), Some(deg)) => println!(
                    "  phase {}  entering  beta {}  theta_exit {}  interval degree {deg}",
                    num(c.phase),
                    c.beta,
                    num(theta_exit)
                ),
                _ => println!(
                    "  phase {}  non-entering (excluded from the sum)",
                    num(c.phase)
                ),
            }
        }
    }
    println!("total = {}", report.total);
}

pub fn degree_csv(report: &DegreeReport) -> String {
    let mut out = String::from("contact_phase,entering,beta,theta_exit,interval_degree\n");
    for c in &report.contributions {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            csv_num(c.phase),
            c.entering,
            c.beta,
            c.theta_exit.map(csv_num).unwrap_or_default(),
            c.interval_degree.map(|d| d.to_string()).unwrap_or_default(),
        ));
    }
    out
}

pub fn print_condition_summary(summary: &ConditionSummary) {
    println!("existence verdicts:");
    println!(
        "  nonzero-degree route: {} (total = {})",
        verdict(summary.degree_existence.applies),
        summary.degree_existence.total
    );
    println!(
        "  same-sign contact route: {} (d_psi = {}, {} entering contact(s))",
        verdict(summary.same_sign_route.applies),
        summary.same_sign_route.d_psi,
        summary.same_sign_route.contacts.len()
    );
    for (phase, f_in, f_out) in &summary.same_sign_route.contacts {
        println!(
            "    contact {}: f(entry) = {}, f(exit) = {}",
            num(*phase),
            num(*f_in),
            num(*f_out)
        );
    }
    if summary.sign_change_brackets.is_empty() {
        println!("  sign-change route: no brackets (f does not change sign)");
    } else {
        println!(
            "  sign-change route: applies with {} bracket(s); each forces a perturbed orbit near the cycle",
            summary.sign_change_brackets.len()
        );
        for b in &summary.sign_change_brackets {
            println!(
                "    bracket [{}, {}]: f = {} .. {}",
                num(b.theta_lo),
                num(b.theta_hi),
                num(b.f_lo),
                num(b.f_hi)
            );
        }
    }
    if !summary.certified_zeros.is_empty() {
        let zs: Vec<String> = summary.certified_zeros.iter().map(|z| num(*z)).collect();
        println!(
            "  simple/odd-order zero certification (sign change found): theta = {}",
            zs.join(", ")
        );
    }
}

fn verdict(applies: bool) -> &'static str {
    if applies {
        "applies"
    } else {
        "does not apply"
    }
}
