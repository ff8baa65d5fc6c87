//! Task catalog shown by `list-tasks`.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct TaskInfo {
    pub kind: &'static str,
    pub summary: &'static str,
    /// The mathematical statement the task estimates or checks.
    pub statement: &'static str,
    pub parameters: &'static [(&'static str, &'static str)],
    pub csv: &'static str,
}

const N: (&str, &str) = ("n", "number of paths");

/// All task kinds, in a fixed order.
pub const CATALOG: &[TaskInfo] = &[
    TaskInfo {
        kind: "simulate",
        summary: "record path skeletons on [0, t_max]",
        statement: "thinning construction of the process with kernel n(x,h) restricted to |h| >= eps_cut",
        parameters: &[("x0", "start point"), ("paths", "number of paths")],
        csv: "path",
    },
    TaskInfo {
        kind: "estimate-exit",
        summary: "mean exit time of a domain",
        statement: "E^x tau_D, truncated at t_max",
        parameters: &[("x0", "start point inside the domain"), ("domain", "ball or cube"), N],
        csv: "estimate",
    },
    TaskInfo {
        kind: "estimate-hit",
        summary: "probability of hitting a target before leaving a container",
        statement: "P^y(T_A < tau_C)",
        parameters: &[("y", "start point"), ("target", "set A inside the container"), ("container", "set C"), N],
        csv: "estimate",
    },
    TaskInfo {
        kind: "estimate-occupation",
        summary: "expected time spent in sets before exit",
        statement: "E^x int_0^tau_D 1_B(X_s) ds",
        parameters: &[("x0", "start point"), ("sets", "sets B inside the domain"), ("domain", "set D"), N],
        csv: "estimate",
    },
    TaskInfo {
        kind: "estimate-tube",
        summary: "probability of staying in a tube around a polyline",
        statement: "P(sup_{s <= t0} |X_s - phi(s)| < eps)",
        parameters: &[("curve", "[[t, [x...]], ...] starting at t = 0"), ("eps", "tube radii"), N],
        csv: "estimate",
    },
    TaskInfo {
        kind: "estimate-resolvent",
        summary: "discounted occupation functionals",
        statement: "S_lambda f(x) = E^x int_0^inf e^{-lambda t} f(X_t) dt",
        parameters: &[("x0", "start point"), ("fields", "functions f"), ("lambda", "discount rate"), N],
        csv: "estimate",
    },
    TaskInfo {
        kind: "verify-scaling",
        summary: "exit-time scaling for constant-stable kernels",
        statement: "E tau_{B(0,r)} / r^alpha does not depend on r",
        parameters: &[("radii", "ball radii"), N],
        csv: "estimate",
    },
    TaskInfo {
        kind: "verify-hitting",
        summary: "hitting probability bounded below by the target volume",
        statement: "P^y(T_A < tau_{B(x,3)}) >= c |A| for A in B(x,1), y in B(x,2)",
        parameters: &[("center", "x"), ("targets", "sets A"), ("starts", "points y"), N],
        csv: "estimate",
    },
    TaskInfo {
        kind: "verify-support",
        summary: "positive tube probabilities around curves",
        statement: "P^{x0}(sup_{s <= t0} |X_s - phi(s)| < eps) > 0",
        parameters: &[("curves", "list of polylines"), ("eps", "tube radii"), N],
        csv: "estimate",
    },
    TaskInfo {
        kind: "verify-phi",
        summary: "occupation-time envelope over random sets",
        statement: "E^x int_0^tau_Q 1_B(X_s) ds >= phi(|B|) > 0 for B in Q(0,1), x in Q(0,1/2)",
        parameters: &[
            ("levels", "increasing measure levels in (0,1)"),
            ("sets_per_level", "random dyadic sets per level"),
            ("points_per_axis", "start points per axis in Q(0,1/2)"),
            ("set_seed", "seed of the random sets"),
            N,
        ],
        csv: "envelope",
    },
    TaskInfo {
        kind: "verify-mollify",
        summary: "bound inheritance and convergence of mollified kernels",
        statement: "n^eps keeps the kernel bounds; S^eps_lambda f * phi_eps -> S_lambda f and n^eps -> n as eps -> 0",
        parameters: &[
            ("x0", "start point of the occupation measure and resolvents"),
            ("f", "test function"),
            ("eps", "decreasing mollifier scales"),
            ("lambda", "discount rate"),
            ("n", "paths per resolvent"),
            ("m", "paths behind the occupation measure"),
            ("grid", "(x, h) evaluation grid"),
        ],
        csv: "convergence",
    },
    TaskInfo {
        kind: "mollify-build",
        summary: "build an occupation measure and tabulate mollified kernels",
        statement: "n^eps(x,h) = int phi_eps(x-y) n(y,h) mu(dy) / int phi_eps(x-y) mu(dy)",
        parameters: &[
            ("x0", "start point"),
            ("lambda", "discount rate"),
            ("m", "paths behind the occupation measure"),
            ("eps", "mollifier scales"),
            ("grid", "(x, h) evaluation grid"),
        ],
        csv: "kernel-table",
    },
];

pub fn find(kind: &str) -> Option<&'static TaskInfo> {
    CATALOG.iter().find(|t| t.kind == kind)
}

pub fn render_text(tasks: &[&TaskInfo]) -> String {
    let mut out = String::new();
    for t in tasks {
        out.push_str(&format!("{}\n  {}\n  statement: {}\n  csv: {}\n", t.kind, t.summary, t.statement, t.csv));
        for (p, doc) in t.parameters {
            out.push_str(&format!("    {p}: {doc}\n"));
        }
    }
    out
}
