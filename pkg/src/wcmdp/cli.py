"""Command-line workbench.

Subcommands: ``validate``, ``relax``, ``check-degeneracy``, ``simulate``,
``rate-study``, ``casestudy``.  Models come from a JSON file (``--model``)
or a builtin preset (``--preset counterexample:b=0.3``,
``--preset screening:scarce,fairness``).  Every stochastic command requires
an explicit ``--seed``; repeated runs with the same configuration produce
byte-identical CSV.  Exit codes: 0 ok, 1 error, 2 degenerate verdict (from
``check-degeneracy`` only).
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .degeneracy import is_nondegenerate
from .instances import load_preset, scenario_params, build_screening_model
from .model import load_model, validate_model
from .policies import POLICY_KINDS, make_policy
from .relaxation import solve_relaxed
from .simulator import CSV_HEADER, derive_seed, evaluate, rate_study


def _load_source(args):
    """Resolve --model / --preset to (model, m0 or None, label)."""
    if getattr(args, "preset", None):
        return load_preset(args.preset)
    if getattr(args, "model", None):
        try:
            model = load_model(args.model)
        except json.JSONDecodeError as exc:
            raise SystemExit(
                f"error: {args.model}: parse error at line {exc.lineno}, "
                f"column {exc.colno}: {exc.msg}"
            )
        m0 = None
        if getattr(args, "m0", None):
            m0 = np.array([float(x) for x in args.m0.split(",")])
        else:
            with open(args.model, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
            if "m0" in raw:
                m0 = np.asarray(raw["m0"], dtype=float)
        return model, m0, args.model
    raise SystemExit("error: provide --model PATH or --preset NAME")


def _require_m0(m0):
    if m0 is None:
        raise SystemExit(
            "error: this command needs an initial configuration; add an "
            '"m0" key to the model file or pass --m0 "0.5,0.5"'
        )
    return m0


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    model, _, label = _load_source(args)
    violations = validate_model(model)
    if not violations:
        print(f"{label}: ok ({model.d} states, {model.num_actions} actions, "
              f"{model.J} budgets, horizon {model.horizon})")
        return 0
    for v in violations:
        print(f"{label}: {v}")
    return 1


def cmd_relax(args) -> int:
    model, m0, _ = _load_source(args)
    m0 = _require_m0(m0)
    sol = solve_relaxed(model, m0, args.t0)
    print(f"{sol.value:.10f}")
    if args.out:
        _write(args.out, json.dumps(sol.to_json()) + "\n")
    return 0


def cmd_check_degeneracy(args) -> int:
    model, m0, _ = _load_source(args)
    m0 = _require_m0(m0)
    sol = solve_relaxed(model, m0, 0)
    report = is_nondegenerate(model, sol, delta=args.tol)
    print(report)
    return 0 if report.passed else 2


def cmd_simulate(args) -> int:
    model, m0, _ = _load_source(args)
    m0 = _require_m0(m0)
    policy = make_policy(args.policy, rounding=args.rounding)
    v_rel = solve_relaxed(model, m0, 0).value
    lines = [CSV_HEADER]
    for N in args.N:
        res = evaluate(model, policy, m0, N, args.reps,
                       derive_seed(args.seed, N, "campaign"), v_rel=v_rel)
        lines.append(res.csv_row())
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.csv:
        _write(args.csv, text)
    return 0


def cmd_rate_study(args) -> int:
    model, m0, _ = _load_source(args)
    m0 = _require_m0(m0)
    policy = make_policy(args.policy, rounding=args.rounding)
    study = rate_study(model, policy, m0, args.N, args.reps, args.seed)
    text = study.csv()
    print(text, end="")
    print(f"loglog slope: {study.slope!r}")
    if args.csv:
        _write(args.csv, text)
    if args.svg:
        series = [(args.policy, [(c.N, c.gap, c.ci95) for c in study.campaigns])]
        _write(args.svg, svg_rate_plot(series, study.slope))
    return 0


CASESTUDY_HEADER = "scenario,fairness,policy,N,mean,ci95,gap,updates_mean"


def cmd_casestudy(args) -> int:
    if args.scenario_file:
        with open(args.scenario_file, "r", encoding="utf-8") as fh:
            preset = json.load(fh)
        scenario = preset["scenario"]
        fairness_settings = [bool(preset.get("fairness", False))]
    else:
        scenario = args.scenario
        fairness_settings = {"on": [True], "off": [False],
                             "both": [False, True]}[args.fairness]
    lines = [CASESTUDY_HEADER]
    panels = []
    for fairness in fairness_settings:
        inst = build_screening_model(scenario_params(scenario, fairness))
        v_rel = solve_relaxed(inst.model, inst.m0, 0).value
        flag = "on" if fairness else "off"
        for kind in ("lp-update-selective", "occupation"):
            policy = make_policy(kind, rounding=args.rounding)
            pts = []
            for N in args.N:
                res = evaluate(
                    inst.model, policy, inst.m0, N, args.reps,
                    derive_seed(args.seed, N, f"{flag}:{kind}"), v_rel=v_rel,
                )
                lines.append(
                    f"{scenario},{flag},{kind},{N},{res.mean!r},"
                    f"{res.ci95!r},{res.gap!r},{res.updates_mean!r}"
                )
                pts.append((N, res.mean, res.ci95))
            panels.append((f"{kind} fairness={flag}", pts))
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.csv:
        _write(args.csv, text)
    if args.svg:
        _write(args.svg, svg_value_plot(scenario, panels))
    return 0


# ---------------------------------------------------------------------------
# SVG output (no plotting dependency; numbers mirror the CSV exactly)
# ---------------------------------------------------------------------------

_W, _H = 800, 600
_ML, _MR, _MT, _MB = 80, 30, 40, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _axis_ticks(lo, hi):
    lo_e = math.floor(lo)
    hi_e = math.ceil(hi)
    return list(range(lo_e, hi_e + 1))


def _scaler(vals_x, vals_y):
    x0, x1 = min(vals_x), max(vals_x)
    y0, y1 = min(vals_y), max(vals_y)
    if x1 - x0 < 1e-9:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad_x = 0.06 * (x1 - x0)
    pad_y = 0.08 * (y1 - y0)
    x0, x1 = x0 - pad_x, x1 + pad_x
    y0, y1 = y0 - pad_y, y1 + pad_y

    def sx(x):
        return _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)

    def sy(y):
        return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MB - _MT)

    return sx, sy, (x0, x1, y0, y1)


def _svg_frame(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">\n'
        f'<rect width="{_W}" height="{_H}" fill="white"/>\n'
        f'<text x="{_W / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="16">{title}</text>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def svg_rate_plot(series, slope) -> str:
    """Log-log gap-vs-N plot with CI whiskers and -1/2, -1 reference slopes."""
    pts = [(N, g, ci) for _, data in series for (N, g, ci) in data if g > 0]
    if not pts:
        return _svg_frame(["<!-- no positive gaps to plot -->"], "rate study")
    lx = [math.log10(p[0]) for p in pts]
    ly = [math.log10(p[1]) for p in pts]
    sx, sy, (x0, x1, y0, y1) = _scaler(lx, ly)
    body = []
    for e in _axis_ticks(x0, x1):
        if x0 <= e <= x1:
            body.append(
                f'<line x1="{sx(e):.1f}" y1="{sy(y0):.1f}" x2="{sx(e):.1f}" '
                f'y2="{sy(y1):.1f}" stroke="#ddd"/>'
                f'<text x="{sx(e):.1f}" y="{_H - _MB + 20}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="12">1e{e}</text>'
            )
    for e in _axis_ticks(y0, y1):
        if y0 <= e <= y1:
            body.append(
                f'<line x1="{sx(x0):.1f}" y1="{sy(e):.1f}" x2="{sx(x1):.1f}" '
                f'y2="{sy(e):.1f}" stroke="#ddd"/>'
                f'<text x="{_ML - 8}" y="{sy(e):.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="12">1e{e}</text>'
            )
    # reference slopes anchored at the first plotted point
    ax, ay = lx[0], ly[0]
    for ref, dash in ((-0.5, "6,3"), (-1.0, "2,3")):
        bx = x1 - 0.02
        by = ay + ref * (bx - ax)
        body.append(
            f'<line x1="{sx(ax):.1f}" y1="{sy(ay):.1f}" x2="{sx(bx):.1f}" '
            f'y2="{sy(by):.1f}" stroke="#999" stroke-dasharray="{dash}"/>'
            f'<text x="{sx(bx) - 4:.1f}" y="{sy(by) - 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11" fill="#666">slope {ref}</text>'
        )
    for i, (label, data) in enumerate(series):
        color = _COLORS[i % len(_COLORS)]
        for N, g, ci in data:
            if g <= 0:
                continue
            px, py = sx(math.log10(N)), sy(math.log10(g))
            hi = math.log10(g + ci)
            lo = math.log10(max(g - ci, 10 ** y0))
            body.append(
                f'<line x1="{px:.1f}" y1="{sy(lo):.1f}" x2="{px:.1f}" '
                f'y2="{sy(hi):.1f}" stroke="{color}"/>'
            )
            body.append(
                f'<circle cx="{px:.1f}" cy="{py:.1f}" r="4" fill="{color}" '
                f'data-n="{N}" data-gap="{g!r}" data-ci="{ci!r}"/>'
            )
        body.append(
            f'<text x="{_W - _MR - 4}" y="{_MT + 16 * (i + 1)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12" fill="{color}">{label}</text>'
        )
    return _svg_frame(body, f"optimality gap vs N (fitted slope {slope:.3f})")


def svg_value_plot(title, panels) -> str:
    """Linear value-vs-log-N comparison plot for the case study."""
    pts = [(N, v, ci) for _, data in panels for (N, v, ci) in data]
    if not pts:
        return _svg_frame(["<!-- empty -->"], title)
    lx = [math.log10(p[0]) for p in pts]
    vy = [p[1] for p in pts]
    sx, sy, (x0, x1, y0, y1) = _scaler(lx, vy)
    body = []
    for e in _axis_ticks(x0, x1):
        if x0 <= e <= x1:
            body.append(
                f'<line x1="{sx(e):.1f}" y1="{sy(y0):.1f}" x2="{sx(e):.1f}" '
                f'y2="{sy(y1):.1f}" stroke="#ddd"/>'
                f'<text x="{sx(e):.1f}" y="{_H - _MB + 20}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="12">N=1e{e}</text>'
            )
    for i, (label, data) in enumerate(panels):
        color = _COLORS[i % len(_COLORS)]
        path = " ".join(
            f"{'M' if k == 0 else 'L'}{sx(math.log10(N)):.1f},{sy(v):.1f}"
            for k, (N, v, _) in enumerate(data)
        )
        body.append(f'<path d="{path}" fill="none" stroke="{color}"/>')
        for N, v, ci in data:
            px = sx(math.log10(N))
            body.append(
                f'<line x1="{px:.1f}" y1="{sy(v - ci):.1f}" x2="{px:.1f}" '
                f'y2="{sy(v + ci):.1f}" stroke="{color}"/>'
                f'<circle cx="{px:.1f}" cy="{sy(v):.1f}" r="4" fill="{color}" '
                f'data-n="{N}" data-mean="{v!r}" data-ci="{ci!r}"/>'
            )
        body.append(
            f'<text x="{_W - _MR - 4}" y="{_MT + 16 * (i + 1)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12" fill="{color}">{label}</text>'
        )
    return _svg_frame(body, f"case study: {title}")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wcmdp",
        description="LP-update policy workbench for weakly coupled MDPs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    src = argparse.ArgumentParser(add_help=False)
    src.add_argument("--model", help="model JSON file")
    src.add_argument("--preset", help="builtin preset, e.g. counterexample:b=0.3")
    src.add_argument("--m0", help="initial configuration, comma-separated")
    src.add_argument("--tol", type=float, default=None,
                     help="tolerance override where applicable")

    sim = argparse.ArgumentParser(add_help=False)
    sim.add_argument("--policy", choices=POLICY_KINDS, default="lp-update-full")
    sim.add_argument("--rounding", default="floor",
                     choices=("floor", "min-distance", "randomized"))
    sim.add_argument("--N", type=_int_list, required=True,
                     help="comma-separated population sizes")
    sim.add_argument("--reps", type=int, required=True)
    sim.add_argument("--seed", type=int, required=True,
                     help="master seed (no wall-clock seeding)")
    sim.add_argument("--csv", help="write results CSV here")
    sim.add_argument("--svg", help="write plot SVG here")

    p = sub.add_parser("validate", parents=[src],
                       help="check model invariants")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("relax", parents=[src], help="solve the relaxed LP")
    p.add_argument("--t0", type=int, default=0)
    p.add_argument("--out", help="write the trajectory JSON here")
    p.set_defaults(func=cmd_relax)

    p = sub.add_parser("check-degeneracy", parents=[src],
                       help="per-epoch rank table and verdict")
    p.set_defaults(func=cmd_check_degeneracy)

    p = sub.add_parser("simulate", parents=[src, sim],
                       help="Monte Carlo policy evaluation")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rate-study", parents=[src, sim],
                       help="optimality gap decay across population sizes")
    p.set_defaults(func=cmd_rate_study)

    p = sub.add_parser("casestudy", parents=[sim],
                       help="screening-model policy comparison")
    p.add_argument("--scenario", choices=("scarce", "abundant"),
                   default="scarce")
    p.add_argument("--scenario-file", help='JSON {"scenario":..,"fairness":..}')
    p.add_argument("--fairness", choices=("on", "off", "both"), default="both")
    p.set_defaults(func=cmd_casestudy)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "rounding"):
        args.rounding = args.rounding.replace("-", "_")
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        raise
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
