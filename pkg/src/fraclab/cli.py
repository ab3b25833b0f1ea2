"""Scenario runner: define an instance, solve it, profile the radial
functionals, run blow-up classification, and execute the verification
suites.  Emits CSV/JSON artifacts with embedded scenario hashes.

Commands (exit codes: 0 success, 1 bad configuration, 2 non-convergence,
3 missing solve artifacts):

    fraclab solve    --scenario FILE --out DIR
    fraclab profile  --scenario FILE --out DIR [--x0 ...] [--functionals N,W,M,Phi]
    fraclab blowup   --scenario FILE --out DIR --x0 ...
    fraclab classify --scenario FILE --out DIR
    fraclab verify   --suite identities|harmonics|grushin|quadrature

FRACLAB_THREADS caps worker threads for radii sweeps (default 1).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import blowup as bl
from . import fracops
from . import functionals as fn
from . import grushin as gr
from . import harmonics as hm
from .core import GridField, GridSpec, ObstacleSpec, WeightParams
from .instances import named_instance
from .quadrature import sphere_rule, weighted_sphere_area
from .solver import ThinObstacleProblem, psor_solve


def _fmt(v) -> str:
    if v is None:
        return ""
    return format(float(v), ".17g")


def _thread_map(fun, items):
    k = int(os.environ.get("FRACLAB_THREADS", "1") or "1")
    if k <= 1:
        return [fun(it) for it in items]
    with ThreadPoolExecutor(max_workers=k) as ex:
        return list(ex.map(fun, items))


# --------------------------------------------------------------------------
# scenario
# --------------------------------------------------------------------------

class Scenario:
    def __init__(self, doc: dict):
        self.doc = doc
        self.name = doc["name"]
        self.s = float(doc["s"])
        self.n = int(doc.get("n", 1))
        self.params = WeightParams.from_s(self.s, self.n)
        g = doc.get("grid", {})
        self.grid = GridSpec.make(
            self.n, g.get("L", 1.5), g.get("Y", 1.0), g.get("nx", 129),
            g.get("ny", 65), g.get("grading", 1.12))
        inst = doc.get("instance", {"kind": "zero"})
        self.instance_kind = inst["kind"]
        self.instance_doc = inst
        sv = doc.get("solver", {})
        self.omega = sv.get("omega")  # None -> grid-adapted default
        self.tol = float(sv.get("tol", 1e-10))
        self.max_iter = int(sv.get("max_iter", 50000))
        self.mode = sv.get("mode", "extension")
        f = doc.get("functional", {})
        sm = doc.get("smoothness", {})
        self.k = sm.get("k")
        self.gamma = sm.get("gamma")
        r_max = float(f.get("r_max", min(self.grid.L, self.grid.Y) / 2))
        self.config = fn.FunctionalConfig.for_instance(
            gamma=self.gamma,
            theta=f.get("theta"),
            C0=float(f.get("C0", 10.0)),
            r_min=float(f.get("r_min", max(4 * self.grid.hx, r_max / 16))),
            r_max=r_max,
            r_count=int(f.get("count", 20)),
            slack=float(f.get("slack", 1e-8)),
        )
        self.config.r0 = float(f.get("r0", r_max))

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as fh:
            return cls(json.load(fh))

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(self.doc, sort_keys=True).encode()).hexdigest()[:16]

    def header_lines(self) -> list[str]:
        echo = json.dumps(self.doc, sort_keys=True)
        return [f"# scenario_hash={self.hash()}", f"# scenario={echo}"]

    # -- instance materialization -------------------------------------------

    def build_instance(self):
        kind = self.instance_kind
        if kind in ("signorini_32", "zero", "solid_harmonic"):
            coeffs = None
            if "coefficients" in self.instance_doc:
                coeffs = {tuple(int(t) for t in k.split(",")): float(v)
                          for k, v in self.instance_doc["coefficients"].items()}
            return named_instance(kind, n=self.n, s=self.s, coeffs=coeffs)
        if kind == "obstacle":
            return None
        raise ValueError(f"unknown instance kind {kind!r}")

    def obstacle(self):
        if self.instance_kind != "obstacle":
            return None
        doc = self.instance_doc["obstacle"]
        return ObstacleSpec(kind=doc.get("kind", "polynomial"), n=self.n,
                            k=int(doc.get("k", self.k or 2)),
                            gamma=float(doc.get("gamma", self.gamma or 0.5)),
                            coefficients=doc.get("coefficients"))

    def problem(self) -> ThinObstacleProblem:
        inst = self.build_instance()
        xs = self.grid.x_nodes
        if self.n == 1:
            thin_pts = xs[:, None]
        else:
            m1, m2 = np.meshgrid(xs, xs, indexing="ij")
            thin_pts = np.column_stack([m1.ravel(), m2.ravel()])
        if self.instance_kind == "obstacle":
            obst = self.obstacle()
            trace = obst.value(thin_pts).reshape(self.grid.thin_shape())
            boundary = float(self.instance_doc.get("boundary", 0.0))
        elif self.instance_kind == "zero":
            trace = np.full(self.grid.thin_shape(),
                            float(self.instance_doc.get("phi", -1.0)))
            boundary = float(self.instance_doc.get("boundary", 0.0))
        else:
            # named exact instances solve the zero-obstacle problem with
            # their own field as boundary data
            trace = np.zeros(self.grid.thin_shape())
            boundary = inst.field
        return ThinObstacleProblem(params=self.params, grid=self.grid,
                                   obstacle_trace=trace, boundary=boundary,
                                   mode=self.mode)


# --------------------------------------------------------------------------
# artifact io
# --------------------------------------------------------------------------

def _write_csv(path: Path, scenario: Scenario, header: str, rows):
    with open(path, "w") as fh:
        for line in scenario.header_lines():
            fh.write(line + "\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row) + "\n")


def _write_json(path: Path, scenario: Scenario, payload: dict):
    payload = {"_meta": {"scenario_hash": scenario.hash(),
                         "scenario": scenario.doc}, **payload}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _load_solution(scenario: Scenario, out: Path):
    p = out / "field.npz"
    if not p.exists():
        return None
    d = np.load(p, allow_pickle=False)
    spec = scenario.grid
    mask = d["contact_mask"]
    lam = d["neumann"]
    return GridField(spec, d["values"],
                     contact_mask=mask if mask.size else None,
                     neumann=lam if lam.size else None)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_solve(scenario: Scenario, out: Path) -> int:
    problem = scenario.problem()
    result = psor_solve(problem, omega=scenario.omega, tol=scenario.tol,
                        max_iter=scenario.max_iter)
    out.mkdir(parents=True, exist_ok=True)
    np.savez(out / "field.npz", values=result.field.values,
             contact_mask=result.contact_mask, neumann=result.neumann)
    xs = scenario.grid.x_nodes
    if scenario.n == 1:
        thin_rows = [(x,) for x in xs]
    else:
        m1, m2 = np.meshgrid(xs, xs, indexing="ij")
        thin_rows = list(zip(m1.ravel(), m2.ravel()))
    lam = result.neumann.ravel()
    mask = result.contact_mask.ravel()
    xcols = ",".join(f"x{i+1}" for i in range(scenario.n))
    _write_csv(out / "lambda.csv", scenario, f"{xcols},lambda",
               [r + (l,) for r, l in zip(thin_rows, lam)])
    _write_csv(out / "mask.csv", scenario, f"{xcols},contact",
               [r + (float(mk),) for r, mk in zip(thin_rows, mask)])
    with open(out / "field.csv", "w") as fh:
        for line in scenario.header_lines():
            fh.write(line + "\n")
        fh.write(result.field.to_csv())
    _write_json(out / "solve.json", scenario, {
        "converged": bool(result.converged),
        "iterations": result.iterations,
        "final_residual": result.final_residual,
        "mode": result.mode,
    })
    return 0 if result.converged else 2


def _profile_columns(scenario: Scenario, fld, x0, names, kappa=None):
    params, config = scenario.params, scenario.config
    radii = config.radii()
    cols = {"r": radii}
    order = 32
    if any(nm in names for nm in ("H", "D", "N", "W")):
        Hs = np.array(_thread_map(
            lambda r: fn.height(fld, x0, r, params, order=order), radii))
        Ds = np.array(_thread_map(
            lambda r: fn.dirichlet(fld, x0, r, params, order=order), radii))
        cols["H"] = Hs
        cols["D"] = Ds
        cols["N"] = radii * Ds / Hs
    if kappa is None and "N" in cols:
        kappa = float(np.round(cols["N"][0] * 2) / 2)
    poly = None
    if "W" in names or "M" in names:
        if "M" in names:
            m = max(int(round((kappa or 2) / 2.0)), 1)
            try:
                v = bl.rescale(fld, x0, radii[len(radii) // 2], params)
                poly, _, info = bl.fit_blowup_polynomial(v, m, params,
                                                         order=order)
                if info["rejected"]:
                    poly = None
            except Exception:
                poly = None
        if "W" in names:
            cols["W_kappa"] = np.array([
                fn.weiss(fld, x0, kappa, r, params, order=order)
                for r in radii])
        if "M" in names and poly is not None:
            cols["M_kappa"] = np.array([
                fn.monneau(fld, x0, poly, r, params, order=order)
                for r in radii])
    if "Phi" in names:
        k = scenario.k if scenario.k is not None else 2
        gamma = scenario.gamma if scenario.gamma is not None else 0.5
        obst = scenario.obstacle()
        v = bl.obstacle_normalize(fld, obst, x0, k, params)
        cols["Phi"] = np.array([
            fn.generalized_frequency(v, np.zeros(params.n), config, k,
                                     gamma, r, params, order=order)
            for r in radii])
    return cols, kappa


def cmd_profile(scenario: Scenario, out: Path, x0, functional_names) -> int:
    fld = _load_solution(scenario, out)
    if fld is None:
        print("profile: missing solve artifacts (run solve first)",
              file=sys.stderr)
        return 3
    names = functional_names or ["N", "W", "M"]
    cols, kappa = _profile_columns(scenario, fld, x0, names)
    order = ["r", "H", "D", "N", "W_kappa", "M_kappa", "Phi"]
    present = [c for c in order if c in cols]
    rows = []
    for i in range(len(cols["r"])):
        rows.append(tuple(cols[c][i] if c in cols else "" for c in order))
    _write_csv(out / "profiles.csv", scenario, ",".join(order), rows)
    verdicts = {}
    for c in present:
        if c == "r" or c in ("H", "D"):
            continue
        prof = fn.RadialProfile(cols["r"], cols[c], name=c)
        slack = scenario.config.slack
        verdicts[c] = fn.monotonicity_report(prof, slack)
    _write_json(out / "verdicts.json", scenario,
                {"kappa": kappa, "verdicts": verdicts})
    return 0


def cmd_blowup(scenario: Scenario, out: Path, x0) -> int:
    fld = _load_solution(scenario, out)
    if fld is None:
        print("blowup: missing solve artifacts (run solve first)",
              file=sys.stderr)
        return 3
    rep = bl.classify(fld, scenario.obstacle(), x0, scenario.config,
                      scenario.params, contact_mask=fld.contact_mask,
                      grid_spec=scenario.grid, k=scenario.k,
                      gamma=scenario.gamma, order=32)
    tag = "_".join(_fmt(c) for c in np.atleast_1d(x0))
    _write_json(out / f"blowup_{tag}.json", scenario, rep.to_dict())
    return 0


def _free_boundary_nodes(mask: np.ndarray, spec: GridSpec):
    pts = []
    it = np.ndindex(*mask.shape)
    for idx in it:
        if not mask[idx]:
            continue
        boundaryish = False
        for axis in range(mask.ndim):
            for d in (-1, 1):
                nb = list(idx)
                nb[axis] += d
                if 0 <= nb[axis] < mask.shape[axis] and not mask[tuple(nb)]:
                    boundaryish = True
        if boundaryish:
            pts.append(np.array([spec.x_nodes[i] for i in idx]))
    return pts


def cmd_classify(scenario: Scenario, out: Path) -> int:
    fld = _load_solution(scenario, out)
    if fld is None:
        print("classify: missing solve artifacts (run solve first)",
              file=sys.stderr)
        return 3
    mask = fld.contact_mask
    pts = [] if mask is None else _free_boundary_nodes(mask, scenario.grid)
    reports = []
    for x0 in pts:
        reports.append(bl.classify(
            fld, scenario.obstacle(), x0, scenario.config, scenario.params,
            contact_mask=mask, grid_spec=scenario.grid, k=scenario.k,
            gamma=scenario.gamma, order=32))
    strata = bl.stratify(reports, scenario.params)
    rows = [(f"{k[0]}", f"{k[1]}", f"{v['count']}",
             json.dumps(v["points"])) for k, v in sorted(strata.items())]
    _write_csv(out / "strata.csv", scenario, "two_m,d,count,points",
               [tuple(r) for r in rows])
    _write_json(out / "reports.json", scenario,
                {"reports": [r.to_dict() for r in reports]})
    return 0


# --------------------------------------------------------------------------
# verify
# --------------------------------------------------------------------------

def _verify_checks(suite: str, corrupt: str = ""):
    checks = []

    def add(name, tol, fun):
        checks.append((name, tol, fun))

    if suite == "identities":
        def exponent_identity():
            worst = 0.0
            for s in np.linspace(0.1, 0.9, 9):
                p = WeightParams.from_s(s, 2)
                worst = max(worst, abs((1 - p.a) * p.Q - (p.Qtilde - 2 * p.a)))
            return worst + (1.0 if corrupt == "exponent_identity" else 0.0)
        add("homogeneous-dimension-identity", 1e-12, exponent_identity)

        def roundtrip():
            from .core import h_inverse, h_transform
            rng = np.random.default_rng(3)
            worst = 0.0
            for s in (0.25, 0.5, 0.75):
                p = WeightParams.from_s(s, 1)
                y = rng.uniform(0.01, 5.0, 200)
                back = h_inverse(h_transform(y, p), p)
                worst = max(worst, float(np.max(np.abs(back - y) / y)))
            return worst
        add("h-roundtrip", 1e-10, roundtrip)
    elif suite == "harmonics":
        def extension_harmonic():
            worst = 0.0
            for s in (0.25, 0.5, 0.75):
                p = WeightParams.from_s(s, 2)
                for kappa in range(0, 5):
                    for b in hm.basis_solid_harmonics(kappa, 2, p):
                        res = hm.la_apply(b, p)
                        worst = max(worst, res.max_abs_coeff())
            return worst + (1.0 if corrupt == "extension_harmonic" else 0.0)
        add("extension-annihilated", 1e-12, extension_harmonic)

        def trace_recovery():
            p = WeightParams.from_s(0.3, 2)
            q = hm.PolynomialOnRn(2, {(2, 1): 1.5, (0, 3): -2.0})
            ext = hm.extend_la_harmonic(q, p)
            tr = ext.trace()
            diff = tr.add(q.scale(-1.0))
            return diff.max_abs_coeff()
        add("trace-recovery", 0.0, trace_recovery)
    elif suite == "grushin":
        def gauge_hom():
            rng = np.random.default_rng(11)
            worst = 0.0
            for alpha in (0.0, 0.5, 1.0, 3.0):
                x = rng.standard_normal((1000, 1))
                z = rng.standard_normal(1000)
                lam = rng.uniform(0.2, 3.0, 1000)
                r1 = gr.rho_alpha(*gr.dilate(x, z, 2.0, alpha), alpha)
                r0 = gr.rho_alpha(x, z, alpha)
                worst = max(worst, float(np.max(np.abs(r1 - 2.0 * r0)
                                                / np.abs(r0))))
            return worst + (1.0 if corrupt == "gauge_hom" else 0.0)
        add("gauge-homogeneity", 1e-12, gauge_hom)

        def newtonian():
            c = gr.c_alpha_constant(0.0, 2)
            return abs(c - 1.0 / (4 * np.pi)) / (1.0 / (4 * np.pi))
        add("newtonian-constant", 1e-2, newtonian)
    elif suite == "quadrature":
        def area_check():
            worst = 0.0
            for n in (1, 2):
                for a in (-0.5, 0.0, 0.5):
                    rule = sphere_rule(n, a, 0.7)
                    got = rule.integrate(lambda x, y: np.ones(len(y)))
                    want = 0.7 ** (n + a) * weighted_sphere_area(n, a)
                    worst = max(worst, abs(got - want) / want)
            return worst + (1.0 if corrupt == "area_check" else 0.0)
        add("weighted-area", 1e-8, area_check)
    else:
        raise ValueError(f"unknown suite {suite!r}")
    return checks


def cmd_verify(suite: str, corrupt: str = "") -> int:
    checks = _verify_checks(suite, corrupt)
    failures = 0
    for name, tol, fun in checks:
        got = fun()
        ok = got <= tol
        failures += 0 if ok else 1
        print(f"[{'PASS' if ok else 'FAIL'}] {suite}/{name}: "
              f"value={got:.3e} tol={tol:.1e}")
    return 0 if failures == 0 else 1


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def _parse_x0(text: str, n: int) -> np.ndarray:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != n:
        raise ValueError(f"--x0 needs {n} coordinates")
    return np.array(parts)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fraclab", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "profile", "blowup", "classify"):
        p = sub.add_parser(name)
        p.add_argument("--scenario", required=True)
        p.add_argument("--out", required=True)
        if name in ("profile", "blowup"):
            p.add_argument("--x0", default=None)
        if name == "profile":
            p.add_argument("--functionals", default="N,W,M")
    pv = sub.add_parser("verify")
    pv.add_argument("--suite", required=True,
                    choices=["identities", "harmonics", "grushin", "quadrature"])
    pv.add_argument("--selftest-corrupt", default="", dest="corrupt")
    args = ap.parse_args(argv)

    if args.command == "verify":
        return cmd_verify(args.suite, args.corrupt)

    try:
        scenario = Scenario.load(args.scenario)
    except (OSError, json.JSONDecodeError, KeyError, ValueError, TypeError) as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 1
    out = Path(args.out)

    if args.command == "solve":
        return cmd_solve(scenario, out)

    x0 = np.zeros(scenario.n)
    if getattr(args, "x0", None):
        try:
            x0 = _parse_x0(args.x0, scenario.n)
        except ValueError as e:
            print(f"scenario error: {e}", file=sys.stderr)
            return 1
    if args.command == "profile":
        names = [t.strip() for t in args.functionals.split(",") if t.strip()]
        return cmd_profile(scenario, out, x0, names)
    if args.command == "blowup":
        return cmd_blowup(scenario, out, x0)
    if args.command == "classify":
        return cmd_classify(scenario, out)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
