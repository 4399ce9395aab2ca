"""Batch front-end: identity suites, convergence studies and report emission.

Subcommands: relations, integrable, ising-identities, converge-energy,
converge-tensor, converge-twopoint, greens, ope.  Reports are JSON documents
{"schema": 1, "suite": ..., "cases": [{name, residual, tolerance, pass}],
"versions": ..., "timing": ...}; exit status 0 when every case passes, 1 on
any failure, 2 on a malformed configuration.  CSV output uses comma
separators, '.' decimals and 17 significant digits.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .errors import ConfigError, HexloopError


def _load_config(path):
    if not path:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc))


def _run_cases(cases, jobs: int):
    """Run (name, tolerance, callable) cases; order follows the input."""
    results = []
    if jobs <= 1:
        for name, tol, fn in cases:
            results.append(_one_case(name, tol, fn))
        return results
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futs = [(name, tol, pool.submit(_safe, fn)) for name, tol, fn in cases]
        for name, tol, fut in futs:
            residual, err = fut.result()
            results.append(_case_doc(name, tol, residual, err))
    return results


def _safe(fn):
    try:
        return fn(), None
    except HexloopError as exc:
        return None, f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # keep the suite alive, record the failure
        return None, f"{type(exc).__name__}: {exc}"


def _one_case(name, tol, fn):
    residual, err = _safe(fn)
    return _case_doc(name, tol, residual, err)


def _case_doc(name, tol, residual, err):
    doc = {"name": name, "tolerance": tol}
    if err is not None:
        doc.update(residual=None, error=err)
        doc["pass"] = False
    else:
        doc["residual"] = residual
        doc["pass"] = bool(residual <= tol)
    return doc


def _emit(suite, cases, t0, out):
    doc = {
        "schema": 1,
        "suite": suite,
        "cases": cases,
        "versions": {"hexloop": __version__, "python": sys.version.split()[0]},
        "timing": time.time() - t0,
    }
    text = json.dumps(doc, indent=1, default=float)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0 if all(c["pass"] for c in cases) else 1


# -- suites -------------------------------------------------------------------


def suite_relations(cfg, jobs):
    from .lattice import build_domain
    from .stress_tensor import relation_residuals
    from .weights import weight_params

    shape = cfg.get("shape", "hex_flower(1)")
    ns = cfg.get("n", [0.0, 0.5, 1.0, 1.5, 2.0])
    if not isinstance(ns, list):
        ns = [ns]
    tol = cfg.get("tolerances", {}).get("relations", 1e-12)
    dom = build_domain(shape, cfg.get("mesh", 1.0))
    bcs = {"empty": (), "dobrushin": (0, dom.n_stubs // 2)}
    cases = []
    for n in ns:
        for bname, bc in bcs.items():
            def fn(n=n, bc=bc):
                r = relation_residuals(dom, bc, weight_params(n))
                return max(r.values())
            cases.append((f"relations[{shape},n={n},{bname}]", tol, fn))
    return _run_cases(cases, jobs)


def suite_integrable(cfg, jobs):
    from .weights import integrability_check, weight_params

    grid = int(cfg.get("grid", 25))
    ns = cfg.get("n", [0.0, 0.5, 1.0, 1.5, 2.0])
    if not isinstance(ns, list):
        ns = [ns]
    tol = cfg.get("tolerances", {}).get("integrable", 1e-12)
    phis = np.linspace(math.pi / 2 + 0.05, math.pi - 0.05, grid)
    cases = []
    for n in ns:
        def fn(n=n):
            ws = weight_params(n)
            worst = 0.0
            for phi in phis:
                for psi in phis:
                    r = integrability_check(float(phi), float(psi), ws)
                    worst = max(worst, r["yb"], r["pentagon"], r["split"])
            return worst
        cases.append((f"integrable[n={n},{grid}x{grid}]", tol, fn))
    return _run_cases(cases, jobs)


def suite_ising(cfg, jobs):
    from . import ising as I
    from .lattice import build_domain, double_cover
    from .stress_tensor import tensor_value
    from .weights import weight_params

    tol = cfg.get("tolerances", {}).get("ising", 1e-12)
    shape = cfg.get("shape", "hex_flower(1)")
    dom = build_domain(shape, 1.0)
    ws1 = weight_params(1.0)
    f0 = dom.faces[len(dom.faces) // 2]
    bdob = (0, dom.n_stubs // 2)
    inner = [e for e in range(dom.n_edges) if dom.edge_degree_inner(e)]

    def t_as_expectation():
        worst = 0.0
        for h in range(3):
            m = dom.midline(f0, h)
            for bc in ((), bdob):
                tm = tensor_value(dom, bc, ws1, m)
                lhs = (I.spin_field_expectations(dom, bc, "T", f0, h)
                       + I.spin_field_expectations(dom, bc, "T", f0, h + 3)
                       + I.spin_field_expectations(dom, bc, "R", f0, h))
                worst = max(worst, abs(tm - lhs))
        return worst

    def via_fermion():
        worst = 0.0
        for h in range(6):
            for bc in ((), bdob):
                tf = I.tensor_via_fermions(dom, bc, f0, h)
                worst = max(worst, abs(tf["T_eta"] - I.spin_field_expectations(dom, bc, "T", f0, h)))
                worst = max(worst, abs(tf["R_eta"] - I.spin_field_expectations(dom, bc, "R", f0, h % 3)))
        return worst

    def pfaffian():
        quads = [[(inner[0], 0), (inner[1], 1), (inner[2], 0), (inner[3], 1)],
                 [(inner[0], 0), (inner[0], 1), (inner[2], 0), (inner[4], 1)],
                 [("stub", 0), (inner[1], 0), (inner[2], 1), ("stub", dom.n_stubs // 2)]]
        return max(I.fermion_four_point(dom, *q)["pfaffian_residual"] for q in quads)

    def eps_fermion():
        worst = 0.0
        for eid in inner[:6]:
            o = 0 if dom.edges[eid].k0 % 2 == 0 else 1
            lhs = 1 / 3 - 2 * I._engine(dom).f_real((eid, o), (eid, 1 - o))
            worst = max(worst, abs(lhs - I.spin_field_expectations(dom, (), "epsilon", eid)))
        return worst

    def t_sigma():
        cov = double_cover(dom, f0)
        wf = next(f for f in dom.faces
                  if f != f0 and abs(dom.face_center(f) - dom.face_center(f0)) > 1.9 * dom.mesh)
        worst = 0.0
        for h in range(3):
            lhs = I.t_sigma_ratio_via_spinor(dom, cov, wf, h)
            num = I.spin_product_expectation(dom, (), [("T", wf, h), ("sigma", f0, 0)])
            den = I.spin_field_expectations(dom, (), "sigma", f0)
            worst = max(worst, abs(lhs - num / den))
        return worst

    cases = [
        (f"T-as-expectation[{shape}]", tol, t_as_expectation),
        (f"T,R-via-fermions[{shape}]", tol, via_fermion),
        (f"pfaffian[{shape}]", tol, pfaffian),
        (f"energy-via-fermion[{shape}]", tol, eps_fermion),
        (f"T-sigma-spinor[{shape}]", tol, t_sigma),
    ]
    shape2 = cfg.get("shape2", "hex_flower(2)")
    if shape2:
        dom2 = build_domain(shape2, 1.0)
        wa = dom2.faces[len(dom2.faces) // 2]
        wb = next(f for f in dom2.faces
                  if abs(dom2.face_center(f) - dom2.face_center(wa)) > 2.5 * dom2.mesh)

        def two_points():
            worst = 0.0
            for s1 in (("T", wa, 0), ("R", wa, 0)):
                for s2 in (("T", wb, 1), ("epsilon", _far_edge(dom2, wa, wb), 0)):
                    v = I.two_point_via_fermions(dom2, s1, s2)
                    d = I.spin_product_expectation(dom2, (), [s1, s2])
                    worst = max(worst, abs(v - d))
            return worst

        cases.append((f"two-point-pfaffian[{shape2}]", tol, two_points))
    return _run_cases(cases, jobs)


def _far_edge(dom, wa, wb):
    za = dom.face_center(wa)
    zb = dom.face_center(wb)
    best = None
    for eid in range(dom.n_edges):
        if not dom.edge_degree_inner(eid):
            continue
        z = dom.edges[eid].z
        if abs(z - za) > 2.2 * dom.mesh and abs(z - zb) > 2.2 * dom.mesh:
            return eid
        if best is None or min(abs(z - za), abs(z - zb)) > 0:
            best = eid
    return best


def suite_converge_energy(cfg, jobs):
    from .convergence import energy_study

    deltas = cfg.get("mesh", [0.08, 0.04, 0.02])
    a_point = complex(*cfg.get("points", [[0.3, 0.2]])[0])
    tol = cfg.get("tolerances", {}).get("energy", 0.03)
    rows = energy_study(deltas, a_point=a_point)
    cases = []
    for i, r in enumerate(rows):
        cases.append(_case_doc(f"energy[delta={r[0]}]", tol if i == len(rows) - 1 else 1.0,
                               abs(r[4] - 1.0), None))
    errs = [r[5] for r in rows]
    mono = all(errs[i + 1] < errs[i] for i in range(len(errs) - 1))
    cases.append(_case_doc("energy[monotone decay]", 0.5, 0.0 if mono else 1.0, None))
    return cases


def suite_converge_tensor(cfg, jobs):
    from . import continuum as C
    from .convergence import tensor_study_dobrushin, tensor_study_plus

    deltas = cfg.get("mesh", [0.02, 0.01])
    cases = []

    rows = tensor_study_plus(deltas, w_point=complex(*cfg.get("w_plus", (0.0, 0.5))), h=0)
    cases.append(_case_doc(f"tensor-plus-halfdisc[delta={rows[-1][0]}]", 0.05,
                           abs(rows[-1][4] - 1.0), None))
    phi = C.joukowski_half_disc()
    v1, v2 = rows[0], rows[-1]
    ideal = lambda row: (3 / math.pi) * ((1j) ** 2 * C.one_point(phi, "T", row[1])).real
    rich2 = (4 * v2[2] - v1[2]) / 3
    cases.append(_case_doc("tensor-plus-halfdisc[richardson 2nd vs half-disc]", 0.02,
                           abs(rich2 / ideal(v2) - 1.0), None))

    rows = tensor_study_dobrushin(deltas, w_point=complex(*cfg.get("w_dob", (0.3, 0.2))), h=0)
    cases.append(_case_doc(f"tensor-dobrushin-disc[delta={rows[-1][0]}]", 0.05,
                           abs(rows[-1][4] - 1.0), None))
    r1, r2 = rows[0][4], rows[-1][4]
    cases.append(_case_doc("tensor-dobrushin-disc[richardson ratios]", 0.02,
                           abs(2 * r2 - r1 - 1.0), None))
    return cases


def suite_converge_twopoint(cfg, jobs):
    from .convergence import teps_study, tt_study

    cases = []
    deltas = cfg.get("mesh_tt", [0.014, 0.007])
    w1, w2 = -0.2 + 0.0j, 0.15 + 0.1j
    vals = [tt_study(d, w1=w1, w2=w2) for d in deltas]
    v, t = vals[-1]
    cases.append(_case_doc(f"TT[delta={deltas[-1]}]", 0.05, abs(v - t) / abs(t), None))
    r1, r2 = vals[0][0] / vals[0][1], vals[1][0] / vals[1][1]
    cases.append(_case_doc("TT[richardson ratios]", 0.02, abs(2 * r2 - r1 - 1.0), None))

    deltas = cfg.get("mesh_te", [0.02, 0.01])
    w, a = -0.35 + 0.1j, 0.3 - 0.1j
    vals = [teps_study(d, w=w, a_point=a) for d in deltas]
    v, t = vals[-1]
    cases.append(_case_doc(f"Teps[delta={deltas[-1]}]", 0.05, abs(v - t) / abs(t), None))
    r1, r2 = vals[0][0] / vals[0][1], vals[1][0] / vals[1][1]
    cases.append(_case_doc("Teps[richardson ratios]", 0.02, abs(2 * r2 - r1 - 1.0), None))
    return cases


def suite_greens(cfg, jobs, out_csv=None):
    from .sholo import GREEN_ASYMPTOTIC_CONST, _GREEN, green_triangular

    tol_asym = cfg.get("tolerances", {}).get("asym", 1e-3)
    tol_agree = cfg.get("tolerances", {}).get("agree", 1e-6)
    rng = np.random.default_rng(int(cfg.get("seed", 7)))
    pts = []
    while len(pts) < 12:
        m, n = int(rng.integers(-90, 90)), int(rng.integers(-90, 90))
        r2 = m * m + m * n + n * n
        if 2500 <= r2 <= 10000:
            pts.append((m, n))

    def asym_err():
        worst = 0.0
        for (m, n) in pts:
            r = math.sqrt(m * m + m * n + n * n)
            target = math.log(r) / (2 * math.pi * math.sqrt(3)) + GREEN_ASYMPTOTIC_CONST
            worst = max(worst, abs(green_triangular((m, n)) - target))
        return worst

    def agreement():
        radius = int(cfg.get("radius", 24))
        worst = 0.0
        for m in range(-radius // 2, radius // 2 + 1, 3):
            for n in range(-radius // 2, radius // 2 + 1, 3):
                gi = green_triangular((m, n))
                gb = green_triangular((m, n), radius=radius, method="box")
                worst = max(worst, abs(gi - gb))
        return worst

    cases = [("greens[asymptotics 50<=|v|<=100]", tol_asym, asym_err),
             ("greens[integral vs box solve]", tol_agree, agreement)]
    results = _run_cases(cases, jobs)
    if out_csv:
        lines = ["vx_int,vy_int,G"]
        for (m, n) in sorted(_GREEN._cache):
            lines.append("%d,%d,%.17g" % (m, n, _GREEN._cache[(m, n)]))
        with open(out_csv, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return results


def suite_ope(cfg, jobs):
    from . import continuum as C

    tol_cov = cfg.get("tolerances", {}).get("covariance", 1e-10)
    tol_ope = cfg.get("tolerances", {}).get("ope", 1e-6)
    seed = int(cfg.get("seed", 11))
    n_maps = int(cfg.get("n_maps", 100))

    def covariance():
        rng = np.random.default_rng(seed)
        h = C.identity_map()
        worst = 0.0
        for _ in range(n_maps):
            a, b, c, d = rng.normal(size=4)
            if a * d - b * c < 0:
                a, b = -a, -b
            if abs(a * d - b * c) < 1e-3:
                continue
            phi = C.mobius(a, b, c, d)
            w = complex(rng.normal(), 0.5 + abs(rng.normal()))
            worst = max(worst, C.covariance_residual(phi, "T", w, h, h))
            worst = max(worst, C.covariance_residual(phi, "T_dob", w, h, h))
            worst = max(worst, C.covariance_residual(phi, "Tsigma_ratio", w, h, h,
                                                     site_src=0.3 + 2.0j))
        # strip -> H and half-disc -> H
        for phi, src, w in ((C.exp_strip(), C.exp_strip(), 0.2 + 0.6j),
                            (C.joukowski_half_disc(), C.joukowski_half_disc(), 0.1 + 0.5j)):
            val = C.one_point(src, "T", w)
            target = C.one_point(h, "T", phi(w)) * phi.d1(w) ** 2 + C.schwarzian(phi, w) / 24
            worst = max(worst, abs(val - target))
        return worst

    def ope():
        h = C.identity_map()
        worst = 0.0
        co = C.ope_coefficients(h, "TT", 1j, 0.1)
        tw = C.one_point(h, "T", 1j)
        dtw = 0.0  # <T> = 0 identically on H
        worst = max(worst, abs(co[-4] - 0.25), abs(co[-3]), abs(co[-2] - 2 * tw), abs(co[-1] - dtw))
        co = C.ope_coefficients(h, "Teps", 1j, 0.1)
        eps = C.one_point(h, "eps", 1j)
        deps = 0.0  # d/da |phi'|/(2 Im phi) at a = i for phi = id: derivative of 1/(2y) in a
        # complex derivative of <eps> along a: for phi=id, <eps> = 1/(2 Im a):
        # d<eps>/da = (1/2) * d(1/Im a)/da = i/(4 (Im a)^2) at a = i -> 0.25j... use FD
        e = lambda a: C.one_point(h, "eps", a)
        hstep = 1e-5
        deps = complex((e(1j + hstep) - e(1j - hstep)) / (2 * hstep),
                       (e(1j + 1j * hstep) - e(1j - 1j * hstep)) / (2 * hstep))
        deps = (deps.real - 1j * deps.imag) / 1  # (dx - i dy)/... Wirtinger d/da
        deps = 0.5 * complex((e(1j + hstep) - e(1j - hstep)) / (2 * hstep)
                             - 1j * (e(1j + 1j * hstep) - e(1j - 1j * hstep)) / (2 * hstep))
        worst = max(worst, abs(co[-2] - 0.5 * eps), abs(co[-1] - deps))
        co = C.ope_coefficients(h, "Tsigma", 1j, 0.1)
        sg = C.one_point(h, "sigma", 1j)
        s = lambda u: C.one_point(h, "sigma", u)
        dsg = 0.5 * complex((s(1j + hstep) - s(1j - hstep)) / (2 * hstep)
                            - 1j * (s(1j + 1j * hstep) - s(1j - 1j * hstep)) / (2 * hstep))
        worst = max(worst, abs(co[-2] - sg / 16), abs(co[-1] - dsg))
        return worst

    cases = [("covariance[100 mobius + exp + joukowski]", tol_cov, covariance),
             ("ope[TT, Teps, Tsigma laurent]", tol_ope, ope)]
    return _run_cases(cases, jobs)


SUITES = {
    "relations": suite_relations,
    "integrable": suite_integrable,
    "ising-identities": suite_ising,
    "converge-energy": suite_converge_energy,
    "converge-tensor": suite_converge_tensor,
    "converge-twopoint": suite_converge_twopoint,
    "greens": suite_greens,
    "ope": suite_ope,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hexloop", description=__doc__)
    ap.add_argument("suite", choices=sorted(SUITES))
    ap.add_argument("--config", default=None, help="JSON run configuration")
    ap.add_argument("--out", default=None, help="report output path")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args(argv)
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    t0 = time.time()
    try:
        cases = SUITES[args.suite](cfg, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for c in cases:
        status = "PASS" if c["pass"] else "FAIL"
        res = "error" if c.get("error") else f"{c['residual']:.3e}"
        print(f"[{status}] {c['name']}: {res} (tol {c['tolerance']:.1e})", file=sys.stderr)
    return _emit(args.suite, cases, t0, args.out)


if __name__ == "__main__":
    raise SystemExit(main())
