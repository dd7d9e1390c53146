"""Command-line front end.

Every command prints (or writes to ``--out``) one JSON report with
``schema: 1``, an echo of the configuration and, where applicable, a list
of checks with status ``pass``, ``fail`` or ``inconclusive``.  Exit codes:
0 when no check failed, 1 when a check failed, 2 for an unknown command
and 3 for bad input.
"""

import argparse
import csv
import json
import sys
import time

import numpy as np

from . import __version__
from .dec import DECOperators
from .families import (flat_torus, genus2_mesh, torus_green_oracle,
                       vertex_positions)
from .green import LaplaceSolver, SolverError
from .hodge import BasisError, harmonic_basis
from .invariants import Surface
from .mesh import MeshError, genus, load_mesh, refine, save_mesh
from . import variation as V

SCHEMA = 1
COMMANDS = ("info", "gen", "basis", "green", "ag", "verify", "variation")
SUITES = ("mesh", "basis", "green", "invariants", "variation")


class InputError(Exception):
    pass


# -- parsing ---------------------------------------------------------------

def parse_complex(text):
    """Parse ``i``, ``2i``, ``0.5+1i`` or ``0.5+1j`` as a complex number."""
    s = text.strip().replace(" ", "").replace("I", "i").replace("i", "j")
    if s in ("j", "+j"):
        return 1j
    if s == "-j":
        return -1j
    s = s.replace("+j", "+1j").replace("-j", "-1j")
    if s.startswith("j"):
        s = "1" + s
    try:
        return complex(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


# Resolution at which every genus-2 check in ``verify`` meets its tolerance.
VERIFY_RESOLUTION = 12


def build_parser():
    p = argparse.ArgumentParser(prog="arakelovlab", description=__doc__)
    p.add_argument("command", help="one of " + ", ".join(COMMANDS))
    p.add_argument("--mesh", help="mesh file in the sectioned text format")
    p.add_argument("--family", choices=("torus", "octagon", "double-torus"),
                   help="built-in surface family")
    p.add_argument("--tau", type=parse_complex, default=1j,
                   help="torus modulus, e.g. 0.5+1i")
    p.add_argument("--n", type=int, default=32, help="torus grid size")
    p.add_argument("--resolution", type=int, default=None,
                   help="genus-2 resolution (default 12 for verify, else 2)")
    p.add_argument("--tol", type=float, default=1e-10,
                   help="tolerance for exactness checks")
    p.add_argument("--refine", type=int, default=0,
                   help="number of 1-to-4 refinements applied to the mesh")
    p.add_argument("--fd-step", type=float, default=1e-2,
                   help="finite-difference step for variation checks")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("--suite", default="all",
                   help="comma-separated verify suites, or all")
    p.add_argument("--basepoint", type=int, default=None,
                   help="basepoint vertex index")
    p.add_argument("--csv", help="write a per-vertex or per-face CSV dump")
    p.add_argument("--check", choices=("xi", "upsilon", "second"),
                   default="xi")
    p.add_argument("--mu", help="Beltrami JSON (per-face [re, im] pairs)")
    p.add_argument("--lambda", dest="lam", help="second Beltrami JSON")
    return p


def config_of(args):
    cfg = {k: v for k, v in sorted(vars(args).items())}
    cfg["tau"] = [args.tau.real, args.tau.imag]
    return cfg


# -- inputs ------------------------------------------------------------------

def get_mesh(args, default_family=None):
    family = args.family or (None if args.mesh else default_family)
    if args.mesh and args.family:
        raise InputError("give either --mesh or --family, not both")
    try:
        if args.mesh:
            mesh = load_mesh(args.mesh)
        elif family == "torus":
            if args.tau.imag <= 0:
                raise InputError("--tau needs a positive imaginary part")
            mesh = flat_torus(args.tau, args.n)
        elif family in ("octagon", "double-torus"):
            mesh = genus2_mesh(family, args.resolution)
        else:
            raise InputError("a mesh is required: use --mesh or --family")
        for _ in range(args.refine):
            mesh = refine(mesh)
    except (OSError, MeshError) as exc:
        raise InputError(str(exc)) from exc
    p0 = args.basepoint
    if p0 is None:
        p0 = mesh.basepoint if mesh.basepoint is not None else 0
    try:
        return mesh.with_basepoint(p0)
    except MeshError as exc:
        raise InputError(str(exc)) from exc


def make_surface(mesh, tol):
    ops = DECOperators(mesh)
    laplace = LaplaceSolver(ops, rtol=tol)
    basis = harmonic_basis(mesh, ops=ops, laplace=laplace)
    return Surface(mesh, basis, ops)


def read_beltrami(path, n_faces):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read Beltrami file {path}: {exc}") from exc
    if isinstance(data, dict):
        data = data.get("values")
    arr = np.asarray(data, float)
    if arr.shape != (n_faces, 2):
        raise InputError(f"Beltrami file must hold {n_faces} [re, im] pairs")
    try:
        return V.Beltrami(arr[:, 0] + 1j * arr[:, 1])
    except V.BeltramiError as exc:
        raise InputError(str(exc)) from exc


def write_csv(path, label, values):
    values = np.asarray(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([label, "value_re", "value_im"])
        for k, v in enumerate(values):
            v = complex(v)
            w.writerow([k, repr(v.real), repr(v.imag)])


# -- checks ------------------------------------------------------------------

def check(name, anchor, value, tol, mode="le"):
    """One report entry; ``mode`` is ``"le"`` (value ≤ tol) or ``"gt"``."""
    value = float(value)
    if not np.isfinite(value):
        status = "fail"
    elif mode == "le":
        status = "pass" if value <= tol else "fail"
    else:
        status = "pass" if value > tol else "fail"
    return {"name": name, "anchor": anchor, "value": value,
            "tolerance": tol, "mode": mode, "status": status}


def from_report(rep, anchor):
    d = rep.to_dict()
    d["anchor"] = anchor
    return d


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def _smooth_densities(surface, rng, count):
    """Random smooth real face densities (face means of Φ̂-smoothed noise)."""
    ops = surface.ops
    V_ = surface.mesh.n_vertices
    out = []
    for _ in range(count):
        u = surface.green.green_hat(ops.mass0 @ rng.standard_normal(V_))
        out.append(ops.face_mean(u))
    return out


def suite_mesh(s, args, rng):
    mesh = s.mesh
    g = genus(mesh)
    return [
        check("euler_characteristic", "Euler formula",
              abs(mesh.euler_characteristic - (2 - 2 * g)), 0),
        check("edge_length_mismatch", "mesh consistency",
              mesh.length_mismatch(), 1e-12),
    ]


def suite_basis(s, args, rng):
    d = s.basis.diagnostics
    fib = s.fiber_restriction_checks()
    return [
        check("gram_orthonormal", "orthonormal holomorphic basis",
              d["gram_residual"], 1e-10),
        check("isotropy", "H' isotropic", d["isotropy"], 1e-10),
        check("y_ybar", "Y_i . conj(Y_j) = (i/2) delta_ij", d["y_ybar"], 1e-10),
        check("total_B", "canonical volume has mass 1",
              abs(fib["total_B"] - 1), 1e-10),
        check("B_two_routes", "B from omega and from psi",
              fib["B_psi_route"], 1e-10),
    ]


def suite_green(s, args, rng):
    ops, green = s.ops, s.green
    res, mean = 0.0, 0.0
    for rho in _smooth_densities(s, rng, 10):
        load = ops.density_load(rho)
        K = green.green_hat(load)
        r, m = green.residual_hat(load, K)
        res, mean = max(res, r), max(mean, m)
    out = [
        check("green_residual", "Green operator equation", res, 1e-8),
        check("green_mean", "Green operator normalisation", mean, 1e-10),
    ]
    if args.family == "torus" and not args.mesh and args.refine == 0:
        tau, n = args.tau, args.n
        pos = vertex_positions(tau, n)
        p0 = s.mesh.basepoint
        idx = rng.choice(np.delete(np.arange(len(pos)), p0), 20, replace=False)
        ora = torus_green_oracle(tau, pos[idx] - pos[p0])
        err = float(np.max(np.abs(s.h[idx].real - ora)))
        if n >= 64:
            out.append(check("torus_oracle", "lattice Green function", err,
                             1e-3))
        else:
            out.append({"name": "torus_oracle_error", "value": err,
                        "status": "pass", "note": "reported only for n < 64"})
    return out


def suite_invariants(s, args, rng):
    g = s.g
    ag = s.a_g()
    out = []
    if g == 1:
        out.append(check("a_1_zero", "a_1 = 0", abs(ag), 1e-9))
    else:
        out.append(check("a_g_positive", "a_g > 0", ag, 0.0, "gt"))
    scale = max(abs(ag), 1.0)
    out.append(check("a_g_two_routes", "basis sum against tensor contraction",
                     abs(ag - s.a_g_basis()) / scale, 1e-8))
    out.append(check("a_g_basis_invariance", "independence of the basis",
                     s.basis_invariance(rng) / scale, 1e-8))
    worst = -np.inf
    for rho in _smooth_densities(s, rng, 10):
        rho = rho + 1j * _smooth_densities(s, rng, 1)[0]
        worst = max(worst, s.energy_pairing(rho)[0].real)
    out.append(check("energy_negative", "integral of Omega Phi(conj Omega) <= 0",
                     worst, 0.0))
    eq = s.energy_pairing(s.B)[0]
    out.append(check("energy_equality_case", "B Phi(B) = 0", abs(eq), 1e-12))
    fib = s.fiber_restriction_checks()
    out.append(check("eJ_restriction", "e^J on a fiber is (2-2g)B",
                     fib["eJ_vs_B"], 1e-12))
    out.append(check("m_Omega0", "m(Omega_0) = 2g B", fib["m_Omega0_vs_B"],
                     1e-10))
    ir = s.integrability_residuals()
    out.append(check("integrability_degree2", "d omega_2 = omega^omega - I delta",
                     ir["degree2"], 1e-5))
    out.append(check("integrability_degree3", "degree-3 integrability",
                     ir["degree3"], 1e-5))
    if g >= 2:
        out.append(check("Xi_two_forms", "Xi from dK_0 and from nu_0",
                         _rel(s.Xi("nu0"), s.Xi()), 1e-6))
        lhs, rhs = s.xi_upsilon_identity()
        out.append(check("xi_upsilon_identity", "pointwise Xi/Upsilon identity",
                         _rel(lhs, rhs), 1e-2))
        out.append(check("q_two_forms", "q from omega_2 and from nu_0",
                         _rel(s.q_expanded(), s.q_differential()), 1e-6))
        worst = 0.0
        for _ in range(3):
            lam = V.random_beltrami(s, rng, 0.1)
            a, b = s.q_pairing(np.asarray(lam))
            worst = max(worst, _rel(a, b))
        out.append(check("q_pairing", "int q lambda = l(P0) + c", worst, 1e-2))
    return out


def suite_variation(s, args, rng):
    g, h = s.g, args.fd_step
    p0 = s.mesh.basepoint
    out = []
    xi = s.basis.omega1_xi()
    theta = xi.contract("k,k->", np.eye(2 * g)[0])
    phi = xi.contract("k,k->", np.eye(2 * g)[-1])
    mu = V.random_beltrami(s, rng, 0.1)
    lhs, rhs = V.star_variation_identity(s.mesh, theta, phi, mu)
    scale = np.sum(s.mesh.face_areas * np.abs(theta.p * phi.p * np.asarray(mu)))
    out.append(check("star_variation", "first variation of the star",
                     abs(lhs - rhs) / max(scale, 1e-300), 1e-8))
    out.append(from_report(V.check_omega1_dot(s, mu, h), "variation of omega_1"))
    if g == 1:
        out.append(check("Xi_zero", "Xi vanishes on a torus",
                         float(np.max(np.abs(s.Xi()))), 1e-9))
        lam = V.random_beltrami(s, rng, 0.1)
        out.append(from_report(V.second_variation_check(s, lam, mu, h, 1e-8),
                               "second variation of a_g"))
        return out
    out.append(from_report(V.check_a_g_dot(s, mu, h), "first variation of a_g"))
    try:
        mu_h = V.random_beltrami(s, rng, 0.1, exclude=(p0, 3))
    except V.BeltramiError as exc:
        out.append({"name": "h_dot", "anchor": "first variation of h(P0)",
                    "status": "inconclusive", "reason": str(exc)})
    else:
        out.append(from_report(V.check_h_dot(s, mu_h, h),
                               "first variation of h(P0)"))
    out.append(from_report(V.check_omega_prime_circ(s, mu, h),
                           "antiholomorphic variation of omega'"))
    lam = V.random_beltrami(s, rng, 0.1)
    ef = [V.EF1(s, lam, mu, r) for r in ("direct", "rewrite")]
    out.append(check("EF1_two_routes", "E^F_1 formula and its rewrite",
                     _rel(ef[1], ef[0]), 1e-6))
    ej = [V.EJ1(s, lam, mu, r) for r in ("tensor", "projection")]
    P = V.PairData(s, lam, mu)
    ej_scale = max(abs(ej[0]), abs(P.cc))
    out.append(check("EJ1_two_routes", "E^J_1 by contraction and projection",
                     abs(ej[1] - ej[0]) / ej_scale, 1e-2))
    a, b = V.q0_pairing(s, lam)
    out.append(check("Q0_pairing", "int Q_0 lambda = N(L + cI)",
                     float(np.max(np.abs(a - b)) / max(np.max(np.abs(P.L)), 1e-300)),
                     2e-2))
    ed = [V.ED1(s, lam, mu, r) for r in ("difference", "green", "projection")]
    worst = max(abs(ed[i] - ed[j]) / abs(ed[0])
                for i in range(3) for j in range(i + 1, 3))
    out.append(check("ED1_three_routes", "E^D_1 by three formulas", worst, 1e-2))
    out.append(from_report(V.second_variation_check(s, lam, mu, h),
                           "second variation of a_g"))
    return out


SUITE_FUNCS = {"mesh": suite_mesh, "basis": suite_basis, "green": suite_green,
               "invariants": suite_invariants, "variation": suite_variation}


# -- commands ----------------------------------------------------------------

def cmd_info(args):
    mesh = get_mesh(args)
    defects = mesh.cone_defects()
    cones = np.flatnonzero(np.abs(defects) > 1e-9)
    return {"vertices": mesh.n_vertices, "edges": mesh.n_edges,
            "faces": mesh.n_faces, "genus": genus(mesh),
            "euler_characteristic": int(mesh.euler_characteristic),
            "area": float(mesh.total_area),
            "cone_points": [[int(v), float(2 * np.pi - defects[v])]
                            for v in cones],
            "edge_length_mismatch": float(mesh.length_mismatch())}, []


def cmd_gen(args):
    if not args.family:
        raise InputError("gen needs --family")
    mesh = get_mesh(args)
    if args.out is None:
        raise InputError("gen needs --out for the mesh file")
    try:
        save_mesh(mesh, args.out)
    except OSError as exc:
        raise InputError(str(exc)) from exc
    path, args.out = args.out, None  # the report goes to stdout
    return {"mesh_file": path, "vertices": mesh.n_vertices,
            "faces": mesh.n_faces, "genus": genus(mesh)}, []


def cmd_basis(args):
    s = make_surface(get_mesh(args), args.tol)
    P = s.basis.period_matrix()
    if args.csv:
        write_csv(args.csv, "face", s.B)
    return {"genus": s.g,
            "period_matrix": [[[z.real, z.imag] for z in row] for row in P],
            "diagnostics": s.basis.diagnostics}, suite_basis(s, args, None)


def cmd_green(args):
    s = make_surface(get_mesh(args), args.tol)
    h = s.h.real
    if args.csv:
        write_csv(args.csv, "vertex", h)
    rng = np.random.default_rng(args.seed)
    return {"basepoint": s.mesh.basepoint, "h_min": float(h.min()),
            "h_max": float(h.max())}, suite_green(s, args, rng)


def cmd_ag(args):
    s = make_surface(get_mesh(args), args.tol)
    ag, agb = s.a_g(), s.a_g_basis()
    rng = np.random.default_rng(args.seed)
    checks = suite_invariants(s, args, rng)[:3]
    return {"genus": s.g, "a_g": ag, "a_g_basis": agb}, checks


def cmd_verify(args):
    suites = SUITES if args.suite == "all" else tuple(args.suite.split(","))
    bad = [x for x in suites if x not in SUITE_FUNCS]
    if bad:
        raise InputError(f"unknown suite(s): {', '.join(bad)}")
    s = make_surface(get_mesh(args, "double-torus"), args.tol)
    checks = []
    for name in suites:
        rng = np.random.default_rng([args.seed, SUITES.index(name)])
        for c in SUITE_FUNCS[name](s, args, rng):
            c["suite"] = name
            checks.append(c)
    return {"genus": s.g, "a_g": s.a_g(), "faces": s.mesh.n_faces}, checks


def cmd_variation(args):
    s = make_surface(get_mesh(args), args.tol)
    rng = np.random.default_rng(args.seed)
    p0 = s.mesh.basepoint
    F = s.mesh.n_faces
    if args.mu:
        mu = read_beltrami(args.mu, F)
    elif args.check == "upsilon":
        mu = V.random_beltrami(s, rng, 0.1, exclude=(p0, 3))
    else:
        mu = V.random_beltrami(s, rng, 0.1)
    h = args.fd_step
    if args.check == "xi":
        rep = V.check_a_g_dot(s, mu, h)
        anchor = "first variation of a_g"
        if args.csv:
            write_csv(args.csv, "face", s.Xi() if s.g > 1 else np.zeros(F))
    elif args.check == "upsilon":
        try:
            rep = V.check_h_dot(s, mu, h)
        except V.BeltramiError as exc:
            raise InputError(str(exc)) from exc
        anchor = "first variation of h(P0)"
        if args.csv:
            write_csv(args.csv, "face", s.Upsilon())
    else:
        lam = read_beltrami(args.lam, F) if args.lam else \
            V.random_beltrami(s, rng, 0.1)
        tol = 1e-8 if s.g == 1 else 0.10
        rep = V.second_variation_check(s, lam, mu, h, tol)
        anchor = "second variation of a_g"
    checks = [from_report(rep, anchor)]
    if rep.status == "inconclusive":
        print(f"warning: {rep.details.get('reason', 'inconclusive')}",
              file=sys.stderr)
    return {"genus": s.g}, checks


HANDLERS = {"info": cmd_info, "gen": cmd_gen, "basis": cmd_basis,
            "green": cmd_green, "ag": cmd_ag, "verify": cmd_verify,
            "variation": cmd_variation}


def _clean(obj):
    """Make numpy scalars JSON serialisable."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def run(argv=None):
    """Run one command; returns (exit code, report dict)."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command not in HANDLERS:
        print(f"arakelovlab: unknown command {args.command!r}; "
              f"choose from {', '.join(COMMANDS)}", file=sys.stderr)
        return 2, None
    if args.resolution is None:
        args.resolution = VERIFY_RESOLUTION if args.command == "verify" else 2
    cfg = config_of(args)
    start = time.perf_counter()
    try:
        results, checks = HANDLERS[args.command](args)
    except (InputError, BasisError, SolverError, MeshError,
            V.BeltramiError) as exc:
        print(f"arakelovlab: {exc}", file=sys.stderr)
        return 3, None
    report = {
        "schema": SCHEMA,
        "artifact": "arakelovlab",
        "version": __version__,
        "command": args.command,
        "config": cfg,
        "results": results,
        "checks": checks,
        "status": ("fail" if any(c["status"] == "fail" for c in checks)
                   else "pass"),
        "timing": {"seconds": time.perf_counter() - start},
    }
    report = _clean(report)
    text = json.dumps(report, indent=2, allow_nan=False) + "\n"
    if args.out:
        try:
            with open(args.out, "w") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"arakelovlab: {exc}", file=sys.stderr)
            return 3, report
    else:
        sys.stdout.write(text)
    return (1 if report["status"] == "fail" else 0), report


def main(argv=None):
    try:
        code, _ = run(argv)
    except SystemExit as exc:  # argparse usage errors
        code = exc.code if isinstance(exc.code, int) else 2
        if code == 2:
            code = _usage_code(argv)
    sys.exit(code)


def _usage_code(argv):
    """argparse exits with 2 for any usage error; only a bad command keeps 2."""
    argv = sys.argv[1:] if argv is None else argv
    if not argv or argv[0].startswith("-") or argv[0] not in COMMANDS:
        return 2
    return 3


if __name__ == "__main__":
    main()
