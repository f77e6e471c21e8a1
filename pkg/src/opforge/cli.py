"""Command line entry point ``opforge``.

Exit codes: 0 success, 1 a verification failed, 2 usage error, 3 a resource
guard was exceeded.  Every failing verification also writes a JSON witness
file (``--witness``, default ``opforge-witness.json``).
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import io
import itertools
import json
import logging
import os
import random
import re
import signal
import sys
import tempfile
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, TextIO

from . import gelfand_fuks as gf
from . import graph_kit as gk
from . import lie_operad as lo
from . import linfty as li
from . import weights as wt
from . import wlie_complex as wc
from .exact_core import BilinearForm, SparseTensor

log = logging.getLogger(__name__)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_GUARD = 0, 1, 2, 3
DEFAULT_WITNESS = "opforge-witness.json"


class UsageError(Exception):
    pass


class GuardExceeded(Exception):
    pass


# ------------------------------------------------------------------ plumbing


def max_workers() -> int:
    raw = os.environ.get("OPFORGE_MAX_THREADS")
    cpus = os.cpu_count() or 1
    if raw is None:
        return cpus
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"OPFORGE_MAX_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("OPFORGE_MAX_THREADS must be at least 1")
    return min(n, cpus)


def write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".opforge-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def emit(args, text: str, out: TextIO, summary: str | None = None) -> None:
    """Write ``text`` to ``--out`` if given (printing ``summary``), else to stdout."""
    if getattr(args, "out", None):
        write_atomic(args.out, text)
        if summary:
            print(summary, file=out)
    else:
        out.write(text)


def fail(args, witness: dict, out: TextIO, line: str) -> int:
    write_atomic(args.witness, dump_json(witness))
    print(line, file=out)
    print(f"witness written to {args.witness}", file=out)
    return EXIT_FAIL


def positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("guards must be positive")
    return v


def nonneg(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("expected a nonnegative integer")
    return v


def read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from None


def load_graph(spec: str) -> gk.OrientedGraph:
    named = {"theta": gk.theta_graph, "k4": gk.k4_graph}
    if spec in named:
        return named[spec]()
    return gk.OrientedGraph.from_json(read_json(spec))


# ------------------------------------------------------------------ graphs


def cmd_graphs_enum(args, out):
    spec = gk.GraphClassSpec(
        args.family, legs_in=args.n, legs_out=args.m, genus=args.genus, max_vertices=args.max_vertices,
        allow_self_loops=not args.no_self_loops, connected=not args.disconnected,
        n_vertices=args.vertices, max_class_size=args.max_class_size,
    )
    graphs = gk.enumerate_graphs(spec)
    conv = gk.DEFAULT_CONVENTION[args.family]
    rows = [(wt.graph_id(g), g, gk.is_zero_class(g, conv)) for g in graphs]
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["graph_id", "vertices", "edges", "legs_in", "legs_out", "zero_class"])
        for gid, g, z in rows:
            w.writerow([gid, g.n_vertices, len(g.edges), len(g.legs_in()), len(g.legs_out()), int(z)])
        text = buf.getvalue()
    else:
        text = dump_json({"family": args.family, "count": len(rows),
                          "graphs": [{"id": gid, "zero_class": z, "graph": g.to_json()} for gid, g, z in rows]})
    emit(args, text, out, f"{len(rows)} graphs")
    return EXIT_OK


# ------------------------------------------------------------------ lie


def cmd_lie_dim(args, out):
    if args.trace:
        print(lo.trace_space_dim(args.n), file=out)
    else:
        print(lo.lie_dim(args.n, args.method), file=out)
    return EXIT_OK


_TERM = re.compile(r"\s*([+-])?\s*(?:(\d+(?:/\d+)?)\s*\*)?\s*")


def parse_combination(text: str) -> list[tuple[Fraction, lo.Expr]]:
    """``"[x1,[x2,x3]] - 2*[x2,[x1,x3]]"`` as a list of (coefficient, expression)."""
    terms = []
    pos = 0
    text = text.strip()
    if not text:
        raise UsageError("empty expression")
    while pos < len(text):
        m = _TERM.match(text, pos)
        sign = -1 if m.group(1) == "-" else 1
        if terms and m.group(1) is None:
            raise UsageError(f"expected '+' or '-' at position {pos}")
        coef = Fraction(m.group(2)) if m.group(2) else Fraction(1)
        pos = m.end()
        depth, end = 0, pos
        while end < len(text):
            ch = text[end]
            depth += ch == "["
            depth -= ch == "]"
            end += 1
            if depth == 0 and (end >= len(text) or text[end] in "+- "):
                break
        chunk = text[pos:end].strip()
        if not chunk:
            raise UsageError(f"missing expression at position {pos}")
        terms.append((sign * coef, lo.parse_bracket(chunk)))
        pos = end
    return terms


def cmd_lie_normalform(args, out):
    elem = lo.lie_normal_form(parse_combination(args.expr), args.arity)
    if args.format == "json":
        out.write(dump_json(elem.to_json()))
    else:
        print(elem, file=out)
    return EXIT_OK


# ------------------------------------------------------------------ complexes


def chain_basis(args) -> wc.ChainBasis:
    return wc.chain_space(args.family, n=args.n, m=args.m, g=args.genus, max_vertices=args.max_vertices,
                          max_class_size=args.max_class_size)


def cmd_complex_ranks(args, out):
    basis = chain_basis(args)
    text = wc.rank_table_csv(basis, wc.cohomology_ranks(basis))
    emit(args, text, out, f"{len(basis.degrees)} degrees")
    return EXIT_OK


def cmd_complex_dsquared(args, out):
    basis = chain_basis(args)
    bad = {k: mat for k, mat in wc.d_squared(basis).items() if not mat.is_zero()}
    if not bad:
        print("PASS d²=0", file=out)
        return EXIT_OK
    witness = {"family": args.family, "params": basis.params,
               "degrees": {str(k): mat.to_triplets() for k, mat in sorted(bad.items())}}
    return fail(args, witness, out, f"FAIL d²≠0 in degrees {sorted(bad)}")


# ------------------------------------------------------------------ linfty


def lie_bracket_family(alg: wt.MetricLieAlgebra) -> li.BracketFamily:
    return li.BracketFamily(li.GradedSpace.from_dims({0: alg.dim}), None, {2: alg.bracket})


def perturbed_sl2_family() -> li.BracketFamily:
    # basis e, h, f; [h, f] = -2f + h breaks Jacobi
    base = wt.sl2().bracket
    ent = dict(base.entries)
    ent[(1, 2, 1)] = Fraction(1)
    ent[(2, 1, 1)] = Fraction(-1)
    return li.BracketFamily(li.GradedSpace.from_dims({0: 3}), None, {2: SparseTensor(base.dims, ent)})


def cmd_linfty_check(args, out):
    if args.structure:
        fam = li.BracketFamily.from_json(read_json(args.structure))
    elif args.preset == "sl2":
        fam = lie_bracket_family(wt.sl2())
    else:
        fam = perturbed_sl2_family()
    report = li.check_weak_lie(fam, args.max_arity)
    data = {"weak_lie": report.to_json()}
    if args.word_bound:
        sq = li.bar_differential(fam, args.word_bound)
        data["bar"] = sq.to_json()
        data["agree"] = sq.passed == report.passed
    emit(args, dump_json(data), out)
    if report.passed:
        print(f"PASS residuals vanish up to arity {report.max_arity}", file=out)
        return EXIT_OK
    return fail(args, data, out, f"FAIL residuals at arities {report.failing_arities()}")


# ------------------------------------------------------------------ weights


def load_algebra(args, check: bool = True) -> wt.MetricLieAlgebra:
    if args.algebra_file:
        data = read_json(args.algebra_file)
        form = BilinearForm.from_rows([[Fraction(x) for x in row] for row in data["form"]], "symmetric")
        alg = wt.MetricLieAlgebra(data.get("name", "custom"), SparseTensor.from_json(data["bracket"]), form, check)
    else:
        alg = wt.preset(args.algebra)
    if args.form == "killing":
        alg = wt.MetricLieAlgebra(alg.name, alg.bracket, wt.killing_form(alg.bracket), check)
    return alg


def random_family(dim: int, k: int, seed: int) -> wt.SymplecticCubicFamily:
    rng = random.Random(seed)
    cubics = []
    for _ in range(k):
        coeffs = {t: rng.randint(-2, 2) for t in itertools.combinations_with_replacement(range(dim), 3)}
        cubics.append(wt.symmetric_cubic(dim, coeffs))
    return wt.SymplecticCubicFamily(BilinearForm.standard_symplectic(dim), tuple(cubics))


def load_family(args) -> wt.SymplecticCubicFamily | None:
    if args.symplectic:
        data = read_json(args.symplectic)
        form = BilinearForm.from_rows([[Fraction(x) for x in row] for row in data["form"]], "antisymmetric")
        return wt.SymplecticCubicFamily(form, tuple(SparseTensor.from_json(t) for t in data["cubics"]))
    if args.random_family:
        return random_family(*args.random_family)
    return None


def closed_graphs(max_vertices: int) -> list[gk.OrientedGraph]:
    out = []
    for l in range(2, max_vertices + 1, 2):
        out += gk.enumerate_graphs(gk.GraphClassSpec("trivalent_closed", n_vertices=l, max_vertices=l,
                                                     allow_self_loops=False))
    return out


def cmd_weights_table(args, out):
    fam = load_family(args)
    table = wt.WeightTable()
    graphs = closed_graphs(args.max_vertices)
    if fam is None:
        alg = load_algebra(args)
        for g in graphs:
            gid = wt.graph_id(g)
            table.rows[(gid, ())] = wt.weight_closed_graph(alg, g)
            table.sizes[gid] = g.n_vertices
    else:
        for g in graphs:
            table.rows.update(wt.symplectic_weight(fam, g).rows)
    emit(args, table.to_csv(), out, f"{len(graphs)} graphs, {len(table.rows)} rows")
    return EXIT_OK


def cmd_weights_ihx(args, out):
    fam = load_family(args)
    data: dict = {}
    if fam is None:
        alg = load_algebra(args, check=False)
        res = wt.ihx_residual(alg)
        data["tensor_nnz"] = res.nnz()
        data["tensor_witnesses"] = [{"idx": [i + 1 for i in idx], "value": str(v)} for idx, v in sorted(res.items())[:5]]
        bad = []
        checked = 0
        if res.is_zero():
            for g in closed_graphs(args.max_vertices):
                for e in range(len(g.edges)):
                    try:
                        tri = wt.ihx_triple(g, e)
                    except gk.GraphError:
                        continue
                    checked += 1
                    total = sum(wt.weight_closed_graph(alg, t) for t in tri)
                    if total:
                        bad.append({"graph": wt.graph_id(g), "edge": e + 1, "sum": str(total)})
        data["weight_triples"] = checked
        data["weight_failures"] = bad
        passed = res.is_zero() and not bad
    else:
        pairs = {}
        for i, j in itertools.combinations(range(fam.k), 2):
            r = wt.ihx_pair_residual(fam, i, j)
            if not r.is_zero():
                pairs[f"{i + 1},{j + 1}"] = r.nnz()
        data["pair_residual_nnz"] = pairs
        passed = not pairs
    emit(args, dump_json(data), out)
    if passed:
        print("PASS IHX", file=out)
        return EXIT_OK
    return fail(args, data, out, "FAIL IHX")


def cmd_weights_kappa(args, out):
    t = wt.kappa_eval(load_algebra(args), args.n)
    emit(args, dump_json(t.to_json()), out, f"{t.nnz()} nonzero entries")
    return EXIT_OK


def cmd_weights_homogeneity(args, out):
    fam = load_family(args)
    if fam is None:
        raise UsageError("homogeneity needs --symplectic or --random-family")
    g = load_graph(args.graph)
    try:
        s = wt.homogeneity_exponent(fam, g, Fraction(args.lam))
    except wt.UndeterminedExponentError as exc:
        return fail(args, {"graph": wt.graph_id(g), "error": str(exc)}, out, f"FAIL {exc}")
    print(f"exponent {s} (l = {g.n_vertices}, -l/2 = {Fraction(-g.n_vertices, 2)})", file=out)
    return EXIT_OK


# ------------------------------------------------------------------ gelfand-fuks


def _verify_batch(variant: str, r: int, max_degree: int, graphs: list) -> list[dict]:
    alg = gf.FormalFieldAlgebra(variant, r, max_degree)
    return [gf.verify_morphism(g, alg).to_json() for g in graphs]


def cmd_gf_verify(args, out):
    if args.graph:
        graphs = [load_graph(args.graph)]
    else:
        graphs = gf.morphism_graphs(args.variant, args.max_vertices, args.max_legs, args.max_genus)
    need = max((gf.required_degree(g, args.variant) for g in graphs), default=0)
    max_degree = max(need, args.max_degree or 0)
    gf.FormalFieldAlgebra(args.variant, args.r, max_degree)  # validate parameters up front
    workers = min(max_workers(), max(1, len(graphs)))
    if workers == 1:
        reports = _verify_batch(args.variant, args.r, max_degree, graphs)
    else:
        chunks = [graphs[i::workers] for i in range(workers)]
        with cf.ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_verify_batch, itertools.repeat(args.variant), itertools.repeat(args.r),
                                  itertools.repeat(max_degree), chunks))
        # undo the round-robin split so the order matches the graph list
        reports = [None] * len(graphs)
        for i, part in enumerate(parts):
            reports[i::workers] = part
    failed = [rep for rep in reports if not rep["passed"]]
    emit(args, dump_json({"variant": args.variant, "r": args.r, "reports": reports}), out)
    line = f"{len(reports) - len(failed)}/{len(reports)} graphs ({args.variant}, r={args.r})"
    if not failed:
        print("PASS " + line, file=out)
        return EXIT_OK
    return fail(args, {"variant": args.variant, "r": args.r, "failures": failed}, out, "FAIL " + line)


def cmd_gf_invdim(args, out):
    try:
        sig = [int(x) for x in args.signature.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad signature {args.signature!r}; expected comma separated degrees") from None
    dim = gf.invariant_dimension(sig, args.n, args.m, args.r, args.variant, args.max_unknowns)
    count = gf.admissible_graph_count(sig, args.n, args.m, args.variant)
    print(f"invariant_dimension {dim}", file=out)
    print(f"graph_count {count}", file=out)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the main output here instead of stdout")
    common.add_argument("--witness", default=DEFAULT_WITNESS, help="witness file written on FAIL")
    common.add_argument("--time-budget", type=positive, metavar="SECONDS", help="abort with exit 3 after this long")

    p = argparse.ArgumentParser(prog="opforge", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="batch file with a list of jobs")
    p.add_argument("-v", "--verbose", action="store_true")
    top = p.add_subparsers(dest="group")

    def group(name, help):
        sp = top.add_parser(name, help=help)
        return sp.add_subparsers(dest="command", required=True)

    g = group("graphs", "graph enumeration")
    s = g.add_parser("enum", parents=[common])
    s.add_argument("--family", required=True, choices=[f for f in gk.FAMILIES if f != "generic"])
    s.add_argument("--n", type=nonneg, default=0, help="input legs")
    s.add_argument("--m", type=nonneg, default=0, help="output legs")
    s.add_argument("--genus", type=nonneg, default=0)
    s.add_argument("--max-vertices", type=positive, default=4)
    s.add_argument("--vertices", type=positive)
    s.add_argument("--no-self-loops", action="store_true")
    s.add_argument("--disconnected", action="store_true")
    s.add_argument("--max-class-size", type=positive, default=200_000)
    s.add_argument("--format", choices=["json", "csv"], default="json")
    s.set_defaults(func=cmd_graphs_enum)

    g = group("lie", "the Lie operad")
    s = g.add_parser("dim", parents=[common])
    s.add_argument("--n", type=positive, required=True)
    s.add_argument("--trace", action="store_true", help="dimension of the trace module instead")
    s.add_argument("--method", choices=["auto", "exact", "modular"], default="auto")
    s.set_defaults(func=cmd_lie_dim)
    s = g.add_parser("normalform", parents=[common])
    s.add_argument("--expr", required=True, help='e.g. "[x1,[x2,x3]] + [x2,[x3,x1]]"')
    s.add_argument("--arity", type=positive)
    s.add_argument("--format", choices=["text", "json"], default="text")
    s.set_defaults(func=cmd_lie_normalform)

    g = group("complex", "graph complexes")
    for name, func in (("ranks", cmd_complex_ranks), ("dsquared", cmd_complex_dsquared)):
        s = g.add_parser(name, parents=[common])
        s.add_argument("--family", required=True, choices=sorted(wc.FAMILY_CONVENTION))
        s.add_argument("--n", type=nonneg, default=0)
        s.add_argument("--m", type=nonneg, default=0)
        s.add_argument("--genus", type=nonneg, default=0)
        s.add_argument("--max-vertices", type=positive, default=8)
        s.add_argument("--max-class-size", type=positive, default=200_000)
        s.set_defaults(func=func)

    g = group("linfty", "weak Lie (L-infinity) structures")
    s = g.add_parser("check", parents=[common])
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--structure", help="structure JSON file")
    src.add_argument("--preset", choices=["sl2", "sl2-perturbed"])
    s.add_argument("--max-arity", type=positive)
    s.add_argument("--word-bound", type=nonneg, default=0, help="also check D²=0 up to this word length")
    s.set_defaults(func=cmd_linfty_check)

    g = group("weights", "weight systems")
    alg_opts = argparse.ArgumentParser(add_help=False)
    alg_opts.add_argument("--algebra", default="sl2", help="sl2, so3, gl2 or abelian(n)")
    alg_opts.add_argument("--algebra-file", help="algebra JSON file")
    alg_opts.add_argument("--form", choices=["preset", "killing"], default="preset")
    fam_opts = argparse.ArgumentParser(add_help=False)
    fam_opts.add_argument("--symplectic", help="symplectic cubic family JSON file")
    fam_opts.add_argument("--random-family", nargs=3, type=positive, metavar=("DIM", "K", "SEED"))
    s = g.add_parser("table", parents=[common, alg_opts, fam_opts])
    s.add_argument("--max-vertices", type=positive, default=4)
    s.set_defaults(func=cmd_weights_table)
    s = g.add_parser("ihx", parents=[common, alg_opts, fam_opts])
    s.add_argument("--max-vertices", type=positive, default=4)
    s.set_defaults(func=cmd_weights_ihx)
    s = g.add_parser("kappa", parents=[common, alg_opts])
    s.add_argument("--n", type=positive, required=True)
    s.set_defaults(func=cmd_weights_kappa)
    s = g.add_parser("homogeneity", parents=[common, fam_opts])
    s.add_argument("--graph", default="theta", help="theta, k4 or a graph JSON file")
    s.add_argument("--lambda", dest="lam", default="2")
    s.set_defaults(func=cmd_weights_homogeneity)

    g = group("gf", "Gelfand-Fuks graph cochains")
    s = g.add_parser("verify", parents=[common])
    s.add_argument("--variant", choices=["vect", "ham"], default="vect")
    s.add_argument("--r", type=positive, default=2)
    s.add_argument("--graph", help="graph JSON file; default is the whole envelope")
    s.add_argument("--max-vertices", type=positive, default=3)
    s.add_argument("--max-legs", type=positive, default=4)
    s.add_argument("--max-genus", type=nonneg, default=2)
    s.add_argument("--max-degree", type=positive)
    s.set_defaults(func=cmd_gf_verify)
    s = g.add_parser("invdim", parents=[common])
    s.add_argument("--signature", required=True, help="vertex degrees, e.g. 2,2")
    s.add_argument("--n", type=nonneg, required=True)
    s.add_argument("--m", type=nonneg, default=0)
    s.add_argument("--r", type=positive, required=True)
    s.add_argument("--variant", choices=["vect", "ham"], default="vect")
    s.add_argument("--max-unknowns", type=positive, default=60_000)
    s.set_defaults(func=cmd_gf_invdim)
    return p


# ------------------------------------------------------------------ batch


@dataclass(frozen=True)
class JobConfig:
    command: str
    params: dict = field(default_factory=dict)
    guards: dict = field(default_factory=dict)
    out: str | None = None
    format: str | None = None

    def __post_init__(self):
        for k, v in self.guards.items():
            if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
                raise UsageError(f"guard {k} must be a positive integer")
        if self.format not in (None, "json", "csv"):
            raise UsageError(f"output format must be json or csv, got {self.format!r}")

    @classmethod
    def from_json(cls, data) -> "JobConfig":
        if not isinstance(data, dict) or "command" not in data:
            raise UsageError("each job needs a 'command'")
        extra = set(data) - {"command", "params", "guards", "out", "format"}
        if extra:
            raise UsageError(f"unknown job keys {sorted(extra)}")
        return cls(data["command"], dict(data.get("params", {})), dict(data.get("guards", {})),
                   data.get("out"), data.get("format"))

    def to_argv(self) -> list[str]:
        argv = self.command.split()
        for k, v in list(self.params.items()) + list(self.guards.items()):
            flag = "--" + k.replace("_", "-")
            if v is True:
                argv.append(flag)
            elif v is False or v is None:
                continue
            elif isinstance(v, list):
                argv += [flag] + [str(x) for x in v]
            else:
                argv += [flag, str(v)]
        if self.out:
            argv += ["--out", self.out]
        if self.format:
            argv += ["--format", self.format]
        return argv


def _run_captured(argv: list[str]) -> tuple[int, str]:
    buf = io.StringIO()
    code = run(argv, buf)
    return code, buf.getvalue()


def run_batch(path: str, out: TextIO) -> int:
    data = read_json(path)
    jobs = data.get("jobs") if isinstance(data, dict) else data
    if not isinstance(jobs, list):
        raise UsageError("config must be a list of jobs or an object with a 'jobs' list")
    argvs = [JobConfig.from_json(j).to_argv() for j in jobs]
    workers = min(max_workers(), max(1, len(argvs)))
    if workers == 1:
        results = [_run_captured(a) for a in argvs]
    else:
        with cf.ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_captured, argvs))
    worst = EXIT_OK
    for i, (argv, (code, text)) in enumerate(zip(argvs, results), 1):
        print(f"== job {i}: {' '.join(argv)} (exit {code})", file=out)
        out.write(text)
        worst = max(worst, code)
    return worst


# ------------------------------------------------------------------ entry


def _alarm(signum, frame):
    raise GuardExceeded("time budget exceeded")


def run(argv: Sequence[str] | None = None, stdout: TextIO | None = None) -> int:
    out = stdout if stdout is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    budget = getattr(args, "time_budget", None)
    timed = budget and threading.current_thread() is threading.main_thread()
    if timed:
        old = signal.signal(signal.SIGALRM, _alarm)
        signal.alarm(budget)
    try:
        if args.config:
            if args.group:
                raise UsageError("--config cannot be combined with a subcommand")
            return run_batch(args.config, out)
        if not args.group:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args, out)
    except (GuardExceeded, gk.ResourceGuardError) as exc:
        print(f"guard exceeded: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (UsageError, ValueError, KeyError) as exc:
        # ValueError covers the library's parameter errors (bad presets, degenerate forms, ranges)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if timed:
            signal.alarm(0)
            signal.signal(signal.SIGALRM, old)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
