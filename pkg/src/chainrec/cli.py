"""Command-line interface.

Exit status: 0 on success, 2 for unreadable or invalid input, 3 for a
violated precondition (for example epsilon < 3 delta), 4 when a construction
premise fails.  Errors are written to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from fractions import Fraction

from . import serialize as ser
from .complex import VertexMap, iterated_subdivision, mesh, mesh_sq
from .crush import crush_report, crush_vertex_map, poly_pipeline, skeleton_compress
from .engine import cr_eps, uniform_weights
from .errors import ChainrecError, FormatError, InputError, EpsilonTooSmall, InvalidPeriod
from .net import map_from_vertex_map, sample_net
from .perturb import build_perturbation, make_plan, verify_density, verify_orbits, verify_robustness
from .svg import render_svg

COMMANDS = ("subdivide", "crush-map", "compress", "cr-analyze", "perturb", "pipeline")


@dataclass
class RunConfig:
    command: str
    complex: str | None = None
    map: str | None = None
    out: str | None = None
    report: str | None = None
    plan: str | None = None
    svg: str | None = None
    measure: str | None = None
    epsilon: Fraction | None = None
    delta: Fraction | None = None
    l: int = 2
    k_depth: int | None = None
    times: int = 1
    max_depth: int = 6
    seed: int = 0
    beta: float | None = None
    trials: int = 20

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if self.epsilon is not None and self.delta is not None and self.epsilon < 3 * self.delta:
            raise EpsilonTooSmall(
                f"epsilon {self.epsilon} is below 3*delta = {3 * self.delta}",
                epsilon=str(self.epsilon), delta=str(self.delta),
            )
        if self.command == "perturb" and self.l < 2:
            raise InvalidPeriod(f"l must be at least 2, got {self.l}", l=self.l)


def _need(value, flag):
    if value is None:
        raise InputError(f"{flag} is required")
    return value


def _emit(cfg: RunConfig, report: dict, stdout):
    text = ser.dumps(report)
    if cfg.report:
        with open(cfg.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def _default_delta(K, cfg):
    return cfg.delta if cfg.delta is not None else _mesh_frac(K) / 40


def _mesh_frac(K) -> Fraction:
    # a rational lower bound on mesh(K) keeps delta = mesh / 40 conservative
    m = Fraction(mesh(K)).limit_denominator(10**6)
    while m * m > mesh_sq(K):
        m -= Fraction(1, 10**6)
    return m


def _sampled(K, m, delta):
    if isinstance(m, VertexMap):
        return map_from_vertex_map(sample_net(K, delta), m)
    return m


def _cmd_subdivide(cfg, stdout):
    K = ser.read_complex(_need(cfg.complex, "--complex"))
    K1 = iterated_subdivision(K, cfg.times)
    ser.write_complex(_need(cfg.out, "--out"), K1)
    _emit(cfg, {"vertices": len(K1.vertices), "simplices": len(K1), "dim": K1.dim, "mesh": mesh(K1)}, stdout)


def _sibling(path, suffix):
    stem, ext = os.path.splitext(path)
    return f"{stem}{suffix}{ext or '.json'}"


def _cmd_crush_map(cfg, stdout):
    K = ser.read_complex(_need(cfg.complex, "--complex"))
    out = _need(cfg.out, "--out")
    pair = crush_vertex_map(K)
    k1_path, k2_path = _sibling(out, "_K1"), _sibling(out, "_K2")
    ser.write_complex(k1_path, pair.first)
    ser.write_complex(k2_path, pair.second)
    base = os.path.dirname(os.path.abspath(out))
    ser.write_vertex_map(out, pair.g, os.path.relpath(k2_path, base), os.path.relpath(k1_path, base))
    delta = _default_delta(K, cfg)
    net = sample_net(K, delta)
    report = crush_report(pair, net, cfg.epsilon)
    if cfg.svg:
        G = map_from_vertex_map(net, pair.g)
        crs = cr_eps(G, cfg.epsilon if cfg.epsilon is not None else 3 * delta)
        _write_svg(cfg.svg, K, [("CR", net.points[crs.cr_points])])
    _emit(cfg, report, stdout)


def _cmd_compress(cfg, stdout):
    L = ser.read_complex(_need(cfg.complex, "--complex"))
    f = ser.read_map(_need(cfg.map, "--map"), L)
    if not isinstance(f, VertexMap):
        raise FormatError("compress needs a vertex map")
    res = skeleton_compress(L, f, cfg.k_depth)
    ser.write_vertex_map(_need(cfg.out, "--out"), res.h)
    delta = _default_delta(L, cfg)
    net = sample_net(L, delta)
    H = map_from_vertex_map(net, res.h)
    Fm = map_from_vertex_map(net, f)
    eps = cfg.epsilon if cfg.epsilon is not None else 3 * delta
    rep = cr_eps(H, eps)
    m = mesh(L)
    slack = float(2 * delta + eps)
    d_id = float(((H.images - net.points) ** 2).sum(axis=1).max() ** 0.5)
    _emit(cfg, {
        "mesh": m, "k": res.k, "sup_dist_to_id": d_id, "sup_dist_f_h": Fm.sup_distance(H),
        "d1_cr": rep.d1, "slack": slack, "d1_ok": rep.d1 <= m + slack,
        "epsilon": float(eps), "delta": float(delta), "cr_count": rep.cr_count,
    }, stdout)


def _write_svg(path, K, overlays):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(K, overlays))


def _cmd_cr_analyze(cfg, stdout):
    K = ser.read_complex(_need(cfg.complex, "--complex"))
    m = ser.read_map(_need(cfg.map, "--map"), K)
    eps = _need(cfg.epsilon, "--epsilon")
    if isinstance(m, VertexMap):
        f = _sampled(K, m, _need(cfg.delta, "--delta"))
    else:
        f = m
        if cfg.delta is not None and cfg.delta != f.net.delta:
            raise InputError("--delta disagrees with the sampled map's delta")
    weights = ser.read_weights(cfg.measure, len(f.net)) if cfg.measure else uniform_weights(f.net)
    rep = cr_eps(f, eps, weights=weights)
    if cfg.svg:
        _write_svg(cfg.svg, K, [("CR", f.net.points[rep.cr_points])])
    _emit(cfg, rep.to_json(), stdout)


def _cmd_perturb(cfg, stdout):
    K = ser.read_complex(_need(cfg.complex, "--complex"))
    m = ser.read_map(_need(cfg.map, "--map"), K)
    eps = _need(cfg.epsilon, "--epsilon")
    f = _sampled(K, m, _need(cfg.delta, "--delta") if isinstance(m, VertexMap) else None)
    plan = make_plan(f, eps, cfg.l, cfg.seed)
    pm = build_perturbation(f, plan)
    ser.write_sampled_map(_need(cfg.out, "--out"), pm.g_prime)
    ser.write_json(cfg.plan or _sibling(cfg.out, "_plan"), plan.to_json())
    beta = cfg.beta if cfg.beta is not None else float(plan.rho) / 2
    report = {
        "sup_distance": pm.sup_distance,
        "delta_prime": float(plan.delta_prime),
        "epsilon": float(eps),
        "lambda": float(plan.lam),
        "rho": float(plan.rho),
        "sites": len(plan.sites),
        "cells": plan.n_cells,
        "orbits": verify_orbits(pm),
        "density": verify_density(pm, eps),
        "robustness": verify_robustness(pm, beta, cfg.trials, cfg.seed),
    }
    if cfg.svg:
        _write_svg(cfg.svg, K, [("periodic", f.net.points[pm.periodic_points])])
    _emit(cfg, report, stdout)


def _cmd_pipeline(cfg, stdout):
    L = ser.read_complex(_need(cfg.complex, "--complex"))
    m = ser.read_map(_need(cfg.map, "--map"), L)
    eps = _need(cfg.epsilon, "--epsilon")
    F = _sampled(L, m, _default_delta(L, cfg))
    res = poly_pipeline(L, F, eps, max_depth=cfg.max_depth)
    if cfg.out:
        ser.write_sampled_map(cfg.out, res.H)
    _emit(cfg, res.report, stdout)


HANDLERS = {
    "subdivide": _cmd_subdivide,
    "crush-map": _cmd_crush_map,
    "compress": _cmd_compress,
    "cr-analyze": _cmd_cr_analyze,
    "perturb": _cmd_perturb,
    "pipeline": _cmd_pipeline,
}


def run(cfg: RunConfig, stdout=None) -> int:
    HANDLERS[cfg.command](cfg, stdout or sys.stdout)
    return 0


def _rational(text):
    try:
        return ser.parse_rational(text)
    except FormatError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chainrec", description="Chain recurrence tools for PL self-maps.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, complex_=True, map_=False, out=True):
        if complex_:
            sp.add_argument("--complex", required=True, help="complex JSON")
        if map_:
            sp.add_argument("--map", required=True, help="vertex-map or sampled-map JSON")
        if out:
            sp.add_argument("--out", required=True, help="output JSON")
        sp.add_argument("--report", help="write the report here instead of stdout")

    sp = sub.add_parser("subdivide", help="barycentric subdivision")
    common(sp)
    sp.add_argument("--times", type=int, default=1)

    sp = sub.add_parser("crush-map", help="crush vertex map on K''")
    common(sp)
    sp.add_argument("--delta", type=_rational)
    sp.add_argument("--epsilon", type=_rational)
    sp.add_argument("--svg")

    sp = sub.add_parser("compress", help="compose a vertex map with the crush map")
    common(sp, map_=True)
    sp.add_argument("--k", dest="k_depth", type=int)
    sp.add_argument("--delta", type=_rational)
    sp.add_argument("--epsilon", type=_rational)

    sp = sub.add_parser("cr-analyze", help="eps-chain recurrent set of a map")
    common(sp, map_=True, out=False)
    sp.add_argument("--epsilon", type=_rational, required=True)
    sp.add_argument("--delta", type=_rational)
    sp.add_argument("--measure", help="weights JSON")
    sp.add_argument("--svg")

    sp = sub.add_parser("perturb", help="periodic-point perturbation")
    common(sp, map_=True)
    sp.add_argument("--epsilon", type=_rational, required=True)
    sp.add_argument("--delta", type=_rational)
    sp.add_argument("--l", type=int, default=2)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--plan", help="plan manifest output (default: <out>_plan.json)")
    sp.add_argument("--svg")

    sp = sub.add_parser("pipeline", help="small-CR approximation of a map")
    common(sp, map_=True, out=False)
    sp.add_argument("--out")
    sp.add_argument("--epsilon", type=_rational, required=True)
    sp.add_argument("--delta", type=_rational)
    sp.add_argument("--max-depth", type=int, default=6)
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    known = {k: v for k, v in vars(ns).items() if k in RunConfig.__dataclass_fields__ and v is not None}
    return RunConfig(**known)


def main(argv=None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(config_from_args(ns), stdout)
    except ChainrecError as exc:
        stderr.write(json.dumps(exc.to_json(), sort_keys=True) + "\n")
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
