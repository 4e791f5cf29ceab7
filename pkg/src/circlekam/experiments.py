"""Experiment registry: each entry turns a validated config into tables and checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import config as C
from .circle import CircleDiffeo, diophantine_profile
from .cohomology import ResonanceError
from .ensemble import RandomEnsemble
from .kam import (KamConfig, calibrate_C0, commutator_defect, conjugacy_mismatch, kam_k0, kam_run,
                  planted_ensemble, rotation_numbers)
from .lyapunov import (LyapunovEstimate, analytic_lyapunov_order2, lyapunov_order2_forms, mc_lyapunov,
                       mc_stationary, perturbed_rotations, stationary_density_order1)
from .matrices import (Mat2, analytic_matrix_lyapunov_order2, anticonformal_Z, calibrate_A0,
                       elliptic_growth_bound, matrix_commutator_defect, matrix_kam, mc_matrix_lyapunov,
                       rotation_matrix, schrodinger_lyapunov, schrodinger_matrix, sl2_normalize, variance_Z)
from .periodic import PeriodicMap


class FieldError(ValueError):
    """A cross-field problem in a config, tagged with the offending key path."""

    def __init__(self, path: tuple, message: str):
        super().__init__(message)
        self.path = path


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | str
    threshold: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {_fmt(self.value)} ({self.threshold})"


@dataclass
class Outcome:
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)
    texts: dict[str, str] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass(frozen=True)
class Experiment:
    name: str
    summary: str
    schema: C.Section
    build: Callable[[dict], dict]
    run: Callable[[dict, dict, int], Outcome]


REGISTRY: dict[str, Experiment] = {}


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x) + 0.0)  # no negative zero
    return str(x)


# -- shared schema pieces ------------------------------------------------------

def _common(name: str, spectral: bool) -> dict:
    out = {
        "experiment": C.Field(C.choice(name), name, "experiment name"),
        "seed": C.Field(C.u64, 0, "master seed; --seed overrides"),
    }
    if spectral:
        out["spectral"] = C.Section({
            "N": C.Field(C.pos_int, 64, "retained Fourier degree"),
            "M": C.Field(C.pos_int, 256, "grid size (power of two, >= 4N)"),
        })
    return out


def _mc(burn_in: bool = True) -> C.Section:
    fields = {
        "n_steps": C.Field(C.pos_int, 100_000),
        "n_samples": C.Field(C.pos_int, 200, "independent chains"),
        "estimator": C.Field(C.choice("conditional", "pathwise"), "conditional"),
    }
    if burn_in:
        fields["burn_in"] = C.Field(C.nonneg_int, 0)
    return C.Section(fields)


def _circle_ensemble(zeta_required: bool = True, planted: bool = False) -> C.Section:
    fields = {
        "weights": C.Field(C.optional(C.float_list(C.pos_float)), None, "atom weights; uniform if omitted"),
        "alpha": C.Field(C.float_list(C.angle), C.REQUIRED, "rotation angle of each atom"),
        "zeta": C.ListOf(C.TRIG, optional=not zeta_required),
    }
    if planted:
        fields["planted_h"] = C.Section(dict(C.TRIG), optional=True)
    return C.Section(fields)


def _matrix_ensemble(conjugator: bool = False) -> C.Section:
    fields = {
        "weights": C.Field(C.optional(C.float_list(C.pos_float)), None, "atom weights; uniform if omitted"),
        "alpha": C.Field(C.float_list(C.angle), C.REQUIRED, "rotation angle of each atom"),
        "E": C.Field(C.matrix_list, C.REQUIRED, "perturbation direction [a, b, c, d] per atom"),
    }
    if conjugator:
        fields["P0"] = C.Field(C.matrix4, [1.0, 0.0, 0.0, 1.0], "SL2 conjugator applied to every atom")
    return C.Section(fields)


def _weights(ens: dict, n: int, path=("ensemble",)) -> tuple[float, ...]:
    w = ens["weights"]
    if w is None:
        return (1.0 / n,) * n
    if len(w) != n:
        raise FieldError(path + ("weights",), f"expected {n} weights, got {len(w)}")
    total = sum(w)
    if abs(total - 1.0) > 1e-9:
        raise FieldError(path + ("weights",), f"weights sum to {total!r}, expected 1")
    return tuple(x / total for x in w)


def _trig(spec: dict, N: int, M: int, path) -> PeriodicMap:
    if max(len(spec["cos"]), len(spec["sin"])) > N:
        raise FieldError(path, f"degree exceeds spectral.N = {N}")
    return PeriodicMap.from_trig(cos=spec["cos"], sin=spec["sin"], mean=spec["mean"], degree=N, grid_size=M)


def _spectral(cfg: dict) -> tuple[int, int]:
    N, M = cfg["spectral"]["N"], cfg["spectral"]["M"]
    if M < 4 * N or M & (M - 1):
        raise FieldError(("spectral", "M"), f"M={M} must be a power of two and at least 4N = {4 * N}")
    return N, M


def _build_circle(cfg: dict, need_zeta: bool = True) -> dict:
    N, M = _spectral(cfg)
    ens = cfg["ensemble"]
    n = len(ens["alpha"])
    w = _weights(ens, n)
    alpha = RandomEnsemble(w, tuple(ens["alpha"]))
    zetas = None
    if ens["zeta"] is not None:
        if len(ens["zeta"]) != n:
            raise FieldError(("ensemble", "zeta"), f"expected {n} perturbations (one per angle), got {len(ens['zeta'])}")
        zetas = [_trig(z, N, M, ("ensemble", "zeta", i)) for i, z in enumerate(ens["zeta"])]
    elif need_zeta:
        raise FieldError(("ensemble", "zeta"), "missing required key")
    planted = None
    if ens.get("planted_h") is not None:
        planted = CircleDiffeo(_trig(ens["planted_h"], N, M, ("ensemble", "planted_h")))
    return {"N": N, "M": M, "alpha": alpha, "zetas": zetas, "planted_h": planted}


def _build_matrix(cfg: dict) -> dict:
    ens = cfg["ensemble"]
    n = len(ens["alpha"])
    w = _weights(ens, n)
    if len(ens["E"]) != n:
        raise FieldError(("ensemble", "E"), f"expected {n} matrices (one per angle), got {len(ens['E'])}")
    out = {"alpha": RandomEnsemble(w, tuple(ens["alpha"])), "E": [Mat2(*e) for e in ens["E"]]}
    if "P0" in ens:
        P0 = Mat2(*ens["P0"])
        if not P0.is_sl2(1e-9):
            raise FieldError(("ensemble", "P0"), f"P0 must have determinant 1, got {P0.det!r}")
        out["P0"] = P0
    return out


def _sweep(eps: list[float], path=("eps",)) -> list[float]:
    if any(e <= 0 for e in eps):
        raise FieldError(path, "sweep values must be positive")
    return eps


def _halvings(xs):
    """Index pairs ``(i, j)`` with ``xs[j] == xs[i] / 2``."""
    return [(i, j) for i in range(len(xs)) for j in range(len(xs))
            if xs[i] > 0 and math.isclose(xs[j] * 2.0, xs[i], rel_tol=1e-12)]


def _shrink_checks(name: str, xs, diffs, lo: float, hi: float) -> list[Check]:
    out = []
    for i, j in _halvings(xs):
        a, b = abs(diffs[i]), abs(diffs[j])
        if a == 0 and b == 0:
            out.append(Check(f"{name}[{xs[i]:g}->{xs[j]:g}]", True, 0.0, "both remainders exactly zero"))
            continue
        r = a / b if b > 0 else math.inf
        out.append(Check(f"{name}[{xs[i]:g}->{xs[j]:g}]", lo <= r <= hi, r, f"ratio in [{lo:g}, {hi:g}]"))
    return out


def _mc_circle(f, cfg, seed, threads) -> LyapunovEstimate:
    mc = cfg["mc"]
    return mc_lyapunov(f, mc["n_steps"], mc["n_samples"], seed, mc["estimator"], mc["burn_in"], threads)


def _mc_matrix(Ms, cfg, seed, threads) -> LyapunovEstimate:
    mc = cfg["mc"]
    return mc_matrix_lyapunov(Ms, mc["n_steps"], mc["n_samples"], seed, mc["estimator"], threads)


def register(name: str, summary: str, schema: dict, build: Callable[[dict], dict], spectral: bool = True):
    full = C.Section({**_common(name, spectral), **schema})

    def deco(fn):
        REGISTRY[name] = Experiment(name, summary, full, build, fn)
        return fn
    return deco


# -- circle experiments --------------------------------------------------------

@register("lyapunov_expansion", "Monte Carlo exponent against the second-order closed form over an eps sweep",
          {"ensemble": _circle_ensemble(), "eps": C.Field(C.float_list(C.pos_float)), "mc": _mc(),
           "checks": C.Section({
               "shrink_band": C.Field(C.band, [5.0, 12.0], "allowed |diff(eps)| / |diff(eps/2)|"),
               "bilinear_rtol": C.Field(C.pos_float, 1e-12, "spread of lambda2/eps^2"),
               "noise_factor": C.Field(C.pos_float, 0.2, "std_error must stay below this times eps^3"),
               "agreement_factor": C.Field(C.pos_float, 10.0, "|diff| <= max(3 se, factor * eps^3)"),
           })},
          lambda cfg: {**_build_circle(cfg), "eps": _sweep(cfg["eps"])})
def _lyapunov_expansion(cfg, b, threads):
    out = Outcome()
    rows, quad, diffs = [], [], []
    chk = cfg["checks"]
    for eps in b["eps"]:
        f = perturbed_rotations(b["alpha"], b["zetas"], eps)
        direct, fourier = lyapunov_order2_forms(f, b["alpha"])
        lam2 = analytic_lyapunov_order2(f, b["alpha"])
        est = _mc_circle(f, cfg, cfg["seed"], threads)
        d = est.value - lam2
        rows.append([eps, lam2, lam2 / eps ** 2, direct, fourier, est.value, est.std_error, d, d / eps ** 3])
        quad.append(lam2 / eps ** 2)
        diffs.append(d)
        out.checks.append(Check(f"noise[{eps:g}]", est.std_error < chk["noise_factor"] * eps ** 3,
                                est.std_error, f"< {chk['noise_factor']:g} eps^3"))
        tol = max(3 * est.std_error, chk["agreement_factor"] * eps ** 3)
        out.checks.append(Check(f"agreement[{eps:g}]", abs(d) <= tol, abs(d), f"<= {tol!r}"))
    scale = max(abs(q) for q in quad)
    spread = (max(quad) - min(quad)) / scale if scale > 0 else 0.0
    out.checks.append(Check("bilinear", spread <= chk["bilinear_rtol"], spread, f"<= {chk['bilinear_rtol']:g}"))
    out.checks += _shrink_checks("shrink", b["eps"], diffs, *chk["shrink_band"])
    out.tables["lyapunov"] = (["eps", "lambda2", "lambda2_over_eps2", "lambda2_direct", "lambda2_fourier",
                               "lambda_mc", "std_error", "diff", "diff_over_eps3"], rows)
    return out


@register("stationary_density", "Histogram of the stationary measure against the first-order density",
          {"ensemble": _circle_ensemble(), "eps": C.Field(C.float_list(C.pos_float)),
           "stationary": C.Section({
               "burn_in": C.Field(C.pos_int, 2000),
               "n_draws": C.Field(C.pos_int, 1_000_000),
               "bins": C.Field(C.pos_int, 1024),
               "n_chains": C.Field(C.pos_int, 64),
           }),
           "observable_mode": C.Field(C.pos_int, 1, "test function cos(2 pi p x)"),
           "checks": C.Section({"shrink_band": C.Field(C.band, [3.0, 5.5], "allowed |diff(eps)| / |diff(eps/2)|")})},
          lambda cfg: {**_build_circle(cfg), "eps": _sweep(cfg["eps"])})
def _stationary_density(cfg, b, threads):
    out = Outcome()
    st = cfg["stationary"]
    p = cfg["observable_mode"]
    if p > b["N"]:
        raise FieldError(("observable_mode",), f"mode exceeds spectral.N = {b['N']}")
    obs = PeriodicMap.from_trig(cos=[0.0] * (p - 1) + [1.0], degree=b["N"], grid_size=b["M"])
    rows, diffs, dens_cols = [], [], []
    for eps in b["eps"]:
        f = perturbed_rotations(b["alpha"], b["zetas"], eps)
        h1 = stationary_density_order1(f, b["alpha"])
        hist = mc_stationary(f, st["burn_in"], st["n_draws"], st["bins"], cfg["seed"], st["n_chains"], threads)
        mc_val = hist.integrate(obs)
        exact = h1.integral_against(obs)
        rows.append([eps, mc_val, exact, mc_val - exact, (mc_val - exact) / eps ** 2, hist.n_draws])
        diffs.append(mc_val - exact)
        centers = (np.arange(st["bins"]) + 0.5) / st["bins"]
        dens_cols.append((hist.density(), h1(centers)))
    out.checks += _shrink_checks("shrink", b["eps"], diffs, *cfg["checks"]["shrink_band"])
    out.tables["observable"] = (["eps", "integral_mc", "integral_h1", "diff", "diff_over_eps2", "n_draws"], rows)
    header = ["bin_left"]
    for eps in b["eps"]:
        header += [f"density_mc[{eps:g}]", f"density_h1[{eps:g}]"]
    left = np.arange(st["bins"]) / st["bins"]
    drows = [[left[k]] + [v for mc_d, h in dens_cols for v in (mc_d[k], h[k])] for k in range(st["bins"])]
    out.tables["density"] = (header, drows)
    return out


KAM_SECTION = C.Section({
    "Q": C.Field(C.pos_float, 4.0 / 3.0, "schedule T_n = 2^(Q^n), Q in (1, 3/2)"),
    "max_iters": C.Field(C.nonneg_int, 12),
    "convergence_tol": C.Field(C.pos_float, 1e-9, "stop once |||zeta|||_0 is below"),
    "C0": C.Field(C.optional(C.pos_float), None, "obstruction constant; calibrated if omitted"),
    "K": C.Field(C.optional(C.pos_int), None, "working norm index; k0 if omitted"),
    "q_max": C.Field(C.pos_int, 64, "largest q probed by the diophantine fit"),
    "calibration_shapes": C.Field(C.pos_int, 8),
    "rotation_iters": C.Field(C.pos_int, 100_000, "Birkhoff iterations for rotation numbers"),
    "coeff_floor": C.Field(C.nonneg_float, 1e-15, "round-off floor applied after each conjugation"),
})


def _kam_config(cfg, b, alpha) -> KamConfig:
    k = cfg["kam"]
    prof = diophantine_profile(alpha, k["q_max"])
    if prof.resonant:
        raise ResonanceError(prof.resonant_q[0], 0.0, 0.0)
    k0 = kam_k0(prof.sigma_int)
    C0 = k["C0"]
    if C0 is None:
        C0 = calibrate_C0(alpha, k0, cfg["seed"], k["calibration_shapes"], N=b["N"], M=b["M"])
    return KamConfig(C0=C0, k0=k0, K=k["K"], Q=k["Q"], max_iters=k["max_iters"],
                     convergence_tol=k["convergence_tol"], coeff_floor=k["coeff_floor"], N=b["N"], M=b["M"])


def _build_kam_circle(cfg):
    b = _build_circle(cfg, need_zeta=False)
    if (b["zetas"] is None) == (b["planted_h"] is None):
        raise FieldError(("ensemble",), "give exactly one of zeta (perturbed) or planted_h (planted conjugacy)")
    if not 1.0 < cfg["kam"]["Q"] < 1.5:
        raise FieldError(("kam", "Q"), "Q must lie in (1, 3/2)")
    if b["zetas"] is not None and cfg["eps"] <= 0:
        raise FieldError(("eps",), "a perturbed ensemble needs eps > 0")
    return b


@register("kam_circle", "KAM iteration on a planted or perturbed random circle diffeomorphism",
          {"ensemble": _circle_ensemble(zeta_required=False, planted=True),
           "eps": C.Field(C.nonneg_float, 0.03, "perturbation size (ignored when planted)"),
           "kam": KAM_SECTION, "mc": _mc(),
           "checks": C.Section({
               "final_tol": C.Field(C.pos_float, 1e-6, "planted: final |||zeta|||_0"),
               "max_iterations": C.Field(C.pos_int, 12, "planted: iterations allowed"),
               "h_tol": C.Field(C.pos_float, 1e-4, "planted: d0 to the planted conjugacy"),
               "lambda_factor": C.Field(C.pos_float, 3.0, "perturbed: final_d0 <= factor sqrt(|lambda| + 3 se)"),
           })},
          _build_kam_circle)
def _kam_circle(cfg, b, threads):
    out = Outcome()
    chk = cfg["checks"]
    planted = b["planted_h"] is not None
    if planted:
        f = planted_ensemble(b["alpha"], b["planted_h"])
        alpha = b["alpha"]
        lam_mc = _mc_circle(f, cfg, cfg["seed"], threads)
        # conjugate to rotations by construction, so the exponent is exactly zero
        lam = LyapunovEstimate(0.0, 0.0, 0, 0, cfg["seed"])
        out.notes.append(f"lambda_mc (diagnostic) = {lam_mc.value!r} +- {lam_mc.std_error!r}")
    else:
        f = perturbed_rotations(b["alpha"], b["zetas"], cfg["eps"])
        alpha = rotation_numbers(f, cfg["kam"]["rotation_iters"])
        lam = _mc_circle(f, cfg, cfg["seed"], threads)
    kcfg = _kam_config(cfg, b, alpha)
    rep = kam_run(f, alpha, kcfg, lam)
    out.tables["kam_steps"] = (["n", "T_n", "norm0", "normK", "action"],
                               [[s.n, s.T, s.norm0, s.normK, s.action] for s in rep.steps])
    out.texts["kam_report.txt"] = rep.to_text()
    x = (np.arange(b["M"])) / b["M"]
    out.tables["conjugacy"] = (["x", "h_minus_id"], [[xi, v] for xi, v in zip(x, rep.h.phi.values)])
    out.tables["rotation_numbers"] = (["atom", "weight", "alpha"],
                                      [[i, w, a] for i, (w, a) in enumerate(alpha)])
    if planted:
        out.checks.append(Check("stop_reason", rep.stop_reason == "converged", rep.stop_reason, "want converged"))
        out.checks.append(Check("final_norm0", rep.final_d0 < chk["final_tol"], rep.final_d0, f"< {chk['final_tol']:g}"))
        out.checks.append(Check("iterations", rep.iterations <= chk["max_iterations"], rep.iterations,
                                f"<= {chk['max_iterations']}"))
        mis = conjugacy_mismatch(rep.h, b["planted_h"])
        out.checks.append(Check("conjugacy", mis < chk["h_tol"], mis, f"< {chk['h_tol']:g}"))
    else:
        bound = chk["lambda_factor"] * math.sqrt(abs(lam.value) + 3 * lam.std_error)
        out.checks.append(Check("stop_reason", rep.stop_reason == "obstruction", rep.stop_reason, "want obstruction"))
        out.checks.append(Check("final_d0", rep.final_d0 <= bound, rep.final_d0, f"<= {bound!r}"))
    return out


@register("commutator_circle", "Commutator defect of independent copies against the Lyapunov bound",
          {"ensemble": _circle_ensemble(zeta_required=True, planted=True),
           "eps": C.Field(C.float_list(C.pos_float)), "mc": _mc(),
           "checks": C.Section({
               "factor": C.Field(C.pos_float, 48.0, "defect <= factor sqrt(|lambda| + 3 se)"),
               "zero_tol": C.Field(C.pos_float, 1e-10, "planted ensembles: defect below"),
           })},
          lambda cfg: {**_build_circle(cfg), "eps": _sweep(cfg["eps"])})
def _commutator_circle(cfg, b, threads):
    out = Outcome()
    chk = cfg["checks"]
    rows = []
    for eps in b["eps"]:
        f = perturbed_rotations(b["alpha"], b["zetas"], eps)
        lam = _mc_circle(f, cfg, cfg["seed"], threads)
        defect = commutator_defect(f)
        bound = chk["factor"] * math.sqrt(abs(lam.value) + 3 * lam.std_error)
        rows.append([eps, defect, lam.value, lam.std_error, bound, defect / math.sqrt(abs(lam.value))])
        out.checks.append(Check(f"defect[{eps:g}]", defect <= bound, defect, f"<= {bound!r}"))
    out.tables["commutator"] = (["eps", "defect", "lambda_mc", "std_error", "bound", "defect_over_sqrt_lambda"], rows)
    if b["planted_h"] is not None:
        d = commutator_defect(planted_ensemble(b["alpha"], b["planted_h"]))
        out.tables["planted"] = (["defect"], [[d]])
        out.checks.append(Check("planted_defect", d <= chk["zero_tol"], d, f"<= {chk['zero_tol']:g}"))
    return out


# -- matrix experiments --------------------------------------------------------

def _near_rotations(b, eps) -> RandomEnsemble:
    Ms = [sl2_normalize(rotation_matrix(a) + E * eps)[0] for a, E in zip(b["alpha"].values, b["E"])]
    if "P0" in b:
        P0, P_inv = b["P0"], b["P0"].inv()
        Ms = [P_inv @ m @ P0 for m in Ms]
    return RandomEnsemble(b["alpha"].weights, tuple(Ms))


@register("matrix_expansion", "Monte Carlo exponent of SL2 products against the second-order formula",
          {"ensemble": _matrix_ensemble(), "eps": C.Field(C.float_list(C.pos_float)), "mc": _mc(burn_in=False),
           "checks": C.Section({
               "shrink_band": C.Field(C.band, [5.0, 12.0], "allowed |diff(eps)| / |diff(eps/2)|"),
               "reduction_tol": C.Field(C.pos_float, 1e-12, "constant angle: formula vs Var(Z)/8"),
           })},
          lambda cfg: {**_build_matrix(cfg), "eps": _sweep(cfg["eps"])}, spectral=False)
def _matrix_expansion(cfg, b, threads):
    out = Outcome()
    chk = cfg["checks"]
    constant = np.ptp(b["alpha"].values) == 0
    rows, diffs = [], []
    for eps in b["eps"]:
        Ms = _near_rotations(b, eps)
        lam2 = analytic_matrix_lyapunov_order2(Ms, b["alpha"])
        lam2_trace = analytic_matrix_lyapunov_order2(Ms, b["alpha"], z_kind="trace")
        Z = [anticonformal_Z(m, a) for m, a in zip(Ms.values, b["alpha"].values)]
        var8 = variance_Z(Z, b["alpha"].w)
        est = _mc_matrix(Ms, cfg, cfg["seed"], threads)
        d = est.value - lam2
        rows.append([eps, lam2, var8, lam2_trace, est.value, est.std_error, d, d / eps ** 3])
        diffs.append(d)
        if constant:
            gap = abs(lam2 - var8)
            out.checks.append(Check(f"var_z[{eps:g}]", gap <= chk["reduction_tol"] * max(1.0, abs(var8)), gap,
                                    f"<= {chk['reduction_tol']:g}"))
    out.checks += _shrink_checks("shrink", b["eps"], diffs, *chk["shrink_band"])
    out.tables["matrix_lyapunov"] = (["eps", "Lambda2", "var_Z_over_8", "Lambda2_trace_Z", "Lambda_mc",
                                      "std_error", "diff", "diff_over_eps3"], rows)
    return out


def _build_schrodinger(cfg):
    E = cfg["energy"]
    if not -2.0 < E < 2.0 or E == 0.0:
        raise FieldError(("energy",), "energy must lie in (-2, 2) and differ from 0")
    pot = cfg["potential"]
    n = len(pot["values"])
    w = _weights(pot, n, ("potential",))
    if any(g < 0 for g in cfg["g"]):
        raise FieldError(("g",), "couplings must be non-negative")
    return {"V": RandomEnsemble(w, tuple(pot["values"]))}


@register("schrodinger", "Weak-disorder exponent of random Schrodinger transfer matrices",
          {"energy": C.Field(C.as_float, 1.0),
           "potential": C.Section({
               "values": C.Field(C.float_list(C.as_float)),
               "weights": C.Field(C.optional(C.float_list(C.pos_float)), None),
           }),
           "g": C.Field(C.float_list(C.nonneg_float), C.REQUIRED, "coupling sweep"),
           "mc": _mc(burn_in=False),
           "checks": C.Section({
               "rel_tol": C.Field(C.pos_float, 0.15, "|mc / law - 1| for g > 0"),
               "scaling_band": C.Field(C.band, [0.2, 0.3], "Lambda(g/2) / Lambda(g)"),
           })},
          _build_schrodinger, spectral=False)
def _schrodinger(cfg, b, threads):
    out = Outcome()
    chk = cfg["checks"]
    mc = cfg["mc"]
    rows, vals = [], []
    for g in cfg["g"]:
        res = schrodinger_lyapunov(cfg["energy"], b["V"], g, mc["n_steps"], mc["n_samples"], cfg["seed"], threads)
        lam = res.mc
        vals.append(lam.value)
        if g == 0.0:
            # every atom is the same elliptic matrix: the log norm stays bounded
            slack = elliptic_growth_bound(schrodinger_matrix(cfg["energy"], 0.0, 0.0)) / mc["n_steps"]
            tol = 3 * lam.std_error + slack
            out.checks.append(Check("zero_coupling", abs(lam.value) <= tol, abs(lam.value), f"<= {tol!r}"))
            rel = 0.0
        else:
            rel = lam.value / res.weak_disorder - 1.0
            out.checks.append(Check(f"weak_disorder[{g:g}]", abs(rel) <= chk["rel_tol"], abs(rel),
                                    f"<= {chk['rel_tol']:g}"))
        rows.append([g, lam.value, lam.std_error, res.weak_disorder, rel, res.rotation])
    lo, hi = chk["scaling_band"]
    for i, j in _halvings(cfg["g"]):
        r = vals[j] / vals[i]
        out.checks.append(Check(f"scaling[{cfg['g'][i]:g}->{cfg['g'][j]:g}]", lo <= r <= hi, r, f"in [{lo:g}, {hi:g}]"))
    out.tables["schrodinger"] = (["g", "Lambda_mc", "std_error", "Lambda_weak_disorder", "rel_err", "rotation"], rows)
    return out


MATRIX_KAM_SECTION = C.Section({
    "delta": C.Field(C.pos_float, 0.1, "ellipticity margin: ||Tr M||_L2 <= 2 - delta"),
    "max_iters": C.Field(C.nonneg_int, 30),
    "convergence_tol": C.Field(C.pos_float, 1e-12),
    "norm": C.Field(C.choice("op", "fro"), "op"),
    "A0": C.Field(C.optional(C.pos_float), None, "equivalence constant; calibrated if omitted"),
    "calibration_samples": C.Field(C.pos_int, 200),
    "calibration_scale": C.Field(C.pos_float, 0.05),
})


@register("kam_matrix", "Matrix KAM: conjugate SL2 atoms towards rotations",
          {"ensemble": _matrix_ensemble(conjugator=True),
           "eps": C.Field(C.nonneg_float, 0.03, "perturbation size; 0 plants P0^-1 R P0"),
           "matrix_kam": MATRIX_KAM_SECTION, "mc": _mc(burn_in=False),
           "checks": C.Section({"final_tol": C.Field(C.pos_float, 1e-6, "planted: final distance")})},
          _build_matrix, spectral=False)
def _kam_matrix(cfg, b, threads):
    out = Outcome()
    k = cfg["matrix_kam"]
    eps = cfg["eps"]
    Ms = _near_rotations(b, eps)
    A0 = k["A0"] if k["A0"] is not None else calibrate_A0(
        cfg["seed"], k["calibration_samples"], k["calibration_scale"], k["norm"])
    if eps == 0.0:
        # simultaneously conjugated rotations have zero exponent exactly
        lam = LyapunovEstimate(0.0, 0.0, 0, 0, cfg["seed"])
    else:
        lam = _mc_matrix(Ms, cfg, cfg["seed"], threads)
    rep = matrix_kam(Ms, lam, A0, k["delta"], k["max_iters"], k["convergence_tol"], k["norm"])
    out.tables["matrix_kam_steps"] = (["n", "distance", "action"], [[s.n, s.distance, s.action] for s in rep.steps])
    out.texts["matrix_kam_report.txt"] = rep.to_text()
    if eps == 0.0:
        out.checks.append(Check("stop_reason", rep.stop_reason == "converged", rep.stop_reason, "want converged"))
        tol = cfg["checks"]["final_tol"]
        out.checks.append(Check("final_distance", rep.final_distance < tol, rep.final_distance, f"< {tol:g}"))
    else:
        out.checks.append(Check("stop_reason", rep.stop_reason in ("obstruction", "converged"),
                                rep.stop_reason, "want obstruction or converged"))
        out.checks.append(Check("final_distance", rep.final_distance <= rep.bound, rep.final_distance,
                                f"<= 4 A0 sqrt(Lambda + 3 se) = {rep.bound!r}"))
    return out


@register("commutator_matrix", "Matrix commutator defect against the exponent over an eps sweep",
          {"ensemble": _matrix_ensemble(conjugator=True), "eps": C.Field(C.float_list(C.pos_float)),
           "mc": _mc(burn_in=False),
           "checks": C.Section({
               "stability": C.Field(C.pos_float, 2.0, "max / min of defect / Lambda across the sweep"),
               "zero_tol": C.Field(C.pos_float, 1e-12, "conjugated rotations: defect below"),
           })},
          lambda cfg: {**_build_matrix(cfg), "eps": _sweep(cfg["eps"])}, spectral=False)
def _commutator_matrix(cfg, b, threads):
    out = Outcome()
    chk = cfg["checks"]
    rows, ratios = [], []
    for eps in b["eps"]:
        Ms = _near_rotations(b, eps)
        lam = _mc_matrix(Ms, cfg, cfg["seed"], threads)
        defect = matrix_commutator_defect(Ms)
        ratios.append(defect / lam.value)
        rows.append([eps, defect, lam.value, lam.std_error, defect / lam.value])
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else math.inf
    out.checks.append(Check("ratio_stability", spread <= chk["stability"], spread, f"<= {chk['stability']:g}"))
    planted = _near_rotations(b, 0.0)
    d0 = matrix_commutator_defect(planted)
    out.checks.append(Check("conjugated_rotations", d0 <= chk["zero_tol"], d0, f"<= {chk['zero_tol']:g}"))
    out.tables["matrix_commutator"] = (["eps", "defect", "Lambda_mc", "std_error", "defect_over_Lambda"], rows)
    return out


__all__ = ["Check", "Experiment", "FieldError", "Outcome", "REGISTRY"]
