"""
Experiment runners behind the command line.

Each runner turns a validated :class:`~mmtsim.config.ExperimentConfig` into
a :class:`Table`; the column set depends only on the experiment kind and
``Nt`` (plus the bit sweep for feedback-budget runs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import mode_policy, scheduler
from .config import ExperimentConfig
from .montecarlo import SimScenario, simulate_sum_rate
from .rates import ImperfectionParams, mode_sum_rate, rate_qd_highsnr_user

__all__ = ["Table", "RUNNERS", "run_experiment_table", "db_to_linear"]


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass
class Table:
    """Result rows plus the hints needed to plot them."""

    kind: str
    header: list
    rows: list = field(default_factory=list)
    x: str = ""
    y: list = field(default_factory=list)
    y_points: list = field(default_factory=list)  # drawn as markers
    style: str = "lines"  # or "map" for mode grids
    ylabel: str = "sum rate [bits/s/Hz]"

    def column(self, name: str) -> list:
        j = self.header.index(name)
        return [r[j] for r in self.rows]


def _modes(cfg: ExperimentConfig):
    return range(1, cfg.nt + 1)


def _scenario(cfg: ExperimentConfig, M: int, P: float, imp: ImperfectionParams) -> SimScenario:
    return SimScenario(Nt=cfg.nt, M=M, P=P, imp=imp, precoder=cfg.precoder, trials=cfg.trials,
                       seed=cfg.seed, workers=cfg.workers)


def run_rate_table(cfg: ExperimentConfig) -> Table:
    modes = list(_modes(cfg))
    header = (["snr_db"] + [f"analytic_m{m}" for m in modes] + [f"mc_m{m}" for m in modes]
              + [f"mc_se_m{m}" for m in modes] + ["chosen_mode"])
    t = Table("rate-table", header, x="snr_db", y=[f"analytic_m{m}" for m in modes],
              y_points=[f"mc_m{m}" for m in modes])
    imp = cfg.imp()
    for s in cfg.snr_db:
        P = db_to_linear(s)
        analytic = {m: mode_sum_rate(m, P, cfg.nt, imp, su=cfg.su, trials=cfg.trials, seed=cfg.seed)
                    for m in modes}
        est = {m: simulate_sum_rate(_scenario(cfg, m, P, imp)) for m in modes}
        chosen = mode_policy.argmax_mode(analytic)
        t.rows.append([s] + [analytic[m] for m in modes] + [est[m].mean for m in modes]
                      + [est[m].std_error for m in modes] + [chosen])
    return t


def run_simulate(cfg: ExperimentConfig) -> Table:
    header = ["snr_db", "m", "analytic_sum_rate", "mc_sum_rate", "mc_std_error", "trials", "redraws"]
    t = Table("simulate", header, x="snr_db", y=["analytic_sum_rate"], y_points=["mc_sum_rate"])
    imp = cfg.imp()
    for s in cfg.snr_db:
        P = db_to_linear(s)
        a = mode_sum_rate(cfg.m, P, cfg.nt, imp, su=cfg.su, trials=cfg.trials, seed=cfg.seed)
        e = simulate_sum_rate(_scenario(cfg, cfg.m, P, imp))
        t.rows.append([s, cfg.m, a, e.mean, e.std_error, e.trials, e.redraws])
    return t


def run_operating_region(cfg: ExperimentConfig) -> Table:
    if cfg.v_grid is not None:
        grid = mode_policy.operating_region(cfg.nt, cfg.fc, cfg.tau, cfg.snr_db, v_grid=cfg.v_grid,
                                            B=cfg.b, su=cfg.su)
    elif cfg.fdts is not None:
        # fixed normalized Doppler: express it as an equivalent speed-free grid
        grid = _region_fdts(cfg)
    else:
        grid = mode_policy.operating_region(cfg.nt, cfg.fc, cfg.tau, cfg.snr_db, B_grid=cfg.b_grid,
                                            v=cfg.v, su=cfg.su)
    modes = list(_modes(cfg))
    header = ["snr_db", grid.axis2_name] + [f"analytic_m{m}" for m in modes] + ["chosen_mode"]
    t = Table("operating-region", header, x="snr_db", y=[grid.axis2_name], style="map", ylabel=grid.axis2_name)
    for i, s in enumerate(grid.axis1):
        for j, a2 in enumerate(grid.axis2):
            a2v = int(a2) if grid.axis2_name == "B" else float(a2)
            t.rows.append([float(s), a2v] + [float(r) for r in grid.rates[i, j]] + [int(grid.cells[i, j])])
    return t


def _region_fdts(cfg: ExperimentConfig) -> mode_policy.RegionGrid:
    dop = cfg.doppler()
    snr = np.asarray(cfg.snr_db, dtype=float)
    axis2 = np.asarray(cfg.b_grid, dtype=float)
    cells = np.zeros((snr.size, axis2.size), dtype=int)
    rates = np.zeros((snr.size, axis2.size, cfg.nt))
    for j, B in enumerate(axis2):
        imp = ImperfectionParams.build(cfg.nt, B, dop)
        for i, s in enumerate(snr):
            dec = mode_policy.select_mode(cfg.nt, db_to_linear(s), imp, su=cfg.su)
            cells[i, j] = dec.chosen_mode
            rates[i, j] = [dec.per_mode_rates.per_mode[m].analytic_sum_rate for m in _modes(cfg)]
    return mode_policy.RegionGrid("snr_db", snr, "B", axis2, cells, rates)


def _profiles(cfg: ExperimentConfig) -> dict:
    if cfg.users is None:
        prof = scheduler.UserProfile(P=db_to_linear(cfg.snr_db[0]), imp=cfg.imp())
        return {u: prof for u in range(1, cfg.u + 1)}
    out = {}
    for i, us in enumerate(cfg.users, start=1):
        B = cfg.b if math.isinf(us.b) else us.b
        out[i] = scheduler.UserProfile(P=db_to_linear(us.snr_db), imp=cfg.imp(B, v=us.v, fdts=us.fdts))
    return out


def run_schedule(cfg: ExperimentConfig) -> Table:
    profiles = _profiles(cfg)
    run = scheduler.run_schedule(profiles, cfg.nt, cfg.slots)
    header = ["slot", "selected", "mode", "predicted_sum_rate", "feedback_bits"]
    t = Table("schedule", header, x="slot", y=["predicted_sum_rate"])
    for d, fb in zip(run.decisions, run.feedback_bits):
        t.rows.append([d.slot, " ".join(str(u) for u in d.selected), len(d.selected), d.predicted_sum_rate, fb])
    return t


def run_feedback_budget(cfg: ExperimentConfig) -> Table:
    modes = list(_modes(cfg))
    bits = list(cfg.us_bits)
    header = (["snr_db", "b_t"] + [f"analytic_m{m}" for m in modes]
              + ["mmt_mode", "mmt_bits_per_user", "mmt_mc", "mmt_mc_se"]
              + [f"us_zf_b{b}" for b in bits] + [f"us_zf_se_b{b}" for b in bits]
              + ["us_zf_best_bits", "us_zf_best"])
    t = Table("feedback-budget", header, x="b_t", y=["mmt_mc", "us_zf_best"])
    if len(cfg.b_t) == 1 and len(cfg.snr_db) > 1:
        t.x = "snr_db"
    dop = cfg.doppler()
    for s in cfg.snr_db:
        P = db_to_linear(s)
        for bt in cfg.b_t:
            analytic = scheduler.budget_mode_rates(cfg.nt, bt, P, dop)
            m, est = scheduler.mmt_zf_budget_rate(cfg.nt, bt, P, trials=cfg.trials, seed=cfg.seed, doppler=dop)
            us = {}
            for b in bits:
                K = bt // b
                us[b] = (scheduler.simulate_us_zf(cfg.nt, K, b, P, trials=cfg.us_trials, seed=cfg.seed, doppler=dop)
                         if K >= 1 else None)
            valid = {b: e.mean for b, e in us.items() if e is not None}
            best_b = max(valid, key=lambda b: (valid[b], -b)) if valid else 0
            t.rows.append([s, bt] + [analytic[mm] for mm in modes]
                          + [m, scheduler.feedback_budget_split(bt, m), est.mean, est.std_error]
                          + [us[b].mean if us[b] else float("nan") for b in bits]
                          + [us[b].std_error if us[b] else float("nan") for b in bits]
                          + [best_b, valid.get(best_b, float("nan"))])
    return t


def run_high_snr_mode(cfg: ExperimentConfig) -> Table:
    mu = list(range(2, cfg.nt + 1))
    header = ["fdts", "B"] + [f"ceiling_m{m}" for m in mu] + ["dominant_mode"]
    t = Table("high-snr-mode", header, x="fdts", y=[f"ceiling_m{m}" for m in mu])
    for f in cfg.fdts_grid:
        for B in cfg.b_grid:
            imp = cfg.imp(B, fdts=f)
            ceil = {m: m * rate_qd_highsnr_user(m, cfg.nt, imp) for m in mu}
            t.rows.append([f, int(B)] + [ceil[m] for m in mu] + [mode_policy.argmax_mode(ceil)])
    return t


RUNNERS = {
    "rate-table": run_rate_table,
    "simulate": run_simulate,
    "operating-region": run_operating_region,
    "schedule": run_schedule,
    "feedback-budget": run_feedback_budget,
    "high-snr-mode": run_high_snr_mode,
}


def run_experiment_table(cfg: ExperimentConfig) -> Table:
    return RUNNERS[cfg.kind](cfg)
