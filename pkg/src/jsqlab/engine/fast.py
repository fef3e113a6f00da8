"""Driver around the array kernel: buffers, capacity growth and log decoding."""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..lyapunov.state import SnapshotJob, StateSnapshot
from ..network import Explicit, MeanFieldChoose, MeanFieldWithReplacement, NetworkSpec, circle_set
from ..rng import ARRIVALS, SELECTION, SERVICE, TIES, RngStream
from . import kernels as kn
from .core import EventBudgetExceeded, EventRecord, InitialJob, InvalidInitialState
from .metrics import DEFAULT_THRESHOLDS, Z_BINS

BLOCK = 16384
SAMPLE_CHUNK = 1024


class FastPathUnavailable(ValueError):
    pass


def fast_path_reason(spec: NetworkSpec) -> Optional[str]:
    """None if the kernel can run spec, else why not."""
    if spec.homogeneous_service() is None:
        return "service law differs between jobs"
    if spec.discipline.kind == "designated":
        return "designated-queue discipline"
    if spec.assignment.kind == "jsq_handicap":
        return "handicap assignment"
    return None


def supports(spec: NetworkSpec) -> bool:
    return fast_path_reason(spec) is None


class FastSimulator:
    def __init__(
        self,
        spec: NetworkSpec,
        seed: int = 0,
        rep: int = 0,
        initial_jobs=(),
        initial_residuals=None,
        thresholds=DEFAULT_THRESHOLDS,
        record_events: bool = False,
        event_cap: int = 10**12,
        slots: int = 32,
        start: float = 0.0,
    ):
        why = fast_path_reason(spec)
        if why is not None:
            raise FastPathUnavailable(why)
        self.spec = spec
        N, K = spec.N, spec.K
        self.N, self.K = N, K
        law = spec.homogeneous_service()
        self.mu = 1.0 / law.mean()
        self.event_cap = int(event_cap)
        self.assign = {"jsq": kn.AS_JSQ, "jllq": kn.AS_JLLQ, "random": kn.AS_RANDOM}[spec.assignment.kind]
        d = spec.discipline
        self.disc = {"fifo": kn.D_FIFO, "lifo": kn.D_LIFO, "ps": kn.D_PS}.get(d.kind)
        if self.disc is None:
            self.disc = kn.D_SHORTEST if d.direction == "shortest" else kn.D_LONGEST
        self.tie_uniform = spec.tie_break == "uniform"

        # selection tables
        self.sel_kind = np.zeros(K, np.int64)
        self.sel_D = np.zeros(K, np.int64)
        self.expl_n = np.ones(K, np.int64)
        explicit_sets = []
        dmax = 1
        for k, rule in enumerate(spec.selection):
            if isinstance(rule, MeanFieldChoose):
                self.sel_kind[k] = kn.SEL_CHOOSE
                self.sel_D[k] = rule.D
                dmax = max(dmax, rule.D)
                explicit_sets.append([])
            elif isinstance(rule, MeanFieldWithReplacement):
                self.sel_kind[k] = kn.SEL_REPLACE
                self.sel_D[k] = rule.D
                dmax = max(dmax, min(rule.D, N))
                explicit_sets.append([])
            else:
                self.sel_kind[k] = kn.SEL_EXPLICIT
                sets = list(rule.sets) if isinstance(rule, Explicit) else [(circle_set(N, k, rule.radius), 1.0)]
                explicit_sets.append(sets)
                self.expl_n[k] = len(sets)
                dmax = max([dmax] + [len(A) for A, _ in sets])
        S = max(1, max(len(s) for s in explicit_sets))
        self.expl_sets = np.zeros((K, S, dmax), np.int64)
        self.expl_len = np.zeros((K, S), np.int64)
        self.expl_cum = np.ones((K, S))
        for k, sets in enumerate(explicit_sets):
            if sets:
                cum = np.cumsum([p for _, p in sets])
                for i, (A, _) in enumerate(sets):
                    self.expl_sets[k, i, : len(A)] = A
                    self.expl_len[k, i] = len(A)
                    self.expl_cum[k, i] = cum[i]
        self.dmax = dmax
        self.perm = np.arange(N, dtype=np.int64)
        self.touched = np.zeros(2 * dmax, np.int64)
        self.A = np.zeros(max(dmax, N), np.int64)
        self.mins = np.zeros(max(dmax, N), np.int64)

        # random sources
        ia_streams = [RngStream(seed, (rep, ARRIVALS, k)) for k in range(K)]
        self._ia_src = [
            (lambda n, g=g, r=r: np.concatenate([g.sample_many(r, SAMPLE_CHUNK) for _ in range(n // SAMPLE_CHUNK)]))
            for g, r in zip(spec.interarrival, ia_streams)
        ]
        sel_streams = [RngStream(seed, (rep, SELECTION, k)) for k in range(K)]
        self._sel_src = [(lambda n, r=r: r.uniforms(n)) for r in sel_streams]
        tie_streams = [RngStream(seed, (rep, TIES, k)) for k in range(K)]
        self._tie_src = [(lambda n, r=r: r.uniforms(n)) for r in tie_streams]
        svc_stream = RngStream(seed, (rep, SERVICE, 0))
        self._svc_src = lambda n: np.concatenate([law.sample_many(svc_stream, SAMPLE_CHUNK) for _ in range(n // SAMPLE_CHUNK)])

        self.ia, self.ia_pos, self.ia_len = self._fresh(self._ia_src)
        self.selu, self.sel_pos, self.sel_len = self._fresh(self._sel_src)
        self.tieu, self.tie_pos, self.tie_len = self._fresh(self._tie_src)
        self.svc = self._svc_src(BLOCK)

        # state
        self.fstate = np.array([start])
        self.istate = np.zeros(8, np.int64)
        self.istate[kn.I_SVC_LEN] = len(self.svc)
        self.qlen = np.zeros(N, np.int64)
        self.v = np.zeros((N, slots))
        self.arr = np.zeros((N, slots))
        self.jid = np.zeros((N, slots), np.int64)
        self.tq = np.full(N, start)
        self.comp = np.full(N, np.inf)
        self.comp_slot = np.full(N, -1, np.int64)
        self.srv = np.full(N, -1, np.int64)
        self._load_initial(initial_jobs, start)
        if initial_residuals is None:
            self.next_arr = np.array([start + self.ia[k, 0] for k in range(K)])
            self.ia_pos[:] = 1
        else:
            if len(initial_residuals) != K or any(not u > 0 for u in initial_residuals):
                raise InvalidInitialState("need one positive residual interarrival time per stream")
            self.next_arr = start + np.asarray(initial_residuals, dtype=float)
        for n in range(N):
            kn.set_efforts(n, self.disc, self.qlen, self.v, self.tq, self.comp, self.comp_slot, self.srv)

        # statistics
        self.thr = np.asarray(thresholds, dtype=float)
        X = len(self.thr)
        self.z_time = np.zeros((N, Z_BINS))
        self.z_int = np.zeros(N)
        self.work_int = np.zeros(N)
        self.ww_int = np.zeros(N)
        self.ww_above = np.zeros((N, X))
        self.age_above = np.zeros((N, X))
        self.t_start = start

        # event log
        self.record_events = record_events
        L = 4096 if record_events else 1
        self.log_t = np.zeros(L)
        self.log_kind = np.zeros(L, np.int8)
        self.log_idx = np.zeros(L, np.int64)
        self.log_q = np.zeros(L, np.int64)
        self.log_sel = np.zeros((L, max(dmax, N)), np.int64)
        self.log_sel_n = np.zeros(L, np.int64)
        self.events: list = []
        self._z_log = self.qlen.copy()
        self._seq_logged = 0

    # setup helpers

    def _fresh(self, sources):
        rows = [src(BLOCK) for src in sources]
        return self._pack(rows)

    @staticmethod
    def _pack(rows):
        width = max(len(r) for r in rows)
        out = np.zeros((len(rows), width))
        for k, r in enumerate(rows):
            out[k, : len(r)] = r
        return out, np.zeros(len(rows), np.int64), np.array([len(r) for r in rows], np.int64)

    def _load_initial(self, initial_jobs, start):
        nid = 0
        for ij in initial_jobs:
            if not isinstance(ij, InitialJob):
                ij = InitialJob(**ij) if isinstance(ij, dict) else InitialJob(*ij)
            n = ij.queue
            if not 0 <= n < self.N:
                raise InvalidInitialState(f"queue {n} out of range")
            if not ij.residual > 0:
                raise InvalidInitialState("residual service must be positive")
            z = self.qlen[n]
            if z and start - ij.age < self.arr[n, z - 1]:
                raise InvalidInitialState(f"jobs at queue {n} are not in rank order")
            if z >= self.v.shape[1]:
                self._grow()
            self.v[n, z] = ij.residual
            self.arr[n, z] = start - ij.age
            self.jid[n, z] = nid
            self.qlen[n] = z + 1
            nid += 1
        self.istate[kn.I_NEXT_ID] = nid

    def _grow(self):
        N, cap = self.v.shape
        for name in ("v", "arr", "jid"):
            old = getattr(self, name)
            new = np.zeros((N, 2 * cap), old.dtype)
            new[:, :cap] = old
            setattr(self, name, new)

    def _refill(self):
        need = np.array(
            [kn.selection_need(k, self.N, self.sel_kind, self.sel_D, self.expl_n) for k in range(self.K)]
        )

        def top_up(buf, pos, length, sources, low):
            rows = []
            for k in range(self.K):
                tail = buf[k, pos[k]: length[k]]
                if len(tail) < low[k]:
                    tail = np.concatenate([tail, sources[k](BLOCK)])
                rows.append(tail)
            return self._pack(rows)

        self.ia, self.ia_pos, self.ia_len = top_up(self.ia, self.ia_pos, self.ia_len, self._ia_src, np.ones(self.K))
        self.selu, self.sel_pos, self.sel_len = top_up(self.selu, self.sel_pos, self.sel_len, self._sel_src, need)
        self.tieu, self.tie_pos, self.tie_len = top_up(self.tieu, self.tie_pos, self.tie_len, self._tie_src, np.ones(self.K))
        p = self.istate[kn.I_SVC_POS]
        if p >= self.istate[kn.I_SVC_LEN]:
            self.svc = np.concatenate([self.svc[p:], self._svc_src(BLOCK)])
            self.istate[kn.I_SVC_POS] = 0
            self.istate[kn.I_SVC_LEN] = len(self.svc)

    # running

    @property
    def clock(self) -> float:
        return float(self.fstate[0])

    @property
    def seq(self) -> int:
        return int(self.istate[kn.I_SEQ])

    def run_until(self, t_end: float):
        while True:
            code = kn.run_segment(
                float(t_end), self.event_cap, self.N, self.assign, self.disc, self.tie_uniform, self.mu,
                self.fstate, self.istate, self.qlen, self.v, self.arr, self.jid, self.tq, self.comp,
                self.comp_slot, self.srv, self.next_arr,
                self.ia, self.ia_pos, self.ia_len, self.selu, self.sel_pos, self.sel_len,
                self.tieu, self.tie_pos, self.tie_len, self.svc,
                self.sel_kind, self.sel_D, self.expl_n, self.expl_sets, self.expl_len, self.expl_cum,
                self.perm, self.touched, self.A, self.mins,
                self.z_time, self.z_int, self.work_int, self.ww_int, self.thr, self.ww_above, self.age_above,
                self.record_events, self.log_t, self.log_kind, self.log_idx, self.log_q, self.log_sel, self.log_sel_n,
            )
            if code == kn.DONE:
                self._drain_log()
                return
            if code == kn.NEED_RANDOM:
                self._refill()
            elif code == kn.NEED_SLOTS:
                self._grow()
            elif code == kn.LOG_FULL:
                self._drain_log()
            else:
                self._drain_log()
                raise EventBudgetExceeded(f"more than {self.event_cap} events")

    def _drain_log(self):
        if not self.record_events:
            return
        m = int(self.istate[kn.I_LOG_N])
        z = self._z_log
        for e in range(m):
            q = int(self.log_q[e])
            if self.log_kind[e] == 0:
                z[q] += 1
                A = tuple(int(a) for a in self.log_sel[e, : self.log_sel_n[e]])
                rec = EventRecord(self._seq_logged, float(self.log_t[e]), "arrival", int(self.log_idx[e]), q, z.tolist(), A)
            else:
                z[q] -= 1
                rec = EventRecord(self._seq_logged, float(self.log_t[e]), "departure", int(self.log_idx[e]), q, z.tolist())
            self.events.append(rec)
            self._seq_logged += 1
        self.istate[kn.I_LOG_N] = 0

    # observation

    def stats(self) -> dict:
        """Cumulative integrals since the start (copies)."""
        return {
            "z_time": self.z_time.copy(),
            "z_int": self.z_int.copy(),
            "work_int": self.work_int.copy(),
            "ww_int": self.ww_int.copy(),
            "ww_above": self.ww_above.copy(),
            "age_above": self.age_above.copy(),
        }

    def summary(self) -> dict:
        T = self.clock - self.t_start
        if T <= 0:
            return {"duration": 0.0}
        return {
            "duration": T,
            "arrivals": int(self.istate[kn.I_ARRIVALS]),
            "departures": int(self.istate[kn.I_DEPARTURES]),
            "mean_z": (self.z_int / T).tolist(),
            "mean_workload": (self.work_int / T).tolist(),
            "mean_weighted_workload": (self.ww_int / T).tolist(),
            "z_distribution": (self.z_time / T).tolist(),
            "thresholds": self.thr.tolist(),
            "weighted_workload_tail": (self.ww_above / T).tolist(),
            "weighted_age_tail": (self.age_above / T).tolist(),
        }

    def total_jobs(self) -> int:
        return int(self.qlen.sum())

    def total_workload(self) -> float:
        """Total residual work at the clock (all queues are flushed at segment ends)."""
        return float(sum(self.v[n, : self.qlen[n]].sum() for n in range(self.N)))

    def snapshot(self) -> StateSnapshot:
        """State at the clock. Selection sets are not tracked here; each job gets (n,)."""
        jobs = []
        t = self.clock
        for n in range(self.N):
            z = int(self.qlen[n])
            for i in range(z):
                if self.disc == kn.D_PS:
                    r = 1.0 / z
                else:
                    r = 1.0 if i == self.srv[n] else 0.0
                vres = self.v[n, i] - r * (t - self.tq[n])
                jobs.append(SnapshotJob(n, i + 1, 0, (n,), self.mu * (t - self.arr[n, i]), self.mu * vres, r))
        alpha = self.spec.alpha()
        s = tuple(float(a * (u - t)) for a, u in zip(alpha, self.next_arr))
        return StateSnapshot(self.N, tuple(jobs), s)
