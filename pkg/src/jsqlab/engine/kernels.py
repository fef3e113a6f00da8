"""Array kernel for the fast simulation path.

The kernel covers networks with one service law for all jobs, selection by
mean-field sampling (with or without replacement) or from an explicit list,
JSQ/JLLQ/random assignment and the FIFO, LIFO, PS and residual-priority
disciplines. It consumes pre-drawn random numbers from per-stream buffers
and reproduces the general engine's event sequence exactly.

Return codes of ``run_segment``: 0 reached the end of the segment,
1 a random buffer ran dry, 2 a queue hit the slot capacity, 3 the event log
is full, 4 the event cap was reached. On codes 1 to 4 the state is left
exactly before the event that could not be processed.
"""
import numpy as np

from .._accel import maybe_njit

DONE = 0
NEED_RANDOM = 1
NEED_SLOTS = 2
LOG_FULL = 3
EVENT_CAP = 4

# selection kinds
SEL_CHOOSE = 0
SEL_REPLACE = 1
SEL_EXPLICIT = 2

# assignment kinds
AS_JSQ = 0
AS_JLLQ = 1
AS_RANDOM = 2

# disciplines
D_FIFO = 0
D_LIFO = 1
D_PS = 2
D_SHORTEST = 3
D_LONGEST = 4

# istate slots
I_SEQ = 0
I_NEXT_ID = 1
I_ARRIVALS = 2
I_DEPARTURES = 3
I_LOG_N = 4
I_SVC_POS = 5
I_SVC_LEN = 6
I_CODE_STREAM = 7


@maybe_njit
def set_efforts(n, disc, qlen, v, tq, comp, comp_slot, srv):
    z = qlen[n]
    if z == 0:
        comp[n] = np.inf
        comp_slot[n] = -1
        srv[n] = -1
        return
    if disc == D_PS:
        r = 1.0 / z
        best = np.inf
        bi = -1
        for i in range(z):
            c = tq[n] + v[n, i] / r
            if c < best:
                best = c
                bi = i
        comp[n] = best
        comp_slot[n] = bi
        srv[n] = -1
        return
    if disc == D_FIFO:
        s = 0
    elif disc == D_LIFO:
        s = z - 1
    else:
        s = 0
        for i in range(1, z):
            if disc == D_SHORTEST:
                if v[n, i] < v[n, s]:
                    s = i
            elif v[n, i] > v[n, s]:
                s = i
    srv[n] = s
    comp[n] = tq[n] + v[n, s] / 1.0
    comp_slot[n] = s


@maybe_njit
def advance_queue(n, t, disc, mu, qlen, v, arr, tq, srv, z_time, z_int, work_int, ww_int, thr, ww_above, age_above):
    t0 = tq[n]
    dt = t - t0
    if dt <= 0:
        if t > tq[n]:
            tq[n] = t
        return
    z = qlen[n]
    nb = z_time.shape[1]
    z_time[n, min(z, nb - 1)] += dt
    if z > 0:
        z_int[n] += z * dt
        work0 = 0.0
        for i in range(z):
            work0 += v[n, i]
        work_int[n] += work0 * dt - 0.5 * dt * dt
        W0 = mu * work0
        ww_int[n] += W0 * dt - 0.5 * mu * dt * dt
        oldest = arr[n, 0]
        for x in range(thr.shape[0]):
            a = (W0 - thr[x]) / mu
            if a > dt:
                a = dt
            if a > 0:
                ww_above[n, x] += a
            first = oldest + thr[x] / mu
            if first < t0:
                first = t0
            b = t - first
            if b > dt:
                b = dt
            if b > 0:
                age_above[n, x] += b
        if disc == D_PS:
            r = 1.0 / z
            for i in range(z):
                v[n, i] -= r * dt
        else:
            v[n, srv[n]] -= 1.0 * dt
    tq[n] = t


@maybe_njit
def draw_selection(k, N, sel_kind, sel_D, expl_n, expl_sets, expl_len, expl_cum, selu, sel_pos, perm, touched, A):
    """Writes the selection set of stream k into A (sorted); returns its size."""
    kind = sel_kind[k]
    D = sel_D[k]
    if kind == SEL_CHOOSE:
        if D == N:
            for i in range(N):
                A[i] = i
            return N
        for i in range(D):
            u = selu[k, sel_pos[k]]
            sel_pos[k] += 1
            off = int(u * (N - i))
            if off > N - i - 1:
                off = N - i - 1
            j = i + off
            vj = perm[j]
            perm[j] = perm[i]
            touched[2 * i] = j
            touched[2 * i + 1] = i
            A[i] = vj
        for i in range(D):
            perm[touched[2 * i]] = touched[2 * i]
            perm[touched[2 * i + 1]] = touched[2 * i + 1]
        na = D
    elif kind == SEL_REPLACE:
        na = 0
        for i in range(D):
            u = selu[k, sel_pos[k]]
            sel_pos[k] += 1
            q = int(u * N)
            if q > N - 1:
                q = N - 1
            dup = False
            for a in range(na):
                if A[a] == q:
                    dup = True
                    break
            if not dup:
                A[na] = q
                na += 1
    else:
        s = 0
        S = expl_n[k]
        if S > 1:
            u = selu[k, sel_pos[k]]
            sel_pos[k] += 1
            # first index with cum > u
            s = S - 1
            for i in range(S):
                if expl_cum[k, i] > u:
                    s = i
                    break
        na = expl_len[k, s]
        for i in range(na):
            A[i] = expl_sets[k, s, i]
        return na
    # insertion sort
    for i in range(1, na):
        x = A[i]
        j = i - 1
        while j >= 0 and A[j] > x:
            A[j + 1] = A[j]
            j -= 1
        A[j + 1] = x
    return na


@maybe_njit
def selection_need(k, N, sel_kind, sel_D, expl_n):
    kind = sel_kind[k]
    if kind == SEL_CHOOSE:
        return 0 if sel_D[k] == N else sel_D[k]
    if kind == SEL_REPLACE:
        return sel_D[k]
    return 1 if expl_n[k] > 1 else 0


@maybe_njit
def choose_queue(k, t, na, A, assign, tie_uniform, qlen, v, tq, tieu, tie_pos, mins):
    if na == 1:
        return A[0]
    nm = 0
    if assign == AS_RANDOM:
        for i in range(na):
            mins[i] = A[i]
        nm = na
    else:
        best = np.inf
        for i in range(na):
            n = A[i]
            if assign == AS_JSQ:
                key = float(qlen[n])
            else:
                s = 0.0
                for j in range(qlen[n]):
                    s += v[n, j]
                key = s - (t - tq[n]) if qlen[n] > 0 else s - 0.0
            if key < best:
                best = key
                mins[0] = n
                nm = 1
            elif key == best:
                mins[nm] = n
                nm += 1
    if nm == 1 or not tie_uniform:
        return mins[0]
    u = tieu[k, tie_pos[k]]
    tie_pos[k] += 1
    i = int(u * nm)
    if i > nm - 1:
        i = nm - 1
    return mins[i]


@maybe_njit
def run_segment(
    t_end, event_cap, N, assign, disc, tie_uniform, mu,
    fstate, istate, qlen, v, arr, jid, tq, comp, comp_slot, srv, next_arr,
    ia, ia_pos, ia_len, selu, sel_pos, sel_len, tieu, tie_pos, tie_len, svc,
    sel_kind, sel_D, expl_n, expl_sets, expl_len, expl_cum,
    perm, touched, A, mins,
    z_time, z_int, work_int, ww_int, thr, ww_above, age_above,
    log_on, log_t, log_kind, log_idx, log_q, log_sel, log_sel_n,
):
    K = next_arr.shape[0]
    cap = v.shape[1]
    while True:
        k = 0
        for i in range(1, K):
            if next_arr[i] < next_arr[k]:
                k = i
        ta = next_arr[k]
        nd = 0
        for i in range(1, N):
            if comp[i] < comp[nd]:
                nd = i
        td = comp[nd]
        departure = td <= ta
        t = td if departure else ta
        if t >= t_end:
            break
        if istate[I_SEQ] >= event_cap:
            return EVENT_CAP
        if log_on and istate[I_LOG_N] >= log_t.shape[0]:
            return LOG_FULL
        if departure:
            fstate[0] = t
            advance_queue(nd, t, disc, mu, qlen, v, arr, tq, srv, z_time, z_int, work_int, ww_int, thr, ww_above, age_above)
            s = comp_slot[nd]
            job = jid[nd, s]
            z = qlen[nd]
            for i in range(s, z - 1):
                v[nd, i] = v[nd, i + 1]
                arr[nd, i] = arr[nd, i + 1]
                jid[nd, i] = jid[nd, i + 1]
            qlen[nd] = z - 1
            istate[I_DEPARTURES] += 1
            set_efforts(nd, disc, qlen, v, tq, comp, comp_slot, srv)
            if log_on:
                e = istate[I_LOG_N]
                log_t[e] = t
                log_kind[e] = 1
                log_idx[e] = job
                log_q[e] = nd
                log_sel_n[e] = 0
                istate[I_LOG_N] = e + 1
        else:
            need = selection_need(k, N, sel_kind, sel_D, expl_n)
            if (ia_pos[k] >= ia_len[k] or sel_pos[k] + need > sel_len[k] or tie_pos[k] >= tie_len[k]
                    or istate[I_SVC_POS] >= istate[I_SVC_LEN]):
                istate[I_CODE_STREAM] = k
                return NEED_RANDOM
            sp = sel_pos[k]
            tp = tie_pos[k]
            na = draw_selection(k, N, sel_kind, sel_D, expl_n, expl_sets, expl_len, expl_cum, selu, sel_pos, perm, touched, A)
            n = choose_queue(k, t, na, A, assign, tie_uniform, qlen, v, tq, tieu, tie_pos, mins)
            if qlen[n] >= cap:
                sel_pos[k] = sp
                tie_pos[k] = tp
                return NEED_SLOTS
            fstate[0] = t
            advance_queue(n, t, disc, mu, qlen, v, arr, tq, srv, z_time, z_int, work_int, ww_int, thr, ww_above, age_above)
            y = svc[istate[I_SVC_POS]]
            istate[I_SVC_POS] += 1
            z = qlen[n]
            v[n, z] = y
            arr[n, z] = t
            jid[n, z] = istate[I_NEXT_ID]
            istate[I_NEXT_ID] += 1
            qlen[n] = z + 1
            istate[I_ARRIVALS] += 1
            set_efforts(n, disc, qlen, v, tq, comp, comp_slot, srv)
            next_arr[k] = t + ia[k, ia_pos[k]]
            ia_pos[k] += 1
            if log_on:
                e = istate[I_LOG_N]
                log_t[e] = t
                log_kind[e] = 0
                log_idx[e] = k
                log_q[e] = n
                for i in range(na):
                    log_sel[e, i] = A[i]
                log_sel_n[e] = na
                istate[I_LOG_N] = e + 1
        istate[I_SEQ] += 1
    for n in range(N):
        advance_queue(n, t_end, disc, mu, qlen, v, arr, tq, srv, z_time, z_int, work_int, ww_int, thr, ww_above, age_above)
    if t_end > fstate[0]:
        fstate[0] = t_end
    return DONE
