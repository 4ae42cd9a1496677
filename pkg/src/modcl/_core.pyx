# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: branch-and-bound MaxSAT search and greedy NMS.

Mirrors ``modcl._pure`` exactly; see there for the argument conventions.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef long long i64


cdef struct Search:
    int nvars
    int n_hard
    int n_soft
    const int* hard_lits
    const int* hard_start
    const int* soft_lits
    const int* soft_start
    const i64* soft_w
    const int* order
    const signed char* first_value
    signed char* pref
    i64* pref_w
    signed char* val
    int* trail
    int trail_len
    char* used
    i64 best_cost
    signed char* best
    int found
    int stop_first
    int done


cdef inline int lit_state(Search* S, int lit) noexcept nogil:
    cdef int v = (lit if lit > 0 else -lit) - 1
    cdef signed char x = S.val[v]
    if x < 0:
        return -1
    if (x == 1) == (lit > 0):
        return 1
    return 0


cdef int propagate(Search* S) noexcept nogil:
    cdef int changed = 1
    cdef int c, k, lit, s, n_free, free_lit, sat, v
    while changed:
        changed = 0
        for c in range(S.n_hard):
            n_free = 0
            free_lit = 0
            sat = 0
            for k in range(S.hard_start[c], S.hard_start[c + 1]):
                lit = S.hard_lits[k]
                s = lit_state(S, lit)
                if s == 1:
                    sat = 1
                    break
                if s == -1:
                    n_free += 1
                    free_lit = lit
            if sat:
                continue
            if n_free == 0:
                return 0
            if n_free == 1:
                v = (free_lit if free_lit > 0 else -free_lit) - 1
                S.val[v] = 1 if free_lit > 0 else 0
                S.trail[S.trail_len] = v
                S.trail_len += 1
                changed = 1
    return 1


cdef i64 lower_bound(Search* S) noexcept nogil:
    cdef i64 lb = 0
    cdef i64 m
    cdef int c, k, lit, s, v, ok, all_false, has_m
    for c in range(S.n_soft):
        all_false = 1
        for k in range(S.soft_start[c], S.soft_start[c + 1]):
            if lit_state(S, S.soft_lits[k]) != 0:
                all_false = 0
                break
        if all_false:
            lb += S.soft_w[c]
    for v in range(S.nvars):
        S.used[v] = 0
    for c in range(S.n_hard):
        ok = 1
        has_m = 0
        m = 0
        for k in range(S.hard_start[c], S.hard_start[c + 1]):
            lit = S.hard_lits[k]
            s = lit_state(S, lit)
            if s == 1:
                ok = 0
                break
            if s == 0:
                continue
            v = (lit if lit > 0 else -lit) - 1
            if S.used[v] or S.pref[v] == 0 or (S.pref[v] > 0) == (lit > 0):
                ok = 0
                break
            if not has_m or S.pref_w[v] < m:
                m = S.pref_w[v]
                has_m = 1
        if ok and has_m:
            lb += m
            for k in range(S.hard_start[c], S.hard_start[c + 1]):
                lit = S.hard_lits[k]
                if lit_state(S, lit) == -1:
                    S.used[(lit if lit > 0 else -lit) - 1] = 1
    return lb


cdef inline void undo(Search* S, int mark) noexcept nogil:
    while S.trail_len > mark:
        S.trail_len -= 1
        S.val[S.trail[S.trail_len]] = -1


cdef void dfs(Search* S, int pos) noexcept nogil:
    cdef int v, mark, t, i
    cdef signed char x
    while pos < S.nvars and S.val[S.order[pos]] >= 0:
        pos += 1
    cdef i64 lb = lower_bound(S)
    if lb >= S.best_cost:
        return
    if pos == S.nvars:
        S.best_cost = lb
        for i in range(S.nvars):
            S.best[i] = S.val[i]
        S.found = 1
        if S.stop_first:
            S.done = 1
        return
    v = S.order[pos]
    for t in range(2):
        x = S.first_value[v] if t == 0 else 1 - S.first_value[v]
        mark = S.trail_len
        S.val[v] = x
        S.trail[S.trail_len] = v
        S.trail_len += 1
        if propagate(S):
            dfs(S, pos + 1)
        undo(S, mark)
        if S.done:
            return


def bnb_search(int nvars, hard_lits, hard_start, soft_lits, soft_start, soft_w,
               order, first_value, limit, bint stop_first):
    cdef int[::1] hl = np.ascontiguousarray(hard_lits, dtype=np.intc)
    cdef int[::1] hs = np.ascontiguousarray(hard_start, dtype=np.intc)
    cdef int[::1] sl = np.ascontiguousarray(soft_lits, dtype=np.intc)
    cdef int[::1] ss = np.ascontiguousarray(soft_start, dtype=np.intc)
    cdef i64[::1] sw = np.ascontiguousarray(soft_w, dtype=np.int64)
    cdef int[::1] od = np.ascontiguousarray(order, dtype=np.intc)
    cdef signed char[::1] fv = np.ascontiguousarray(first_value, dtype=np.int8)
    # sentinel padding so empty arrays still yield valid pointers
    cdef int[::1] pad = np.zeros(1, dtype=np.intc)
    cdef i64[::1] padw = np.zeros(1, dtype=np.int64)
    cdef signed char[::1] pref = np.zeros(max(nvars, 1), dtype=np.int8)
    cdef i64[::1] pref_w = np.zeros(max(nvars, 1), dtype=np.int64)
    cdef int[::1] n_units = np.zeros(max(nvars, 1), dtype=np.intc)
    cdef signed char[::1] best = np.zeros(max(nvars, 1), dtype=np.int8)
    cdef Search S
    cdef int c, v, lit
    cdef int n_soft = ss.shape[0] - 1

    for c in range(n_soft):
        if ss[c + 1] - ss[c] == 1:
            lit = sl[ss[c]]
            v = (lit if lit > 0 else -lit) - 1
            n_units[v] += 1
            pref[v] = 1 if lit > 0 else -1
            pref_w[v] = sw[c]
    for v in range(nvars):
        if n_units[v] != 1:
            pref[v] = 0
            pref_w[v] = 0

    S.nvars = nvars
    S.n_hard = hs.shape[0] - 1
    S.n_soft = n_soft
    S.hard_lits = &hl[0] if hl.shape[0] > 0 else &pad[0]
    S.hard_start = &hs[0]
    S.soft_lits = &sl[0] if sl.shape[0] > 0 else &pad[0]
    S.soft_start = &ss[0]
    S.soft_w = &sw[0] if sw.shape[0] > 0 else &padw[0]
    S.order = &od[0] if od.shape[0] > 0 else &pad[0]
    S.first_value = &fv[0] if fv.shape[0] > 0 else <signed char*>&pref[0]
    S.pref = &pref[0]
    S.pref_w = &pref_w[0]
    S.best = &best[0]
    S.best_cost = limit
    S.found = 0
    S.stop_first = stop_first
    S.done = 0
    S.trail_len = 0
    S.val = <signed char*>malloc(max(nvars, 1) * sizeof(signed char))
    S.trail = <int*>malloc(max(nvars, 1) * sizeof(int))
    S.used = <char*>malloc(max(nvars, 1) * sizeof(char))
    if S.val == NULL or S.trail == NULL or S.used == NULL:
        free(S.val); free(S.trail); free(S.used)
        raise MemoryError()
    try:
        for v in range(nvars):
            S.val[v] = -1
        with nogil:
            if propagate(&S):
                dfs(&S, 0)
    finally:
        free(S.val)
        free(S.trail)
        free(S.used)
    if not S.found:
        return None, int(limit)
    return np.asarray(best)[:nvars].copy(), int(S.best_cost)


def greedy_nms(boxes, scores, classes, double iou_threshold):
    cdef double[:, ::1] b = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    cdef double[::1] sc = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    cdef cnp.intp_t[::1] order = np.lexsort((np.arange(n), -np.asarray(sc))).astype(np.intp)
    cdef long[::1] cls
    cdef bint agnostic = classes is None
    if not agnostic:
        cls = np.ascontiguousarray(classes, dtype=np.int_)
    cdef double[::1] area = np.empty(n, dtype=np.float64)
    cdef char[::1] suppressed = np.zeros(n, dtype=np.int8)
    cdef cnp.intp_t[::1] keep = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t nk = 0, a, c, i, j
    cdef double w, h, inter, iou
    for i in range(n):
        area[i] = (b[i, 2] - b[i, 0]) * (b[i, 3] - b[i, 1])
    for a in range(n):
        i = order[a]
        if suppressed[i]:
            continue
        keep[nk] = i
        nk += 1
        for c in range(a + 1, n):
            j = order[c]
            if suppressed[j]:
                continue
            if not agnostic and cls[i] != cls[j]:
                continue
            w = min(b[i, 2], b[j, 2]) - max(b[i, 0], b[j, 0])
            h = min(b[i, 3], b[j, 3]) - max(b[i, 1], b[j, 1])
            inter = w * h if (w > 0 and h > 0) else 0.0
            iou = inter / (area[i] + area[j] - inter)
            if iou > iou_threshold:
                suppressed[j] = 1
    return np.asarray(keep)[:nk].copy()
