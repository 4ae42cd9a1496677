"""Pure-Python kernels. Same signatures and results as the compiled ``_core``.

Clause sets arrive flattened: ``lits`` holds 1-based signed literals and
``start`` has one offset per clause plus a final end offset.
"""

import numpy as np

UNASSIGNED = -1


def _unflatten(lits, start):
    lits = [int(v) for v in lits]
    start = [int(s) for s in start]
    return [lits[start[i]:start[i + 1]] for i in range(len(start) - 1)]


def bnb_search(nvars, hard_lits, hard_start, soft_lits, soft_start, soft_w,
               order, first_value, limit, stop_first):
    """Depth-first branch and bound over ``order``.

    Returns ``(assignment, cost)`` for the best leaf with cost < ``limit``,
    or ``(None, limit)`` if none exists.  With ``stop_first`` the first such
    leaf is returned.
    """
    hard = _unflatten(hard_lits, hard_start)
    soft = _unflatten(soft_lits, soft_start)
    weights = [int(w) for w in soft_w]
    order = [int(v) for v in order]
    first_value = [int(v) for v in first_value]

    # per-variable preferred polarity from unit soft clauses (0 if none or ambiguous)
    pref = [0] * nvars
    pref_w = [0] * nvars
    n_units = [0] * nvars
    for clause, w in zip(soft, weights):
        if len(clause) == 1:
            v = abs(clause[0]) - 1
            n_units[v] += 1
            pref[v] = 1 if clause[0] > 0 else -1
            pref_w[v] = w
    for v in range(nvars):
        if n_units[v] != 1:
            pref[v] = 0
            pref_w[v] = 0

    val = [UNASSIGNED] * nvars
    trail = []
    best = {"cost": int(limit), "assignment": None, "done": False}

    def lit_state(lit):
        x = val[abs(lit) - 1]
        if x == UNASSIGNED:
            return UNASSIGNED
        return 1 if (x == 1) == (lit > 0) else 0

    def propagate():
        changed = True
        while changed:
            changed = False
            for clause in hard:
                n_free = 0
                free_lit = 0
                sat = False
                for lit in clause:
                    s = lit_state(lit)
                    if s == 1:
                        sat = True
                        break
                    if s == UNASSIGNED:
                        n_free += 1
                        free_lit = lit
                if sat:
                    continue
                if n_free == 0:
                    return False
                if n_free == 1:
                    v = abs(free_lit) - 1
                    val[v] = 1 if free_lit > 0 else 0
                    trail.append(v)
                    changed = True
        return True

    def lower_bound():
        lb = 0
        for clause, w in zip(soft, weights):
            if all(lit_state(lit) == 0 for lit in clause):
                lb += w
        used = set()
        for clause in hard:
            m = None
            ok = True
            for lit in clause:
                s = lit_state(lit)
                if s == 1:
                    ok = False
                    break
                if s == 0:
                    continue
                v = abs(lit) - 1
                if v in used or pref[v] == 0 or (pref[v] > 0) == (lit > 0):
                    ok = False
                    break
                m = pref_w[v] if m is None else min(m, pref_w[v])
            if ok and m is not None:
                lb += m
                used.update(abs(lit) - 1 for lit in clause if lit_state(lit) == UNASSIGNED)
        return lb

    def undo(mark):
        while len(trail) > mark:
            val[trail.pop()] = UNASSIGNED

    def dfs(pos):
        while pos < nvars and val[order[pos]] != UNASSIGNED:
            pos += 1
        lb = lower_bound()
        if lb >= best["cost"]:
            return
        if pos == nvars:
            best["cost"] = lb
            best["assignment"] = np.array(val, dtype=np.int8)
            if stop_first:
                best["done"] = True
            return
        v = order[pos]
        for x in (first_value[v], 1 - first_value[v]):
            mark = len(trail)
            val[v] = x
            trail.append(v)
            if propagate():
                dfs(pos + 1)
            undo(mark)
            if best["done"]:
                return

    if propagate():
        dfs(0)
    return best["assignment"], best["cost"]


def greedy_nms(boxes, scores, classes, iou_threshold):
    """Greedy NMS; ``classes`` of None means class-agnostic. Returns kept indices."""
    boxes = np.asarray(boxes, dtype=np.float64)
    n = len(boxes)
    order = sorted(range(n), key=lambda i: (-float(scores[i]), i))
    areas = [(b[2] - b[0]) * (b[3] - b[1]) for b in boxes.tolist()]
    bl = boxes.tolist()
    suppressed = [False] * n
    keep = []
    for a_pos, i in enumerate(order):
        if suppressed[i]:
            continue
        keep.append(i)
        for j in order[a_pos + 1:]:
            if suppressed[j]:
                continue
            if classes is not None and classes[i] != classes[j]:
                continue
            bi, bj = bl[i], bl[j]
            w = min(bi[2], bj[2]) - max(bi[0], bj[0])
            h = min(bi[3], bj[3]) - max(bi[1], bj[1])
            inter = w * h if w > 0 and h > 0 else 0.0
            iou = inter / (areas[i] + areas[j] - inter)
            if iou > iou_threshold:
                suppressed[j] = True
    return np.array(keep, dtype=np.intp)
