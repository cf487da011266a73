"""Independent NumPy reference for one sampling step.

Order: temperature on both pathways, contrastive reweighting, repetition
penalty on log q, softmax, top-k / top-p, inverse-CDF draw.

Writes ../fixtures/decode_trace.json. Re-run only when the documented
pipeline changes on purpose.
"""
import json
import os

import numpy as np


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    finite = np.isfinite(x)
    out = np.zeros_like(x)
    m = x[finite].max()
    e = np.exp(x[finite] - m)
    out[finite] = e / e.sum()
    return out


def contrastive(pf, pc, alpha):
    if alpha == 0.0:
        return pf.copy()
    logq = np.full_like(pf, -np.inf)
    live = pf > 0
    logq[live] = (1 + alpha) * np.log(pf[live]) - alpha * np.log(pc[live])
    return softmax(logq)


def rep_penalty(logits, history, pen):
    out = logits.copy()
    for t in sorted(set(history)):
        v = out[t]
        if not np.isfinite(v):
            continue
        out[t] = v / pen if v > 0 else v * pen
    return out


def top_k_top_p(p, k, top_p):
    order = np.argsort(-p, kind="stable")
    total = p.sum()
    cum = 0.0
    nucleus = 0
    for i in order:
        cum += p[i]
        nucleus += 1
        if cum >= top_p * total - 1e-12:
            break
    keep = max(1, min(k, nucleus))
    out = np.zeros_like(p)
    kept = order[:keep]
    out[kept] = p[kept] / p[kept].sum()
    return out


def draw(p, u):
    target = u * p.sum()
    cum = 0.0
    last = 0
    for i, v in enumerate(p):
        if v <= 0:
            continue
        last = i
        cum += v
        if target < cum:
            return i
    return last


def step(lf, lc, history, alpha, k, top_p, temp, pen):
    pf = softmax(np.asarray(lf) / temp)
    pc = softmax(np.asarray(lc) / temp)
    q = contrastive(pf, pc, alpha)
    with np.errstate(divide="ignore"):
        logq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), -np.inf)
    final = top_k_top_p(softmax(rep_penalty(logq, history, pen)), k, top_p)
    return pf, pc, q, final


def enc(v):
    return [None if not np.isfinite(x) else float(x) for x in v]


def main():
    rng = np.random.default_rng(20240607)
    cases = []
    settings = [
        # alpha, k, p, temperature, penalty, masked ids
        (0.75, 10, 0.9, 0.5, 1.03, []),
        (0.375, 10, 0.9, 0.5, 1.03, [0, 1]),
        (0.0, 10, 0.9, 0.5, 1.03, []),
        (0.75, 3, 1.0, 1.0, 1.5, [2]),
        (2.0, 20, 0.5, 0.7, 1.2, [0, 3, 5]),
        (0.75, 10, 0.9, 0.5, 1.03, []),
    ]
    for n, (alpha, k, top_p, temp, pen, masked) in enumerate(settings):
        V = 16
        lf = rng.normal(0.0, 2.0, V)
        lc = lf + rng.normal(0.0, 1.0, V)
        for t in masked:
            lf[t] = -np.inf
            lc[t] = -np.inf
        history = [int(x) for x in rng.integers(0, V, 4) if int(x) not in masked]
        uniforms = [float(u) for u in rng.random(3)]
        pf, pc, q, final = step(lf, lc, history, alpha, k, top_p, temp, pen)
        cases.append({
            "name": f"case{n}",
            "logits_full": enc(lf),
            "logits_ctx": enc(lc),
            "history": history,
            "alpha": alpha,
            "top_k": k,
            "top_p": top_p,
            "temperature": temp,
            "repetition_penalty": pen,
            "p_full": enc(pf),
            "p_ctx": enc(pc),
            "contrastive": enc(q),
            "final": enc(final),
            "uniforms": uniforms,
            "draws": [draw(final, u) for u in uniforms],
        })
    here = os.path.dirname(os.path.abspath(__file__))
    out = os.path.join(here, "..", "fixtures", "decode_trace.json")
    with open(out, "w") as f:
        json.dump({"cases": cases}, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
