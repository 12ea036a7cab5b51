"""Independent high-precision reference values for the schedule and inversion tests.

Run with `python3 schedule_oracle.py`; the printed values are frozen into the
Rust test suites. Uses mpmath only, no shared code with the crate.
"""
import mpmath as mp

mp.mp.dps = 50

T = 1000
B1 = mp.mpf("1e-4")
BT = mp.mpf("0.02")


def alpha_bars():
    out = []
    acc = mp.mpf(1)
    for j in range(T):
        beta = B1 + (BT - B1) * j / (T - 1)
        acc *= 1 - beta
        out.append(acc)
    return out


def g(policy, u):
    if policy == "uniform":
        return u
    if policy == "quad":
        return u ** 2
    if policy == "cube":
        return u ** 3
    if policy == "exp":
        return (mp.e ** (5 * u) - 1) / (mp.e ** 5 - 1)
    raise ValueError(policy)


def ceil_snapped(v):
    r = mp.nint(v)
    if abs(v - r) < mp.mpf("1e-9"):
        return int(r)
    return int(mp.ceil(v))


def subset(policy, s):
    taus = []
    for i in range(1, s + 1):
        k = ceil_snapped(g(policy, mp.mpf(i) / s) * T) - 1
        k = max(k, 0)
        if not taus or k > taus[-1]:
            taus.append(k)
    if taus[-1] != T - 1:
        taus.append(T - 1)
    return taus


def inversion_lambda(ab, taus):
    # standard-normal analytic model: eps(x, t) = sqrt(1 - ab_t) x
    lam = mp.mpf(1)
    cur = mp.mpf(1)        # clean endpoint
    ev = ab[0]             # first eps evaluation clamped to step 0
    for k in taus:
        nxt = ab[k]
        f = (1 - mp.sqrt(1 - cur) * mp.sqrt(1 - ev)) / mp.sqrt(cur)
        lam *= mp.sqrt(nxt) * f + mp.sqrt(1 - nxt) * mp.sqrt(1 - ev)
        cur = nxt
        ev = nxt
    return lam


if __name__ == "__main__":
    ab = alpha_bars()
    print("alpha_bar[0] =", mp.nstr(ab[0], 20))
    print("alpha_bar[T-1] =", mp.nstr(ab[-1], 20))
    print("alpha_bar[332] =", mp.nstr(ab[332], 20))
    for policy in ["uniform", "quad", "cube", "exp"]:
        print(policy, "S=3 ->", subset(policy, 3))
    for policy in ["uniform", "quad", "cube", "exp"]:
        for s in [3, 10, 1000]:
            taus = subset(policy, s)
            print(f"lambda {policy:8s} S={s:5d} len={len(taus):5d}", mp.nstr(inversion_lambda(ab, taus), 20))
