"""OLS bias over experience, hidden-correlate speed fits and IV-weighted OLS.

    python scripts/ols_and_correlates.py --n 200000 --z-noise 0.01
"""
import argparse

import numpy as np

from emplearn import model
from emplearn import simulate as sm
from emplearn.estimate import (experience_profile, iv_margin_weights, ols_correlate_profile,
                               weighted_ols_profile)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--horizon", type=int, default=30)
    ap.add_argument("--z-noise", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    params = model.StructuralParams.calibrated(
        0.505, 0.198, 0.055, z_noise_var=args.z_noise,
        skill_prices=model.SkillPriceProfile.constant(args.horizon))
    pan = sm.simulate(sm.SimulationConfig(args.n, args.horizon, model.HIDDEN, 0.0, args.seed), params)

    ols = experience_profile(pan, estimator="ols", n_boot=0)
    iv = experience_profile(pan, n_boot=0)
    print("   t      OLS   OLS limit      IV")
    for t in (0, 1, 5, 10, 20, args.horizon):
        print(f"{t:4d}  {ols.b_hat[t]:7.4f}  {model.ols_plim(params, t):10.4f}  {iv.b_hat[t]:6.4f}")

    paths = ols_correlate_profile(pan)
    sp = paths.speed
    print(f"\nspeed from schooling path {sp.kappa_b:.3f}, from correlate path {sp.kappa_c:.3f}, "
          f"common {sp.kappa_common:.3f}")

    disc = sm.discretize_schooling(pan, (7, 21))
    w = iv_margin_weights(disc)
    top = sorted(w.as_dict().items(), key=lambda kv: -abs(kv[1]))[:5]
    print("\nlargest IV margin weights:", ", ".join(f"{s}: {p:.3f}" for s, p in top),
          f"(sum {w.total:.12f})")
    res = weighted_ols_profile(disc, w)
    print("IV-weighted OLS at t = 0, 10, T:", ", ".join(f"{res.b_wols[t]:.4f}" for t in (0, 10, args.horizon)))


if __name__ == "__main__":
    main()
