"""Nash strategies of nature on small synthetic 8x8 images with pixel values in [0, 1].

Class +1 draws a vertical stroke, class -1 a horizontal one, both with pixel noise. Perturbed
images produced by the Nash family can leave the unit box; they are clipped back and the
saddle certificate is recomputed for the clipped distribution. Clipping never increases the
transport cost, so the clipped distribution stays feasible, but it is no longer a saddle point:
the nonzero residuals measure what the box constraint is worth to nature.
"""
import argparse

import numpy as np

from drokit.core import LabeledDataset, Norm
from drokit.nash_svm import (PerturbedDataset, nash_family, solve_dual_light, solve_primal_svm, transport_spend,
                             uniform_alpha, verify_saddle)


def synthetic_images(rng, J, noise=0.15):
    X = np.zeros((J, 8, 8))
    y = np.where(np.arange(J) < J // 2, 1.0, -1.0)
    for i in range(J):
        k = rng.integers(1, 7)
        if y[i] > 0:
            X[i, 1:7, k] = 1.0
        else:
            X[i, k, 1:7] = 1.0
    X += noise * rng.standard_normal(X.shape)
    return LabeledDataset(np.clip(X, 0.0, 1.0).reshape(J, 64), y)


def clip(Q: PerturbedDataset) -> PerturbedDataset:
    return PerturbedDataset(Q.sources, Q.masses, np.clip(Q.features, 0.0, 1.0), Q.labels, "clipped", Q.spend)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--J", type=int, default=40)
    ap.add_argument("--eps", type=float, default=0.03)
    ap.add_argument("--norm", default="2", choices=("1", "2", "inf"))
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    norm = Norm.parse(args.norm)
    data = synthetic_images(np.random.default_rng(args.seed), args.J)
    dual = solve_dual_light(data, norm, args.eps)
    primal = solve_primal_svm(data, norm, args.eps, dual=dual)
    print(f"robust value {primal.value:.6f}, duality gap {primal.value - dual.value:+.1e}, "
          f"{dual.support.size} samples carry the transport budget")

    Q = nash_family(data, dual, uniform_alpha(dual, data.size), norm)
    C = clip(Q)
    for name, R in (("nash", Q), ("clipped", C)):
        cert = verify_saddle(data, norm, args.eps, primal.theta, R, sol=dual)
        outside = int(np.count_nonzero((R.features < 0) | (R.features > 1)))
        print(f"{name:8s} spend {transport_spend(data, R, norm):.4f}  E_Q hinge {cert.q_value:.6f}  "
              f"residuals {cert.left_residual:+.1e} / {cert.right_residual:+.1e}  pixels outside box {outside}")


if __name__ == "__main__":
    main()
