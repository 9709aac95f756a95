"""Reference modulus of the square frame between [-1/2, 1/2]^2 and [-1, 1]^2.

Independent of the cut-cell solver: plain five-point differences on grids
that contain both squares exactly, then extrapolation in h with the
corner exponent 4/3.  Writes squares_reference.json next to this file.
"""
import json
from pathlib import Path

import numpy as np
import pyamg
from scipy.sparse.linalg import cg


def frame_energy(k: int) -> float:
    n = 4 * k + 1  # nodes across [-1, 1], h = 1/(2k)
    x = np.linspace(-1, 1, n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    inner = (np.abs(X) <= 0.5 + 1e-12) & (np.abs(Y) <= 0.5 + 1e-12)
    outer = (np.abs(X) >= 1 - 1e-12) | (np.abs(Y) >= 1 - 1e-12)
    free = ~inner & ~outer
    A = pyamg.gallery.poisson((n, n), format="csr")
    u = np.where(outer, 1.0, 0.0).ravel()
    f = free.ravel()
    Aff = A[f][:, f]
    rhs = -(A[f][:, ~f] @ u[~f])
    ml = pyamg.smoothed_aggregation_solver(Aff, symmetry="symmetric")
    sol, info = cg(Aff, rhs, rtol=1e-13, maxiter=4000, M=ml.aspreconditioner())
    u[f] = sol
    U = u.reshape(n, n)
    return float(np.sum(np.diff(U, axis=0) ** 2) + np.sum(np.diff(U, axis=1) ** 2))


def main():
    ks = [32, 64, 128, 256, 512]
    vals = [1.0 / frame_energy(k) for k in ks]
    h = 1.0 / (2 * np.array(ks, dtype=float))
    M = np.stack([np.ones_like(h), h ** (4 / 3), h ** 2], axis=1)
    coef = np.linalg.lstsq(M, np.array(vals), rcond=None)[0]
    out = {"region": "square frame, inner half-side 1/2, outer half-side 1",
           "method": "five-point differences on aligned grids, fit v0 + a h^(4/3) + b h^2",
           "h": h.tolist(), "values": vals, "extrapolated": float(coef[0])}
    Path(__file__).with_name("squares_reference.json").write_text(json.dumps(out, indent=1) + "\n")
    print(out)


if __name__ == "__main__":
    main()
