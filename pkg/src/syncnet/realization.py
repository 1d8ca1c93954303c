"""Per-agent dynamic protocol in generic state-space form.

Every protocol built by the library is a linear system

    s+  = (A + c A_self) s + B_zeta zeta + B_zhat zeta_hat + B_z z
    u   = C_u s + D_z z
    eta = C_eta s

where ``zeta`` is the relative output signal, ``zeta_hat`` the relative
exchange signal built from neighbours' ``eta``, ``z`` the local measurement and
``c`` a per-agent scalar (the root-set self-damping coefficient, zero in the
homogeneous design).  Keeping ``c`` outside ``A`` lets one realization object
serve every agent of a group regardless of graph position.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ProtocolRealization:
    A: np.ndarray
    B_zeta: np.ndarray
    B_zhat: np.ndarray
    B_z: np.ndarray
    C_u: np.ndarray
    D_z: np.ndarray
    C_eta: np.ndarray
    A_self: np.ndarray = None
    partition: tuple = ()
    coupling: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        ns = np.shape(self.A)[0]
        A_self = np.zeros((ns, ns)) if self.A_self is None else self.A_self
        for name in ("A", "B_zeta", "B_zhat", "B_z", "C_u", "D_z", "C_eta"):
            object.__setattr__(self, name, _ro(getattr(self, name)))
        object.__setattr__(self, "A_self", _ro(A_self))
        checks = [
            (self.A.shape == (ns, ns), "A"),
            (self.A_self.shape == (ns, ns), "A_self"),
            (self.B_zeta.shape[0] == ns, "B_zeta"),
            (self.B_zhat.shape == (ns, self.C_eta.shape[0]), "B_zhat"),
            (self.B_z.shape[0] == ns, "B_z"),
            (self.C_u.shape[1] == ns, "C_u"),
            (self.D_z.shape == (self.C_u.shape[0], self.B_z.shape[1]), "D_z"),
            (self.C_eta.shape[1] == ns, "C_eta"),
            (sum(sz for _, sz in self.partition) in (0, ns), "partition"),
        ]
        for ok, name in checks:
            if not ok:
                raise DimensionMismatch(f"protocol block {name} has inconsistent shape")

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.C_u.shape[0]

    @property
    def n_exchange(self) -> int:
        return self.C_eta.shape[0]

    @property
    def n_zeta(self) -> int:
        return self.B_zeta.shape[1]

    @property
    def n_meas(self) -> int:
        return self.B_z.shape[1]

    def state_matrix(self, coupling=None) -> np.ndarray:
        c = self.coupling if coupling is None else coupling
        return self.A + c * self.A_self

    def with_coupling(self, coupling) -> "ProtocolRealization":
        return ProtocolRealization(
            self.A, self.B_zeta, self.B_zhat, self.B_z, self.C_u, self.D_z, self.C_eta,
            self.A_self, self.partition, float(coupling), dict(self.meta),
        )

    def slices(self) -> dict:
        out, start = {}, 0
        for name, size in self.partition:
            out[name] = slice(start, start + size)
            start += size
        return out

    def blocks(self) -> dict:
        return {
            "A": self.A, "A_self": self.A_self, "B_zeta": self.B_zeta, "B_zhat": self.B_zhat,
            "B_z": self.B_z, "C_u": self.C_u, "D_z": self.D_z, "C_eta": self.C_eta,
        }

    def to_bytes(self) -> bytes:
        """Canonical serialization of the protocol matrices (graph-independent)."""
        parts = []
        for name, M in self.blocks().items():
            parts.append(f"{name}:{M.shape[0]}x{M.shape[1]};".encode())
            parts.append(np.ascontiguousarray(M, dtype="<f8").tobytes())
        parts.append(repr(self.partition).encode())
        return b"".join(parts)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def to_dict(self) -> dict:
        d = {k: v.tolist() for k, v in self.blocks().items()}
        d["partition"] = [list(p) for p in self.partition]
        d["fingerprint"] = self.fingerprint()
        return d
