"""Named parameter registry, Adam updates, and checkpoint round-tripping."""

import os

import numpy as np

from .autodiff import Tensor

MANIFEST_NAME = "manifest.txt"
BLOB_NAME = "params.bin"


class GradientError(RuntimeError):
    pass


class ParameterStore:
    """Maps names to trainable Tensors plus per-parameter Adam moments.

    Names must be unique; insertion order is preserved so checkpoints are
    byte-stable for a fixed registration sequence.
    """

    def __init__(self):
        self._params = {}
        self._moments = {}
        self._frozen = set()
        self.step_count = 0

    def create(self, name, value):
        if name in self._params:
            raise ValueError(f"parameter {name!r} already registered")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, op="param")
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def freeze(self, prefix):
        """Exclude all parameters with this name prefix from optimizer steps."""
        for name in self._params:
            if name.startswith(prefix):
                self._frozen.add(name)

    def is_frozen(self, name):
        return name in self._frozen

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def adam_step(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        """In-place adaptive-moment update; clears gradients afterwards."""
        self.step_count += 1
        t = self.step_count
        for name, p in self._params.items():
            if name in self._frozen or p.grad is None:
                continue
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise GradientError(f"non-finite gradient in parameter {name!r}")
            if name not in self._moments:
                self._moments[name] = (np.zeros_like(p.value), np.zeros_like(p.value))
            m, v = self._moments[name]
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * (g * g)
            self._moments[name] = (m, v)
            m_hat = m / (1.0 - beta1**t)
            v_hat = v / (1.0 - beta2**t)
            p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        self.zero_grad()

    def snapshot(self):
        """Copy of all parameter arrays (for best-epoch bookkeeping)."""
        return {name: p.value.copy() for name, p in self._params.items()}

    def restore(self, snap):
        for name, arr in snap.items():
            self._params[name].value[...] = arr

    def save(self, path):
        """Write manifest + flat little-endian float64 blob under ``path``/."""
        os.makedirs(path, exist_ok=True)
        offset = 0
        lines = []
        with open(os.path.join(path, BLOB_NAME), "wb") as blob:
            for name, p in self._params.items():
                raw = np.ascontiguousarray(p.value, dtype="<f8").tobytes()
                shape = ",".join(str(d) for d in p.value.shape) or "scalar"
                flag = "frozen" if name in self._frozen else "trainable"
                lines.append(f"{name}\t{shape}\t{offset}\t{flag}")
                blob.write(raw)
                offset += len(raw)
        with open(os.path.join(path, MANIFEST_NAME), "w") as mf:
            mf.write("\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load(cls, path):
        manifest = os.path.join(path, MANIFEST_NAME)
        if not os.path.isfile(manifest):
            raise FileNotFoundError(f"no checkpoint manifest at {manifest}")
        with open(os.path.join(path, BLOB_NAME), "rb") as blob:
            raw = blob.read()
        store = cls()
        with open(manifest) as mf:
            for line in mf:
                line = line.rstrip("\n")
                if not line:
                    continue
                name, shape_s, offset_s, flag = line.split("\t")
                shape = () if shape_s == "scalar" else tuple(int(d) for d in shape_s.split(","))
                count = int(np.prod(shape)) if shape else 1
                offset = int(offset_s)
                arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
                store.create(name, arr.reshape(shape).copy())
                if flag == "frozen":
                    store._frozen.add(name)
        return store


def glorot(rng, fan_in, fan_out, shape=None):
    """Uniform Glorot initialization; default shape (fan_in, fan_out)."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)
