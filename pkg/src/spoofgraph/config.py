"""Run configuration and the flat key=value config file format.

Lines are ``key=value``; blank lines and lines starting with # are skipped.
Values are coerced to the type of the field's default.
"""

from .data import SynthConfig

VARIANTS = ("full", "no_pseudo", "no_ode", "no_hetero")


class RunConfig:
    def __init__(self, seed=0, epochs=60, lr=1e-3, z_pseudo=0.6, z_decision=0.6,
                 solver="rk4", ode_steps=4, h_dim=64, max_len=32,
                 window_seconds=86400.0, price_band_frac=0.005, degree_cap=64,
                 c_wav=2, agg="concat", pre_hidden=64, spec_dim=64,
                 post_hidden=32, pretrain_epochs=150, pretrain_lr=5e-3,
                 d_l=64, q_dim=128, n_layers=2, slope=0.2, clf_hidden=64,
                 variant="full", train_frac=0.6, valid_frac=0.2, test_frac=0.2,
                 rolling_blocks=3, pseudo_weight=0.5, refresh_pseudo=True,
                 balance_loss=True, d_raw=49):
        self.seed = int(seed)
        self.epochs = int(epochs)
        self.lr = float(lr)
        self.z_pseudo = float(z_pseudo)
        self.z_decision = float(z_decision)
        self.solver = str(solver)
        self.ode_steps = int(ode_steps)
        self.h_dim = int(h_dim)
        self.max_len = int(max_len)
        self.window_seconds = float(window_seconds)
        self.price_band_frac = float(price_band_frac)
        self.degree_cap = int(degree_cap)
        self.c_wav = int(c_wav)
        self.agg = str(agg)
        self.pre_hidden = int(pre_hidden)
        self.spec_dim = int(spec_dim)
        self.post_hidden = int(post_hidden)
        self.pretrain_epochs = int(pretrain_epochs)
        self.pretrain_lr = float(pretrain_lr)
        self.d_l = int(d_l)
        self.q_dim = int(q_dim)
        self.n_layers = int(n_layers)
        self.slope = float(slope)
        self.clf_hidden = int(clf_hidden)
        self.variant = str(variant)
        self.train_frac = float(train_frac)
        self.valid_frac = float(valid_frac)
        self.test_frac = float(test_frac)
        self.rolling_blocks = int(rolling_blocks)
        self.pseudo_weight = float(pseudo_weight)
        self.refresh_pseudo = _to_bool(refresh_pseudo)
        self.balance_loss = _to_bool(balance_loss)
        self.d_raw = int(d_raw)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if abs(self.train_frac + self.valid_frac + self.test_frac - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        for name in ("z_pseudo", "z_decision"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in (0,1)")
        if self.solver not in ("euler", "rk4"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if self.epochs < 0 or self.pretrain_epochs < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.rolling_blocks < 2:
            raise ValueError("rolling_blocks must be >= 2")

    def replace(self, **kv):
        d = dict(self.__dict__)
        d.pop("_extra", None)
        d.update(kv)
        return RunConfig(**d)

    def to_text(self):
        return "".join(f"{k}={v}\n" for k, v in sorted(self.__dict__.items()))


def _to_bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes"):
        return True
    if str(v).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def parse_kv_file(path):
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path} line {lineno}: expected key=value")
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def run_config_from_file(path, overrides=None):
    kv = parse_kv_file(path)
    if overrides:
        kv.update(overrides)
    return run_config_from_dict(kv)


def run_config_from_dict(kv):
    known = set(RunConfig().__dict__)
    unknown = set(kv) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**kv)


def synth_config_from_file(path, overrides=None):
    kv = parse_kv_file(path)
    if overrides:
        kv.update(overrides)
    known = set(SynthConfig().__dict__)
    unknown = set(kv) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return SynthConfig(**kv)
