"""The coupled pair of translators and their training procedure.

Two generator/critic pairs are trained against each other on unpaired
data: gen_a maps domain U to V and is judged by critic_a (which scores
V-shaped images), gen_b maps V back to U and is judged by critic_b. The
critics learn an unbounded score whose gap between generated and real
samples approximates a Wasserstein objective (hence weight clipping and
no sigmoid); the generators jointly minimize L1 round-trip reconstruction
plus the negated critic scores of their own outputs.

A training iteration runs n_critic critic updates (one fresh batch per
update, both critics updated on it, then clipped) followed by a single
joint generator update on another fresh batch. Parameters use plain
RMSProp; generator parameters are never clipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Callable, Optional

import numpy as np

from . import engine
from .engine import Tensor, backward
from .errors import ConfigError, ShapeError
from .layers import init_weights
from .networks import PatchCritic, UNetGenerator, receptive_field, KERNEL
from .optim import RmsProp, clip_weights
from .rng import RngStream


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass
class TrainConfig:
    """Hyperparameters that fully determine the model and its training.

    Everything needed to rebuild the four networks from a checkpoint lives
    here; run-level concerns (data location, output paths, schedules) do
    not. Defaults follow the reference recipe: three critic updates per
    generator update, batches of one, clip bound 0.03, both reconstruction
    weights at 100.
    """

    image_size: int = 64
    channels_u: int = 3
    channels_v: int = 3
    gen_depth: int = 4
    base_width: int = 32
    disc_features: tuple = ((32, 2), (64, 2), (128, 1))
    dropout_rate: float = 0.5
    lambda_u: float = 100.0
    lambda_v: float = 100.0
    clip_c: float = 0.03
    n_critic: int = 3
    batch_m: int = 1
    lr: float = 5e-5
    rho: float = 0.9
    eps: float = 1e-8
    total_generator_steps: int = 2000
    seed: int = 0

    def __post_init__(self):
        self.disc_features = tuple((int(w), int(s)) for w, s in self.disc_features)

    def validate(self) -> None:
        def need(cond: bool, fieldname: str, msg: str) -> None:
            if not cond:
                raise ConfigError(fieldname, msg)

        ints = [
            ("image_size", self.image_size), ("channels_u", self.channels_u),
            ("channels_v", self.channels_v), ("gen_depth", self.gen_depth),
            ("base_width", self.base_width), ("n_critic", self.n_critic),
            ("batch_m", self.batch_m), ("total_generator_steps", self.total_generator_steps),
            ("seed", self.seed),
        ]
        for name, v in ints:
            need(isinstance(v, int) and not isinstance(v, bool), name, f"must be an int, got {v!r}")
        floats = [
            ("dropout_rate", self.dropout_rate), ("lambda_u", self.lambda_u),
            ("lambda_v", self.lambda_v), ("clip_c", self.clip_c), ("lr", self.lr),
            ("rho", self.rho), ("eps", self.eps),
        ]
        for name, v in floats:
            need(isinstance(v, (int, float)) and not isinstance(v, bool), name,
                 f"must be a number, got {v!r}")
            need(np.isfinite(v), name, f"must be finite, got {v!r}")

        need(_is_power_of_two(self.image_size), "image_size",
             f"must be a power of two, got {self.image_size}")
        need(self.channels_u >= 1, "channels_u", "must be at least 1")
        need(self.channels_v >= 1, "channels_v", "must be at least 1")
        need(self.gen_depth >= 2, "gen_depth", "must be at least 2")
        need(self.image_size >= (1 << self.gen_depth), "image_size",
             f"{self.image_size} is smaller than 2^gen_depth = {1 << self.gen_depth}")
        need(self.base_width >= 1, "base_width", "must be at least 1")
        need(0.0 <= self.dropout_rate < 1.0, "dropout_rate", "must lie in [0, 1)")
        need(self.lambda_u >= 0, "lambda_u", f"must be non-negative, got {self.lambda_u}")
        need(self.lambda_v >= 0, "lambda_v", f"must be non-negative, got {self.lambda_v}")
        need(self.clip_c > 0, "clip_c", f"must be positive, got {self.clip_c}")
        need(self.n_critic >= 1, "n_critic", "must be at least 1")
        need(self.batch_m >= 1, "batch_m", "must be at least 1")
        need(self.lr > 0, "lr", f"must be positive, got {self.lr}")
        need(0.0 <= self.rho < 1.0, "rho", "must lie in [0, 1)")
        need(self.eps > 0, "eps", f"must be positive, got {self.eps}")
        need(self.total_generator_steps >= 1, "total_generator_steps", "must be at least 1")
        need(self.seed >= 0, "seed", "must be non-negative")

        need(len(self.disc_features) >= 1, "disc_features", "needs at least one layer")
        for w, s in self.disc_features:
            need(w >= 1, "disc_features", f"width must be positive, got {w}")
            need(s in (1, 2), "disc_features", f"stride must be 1 or 2, got {s}")
        layers = [(KERNEL, s) for _, s in self.disc_features] + [(KERNEL, 1)]
        rf = receptive_field(layers)
        need(rf <= self.image_size, "disc_features",
             f"receptive field {rf} exceeds image_size {self.image_size}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["disc_features"] = [list(p) for p in self.disc_features]
        return d

    @classmethod
    def from_dict(cls, d: dict, ignore_extra: bool = False) -> "TrainConfig":
        names = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - names
        if unknown and not ignore_extra:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        kwargs = {k: v for k, v in d.items() if k in names}
        if "disc_features" in kwargs:
            v = kwargs["disc_features"]
            if not isinstance(v, (list, tuple)) or any(
                not isinstance(p, (list, tuple)) or len(p) != 2 for p in v
            ):
                raise ConfigError("disc_features", "must be a list of [width, stride] pairs")
            kwargs["disc_features"] = tuple((p[0], p[1]) for p in v)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


class TwinGanModel:
    """Both translators, both critics, and their optimizers.

    Construction allocates and initializes all four networks from the
    config seed; building the same config twice yields bit-identical
    parameters. Noise streams for the two generators are independent
    substreams of the same seed.
    """

    def __init__(self, cfg: TrainConfig, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        c = cfg
        self.gen_a = UNetGenerator(
            c.channels_u, c.channels_v, c.image_size, c.gen_depth, c.base_width,
            c.dropout_rate, dtype,
        )
        self.gen_b = UNetGenerator(
            c.channels_v, c.channels_u, c.image_size, c.gen_depth, c.base_width,
            c.dropout_rate, dtype,
        )
        self.disc_a = PatchCritic(c.channels_v, list(c.disc_features), dtype)
        self.disc_b = PatchCritic(c.channels_u, list(c.disc_features), dtype)

        root = RngStream(c.seed)
        init_weights(self.gen_a.params, root.substream("init.gen_a"))
        init_weights(self.gen_b.params, root.substream("init.gen_b"))
        init_weights(self.disc_a.params, root.substream("init.disc_a"))
        init_weights(self.disc_b.params, root.substream("init.disc_b"))
        self.rng_z = root.substream("noise.z")
        self.rng_zp = root.substream("noise.zp")

        self.opt_gen_a = RmsProp(self.gen_a.params, c.lr, c.rho, c.eps)
        self.opt_gen_b = RmsProp(self.gen_b.params, c.lr, c.rho, c.eps)
        self.opt_disc_a = RmsProp(self.disc_a.params, c.lr, c.rho, c.eps)
        self.opt_disc_b = RmsProp(self.disc_b.params, c.lr, c.rho, c.eps)

    # ordered mapping used by checkpointing
    def stores(self) -> dict:
        return {
            "gen_a": self.gen_a.params,
            "gen_b": self.gen_b.params,
            "disc_a": self.disc_a.params,
            "disc_b": self.disc_b.params,
        }

    def optimizers(self) -> dict:
        return {
            "gen_a": self.opt_gen_a,
            "gen_b": self.opt_gen_b,
            "disc_a": self.opt_disc_a,
            "disc_b": self.opt_disc_b,
        }

    def _as_batch(self, x, channels: int, what: str) -> Tensor:
        if isinstance(x, Tensor):
            t = x
        else:
            arr = np.asarray(x, dtype=self.dtype)
            t = Tensor(arr)
        if t.ndim != 4 or t.shape[1] != channels:
            raise ShapeError(f"{what} batch must be [m, {channels}, s, s], got {t.shape}")
        return t

    def translate_u2v(self, u, noise_enabled: bool = True, rng: Optional[RngStream] = None) -> Tensor:
        """Map a U batch to V. Draws from the training noise stream unless
        a private stream is supplied."""
        u = self._as_batch(u, self.cfg.channels_u, "U")
        return self.gen_a.forward(u, rng if rng is not None else self.rng_z, noise_enabled)

    def translate_v2u(self, v, noise_enabled: bool = True, rng: Optional[RngStream] = None) -> Tensor:
        v = self._as_batch(v, self.cfg.channels_v, "V")
        return self.gen_b.forward(v, rng if rng is not None else self.rng_zp, noise_enabled)

    def critic_step(self, u, v) -> dict:
        """One critic update on a shared batch: both critics step, then clip.

        Generator outputs are detached, so generator parameters are
        untouched; each critic loss is score(generated) - score(real).
        """
        u = self._as_batch(u, self.cfg.channels_u, "U")
        v = self._as_batch(v, self.cfg.channels_v, "V")
        fake_v = self.gen_a.forward(u, self.rng_z, True).detach()
        fake_u = self.gen_b.forward(v, self.rng_zp, True).detach()

        loss_a = engine.sub(self.disc_a.score(fake_v), self.disc_a.score(v))
        backward(loss_a)
        self.opt_disc_a.step()
        clip_weights(self.disc_a.params, self.cfg.clip_c)

        loss_b = engine.sub(self.disc_b.score(fake_u), self.disc_b.score(u))
        backward(loss_b)
        self.opt_disc_b.step()
        clip_weights(self.disc_b.params, self.cfg.clip_c)

        return {"l_d_a": loss_a.item(), "l_d_b": loss_b.item()}

    def generator_loss(self, u, v) -> tuple[Tensor, dict]:
        """Build the joint generator objective as a live graph.

        The same forward passes feed both the reconstruction and the
        adversarial terms:

            lambda_u * L1(u, gen_b(gen_a(u))) + lambda_v * L1(v, gen_a(gen_b(v)))
            - score_a(gen_a(u)) - score_b(gen_b(v))
        """
        u = self._as_batch(u, self.cfg.channels_u, "U")
        v = self._as_batch(v, self.cfg.channels_v, "V")
        fake_v = self.gen_a.forward(u, self.rng_z, True)
        recon_u = self.gen_b.forward(fake_v, self.rng_zp, True)
        fake_u = self.gen_b.forward(v, self.rng_zp, True)
        recon_v = self.gen_a.forward(fake_u, self.rng_z, True)

        r_u = engine.l1_mean(u, recon_u)
        r_v = engine.l1_mean(v, recon_v)
        adv_u = self.disc_a.score(fake_v)
        adv_v = self.disc_b.score(fake_u)

        recon_term = engine.add(engine.scale(r_u, self.cfg.lambda_u),
                                engine.scale(r_v, self.cfg.lambda_v))
        adv_term = engine.add(adv_u, adv_v)
        loss = engine.sub(recon_term, adv_term)
        diag = {
            "l_g": loss.item(),
            "recon_u": r_u.item(),
            "recon_v": r_v.item(),
            "adv_u": adv_u.item(),
            "adv_v": adv_v.item(),
        }
        return loss, diag

    def generator_step(self, u, v) -> dict:
        """One joint update of both generators; critics are left alone."""
        loss, diag = self.generator_loss(u, v)
        backward(loss)
        self.opt_gen_a.step()
        self.opt_gen_b.step()
        return diag


def train(
    model: TwinGanModel,
    dataset,
    *,
    on_critic_step: Optional[Callable[[int, int, TwinGanModel, dict], None]] = None,
    on_generator_step: Optional[Callable[[int, TwinGanModel, dict], None]] = None,
) -> list[dict]:
    """Run the full alternating schedule and return the loss history.

    dataset must provide sample_batch(m) -> (u_array, v_array). For every
    generator step the loop performs cfg.n_critic critic updates, each on
    a batch sampled once and shared by both critics, then one generator
    update on a fresh batch. History entries carry a global line index,
    the phase, and that phase's losses; callbacks fire after each update.
    """
    cfg = model.cfg
    history: list[dict] = []
    line = 0
    for step in range(1, cfg.total_generator_steps + 1):
        for t in range(cfg.n_critic):
            u, v = dataset.sample_batch(cfg.batch_m)
            diag = model.critic_step(u, v)
            line += 1
            history.append({"step": line, "phase": "critic", **diag})
            if on_critic_step is not None:
                on_critic_step(step, t, model, diag)
        u, v = dataset.sample_batch(cfg.batch_m)
        diag = model.generator_step(u, v)
        line += 1
        history.append({"step": line, "phase": "gen", **diag})
        if on_generator_step is not None:
            on_generator_step(step, model, diag)
    return history


_LOG_FIELDS = ("l_d_a", "l_d_b", "l_g", "recon_u", "recon_v")


def format_history_line(entry: dict) -> str:
    """One tab-separated log line; fields absent for the phase print as '-'."""
    cells = [str(entry["step"]), entry["phase"]]
    for name in _LOG_FIELDS:
        v = entry.get(name)
        cells.append("-" if v is None else f"{v:.6g}")
    return "\t".join(cells)
