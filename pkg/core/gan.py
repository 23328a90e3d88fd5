#!/usr/bin/env python3

import copy
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax

from core.alert_model import as_processed, decode_batch
from core.errors import EmptyDatasetError, NumericsError, ShapeError
from core.models import EncodedDataset, FeatureSpace, GanConfig, ProcessedAlert
from core.numerics import (
    AdamState,
    GradientSet,
    MlpCache,
    MlpParams,
    adam_step,
    clip_combine,
    grad_penalty_param_grads,
    mlp_backward,
    mlp_forward,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class GeneratorModel:
    """Noise -> four softmax heads, one per feature segment."""
    params: MlpParams
    feature_space: FeatureSpace

    def __post_init__(self):
        if self.params.head_dims != self.feature_space.sizes:
            raise ShapeError(
                f"Generator heads {self.params.head_dims} do not match vocabulary sizes {self.feature_space.sizes}"
            )

    @classmethod
    def initialize(cls, fs: FeatureSpace, config: GanConfig, rng: np.random.Generator) -> "GeneratorModel":
        return cls(MlpParams.initialize(rng, config.noise_dim, config.hidden_dim, fs.sizes), fs)

    @property
    def noise_dim(self) -> int:
        return self.params.input_dim


@dataclass(frozen=True)
class DiscriminatorModel:
    """Critic over concatenated one-hot (or soft) rows; unbounded scalar output."""
    params: MlpParams

    def __post_init__(self):
        if self.params.head_dims != (1,):
            raise ShapeError(f"Critic must have one scalar head, got {self.params.head_dims}")

    @classmethod
    def initialize(cls, width: int, config: GanConfig, rng: np.random.Generator) -> "DiscriminatorModel":
        return cls(MlpParams.initialize(rng, width, config.hidden_dim, (1,)))


@dataclass(frozen=True)
class MiEstimatorModel:
    """
    Statistics network T(z, x) = w . relu(Wz z + Wg x + b) + c.

    Stored as a single-head MLP over [z, x]; Wz and Wg are the column blocks
    of its first layer.
    """
    params: MlpParams
    noise_dim: int

    def __post_init__(self):
        if self.params.head_dims != (1,):
            raise ShapeError(f"MI estimator must have one scalar head, got {self.params.head_dims}")
        if not 0 < self.noise_dim < self.params.input_dim:
            raise ShapeError(f"noise_dim {self.noise_dim} does not split input width {self.params.input_dim}")

    @classmethod
    def initialize(cls, width: int, config: GanConfig, rng: np.random.Generator) -> "MiEstimatorModel":
        params = MlpParams.initialize(rng, config.noise_dim + width, config.hidden_dim, (1,))
        return cls(params, config.noise_dim)

    @property
    def Wz(self) -> np.ndarray:
        return self.params.W1[:, :self.noise_dim]

    @property
    def Wg(self) -> np.ndarray:
        return self.params.W1[:, self.noise_dim:]

    def statistic(self, z: np.ndarray, x: np.ndarray) -> np.ndarray:
        outputs, _ = mlp_forward(self.params, np.hstack([np.atleast_2d(z), np.atleast_2d(x)]))
        return outputs[0][:, 0]


@dataclass
class OptimizerStates:
    generator: AdamState
    discriminator: AdamState
    estimator: Optional[AdamState] = None

    @classmethod
    def create(cls, G: GeneratorModel, D: DiscriminatorModel, T: Optional[MiEstimatorModel],
               config: GanConfig) -> "OptimizerStates":
        def fresh(params: MlpParams) -> AdamState:
            return AdamState.for_params(params, config.lr, config.beta1, config.beta2, config.epsilon)

        return cls(fresh(G.params), fresh(D.params), fresh(T.params) if T is not None else None)


@dataclass(frozen=True)
class ModelCheckpoint:
    config: GanConfig
    feature_space: FeatureSpace
    generator: GeneratorModel
    discriminator: DiscriminatorModel
    estimator: Optional[MiEstimatorModel]
    epoch: int
    rng_state: Dict
    format_version: int = CHECKPOINT_FORMAT_VERSION


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    wasserstein_estimate: float
    gp_term: float
    mi_estimate: Optional[float]
    g_loss: float


@dataclass
class TrainingHistory:
    epochs: List[EpochRecord] = field(default_factory=list)
    critic_updates: int = 0
    generator_updates: int = 0
    # (||g_a||, ||g - g_a||) per WGAN-GPMI generator step
    clip_records: List[Tuple[float, float]] = field(default_factory=list)
    zero_norm_penalty_samples: int = 0


@dataclass(frozen=True)
class TrainingResult:
    checkpoint: ModelCheckpoint
    history: TrainingHistory


def _generator_forward(G: GeneratorModel, z: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray], MlpCache]:
    logits, cache = mlp_forward(G.params, z)
    probs = [softmax(head, axis=1) for head in logits]
    return np.concatenate(probs, axis=1), probs, cache


def _generator_backward(
        G: GeneratorModel,
        cache: MlpCache,
        probs: Sequence[np.ndarray],
        grad_soft: np.ndarray,
) -> GradientSet:
    # softmax Jacobian-vector product per head: y * (dy - <dy, y>)
    fs = G.feature_space
    grad_logits = []
    for k, y in enumerate(probs):
        dy = grad_soft[:, fs.segment(k)]
        grad_logits.append(y * (dy - np.sum(dy * y, axis=1, keepdims=True)))
    grads, _ = mlp_backward(G.params, cache, grad_logits)
    return grads


def generate_batch(G: GeneratorModel, rng: np.random.Generator, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draws n standard-normal noise rows and maps them through the generator.

    Args:
        G: Generator
        rng: Random source
        n: Batch size

    Returns:
        (soft batch of shape (n, width), noise batch of shape (n, noise_dim))
    """
    if n < 1:
        raise ValueError("generate_batch needs n >= 1")
    z = rng.standard_normal((n, G.noise_dim))
    soft, _, _ = _generator_forward(G, z)
    return soft, z


@dataclass(frozen=True)
class DiscriminatorLoss:
    loss: float
    objective: float
    wasserstein_estimate: float
    gp_term: float
    grads: GradientSet
    zero_norm_count: int


def discriminator_loss(
        D: DiscriminatorModel,
        real: np.ndarray,
        fake: np.ndarray,
        lambda_gp: float,
        rng: np.random.Generator,
        gp_point: str = "interpolate",
) -> DiscriminatorLoss:
    """
    Critic loss with gradient penalty.

    loss is mean D(real) - mean D(fake) + gp_term. The gradients are those of
    the descent objective -(mean D(real) - mean D(fake)) + gp_term, reported as
    objective.

    Args:
        D: Critic
        real: One-hot real batch
        fake: Soft generated batch of the same shape
        lambda_gp: Penalty weight
        rng: Draws the interpolation weights
        gp_point: "interpolate" (eps * real + (1 - eps) * fake) or "noise" (the fake batch)

    Returns:
        DiscriminatorLoss
    """
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape or real.ndim != 2:
        raise ShapeError(f"Real batch {real.shape} and fake batch {fake.shape} must have equal 2-D shapes")
    n = real.shape[0]

    real_out, real_cache = mlp_forward(D.params, real)
    fake_out, fake_cache = mlp_forward(D.params, fake)
    wasserstein = float(np.mean(real_out[0]) - np.mean(fake_out[0]))
    grads_real, _ = mlp_backward(D.params, real_cache, [np.full((n, 1), -1.0 / n)])
    grads_fake, _ = mlp_backward(D.params, fake_cache, [np.full((n, 1), 1.0 / n)])

    if gp_point == "interpolate":
        eps = rng.uniform(0.0, 1.0, size=(n, 1))
        x_hat = eps * real + (1.0 - eps) * fake
    elif gp_point == "noise":
        x_hat = fake
    else:
        raise ValueError(f"Unknown gradient-penalty point {gp_point!r}")
    penalty = grad_penalty_param_grads(D.params, x_hat, lambda_gp)

    result = DiscriminatorLoss(
        loss=wasserstein + penalty.value,
        objective=-wasserstein + penalty.value,
        wasserstein_estimate=wasserstein,
        gp_term=penalty.value,
        grads=grads_real + grads_fake + penalty.grads,
        zero_norm_count=penalty.zero_norm_count,
    )
    if not math.isfinite(result.loss):
        raise NumericsError(f"Non-finite critic loss (W={wasserstein}, gp={penalty.value})")
    return result


@dataclass(frozen=True)
class MiEstimate:
    value: float
    grads: GradientSet
    input_grads: np.ndarray


def mi_estimate(
        T: MiEstimatorModel,
        z: np.ndarray,
        fake: np.ndarray,
        rng: np.random.Generator,
) -> MiEstimate:
    """
    Donsker-Varadhan lower bound on I(z; G(z)).

    Joint pairs are (z_i, x_i); marginal pairs are (z_i, x_sigma(i)) for a
    uniform random permutation sigma. MI = mean T(joint) - log mean exp T(marginal),
    the second term computed with log-sum-exp.

    Args:
        T: Statistics network
        z: Noise batch that produced fake
        fake: Soft generated batch
        rng: Draws the permutation

    Returns:
        MiEstimate with the bound, its gradient for T, and its gradient for every fake row
    """
    z = np.asarray(z, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if z.ndim != 2 or fake.ndim != 2 or z.shape[0] != fake.shape[0]:
        raise ShapeError(f"Noise batch {z.shape} and fake batch {fake.shape} are not paired")
    n = z.shape[0]

    sigma = rng.permutation(n)
    joint_out, joint_cache = mlp_forward(T.params, np.hstack([z, fake]))
    marginal_out, marginal_cache = mlp_forward(T.params, np.hstack([z, fake[sigma]]))
    t_joint = joint_out[0][:, 0]
    t_marginal = marginal_out[0][:, 0]

    value = float(np.mean(t_joint) - (logsumexp(t_marginal) - math.log(n)))
    if not math.isfinite(value):
        raise NumericsError("Non-finite mutual-information estimate")

    weights = softmax(t_marginal)
    grads_joint, dx_joint = mlp_backward(T.params, joint_cache, [np.full((n, 1), 1.0 / n)])
    grads_marginal, dx_marginal = mlp_backward(T.params, marginal_cache, [-weights[:, None]])

    input_grads = dx_joint[:, T.noise_dim:].copy()
    # marginal row i read fake row sigma(i)
    np.add.at(input_grads, sigma, dx_marginal[:, T.noise_dim:])
    return MiEstimate(value=value, grads=grads_joint + grads_marginal, input_grads=input_grads)


@dataclass(frozen=True)
class GeneratorStep:
    generator: GeneratorModel
    estimator: Optional[MiEstimatorModel]
    states: OptimizerStates
    g_loss: float
    mi_estimate: Optional[float]
    adversarial_norm: float
    mi_part_norm: float


def generator_step(
        G: GeneratorModel,
        D: DiscriminatorModel,
        T: Optional[MiEstimatorModel],
        config: GanConfig,
        rng: np.random.Generator,
        states: OptimizerStates,
) -> GeneratorStep:
    """
    One generator update, plus one estimator ascent step for WGAN-GPMI.

    The generator minimises -mean D(G(z)), and for WGAN-GPMI also -MI, with the
    MI gradient clipped to the adversarial gradient's norm before they are added.

    Args:
        G: Generator
        D: Critic (not updated)
        T: MI estimator, required for wgan_gpmi
        config: Hyperparameters
        rng: Random source
        states: ADAM states; a new OptimizerStates is returned

    Returns:
        GeneratorStep with the updated models and step diagnostics
    """
    if config.variant == "wgan_gpmi" and (T is None or states.estimator is None):
        raise ShapeError("wgan_gpmi needs an MI estimator and its optimizer state")

    n = config.batch_size
    z = rng.standard_normal((n, G.noise_dim))
    soft, probs, cache = _generator_forward(G, z)
    d_out, d_cache = mlp_forward(D.params, soft)
    adversarial_loss = -float(np.mean(d_out[0]))
    _, d_input = mlp_backward(D.params, d_cache, [np.full((n, 1), -1.0 / n)])
    g_a = _generator_backward(G, cache, probs, d_input)

    new_states = replace(states)
    mi_value = None
    g_loss = adversarial_loss
    g = g_a
    if config.variant == "wgan_gpmi":
        estimate = mi_estimate(T, z, soft, rng)
        g_m = _generator_backward(G, cache, probs, -estimate.input_grads)
        T_params, new_states.estimator = adam_step(T.params, estimate.grads.scaled(-1.0), states.estimator)
        T = replace(T, params=T_params)
        g = clip_combine(g_a, g_m)
        mi_value = estimate.value
        g_loss = adversarial_loss - estimate.value

    G_params, new_states.generator = adam_step(G.params, g, states.generator)
    return GeneratorStep(
        generator=replace(G, params=G_params),
        estimator=T,
        states=new_states,
        g_loss=g_loss,
        mi_estimate=mi_value,
        adversarial_norm=g_a.norm(),
        mi_part_norm=(g - g_a).norm(),
    )


def _snapshot(config: GanConfig, G: GeneratorModel, D: DiscriminatorModel, T: Optional[MiEstimatorModel],
              epoch: int, rng: np.random.Generator) -> ModelCheckpoint:
    return ModelCheckpoint(
        config=config,
        feature_space=G.feature_space,
        generator=G,
        discriminator=D,
        estimator=T,
        epoch=epoch,
        rng_state=copy.deepcopy(rng.bit_generator.state),
    )


def train(
        dataset: EncodedDataset,
        config: GanConfig,
        on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainingResult:
    """
    Trains WGAN-GP or WGAN-GPMI on one target's encoded alerts.

    Every epoch runs ceil(n / batch_size) generator updates, each preceded by
    critic_ratio critic updates on fresh real and fake batches. Real batches are
    drawn with replacement only when batch_size exceeds n.

    Args:
        dataset: Encoded alerts of one target
        config: Hyperparameters, including the seed
        on_epoch: Called with every finished epoch record

    Returns:
        TrainingResult with the final checkpoint and the training history
    """
    if len(dataset) == 0:
        raise EmptyDatasetError("Cannot train on an empty dataset")

    rng = np.random.default_rng(config.seed)
    fs = dataset.feature_space
    G = GeneratorModel.initialize(fs, config, rng)
    D = DiscriminatorModel.initialize(fs.width, config, rng)
    T = MiEstimatorModel.initialize(fs.width, config, rng) if config.variant == "wgan_gpmi" else None
    states = OptimizerStates.create(G, D, T, config)

    n = len(dataset)
    batch = config.batch_size
    with_replacement = batch > n
    updates_per_epoch = math.ceil(n / batch)
    history = TrainingHistory()
    last_good = _snapshot(config, G, D, T, 0, rng)

    logger.info(
        f"Training {config.variant} on {n} alerts of {fs.target_ip}: {config.epochs} epochs, "
        f"{updates_per_epoch} generator updates per epoch, lambda={config.lambda_gp}"
    )

    for epoch in range(1, config.epochs + 1):
        wasserstein, gp, mi, g_loss = [], [], [], []
        try:
            for _ in range(updates_per_epoch):
                for _ in range(config.critic_ratio):
                    real = dataset.rows[rng.choice(n, size=batch, replace=with_replacement)]
                    fake, _ = generate_batch(G, rng, batch)
                    loss = discriminator_loss(D, real, fake, config.lambda_gp, rng, config.gp_point)
                    D_params, states.discriminator = adam_step(D.params, loss.grads, states.discriminator)
                    D = replace(D, params=D_params)
                    history.critic_updates += 1
                    wasserstein.append(loss.wasserstein_estimate)
                    gp.append(loss.gp_term)
                    if loss.zero_norm_count:
                        history.zero_norm_penalty_samples += loss.zero_norm_count
                        logger.warning(f"{loss.zero_norm_count} penalty sample(s) with zero input gradient")

                step = generator_step(G, D, T, config, rng, states)
                G, T, states = step.generator, step.estimator, step.states
                history.generator_updates += 1
                g_loss.append(step.g_loss)
                if step.mi_estimate is not None:
                    mi.append(step.mi_estimate)
                    history.clip_records.append((step.adversarial_norm, step.mi_part_norm))
        except NumericsError as e:
            logger.error(f"Training diverged in epoch {epoch}; last good checkpoint is epoch {last_good.epoch}")
            raise NumericsError(str(e), checkpoint=last_good) from e

        record = EpochRecord(
            epoch=epoch,
            wasserstein_estimate=float(np.mean(wasserstein)),
            gp_term=float(np.mean(gp)),
            mi_estimate=float(np.mean(mi)) if mi else None,
            g_loss=float(np.mean(g_loss)),
        )
        history.epochs.append(record)
        logger.info(
            f"epoch {epoch}/{config.epochs} W={record.wasserstein_estimate:.5f} gp={record.gp_term:.5f} "
            f"mi={'-' if record.mi_estimate is None else f'{record.mi_estimate:.5f}'} g_loss={record.g_loss:.5f}"
        )
        if on_epoch is not None:
            on_epoch(record)
        last_good = _snapshot(config, G, D, T, epoch, rng)

    return TrainingResult(checkpoint=last_good, history=history)


def sample_array(G: GeneratorModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """n decoded samples as an (n, 4) index array."""
    soft, _ = generate_batch(G, rng, n)
    return decode_batch(soft, G.feature_space)


def sample_alerts(checkpoint: ModelCheckpoint, n: int, seed: int) -> List[ProcessedAlert]:
    """
    Draws n alerts from a trained generator.

    Args:
        checkpoint: Trained models
        n: Number of alerts
        seed: Seed of a fresh random generator, so equal seeds give equal samples

    Returns:
        ProcessedAlerts indexed against checkpoint.feature_space
    """
    return as_processed(sample_array(checkpoint.generator, n, np.random.default_rng(seed)))
