"""Class unlearning by retraining only influential channels.

The trigger is a request to forget one class. Its influential channels are
fine-tuned on perturbation data (the class's own inputs relabeled to random
other classes) mixed with the remaining data, while every other parameter is
frozen. Two deployments:

* decentralized (DE): the federation runs unlearning rounds; only the
  influential channels travel in both directions;
* centralized (CE): the server fine-tunes alone on a small cached sample,
  with zero network traffic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, concat, iter_batches
from .errors import ConfigError, PlanError
from .explain import InfluentialSet
from .fedsim import Client, ClientUpdate, RoundTraffic, TrainConfig, aggregate, local_train
from .nn.model import Model
from .nn.ops import restrict_trainable, train_step
from .rng import derive_rng

SCHEMES = ("de", "ce")
SELECTIONS = ("important", "random", "nonimportant")


@dataclass(frozen=True)
class UnlearningRequest:
    class_index: int
    delta: float
    scheme: str = "de"
    selection: str = "important"
    epochs: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.selection not in SELECTIONS:
            raise ConfigError(
                f"selection must be one of {SELECTIONS}, got {self.selection!r}"
            )
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.delta <= 1:
            raise ConfigError(f"delta must be in (0, 1], got {self.delta}")


@dataclass
class UnlearnEpochRecord:
    epoch: int
    traffic: RoundTraffic
    mean_loss: float


@dataclass
class UnlearnOutcome:
    model: Model
    epoch_records: list[UnlearnEpochRecord] = field(default_factory=list)
    epoch_models: list[Model] = field(default_factory=list)

    @property
    def total_traffic_bytes(self) -> int:
        return sum(r.traffic.total_bytes for r in self.epoch_records)


def delete_class(dataset: LabeledDataset, class_index: int) -> LabeledDataset:
    """The remaining data: every sample whose label differs from class_index."""
    keep = np.flatnonzero(dataset.labels != class_index)
    return dataset.subset(keep)


def make_perturbation_set(
    dataset: LabeledDataset, class_index: int, seed: int, size: int | None = None
) -> LabeledDataset:
    """Unlearning-class inputs with labels redrawn uniformly from the other
    classes. Built once per request; every epoch reuses the same relabeling."""
    if dataset.class_count < 2:
        raise PlanError("perturbation needs at least two classes")
    source = dataset.of_class(class_index)
    rng = derive_rng(seed, "perturb", class_index)
    if size is not None and source.size > size:
        idx = rng.choice(source.size, size=size, replace=False)
        source = source.subset(np.sort(idx))
    others = np.array(
        [c for c in range(dataset.class_count) if c != class_index], dtype=np.int64
    )
    labels = others[rng.integers(0, len(others), size=source.size)]
    return LabeledDataset(source.images, labels, dataset.class_count)


def client_unlearning_data(
    client: Client, request: UnlearningRequest
) -> tuple[LabeledDataset | None, LabeledDataset | None]:
    """(remaining, perturbation) for one client; either may be None if empty."""
    remaining = delete_class(client.data, request.class_index)
    if remaining.size == 0:
        remaining = None
    if (client.data.labels == request.class_index).any():
        pert = make_perturbation_set(
            client.data, request.class_index, derive_seed_for(request, client.client_id)
        )
    else:
        pert = None
    return remaining, pert


def derive_seed_for(request: UnlearningRequest, client_id: int) -> int:
    from .rng import derive_seed

    return derive_seed(request.seed, "unlearn-client", client_id)


def decentralized_unlearn(
    model: Model,
    clients: list[Client],
    influential: InfluentialSet,
    request: UnlearningRequest,
    config: TrainConfig,
    progress: callable = None,
) -> UnlearnOutcome:
    """Unlearning rounds over the federation, moving only the influential set.

    Per epoch: broadcast the influential channels, each client fine-tunes them
    on its remaining-plus-perturbation data with everything else frozen, and
    the server averages the returned channel deltas.
    """
    from .wire import channel_payload_nbytes

    channels = list(influential.channels)
    per_client: list[tuple[Client, LabeledDataset | None]] = []
    for client in clients:
        remaining, pert = client_unlearning_data(client, request)
        if remaining is None and pert is None:
            continue
        base = remaining if remaining is not None else pert
        extra = pert if remaining is not None else None
        per_client.append((Client(client.client_id, base), extra))
    if not per_client:
        raise PlanError(f"no client holds any data relevant to class {request.class_index}")
    outcome = UnlearnOutcome(model=model)
    payload = channel_payload_nbytes(model, channels)
    for epoch in range(request.epochs):
        traffic = RoundTraffic(downlink_bytes=payload * len(per_client))
        updates: list[ClientUpdate] = []
        for client, extra in per_client:
            update = local_train(
                outcome.model, client, config, request.seed,
                round_index=epoch, channels=channels, extra_data=extra,
            )
            traffic.uplink_bytes += update.byte_size
            updates.append(update)
        new_model = aggregate(outcome.model, updates)
        outcome.model = new_model
        outcome.epoch_models.append(new_model)
        outcome.epoch_records.append(
            UnlearnEpochRecord(
                epoch=epoch,
                traffic=traffic,
                mean_loss=float(np.mean([u.mean_loss for u in updates])),
            )
        )
        if progress is not None:
            progress(outcome)
    return outcome


@dataclass(frozen=True)
class CentralizedConfig:
    cache_size: int = 1600
    learning_rate: float = 0.01
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.cache_size < 2:
            raise ConfigError(f"cache_size must be >= 2, got {self.cache_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


def build_server_cache(
    dataset: LabeledDataset, request: UnlearningRequest, config: CentralizedConfig
) -> LabeledDataset:
    """The server's cached sample: perturbation data for the unlearning class
    plus a proportional draw of remaining data, cache_size samples total."""
    histogram = dataset.histogram()
    share = histogram / histogram.sum()
    pert_budget = max(1, int(round(config.cache_size * share[request.class_index])))
    pert = make_perturbation_set(
        dataset, request.class_index, derive_seed_for(request, -1), size=pert_budget
    )
    remaining = delete_class(dataset, request.class_index)
    rest_budget = min(config.cache_size - pert.size, remaining.size)
    if rest_budget <= 0:
        return pert
    rng = derive_rng(request.seed, "server-cache", request.class_index)
    idx = rng.choice(remaining.size, size=rest_budget, replace=False)
    return concat([pert, remaining.subset(np.sort(idx))])


def centralized_unlearn(
    model: Model,
    cache: LabeledDataset,
    influential: InfluentialSet,
    request: UnlearningRequest,
    config: CentralizedConfig | None = None,
    progress: callable = None,
) -> UnlearnOutcome:
    """Server-side fine-tuning of the influential channels on the cache.

    No messages leave the server, so every epoch's traffic is zero bytes.
    """
    config = config or CentralizedConfig()
    restricted = restrict_trainable(model, list(influential.channels))
    outcome = UnlearnOutcome(model=model)
    for epoch in range(request.epochs):
        rng = derive_rng(request.seed, "ce", epoch)
        losses = []
        for x, y in iter_batches(cache, config.batch_size, rng):
            restricted, loss = train_step(restricted, x, y, config.learning_rate)
            losses.append(loss)
        merged = Model(
            restricted.layers, model.channel_mask, model.trainable_mask, model.input_shape
        )
        outcome.model = merged
        outcome.epoch_models.append(merged)
        outcome.epoch_records.append(
            UnlearnEpochRecord(
                epoch=epoch, traffic=RoundTraffic(), mean_loss=float(np.mean(losses))
            )
        )
        if progress is not None:
            progress(outcome)
    return outcome
