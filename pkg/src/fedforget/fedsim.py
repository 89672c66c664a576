"""Deterministic federated training simulator.

Clients hold disjoint shards of the training set. Each global round the
server broadcasts the model, every participating client runs local SGD, and
the server averages the returned updates. All messages pass through the wire
encoders so byte counts reflect what actually moved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, iter_batches
from .errors import AggregationError, ConfigError, PartitionError
from .nn.model import ChannelId, Model
from .nn.ops import (
    add_scaled_params,
    get_params,
    restrict_trainable,
    train_step,
)
from .rng import derive_rng
from .wire import encode_channel_payload, encode_model_payload


@dataclass(frozen=True)
class Client:
    client_id: int
    data: LabeledDataset


@dataclass(frozen=True)
class TrainConfig:
    global_rounds: int = 50
    local_epochs: int = 5
    batch_size: int = 128
    learning_rate: float = 0.1
    participation: float = 1.0
    lr_decay: float = 1.0

    def __post_init__(self) -> None:
        if self.global_rounds < 1:
            raise ConfigError(f"global_rounds must be >= 1, got {self.global_rounds}")
        if self.local_epochs < 1:
            raise ConfigError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0 < self.participation <= 1:
            raise ConfigError(f"participation must be in (0, 1], got {self.participation}")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must be in (0, 1], got {self.lr_decay}")

    def round_lr(self, round_index: int) -> float:
        """Learning rate for one global round; decays multiplicatively."""
        return self.learning_rate * self.lr_decay**round_index


@dataclass(frozen=True)
class ClientUpdate:
    """One client's upload: parameter deltas plus the bytes they cost on the wire.

    ``channels`` limits the delta to an influential set; None means the full
    model moved. ``byte_size`` is the length of the encoded payload.
    """

    client_id: int
    delta: dict[int, tuple[np.ndarray, np.ndarray]]
    sample_count: int
    mean_loss: float
    byte_size: int
    channels: tuple[ChannelId, ...] | None = None


@dataclass
class RoundTraffic:
    downlink_bytes: int = 0
    uplink_bytes: int = 0

    @property
    def total_bytes(self) -> int:
        return self.downlink_bytes + self.uplink_bytes


@dataclass
class RoundRecord:
    round_index: int
    participant_ids: tuple[int, ...]
    mean_client_loss: float
    traffic: RoundTraffic


@dataclass
class FederationState:
    model: Model
    clients: tuple[Client, ...]
    config: TrainConfig
    seed: int
    round_index: int = 0
    history: list[RoundRecord] = field(default_factory=list)

    @property
    def total_traffic_bytes(self) -> int:
        return sum(r.traffic.total_bytes for r in self.history)


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------

def partition_iid(dataset: LabeledDataset, client_count: int, seed: int) -> list[Client]:
    """Shuffle, deal round-robin sized contiguous slices; shard label
    histograms stay within one sample of proportional."""
    if client_count < 1:
        raise PartitionError(f"client_count must be >= 1, got {client_count}")
    if dataset.size < client_count:
        raise PartitionError(
            f"cannot split {dataset.size} samples across {client_count} clients"
        )
    rng = derive_rng(seed, "partition", "iid")
    clients: list[Client] = []
    order_by_class = []
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.labels == c)
        rng.shuffle(idx)
        order_by_class.append(idx)
    shard_indices: list[list[np.ndarray]] = [[] for _ in range(client_count)]
    for idx in order_by_class:
        bounds = np.linspace(0, len(idx), client_count + 1).round().astype(int)
        start_shard = int(rng.integers(client_count))
        for k in range(client_count):
            shard = (start_shard + k) % client_count
            shard_indices[shard].append(idx[bounds[k]:bounds[k + 1]])
    for cid in range(client_count):
        idx = np.concatenate(shard_indices[cid])
        rng.shuffle(idx)
        clients.append(Client(cid, dataset.subset(idx)))
    return clients


def partition_per_class(dataset: LabeledDataset, seed: int) -> list[Client]:
    """One client per class: the fully non-IID split."""
    rng = derive_rng(seed, "partition", "per-class")
    clients = []
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.labels == c)
        if idx.size == 0:
            raise PartitionError(f"class {c} has no samples to assign")
        rng.shuffle(idx)
        clients.append(Client(c, dataset.subset(idx)))
    return clients


def select_participants(
    clients: tuple[Client, ...], fraction: float, seed: int, round_index: int
) -> tuple[Client, ...]:
    if fraction >= 1.0:
        return clients
    count = max(1, int(round(fraction * len(clients))))
    rng = derive_rng(seed, "participation", round_index)
    picked = sorted(rng.choice(len(clients), size=count, replace=False).tolist())
    return tuple(clients[i] for i in picked)


# ---------------------------------------------------------------------------
# Local training and aggregation
# ---------------------------------------------------------------------------

def local_train(
    model: Model,
    client: Client,
    config: TrainConfig,
    seed: int,
    round_index: int,
    channels: list[ChannelId] | None = None,
    extra_data: LabeledDataset | None = None,
) -> ClientUpdate:
    """Run local epochs of SGD and package the delta for upload.

    With ``channels`` set, layers outside the set are frozen and only those
    channels' rows are encoded in the upload. ``extra_data`` is concatenated
    into the local set (used for perturbation batches during unlearning).
    """
    from .data import concat

    data = client.data if extra_data is None else concat([client.data, extra_data])
    local = model if channels is None else restrict_trainable(model, channels)
    lr = config.round_lr(round_index)
    losses: list[float] = []
    for epoch in range(config.local_epochs):
        rng = derive_rng(seed, "local", round_index, client.client_id, epoch)
        for x, y in iter_batches(data, config.batch_size, rng):
            local, loss = train_step(local, x, y, lr)
            losses.append(loss)
    before = get_params(model)
    after = get_params(local)
    delta = {
        i: (
            after[i][0].astype(np.float64) - before[i][0].astype(np.float64),
            after[i][1].astype(np.float64) - before[i][1].astype(np.float64),
        )
        for i in before
    }
    if channels is None:
        byte_size = len(encode_model_payload(local))
    else:
        byte_size = len(encode_channel_payload(local, channels))
    return ClientUpdate(
        client_id=client.client_id,
        delta=delta,
        sample_count=data.size,
        mean_loss=float(np.mean(losses)) if losses else float("nan"),
        byte_size=byte_size,
        channels=None if channels is None else tuple(sorted(channels)),
    )


def aggregate(model: Model, updates: list[ClientUpdate]) -> Model:
    """Average the deltas and apply them to the global model.

    Every participant carries weight 1/n regardless of shard size, matching a
    federation of equal stakeholders.
    """
    if not updates:
        raise AggregationError("no client updates to aggregate")
    n = len(updates)
    keys = set(updates[0].delta.keys())
    for u in updates[1:]:
        if set(u.delta.keys()) != keys:
            raise AggregationError("client updates cover different layers")
    mean_delta = {}
    for i in keys:
        dw = np.mean([u.delta[i][0] for u in updates], axis=0)
        db = np.mean([u.delta[i][1] for u in updates], axis=0)
        mean_delta[i] = (dw, db)
    return add_scaled_params(model, mean_delta, 1.0)


def run_round(state: FederationState, channels: list[ChannelId] | None = None) -> FederationState:
    participants = select_participants(
        state.clients, state.config.participation, state.seed, state.round_index
    )
    if channels is None:
        downlink_per_client = len(encode_model_payload(state.model))
    else:
        downlink_per_client = len(encode_channel_payload(state.model, channels))
    traffic = RoundTraffic(downlink_bytes=downlink_per_client * len(participants))
    updates = []
    for client in participants:
        update = local_train(
            state.model, client, state.config, state.seed, state.round_index, channels
        )
        traffic.uplink_bytes += update.byte_size
        updates.append(update)
    new_model = aggregate(state.model, updates)
    record = RoundRecord(
        round_index=state.round_index,
        participant_ids=tuple(c.client_id for c in participants),
        mean_client_loss=float(np.mean([u.mean_loss for u in updates])),
        traffic=traffic,
    )
    return FederationState(
        model=new_model,
        clients=state.clients,
        config=state.config,
        seed=state.seed,
        round_index=state.round_index + 1,
        history=state.history + [record],
    )


def train_global(
    model: Model,
    clients: list[Client],
    config: TrainConfig,
    seed: int,
    progress: callable = None,
) -> FederationState:
    state = FederationState(model, tuple(clients), config, seed)
    for _ in range(config.global_rounds):
        state = run_round(state)
        if progress is not None:
            progress(state)
    return state
