"""Factorization-machine scorer trained with BCE on soft labels."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset
from .errors import NonFiniteLoss

CHECKPOINT_VERSION = 1
UNKNOWN = "<unk>"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 512
    epochs: int = 10
    embedding_dim: int = 10
    patience: int = 2  # eval rounds without val-GAUC improvement before stop
    seed: int = 0
    # reserved for deep backbones; unused by the FM
    hidden_units: int = 64
    dropout: float = 0.2

    def validate(self) -> None:
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("learning rate, batch size and epochs must be positive")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")


class Vocabulary:
    """Token index over (field, value) pairs with one unknown token per field."""

    def __init__(self, fields, token_to_idx):
        self.fields = tuple(fields)
        self.token_to_idx = dict(token_to_idx)

    def __len__(self):
        return len(self.token_to_idx)

    def index(self, fld, value) -> int:
        return self.token_to_idx.get((fld, value), self.token_to_idx[(fld, UNKNOWN)])

    @staticmethod
    def row_tokens(interaction):
        yield ("user_id", interaction.user_id)
        yield ("item_id", interaction.item_id)
        yield from interaction.features


def build_vocab(train: Dataset) -> Vocabulary:
    """One token per (field, value) seen in training plus per-field unknowns."""
    if len(train) == 0:
        raise ValueError("cannot build a vocabulary from an empty dataset")
    fields = []
    tokens = {}
    for r in train:
        for fld, value in Vocabulary.row_tokens(r):
            if fld not in tokens:
                fields.append(fld)
                tokens[fld] = {}
            if value not in tokens[fld]:
                tokens[fld][value] = None
    token_to_idx = {}
    for fld in fields:
        for value in tokens[fld]:
            token_to_idx[(fld, value)] = len(token_to_idx)
        token_to_idx[(fld, UNKNOWN)] = len(token_to_idx)
    return Vocabulary(fields, token_to_idx)


def encode(vocab: Vocabulary, dataset: Dataset) -> np.ndarray:
    """Token index matrix, one row per interaction, one column per field."""
    n_fields = len(vocab.fields)
    out = np.empty((len(dataset), n_fields), dtype=np.int64)
    for i, r in enumerate(dataset):
        row = dict(Vocabulary.row_tokens(r))
        for j, fld in enumerate(vocab.fields):
            out[i, j] = vocab.index(fld, row.get(fld, UNKNOWN))
    return out


class FMModel:
    """Second-order factorization machine over one-hot categorical fields."""

    def __init__(self, vocab: Vocabulary, k: int, seed: int = 0):
        self.vocab = vocab
        self.k = k
        rng = np.random.default_rng(seed)
        n = len(vocab)
        self.bias = 0.0
        self.linear = np.zeros(n)
        self.embeddings = rng.normal(0.0, 0.01, (n, k))

    def score(self, idx: np.ndarray) -> np.ndarray:
        """Logits for a token-index matrix via the sum-of-squares identity."""
        V = self.embeddings[idx]  # (n, m, k)
        s = V.sum(axis=1)
        pair = 0.5 * ((s ** 2).sum(axis=1) - (V ** 2).sum(axis=(1, 2)))
        return self.bias + self.linear[idx].sum(axis=1) + pair

    def score_interactions(self, dataset: Dataset) -> np.ndarray:
        return self.score(encode(self.vocab, dataset))

    def params(self):
        return self.bias, self.linear.copy(), self.embeddings.copy()

    def set_params(self, p):
        self.bias, linear, emb = p
        self.linear = linear.copy()
        self.embeddings = emb.copy()

    def save(self, path) -> None:
        payload = {
            "version": CHECKPOINT_VERSION,
            "k": self.k,
            "fields": list(self.vocab.fields),
            "tokens": [[fld, val] for (fld, val) in self.vocab.token_to_idx],
            "bias": self.bias,
            "linear": self.linear.tolist(),
            "embeddings": self.embeddings.tolist(),
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f)

    @classmethod
    def load(cls, path) -> "FMModel":
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        vocab = Vocabulary(
            payload["fields"],
            {(fld, val): i for i, (fld, val) in enumerate(payload["tokens"])},
        )
        model = cls(vocab, payload["k"])
        model.bias = float(payload["bias"])
        model.linear = np.array(payload["linear"])
        model.embeddings = np.array(payload["embeddings"])
        return model


def fm_score_bruteforce(model: FMModel, idx_row) -> float:
    """O(k m^2) pairwise reference used to check the identity-based score."""
    s = model.bias + sum(model.linear[i] for i in idx_row)
    for a in range(len(idx_row)):
        for b in range(a + 1, len(idx_row)):
            s += float(model.embeddings[idx_row[a]] @ model.embeddings[idx_row[b]])
    return float(s)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(logits, labels) -> float:
    """Mean binary cross entropy against soft targets, log-sum-exp stabilized."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    # -y*log(sigmoid(z)) - (1-y)*log(1-sigmoid(z)) = max(z,0) - y*z + log(1+exp(-|z|))
    loss = np.maximum(z, 0.0) - y * z + np.log1p(np.exp(-np.abs(z)))
    return float(loss.mean())


def bce_grad(logits, labels) -> np.ndarray:
    """d loss / d logit = sigmoid(logit) - label."""
    return _sigmoid(np.asarray(logits, dtype=np.float64)) - np.asarray(labels, dtype=np.float64)


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_gauc: list = field(default_factory=list)
    best_epoch: int = -1
    best_val_gauc: float = float("nan")


class _Adam:
    def __init__(self, shapes, lr):
        self.lr = lr
        self.b1, self.b2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]

    def step(self, grads):
        self.t += 1
        out = []
        for i, g in enumerate(grads):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1 ** self.t)
            vhat = self.v[i] / (1 - self.b2 ** self.t)
            out.append(self.lr * mhat / (np.sqrt(vhat) + self.eps))
        return out


def train(model: FMModel, train_set: Dataset, train_labels, val_set: Dataset,
          val_labels, config: TrainConfig) -> TrainHistory:
    """Mini-batch Adam on BCE with early stopping on validation GAUC.

    val_labels must be binary interest ground truth. The model is left at the
    best-on-validation snapshot. Deterministic for a fixed config/seed.
    """
    from .evaluation import gauc  # deferred to avoid an import cycle

    config.validate()
    y = np.asarray(train_labels, dtype=np.float64)
    if y.shape[0] != len(train_set):
        raise ValueError("train labels not aligned with train rows")
    idx = encode(model.vocab, train_set)
    val_idx = encode(model.vocab, val_set)
    val_y = np.asarray(val_labels)
    val_users = val_set.user_ids

    rng = np.random.default_rng(config.seed)
    opt = _Adam([(), model.linear.shape, model.embeddings.shape], config.learning_rate)
    history = TrainHistory()
    best = model.params()
    best_gauc = -np.inf
    stall = 0
    n = len(train_set)

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start:start + config.batch_size]
            bi = idx[batch]
            logits = model.score(bi)
            loss = bce_loss(logits, y[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}")
            epoch_loss += loss * batch.size

            g = bce_grad(logits, y[batch]) / batch.size
            g_bias = g.sum()
            g_linear = np.zeros_like(model.linear)
            np.add.at(g_linear, bi, g[:, None])
            V = model.embeddings[bi]
            s = V.sum(axis=1)
            g_emb = np.zeros_like(model.embeddings)
            np.add.at(g_emb, bi, g[:, None, None] * (s[:, None, :] - V))

            d_bias, d_linear, d_emb = opt.step([g_bias, g_linear, g_emb])
            model.bias -= float(d_bias)
            model.linear -= d_linear
            model.embeddings -= d_emb

        history.train_loss.append(epoch_loss / n)
        vg = gauc(model.score(val_idx), val_y, val_users)
        history.val_gauc.append(vg)
        if vg > best_gauc:
            best_gauc = vg
            best = model.params()
            history.best_epoch = epoch
            stall = 0
        else:
            stall += 1
            if stall > config.patience:
                break

    model.set_params(best)
    history.best_val_gauc = best_gauc
    return history
