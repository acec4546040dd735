"""Video side: frame selection and the four temporal pooling heads.

Every clip is first reduced to a fixed number of frames (``n``, default 16)
by splitting it into n equal chunks and keeping the frame with the highest
per-frame score in each chunk. The heads then differ in how they turn the
selected frame features into class scores:

* ``score-mean``       mean of the stored per-frame score vectors, no training
* ``avg-pool``         mean-pool features, linear classifier
* ``weighted-avg-pool`` weights from a sigmoid over arousal-valence, learned
                        jointly with the classifier
* ``lstm``             recurrent readout of the selected frame sequence
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import TrainConfig, VIDEO_HEADS
from .data import Clip, Dataset, FrameRecord, argmax_lowest
from .errors import ContractError, TrainingError
from .nn import (LSTMParams, Linear, lstm_backward, lstm_forward, sigmoid,
                 softmax, softmax_cross_entropy_batch)
from .optim import make_optimizer


def frame_score(frame: FrameRecord) -> float:
    """Confidence of a frame: the maximum entry of its score vector."""
    return float(np.max(frame.scores))


@dataclass
class SelectedClip:
    """Fixed-length view of a clip: features, arousal-valence, source rows."""

    features: np.ndarray   # (n, D)
    av: np.ndarray         # (n, 2)
    indices: np.ndarray    # (n,) rows of the original clip, ascending


def select_frames(clip: Clip, n: int = 16) -> SelectedClip:
    """Keep the highest-scoring frame of each of ``n`` equal chunks.

    Chunk i covers frame indices [floor(i*L/n), floor((i+1)*L/n)). Score ties
    go to the earliest frame. When L < n some chunks are empty; those reuse
    the frame at min(floor(i*L/n), L-1), so short clips repeat frames rather
    than fail.
    """
    if n < 1:
        raise ContractError(f"frame count n must be >= 1, got {n}")
    L = clip.n_frames
    per_frame = clip.scores.max(axis=1)
    indices = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo = (i * L) // n
        hi = ((i + 1) * L) // n
        if lo < hi:
            indices[i] = lo + argmax_lowest(per_frame[lo:hi])
        else:
            indices[i] = min(lo, L - 1)
    return SelectedClip(clip.features[indices], clip.av[indices], indices)


def predict_score_mean(clip: Clip, score_mode: str = "probs") -> np.ndarray:
    """Classify from the stored frame scores alone (no trained parameters).

    ``probs`` mode averages the per-frame vectors and renormalizes, which
    requires them to be nonnegative with positive sum; ``logits`` mode
    averages then applies softmax.
    """
    mean = clip.scores.mean(axis=0)
    if score_mode == "logits":
        return softmax(mean)
    if score_mode != "probs":
        raise ContractError(f"score_mode must be 'probs' or 'logits', "
                            f"got {score_mode!r}")
    if np.any(mean < 0) or mean.sum() <= 0:
        raise ContractError(
            f"clip {clip.id}: stored scores are not probability-like; "
            f"use score_mode='logits'")
    return mean / mean.sum()


def pool_average(selected: SelectedClip) -> np.ndarray:
    """Unweighted mean of the selected frame features."""
    return selected.features.mean(axis=0)


def pool_weighted(selected: SelectedClip, regressor: Linear):
    """Weighted mean with weights sigmoid(av @ a + b) from the regressor.

    Returns ``(pooled, weights)``. Weights are strictly positive (sigmoid),
    and the pooled vector is the weight-normalized average, so a zero
    regressor (all weights 0.5) reduces to the plain average.
    """
    z = (selected.av @ regressor.W.values[0])
    if regressor.b is not None:
        z = z + regressor.b.values[0]
    w = sigmoid(z)
    pooled = (w @ selected.features) / w.sum()
    return pooled, w


class VideoModel:
    """A trained (or trainable) temporal pooling head.

    Parameters live in ``ParamTensor`` objects reachable via ``params()``;
    the per-head batched forward/backward used in training shares the exact
    math of the public single-clip operations.
    """

    def __init__(self, kind: str, n: int, d_feature: int, n_classes: int,
                 score_mode: str = "probs", lstm_hidden: int = 128, rng=None):
        if kind not in VIDEO_HEADS:
            raise ContractError(f"unknown head kind {kind!r}")
        self.kind = kind
        self.n = n
        self.d_feature = d_feature
        self.n_classes = n_classes
        self.score_mode = score_mode
        self.lstm_hidden = lstm_hidden
        self.classifier = None
        self.regressor = None
        self.lstm = None
        if kind == "avg-pool":
            self.classifier = Linear(d_feature, n_classes, rng, "classifier")
        elif kind == "weighted-avg-pool":
            self.classifier = Linear(d_feature, n_classes, rng, "classifier")
            self.regressor = Linear(2, 1, rng, "regressor")
        elif kind == "lstm":
            self.lstm = LSTMParams(d_feature, lstm_hidden, rng, "lstm")
            self.classifier = Linear(lstm_hidden, n_classes, rng, "classifier")

    def params(self):
        out = []
        if self.lstm is not None:
            out.extend(self.lstm.params())
        if self.classifier is not None:
            out.extend(self.classifier.params())
        if self.regressor is not None:
            out.extend(self.regressor.params())
        return out

    # -- batched training path ------------------------------------------

    def forward_batch(self, F, AV):
        """Logits for a batch of selected clips; returns (logits, cache)."""
        if self.kind == "avg-pool":
            pooled = F.mean(axis=1)
            logits, lcache = self.classifier.forward(pooled)
            return logits, (lcache, F.shape[1])
        if self.kind == "weighted-avg-pool":
            z = AV.reshape(-1, 2) @ self.regressor.W.values.T \
                + self.regressor.b.values
            w = sigmoid(z.reshape(F.shape[0], F.shape[1]))
            s = w.sum(axis=1)
            pooled = np.einsum("bn,bnd->bd", w, F) / s[:, None]
            logits, lcache = self.classifier.forward(pooled)
            return logits, (lcache, F, AV, w, s, pooled)
        if self.kind == "lstm":
            h, caches = lstm_forward(self.lstm, F)
            logits, lcache = self.classifier.forward(h)
            return logits, (lcache, caches, F.shape)
        raise ContractError(f"head {self.kind!r} has no trainable forward")

    def backward_batch(self, cache, dlogits):
        if self.kind == "avg-pool":
            lcache, n = cache
            dpooled = self.classifier.backward(lcache, dlogits)
            return np.repeat(dpooled[:, None, :], n, axis=1) / n
        if self.kind == "weighted-avg-pool":
            lcache, F, AV, w, s, pooled = cache
            dpooled = self.classifier.backward(lcache, dlogits)
            # quotient rule through pooled = sum_i w_i f_i / sum_i w_i
            dw = np.einsum("bnd,bd->bn", F - pooled[:, None, :], dpooled)
            dw /= s[:, None]
            dz = dw * w * (1.0 - w)
            self.regressor.W.grad += dz.reshape(1, -1) @ AV.reshape(-1, 2)
            self.regressor.b.grad += dz.sum()
            return w[:, :, None] * dpooled[:, None, :] / s[:, None, None]
        if self.kind == "lstm":
            lcache, caches, shape = cache
            dh = self.classifier.backward(lcache, dlogits)
            return lstm_backward(self.lstm, caches, dh)
        raise ContractError(f"head {self.kind!r} has no trainable backward")

    # -- single-clip inference -------------------------------------------

    def predict(self, clip: Clip) -> np.ndarray:
        if clip.features.shape[1] != self.d_feature:
            raise ContractError(
                f"clip {clip.id}: feature dim {clip.features.shape[1]} does "
                f"not match model dim {self.d_feature}")
        if self.kind == "score-mean":
            return predict_score_mean(clip, self.score_mode)
        sel = select_frames(clip, self.n)
        if self.kind == "avg-pool":
            logits, _ = self.classifier.forward(pool_average(sel))
        elif self.kind == "weighted-avg-pool":
            pooled, _ = pool_weighted(sel, self.regressor)
            logits, _ = self.classifier.forward(pooled)
        else:
            h, _ = lstm_forward(self.lstm, sel.features[None, :, :])
            logits, _ = self.classifier.forward(h[0])
        return softmax(logits)


def predict_video(model: VideoModel, clip: Clip) -> np.ndarray:
    """Class probabilities for one clip under a trained head."""
    return model.predict(clip)


def _split_accuracy(model: VideoModel, clips) -> float | None:
    labeled = [c for c in clips if c.label is not None]
    if not labeled:
        return None
    hits = sum(int(argmax_lowest(model.predict(c)) == c.label)
               for c in labeled)
    return hits / len(labeled)


def train_video_model(ds: Dataset, config: TrainConfig, seed: int):
    """Fit the configured head on the train split; returns (model, log).

    The log is one dict per epoch with the mean train loss and the val-split
    accuracy (None when the val split is empty). Runs are deterministic in
    (dataset, config, seed). Frame selection is precomputed once; only head
    parameters are trained.
    """
    config.validate()
    train_clips = [c for c in ds.split("train") if c.label is not None]
    if not train_clips:
        raise TrainingError("train split has no labeled clips")
    val_clips = ds.split("val")
    rng = np.random.default_rng([seed, 0x71D])

    model = VideoModel(config.head, config.n, ds.d_feature, ds.n_classes,
                       score_mode=config.score_mode,
                       lstm_hidden=config.lstm_hidden, rng=rng)
    if config.head == "score-mean":
        return model, [{"epoch": 0, "train_loss": None,
                        "val_accuracy": _split_accuracy(model, val_clips)}]

    selected = [select_frames(c, config.n) for c in train_clips]
    F = np.stack([s.features for s in selected])
    AV = np.stack([s.av for s in selected])
    y = np.array([c.label for c in train_clips], dtype=np.int64)

    opt = make_optimizer(model.params(), config.optimizer, lr=config.lr,
                         momentum=config.momentum)
    n_train = len(train_clips)
    log = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n_train)
        total = 0.0
        for start in range(0, n_train, config.batch_size):
            batch = perm[start:start + config.batch_size]
            logits, cache = model.forward_batch(F[batch], AV[batch])
            loss, dlogits, _ = softmax_cross_entropy_batch(logits, y[batch])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}; try a lower lr")
            model.backward_batch(cache, dlogits)
            opt.step()
            total += loss * batch.size
        log.append({"epoch": epoch, "train_loss": total / n_train,
                    "val_accuracy": _split_accuracy(model, val_clips)})
    return model, log
