"""Word/character encoders, the four contextual stacks and the bilateral model."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .corpus import Sentence, Token, Vocabulary
from .crf import CRF


class CharEncoder(str, enum.Enum):
    RECURRENT = "recurrent"
    CONVOLUTIONAL = "convolutional"


class WordEncoder(str, enum.Enum):
    RECURRENT = "recurrent"
    CONVOLUTIONAL = "convolutional"
    RECURRENT_THEN_CONV = "recurrent_then_conv"
    CONV_THEN_RECURRENT = "conv_then_recurrent"


class Side(str, enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    BOTH = "both"


_ACTIVATIONS = {"tanh": torch.tanh, "relu": torch.relu, "identity": lambda x: x}


@dataclass(frozen=True)
class SubNetworkSpec:
    char_encoder: CharEncoder = CharEncoder.CONVOLUTIONAL
    word_encoder: WordEncoder = WordEncoder.RECURRENT
    char_dim: int = 16
    char_hidden_dim: int = 16   # per direction, recurrent char encoder
    char_filters: int = 24      # convolutional char encoder
    char_kernel_width: int = 3
    word_dim: int = 32
    hidden_dim: int = 32        # per direction
    conv_kernel_width: int = 3
    conv_filters: int = 64
    conv_layers: int = 1
    conv_activation: str = "tanh"
    dropout: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "char_encoder", CharEncoder(self.char_encoder))
        object.__setattr__(self, "word_encoder", WordEncoder(self.word_encoder))
        for name in ("char_dim", "char_hidden_dim", "char_filters", "char_kernel_width",
                     "word_dim", "hidden_dim", "conv_kernel_width", "conv_filters",
                     "conv_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("conv_kernel_width", "char_kernel_width"):
            if getattr(self, name) % 2 == 0:
                raise ValueError(f"{name} must be odd")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.conv_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.conv_activation!r}")

    @property
    def char_output_dim(self) -> int:
        if self.char_encoder is CharEncoder.RECURRENT:
            return 2 * self.char_hidden_dim
        return self.char_filters

    @property
    def output_dim(self) -> int:
        if self.word_encoder in (WordEncoder.RECURRENT, WordEncoder.CONV_THEN_RECURRENT):
            return 2 * self.hidden_dim
        return self.conv_filters

    def to_dict(self) -> dict:
        return {k: (v.value if isinstance(v, enum.Enum) else v)
                for k, v in dataclasses.asdict(self).items()}


@dataclass(frozen=True)
class BilateralConfig:
    left: SubNetworkSpec = field(default_factory=SubNetworkSpec)
    right: SubNetworkSpec = field(default_factory=SubNetworkSpec)
    labelset: tuple[str, ...] = ("O",)
    shared_embeddings: bool = False
    pairwise_emissions: bool = False
    constrained_transitions: bool = False

    def __post_init__(self):
        object.__setattr__(self, "labelset", tuple(self.labelset))
        if "O" not in self.labelset:
            raise ValueError("labelset must contain O")
        classes = {lab[2:] for lab in self.labelset if lab != "O"}
        for cls in classes:
            for p in "BIES":
                if f"{p}-{cls}" not in self.labelset:
                    raise ValueError(f"labelset lacks {p}-{cls}")
        if self.shared_embeddings and (
                self.left.word_dim != self.right.word_dim
                or self.left.char_dim != self.right.char_dim):
            raise ValueError("shared embeddings need equal word_dim and char_dim")

    def to_dict(self) -> dict:
        return {"left": self.left.to_dict(), "right": self.right.to_dict(),
                "labelset": list(self.labelset),
                "shared_embeddings": self.shared_embeddings,
                "pairwise_emissions": self.pairwise_emissions,
                "constrained_transitions": self.constrained_transitions}

    @classmethod
    def from_dict(cls, data: dict) -> "BilateralConfig":
        data = dict(data)
        data["left"] = SubNetworkSpec(**data["left"])
        data["right"] = SubNetworkSpec(**data["right"])
        return cls(**data)


def encoder_combinations() -> list[tuple[CharEncoder, WordEncoder]]:
    return list(itertools.product(CharEncoder, WordEncoder))


def bilateral_combinations(n_subnetworks: int = 2) -> list[tuple]:
    return list(itertools.product(encoder_combinations(), repeat=n_subnetworks))


# ---------------------------------------------------------------- layers

class BiRecurrent(nn.Module):
    """Bidirectional LSTM over padded batches; padding positions come out zero."""

    def __init__(self, input_dim: int, hidden_dim: int):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.lstm = nn.LSTM(input_dim, hidden_dim, batch_first=True, bidirectional=True)

    @property
    def output_dim(self) -> int:
        return 2 * self.hidden_dim

    def forward(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        out, _ = self.lstm(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=x.shape[1])
        return out

    def final_states(self, x: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        packed = pack_padded_sequence(x, lengths.cpu(), batch_first=True, enforce_sorted=False)
        _, (h, _) = self.lstm(packed)
        return torch.cat([h[0], h[1]], dim=-1)


class ConvStack(nn.Module):
    """Same-length 1-D convolutions over a ``(B, n, d)`` sequence."""

    def __init__(self, input_dim: int, filters: int, width: int, layers: int = 1,
                 activation: str = "tanh"):
        super().__init__()
        self.filters = filters
        self.activation = _ACTIVATIONS[activation]
        dims = [input_dim] + [filters] * layers
        self.convs = nn.ModuleList(nn.Conv1d(a, b, width, padding=width // 2)
                                   for a, b in zip(dims, dims[1:]))

    @property
    def output_dim(self) -> int:
        return self.filters

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        m = mask.unsqueeze(-1).to(x.dtype)
        x = x * m
        for conv in self.convs:
            x = self.activation(conv(x.transpose(1, 2)).transpose(1, 2)) * m
        return x


class CharCNN(nn.Module):
    def __init__(self, char_dim: int, filters: int, width: int):
        super().__init__()
        self.conv = nn.Conv1d(char_dim, filters, width, padding=width // 2)

    def forward(self, emb: torch.Tensor, char_mask: torch.Tensor) -> torch.Tensor:
        # emb: (N, c, char_dim); zero-pad, then max over real characters only
        emb = emb * char_mask.unsqueeze(-1).to(emb.dtype)
        h = torch.tanh(self.conv(emb.transpose(1, 2))).transpose(1, 2)
        h = h.masked_fill(~char_mask.unsqueeze(-1), -math.inf)
        return h.max(dim=1).values


class CharRNN(nn.Module):
    def __init__(self, char_dim: int, hidden_dim: int):
        super().__init__()
        self.rnn = BiRecurrent(char_dim, hidden_dim)

    def forward(self, emb: torch.Tensor, char_mask: torch.Tensor) -> torch.Tensor:
        return self.rnn.final_states(emb, char_mask.sum(dim=1))


def _build_encoder(spec: SubNetworkSpec, input_dim: int) -> nn.ModuleList:
    def rnn(d):
        return BiRecurrent(d, spec.hidden_dim)

    def cnn(d):
        return ConvStack(d, spec.conv_filters, spec.conv_kernel_width, spec.conv_layers,
                         spec.conv_activation)

    kind = spec.word_encoder
    if kind is WordEncoder.RECURRENT:
        layers = [rnn(input_dim)]
    elif kind is WordEncoder.CONVOLUTIONAL:
        layers = [cnn(input_dim)]
    elif kind is WordEncoder.RECURRENT_THEN_CONV:
        first = rnn(input_dim)
        layers = [first, cnn(first.output_dim)]
    else:
        first = cnn(input_dim)
        layers = [first, rnn(first.output_dim)]
    return nn.ModuleList(layers)


def run_layer(layer: nn.Module, x: torch.Tensor, lengths: torch.Tensor,
              mask: torch.Tensor) -> torch.Tensor:
    if isinstance(layer, BiRecurrent):
        return layer(x, lengths)
    return layer(x, mask)


# ---------------------------------------------------------------- batching

@dataclass
class Batch:
    words: torch.Tensor      # (B, n)
    chars: torch.Tensor      # (B, n, c)
    lengths: torch.Tensor    # (B,)
    mask: torch.Tensor       # (B, n) bool
    labels: torch.Tensor | None = None

    def __len__(self) -> int:
        return self.words.shape[0]


def make_batch(sentences: Sequence[Sentence], words: Vocabulary, chars: Vocabulary,
               label_index: dict[str, int] | None = None) -> Batch:
    bsz = len(sentences)
    n = max(len(s) for s in sentences)
    c = max(len(t.surface) for s in sentences for t in s.tokens)
    w = np.zeros((bsz, n), dtype=np.int64)
    ch = np.zeros((bsz, n, c), dtype=np.int64)
    lab = np.zeros((bsz, n), dtype=np.int64)
    lengths = np.array([len(s) for s in sentences], dtype=np.int64)
    for b, sent in enumerate(sentences):
        for i, tok in enumerate(sent.tokens):
            w[b, i] = tok.word_id if tok.word_id is not None else words.lookup(tok.surface)
            ids = tok.char_ids or [chars.lookup(x) for x in tok.surface]
            ch[b, i, :len(ids)] = ids
        if label_index is not None:
            lab[b, :len(sent)] = [label_index[x] for x in sent.labels]
    lengths_t = torch.from_numpy(lengths)
    mask = torch.arange(n)[None, :] < lengths_t[:, None]
    return Batch(torch.from_numpy(w), torch.from_numpy(ch), lengths_t, mask,
                 torch.from_numpy(lab) if label_index is not None else None)


# ---------------------------------------------------------------- networks

def _init_uniform(module: nn.Module) -> None:
    for name, p in module.named_parameters():
        if p.dim() < 2:
            nn.init.zeros_(p)
            continue
        fan_in = p[0].numel()
        nn.init.uniform_(p, -1.0 / math.sqrt(fan_in), 1.0 / math.sqrt(fan_in))


def _embedding(num: int, dim: int) -> nn.Embedding:
    emb = nn.Embedding(num, dim, padding_idx=Vocabulary.PAD_INDEX)
    bound = math.sqrt(3.0 / dim)
    with torch.no_grad():
        emb.weight.uniform_(-bound, bound)
        emb.weight[Vocabulary.PAD_INDEX].zero_()
    return emb


class SubNetwork(nn.Module):
    """Word + character representation followed by one contextual stack."""

    def __init__(self, spec: SubNetworkSpec, num_words: int, num_chars: int,
                 shared: nn.ModuleDict | None = None):
        super().__init__()
        self.spec = spec
        if shared is None:
            self.word_embedding = _embedding(num_words, spec.word_dim)
            self.char_embedding = _embedding(num_chars, spec.char_dim)
            self._shared = None
        else:
            # a plain tuple keeps the shared tables out of this module's parameters
            self._shared = (shared["word"], shared["char"])
        if spec.char_encoder is CharEncoder.CONVOLUTIONAL:
            self.char_encoder = CharCNN(spec.char_dim, spec.char_filters, spec.char_kernel_width)
        else:
            self.char_encoder = CharRNN(spec.char_dim, spec.char_hidden_dim)
        self.encoder = _build_encoder(spec, spec.word_dim + spec.char_output_dim)
        self.dropout = nn.Dropout(spec.dropout)
        _init_uniform(self.char_encoder)
        _init_uniform(self.encoder)

    @property
    def output_dim(self) -> int:
        return self.spec.output_dim

    def embeddings(self) -> tuple[nn.Embedding, nn.Embedding]:
        if self._shared is not None:
            return self._shared
        return self.word_embedding, self.char_embedding

    def char_features(self, chars: torch.Tensor) -> torch.Tensor:
        """``(..., c)`` char ids -> ``(..., char_output_dim)``."""
        lead = chars.shape[:-1]
        flat = chars.reshape(-1, chars.shape[-1])
        char_mask = flat != Vocabulary.PAD_INDEX
        # padding tokens have no characters; give them one so packing works
        char_mask[:, 0] |= ~char_mask.any(dim=1)
        emb = self.embeddings()[1](flat)
        return self.char_encoder(emb, char_mask).reshape(*lead, -1)

    def word_features(self, batch: Batch) -> torch.Tensor:
        word_emb = self.embeddings()[0](batch.words)
        return torch.cat([word_emb, self.char_features(batch.chars)], dim=-1)

    def encode(self, x: torch.Tensor, lengths: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        for layer in self.encoder:
            x = run_layer(layer, x, lengths, mask)
        return x

    def forward(self, batch: Batch) -> torch.Tensor:
        x = self.dropout(self.word_features(batch))
        h = self.encode(x, batch.lengths, batch.mask)
        return self.dropout(h) * batch.mask.unsqueeze(-1).to(h.dtype)


class BilateralModel(nn.Module):
    """Two sub-networks whose states are concatenated, projected and fed to one CRF."""

    def __init__(self, config: BilateralConfig, words: Vocabulary, chars: Vocabulary):
        super().__init__()
        self.config = config
        self.words = words
        self.chars = chars
        self.label_index = {lab: i for i, lab in enumerate(config.labelset)}
        shared = None
        if config.shared_embeddings:
            self.shared = nn.ModuleDict({
                "word": _embedding(len(words), config.left.word_dim),
                "char": _embedding(len(chars), config.left.char_dim)})
            shared = self.shared
        self.left = SubNetwork(config.left, len(words), len(chars), shared)
        self.right = SubNetwork(config.right, len(words), len(chars), shared)
        self.projection = nn.Linear(self.left.output_dim + self.right.output_dim,
                                    len(config.labelset))
        _init_uniform(self.projection)
        self.crf = CRF(config.labelset, pairwise=config.pairwise_emissions,
                       constrained=config.constrained_transitions)

    @property
    def labelset(self) -> tuple[str, ...]:
        return self.config.labelset

    def batch(self, sentences: Sequence[Sentence], with_labels: bool = True) -> Batch:
        return make_batch(sentences, self.words, self.chars,
                          self.label_index if with_labels else None)

    def states(self, batch: Batch, active: Side = Side.BOTH) -> torch.Tensor:
        active = Side(active)
        parts = []
        for side, net in ((Side.LEFT, self.left), (Side.RIGHT, self.right)):
            if active in (side, Side.BOTH):
                parts.append(net(batch))
            else:
                parts.append(batch.words.new_zeros(
                    (*batch.words.shape, net.output_dim), dtype=self.projection.weight.dtype))
        return torch.cat(parts, dim=-1)

    def forward(self, batch: Batch, active: Side = Side.BOTH) -> torch.Tensor:
        """Emission scores ``(B, n, |labelset|)``."""
        return self.projection(self.states(batch, active))

    def loss(self, batch: Batch, active: Side = Side.BOTH) -> torch.Tensor:
        return self.crf.neg_log_likelihood(self(batch, active), batch.labels, batch.mask)

    @torch.no_grad()
    def predict(self, sentences: Sequence[Sentence], active: Side = Side.BOTH,
                batch_size: int = 64) -> list[list[str]]:
        was_training = self.training
        self.eval()
        out: list[list[str]] = []
        for i in range(0, len(sentences), batch_size):
            chunk = sentences[i:i + batch_size]
            batch = self.batch(chunk, with_labels=False)
            paths = self.crf.decode(self(batch, active), batch.lengths.tolist())
            out.extend([self.labelset[k] for k in path] for path, _ in paths)
        self.train(was_training)
        return out

    def parameter_group(self, name: str) -> str:
        return name.split(".", 1)[0]

    def parameter_groups(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        groups: dict[str, list] = {}
        for name, p in self.named_parameters():
            groups.setdefault(self.parameter_group(name), []).append((name, p))
        return groups

    def load_pretrained(self, table: dict[str, Sequence[float]], side: Side = Side.BOTH) -> int:
        """Copy pretrained rows into word embeddings; returns the number of rows filled."""
        targets = []
        if self.config.shared_embeddings:
            targets.append(self.shared["word"])
        else:
            if side in (Side.LEFT, Side.BOTH):
                targets.append(self.left.word_embedding)
            if side in (Side.RIGHT, Side.BOTH):
                targets.append(self.right.word_embedding)
        filled = 0
        with torch.no_grad():
            for emb in targets:
                filled = 0
                for idx, tok in enumerate(self.words.itos[2:], start=2):
                    vec = table.get(tok, table.get(tok.lower()))
                    if vec is None:
                        continue
                    if len(vec) != emb.embedding_dim:
                        raise ValueError(f"pretrained dim {len(vec)} != word_dim "
                                         f"{emb.embedding_dim}")
                    emb.weight[idx] = torch.tensor(vec, dtype=emb.weight.dtype)
                    filled += 1
        return filled


# ---------------------------------------------------------------- contract helpers

def char_representation(token: Token, net: SubNetwork) -> torch.Tensor:
    if not token.surface:
        raise ValueError("token has no characters")
    ids = token.char_ids or ()
    if not ids:
        raise ValueError("token is not encoded")
    return net.char_features(torch.tensor([ids]))[0]


def word_representation(token: Token, net: SubNetwork) -> torch.Tensor:
    word = net.embeddings()[0](torch.tensor([token.word_id or Vocabulary.UNK_INDEX]))[0]
    return torch.cat([word, char_representation(token, net)])


def contextual_encode(vectors: torch.Tensor, net: SubNetwork) -> torch.Tensor:
    """Run ``net``'s contextual stack over one ``(n, d)`` sequence."""
    n = vectors.shape[0]
    if n == 0:
        raise ValueError("empty sequence")
    lengths = torch.tensor([n])
    mask = torch.ones(1, n, dtype=torch.bool)
    return net.encode(vectors.unsqueeze(0), lengths, mask)[0]


def bilateral_forward(sentence: Sentence, model: BilateralModel,
                      active: Side = Side.BOTH) -> torch.Tensor:
    return model(model.batch([sentence], with_labels=False), active)[0]


# ---------------------------------------------------------------- persistence

CHECKPOINT_FORMAT = "stackner-checkpoint-1"


def parameter_checksums(model: BilateralModel) -> dict[str, str]:
    """SHA-256 per parameter group over raw tensor bytes."""
    out = {}
    for group, params in sorted(model.parameter_groups().items()):
        h = hashlib.sha256()
        for name, p in sorted(params, key=lambda x: x[0]):
            h.update(name.encode())
            h.update(p.detach().cpu().contiguous().numpy().tobytes())
        out[group] = h.hexdigest()
    return out


def save_checkpoint(path: str | os.PathLike, model: BilateralModel, meta: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": json.dumps(model.config.to_dict(), sort_keys=True),
        "words": json.dumps(model.words.to_dict(), ensure_ascii=False),
        "chars": json.dumps(model.chars.to_dict(), ensure_ascii=False),
        "meta": json.dumps(meta or {}, sort_keys=True),
        "state": {k: v.detach().clone() for k, v in model.state_dict().items()},
    }
    torch.save(payload, path)


def load_checkpoint(path: str | os.PathLike) -> tuple[BilateralModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint of format {CHECKPOINT_FORMAT}")
    config = BilateralConfig.from_dict(json.loads(payload["config"]))
    words = Vocabulary.from_dict(json.loads(payload["words"]))
    chars = Vocabulary.from_dict(json.loads(payload["chars"]))
    model = BilateralModel(config, words, chars)
    state = payload["state"]
    for name, tensor in model.state_dict().items():
        if name in state and state[name].shape != tensor.shape:
            raise ValueError(f"{path}: tensor {name} has shape {tuple(state[name].shape)}, "
                             f"expected {tuple(tensor.shape)} for the stored vocabularies")
    dtype = next(iter(state.values())).dtype
    model.to(dtype)
    model.load_state_dict(state)
    return model, json.loads(payload["meta"])
