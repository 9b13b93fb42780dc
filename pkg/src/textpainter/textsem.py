"""Text semantic tokens for sentence- and character-level fusion.

Every encoder maps a string to a token matrix whose first row is the
sentence token ``z0``.  The toy encoder is hash-based and needs no weights;
any other model can be plugged in through :class:`CallableTextEncoder`.
"""

from __future__ import annotations

import hashlib
import importlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

MAX_TOKENS = 16


@dataclass
class TokenBundle:
    tokens: torch.Tensor  # (n_tok, C1), row 0 is the sentence token
    valid_mask: torch.Tensor  # (n_tok,) bool

    @property
    def sentence(self):
        return self.tokens[0]

    @property
    def n_tokens(self):
        return self.tokens.shape[0]


class TextEncoder(nn.Module):
    """Frozen string -> token-matrix encoder.

    Subclasses implement ``token_matrix(content)`` returning an (n, dim)
    float tensor whose first row summarizes the whole sentence.
    """

    dim: int

    def token_matrix(self, content):
        raise NotImplementedError

    def forward(self, content):
        return encode_text(content, self)


class ToyTextEncoder(TextEncoder):
    """Deterministic character embeddings derived from a keyed hash.

    Each character's embedding is a unit-variance Gaussian vector seeded from
    blake2b(vocab_seed, char); the sentence token is the mean of the character
    embeddings.  A fixed random mixing matrix is kept as a frozen parameter so
    that freezing can be checked like any other module.
    """

    def __init__(self, vocab_seed=0, dim=64):
        super().__init__()
        if dim < 8:
            raise ValueError("toy encoder needs dim >= 8")
        self.vocab_seed = int(vocab_seed)
        self.dim = int(dim)
        rng = np.random.default_rng(self.vocab_seed)
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        self.mix = nn.Parameter(torch.tensor(q, dtype=torch.float32), requires_grad=False)
        self._cache = {}

    def char_embedding(self, ch):
        vec = self._cache.get(ch)
        if vec is None:
            digest = hashlib.blake2b(
                ch.encode("utf-8"), digest_size=8, key=self.vocab_seed.to_bytes(8, "little")
            ).digest()
            rng = np.random.default_rng(int.from_bytes(digest, "little"))
            vec = torch.tensor(rng.standard_normal(self.dim), dtype=torch.float32)
            self._cache[ch] = vec
        return vec

    @torch.no_grad()
    def token_matrix(self, content):
        chars = torch.stack([self.char_embedding(ch) for ch in content]) @ self.mix
        return torch.cat([chars.mean(0, keepdim=True), chars], dim=0)


class CallableTextEncoder(TextEncoder):
    """Adapter around any ``fn(str) -> (n, dim)`` array, e.g. a pretrained
    vision-language text tower.  Outputs are detached."""

    def __init__(self, fn, dim):
        super().__init__()
        self.fn = fn
        self.dim = int(dim)

    @torch.no_grad()
    def token_matrix(self, content):
        out = torch.as_tensor(np.asarray(self.fn(content)), dtype=torch.float32)
        if out.ndim != 2 or out.shape[1] != self.dim:
            raise ValueError(f"external encoder returned shape {tuple(out.shape)}, expected (n, {self.dim})")
        return out


def toy_encoder(vocab_seed=0, dim=64):
    return ToyTextEncoder(vocab_seed, dim).eval()


def build_encoder(cfg):
    """Build from flat config keys ``textsem.backend`` / ``textsem.dim``.

    The external backend loads ``textsem.factory`` ("module:callable"),
    which must return ``fn(str) -> (n, dim)``.
    """
    backend = cfg.get("textsem.backend", "toy")
    dim = int(cfg.get("textsem.dim", 64))
    if backend == "toy":
        return toy_encoder(int(cfg.get("textsem.vocab_seed", 0)), dim)
    if backend == "external":
        mod, _, attr = cfg["textsem.factory"].partition(":")
        fn = getattr(importlib.import_module(mod), attr)()
        return CallableTextEncoder(fn, dim).eval()
    raise ValueError(f"unknown textsem.backend {backend!r}")


def encode_text(content, encoder):
    if not content:
        raise ValueError("content must be non-empty")
    tokens = encoder.token_matrix(content)[:MAX_TOKENS].detach()
    return TokenBundle(tokens=tokens, valid_mask=torch.ones(tokens.shape[0], dtype=torch.bool))


def pad_bundles(bundles):
    """Stack bundles to (B, n_max, C1) tokens and a (B, n_max) validity mask."""
    n = max(b.n_tokens for b in bundles)
    dim = bundles[0].tokens.shape[1]
    tokens = torch.zeros(len(bundles), n, dim)
    mask = torch.zeros(len(bundles), n, dtype=torch.bool)
    for i, b in enumerate(bundles):
        tokens[i, : b.n_tokens] = b.tokens
        mask[i, : b.n_tokens] = b.valid_mask
    return tokens, mask
