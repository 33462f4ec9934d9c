"""Desk-scale training backend: a tiny causal LM with low-rank adapters.

Stands in for a multi-GPU fine-tuning stack behind the same narrow
interface: tokenize, per-token loss forward pass, optimizer step,
checkpoint save/load. The transformer is small enough (well under 100M
parameters) to train on a CPU in minutes.

Adapters of rank ``adapter_rank`` (scaling ``adapter_scaling``) attach to
the attention q/k/v/o projections and both feed-forward projections; base
projection weights stay frozen. Embeddings, layer norms and the LM head
remain trainable, since there is no pretrained base to inherit them from
at this scale.

The optimizer slot accepts the built-in first-order default ("adam") or
any factory registered via :func:`register_optimizer`; second-order
optimizers plug in there, their internals are out of scope here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import torch
import torch.nn.functional as F
from torch import nn

from .segmentation import SpanSegmentation

PAD, BOS, UNK = "<pad>", "<bos>", "<unk>"
SPECIAL_TOKENS = (PAD, BOS, UNK, "<think>", "</think>", "oui", "non")


class BackendConfigError(ValueError):
    pass


# -- optimizer slot ---------------------------------------------------------

OptimizerFactory = Callable[[list, float], torch.optim.Optimizer]

_OPTIMIZERS: dict[str, OptimizerFactory] = {
    "adam": lambda params, lr: torch.optim.AdamW(params, lr=lr),
}


def register_optimizer(name: str, factory: OptimizerFactory) -> None:
    """Register a pluggable optimizer (e.g. a second-order method)."""
    _OPTIMIZERS[name] = factory


def available_optimizers() -> list[str]:
    return sorted(_OPTIMIZERS)


# -- tokenizer ----------------------------------------------------------------


class WordTokenizer:
    """Whitespace tokenizer with a corpus-built vocabulary."""

    def __init__(self, vocab: Optional[list[str]] = None):
        self.itos: list[str] = list(vocab) if vocab else []
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}

    @classmethod
    def fit(cls, texts: Sequence[str]) -> "WordTokenizer":
        seen: dict[str, int] = {}
        for text in texts:
            for token in text.split():
                seen[token] = seen.get(token, 0) + 1
        vocab = list(SPECIAL_TOKENS)
        for token in sorted(seen, key=lambda t: (-seen[t], t)):
            if token not in SPECIAL_TOKENS:
                vocab.append(token)
        return cls(vocab)

    def __len__(self) -> int:
        return len(self.itos)

    def tokens(self, text: str) -> list[str]:
        return text.split()

    def encode(self, text: str) -> list[int]:
        unk = self.stoi[UNK]
        return [self.stoi.get(token, unk) for token in self.tokens(text)]

    def token_id(self, token: str) -> int:
        return self.stoi[token]


# -- model --------------------------------------------------------------------


class LoRALinear(nn.Module):
    """Frozen base projection plus a trainable low-rank update."""

    def __init__(self, in_features: int, out_features: int, rank: int, scaling: float):
        super().__init__()
        self.base = nn.Linear(in_features, out_features)
        self.base.weight.requires_grad_(False)
        self.base.bias.requires_grad_(False)
        self.rank = rank
        if rank > 0:
            self.lora_a = nn.Parameter(torch.randn(rank, in_features) * 0.02)
            self.lora_b = nn.Parameter(torch.zeros(out_features, rank))
            self.scale = scaling / rank

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.base(x)
        if self.rank > 0:
            out = out + F.linear(F.linear(x, self.lora_a), self.lora_b) * self.scale
        return out


class Block(nn.Module):
    def __init__(self, d_model: int, n_heads: int, d_ff: int, rank: int, scaling: float):
        super().__init__()
        self.n_heads = n_heads
        self.ln1 = nn.LayerNorm(d_model)
        self.ln2 = nn.LayerNorm(d_model)
        self.q = LoRALinear(d_model, d_model, rank, scaling)
        self.k = LoRALinear(d_model, d_model, rank, scaling)
        self.v = LoRALinear(d_model, d_model, rank, scaling)
        self.o = LoRALinear(d_model, d_model, rank, scaling)
        self.up = LoRALinear(d_model, d_ff, rank, scaling)
        self.down = LoRALinear(d_ff, d_model, rank, scaling)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.ln1(x)
        heads = self.n_heads

        def split(tensor):
            return tensor.view(b, t, heads, d // heads).transpose(1, 2)

        attn = F.scaled_dot_product_attention(
            split(self.q(h)), split(self.k(h)), split(self.v(h)), is_causal=True
        )
        attn = attn.transpose(1, 2).reshape(b, t, d)
        x = x + self.o(attn)
        h = self.ln2(x)
        return x + self.down(F.gelu(self.up(h)))


class TinyCausalLM(nn.Module):
    def __init__(
        self,
        vocab_size: int,
        d_model: int = 64,
        n_heads: int = 4,
        n_layers: int = 2,
        d_ff: int = 128,
        max_len: int = 256,
        adapter_rank: int = 8,
        adapter_scaling: float = 16.0,
    ):
        super().__init__()
        self.max_len = max_len
        self.tok_emb = nn.Embedding(vocab_size, d_model)
        self.pos_emb = nn.Embedding(max_len, d_model)
        self.blocks = nn.ModuleList(
            Block(d_model, n_heads, d_ff, adapter_rank, adapter_scaling)
            for _ in range(n_layers)
        )
        self.ln_f = nn.LayerNorm(d_model)
        self.head = nn.Linear(d_model, vocab_size)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        b, t = ids.shape
        if t > self.max_len:
            raise BackendConfigError(f"sequence length {t} exceeds max_len {self.max_len}")
        positions = torch.arange(t, device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(positions)[None, :, :]
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))


# -- encoded sequences ----------------------------------------------------------


@dataclass
class EncodedExample:
    """A tokenized (prompt, completion) pair with span bookkeeping.

    ``segmentation`` indexes token positions of the full sequence; it is
    None for direct-binary targets, where ``answer_indices`` alone carry
    loss. ``answer_position`` is where the final oui/non token sits, used
    for teacher-forced answer evaluation.
    """

    input_ids: list[int]
    prompt_length: int
    segmentation: Optional[SpanSegmentation]
    answer_indices: list[int]
    answer_position: int
    gold_answer: str


@dataclass
class TinyBackend:
    """Bundles tokenizer, model and optimizer behind the trainer interface."""

    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 256
    device: str = "cpu"
    tokenizer: Optional[WordTokenizer] = None
    model: Optional[TinyCausalLM] = None
    optimizer: Optional[torch.optim.Optimizer] = None
    scheduler: object = None
    optimizer_name: str = "adam"
    _grad_clip: float = 1.0
    _init_seed: int = field(default=0, repr=False)

    # -- setup --

    def fit_tokenizer(self, texts: Sequence[str]) -> None:
        self.tokenizer = WordTokenizer.fit(texts)

    def init_model(self, seed: int, adapter_rank: int = 8, adapter_scaling: float = 16.0) -> None:
        if self.tokenizer is None:
            raise BackendConfigError("fit_tokenizer must run before init_model")
        self._init_seed = seed
        torch.manual_seed(seed)
        self.model = TinyCausalLM(
            vocab_size=len(self.tokenizer),
            d_model=self.d_model,
            n_heads=self.n_heads,
            n_layers=self.n_layers,
            d_ff=self.d_ff,
            max_len=self.max_len,
            adapter_rank=adapter_rank,
            adapter_scaling=adapter_scaling,
        ).to(self.device)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.model.parameters())

    def trainable_parameters(self) -> list[torch.nn.Parameter]:
        return [p for p in self.model.parameters() if p.requires_grad]

    def configure_optimizer(self, name: str, lr: float, total_steps: int,
                            schedule: str = "cosine") -> None:
        if name not in _OPTIMIZERS:
            raise BackendConfigError(
                f"unknown optimizer {name!r}; registered: {available_optimizers()}"
            )
        self.optimizer_name = name
        self.optimizer = _OPTIMIZERS[name](self.trainable_parameters(), lr)
        if schedule == "cosine":
            self.scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
                self.optimizer, T_max=max(1, total_steps)
            )
        elif schedule == "constant":
            self.scheduler = None
        else:
            raise BackendConfigError(f"unknown lr schedule {schedule!r}")

    # -- encoding --

    def encode_pair(self, prompt: str, completion: str, binary: bool) -> EncodedExample:
        from .segmentation import segment_spans

        prompt_tokens = [BOS] + self.tokenizer.tokens(prompt)
        completion_tokens = self.tokenizer.tokens(completion)
        tokens = prompt_tokens + completion_tokens
        if len(tokens) > self.max_len:
            raise BackendConfigError(
                f"encoded length {len(tokens)} exceeds max_len {self.max_len}"
            )
        ids = [self.tokenizer.stoi.get(t, self.tokenizer.stoi[UNK]) for t in tokens]
        prompt_length = len(prompt_tokens)
        if binary:
            seg = None
            answer_indices = list(range(prompt_length, len(tokens)))
        else:
            seg = segment_spans(tokens, prompt_length=prompt_length)
            answer_indices = seg.answer_indices
        if not answer_indices:
            raise BackendConfigError("completion has no answer tokens")
        gold = tokens[answer_indices[-1]]
        return EncodedExample(
            input_ids=ids,
            prompt_length=prompt_length,
            segmentation=seg,
            answer_indices=answer_indices,
            answer_position=answer_indices[-1],
            gold_answer=gold,
        )

    # -- forward/backward --

    def _pad_batch(self, batch: Sequence[EncodedExample]) -> torch.Tensor:
        pad_id = self.tokenizer.token_id(PAD)
        width = max(len(ex.input_ids) for ex in batch)
        ids = torch.full((len(batch), width), pad_id, dtype=torch.long, device=self.device)
        for row, ex in enumerate(batch):
            ids[row, : len(ex.input_ids)] = torch.tensor(ex.input_ids, dtype=torch.long)
        return ids

    def per_token_losses(self, batch: Sequence[EncodedExample]) -> torch.Tensor:
        """[B, T] cross-entropy aligned to input positions.

        losses[b, i] is the loss of generating token i from its prefix;
        position 0 carries no loss. Padding positions are computed but
        never indexed by span bookkeeping, so they do not affect training.
        """
        ids = self._pad_batch(batch)
        logits = self.model(ids)
        ce = F.cross_entropy(
            logits[:, :-1].reshape(-1, logits.size(-1)),
            ids[:, 1:].reshape(-1),
            reduction="none",
        ).view(ids.size(0), -1)
        zero = torch.zeros(ids.size(0), 1, device=self.device)
        return torch.cat([zero, ce], dim=1)

    def train_step(self, loss: torch.Tensor) -> None:
        self.optimizer.zero_grad()
        loss.backward()
        torch.nn.utils.clip_grad_norm_(self.trainable_parameters(), self._grad_clip)
        self.optimizer.step()
        if self.scheduler is not None:
            self.scheduler.step()

    # -- evaluation --

    @torch.no_grad()
    def predict_answer(self, example: EncodedExample,
                       candidates: tuple[str, str] = ("oui", "non")) -> str:
        """Teacher-forced answer: restricted argmax at the answer position."""
        ids = self._pad_batch([example])
        logits = self.model(ids)
        position = example.answer_position - 1  # logits that generate the answer
        candidate_ids = [self.tokenizer.token_id(c) for c in candidates]
        scores = logits[0, position, candidate_ids]
        return candidates[int(scores.argmax())]

    def answer_accuracy(self, examples: Sequence[EncodedExample]) -> float:
        if not examples:
            return 0.0
        correct = sum(
            1 for ex in examples if self.predict_answer(ex) == ex.gold_answer
        )
        return correct / len(examples)

    # -- checkpointing --

    def save_checkpoint(self, directory: Path | str) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        torch.save(self.model.state_dict(), directory / "model.pt")
        adapter = {
            name: tensor
            for name, tensor in self.model.state_dict().items()
            if "lora_" in name
        }
        torch.save(adapter, directory / "adapter.pt")
        meta = {
            "d_model": self.d_model,
            "n_heads": self.n_heads,
            "n_layers": self.n_layers,
            "d_ff": self.d_ff,
            "max_len": self.max_len,
            "optimizer": self.optimizer_name,
            "init_seed": self._init_seed,
            "vocab": self.tokenizer.itos,
        }
        (directory / "backend.json").write_text(
            json.dumps(meta, ensure_ascii=False, indent=2), encoding="utf-8"
        )

    @classmethod
    def load_checkpoint(cls, directory: Path | str,
                        adapter_rank: int = 8, adapter_scaling: float = 16.0) -> "TinyBackend":
        directory = Path(directory)
        meta = json.loads((directory / "backend.json").read_text(encoding="utf-8"))
        backend = cls(
            d_model=meta["d_model"],
            n_heads=meta["n_heads"],
            n_layers=meta["n_layers"],
            d_ff=meta["d_ff"],
            max_len=meta["max_len"],
        )
        backend.tokenizer = WordTokenizer(meta["vocab"])
        backend.init_model(meta.get("init_seed", 0), adapter_rank, adapter_scaling)
        state = torch.load(directory / "model.pt", map_location=backend.device)
        backend.model.load_state_dict(state)
        backend.optimizer_name = meta.get("optimizer", "adam")
        return backend
