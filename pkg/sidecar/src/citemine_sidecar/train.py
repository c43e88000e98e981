"""Contrastive fine-tuning over mined triplet JSONL.

Loss per triplet is the multiple-negatives ranking form: softmax
cross-entropy of the positive against that triplet's own negatives, on
query-document dot products of unit embeddings. Runs exactly `steps`
optimizer steps over batches of triplets (cycling the file as needed),
logs one loss per step, and writes a checkpoint at the end.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import asdict
from pathlib import Path

import torch
from torch import nn

from .config import TrainConfig
from .models import load_embedder

TRIPLET_FIELDS = ("query", "positive_pmid", "positive", "negative_pmids", "negatives")


def load_triplets(path) -> list[dict]:
    """Parse and validate the miner's triplet JSONL; abort on any bad line."""
    triplets = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {lineno}: invalid JSON: {exc.msg}")
            for field in TRIPLET_FIELDS:
                if field not in obj:
                    raise ValueError(f"line {lineno}: missing field {field!r}")
            if not obj["negatives"]:
                raise ValueError(f"line {lineno}: empty negatives")
            triplets.append(obj)
    if not triplets:
        raise ValueError(f"no triplets in {path}")
    return triplets


def mnr_loss_torch(query: torch.Tensor, positive: torch.Tensor,
                   negatives: torch.Tensor) -> torch.Tensor:
    """-log softmax of the positive dot among [positive, negatives] dots."""
    pos_logit = (query * positive).sum().unsqueeze(0)
    neg_logits = negatives @ query
    logits = torch.cat([pos_logit, neg_logits])
    return torch.logsumexp(logits, dim=0) - logits[0]


def batch_loss(model: nn.Module, batch: list[dict]) -> torch.Tensor:
    losses = []
    for triplet in batch:
        embs = model([triplet["query"], triplet["positive"], *triplet["negatives"]])
        losses.append(mnr_loss_torch(embs[0], embs[1], embs[2:]))
    return torch.stack(losses).mean()


def finetune(triplets_path, cfg: TrainConfig) -> list[float]:
    """Run the fine-tune; returns the per-step loss log."""
    triplets = load_triplets(triplets_path)
    torch.manual_seed(cfg.seed)
    model = load_embedder(cfg.base_model_id)
    if not isinstance(model, nn.Module):
        raise ValueError(
            f"model {cfg.base_model_id!r} is not trainable; "
            "use a builtin:bow:* id or a transformer checkpoint")
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.lr)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    losses: list[float] = []
    with open(out_dir / "loss_log.jsonl", "w", encoding="utf-8") as log:
        for step in range(cfg.steps):
            lo = (step * cfg.batch_size) % len(triplets)
            batch = [triplets[(lo + i) % len(triplets)]
                     for i in range(cfg.batch_size)]
            model.train()
            optimizer.zero_grad()
            loss = batch_loss(model, batch)
            loss.backward()
            optimizer.step()
            value = float(loss.item())
            losses.append(value)
            log.write(json.dumps({"step": step + 1, "loss": value}) + "\n")

    torch.save(model.state_dict(), out_dir / "checkpoint.pt")
    (out_dir / "train_config.json").write_text(
        json.dumps(asdict(cfg), indent=2) + "\n", encoding="utf-8")
    return losses


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--triplets", required=True, help="triplet JSONL from the miner")
    ap.add_argument("--base-model", default=TrainConfig.base_model_id,
                    help="trainable model id (default: %(default)s)")
    ap.add_argument("--steps", type=int, default=TrainConfig.steps,
                    help="optimizer steps (default: %(default)s)")
    ap.add_argument("--batch-size", type=int, default=TrainConfig.batch_size,
                    help="triplets per step (default: %(default)s)")
    ap.add_argument("--output-dir", default=TrainConfig.output_dir)
    ap.add_argument("--lr", type=float, default=TrainConfig.lr,
                    help="AdamW learning rate (default: %(default)s)")
    ap.add_argument("--seed", type=int, default=TrainConfig.seed)
    args = ap.parse_args(argv)
    cfg = TrainConfig(base_model_id=args.base_model, steps=args.steps,
                      batch_size=args.batch_size, output_dir=args.output_dir,
                      lr=args.lr, seed=args.seed)
    try:
        losses = finetune(args.triplets, cfg)
    except ValueError as exc:
        print(f"error: {exc}")
        return 1
    print(f"steps\t{len(losses)}")
    print(f"first_loss\t{losses[0]:.6f}")
    print(f"last_loss\t{losses[-1]:.6f}")
    print(f"checkpoint\t{Path(cfg.output_dir) / 'checkpoint.pt'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
