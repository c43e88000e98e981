"""HTTP sidecar: document/query embedding and synthetic-query generation.

POST /embed          {"texts": [...]} -> {"dim": d, "vectors": [[...], ...]}
POST /generate_query {"text": "..."}  -> {"query": "..."}

Responses are deterministic (eval-mode inference, greedy decoding).
Malformed request bodies get 400; requests arriving while the models are
still loading get 503.
"""

from __future__ import annotations

import argparse
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import SidecarConfig
from .models import load_embedder, load_query_generator


class EmbedRequest(BaseModel):
    texts: list[str]


class QueryRequest(BaseModel):
    text: str


class ModelHolder:
    def __init__(self, config: SidecarConfig):
        self.config = config
        self.embedder = None
        self.query_generator = None
        self._lock = threading.Lock()

    @property
    def ready(self) -> bool:
        return self.embedder is not None and self.query_generator is not None

    def load(self) -> None:
        with self._lock:
            if not self.ready:
                self.embedder = load_embedder(self.config.embed_model_id)
                self.query_generator = load_query_generator(self.config.query_model_id)

    def load_in_background(self) -> None:
        threading.Thread(target=self.load, daemon=True).start()


def create_app(config: SidecarConfig | None = None, preload: bool = True) -> FastAPI:
    config = config or SidecarConfig()
    app = FastAPI(title="citemine-sidecar")
    holder = ModelHolder(config)
    app.state.models = holder
    if preload:
        holder.load()

    @app.exception_handler(RequestValidationError)
    async def malformed_body(_request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc.errors()[:1])})

    def unavailable():
        return JSONResponse(status_code=503,
                            content={"error": "models are still loading"})

    @app.get("/health")
    def health():
        return {"ready": holder.ready,
                "embed_model": config.embed_model_id,
                "query_model": config.query_model_id}

    @app.post("/embed")
    def embed(body: EmbedRequest):
        if not holder.ready:
            return unavailable()
        vectors: list[list[float]] = []
        for start in range(0, len(body.texts), config.batch_size):
            chunk = body.texts[start:start + config.batch_size]
            encoded = np.asarray(holder.embedder.encode(chunk), dtype=np.float32)
            vectors.extend(row.tolist() for row in encoded)
        return {"dim": holder.embedder.dim, "vectors": vectors}

    @app.post("/generate_query")
    def generate_query(body: QueryRequest):
        if not holder.ready:
            return unavailable()
        try:
            query = holder.query_generator.generate(body.text)
        except ValueError as exc:
            return JSONResponse(status_code=400, content={"error": str(exc)})
        return {"query": query}

    return app


def main(argv=None) -> int:
    import uvicorn

    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--embed-model", default=SidecarConfig.embed_model_id,
                    help="embedding checkpoint or builtin id (default: %(default)s)")
    ap.add_argument("--query-model", default=SidecarConfig.query_model_id,
                    help="query-generation checkpoint or builtin id "
                         "(default: %(default)s)")
    ap.add_argument("--port", type=int, default=SidecarConfig.port)
    ap.add_argument("--batch-size", type=int, default=SidecarConfig.batch_size)
    args = ap.parse_args(argv)
    config = SidecarConfig(embed_model_id=args.embed_model,
                           query_model_id=args.query_model,
                           port=args.port, batch_size=args.batch_size)
    app = create_app(config, preload=False)
    app.state.models.load_in_background()  # serve 503 until ready
    uvicorn.run(app, host="127.0.0.1", port=config.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
