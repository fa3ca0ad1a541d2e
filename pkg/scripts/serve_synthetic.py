#!/usr/bin/env python3
"""Serve the synthetic backend over the remote wire protocol.

Starts an HTTP server exposing /judge, /speculate, and /agentic backed by a
seeded SyntheticBackend, so the remote adapter and the measured scheduling
mode can be exercised end to end without any real model:

    python scripts/serve_synthetic.py --port 8723 --seed 5 &
    spec-funnel run --endpoint http://127.0.0.1:8723 \
        --set schedule.mode=measured --set workload.n_queries=50
"""

import argparse
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from spec_funnel.backends.base import Query
from spec_funnel.backends.synthetic import SyntheticBackend, SyntheticConfig


def make_handler(backend: SyntheticBackend):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):  # noqa: N802 (http.server API)
            length = int(self.headers.get("Content-Length", 0))
            request = json.loads(self.rfile.read(length)) if length else {}
            query = Query(
                id=str(request.get("id", "q0")),
                image_ref=str(request.get("image_ref", "")),
                question=str(request.get("question", "")),
            )
            if self.path == "/judge":
                output = backend.judge(query)
                body = {"g": output.g, "latency_s": output.latency_s}
            elif self.path == "/speculate":
                limit = int(request.get("top_logprobs", 64))
                draft = backend.speculate(query)
                body = {
                    "answer": draft.answer,
                    "tokens": [
                        {
                            "text": draft.answer if i == 0 else "",
                            "top_logprobs": [
                                {"token": f"tok{j}", "logprob": float(v)}
                                for j, v in enumerate(token.values[:limit])
                            ],
                        }
                        for i, token in enumerate(draft.token_logits)
                    ],
                    "latency_s": draft.latency_s,
                }
            elif self.path == "/agentic":
                output = backend.agentic_run(query)
                body = {
                    "answer": output.answer,
                    "depth": output.depth,
                    "step_costs": [[llm, tool] for llm, tool in output.step_costs],
                    "latency_s": output.latency_s,
                }
            else:
                self.send_response(404)
                self.end_headers()
                return
            payload = json.dumps(body).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    return Handler


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8723)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backend = SyntheticBackend(SyntheticConfig(seed=args.seed))
    server = ThreadingHTTPServer((args.host, args.port), make_handler(backend))
    print(f"serving synthetic backend on http://{args.host}:{server.server_port}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


if __name__ == "__main__":
    main()
