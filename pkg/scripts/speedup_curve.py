#!/usr/bin/env python3
"""Print the simulated speedup curve over batch size for a quota workload.

Example:
    python scripts/speedup_curve.py --beta 0.8 --alpha 0.71 --batch-sizes 1 8 64 256 1024
"""

import argparse

from spec_funnel.backends.synthetic import SyntheticBackend, SyntheticConfig, Uniform, make_quota_workload
from spec_funnel.funnel import ScheduleConfig, serve_batch, speedup_model
from spec_funnel.gate import GateConfig


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--beta", type=float, default=0.8)
    parser.add_argument("--alpha", type=float, default=0.71)
    parser.add_argument("--batch-sizes", type=int, nargs="+", default=[1, 8, 64, 256, 1024])
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    config = SyntheticConfig(
        seed=args.seed,
        judge_cost_s=0.02,
        speculate_cost_s=0.03,
        depth_weights={3: 1.0},
        tool_cost=Uniform(0.65, 0.65),
    )
    backend = SyntheticBackend(config)
    gate_config = GateConfig(tau=0.9)
    print("batch_size,simulated_speedup,analytic_speedup")
    for batch_size in args.batch_sizes:
        queries = make_quota_workload(config, batch_size, args.beta, args.alpha)
        _, stats = serve_batch(
            queries,
            gate_config,
            ScheduleConfig(frontend_workers=batch_size, agentic_workers=1),
            backend,
        )
        analytic = speedup_model(stats.beta_hat, stats.alpha_hat)
        print(f"{batch_size},{stats.speedup:.4f},{analytic:.4f}")


if __name__ == "__main__":
    main()
