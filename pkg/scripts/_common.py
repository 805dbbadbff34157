"""Shared scenario setup for the experiment scripts."""
import argparse
import time

from propml.synth import ScenarioConfig, generate_scenario, scenario_features


def base_parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--area", type=float, default=1200.0)
    p.add_argument("--ue-density", type=float, default=6000.0)
    return p


def task(args):
    t0 = time.perf_counter()
    scn = generate_scenario(ScenarioConfig(area=args.area, ue_density=args.ue_density), seed=args.seed)
    m = scenario_features(scn)
    print(f"scenario seed {args.seed}: {len(scn.traces)} traces, {len(m)} bins ({time.perf_counter() - t0:.1f} s)")
    return scn, m
