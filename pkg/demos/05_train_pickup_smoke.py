"""A miniature PPO run on the pickup skill: collect, update, log, and
evaluate. Smoke scale only; see README for the full desk-scale recipe.

Run:  python3 demos/05_train_pickup_smoke.py
"""
import numpy as np

from boxloco.policy import load_checkpoint
from boxloco.ppo import TrainConfig, evaluate, train
from boxloco.world import SkillId

config = TrainConfig(
    skill=SkillId.PickUp,
    workers=1,
    iterations=4,
    steps_per_iteration=2048,
    seed=7,
    out_dir="runs/demo_pickup_smoke",
    checkpoint_every=2,
    pickup_ranges={"mass": (1.0, 3.0), "dims": (0.25, 0.35),
                   "y": (-0.1, 0.1), "z": (0.8, 0.8)},
)

summary = train(config, progress_callback=lambda it, steps, sr, mr: print(
    f"  iter {it}: {steps} steps, mean episode reward {mr:.1f}, success {sr:.0%}"))
print("\nartifacts:")
print("  reward curve:", summary["csv"])
print("  checkpoint:  ", summary["checkpoint"])

with open(summary["csv"]) as fh:
    header, *rows = fh.read().strip().splitlines()
print("\nreward-curve columns:", header.split(",")[:8], "...")
print("last row:", rows[-1].split(",")[:8], "...")

params = load_checkpoint(summary["checkpoint"])
report = evaluate(params, SkillId.PickUp, n_episodes=10, seed=1, config=config)
print("\nevaluation over 10 episodes:")
print("  success rate:", report.success_rate)
print("  termination reasons:", report.termination_reasons)
