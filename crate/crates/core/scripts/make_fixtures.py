#!/usr/bin/env python3
"""Writes the scripted agent responses used by `evostage replay` and the
candidate sources used by the sandbox tests.

Usage: python3 scripts/make_fixtures.py [fixtures-dir]

The output is a pure function of this file, so rerunning it is a no-op.
"""

import shutil
import sys
from pathlib import Path

ROOT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "fixtures"

LR_SIG = ("def adjust_learning_rate(step_num, log_objective, log_objective_prev, overflow, "
          "log_lambda, learning_rate_prev, log_gradient_norm):")
STEPS_SIG = "def optimization_steps(subproblem_index, overflow, log_lambda):"
UTIL_SIG = "def utility(stage_index, iteration, best_f, mu, sigma):"


def write(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def fenced(code, thought=None):
    head = "{%s}\n\n" % thought if thought else ""
    return "%s```python\n%s\n```\n" % (head, code.rstrip())


def one_shot(stages, thought=None):
    code = "\n".join("# --- stage %d ---\n%s" % (i, s.rstrip()) for i, s in enumerate(stages))
    return fenced(code, thought)


def coordinator(stage, focus):
    return ("Reflection: stage %d follows the metrics reported so far; %s.\n"
            "Goal: %s" % (stage, focus[0], focus[1]))


# ---------------------------------------------------------------- placement

def lr_fragment(base, decay, floor):
    return (f"{LR_SIG}\n"
            f"    lr = {base} * ({decay} ** (step_num / 100.0))\n"
            f"    if log_objective > log_objective_prev + 0.05:\n"
            f"        lr = lr * 0.9\n"
            f"    return max(lr, {floor})\n")


def steps_fragment(high, low, threshold):
    return (f"{STEPS_SIG}\n"
            f"    if overflow > {threshold}:\n"
            f"        return {high}\n"
            f"    return {low}\n")


# (base, decay, floor) per stage for the learning rate, and
# (high, low, threshold) per stage for the step count.
GP_DESIGNS = [
    ([(0.5, 1.0, 0.5)] * 4, [(10, 10, 0.5)] * 4),
    ([(0.6, 0.99, 0.45), (0.6, 0.99, 0.45), (0.55, 0.99, 0.45), (0.5, 0.99, 0.45)], [(12, 8, 0.4)] * 4),
    ([(0.8, 1.0, 0.5)] * 4, [(5, 5, 0.3)] * 4),
    ([(0.7, 0.98, 0.5), (0.65, 0.98, 0.5), (0.6, 0.98, 0.5), (0.55, 0.98, 0.5)], [(8, 12, 0.35)] * 4),
    ([(0.1, 1.0, 0.1)] * 4, [(10, 10, 0.5)] * 4),                 # too timid: misses the target
    ([(0.55, 1.0, 0.5), (0.6, 1.0, 0.5), (0.6, 1.0, 0.5), (0.5, 1.0, 0.5)], [(10, 6, 0.45)] * 4),
    ([(0.9, 0.97, 0.5)] * 4, [(6, 10, 0.5)] * 4),
    ([(0.5, 1.0, 0.5)] * 4, [(20, 8, 0.3)] * 4),
]

GP_FOCUS = [
    ("overflow is still far above target", "Spread cells quickly with a large step while the penalty is weak."),
    ("wirelength grew while overflow fell", "Keep the rate high but shorten subproblems once overflow drops."),
    ("the penalty now dominates", "Hold the rate steady so cells settle without oscillation."),
    ("overflow is close to target", "Finish gently and stop as soon as the target is met."),
]


def gp_fragments(design, stage):
    lrs, steps = design
    return lr_fragment(*lrs[stage]), steps_fragment(*steps[stage])


def gp_fixtures(out):
    m, g_count, k = 5, 5, 4
    comps = ["learning_rate", "optimization_steps"]
    write(out / "config.toml",
          "profile = \"gp\"\nseed = 7\n\n[sandbox]\ncall_timeout_ms = 5000\n")
    for g in range(g_count + 1):
        for s in range(k):
            write(out / "coordinator" / "coordinator" / f"g{g}_s{s}_a0.txt", coordinator(s, GP_FOCUS[s]))
    index = 0
    for g in range(g_count + 1):
        for o in range(m):
            design = GP_DESIGNS[(g * 3 + o) % len(GP_DESIGNS)]
            op = "stagewise" if g == 0 else ["stagewise", "global_explore", "global_enhance"][index % 3]
            if g > 0:
                index += 1
            if op == "stagewise":
                for s in range(k):
                    for comp, frag in zip(comps, gp_fragments(design, s)):
                        tid = "coder_initial" if s == 0 else "coder_stage"
                        write(out / f"coder-{comp}" / tid / f"g{g}_o{o}_s{s}_a0.txt", fenced(frag))
            else:
                for ci, comp in enumerate(comps):
                    stages = [gp_fragments(design, s)[ci] for s in range(k)]
                    write(out / f"coder-{comp}" / op / f"g{g}_o{o}_s0_a0.txt", one_shot(stages))
    # A malformed reply that is retried, a syntax error and a NaN schedule.
    bad = out / "coder-learning_rate" / "coder_initial" / "g2_o1_s0_a0.txt"
    good = bad.read_text()
    write(bad, "I would use a decaying schedule here.\n")
    write(bad.with_name("g2_o1_s0_a1.txt"), good)
    write(out / "coder-learning_rate" / "global_explore" / "g1_o1_s0_a0.txt",
          one_shot([f"{LR_SIG}\n    return 0.5 +\n"] * k))
    write(out / "coder-learning_rate" / "global_enhance" / "g2_o0_s0_a0.txt",
          one_shot([f"{LR_SIG}\n    return float('nan')\n"] * k))


# ---------------------------------------------------------------- bo

EI_HELPERS = (
    "import math\n"
    "\n"
    "def _ei(m, s, best):\n"
    "    if s <= 0.0:\n"
    "        return max(best - m, 0.0)\n"
    "    z = (best - m) / s\n"
    "    cdf = 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))\n"
    "    pdf = math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)\n"
    "    return (best - m) * cdf + s * pdf\n"
)


def bo_sigma_stage():
    return (f"{EI_HELPERS}\n{UTIL_SIG}\n"
            "    # explore: pure posterior uncertainty\n"
            "    return list(sigma)\n")


def bo_mix_stage(w_ei, kappa):
    return (f"{EI_HELPERS}\n{UTIL_SIG}\n"
            f"    return [{w_ei} * _ei(m, s, best_f) + {round(1.0 - w_ei, 3)} * (-m + {kappa} * s)\n"
            "            for m, s in zip(mu, sigma)]\n")


def bo_ucb_stage(kappa):
    return f"{UTIL_SIG}\n    return [-m + {kappa} * s for m, s in zip(mu, sigma)]\n"


BO_DESIGNS = [
    [bo_sigma_stage(), bo_mix_stage(0.4, 2.0), bo_mix_stage(0.4, 2.0)],
    [bo_sigma_stage(), bo_mix_stage(0.6, 1.5), bo_mix_stage(0.8, 1.0)],
    [bo_ucb_stage(3.0), bo_ucb_stage(2.0), bo_mix_stage(0.4, 1.0)],
    [bo_sigma_stage(), bo_ucb_stage(2.5), bo_mix_stage(0.5, 2.0)],
]

BO_THOUGHTS = [
    "Explore with the posterior spread first, then mix EI and UCB.",
    "Shift weight from UCB to EI as the stages progress.",
    "Anneal the UCB bonus before a final EI-weighted mix.",
    "Pure uncertainty sampling, then optimistic UCB, then a balanced mix.",
]

BO_FOCUS = [
    ("only the initial design is known", "Cover the space where the model is least certain."),
    ("the incumbent improved during exploration", "Balance improvement and uncertainty around the incumbent."),
    ("few samples remain", "Exploit the incumbent region with an improvement-driven utility."),
]


def bo_fixtures(out):
    m, g_count, k = 3, 3, 3
    write(out / "config.toml", "profile = \"bo\"\nseed = 3\n\n[bo]\nobjective = \"ackley2d\"\ntotal_samples = 15\n")
    for g in range(g_count + 1):
        for s in range(k):
            write(out / "coordinator" / "coordinator" / f"g{g}_s{s}_a0.txt", coordinator(s, BO_FOCUS[s]))
    index = 0
    for g in range(g_count + 1):
        for o in range(m):
            d = (g * 2 + o) % len(BO_DESIGNS)
            design, thought = BO_DESIGNS[d], BO_THOUGHTS[d]
            op = "stagewise" if g == 0 else ["stagewise", "global_explore", "global_enhance"][index % 3]
            if g > 0:
                index += 1
            if op == "stagewise":
                for s in range(k):
                    tid = "coder_initial" if s == 0 else "coder_stage"
                    write(out / "coder-acquisition" / tid / f"g{g}_o{o}_s{s}_a0.txt", fenced(design[s], thought))
            else:
                write(out / "coder-acquisition" / op / f"g{g}_o{o}_s0_a0.txt", one_shot(design, thought))


# ---------------------------------------------------------------- candidates

def candidate_fixtures(out):
    lr = lambda body: f"{LR_SIG}\n{body}"
    write(out / "constant_lr.py", lr("    return 0.5\n"))
    write(out / "nan_lr.py", lr("    return float('nan')\n"))
    write(out / "timeout_lr.py", lr("    while True:\n        pass\n"))
    write(out / "syntax_error_lr.py", lr("    return 0.5 +\n"))
    write(out / "target_miss_lr.py", lr("    return 0.01\n"))
    write(out / "fixed_steps.py", f"{STEPS_SIG}\n    return 10\n")
    batch = out / "batch"
    write(batch / "legal_0.py", lr("    return 0.5\n"))
    write(batch / "legal_1.py", lr("    return 0.6\n"))
    write(batch / "legal_2.py", lr("    return 0.8 * (0.99 ** (step_num / 100.0))\n"))
    write(batch / "legal_3.py", lr("    return 0.55 if overflow > 0.3 else 0.5\n"))
    write(batch / "syntax_error.py", lr("    return (0.5\n"))


def main():
    replay = ROOT / "replay"
    if replay.exists():
        shutil.rmtree(replay)
    gp_fixtures(replay / "gp")
    bo_fixtures(replay / "bo")
    cand = ROOT / "candidates"
    if cand.exists():
        shutil.rmtree(cand)
    candidate_fixtures(cand)


if __name__ == "__main__":
    main()
