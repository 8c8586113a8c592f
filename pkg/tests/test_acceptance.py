"""Acceptance gate: nine end-to-end criteria, one pass/fail line each.

Each test prints "ACCEPT <n> <name>: PASS" on success; a failure raises
before the line is printed, so the pytest -v output doubles as the
acceptance report. Criteria with runtime budgets assert wall time too.
"""

import json
import os
import time

import numpy as np
import pytest

from watune.config import ExperimentConfig, save_config
from watune.datagen import (
    DatasetConfig,
    IN_DISTRIBUTION_PROFILE,
    OOD_PROFILE,
    file_hash,
    generate_dataset,
    relabel,
    save_dataset,
    split,
)
from watune.domain import (
    ALL_SCENARIOS,
    AccessCategory,
    Action,
    AppType,
    Context,
    PerformanceMode,
    TimeOfDay,
)
from watune.evaluate import (
    ablate_peer_info,
    ablate_reward,
    cooperative_slice,
    evaluate,
    train_head,
)
from watune.measurement import LinkModelConfig, MeasurementVector, measure
from watune.policy import OraclePolicy, RulePolicy, FixedPolicy, make_baseline, rule_decide
from watune.reward import RewardConfig, energy_score, latency_score, objective, soft_labels
from watune.train import (
    HeadModel,
    TrainConfig,
    _forward_cached,
    backward,
    forward,
    grad_ce,
    grad_dpo,
    grad_kl,
    init_head,
    loss_ce,
    loss_dpo,
    loss_kl,
    softmax,
)

pytestmark = pytest.mark.acceptance


def _ok(n, name):
    print(f"\nACCEPT {n} {name}: PASS")


# --- shared full-scale dataset (criteria 2 and 6) -------------------------

@pytest.fixture(scope="module")
def full_dataset():
    return generate_dataset(IN_DISTRIBUTION_PROFILE, LinkModelConfig(),
                            DatasetConfig(), RewardConfig())


# --- 1. reward golden values + brute-force equivalence ---------------------

def test_accept_1_reward_golden_values():
    t0 = time.monotonic()
    assert latency_score(AppType.voiceChat, 5.0) == 90.0
    assert latency_score(AppType.textMessage, 200.0) == 0.0
    assert abs(energy_score(50.0, 3.24) - 15.4321) < 1e-4

    from watune.reward import DEFAULT_TOLERANCE_MS

    rng = np.random.default_rng(101)
    cfg = RewardConfig()
    for _ in range(10_000):
        apps = tuple(AppType(i) for i in rng.integers(0, 8, size=int(rng.integers(1, 11))))
        sub = None if rng.random() < 0.25 else float(rng.uniform(5, 100))
        ctx = Context(TimeOfDay(int(rng.integers(0, 4))), float(rng.uniform(5, 100)), sub, apps)
        mv = MeasurementVector(latency_ms=rng.uniform(0, 500, 8),
                               energy_pct_h=rng.uniform(0.2, 8.0, 8))
        got = objective(ctx, mv, cfg).objective
        batts = [ctx.publisher_battery] + ([] if sub is None else [sub])
        ref = np.empty(8)
        for a in range(8):
            lat = 0.0
            for app in apps:
                lat += max(100.0 - 100.0 * mv.latency_ms[a] / DEFAULT_TOLERANCE_MS[app], 0.0)
            pen = 0.0
            for b in batts:
                pen += mv.energy_pct_h[a] / b
            ref[a] = cfg.w_l * lat / len(apps) - cfg.w_p * pen / len(batts)
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)
    assert time.monotonic() - t0 < 5.0
    _ok(1, "reward golden values + 1e4-sample brute-force equivalence")


# --- 2. oracle dominance ----------------------------------------------------

def test_accept_2_oracle_dominance(full_dataset):
    t0 = time.monotonic()
    assert len(full_dataset) == 32_000
    oracle = OraclePolicy()
    others = [RulePolicy(), FixedPolicy("rt_iv"), FixedPolicy("bulk_bg")]
    for s in full_dataset:
        best = s.rewards.objective[oracle.decide(s.context, s.rewards).index]
        assert best == s.rewards.objective.max()
        for p in others:
            assert best >= s.rewards.objective[p.decide(s.context, s.rewards).index]
    assert time.monotonic() - t0 < 30.0
    _ok(2, "oracle dominance on every sample of a full 32k dataset")


# --- 3. rule baseline determinism -------------------------------------------

def test_accept_3_rule_determinism():
    h1 = [AppType.voiceChat] * 6 + [AppType.textMessage] * 4
    assert rule_decide(h1) == Action(PerformanceMode.realtime, AccessCategory.interactiveVoice)
    assert rule_decide([AppType.firmwareUpdate] * 10) == Action(
        PerformanceMode.bulk, AccessCategory.background)
    tie = [AppType.videoCall] * 5 + [AppType.sensorSync] * 5
    assert rule_decide(tie).index == 2

    rng = np.random.default_rng(33)
    for _ in range(1000):
        hist = [AppType(i) for i in rng.integers(0, 8, size=int(rng.integers(1, 11)))]
        base = rule_decide(hist)
        shuffled = list(hist)
        rng.shuffle(shuffled)
        assert rule_decide(shuffled) == base
    _ok(3, "rule baseline examples (incl. tie) + 1e3 permutation fuzz")


# --- 4. gradient checks -------------------------------------------------------

def _flatten(model):
    return np.concatenate([p.reshape(-1) for p in model.weights + model.biases])

def _unflatten(model, vec):
    out = model.copy()
    off = 0
    params = out.weights + out.biases
    for p in params:
        p[...] = vec[off:off + p.size].reshape(p.shape)
        off += p.size
    return out


def _check_loss_grads(loss_name, layers, rng, n_coords=110, eps=1e-4, rtol=1e-4):
    """Analytic parameter gradient vs central differences at random coords.

    Coordinates where the finite-difference step crosses a rectifier kink
    (pre-activation within 1e-3 of zero) are redrawn: the loss is not
    differentiable there and both estimates are meaningless.
    """
    model = init_head(layers, hidden=8, seed=int(rng.integers(1 << 30)))
    for w in model.weights:
        w += rng.normal(0, 0.05, w.shape)
    x = rng.normal(0, 1, model.weights[0].shape[1])
    y = int(rng.integers(8))
    soft = softmax(rng.normal(size=8))
    y_l = (y + 1 + int(rng.integers(7))) % 8
    ref = init_head(layers, hidden=8, seed=int(rng.integers(1 << 30)))
    x_l = rng.normal(0, 1, model.weights[0].shape[1])

    def loss_of(m):
        logits, _, _ = _forward_cached(m, x)
        if loss_name == "ce":
            return loss_ce(logits[0], y)
        if loss_name == "kl":
            return loss_kl(logits[0], soft)
        logits_l = forward(m, x_l)
        return loss_dpo(logits[0], logits_l, forward(ref, x), forward(ref, x_l), y, y_l, 0.1)

    # analytic full gradient via backprop
    logits, acts, pre = _forward_cached(model, x)
    if loss_name == "ce":
        d = grad_ce(logits[0], y)
        gw, gb = backward(model, acts, pre, d[None, :])
    elif loss_name == "kl":
        d = grad_kl(logits[0], soft)
        gw, gb = backward(model, acts, pre, d[None, :])
    else:
        logits_l, acts_l, pre_l = _forward_cached(model, x_l)
        d_w, d_l = grad_dpo(logits[0], logits_l[0], forward(ref, x), forward(ref, x_l), y, y_l, 0.1)
        gw, gb = backward(model, acts, pre, d_w[None, :])
        gw2, gb2 = backward(model, acts_l, pre_l, d_l[None, :])
        gw = [a + b for a, b in zip(gw, gw2)]
        gb = [a + b for a, b in zip(gb, gb2)]
    grad = np.concatenate([g.reshape(-1) for g in gw + gb])

    theta = _flatten(model)
    checked = 0
    attempts = 0
    while checked < n_coords:
        attempts += 1
        assert attempts < 50 * n_coords, "could not find enough smooth coordinates"
        i = int(rng.integers(theta.size))
        tp, tm = theta.copy(), theta.copy()
        tp[i] += eps
        tm[i] -= eps
        mp, mm = _unflatten(model, tp), _unflatten(model, tm)
        # rectifier-kink guard: skip if any hidden pre-activation is near zero
        near_kink = False
        for m in (model, mp, mm):
            _, _, pres = _forward_cached(m, x)
            pres_all = pres[:-1]
            if loss_name == "dpo":
                _, _, pres_l = _forward_cached(m, x_l)
                pres_all = pres_all + pres_l[:-1]
            if any(np.any(np.abs(z) < 1e-3) for z in pres_all):
                near_kink = True
                break
        if near_kink:
            continue
        fd = (loss_of(mp) - loss_of(mm)) / (2 * eps)
        scale = max(abs(grad[i]), abs(fd), 1e-6)
        assert abs(grad[i] - fd) / scale < rtol, (
            f"{loss_name} {layers}-layer grad mismatch at coord {i}: {grad[i]} vs {fd}")
        checked += 1


def test_accept_4_gradient_checks():
    t0 = time.monotonic()
    rng = np.random.default_rng(77)
    for loss_name in ("ce", "kl", "dpo"):
        for layers in (1, 2, 3):
            _check_loss_grads(loss_name, layers, rng)
    assert time.monotonic() - t0 < 60.0
    _ok(4, "CE/KL/DPO analytic vs finite-difference gradients, 1/2/3 layers")


# --- 5. loss identities --------------------------------------------------------

def test_accept_5_loss_identities():
    rng = np.random.default_rng(55)
    logits = rng.normal(size=8)
    assert abs(loss_kl(logits, softmax(logits))) < 1e-9
    for y in range(8):
        onehot = np.zeros(8)
        onehot[y] = 1.0
        assert loss_ce(logits, y) == loss_kl(logits, onehot)
    assert abs(loss_ce(np.zeros(8), 5) - np.log(8)) < 1e-9
    other = rng.normal(size=8)
    assert abs(loss_dpo(logits, other, logits, other, 1, 4, 0.1) - np.log(2)) < 1e-9
    _ok(5, "loss identities (KL=0 at match, CE==KL(onehot), ln8, ln2)")


# --- 6. dataset statistics -------------------------------------------------------

def test_accept_6_dataset_statistics(full_dataset, tmp_path):
    assert len(full_dataset) == 32_000

    from collections import Counter
    scen_counts = Counter(s.scenario for s in full_dataset)
    assert set(scen_counts) == set(ALL_SCENARIOS)
    assert set(scen_counts.values()) == {2000}

    rng = np.random.default_rng([1, 9973])
    train_set, test_set = split(full_dataset, 0.8, rng)
    assert abs(len(train_set) - 25_600) <= 16
    assert abs(len(test_set) - 6_400) <= 16
    for part, frac in ((train_set, 0.8), (test_set, 0.2)):
        per = Counter(s.scenario for s in part)
        for scen in ALL_SCENARIOS:
            assert abs(per[scen] - 2000 * frac) <= 1

    # per-time-of-day app frequencies within +/-0.01 of the generating profile
    by_time: dict = {t: Counter() for t in TimeOfDay}
    for s in full_dataset:
        by_time[s.context.time][s.context.app_history[-1]] += 1
    for t in TimeOfDay:
        total = sum(by_time[t].values())
        profile = IN_DISTRIBUTION_PROFILE[t]
        for app in AppType:
            expected = profile.get(app, 0.0)
            got = by_time[t].get(app, 0) / total
            assert abs(got - expected) <= 0.01, (t.name, app.name, got, expected)

    # identical seed => identical file hash
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(p1, full_dataset[:2000])
    again = generate_dataset(IN_DISTRIBUTION_PROFILE, LinkModelConfig(),
                             DatasetConfig(), RewardConfig())
    save_dataset(p2, again[:2000])
    assert file_hash(p1) == file_hash(p2)
    _ok(6, "32k samples, 16 equal blocks, stratified 80/20, profile freqs, hash")


# --- 7. directional findings, 5 seeds, majority ----------------------------------

def test_accept_7_directional_findings():
    t0 = time.monotonic()
    seeds = (1, 2, 3, 4, 5)
    wins = {"kl_ge_ce": 0, "kl_ge_rule_agg": 0, "kl_ge_rule_ood": 0,
            "coop_energy_lower_with_peer": 0, "ctx_ge_naive": 0}
    for seed in seeds:
        dcfg = DatasetConfig(seed=seed)
        data = generate_dataset(IN_DISTRIBUTION_PROFILE, LinkModelConfig(), dcfg, RewardConfig())
        rng = np.random.default_rng([seed, 9973])
        train_set, test_set = split(data, dcfg.split_fraction, rng)
        ood = generate_dataset(OOD_PROFILE, LinkModelConfig(), dcfg, RewardConfig(), stream=1)

        base = dict(epochs=5, seed=seed, layers=3)
        kl_policy, _, _ = train_head(train_set, TrainConfig(loss="kl", **base))
        ce_policy, _, _ = train_head(train_set, TrainConfig(loss="ce", **base))

        kl_agg = evaluate(kl_policy, test_set).objective_score
        if kl_agg >= evaluate(ce_policy, test_set).objective_score:
            wins["kl_ge_ce"] += 1

        rule = RulePolicy()
        if kl_agg >= evaluate(rule, test_set).objective_score:
            wins["kl_ge_rule_agg"] += 1
        if evaluate(kl_policy, ood).objective_score >= evaluate(rule, ood).objective_score:
            wins["kl_ge_rule_ood"] += 1

        peer = ablate_peer_info(train_set, test_set, TrainConfig(loss="kl", **base))
        if peer["delta"]["cooperative"]["raw_energy_pct_h"] < 0:
            wins["coop_energy_lower_with_peer"] += 1

        rew = ablate_reward(train_set, test_set, TrainConfig(loss="kl", **base), RewardConfig())
        if rew["context_aware"].objective_score >= rew["naive"].objective_score:
            wins["ctx_ge_naive"] += 1

    for key, count in wins.items():
        assert count >= 3, f"directional finding {key}: only {count}/5 seeds"
    assert time.monotonic() - t0 < 600.0
    _ok(7, f"directional findings over 5 seeds (majority): {wins}")


# --- 8. single-objective sanity -----------------------------------------------------

def test_accept_8_single_objective_sanity():
    # latency-only (w_P = 0): oracle == latency-argmax on every sample
    dcfg = DatasetConfig(logs_per_session=250, seed=1)
    lat_cfg = RewardConfig(w_l=0.1, w_p=0.0)
    data = generate_dataset(IN_DISTRIBUTION_PROFILE, LinkModelConfig(), dcfg, lat_cfg)
    for s in data:
        a = OraclePolicy().decide(s.context, s.rewards).index
        assert a == int(np.argmin(s.measurements.latency_ms))

    # energy-only (w_L = 0), noiseless: oracle == (bulk, background) everywhere
    quiet = LinkModelConfig(latency_noise_sigma=0.0, energy_noise_sigma=0.0)
    eng_cfg = RewardConfig(w_l=0.0, w_p=1.0)
    data = generate_dataset(IN_DISTRIBUTION_PROFILE, quiet, dcfg, eng_cfg)
    for s in data:
        assert OraclePolicy().decide(s.context, s.rewards).index == 5

    # fix-rt-iv within 1% of the oracle under the noiseless latency-only model
    data = generate_dataset(IN_DISTRIBUTION_PROFILE, quiet, dcfg, lat_cfg)
    oracle_rep = evaluate(OraclePolicy(), data)
    fixed_rep = evaluate(FixedPolicy("rt_iv"), data)
    assert fixed_rep.latency_score >= 0.99 * oracle_rep.latency_score
    _ok(8, "single-objective reductions (latency argmax, bulk/bg, fix-rt-iv)")


# --- 9. end-to-end determinism --------------------------------------------------------

def test_accept_9_compare_determinism(tmp_path):
    from watune.cli import main

    cfg = ExperimentConfig(seed=1)
    cfg.dataset.logs_per_session = 80
    cfg.train.epochs = 1
    cfg.train.layers = 1
    cfg_path = tmp_path / "config.json"
    save_config(cfg_path, cfg)

    hashes = []
    for run in ("one", "two"):
        out = tmp_path / run
        assert main(["--config", str(cfg_path), "compare", "--out", str(out)]) == 0
        hashes.append({f: file_hash(out / f) for f in sorted(os.listdir(out))})
    assert hashes[0] == hashes[1]
    _ok(9, "compare twice with same seed: byte-identical tables + checkpoints")
