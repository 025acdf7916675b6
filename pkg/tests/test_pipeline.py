from dataclasses import replace

import numpy as np
import pytest

from v2vlc.attention import v2v_attention
from v2vlc.channel import GLOBAL_LOSSY, IDEAL, ChannelConfig, apply_channel
from v2vlc.geometry import Scene
from v2vlc.numerics import Tensor
from v2vlc.pipeline import (
    AVEFUSE,
    ExperimentConfig,
    PipelineError,
    SceneGenParams,
    ave_fuse,
    evaluate,
    forward_pipeline,
    forward_tensors,
    format_report,
    generate_scenes,
    init_params,
    load_config,
    make_packs,
    save_config,
    train,
)

SMALL = SceneGenParams(n_scenes=6, channels=4, texture_channels=2, height=16, width=16, boxes=(3, 6))


def small_cfg(**kw):
    base = dict(
        train_scenes=SMALL, test_scenes=replace(SMALL, n_scenes=3), lcrn_widths=(4, 8), epochs=2,
        steps_per_epoch=3,
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def pack():
    return generate_scenes(SMALL, seed=0)


class TestGenerator:
    def test_deterministic(self, pack):
        again = generate_scenes(SMALL, seed=0)
        for sid, per in pack.features.items():
            for aid, f in per.items():
                assert np.array_equal(f, again.features[sid][aid])

    def test_neighbour_counts_and_range(self, pack):
        for sc in pack.scenes:
            assert 1 <= len(sc.cavs) <= 4
            for b in sc.gt_boxes:
                assert -140 <= b.x <= 140 and -40 <= b.y <= 40

    def test_invisible_box_leaves_no_signature(self):
        gp = replace(SMALL, sensor_noise=0.0, n_scenes=10)
        p = generate_scenes(gp, seed=1)
        for sc in p.scenes:
            seen = set().union(*p.visible[sc.scene_id].values())
            if len(seen) < len(sc.gt_boxes):
                # signature channels of every agent are blank wherever only unseen boxes sit
                for aid, f in p.features[sc.scene_id].items():
                    if not p.visible[sc.scene_id][aid]:
                        assert not f[gp.texture_channels :].any()

    def test_coverage_default_params(self):
        p = generate_scenes(replace(SceneGenParams(), n_scenes=200), seed=0)
        assert p.coverage() >= 0.95

    def test_no_single_agent_sees_everything(self, pack):
        partial = 0
        for sc in pack.scenes:
            n = len(sc.gt_boxes)
            partial += all(len(v) < n for v in pack.visible[sc.scene_id].values())
        assert partial > 0


class TestAveFuse:
    def test_identity_conv_single_feature(self):
        x = np.random.default_rng(0).standard_normal((3, 4, 4))
        params = {"avefuse.w": Tensor(np.eye(3).reshape(3, 3, 1, 1)), "avefuse.b": Tensor(np.zeros(3))}
        np.testing.assert_allclose(ave_fuse([Tensor(x)], params).data, x)
        np.testing.assert_allclose(ave_fuse([Tensor(x), Tensor(x)], params).data, x)

    def test_triple_mean(self):
        rng = np.random.default_rng(1)
        xs = [rng.standard_normal((2, 3, 3)) for _ in range(3)]
        params = {"avefuse.w": Tensor(np.eye(2).reshape(2, 2, 1, 1)), "avefuse.b": Tensor(np.zeros(2))}
        expected = np.zeros((2, 3, 3))
        for x in xs:
            expected += x
        np.testing.assert_allclose(ave_fuse([Tensor(x) for x in xs], params).data, expected / 3, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            ave_fuse([], {})


class TestForward:
    def test_delta_lcrn_is_transparent_under_ideal(self, pack):
        cfg_on = small_cfg(lcrn=True, lcrn_head_init="delta")
        cfg_off = replace(cfg_on, lcrn=False)
        p_on, p_off = init_params(cfg_on), init_params(cfg_off)
        ideal = ChannelConfig(IDEAL)
        for sc in pack.scenes[:3]:
            a = forward_tensors(sc, pack, cfg_on, p_on, ideal).fused.data
            b = forward_tensors(sc, pack, cfg_off, p_off, ideal).fused.data
            np.testing.assert_allclose(a, b, atol=1e-5)

    def test_ego_never_corrupted(self, pack):
        cfg = small_cfg()
        params = init_params(cfg)
        seen = []

        def probe(f, channel, rng):
            seen.append(f.data)
            return apply_channel(f, channel, rng)

        sc = pack.scenes[0]
        out = forward_tensors(sc, pack, cfg, params, ChannelConfig(GLOBAL_LOSSY, 1.0), channel_fn=probe)
        assert out.diagnostics.ego_mask.empty
        assert np.array_equal(out.diagnostics.ego, pack.features[sc.scene_id][0])
        assert len(seen) == len(sc.cavs)
        assert all(not np.array_equal(s, pack.features[sc.scene_id][0]) for s in seen)

    def test_zero_neighbours_uses_ego_only(self, pack):
        cfg = small_cfg(lcrn=False)
        params = init_params(cfg)
        sc = pack.scenes[0]
        lonely = Scene(sc.ego, [], sc.gt_boxes, scene_id=sc.scene_id)
        out = forward_tensors(lonely, pack, cfg, params, ChannelConfig(IDEAL))
        ego = Tensor(pack.features[sc.scene_id][0])
        np.testing.assert_allclose(out.fused.data, v2v_attention(ego, {}, params).data, atol=1e-12)

    def test_detections_deterministic(self, pack):
        cfg = small_cfg(score_thresh=0.0)
        params = init_params(cfg)
        a, _ = forward_pipeline(pack.scenes[1], pack, cfg, params)
        b, _ = forward_pipeline(pack.scenes[1], pack, cfg, params)
        assert [x.as_tuple() for x in a.boxes] == [x.as_tuple() for x in b.boxes] and a.scores == b.scores

    def test_stage_errors_are_named(self, pack):
        cfg = small_cfg(lcrn=False)
        params = init_params(cfg)
        broken = dict(pack.features)
        sc = pack.scenes[0]
        cav = sc.cavs[0].id
        broken[sc.scene_id] = dict(broken[sc.scene_id])
        broken[sc.scene_id][cav] = broken[sc.scene_id][cav][:, :8]
        bad = replace(pack, features=broken)
        with pytest.raises(PipelineError, match=r"\[sharing\]"):
            forward_tensors(sc, bad, cfg, params, ChannelConfig(IDEAL))


class TestTraining:
    def test_scheme_one_never_calls_channel(self, pack):
        calls = []

        def counting(f, channel, rng):
            if channel.mode != IDEAL:
                calls.append(1)
            return apply_channel(f, channel, rng)

        cfg = small_cfg(scheme="I")
        assert cfg.training_channel().mode == IDEAL
        train(cfg, pack, channel_fn=counting)
        assert calls == []

    def test_scheme_two_corrupts(self, pack):
        calls = []

        def counting(f, channel, rng):
            out = apply_channel(f, channel, rng)
            calls.append(out[1].count)
            return out

        train(small_cfg(scheme="II"), pack, channel_fn=counting)
        assert calls and sum(calls) > 0

    def test_schemes_differ_only_in_training_channel(self):
        one, two = small_cfg(scheme="I"), small_cfg(scheme="II")
        assert one.training_channel().mode == IDEAL
        assert two.training_channel().mode == GLOBAL_LOSSY
        assert replace(one, scheme="II") == two

    def test_lambda_zero_logs_no_repair_loss(self, pack):
        from v2vlc.detection import LossWeights

        _, log = train(small_cfg(lcrn=False, loss=LossWeights(1.0, 0.0)), pack)
        assert all(e["l_lc"] == 0.0 for e in log)

    def test_toy_loss_mostly_decreases(self):
        gp = SceneGenParams(n_scenes=8, channels=4, texture_channels=2, height=16, width=16, boxes=(3, 6))
        cfg = ExperimentConfig(
            train_scenes=gp, lcrn_widths=(4, 8), epochs=10, steps_per_epoch=20, decay_every=100, lr=5e-3,
        )
        p = generate_scenes(gp, seed=0)
        _, log = train(cfg, p)
        totals = [e["l_total"] for e in log]
        violations = sum(b >= a for a, b in zip(totals, totals[1:]))
        assert violations <= 2, totals

    def test_checkpoints_and_log_written(self, pack, tmp_path):
        cfg = small_cfg(epochs=2)
        train(cfg, pack, run_dir=tmp_path)
        assert (tmp_path / "train_log.json").exists()
        assert (tmp_path / "checkpoints" / "epoch-001" / "manifest.json").exists()

    def test_report_bytes_reproducible(self):
        cfg = small_cfg(score_thresh=0.2)
        reports = []
        for _ in range(2):
            tr, te = make_packs(cfg)
            params, _ = train(cfg, tr)
            reports.append(format_report(evaluate(params, cfg, te)))
        assert reports[0] == reports[1]


class TestConfig:
    def test_yaml_roundtrip_and_hash(self, tmp_path):
        cfg = small_cfg(fusion=AVEFUSE, channel=ChannelConfig(GLOBAL_LOSSY, 0.5, (0.0, 2.0), seed=3))
        save_config(tmp_path / "c.yaml", cfg)
        back = load_config(tmp_path / "c.yaml")
        assert back == cfg
        assert back.config_hash() == cfg.config_hash()
        assert cfg.run_dir("runs").name == f"run-{cfg.config_hash()}"

    def test_hash_changes_with_seed(self):
        assert small_cfg(seed=0).config_hash() != small_cfg(seed=1).config_hash()

    def test_invalid_values(self):
        with pytest.raises(ValueError):
            small_cfg(scheme="III")
        with pytest.raises(ValueError):
            small_cfg(fusion="max")
