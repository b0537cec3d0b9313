import csv

import numpy as np
import pytest
import torch

from tcrgan.config import build_train_config, documented_keys, load_train_config, parse_config_text
from tcrgan.training import (
    HISTORY_FIELDS,
    DivergenceError,
    TrainConfig,
    Trainer,
    config_fingerprint,
    predict,
    predict_fn,
    to_tensor,
)


def batch_of(samples, n=1):
    return to_tensor([s.ir.values for s in samples[:n]]), to_tensor([s.pmr.values for s in samples[:n]])


def snapshot(module):
    return [p.detach().clone() for p in module.parameters()]


def test_config_defaults_follow_setup():
    cfg = TrainConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.lr, cfg.beta1) == (100, 1, 0.0002, 0.5)
    assert cfg.loss.lambda_l1 == 100


@pytest.mark.parametrize("kwargs", [{"epochs": 0}, {"beta1": 1.0}, {"batch_size": 0}, {"lr": -1.0}])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_config_dict_round_trip(small_config):
    cfg = small_config(epochs=3)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_variant_only_changes_generator(small_config):
    cfgs = [small_config(variant=v) for v in ("pix2pix", "res-pix2pix", "tcr-gan")]
    assert len({config_fingerprint(c, include_generator=False) for c in cfgs}) == 1
    assert len({config_fingerprint(c) for c in cfgs}) == 3


def test_lr_zero_leaves_parameters(small_config, tiny_set):
    samples, stats = tiny_set
    tr = Trainer(small_config(lr=0.0), stats)
    g0, d0 = snapshot(tr.generator), snapshot(tr.discriminator)
    tr.train_step(*batch_of(samples))
    assert all(torch.equal(a, b) for a, b in zip(g0, snapshot(tr.generator)))
    assert all(torch.equal(a, b) for a, b in zip(d0, snapshot(tr.discriminator)))


def test_step_updates_both_networks(small_config, tiny_set):
    samples, stats = tiny_set
    tr = Trainer(small_config(), stats)
    g0, d0 = snapshot(tr.generator), snapshot(tr.discriminator)
    losses = tr.train_step(*batch_of(samples))
    assert set(HISTORY_FIELDS) <= set(losses)
    assert any(not torch.equal(a, b) for a, b in zip(g0, snapshot(tr.generator)))
    assert any(not torch.equal(a, b) for a, b in zip(d0, snapshot(tr.discriminator)))
    assert losses["g_total"] == pytest.approx(losses["g_adv"] + 100 * losses["g_l1"], rel=1e-5)


def test_d_step_uses_detached_fake(small_config, tiny_set, monkeypatch):
    samples, stats = tiny_set
    tr = Trainer(small_config(), stats)
    seen = []
    real_step = tr.opt_d.step

    def spy():
        seen.append([p.grad for p in tr.generator.parameters()])
        real_step()

    monkeypatch.setattr(tr.opt_d, "step", spy)
    tr.train_step(*batch_of(samples))
    assert seen and all(g is None for g in seen[0])


def test_divergence_aborts(small_config, tiny_set):
    samples, stats = tiny_set
    tr = Trainer(small_config(), stats)
    with torch.no_grad():
        tr.discriminator.net[0].weight.fill_(float("nan"))
    with pytest.raises(DivergenceError):
        tr.train_step(*batch_of(samples))


def test_identical_runs(small_config, tiny_set):
    samples, stats = tiny_set
    cfg = small_config(epochs=2)
    h1 = Trainer(cfg, stats).fit(samples)
    h2 = Trainer(cfg, stats).fit(samples)
    assert len(h1.records) == 12
    assert h1.records == h2.records
    assert [r["step"] for r in h1.records] == list(range(1, 13))


def test_batches_cover_epoch(small_config, tiny_set):
    samples, stats = tiny_set
    tr = Trainer(small_config(batch_size=4), stats)
    batches = list(tr.epoch_batches(samples, 0))
    assert [b[0].shape[0] for b in batches] == [4, 2]
    assert batches[0][0].shape[-2:] == (32, 32)


def test_fit_writes_outputs(small_config, tiny_set, tmp_path):
    samples, stats = tiny_set
    tr = Trainer(small_config(epochs=3, checkpoint_every=2), stats)
    tr.fit(samples, out_dir=tmp_path)
    names = sorted(p.name for p in tmp_path.glob("checkpoint_*.pt"))
    assert names == ["checkpoint_epoch0002.pt", "checkpoint_epoch0003.pt"]
    with open(tmp_path / "history.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 18 and tuple(rows[0]) == HISTORY_FIELDS
    assert (tmp_path / "epoch_times.csv").exists()


def test_checkpoint_refuses_overwrite(small_config, tmp_path):
    tr = Trainer(small_config())
    tr.save(tmp_path / "c.pt")
    with pytest.raises(FileExistsError):
        tr.save(tmp_path / "c.pt")


def test_checkpoint_schema_guard(small_config):
    state = Trainer(small_config()).state_dict()
    state["schema_version"] = 42
    with pytest.raises(ValueError):
        Trainer.from_state_dict(state)


def test_checkpoint_round_trip_predictions(small_config, tiny_set, tmp_path):
    samples, stats = tiny_set
    tr = Trainer(small_config(epochs=1), stats)
    tr.fit(samples)
    before = predict(tr, [s.ir.values for s in samples[:2]], normalized=True)
    tr.save(tmp_path / "c.pt")
    loaded = Trainer.load(tmp_path / "c.pt")
    for a, b in zip(tr.generator.state_dict().values(), loaded.generator.state_dict().values()):
        assert torch.equal(a, b)
    after = predict(loaded, [s.ir.values for s in samples[:2]], normalized=True)
    for a, b in zip(before, after):
        np.testing.assert_array_equal(a, b)


def test_resume_matches_uninterrupted(small_config, tiny_set, tmp_path):
    samples, stats = tiny_set
    cfg = small_config(epochs=3, checkpoint_every=1)
    full = Trainer(cfg, stats).fit(samples)
    first = Trainer(cfg, stats)
    part = first.fit(samples, out_dir=tmp_path, stop_after_epoch=1)
    resumed = Trainer.load(tmp_path / "checkpoint_epoch0001.pt")
    rest = resumed.fit(samples)
    assert part.records + rest.records == full.records


def test_predict_contract(small_config, tiny_set):
    samples, stats = tiny_set
    tr = Trainer(small_config(), stats)
    raw = [np.full((20, 20), stats.ir.max), np.full((32, 32), stats.ir.min), np.full((32, 32), 250.0)]
    out = predict(tr, raw)
    assert [o.shape for o in out] == [(20, 20), (32, 32), (32, 32)]
    again = predict(tr, raw)
    for a, b in zip(out, again):
        np.testing.assert_array_equal(a, b)
    for o in out:
        assert np.isfinite(o).all()
        assert stats.pmr.min <= o.min() and o.max() <= stats.pmr.max
    # batch order is preserved
    np.testing.assert_array_equal(predict(tr, raw[1:2])[0], out[1])


def test_predict_requires_stats(small_config):
    with pytest.raises(ValueError):
        predict(Trainer(small_config()), [np.zeros((32, 32))])


def test_predict_fn_returns_physical_grid(small_config, tiny_set):
    samples, stats = tiny_set
    fn = predict_fn(Trainer(small_config(), stats))
    assert fn(samples[0]).shape == samples[0].pmr.shape


# -- flat config files -------------------------------------------------------


def test_parse_config_text():
    text = "# comment\nepochs = 5\n\ngenerator.variant=pix2pix  # trailing\n"
    assert parse_config_text(text) == {"epochs": "5", "generator.variant": "pix2pix"}
    with pytest.raises(ValueError):
        parse_config_text("epochs 5")


def test_config_file(tmp_path):
    p = tmp_path / "train.cfg"
    p.write_text("epochs = 7\nlr = 0.001\naugment = false\ninput_size = 64\nloss.lambda_l1 = 50\n"
                 "generator.variant = res-pix2pix\ngenerator.respath_units = 3,2,1,1\n")
    cfg = load_train_config(p, {"seed": 3, "epochs": None})
    assert (cfg.epochs, cfg.lr, cfg.augment, cfg.seed) == (7, 0.001, False, 3)
    assert cfg.generator.input_size == cfg.discriminator.input_size == 64
    assert cfg.loss.lambda_l1 == 50.0
    assert cfg.generator.variant == "res-pix2pix"
    assert cfg.generator.respath_units == (3, 2, 1, 1)


def test_config_unknown_key():
    with pytest.raises(KeyError):
        build_train_config({"learning_rate": "1"})
    with pytest.raises(KeyError):
        build_train_config({"generator.width": "1"})


def test_documented_keys_cover_config():
    keys = documented_keys()
    for k in ("epochs", "lr", "beta1", "loss.lambda_l1", "generator.variant", "discriminator.layers"):
        assert k in keys
