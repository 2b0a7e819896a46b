import json

import pytest
from toys import write_toy_corpus

from usegmix.cli import RunConfig, load_config, run
from usegmix.errors import UsegmixError


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    td = tmp_path_factory.mktemp("cli")
    write_toy_corpus(td / "corpus", n_per_class=2, size=96)
    code = run(["index", str(td / "corpus"), "--out", str(td / "pools"), "--seed", "3"])
    assert code == 0
    return td


class TestParsing:
    def test_unknown_subcommand_exits_2(self, capsys):
        assert run(["frobnicate"]) == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_missing_required_flag_exits_2(self):
        assert run(["index", "corpus"]) == 2

    def test_no_args_exits_2(self):
        assert run([]) == 2


class TestSelfcheck:
    def test_exit_zero(self, capsys):
        assert run(["selfcheck"]) == 0
        out = capsys.readouterr().out
        assert out.count("ok ") >= 4
        assert "FAIL" not in out


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg.phase2.ratio_min == 0.30
        assert cfg.slic.n_s == 30
        assert cfg.consensus.k == 15
        assert cfg.blend.band_width == 3
        assert cfg.phase2.per_class_count == 600

    def test_roundtrip_canonical(self, tmp_path):
        cfg = RunConfig()
        path = tmp_path / "c.json"
        path.write_text(cfg.to_json())
        again = load_config(path)
        assert again.to_json() == cfg.to_json()

    def test_unknown_top_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"bogus": 1}))
        with pytest.raises(UsegmixError, match="bogus"):
            load_config(path)

    def test_unknown_nested_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"slic": {"n_sx": 4}}))
        with pytest.raises(UsegmixError, match="n_sx"):
            load_config(path)

    def test_partial_overrides(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"phase2": {"per_class_count": 7}}))
        cfg = load_config(path)
        assert cfg.phase2.per_class_count == 7
        assert cfg.phase2.ratio_min == 0.30


class TestIndexAndStats:
    def test_pool_stats_matches_manifests(self, workspace, capsys):
        assert run(["pool-stats", str(workspace / "pools")]) == 0
        out = capsys.readouterr().out
        for class_dir in sorted((workspace / "pools").iterdir()):
            manifest = json.loads((class_dir / "manifest.json").read_text())
            n = len(manifest["entries"])
            assert f"{manifest['class_label']}: entries={n}" in out

    def test_index_bad_corpus_exit_1(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        code = run(["index", str(tmp_path / "empty"), "--out", str(tmp_path / "p")])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestAugmentCommand:
    def test_augment_writes_outputs(self, workspace, tmp_path, capsys):
        code = run(
            [
                "augment",
                str(workspace / "corpus"),
                "--pools",
                str(workspace / "pools"),
                "--out",
                str(tmp_path / "synth"),
                "--seed",
                "3",
                "--count",
                "2",
            ]
        )
        assert code == 0
        pngs = list((tmp_path / "synth").rglob("*.png"))
        assert len(pngs) == 6
        records = (tmp_path / "synth" / "records.jsonl").read_text().strip().splitlines()
        assert len(records) == 6

    def test_weights_persisted_after_augment(self, workspace, tmp_path):
        # the previous augment run penalized entries; manifests now carry
        # weights above the initial 1.0
        total = 0.0
        count = 0
        for class_dir in sorted((workspace / "pools").iterdir()):
            manifest = json.loads((class_dir / "manifest.json").read_text())
            for e in manifest["entries"]:
                total += e["weight"]
                count += 1
        assert total > count  # at least one weight rose above 1


class TestPreview:
    def test_triptych_written(self, workspace, tmp_path, capsys):
        img = next((workspace / "corpus" / "rings").glob("*.png"))
        code = run(
            [
                "preview",
                str(img),
                "--pools",
                str(workspace / "pools"),
                "--out",
                str(tmp_path / "trip.png"),
                "--class",
                "rings",
                "--seed",
                "5",
            ]
        )
        assert code == 0
        from usegmix.raster import decode_image

        trip = decode_image((tmp_path / "trip.png").read_bytes())
        assert trip.width == 96 * 3 + 4  # three panels plus separators
        assert trip.height == 96

    def test_preview_unknown_class(self, workspace, tmp_path, capsys):
        img = next((workspace / "corpus" / "rings").glob("*.png"))
        code = run(
            ["preview", str(img), "--pools", str(workspace / "pools"), "--out",
             str(tmp_path / "t.png"), "--class", "nope"]
        )
        assert code == 1


class TestEnvSeed:
    def test_env_seed_used(self, workspace, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("USEGMIX_SEED", "3")
        code = run(["index", str(workspace / "corpus"), "--out", str(tmp_path / "p2")])
        assert code == 0
        a = (workspace / "pools" / "rings" / "features.bin").read_bytes()
        b = (tmp_path / "p2" / "rings" / "features.bin").read_bytes()
        assert a == b
