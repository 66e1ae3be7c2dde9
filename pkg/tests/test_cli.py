"""End-to-end command-line behavior: exit codes, artifacts, precedence."""

import json
import math
import os

import numpy as np
import pytest

from fetchground.cli import EVAL_CSV_COLUMNS, main
from fetchground.scenes import (context_crop, crop_to_input, load_dataset,
                                relation_features, target_crop)
from fetchground.text import tokenize
from fetchground.train import load_model
from fetchground import tensor as T


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        rows = [dict(zip(header, line.strip().split(",")))
                for line in fh if line.strip()]
    return header, rows


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    rc = main(["gen", "--out", str(out), "--scenes", "8", "--seed", "3",
               "--candidates", "4"])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory, data_dir):
    out = tmp_path_factory.mktemp("run")
    rc = main(["train", "--data", str(data_dir), "--out", str(out),
               "--epochs", "2", "--batch-size", "8"])
    assert rc == 0
    return out


class TestGen:
    def test_artifacts(self, data_dir):
        for name in ("scenes.jsonl", "vocab.txt", "meta.txt", "config.txt",
                     "scene_00000.ppm"):
            assert (data_dir / name).exists()
        with open(data_dir / "scenes.jsonl") as fh:
            assert sum(1 for _ in fh) == 8

    def test_summary_stats(self, tmp_path, capsys):
        rc = main(["gen", "--out", str(tmp_path), "--scenes", "5",
                   "--seed", "1", "--candidates", "4"])
        assert rc == 0
        out = capsys.readouterr().out
        assert f"wrote 5 scenes to {tmp_path}" in out
        assert "average candidates per scene: 4.00" in out
        assert "average words per instruction:" in out

    def test_same_seed_same_bytes(self, data_dir, tmp_path):
        rc = main(["gen", "--out", str(tmp_path), "--scenes", "8",
                   "--seed", "3", "--candidates", "4"])
        assert rc == 0
        for name in ("scenes.jsonl", "scene_00003.ppm"):
            assert (tmp_path / name).read_bytes() == \
                (data_dir / name).read_bytes()

    def test_landmark_mode_phrasing(self, tmp_path):
        rc = main(["gen", "--out", str(tmp_path), "--scenes", "4",
                   "--seed", "2", "--mode", "landmark"])
        assert rc == 0
        scenes, _ = load_dataset(tmp_path)
        relations = ("near the", "next to the", "beside the", "by the")
        assert all(any(rel in sc.instruction for rel in relations)
                   for sc in scenes)

    def test_unknown_flag_exits_2(self, tmp_path):
        assert main(["gen", "--out", str(tmp_path), "--wat", "1"]) == 2

    def test_bad_value_exits_2(self, tmp_path, capsys):
        assert main(["gen", "--out", str(tmp_path), "--scenes", "many"]) == 2
        assert "expected an integer" in capsys.readouterr().err

    def test_missing_required_flag_exits_2(self, capsys):
        assert main(["gen"]) == 2
        capsys.readouterr()

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("sceens = 4\n")
        rc = main(["gen", "--out", str(tmp_path / "d"), "--config", str(cfg)])
        assert rc == 2
        assert "unknown config file key 'sceens'" in capsys.readouterr().err


class TestTrain:
    def test_artifacts(self, run_dir):
        header, rows = read_csv(run_dir / "metrics.csv")
        assert header == ["epoch", "J_c", "J_t", "J_l", "J_p", "J_src",
                          "J_total", "train_top1"]
        assert [r["epoch"] for r in rows] == ["1", "2"]
        assert (run_dir / "last.ckpt").exists()

    def test_flag_beats_config_file(self, data_dir, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs = 2\nbatch_size = 8\n")
        out = tmp_path / "out"
        rc = main(["train", "--data", str(data_dir), "--out", str(out),
                   "--config", str(cfg), "--epochs", "1"])
        assert rc == 0
        capsys.readouterr()
        _, rows = read_csv(out / "metrics.csv")
        assert len(rows) == 1
        echoed = (out / "config.txt").read_text()
        assert "epochs = 1\n" in echoed
        assert "batch_size = 8\n" in echoed

    def test_resume_continues_epoch_count(self, data_dir, run_dir, capsys):
        rc = main(["train", "--data", str(data_dir), "--out", str(run_dir),
                   "--resume", str(run_dir / "last.ckpt"),
                   "--epochs", "3", "--batch-size", "8"])
        assert rc == 0
        assert "finished epoch 3" in capsys.readouterr().out
        _, rows = read_csv(run_dir / "metrics.csv")
        assert [r["epoch"] for r in rows] == ["1", "2", "3"]

    def test_missing_dataset_exits_3(self, tmp_path, capsys):
        rc = main(["train", "--data", str(tmp_path), "--out",
                   str(tmp_path / "o")])
        assert rc == 3
        assert "not found" in capsys.readouterr().err


class TestEval:
    def test_overall_and_mode_rows(self, data_dir, run_dir, tmp_path, capsys):
        out = tmp_path / "ev"
        rc = main(["eval", "--data", str(data_dir),
                   "--ckpt", str(run_dir / "last.ckpt"), "--out", str(out)])
        assert rc == 0
        capsys.readouterr()
        header, rows = read_csv(out / "eval.csv")
        assert header == EVAL_CSV_COLUMNS
        sections = [r["section"] for r in rows]
        assert sections[0] == "overall"
        assert "mode" in sections
        top1 = float(rows[0]["top1"])
        assert 0.0 <= top1 <= 1.0
        assert (out / "config.txt").exists()

    def test_matches_brute_force_rescoring(self, data_dir, run_dir, tmp_path,
                                           capsys):
        out = tmp_path / "ev"
        rc = main(["eval", "--data", str(data_dir),
                   "--ckpt", str(run_dir / "last.ckpt"), "--out", str(out)])
        assert rc == 0
        capsys.readouterr()
        _, rows = read_csv(out / "eval.csv")
        reported = float(rows[0]["top1"])

        # Re-score from the checkpoint alone: plain loops, library cosine
        # kept out of the picture.
        model = load_model(run_dir / "last.ckpt")
        model.set_mode("eval")
        scenes, vocab = load_dataset(data_dir)
        size = model.cfg.input_size
        hits = 0
        for sc in scenes:
            with T.no_grad():
                lang = model.encode_language([tokenize(sc.instruction,
                                                       vocab)])
                zl = lang["zl"].data.reshape(-1)
                tps = [crop_to_input(target_crop(sc, i), size)
                       for i in range(len(sc.candidates))]
                cps = [crop_to_input(context_crop(sc, i, 12), size)
                       for i in range(len(sc.candidates))]
                rels = [relation_features(sc, i)
                        for i in range(len(sc.candidates))]
                vis = model.encode_visual(np.stack(tps), np.stack(cps),
                                          np.stack(rels))
            best, best_sim = None, None
            for i in range(len(sc.candidates)):
                zv = vis["zv"].data[i]
                num = sum(float(a) * float(b) for a, b in zip(zl, zv))
                den = (math.sqrt(sum(float(a) ** 2 for a in zl)) *
                       math.sqrt(sum(float(b) ** 2 for b in zv)))
                sim = num / den
                if best_sim is None or sim > best_sim:
                    best, best_sim = i, sim
            hits += int(best == sc.target_index)
        assert reported == hits / len(scenes)

    def test_delta_sweep_rows(self, data_dir, run_dir, tmp_path, capsys):
        out = tmp_path / "ev"
        rc = main(["eval", "--data", str(data_dir),
                   "--ckpt", str(run_dir / "last.ckpt"),
                   "--delta-sweep", "0,8", "--out", str(out)])
        assert rc == 0
        capsys.readouterr()
        _, rows = read_csv(out / "eval.csv")
        assert [(r["section"], r["label"]) for r in rows] == \
            [("delta", "0"), ("delta", "8")]

    def test_bad_sweep_list_exits_2(self, data_dir, run_dir, capsys):
        rc = main(["eval", "--data", str(data_dir),
                   "--ckpt", str(run_dir / "last.ckpt"),
                   "--delta-sweep", "0,x"])
        assert rc == 2
        assert "comma-separated integers" in capsys.readouterr().err

    def test_no_ckpt_exits_2(self, data_dir, capsys):
        assert main(["eval", "--data", str(data_dir)]) == 2
        assert "needs --ckpt" in capsys.readouterr().err

    def test_ablation_without_train_data_exits_2(self, data_dir, capsys):
        rc = main(["eval", "--data", str(data_dir), "--ablation"])
        assert rc == 2
        assert "--train-data" in capsys.readouterr().err

    def test_ablation_grid_rows(self, data_dir, tmp_path, capsys):
        out = tmp_path / "ev"
        rc = main(["eval", "--data", str(data_dir),
                   "--train-data", str(data_dir), "--ablation",
                   "--seeds", "0", "--epochs", "1", "--out", str(out)])
        assert rc == 0
        capsys.readouterr()
        _, rows = read_csv(out / "eval.csv")
        cells = [r for r in rows if r["section"] == "cell"]
        means = [r for r in rows if r["section"] == "cell_mean"]
        stds = [r for r in rows if r["section"] == "cell_std"]
        assert len(cells) == 4 and len(means) == 4 and not stds
        assert {r["label"] for r in means} == \
            {"none", "lab", "lab+tab", "lab+tab+ncab"}

    def test_corrupt_checkpoint_exits_3(self, data_dir, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"JUNKJUNKJUNK")
        rc = main(["eval", "--data", str(data_dir), "--ckpt", str(bad)])
        assert rc == 3
        capsys.readouterr()


class TestViz:
    def test_artifacts(self, data_dir, run_dir, tmp_path, capsys):
        out = tmp_path / "viz"
        rc = main(["viz", "--data", str(data_dir),
                   "--ckpt", str(run_dir / "last.ckpt"), "--out", str(out),
                   "--scene", "0", "--candidate", "1"])
        assert rc == 0
        printed = capsys.readouterr().out
        for name in ("context.ppm", "attention.pgm", "attention.json"):
            assert (out / name).exists()
            assert name in printed
        with open(out / "attention.json") as fh:
            side = json.load(fh)
        assert side["candidate"] == 1

    def test_scene_out_of_range_exits_2(self, data_dir, run_dir, capsys):
        rc = main(["viz", "--data", str(data_dir),
                   "--ckpt", str(run_dir / "last.ckpt"), "--out", "/tmp/x",
                   "--scene", "99", "--candidate", "0"])
        assert rc == 2
        assert "scene index 99" in capsys.readouterr().err

    def test_candidate_out_of_range_exits_2(self, data_dir, run_dir, capsys):
        rc = main(["viz", "--data", str(data_dir),
                   "--ckpt", str(run_dir / "last.ckpt"), "--out", "/tmp/x",
                   "--scene", "0", "--candidate", "99"])
        assert rc == 2
        assert "candidate index 99" in capsys.readouterr().err
