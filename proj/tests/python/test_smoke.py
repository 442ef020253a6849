"""End-to-end smoke of the python bindings: geometry, generators, patching,
masks, dataset build, and metrics."""

import json
import math

import numpy as np
import pytest

import pic


@pytest.fixture
def cloud():
    rng = np.random.default_rng(0)
    return pic.normalize(rng.uniform(-1.0, 1.0, size=(1024, 3)))


def test_normalize_properties(cloud):
    assert cloud.shape == (1024, 3)
    assert np.allclose(cloud.mean(axis=0), 0.0, atol=1e-12)
    assert math.isclose(np.linalg.norm(cloud, axis=1).max(), 1.0, rel_tol=1e-12)


def test_fps_and_knn(cloud):
    centers = pic.sample_centers(cloud, 64, "fps", 0)
    assert len(centers) == 64
    assert len(set(centers)) == 64
    groups = pic.knn_indices(cloud, centers, 32)
    assert len(groups) == 64
    for center, group in zip(centers, groups):
        assert len(group) == 32
        assert group[0] == center


def test_chamfer_hand_value():
    a = np.zeros((1, 3))
    b = np.array([[0.1, 0.0, 0.0]])
    assert math.isclose(pic.chamfer(a, b, "l2"), 0.01, rel_tol=1e-12)
    assert math.isclose(pic.metric_cd(a, b), 10.0, rel_tol=1e-12)


def test_generators(cloud):
    den = pic.gen_denoising(cloud, 2, 7)
    changed = (den["input"] != den["target"]).any(axis=1).sum()
    assert changed == 200

    rec = pic.gen_reconstruction(cloud, 5, 0)
    assert len(np.unique(rec["input"], axis=0)) <= 32

    reg = pic.gen_registration(cloud, 3, 9)
    assert reg["rotation"]["angle"] <= math.radians(108.0) + 1e-12

    labels = [i % 3 for i in range(1024)]
    seg = pic.gen_segmentation(cloud, labels, 50)
    cb = pic.LabelCodebook.build(50)
    decoded = [cb.decode(seg["target"][i]) for i in range(8)]
    assert decoded == labels[:8]


def test_joint_sampling_and_masks(cloud):
    den = pic.gen_denoising(cloud, 1, 3)
    batch = pic.joint_sample(den["input"], den["target"], 64, 32, "fps", 5)
    assert batch.n_patches == 64
    assert batch.patch_size == 32
    assert batch.input_centers.shape == (64, 3)
    for p, ci in enumerate(batch.center_indices[:4]):
        assert np.array_equal(batch.input_centers[p], den["input"][ci])
        assert np.array_equal(batch.target_centers[p], den["target"][ci])

    mask = pic.make_mask("sep", 64, True, 0.7, "train", 1)
    assert sum(mask) == int(0.7 * 128)
    infer_mask = pic.make_mask("cat", 64, True, 0.6, "infer", 1)
    assert sum(infer_mask) == 64
    assert all(infer_mask[i] == (192 <= i < 256) for i in range(256))


def test_build_dataset_and_load(tmp_path):
    rng = np.random.default_rng(1)
    src = tmp_path / "src"
    (src / "cls").mkdir(parents=True)
    for i in range(3):
        pts = pic.normalize(rng.uniform(-1.0, 1.0, size=(128, 3)))
        np.savetxt(src / "cls" / f"c{i}.xyz", pts, fmt="%.17g")
        (src / "cls" / f"c{i}.seg").write_text("".join(f"{p % 4}\n" for p in range(128)))

    out = tmp_path / "out"
    n = pic.build_dataset(str(src), str(out), 9, json.dumps({"n_points": 128}))
    assert n == 12  # 3 clouds x 4 tasks
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["entries"]) == 12
    sample = pic.load_sample(str(out), manifest["entries"][0]["sample_id"])
    assert sample["input"].shape == (128, 3)
    assert sample["target"].shape == (128, 3)


def test_miou_hand_example():
    cb = pic.LabelCodebook.build(4)
    pred = np.stack([np.asarray(cb.encode(0)).reshape(3)] * 4)
    assert math.isclose(pic.metric_miou(pred, [0, 0, 1, 1], 4), 25.0, rel_tol=1e-12)


def test_config_echo_roundtrip():
    echo = json.loads(pic.parse_config(json.dumps({"preset": "desk", "variant": "cat"})))
    assert echo["dim"] == 128
    assert echo["mask_ratio"] == 0.6
    with pytest.raises(Exception):
        pic.parse_config(json.dumps({"mask_ration": 0.5}))
