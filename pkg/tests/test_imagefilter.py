"""Edge-selective blur scoring on generated sharp/blurred imagery."""

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from flowforge.errors import InvalidInputError
from flowforge.imagefilter import BlurConfig, esfft_score, filter_directory


def checkerboard(shape=(128, 128), cell=16):
    y, x = np.mgrid[: shape[0], : shape[1]]
    return (((y // cell) + (x // cell)) % 2).astype(np.float64)


def textured(seed, shape=(128, 128)):
    rng = np.random.default_rng(seed)
    base = checkerboard(shape, cell=int(rng.integers(12, 25)))
    noise = gaussian_filter(rng.uniform(0, 0.4, size=shape), sigma=1.0)
    img = np.clip(0.7 * base + noise, 0, 1)
    return img


class TestEsfftScore:
    def test_constant_image_is_no_texture(self):
        report = esfft_score(np.full((64, 64), 0.5))
        assert report.decision == "no-texture"
        assert report.edge_fraction < 0.001

    def test_sharp_beats_blurred(self):
        sharp = checkerboard()
        blurred = gaussian_filter(sharp, sigma=2.0)
        assert esfft_score(sharp).score > esfft_score(blurred).score

    def test_monotone_under_blur_sweep(self):
        for seed in range(5):
            img = textured(seed)
            scores = [
                esfft_score(gaussian_filter(img, sigma=s) if s else img).score
                for s in (0, 1, 2, 4)
            ]
            assert all(a >= b for a, b in zip(scores, scores[1:])), scores

    def test_brightness_offset_invariance(self):
        img = 0.5 * checkerboard() + 0.1
        shifted = img + 0.3
        a = esfft_score(np.clip(img, 0, 1)).score
        b = esfft_score(np.clip(shifted, 0, 1)).score
        assert a == pytest.approx(b, rel=1e-6)

    def test_small_image_rejected(self):
        with pytest.raises(InvalidInputError):
            esfft_score(np.zeros((16, 16)))

    def test_uint8_input_normalized(self):
        img = (checkerboard() * 255).astype(np.uint8)
        a = esfft_score(img).score
        b = esfft_score(checkerboard()).score
        assert a == pytest.approx(b, rel=1e-9)

    def test_threshold_decides_keep_or_drop(self):
        img = checkerboard()
        score = esfft_score(img).score
        assert esfft_score(img, threshold=score * 0.5).decision == "keep"
        assert esfft_score(img, threshold=score * 2.0).decision == "drop"

    def test_no_texture_exactly_at_edge_floor(self):
        # Edge fraction just under 0.1% -> no-texture; at/above -> scored.
        shape = (100, 100)
        img = np.zeros(shape)
        img[50, 40:44] = 1.0  # a few edge pixels after dilation
        cfg = BlurConfig(dilate_radius=0)
        report = esfft_score(img, cfg)
        expected_fraction = report.edge_fraction
        assert (report.decision == "no-texture") == (expected_fraction < 0.001)


class TestFilterDirectory:
    def write_corpus(self, tmp_path, n_sharp=4, n_blur=4):
        from PIL import Image

        names = {"sharp": [], "blurred": []}
        for i in range(n_sharp):
            img = textured(i)
            name = f"sharp_{i}.png"
            Image.fromarray((img * 255).astype(np.uint8)).save(tmp_path / name)
            names["sharp"].append(name)
        for i in range(n_blur):
            img = gaussian_filter(textured(100 + i), sigma=2.0)
            name = f"blur_{i}.png"
            Image.fromarray((img * 255).astype(np.uint8)).save(tmp_path / name)
            names["blurred"].append(name)
        return names

    def separating_threshold(self, tmp_path, names):
        report = filter_directory(tmp_path)
        sharp_scores = [report.scores[n] for n in names["sharp"]]
        blur_scores = [report.scores[n] for n in names["blurred"]]
        assert min(sharp_scores) > max(blur_scores)
        return 0.5 * (min(sharp_scores) + max(blur_scores))

    def test_two_cluster_separation(self, tmp_path):
        names = self.write_corpus(tmp_path)
        threshold = self.separating_threshold(tmp_path, names)
        report = filter_directory(tmp_path, threshold=threshold)
        assert sorted(report.kept) == sorted(names["sharp"])
        assert sorted(report.dropped) == sorted(names["blurred"])

    def test_empty_directory(self, tmp_path):
        report = filter_directory(tmp_path)
        assert report.kept == () and report.dropped == ()

    def test_undecodable_file_skipped(self, tmp_path):
        names = self.write_corpus(tmp_path, n_sharp=1, n_blur=0)
        (tmp_path / "junk.png").write_bytes(b"not an image at all")
        report = filter_directory(tmp_path)
        assert "junk.png" in report.skipped
        assert names["sharp"][0] in report.kept

    def test_rerun_identical_report(self, tmp_path):
        self.write_corpus(tmp_path, n_sharp=2, n_blur=2)
        r1 = filter_directory(tmp_path, threshold=0.01)
        r2 = filter_directory(tmp_path, threshold=0.01)
        assert r1.to_json() == r2.to_json()

    def test_report_roundtrips_as_json(self, tmp_path):
        import json

        self.write_corpus(tmp_path, n_sharp=1, n_blur=1)
        report = filter_directory(tmp_path)
        out = tmp_path / "report.json"
        report.write(out)
        payload = json.loads(out.read_text())
        assert set(payload) == {"kept", "dropped", "no_texture", "skipped", "scores"}
