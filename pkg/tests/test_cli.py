"""End-to-end tests of the command-line interface (in-process)."""

from __future__ import annotations

import math

import numpy as np
import pytest

from linefields import (
    DetectorParams,
    HomographySamplerParams,
    LineSegment,
    generate_pseudo_gt,
    orthogonal_distance,
    read_field_file,
    read_lines,
    read_vp_file,
    render_fields,
    write_field_file,
    write_lines,
    write_pgm,
)
from linefields.cli import main

from util_synth import pencil_segments, perturb_segment, square_image

GT_SEG = LineSegment((40.0, 40.0), (200.0, 60.0))

IDENTITY_H = "1 0 0\n0 1 0\n0 0 1\n"


def write_gt_inputs(tmp_path):
    lines_path = tmp_path / "gt.csv"
    write_lines(lines_path, [GT_SEG])
    fields_path = tmp_path / "gt.dlsf"
    write_field_file(fields_path, render_fields([GT_SEG], 256, 256))
    return lines_path, fields_path


class TestGenFields:
    def test_matches_direct_rendering(self, tmp_path) -> None:
        lines_path, fields_path = write_gt_inputs(tmp_path)
        out = tmp_path / "out.dlsf"
        rc = main(
            [
                "gen-fields",
                "--lines", str(lines_path),
                "--width", "256",
                "--height", "256",
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert out.read_bytes() == fields_path.read_bytes()

    def test_custom_r_recorded(self, tmp_path) -> None:
        lines_path, _ = write_gt_inputs(tmp_path)
        out = tmp_path / "out.dlsf"
        rc = main(
            [
                "gen-fields",
                "--lines", str(lines_path),
                "--width", "64",
                "--height", "64",
                "--r", "2.5",
                "--out", str(out),
            ]
        )
        assert rc == 0
        assert read_field_file(out).r == 2.5


class TestGenGt:
    def test_matches_direct_generation(self, tmp_path) -> None:
        img = square_image()
        img_path = tmp_path / "img.pgm"
        write_pgm(img_path, img)
        out = tmp_path / "gt.dlsf"
        rc = main(
            [
                "gen-gt",
                "--image", str(img_path),
                "--num-homographies", "3",
                "--seed", "7",
                "--out", str(out),
            ]
        )
        assert rc == 0
        direct = generate_pseudo_gt(
            img.astype(np.float64),
            3,
            DetectorParams(),
            HomographySamplerParams(),
            seed=7,
        )
        expected = tmp_path / "direct.dlsf"
        write_field_file(expected, direct)
        assert out.read_bytes() == expected.read_bytes()


class TestDetect:
    def test_from_fields(self, tmp_path) -> None:
        _, fields_path = write_gt_inputs(tmp_path)
        out = tmp_path / "det.csv"
        rc = main(["detect", "--fields", str(fields_path), "--out", str(out)])
        assert rc == 0
        detected, _ = read_lines(out)
        assert len(detected) == 1
        assert orthogonal_distance(detected[0], GT_SEG) < 1.0

    def test_no_filter_flag(self, tmp_path) -> None:
        _, fields_path = write_gt_inputs(tmp_path)
        out = tmp_path / "det.csv"
        rc = main(
            ["detect", "--fields", str(fields_path), "--no-filter", "--out", str(out)]
        )
        assert rc == 0
        detected, _ = read_lines(out)
        assert len(detected) >= 1

    def test_from_image(self, tmp_path) -> None:
        img = np.full((64, 64), 30.0)
        img[:, 32:] = 220.0
        img_path = tmp_path / "img.pgm"
        write_pgm(img_path, img)
        out = tmp_path / "det.csv"
        rc = main(["detect", "--image", str(img_path), "--out", str(out)])
        assert rc == 0
        detected, _ = read_lines(out)
        assert len(detected) == 1
        assert orthogonal_distance(detected[0], LineSegment((32.0, 1.0), (32.0, 63.0))) < 1.0

    def test_requires_some_input(self, tmp_path, capsys) -> None:
        rc = main(["detect", "--out", str(tmp_path / "det.csv")])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert "--fields" in err


class TestRefine:
    def test_pulls_line_back_to_field(self, tmp_path) -> None:
        _, fields_path = write_gt_inputs(tmp_path)
        rng = np.random.default_rng(80)
        pert = perturb_segment(GT_SEG, rng, max_lateral=1.0, max_rotation_deg=2.0)
        lines_path = tmp_path / "pert.csv"
        write_lines(lines_path, [pert])
        out = tmp_path / "ref.csv"
        rc = main(
            [
                "refine",
                "--lines", str(lines_path),
                "--fields", str(fields_path),
                "--out", str(out),
            ]
        )
        assert rc == 0
        refined, _ = read_lines(out)
        assert len(refined) == 1
        assert orthogonal_distance(refined[0], GT_SEG) < orthogonal_distance(pert, GT_SEG)

    def test_vp_mode_writes_vp_file(self, tmp_path) -> None:
        rng = np.random.default_rng(81)
        gt = pencil_segments(rng, vp_xy=(1800.0, 128.0), size=256, n=8, half_range=(8.0, 12.0))
        fields_path = tmp_path / "gt.dlsf"
        write_field_file(fields_path, render_fields(gt, 256, 256))
        lines_path = tmp_path / "pert.csv"
        write_lines(lines_path, [perturb_segment(s, rng) for s in gt])
        out = tmp_path / "ref.csv"
        vps_out = tmp_path / "vps.json"
        rc = main(
            [
                "refine",
                "--lines", str(lines_path),
                "--fields", str(fields_path),
                "--vp",
                "--out", str(out),
                "--vps-out", str(vps_out),
            ]
        )
        assert rc == 0
        refined, _ = read_lines(out)
        assert len(refined) == 8
        vps, assignment = read_vp_file(vps_out)
        assert len(vps) == 1
        assert assignment == [0] * 8

    def test_vps_out_requires_vp_flag(self, tmp_path, capsys) -> None:
        lines_path, fields_path = write_gt_inputs(tmp_path)
        rc = main(
            [
                "refine",
                "--lines", str(lines_path),
                "--fields", str(fields_path),
                "--out", str(tmp_path / "ref.csv"),
                "--vps-out", str(tmp_path / "vps.json"),
            ]
        )
        assert rc == 1
        assert "error: --vps-out requires --vp" in capsys.readouterr().err


class TestVps:
    def test_finds_pencil_point(self, tmp_path) -> None:
        rng = np.random.default_rng(82)
        lines = pencil_segments(rng, vp_xy=(600.0, 128.0), size=256, n=8)
        lines_path = tmp_path / "l.csv"
        write_lines(lines_path, lines)
        out = tmp_path / "vps.json"
        rc = main(
            [
                "vps",
                "--lines", str(lines_path),
                "--width", "256",
                "--height", "256",
                "--out", str(out),
            ]
        )
        assert rc == 0
        vps, assignment = read_vp_file(out)
        assert len(vps) == 1
        assert assignment == [0] * 8
        euc = vps[0].v[:2] / vps[0].v[2]
        assert math.hypot(euc[0] - 600.0, euc[1] - 128.0) < 1.0

    def test_same_seed_same_bytes(self, tmp_path) -> None:
        rng = np.random.default_rng(83)
        lines = pencil_segments(rng, vp_xy=(-400.0, 30.0), size=256, n=8)
        lines_path = tmp_path / "l.csv"
        write_lines(lines_path, lines)
        out1 = tmp_path / "a.json"
        out2 = tmp_path / "b.json"
        base = [
            "vps",
            "--lines", str(lines_path),
            "--width", "256",
            "--height", "256",
            "--seed", "3",
        ]
        assert main(base + ["--out", str(out1)]) == 0
        assert main(base + ["--out", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_rejects_bad_dimensions(self, tmp_path, capsys) -> None:
        lines_path, _ = write_gt_inputs(tmp_path)
        rc = main(
            [
                "vps",
                "--lines", str(lines_path),
                "--width", "0",
                "--height", "256",
                "--out", str(tmp_path / "v.json"),
            ]
        )
        assert rc == 1
        assert "error: image dimensions must be positive" in capsys.readouterr().err


class TestEval:
    def write_pair(self, tmp_path):
        # Scattered segments, not a pencil: concurrent lines are degenerate
        # for line-based homography fitting, which hest exercises.
        rng = np.random.default_rng(84)
        lines = []
        for _ in range(20):
            mid = rng.uniform(5.0, 250.0, size=2)
            angle = rng.uniform(0.0, math.pi)
            half = 0.5 * rng.uniform(15.0, 40.0)
            d = np.array([math.cos(angle), math.sin(angle)])
            lines.append(LineSegment(mid - half * d, mid + half * d))
        a = tmp_path / "a.csv"
        write_lines(a, lines)
        h = tmp_path / "h.txt"
        h.write_text(IDENTITY_H)
        return a, h

    def test_rep_identity(self, tmp_path, capsys) -> None:
        a, h = self.write_pair(tmp_path)
        rc = main(
            [
                "eval", "rep",
                "--lines-a", str(a),
                "--lines-b", str(a),
                "--homography", str(h),
            ]
        )
        assert rc == 0
        assert capsys.readouterr().out == "repeatability 1.0\n"

    def test_le_identity(self, tmp_path, capsys) -> None:
        a, h = self.write_pair(tmp_path)
        rc = main(
            [
                "eval", "le",
                "--lines-a", str(a),
                "--lines-b", str(a),
                "--homography", str(h),
            ]
        )
        assert rc == 0
        assert capsys.readouterr().out == "localization_error 0.0\n"

    def test_hest_identity(self, tmp_path, capsys) -> None:
        a, h = self.write_pair(tmp_path)
        rc = main(
            [
                "eval", "hest",
                "--lines-a", str(a),
                "--lines-b", str(a),
                "--homography", str(h),
                "--width", "256",
                "--height", "256",
            ]
        )
        assert rc == 0
        out_lines = capsys.readouterr().out.splitlines()
        assert out_lines[0].startswith("corner_error ")
        assert float(out_lines[0].split()[1]) < 0.5
        assert out_lines[1] == "num_inliers 20"

    def test_vp_self_match(self, tmp_path, capsys) -> None:
        vps_path = tmp_path / "v.json"
        rng = np.random.default_rng(85)
        lines = pencil_segments(rng, vp_xy=(600.0, 128.0), size=256, n=8)
        lines_path = tmp_path / "l.csv"
        write_lines(lines_path, lines)
        assert main(
            [
                "vps",
                "--lines", str(lines_path),
                "--width", "256",
                "--height", "256",
                "--out", str(vps_path),
            ]
        ) == 0
        capsys.readouterr()
        rc = main(
            [
                "eval", "vp",
                "--vps", str(vps_path),
                "--gt-vps", str(vps_path),
                "--fx", "256", "--fy", "256", "--cx", "128", "--cy", "128",
            ]
        )
        assert rc == 0
        out_lines = capsys.readouterr().out.splitlines()
        assert out_lines[0].startswith("median_error_deg ")
        assert out_lines[1].startswith("auc ")
        # arccos of a near-1 dot product turns last-bit noise into ~1e-6
        # degrees, so self-comparison is only near-exact.
        assert float(out_lines[0].split()[1]) < 1e-4
        assert float(out_lines[1].split()[1]) > 1.0 - 1e-6

    def test_vp_consistency_exact(self, tmp_path, capsys) -> None:
        rng = np.random.default_rng(86)
        lines = pencil_segments(rng, vp_xy=(600.0, 128.0), size=256, n=8)
        lines_path = tmp_path / "l.csv"
        write_lines(lines_path, lines)
        vps_path = tmp_path / "v.json"
        assert main(
            [
                "vps",
                "--lines", str(lines_path),
                "--width", "256",
                "--height", "256",
                "--out", str(vps_path),
            ]
        ) == 0
        rc = main(
            [
                "eval", "vp-consistency",
                "--lines", str(lines_path),
                "--gt-vps", str(vps_path),
                "--vps", str(vps_path),
                "--thresholds", "1,2.5",
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert out == "consistency@1 1.0\nconsistency@2.5 1.0\n"

    def test_vp_consistency_length_mismatch(self, tmp_path, capsys) -> None:
        rng = np.random.default_rng(86)
        lines = pencil_segments(rng, vp_xy=(600.0, 128.0), size=256, n=8)
        lines_path = tmp_path / "l.csv"
        write_lines(lines_path, lines)
        vps_path = tmp_path / "v.json"
        assert main(
            [
                "vps",
                "--lines", str(lines_path),
                "--width", "256",
                "--height", "256",
                "--out", str(vps_path),
            ]
        ) == 0
        short_path = tmp_path / "short.csv"
        write_lines(short_path, lines[:4])
        rc = main(
            [
                "eval", "vp-consistency",
                "--lines", str(short_path),
                "--gt-vps", str(vps_path),
                "--vps", str(vps_path),
            ]
        )
        assert rc == 1
        assert "error: assignment length" in capsys.readouterr().err


class TestErrorReporting:
    def test_malformed_field_file_diagnostic(self, tmp_path, capsys) -> None:
        bad = tmp_path / "bad.dlsf"
        bad.write_bytes(b"XXXXXXXXXXXXXXXXXXXXXXXX")
        rc = main(["detect", "--fields", str(bad), "--out", str(tmp_path / "o.csv")])
        assert rc == 1
        err = capsys.readouterr().err
        assert err.startswith("error: ")
        assert "byte offset" in err

    def test_missing_input_file(self, tmp_path, capsys) -> None:
        rc = main(
            [
                "gen-fields",
                "--lines", str(tmp_path / "nope.csv"),
                "--width", "64",
                "--height", "64",
                "--out", str(tmp_path / "o.dlsf"),
            ]
        )
        assert rc == 1
        assert capsys.readouterr().err.startswith("error: ")

    def test_malformed_lines_file_diagnostic(self, tmp_path, capsys) -> None:
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0,2.0\n")
        rc = main(
            [
                "gen-fields",
                "--lines", str(bad),
                "--width", "64",
                "--height", "64",
                "--out", str(tmp_path / "o.dlsf"),
            ]
        )
        assert rc == 1
        assert "expected 4 comma-separated" in capsys.readouterr().err
