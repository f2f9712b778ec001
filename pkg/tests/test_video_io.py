"""Raw clip format: exact roundtrip, sidecar validation, streaming reads."""

import json
import os

import numpy as np
import pytest

from streamvsr.errors import DataError
from streamvsr.rng import make_rng
from streamvsr.video_io import (
    RawVideoReader,
    read_png_sequence,
    read_raw_video,
    write_png_sequence,
    write_raw_video,
)


class TestRawFormat:
    def test_exact_roundtrip(self, tmp_path):
        video = make_rng(0, "io").random((3, 5, 8, 12)).astype(np.float32)
        path = write_raw_video(str(tmp_path / "clip"), video)
        assert path.endswith(".rgb32")
        back = read_raw_video(str(tmp_path / "clip"))
        assert np.array_equal(back, video)

    def test_sidecar_contents(self, tmp_path):
        video = np.zeros((3, 2, 4, 4), dtype=np.float32)
        write_raw_video(str(tmp_path / "clip"), video)
        with open(tmp_path / "clip.json") as fh:
            meta = json.load(fh)
        assert meta == {"shape": [3, 2, 4, 4], "dtype": "float32", "layout": "CTHW"}

    def test_bad_shape_rejected(self, tmp_path):
        with pytest.raises(DataError):
            write_raw_video(str(tmp_path / "clip"), np.zeros((1, 2, 4, 4)))

    def test_missing_sidecar_rejected(self, tmp_path):
        video = np.zeros((3, 2, 4, 4), dtype=np.float32)
        write_raw_video(str(tmp_path / "clip"), video)
        os.remove(tmp_path / "clip.json")
        with pytest.raises(DataError):
            read_raw_video(str(tmp_path / "clip"))

    def test_truncated_payload_rejected(self, tmp_path):
        video = np.zeros((3, 2, 4, 4), dtype=np.float32)
        path = write_raw_video(str(tmp_path / "clip"), video)
        with open(path, "r+b") as fh:
            fh.truncate(10)
        with pytest.raises(DataError):
            read_raw_video(str(tmp_path / "clip"))


class TestStreamingReader:
    def test_frame_ranges_match_full_read(self, tmp_path):
        video = make_rng(1, "io").random((3, 9, 6, 6)).astype(np.float32)
        write_raw_video(str(tmp_path / "clip"), video)
        with RawVideoReader(str(tmp_path / "clip")) as reader:
            assert reader.frames == 9
            assert np.array_equal(reader.read_frames(0, 3), video[:, 0:3])
            assert np.array_equal(reader.read_frames(4, 9), video[:, 4:9])

    def test_bad_range_rejected(self, tmp_path):
        video = np.zeros((3, 4, 4, 4), dtype=np.float32)
        write_raw_video(str(tmp_path / "clip"), video)
        with RawVideoReader(str(tmp_path / "clip")) as reader:
            with pytest.raises(DataError):
                reader.read_frames(2, 2)
            with pytest.raises(DataError):
                reader.read_frames(0, 5)


class TestPngSequences:
    def test_quantized_roundtrip(self, tmp_path):
        video = make_rng(2, "io").random((3, 3, 8, 8)).astype(np.float32)
        write_png_sequence(str(tmp_path / "frames"), video)
        back = read_png_sequence(str(tmp_path / "frames"))
        assert back.shape == video.shape
        assert np.max(np.abs(back - video)) <= 0.5 / 255.0 + 1e-6

    def test_empty_directory_rejected(self, tmp_path):
        os.makedirs(tmp_path / "empty")
        with pytest.raises(DataError):
            read_png_sequence(str(tmp_path / "empty"))
