import json

import numpy as np
import pytest

from lsdm.catalogs import NUM_POI_CATEGORIES, NUM_SERVICES
from lsdm.dataset import (DataValidationError, Dataset, ImageFeatureSeries,
                          PoiSeries, TrafficMatrix, UserRecord, load_dataset,
                          read_matrix_csv, read_tiles, save_dataset,
                          write_matrix_csv, write_tiles)

START = np.datetime64("2024-01-01T00", "h")


def _record(uid="u1", m=5, tile_shape=(8, 8, 3)):
    rng = np.random.default_rng(3)
    return UserRecord(
        traffic=TrafficMatrix(uid, START, rng.uniform(0, 10, (m, NUM_SERVICES))),
        poi=PoiSeries(uid, rng.integers(0, 5, (m, NUM_POI_CATEGORIES))),
        tiles=ImageFeatureSeries(uid, rng.normal(size=(m,) + tile_shape).astype(np.float32)),
    )


class TestValidation:
    def test_traffic_shape(self):
        with pytest.raises(DataValidationError, match="traffic matrix"):
            TrafficMatrix("u", START, np.zeros((4, 3)))

    def test_traffic_negative(self):
        with pytest.raises(DataValidationError, match="negative traffic"):
            TrafficMatrix("u", START, np.full((4, NUM_SERVICES), -1.0))

    def test_traffic_non_finite(self):
        with pytest.raises(DataValidationError, match="non-finite traffic"):
            TrafficMatrix("u", START, np.full((4, NUM_SERVICES), np.nan))

    def test_poi_shape_and_sign(self):
        with pytest.raises(DataValidationError, match="POI series"):
            PoiSeries("u", np.zeros((4, 3), dtype=np.int64))
        with pytest.raises(DataValidationError, match="negative POI"):
            PoiSeries("u", np.full((4, NUM_POI_CATEGORIES), -1))

    def test_tiles_non_finite(self):
        bad = np.full((4, 8, 8, 3), np.inf, dtype=np.float32)
        with pytest.raises(DataValidationError, match="non-finite tile"):
            ImageFeatureSeries("u", bad)

    def test_misaligned_poi_rows(self):
        r = _record()
        with pytest.raises(DataValidationError, match="misaligned with traffic rows"):
            UserRecord(traffic=r.traffic,
                       poi=PoiSeries("u1", r.poi.counts[:-1]),
                       tiles=r.tiles)

    def test_misaligned_tiles(self):
        r = _record()
        with pytest.raises(DataValidationError, match="misaligned with traffic rows"):
            UserRecord(traffic=r.traffic, poi=r.poi,
                       tiles=ImageFeatureSeries("u1", r.tiles.tiles[:-1]))

    def test_mismatched_user_ids(self):
        r = _record()
        with pytest.raises(DataValidationError, match="mismatched user ids"):
            UserRecord(traffic=r.traffic, poi=PoiSeries("u2", r.poi.counts), tiles=r.tiles)

    def test_dataset_tile_shape_mismatch(self):
        with pytest.raises(DataValidationError, match="tile shape"):
            Dataset(users=(_record(tile_shape=(4, 4, 3)),), tile_shape=(8, 8, 3))

    def test_user_lookup(self):
        ds = Dataset(users=(_record("a"), _record("b")))
        assert ds.user("a").user_id == "a"
        with pytest.raises(KeyError, match="unknown user id"):
            ds.user("zzz")
        assert len(ds) == 2
        assert [u.user_id for u in ds] == ["a", "b"]


class TestCsv:
    def test_round_trip(self, tmp_path):
        values = np.random.default_rng(1).uniform(0, 100, (6, NUM_SERVICES))
        path = tmp_path / "traffic.csv"
        write_matrix_csv(path, "u9", values, "s")
        uid, back = read_matrix_csv(path, NUM_SERVICES, "traffic")
        assert uid == "u9"
        np.testing.assert_array_equal(back, values)

    def test_integer_round_trip(self, tmp_path):
        counts = np.random.default_rng(1).integers(0, 9, (6, NUM_POI_CATEGORIES))
        path = tmp_path / "poi.csv"
        write_matrix_csv(path, "u9", counts, "p")
        uid, back = read_matrix_csv(path, NUM_POI_CATEGORIES, "POI", integer=True)
        assert back.dtype == np.int64
        np.testing.assert_array_equal(back, counts)

    def _write(self, path, lines):
        path.write_text("\n".join(lines) + "\n")

    def test_bad_header(self, tmp_path):
        path = tmp_path / "t.csv"
        self._write(path, ["user_id,t,s1"])
        with pytest.raises(DataValidationError, match="malformed traffic header"):
            read_matrix_csv(path, NUM_SERVICES, "traffic")

    def test_row_errors_carry_line_numbers(self, tmp_path):
        header = "user_id,t," + ",".join(f"s{i+1}" for i in range(NUM_SERVICES))
        good = "u,0," + ",".join("1" for _ in range(NUM_SERVICES))
        path = tmp_path / "t.csv"

        self._write(path, [header, good, "u,1,1,2"])
        with pytest.raises(DataValidationError, match=rf"{path}:3: expected"):
            read_matrix_csv(path, NUM_SERVICES, "traffic")

        self._write(path, [header, good, "v,1," + ",".join("1" for _ in range(NUM_SERVICES))])
        with pytest.raises(DataValidationError, match="mixed user ids"):
            read_matrix_csv(path, NUM_SERVICES, "traffic")

        self._write(path, [header, good, "u,5," + ",".join("1" for _ in range(NUM_SERVICES))])
        with pytest.raises(DataValidationError, match="hour index 5, expected 1"):
            read_matrix_csv(path, NUM_SERVICES, "traffic")

        self._write(path, [header, "u,0,-1," + ",".join("1" for _ in range(NUM_SERVICES - 1))])
        with pytest.raises(DataValidationError, match="invalid value"):
            read_matrix_csv(path, NUM_SERVICES, "traffic")

        self._write(path, [header, "u,0,x," + ",".join("1" for _ in range(NUM_SERVICES - 1))])
        with pytest.raises(DataValidationError, match=rf"{path}:2: malformed row"):
            read_matrix_csv(path, NUM_SERVICES, "traffic")

    def test_non_integer_poi_rejected(self, tmp_path):
        header = "user_id,t," + ",".join(f"p{i+1}" for i in range(NUM_POI_CATEGORIES))
        path = tmp_path / "p.csv"
        self._write(path, [header, "u,0,1.5," + ",".join("1" for _ in range(NUM_POI_CATEGORIES - 1))])
        with pytest.raises(DataValidationError, match="not an integer"):
            read_matrix_csv(path, NUM_POI_CATEGORIES, "POI", integer=True)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "t.csv"
        self._write(path, ["user_id,t," + ",".join(f"s{i+1}" for i in range(NUM_SERVICES))])
        with pytest.raises(DataValidationError, match="no data rows"):
            read_matrix_csv(path, NUM_SERVICES, "traffic")


class TestTiles:
    def test_round_trip(self, tmp_path):
        tiles = np.random.default_rng(2).normal(size=(5, 8, 8, 3)).astype(np.float32)
        path = tmp_path / "tiles.bin"
        write_tiles(path, tiles)
        back = read_tiles(path)
        np.testing.assert_array_equal(back, tiles.reshape(5, -1))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "tiles.bin"
        path.write_bytes(b"XXXX" + bytes(12))
        with pytest.raises(DataValidationError, match="bad tile file header"):
            read_tiles(path)

    def test_bad_padding(self, tmp_path):
        tiles = np.zeros((1, 2, 2, 1), dtype=np.float32)
        path = tmp_path / "tiles.bin"
        write_tiles(path, tiles)
        raw = bytearray(path.read_bytes())
        raw[12] = 1
        path.write_bytes(bytes(raw))
        with pytest.raises(DataValidationError, match="bad tile header padding"):
            read_tiles(path)

    def test_truncated_payload(self, tmp_path):
        tiles = np.zeros((2, 2, 2, 1), dtype=np.float32)
        path = tmp_path / "tiles.bin"
        write_tiles(path, tiles)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DataValidationError, match="payload is"):
            read_tiles(path)


class TestManifest:
    def test_save_load_round_trip(self, tmp_path, small_dataset):
        manifest = save_dataset(small_dataset, tmp_path)
        back = load_dataset(manifest)
        assert len(back) == len(small_dataset)
        assert back.tile_shape == small_dataset.tile_shape
        for a, b in zip(small_dataset, back):
            assert a.user_id == b.user_id
            np.testing.assert_array_equal(a.traffic.values, b.traffic.values)
            np.testing.assert_array_equal(a.poi.counts, b.poi.counts)
            np.testing.assert_array_equal(a.tiles.tiles, b.tiles.tiles)

    def test_users_sorted_regardless_of_manifest_order(self, tmp_path, small_dataset):
        manifest = save_dataset(small_dataset, tmp_path)
        doc = json.loads(manifest.read_text())
        doc["users"] = doc["users"][::-1]
        manifest.write_text(json.dumps(doc))
        back = load_dataset(manifest)
        ids = [u.user_id for u in back]
        assert ids == sorted(ids)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="manifest not found"):
            load_dataset(tmp_path / "nope.json")

    def test_bad_version(self, tmp_path, small_dataset):
        manifest = save_dataset(small_dataset, tmp_path)
        doc = json.loads(manifest.read_text())
        doc["version"] = 2
        manifest.write_text(json.dumps(doc))
        with pytest.raises(DataValidationError, match="unsupported manifest version"):
            load_dataset(manifest)

    def test_bad_service_count(self, tmp_path, small_dataset):
        manifest = save_dataset(small_dataset, tmp_path)
        doc = json.loads(manifest.read_text())
        doc["services"] = 9
        manifest.write_text(json.dumps(doc))
        with pytest.raises(DataValidationError, match="services count"):
            load_dataset(manifest)

    def test_missing_referenced_file(self, tmp_path, small_dataset):
        manifest = save_dataset(small_dataset, tmp_path)
        victim = json.loads(manifest.read_text())["users"][0]["traffic_csv"]
        (tmp_path / victim).unlink()
        with pytest.raises(FileNotFoundError, match="missing file referenced"):
            load_dataset(manifest)

    def test_parallel_load_matches_serial(self, tmp_path, small_dataset, monkeypatch):
        manifest = save_dataset(small_dataset, tmp_path)
        serial = load_dataset(manifest)
        monkeypatch.setenv("LSDM_NUM_WORKERS", "3")
        parallel = load_dataset(manifest)
        for a, b in zip(serial, parallel):
            assert a.user_id == b.user_id
            np.testing.assert_array_equal(a.traffic.values, b.traffic.values)

    @pytest.mark.parametrize("value", ["0", "-2", "abc"])
    def test_bad_worker_env(self, tmp_path, small_dataset, monkeypatch, value):
        manifest = save_dataset(small_dataset, tmp_path)
        monkeypatch.setenv("LSDM_NUM_WORKERS", value)
        with pytest.raises(ValueError, match="LSDM_NUM_WORKERS"):
            load_dataset(manifest)
