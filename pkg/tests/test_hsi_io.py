import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vbunmix.errors import DomainError, ParseError, ShapeError
from vbunmix.hsi_io import (AbundanceMap, BandExclusion, EnviHeader, HsiCube,
                            apply_band_exclusion, encode_cube, load_cube,
                            load_endmembers_csv, parse_envi_header, read_csv_matrix,
                            read_envi, read_pgm, renormalize_sum_to_one, to_gray8,
                            write_abundance_outputs, write_csv_matrix, write_pgm)
from vbunmix.model import EndmemberMatrix

SCENE_HEADER = "samples = 191\nlines = 250\nbands = 224\ninterleave = bip\ndata type = 2\nbyte order = 0"

# Logical 2x2x2 cube: value = 1 + 4*band + 2*line + sample (all 0-based).
LOGICAL = np.array([[[1, 5], [2, 6]], [[3, 7], [4, 8]]], dtype=float)
# Hand-enumerated file order for each interleave.
FILE_ORDER = {
    "bsq": [1, 2, 3, 4, 5, 6, 7, 8],   # band, line, sample
    "bil": [1, 2, 5, 6, 3, 4, 7, 8],   # line, band, sample
    "bip": [1, 5, 2, 6, 3, 7, 4, 8],   # line, sample, band
}


def header_for(interleave, dtype_code=2, byte_order=0, offset=0, dims=(2, 2, 2)):
    samples, lines, bands = dims
    return EnviHeader(samples, lines, bands, interleave, dtype_code, byte_order, offset)


class TestParseHeader:
    def test_scene_example(self):
        h = parse_envi_header(SCENE_HEADER)
        assert (h.samples, h.lines, h.bands, h.interleave) == (191, 250, 224, "bip")
        assert h.dtype == np.dtype("<i2") and h.header_offset == 0

    def test_unknown_keys_ignored(self):
        text = "ENVI\ndescription = {a scene,\n  two lines}\nwavelength units = nm\n" + SCENE_HEADER
        assert parse_envi_header(text) == parse_envi_header(SCENE_HEADER)

    def test_case_insensitive(self):
        upper = SCENE_HEADER.replace("bip", "BIP").replace("samples", "SAMPLES")
        assert parse_envi_header(upper) == parse_envi_header(SCENE_HEADER)

    def test_float_big_endian_with_offset(self):
        text = SCENE_HEADER.replace("data type = 2", "data type = 4").replace(
            "byte order = 0", "byte order = 1") + "\nheader offset = 128"
        h = parse_envi_header(text)
        assert h.dtype == np.dtype(">f4") and h.header_offset == 128

    @pytest.mark.parametrize("key", ["samples", "lines", "bands", "interleave",
                                     "data type", "byte order"])
    def test_missing_key_named(self, key):
        text = "\n".join(l for l in SCENE_HEADER.splitlines() if not l.startswith(key))
        with pytest.raises(ParseError, match=key):
            parse_envi_header(text)

    @pytest.mark.parametrize("old, new", [("bip", "bipx"), ("data type = 2", "data type = 12"),
                                          ("byte order = 0", "byte order = 2"),
                                          ("samples = 191", "samples = many")])
    def test_rejects(self, old, new):
        with pytest.raises(ParseError):
            parse_envi_header(SCENE_HEADER.replace(old, new))


class TestLoadCube:
    @pytest.mark.parametrize("interleave", ["bsq", "bil", "bip"])
    def test_golden_addressing(self, interleave):
        raw = np.array(FILE_ORDER[interleave], dtype="<i2").tobytes()
        cube = load_cube(header_for(interleave), raw)
        np.testing.assert_array_equal(cube.data, LOGICAL)
        assert cube.data[1, 0, 1] == 7  # line 1, sample 0, band 1

    @pytest.mark.parametrize("interleave", ["bsq", "bil", "bip"])
    def test_encode_matches_golden(self, interleave):
        assert encode_cube(LOGICAL, interleave) == np.array(FILE_ORDER[interleave], "<i2").tobytes()

    def test_big_endian_float_with_offset(self):
        raw = b"\0" * 16 + np.array(FILE_ORDER["bsq"], dtype=">f4").tobytes()
        cube = load_cube(header_for("bsq", 4, 1, 16), raw)
        np.testing.assert_array_equal(cube.data, LOGICAL)

    def test_truncated(self):
        raw = np.array(FILE_ORDER["bsq"], dtype="<i2").tobytes()[:-2]
        with pytest.raises(ShapeError, match="expected 16 bytes, got 14"):
            load_cube(header_for("bsq"), raw)

    def test_scale(self):
        raw = np.array(FILE_ORDER["bip"], dtype="<i2").tobytes()
        np.testing.assert_array_equal(load_cube(header_for("bip"), raw, 0.5).data, LOGICAL / 2)

    def test_non_finite_rejected(self):
        raw = np.array([1, 2, 3, np.nan, 5, 6, 7, 8], dtype="<f4").tobytes()
        with pytest.raises(DomainError):
            load_cube(header_for("bsq", 4), raw)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.int16, st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 5))))
    def test_interleave_equivalence(self, data):
        lines, samples, bands = data.shape
        loaded = [load_cube(header_for(il, dims=(samples, lines, bands)),
                            encode_cube(data, il)).data for il in ("bsq", "bil", "bip")]
        for cube in loaded:
            np.testing.assert_array_equal(cube, data)

    def test_read_envi(self, tmp_path):
        (tmp_path / "c.hdr").write_text("samples=2\nlines=2\nbands=2\ninterleave=bil\n"
                                        "data type=2\nbyte order=0\n")
        (tmp_path / "c.img").write_bytes(np.array(FILE_ORDER["bil"], "<i2").tobytes())
        _, cube = read_envi(tmp_path / "c.hdr", tmp_path / "c.img")
        np.testing.assert_array_equal(cube.data, LOGICAL)


class TestBandExclusion:
    def test_scene_preset(self):
        ex = BandExclusion.parse("cuprite-1997")
        assert len(ex.excluded) == 36 and ex.retained(224) == 188
        keep = ex.keep_mask(224)
        assert not keep[0] and not keep[1] and keep[2] and not keep[103] and keep[113]

    def test_range_syntax_matches_preset(self):
        assert BandExclusion.parse("1-2, 104-113,148-167,221-224") == BandExclusion.parse("cuprite-1997")

    def test_empty_is_identity(self):
        cube = HsiCube(LOGICAL)
        reduced, _ = apply_band_exclusion(cube, BandExclusion.parse("none"))
        np.testing.assert_array_equal(reduced.data, LOGICAL)

    def test_order_preserved(self):
        data = np.arange(2 * 3 * 6, dtype=float).reshape(2, 3, 6)
        reduced, _ = apply_band_exclusion(HsiCube(data), BandExclusion.parse("2,4-5"))
        np.testing.assert_array_equal(reduced.data, data[:, :, [0, 2, 5]])

    def test_exclude_everything(self):
        with pytest.raises(DomainError):
            apply_band_exclusion(HsiCube(LOGICAL), BandExclusion.parse("1-2"))

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            BandExclusion.parse("3").keep_mask(2)

    @pytest.mark.parametrize("spec", ["a-b", "5-3", "1,,2"])
    def test_bad_syntax(self, spec):
        with pytest.raises(ParseError):
            BandExclusion.parse(spec)

    def test_pairs_endmember_rows(self):
        rng = np.random.default_rng(0)
        data = rng.uniform(size=(2, 2, 224))
        phi = EndmemberMatrix(rng.uniform(0.1, 1, (224, 3)))
        ex = BandExclusion.parse("cuprite-1997")
        reduced, phi_r = apply_band_exclusion(HsiCube(data), ex, phi)
        keep = ex.keep_mask(224)
        assert phi_r.n_bands == reduced.bands == 188
        np.testing.assert_array_equal(phi_r.columns, phi.columns[keep])
        np.testing.assert_array_equal(reduced.data[1, 0], data[1, 0, keep])
        # a matrix already at the reduced size passes through untouched
        assert apply_band_exclusion(HsiCube(data), ex, phi_r)[1] is phi_r

    def test_mismatched_endmember_rows(self):
        phi = EndmemberMatrix(np.ones((5, 1)))
        with pytest.raises(ShapeError):
            apply_band_exclusion(HsiCube(np.ones((1, 1, 224))), BandExclusion.parse("cuprite-1997"), phi)


class TestEndmemberCsv:
    def test_small_example(self):
        phi = load_endmembers_csv("1,0\n0,1\n0,0")
        np.testing.assert_array_equal(phi.column_sq_norms, [1.0, 1.0])

    def test_scene_dimensions(self):
        text = "\n".join(",".join(f"{0.1 + 0.01 * (r + c):.4f}" for c in range(14)) for r in range(188))
        phi = load_endmembers_csv(text)
        assert (phi.n_bands, phi.n_endmembers) == (188, 14)

    def test_trailing_comma(self):
        with pytest.raises(ParseError, match="row 2"):
            load_endmembers_csv("1,0\n0,1,\n0,0")

    def test_non_numeric_position(self):
        with pytest.raises(ParseError, match="row 3, column 2"):
            load_endmembers_csv("1,0\n0,1\n0,x")

    def test_empty(self):
        with pytest.raises(ParseError):
            load_endmembers_csv("\n\n")


class TestAbundanceOutputs:
    def test_constant_map(self, tmp_path):
        amap = AbundanceMap(np.full((2, 2, 1), 0.5), ("a",))
        write_abundance_outputs(amap, tmp_path)
        assert np.all(read_pgm(tmp_path / "abundance_a.pgm") == 255)
        np.testing.assert_array_equal(read_csv_matrix(tmp_path / "abundance_a.csv"), 0.5)

    def test_zero_map(self, tmp_path):
        with np.errstate(all="raise"):
            write_abundance_outputs(AbundanceMap(np.zeros((3, 2, 1)), ("z",)), tmp_path)
        assert np.all(read_pgm(tmp_path / "abundance_z.pgm") == 0)

    def test_scene_sized_outputs(self, tmp_path):
        labels = tuple(f"em{k:02d}" for k in range(1, 15))
        values = np.random.default_rng(1).uniform(size=(250, 191, 14))
        written = write_abundance_outputs(AbundanceMap(values, labels), tmp_path)
        assert len([p for p in written if p.suffix == ".pgm"]) == 14
        assert len([p for p in written if p.suffix == ".csv"]) == 14
        blob = (tmp_path / "abundance_em01.pgm").read_bytes()
        assert blob.split()[:4] == [b"P5", b"191", b"250", b"255"]
        assert read_pgm(tmp_path / "abundance_em01.pgm").shape == (250, 191)

    def test_sentinel_pixels(self, tmp_path):
        values = np.array([[[0.2, 0.4], [-1.0, -1.0]], [[0.1, 0.0], [0.3, 0.8]]])
        amap = AbundanceMap(values, ("a", "b"))
        assert amap.failed.tolist() == [[False, True], [False, False]]
        write_abundance_outputs(amap, tmp_path)
        gray = read_pgm(tmp_path / "abundance_b.pgm")
        assert gray[0, 1] == 0 and gray[1, 1] == 255 and gray[0, 0] == round(255 * 0.4 / 0.8)
        sidecar = (tmp_path / "outputs.txt").read_text()
        assert "failed_pixels=1" in sidecar and sidecar.rstrip().endswith("0,1")
        assert "max[b]=0.8" in sidecar

    def test_format_selection(self, tmp_path):
        written = write_abundance_outputs(AbundanceMap(np.ones((1, 1, 1)), ("a",)), tmp_path, ("csv",))
        assert [p.name for p in written] == ["abundance_a.csv", "outputs.txt"]
        with pytest.raises(DomainError):
            write_abundance_outputs(AbundanceMap(np.ones((1, 1, 1)), ("a",)), tmp_path, ("tif",))

    def test_unwritable_directory(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError):
            write_abundance_outputs(AbundanceMap(np.ones((1, 1, 1)), ("a",)), blocker / "sub")

    @settings(max_examples=40, deadline=None)
    @given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(0, 1e6, allow_subnormal=True)))
    def test_csv_round_trip(self, tmp_path_factory, plane):
        path = tmp_path_factory.mktemp("csv") / "m.csv"
        write_csv_matrix(path, plane)
        np.testing.assert_allclose(read_csv_matrix(path), plane, rtol=1e-12, atol=0)

    def test_gray_scaling_linear(self):
        gray = to_gray8(np.array([[0.0, 0.25], [0.5, 1.0]]))
        assert gray.tolist() == [[0, 64], [128, 255]]

    def test_pgm_round_trip_and_truncation(self, tmp_path):
        gray = np.arange(12, dtype=np.uint8).reshape(3, 4)
        write_pgm(tmp_path / "g.pgm", gray)
        np.testing.assert_array_equal(read_pgm(tmp_path / "g.pgm"), gray)
        (tmp_path / "t.pgm").write_bytes((tmp_path / "g.pgm").read_bytes()[:-3])
        with pytest.raises(ParseError):
            read_pgm(tmp_path / "t.pgm")
        (tmp_path / "h.pgm").write_bytes(b"P5\n4")
        with pytest.raises(ParseError):
            read_pgm(tmp_path / "h.pgm")

    def test_renormalize(self):
        values = np.array([[[0.2, 0.6], [0.0, 0.0], [-1.0, -1.0]]])
        failed = np.array([[False, False, True]])
        out = renormalize_sum_to_one(values, failed)
        np.testing.assert_allclose(out[0, 0], [0.25, 0.75])
        assert out[0, 1].tolist() == [0.0, 0.0] and out[0, 2].tolist() == [-1.0, -1.0]
