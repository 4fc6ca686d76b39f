import io
import json

import numpy as np
import pytest

from aurora_eb.errors import Empty, InvalidConfig, NonFinite, ParseError, RaggedRows, TooFewReplicates
from aurora_eb.io import (
    fmt,
    load_config,
    parse_config,
    parse_replicates,
    read_estimates,
    read_replicates_csv,
    write_estimates,
)
from aurora_eb.simlab import LocationLikelihood, NormalPrior, ThreePointPrior

BASE = {
    "n": 100, "B": 10, "reps": 3, "seed": 7,
    "prior": {"type": "normal", "mean": 0.5, "var": 4},
    "likelihood": {"type": "normal", "var": 4},
    "methods": ["auroral", "js"],
}


def _doc(**changes):
    d = json.loads(json.dumps(BASE))
    d.update(changes)
    return d


class TestReadCsv:
    def test_simple(self):
        t = parse_replicates("1,2,3\n4,5,6")
        assert t.matrix.values.tolist() == [[1, 2, 3], [4, 5, 6]]
        assert t.ids is None

    def test_ragged(self):
        with pytest.raises(RaggedRows) as info:
            parse_replicates("1,2\n3", allow_b2=True)
        assert info.value.line == 2

    def test_header_only_is_empty(self):
        with pytest.raises(Empty):
            parse_replicates("r1,r2,r3\n", has_header=True)

    def test_header_and_ids(self):
        t = parse_replicates("id,a,b,c\nu1,1,2,3\nu2,4,5,6\n", has_header=True, id_column=True)
        assert t.ids == ["u1", "u2"]
        assert t.header == ["a", "b", "c"]
        assert t.matrix.B == 3

    def test_parse_error_location(self):
        with pytest.raises(ParseError) as info:
            parse_replicates("1,2,3\n4,x,6\n")
        assert (info.value.line, info.value.column) == (2, 2)

    def test_parse_error_column_counts_id(self):
        with pytest.raises(ParseError) as info:
            parse_replicates("a,1,2,3\nb,4,5,?\n", id_column=True)
        assert (info.value.line, info.value.column) == (2, 4)

    def test_non_finite(self):
        with pytest.raises(NonFinite):
            parse_replicates("1,2,nan\n")

    def test_b2_guard(self):
        with pytest.raises(TooFewReplicates):
            parse_replicates("1,2\n3,4\n")
        assert parse_replicates("1,2\n3,4\n", allow_b2=True).matrix.B == 2

    def test_blank_lines_skipped(self):
        assert parse_replicates("\n1,2,3\n\n4,5,6\n\n").matrix.n == 2

    def test_from_file(self, tmp_path):
        p = tmp_path / "z.csv"
        p.write_text("1,2,3\n")
        assert read_replicates_csv(p).matrix.n == 1


class TestWriteEstimates:
    def test_format(self):
        buf = io.StringIO()
        write_estimates(buf, {"mean": np.array([2.0, 5.0])})
        assert buf.getvalue() == "unit_id,mean\n0,2.0\n1,5.0\n"

    def test_round_trip_exact(self):
        vals = np.random.default_rng(0).normal(size=200) * 10.0 ** np.arange(-100, 100)
        buf = io.StringIO()
        write_estimates(buf, {"a": vals, "b": -vals}, ids=[f"u{i}" for i in range(200)])
        ids, cols = read_estimates(buf.getvalue())
        assert ids[3] == "u3"
        np.testing.assert_array_equal(cols["a"], vals)
        np.testing.assert_array_equal(cols["b"], -vals)

    def test_shortest_repr(self):
        assert fmt(0.1) == "0.1"
        assert fmt(1 / 3) == "0.3333333333333333"


class TestConfig:
    def test_resolves_defaults(self):
        cfg, resolved = parse_config(_doc())
        assert isinstance(cfg.prior, NormalPrior) and cfg.prior.var == 4
        assert isinstance(cfg.likelihood, LocationLikelihood)
        assert resolved["options"]["k_max"] == 1000
        assert resolved["options"]["trim"] == 0.1
        assert resolved["options"]["sigma2"] == 4.0
        assert cfg.options.seed == 7

    def test_default_reps_and_seed(self):
        d = _doc()
        del d["reps"], d["seed"]
        cfg, _ = parse_config(d)
        assert (cfg.reps, cfg.seed) == (100, 0)

    def test_seed_override(self):
        cfg, resolved = parse_config(_doc(), seed_override=99)
        assert cfg.seed == 99 and resolved["seed"] == 99

    @pytest.mark.parametrize("doc,path", [
        (_doc(extra=1), "extra"),
        (_doc(prior={"type": "normal", "sd": 1}), "prior.sd"),
        (_doc(prior={"type": "gamma"}), "prior.type"),
        (_doc(prior={"var": 1}), "prior.type"),
        (_doc(likelihood={"type": "normal", "var": -1}), "likelihood.var"),
        (_doc(likelihood={"type": "hetero", "base": "laplace"}), "likelihood.base"),
        (_doc(options={"k_max": 0}), "options.k_max"),
        (_doc(options={"gamma": 0.2}), "options.gamma"),
        (_doc(options={"trim": 0.5}), "options.trim"),
        (_doc(options={"center": "median"}), "options.center"),
        (_doc(methods=["mean", "bogus"]), "methods[1]"),
        (_doc(methods=[]), "methods"),
        (_doc(n="100"), "n"),
        (_doc(reps=0), "reps"),
        (_doc(prior={"type": "normal", "var": "4"}), "prior.var"),
    ])
    def test_rejects_with_key_path(self, doc, path):
        with pytest.raises(InvalidConfig) as info:
            parse_config(doc)
        assert info.value.path == path

    def test_missing_key(self):
        d = _doc()
        del d["likelihood"]
        with pytest.raises(InvalidConfig) as info:
            parse_config(d)
        assert info.value.path == "likelihood"

    def test_three_point_and_options(self):
        cfg, _ = parse_config(_doc(prior={"type": "three_point", "var": 16},
                                   options={"k_max": 100, "center": "zero", "sigma2": 2}))
        assert isinstance(cfg.prior, ThreePointPrior)
        assert cfg.options.k_max == 100 and cfg.options.center == "zero"
        assert cfg.options.sigma2 == 2.0

    def test_load_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{\n  \"n\": 1,,\n}")
        with pytest.raises(ParseError) as info:
            load_config(p)
        assert info.value.line == 2
