import logging

import numpy as np
import pandas as pd
import pytest

from cohortfair.data_pipeline import (
    COMPAS_RACES,
    COMPAS_SCHEMA,
    Bin,
    DataError,
    FeatureBinning,
    RawTable,
    Recipe,
    bin_features,
    compas_binning,
    derive_responses,
    filter_propublica,
    load_table,
    restrict_races,
    run_pipeline,
)

HEADER = "id,age,sex,race,priors_count,decile_score,days_b_screening_arrest,c_charge_degree,is_recid,score_text,two_year_recid"


def write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def frame_table(**cols) -> RawTable:
    return RawTable(pd.DataFrame(cols))


def compas_row(i=1, age=30, sex="Male", race="Caucasian", priors=0, decile=3, gap=0, degree="F", recid=0, text="Low", y=0):
    return f"{i},{age},{sex},{race},{priors},{decile},{gap},{degree},{recid},{text},{y}"


class TestLoadTable:
    def test_public_extract_row_count(self, compas_path):
        assert load_table(compas_path, schema=COMPAS_SCHEMA).n_rows == 7214

    def test_duplicate_headers_are_suffixed(self, compas_path):
        cols = load_table(compas_path).columns
        assert "decile_score" in cols and "decile_score.1" in cols
        assert "priors_count.1" in cols

    def test_header_only(self, tmp_path):
        t = load_table(write(tmp_path, HEADER + "\n"))
        assert t.n_rows == 0
        assert t.columns[0] == "id"

    def test_missing_required_column_is_named(self, tmp_path):
        p = write(tmp_path, "id,age\n1,30\n")
        with pytest.raises(DataError, match="decile_score"):
            load_table(p, required=["decile_score"])

    def test_malformed_row_reports_line(self, tmp_path):
        p = write(tmp_path, "a,b\n1,2\n3,4,5\n")
        with pytest.raises(DataError, match="line 3"):
            load_table(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_table(tmp_path / "nope.csv")

    def test_bad_int_cell(self, tmp_path):
        p = write(tmp_path, "id,age\n1,30\n2,old\n")
        with pytest.raises(DataError, match="row 3.*age"):
            load_table(p, schema={"age": "int"})

    def test_delimiter(self, tmp_path):
        p = write(tmp_path, "a;b\n1;x\n")
        t = load_table(p, delimiter=";", schema={"a": "int"})
        assert t.frame["a"].iloc[0] == 1 and t.frame["b"].iloc[0] == "x"

    def test_empty_cells_are_missing(self, tmp_path):
        t = load_table(write(tmp_path, "a,b\n1,\n"), schema={"a": "int"})
        assert pd.isna(t.frame["b"].iloc[0])


class TestFilters:
    def test_propublica_count(self, compas_path):
        raw = load_table(compas_path, schema=COMPAS_SCHEMA)
        assert len(filter_propublica(raw)) == 6172

    def test_propublica_idempotent(self, compas_path):
        once = filter_propublica(load_table(compas_path, schema=COMPAS_SCHEMA))
        twice = filter_propublica(once)
        pd.testing.assert_frame_equal(once.frame, twice.frame)

    def test_every_row_violating(self):
        t = frame_table(
            days_b_screening_arrest=[31, 0, 0, 0, None],
            is_recid=[0, -1, 0, 0, 0],
            c_charge_degree=["F", "F", "O", "M", "F"],
            score_text=["Low", "Low", "Low", "N/A", "Low"],
        )
        assert len(filter_propublica(t)) == 0

    def test_boundaries_inclusive(self):
        t = frame_table(
            days_b_screening_arrest=[-30, 30, -31],
            is_recid=[0, 1, 0],
            c_charge_degree=["F", "M", "F"],
            score_text=["Low", "High", "Low"],
        )
        assert len(filter_propublica(t)) == 2

    def test_filter_requires_columns(self):
        with pytest.raises(DataError, match="score_text"):
            filter_propublica(frame_table(days_b_screening_arrest=[0], is_recid=[0], c_charge_degree=["F"]))

    def test_race_restriction_count(self, compas_path):
        t = filter_propublica(load_table(compas_path, schema=COMPAS_SCHEMA))
        assert len(restrict_races(t, COMPAS_RACES)) == 5278

    def test_race_all_levels_identity(self):
        t = frame_table(race=["a", "b", "a"], v=[1, 2, 3])
        out = restrict_races(t, {"a", "b"})
        pd.testing.assert_frame_equal(out.frame, t.frame)

    def test_race_empty_set_warns(self, caplog):
        t = frame_table(race=["a", "b"])
        with caplog.at_level(logging.WARNING):
            out = restrict_races(t, set())
        assert len(out) == 0
        assert "no rows" in caplog.text

    def test_race_order_preserved(self):
        t = frame_table(race=["b", "a", "b", "a"], v=[0, 1, 2, 3])
        assert restrict_races(t, {"a"}).frame["v"].tolist() == [1, 3]


class TestBinning:
    def priors_dataset(self, values):
        t = frame_table(id=list(range(len(values))), priors_count=values)
        return bin_features(t, [compas_binning()[0]])

    def test_priors_levels(self):
        ds = self.priors_dataset([0, 3, 11, 1, 4, 6, 7, 10])
        assert list(ds.labels(0)) == ["0", "1-3", ">10", "1-3", "4-6", "4-6", "7-10", "7-10"]

    def test_age_boundaries(self):
        age = compas_binning("age")[2]
        t = frame_table(id=[1, 2, 3, 4], age=[24, 25, 45, 46])
        ds = bin_features(t, [age])
        assert list(ds.labels(0)) == ["<25", "25-45", "25-45", ">45"]

    def test_age_cat_source(self):
        age = compas_binning("age_cat")[2]
        t = frame_table(id=[1, 2], age_cat=["Greater than 45", "25 - 45"])
        assert list(bin_features(t, [age]).labels(0)) == [">45", "25-45"]

    def test_negative_priors_names_subject(self):
        t = frame_table(id=[7, 8], priors_count=[1, -2])
        with pytest.raises(DataError, match="subject 8"):
            bin_features(t, [compas_binning()[0]])

    def test_unmapped_category(self):
        t = frame_table(id=[1], sex=["Other"])
        with pytest.raises(DataError, match="gender_factor"):
            bin_features(t, [compas_binning()[4]])

    def test_single_row(self):
        t = frame_table(id=[1], age=[30], c_charge_degree=["M"], race=["Caucasian"], sex=["Female"], priors_count=[2])
        ds = bin_features(t, compas_binning())
        assert ds.n == 1 and ds.d == 5

    def test_compas_features(self, compas):
        ds = compas.dataset
        assert ds.feature_names == ["priors_count", "crime_factor", "age_factor", "race_factor", "gender_factor"]
        assert [s.n_levels for s in ds.specs] == [5, 2, 3, 2, 2]

    def test_binning_from_dict(self):
        fb = FeatureBinning.from_dict({"name": "a", "bins": [{"label": "lo", "max": 1}, {"label": "hi", "min": 2}]})
        assert fb.bins == (Bin("lo", None, 1), Bin("hi", 2, None))
        fc = FeatureBinning.from_dict({"name": "c", "levels": ["x", "y"]})
        assert fc.levels == ("x", "y")


class TestResponses:
    def table(self, deciles, ys):
        return frame_table(decile_score=deciles, two_year_recid=ys)

    @pytest.mark.parametrize(
        "decile,y,yhat,fp,fn,res",
        [(4, 0, 0, 0, 0, 0), (7, 0, 1, 1, 0, -1), (3, 1, 0, 0, 1, 1), (5, 1, 1, 0, 0, 0)],
    )
    def test_examples(self, decile, y, yhat, fp, fn, res):
        r = derive_responses(self.table([decile], [y]))
        assert (r.yhat[0], r.fp[0], r.fn[0], r.residual[0]) == (yhat, fp, fn, res)

    def test_decile_out_of_range(self):
        with pytest.raises(DataError, match="outside 1..10"):
            derive_responses(self.table([11], [0]))

    def test_threshold(self):
        r = derive_responses(self.table([5, 6], [0, 0]), threshold=6)
        assert r.yhat.tolist() == [0.0, 1.0]

    def test_invariants_on_compas(self, compas):
        r = compas.responses
        assert np.all(r.fp * r.fn == 0)
        assert set(np.unique(r.residual)) <= {-1.0, 0.0, 1.0}
        assert np.array_equal(r.residual, r.y - r.yhat)
        assert np.array_equal(r.fp + r.fn, np.abs(r.residual))

    def test_custom_response(self):
        t = frame_table(decile_score=[1, 9], two_year_recid=[0, 1], score=[0.5, 2.5])
        r = derive_responses(t, custom={"raw_score": "score"})
        assert r["raw_score"].tolist() == [0.5, 2.5]


class TestPipeline:
    def test_funnel(self, compas):
        f = compas.funnel
        assert (f["raw"], f["filtered"], f["restricted"], f["final"]) == (7214, 6172, 5278, 5278)

    def test_race_cardinalities(self, compas):
        race = compas.dataset.labels(3)
        assert (race == "Black").sum() + (race == "White").sum() == 5278

    def test_deterministic(self, compas_path):
        a = run_pipeline(compas_path, Recipe.compas())
        b = run_pipeline(compas_path, Recipe.compas())
        assert a.dataset.codes.tobytes() == b.dataset.codes.tobytes()
        assert a.dataset.subject_ids == b.dataset.subject_ids
        assert a.responses.y.tobytes() == b.responses.y.tobytes()

    def test_ambiguity_recorded(self, compas):
        assert any("45" in note for note in compas.ambiguities)

    def test_generic_recipe(self, tmp_path):
        p = write(tmp_path, "pid,color,n,y,score\na,red,1,0,0.2\nb,blue,5,1,0.9\nc,red,2,1,0.4\n")
        recipe = Recipe.from_dict(
            {
                "recipe": "generic",
                "id_column": "pid",
                "features": [
                    {"name": "color", "levels": ["red", "blue"]},
                    {"name": "n_bin", "column": "n", "bins": [{"label": "small", "max": 2}, {"label": "big", "min": 3}]},
                ],
                "outcome_column": "y",
                "score_column": "score",
                "threshold": 0.5,
                "score_range": None,
            }
        )
        res = run_pipeline(p, recipe)
        assert (res.funnel["raw"], res.funnel["filtered"], res.funnel["restricted"]) == (3, 3, 3)
        assert res.dataset.subject_ids == ("a", "b", "c")
        assert res.responses.yhat.tolist() == [0.0, 1.0, 0.0]

    def test_incomplete_rows_dropped_with_reason(self, tmp_path, caplog):
        rows = [compas_row(1), compas_row(2, priors=""), compas_row(3, race="African-American")]
        p = write(tmp_path, "\n".join([HEADER, *rows]) + "\n")
        with caplog.at_level(logging.INFO):
            res = run_pipeline(p, Recipe.compas())
        assert res.funnel["incomplete_dropped"] == 1
        assert res.dataset.subject_ids == ("1", "3")
        assert "priors_count" in caplog.text
