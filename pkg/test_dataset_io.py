"""INSURE-SYNTH 파일 파싱 테스트"""

import logging

import pytest

from dataset_io import MAGIC, DatasetFileParser, format_dataset, load_dataset, save_dataset
from errors import DatasetParseError

SAMPLE = """INSURE-SYNTH v1
dims: 2
regions: III,IV
seed: 3
n_domains: 2
n_classes: 2
mixing: identity
domain_map: 0,1
samples: 3
0,0,0.5,-1.25
0,1,1.0,2.0
1,1,-0.75,0.125
"""


@pytest.fixture
def parser():
    return DatasetFileParser()


def test_parse_sample(parser):
    data = parser.parse(SAMPLE)
    assert data.dims == 2
    assert data.region_of_dim == ("III", "IV")
    assert data.y.tolist() == [0, 1, 1]
    assert data.d.tolist() == [0, 0, 1]
    assert data.x[2].tolist() == [-0.75, 0.125]
    assert data.generator_seed == 3


def test_saved_file_reloads_bit_exact(small_dataset, tmp_path):
    path = tmp_path / "data.txt"
    save_dataset(small_dataset, path)
    assert path.read_text(encoding="utf-8").splitlines()[0] == MAGIC
    assert load_dataset(path).same_samples(small_dataset)


def test_wrong_header(parser):
    with pytest.raises(DatasetParseError) as exc:
        parser.parse(SAMPLE.replace("v1", "v2", 1))
    assert exc.value.line_number == 1


def test_missing_required_key(parser):
    with pytest.raises(DatasetParseError, match="n_classes"):
        parser.parse(SAMPLE.replace("n_classes: 2\n", ""))


def test_dims_mismatch_reports_line(parser):
    text = SAMPLE.replace("0,1,1.0,2.0", "0,1,1.0,2.0,3.0")
    with pytest.raises(DatasetParseError) as exc:
        parser.parse(text)
    assert exc.value.line_number == 11


def test_truncated_file(parser):
    text = "\n".join(SAMPLE.splitlines()[:-1]) + "\n"
    with pytest.raises(DatasetParseError, match="samples|샘플"):
        parser.parse(text)


def test_label_out_of_range(parser):
    with pytest.raises(DatasetParseError):
        parser.parse(SAMPLE.replace("1,1,-0.75", "1,2,-0.75"))


def test_non_numeric_value(parser):
    with pytest.raises(DatasetParseError):
        parser.parse(SAMPLE.replace("0.125", "abc"))


def test_missing_regions_loads_for_training_only(parser, caplog):
    text = SAMPLE.replace("regions: III,IV\n", "")
    with caplog.at_level(logging.WARNING):
        data = parser.parse(text)
    assert data.region_of_dim is None
    assert not data.has_ground_truth
    assert caplog.records


def test_regions_length_must_match_dims(parser):
    with pytest.raises(DatasetParseError):
        parser.parse(SAMPLE.replace("regions: III,IV", "regions: III"))


def test_format_without_ground_truth_omits_regions(parser):
    data = parser.parse(SAMPLE.replace("regions: III,IV\n", ""))
    assert "regions:" not in format_dataset(data)
