import io
import json

import numpy as np
import pytest

from sdgraph.errors import InputError
from sdgraph.storage.artifacts import load_bn, load_json, load_kb, save_bn, save_json, save_kb
from sdgraph.storage.jsonl import OrderedSink, dumps, iter_jsonl, read_jsonl, write_jsonl
from sdgraph.utils import convert_numpy_types, geometric_mean


def test_iter_jsonl_skips_blank_lines(tmp_path):
    """Test that blank lines are ignored and objects come back in order."""
    path = tmp_path / 'records.jsonl'
    path.write_text('{"a": 1}\n\n{"a": 2}\n', encoding='utf-8')
    assert [r['a'] for r in iter_jsonl(path)] == [1, 2]


def test_iter_jsonl_reports_location(tmp_path):
    """Test that malformed lines are reported as path:line."""
    path = tmp_path / 'records.jsonl'
    path.write_text('{"a": 1}\n{broken\n', encoding='utf-8')
    with pytest.raises(InputError, match=r'records\.jsonl:2'):
        list(iter_jsonl(path))

    path.write_text('[1, 2]\n', encoding='utf-8')
    with pytest.raises(InputError, match='JSON object'):
        list(iter_jsonl(path))

    with pytest.raises(InputError, match='Cannot open'):
        list(iter_jsonl(tmp_path / 'missing.jsonl'))


def test_read_jsonl_wraps_parse_errors(tmp_path):
    """Test that parse failures name the offending record."""
    path = tmp_path / 'records.jsonl'
    path.write_text('{"a": 1}\n{"b": 2}\n', encoding='utf-8')

    def parse(obj):
        if 'a' not in obj:
            raise InputError('missing a')
        return obj['a']

    with pytest.raises(InputError, match='record 2: missing a'):
        read_jsonl(path, parse)


def test_write_jsonl_sorted_keys(tmp_path):
    """Test record count and deterministic key order."""
    path = tmp_path / 'out' / 'records.jsonl'
    count = write_jsonl(path, [{'b': 1, 'a': np.int64(2)}, {'c': {3, 1}}])
    assert count == 2
    assert path.read_text(encoding='utf-8') == '{"a":2,"b":1}\n{"c":[1,3]}\n'


def test_ordered_sink_buffers_out_of_order_records():
    """Test that records are written in position order whatever the arrival order."""
    handle = io.StringIO()
    sink = OrderedSink(handle)
    sink.put(2, {'i': 2})
    sink.put(1, {'i': 1})
    assert handle.getvalue() == ''
    sink.put(0, {'i': 0})
    assert [json.loads(l)['i'] for l in handle.getvalue().splitlines()] == [0, 1, 2]
    assert sink.close() == 3


def test_ordered_sink_reports_gaps(caplog):
    """Test that closing with a missing position logs an error."""
    sink = OrderedSink(io.StringIO())
    sink.put(1, {'i': 1})
    assert sink.close() == 0
    assert 'out of sequence' in caplog.text


def test_save_json_is_byte_identical(tmp_path):
    """Test that equal data written twice gives identical bytes."""
    first = save_json(tmp_path / 'a.json', {'z': 1, 'a': [np.float64(0.5)]})
    second = save_json(tmp_path / 'b.json', {'a': [0.5], 'z': 1})
    assert first.read_bytes() == second.read_bytes()
    assert load_json(first) == {'a': [0.5], 'z': 1}
    with pytest.raises(InputError):
        load_json(tmp_path / 'missing.json')


def test_kb_round_trip(tmp_path, scene_kb):
    """Test that a saved knowledge base loads with the same nodes, edges and concepts."""
    path = save_kb(tmp_path / 'kb.json', scene_kb)
    restored = load_kb(path)
    assert restored.counts == scene_kb.counts
    assert restored.to_dict() == scene_kb.to_dict()


def test_bn_round_trip(tmp_path, two_avc_net):
    """Test that a saved network keeps its structure and CPTs."""
    restored = load_bn(save_bn(tmp_path / 'bn.json', two_avc_net))
    assert restored.parents == two_avc_net.parents
    assert restored.cpts['a1'].tolist() == [0.1, 0.9]


def test_dumps_single_line():
    """Test compact separators with no embedded newline."""
    assert dumps({'b': [1, 2], 'a': 'x'}) == '{"a":"x","b":[1,2]}'


def test_convert_numpy_types():
    """Test conversion of numpy scalars, arrays and sets."""
    converted = convert_numpy_types({'n': np.int32(3), 'f': np.float32(0.5), 'arr': np.array([1, 2]), 's': {'b', 'a'}})
    assert converted == {'n': 3, 'f': 0.5, 'arr': [1, 2], 's': ['a', 'b']}
    assert isinstance(converted['n'], int)


def test_geometric_mean_floor():
    """Test clamping at the floor and the empty input."""
    assert geometric_mean([0.25, 1.0], 1e-8) == pytest.approx(0.5)
    assert geometric_mean([0.0], 1e-8) == pytest.approx(1e-8)
    assert geometric_mean([], 1e-8) == 1e-8
