from unittest.mock import patch

import pytest

from sdgraph.cli import build_parser, main
from sdgraph.errors import EXIT_INPUT_ERROR, EXIT_INVARIANT_VIOLATION, EXIT_OK, InvariantViolation


def test_parser_requires_command():
    """Test that a subcommand is mandatory."""
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_parser_overrides():
    """Test the shared options on a subcommand."""
    args = build_parser().parse_args(['infer', 'd.jsonl', '--kb', 'kb.json', '--bn', 'bn.json', '--workers', '3', '--log-level', 'debug'])
    assert args.command == 'infer'
    assert args.workers == 3
    assert args.log_level == 'DEBUG'
    assert not args.dot


def test_main_kb_build_success(run_config, input_files, tmp_path, capsys):
    """Test that a successful run exits with 0 and honours --out."""
    out = tmp_path / 'cli_out'
    code = main(['kb-build', str(input_files['annotations']), '--config', str(run_config), '--out', str(out)])
    assert code == EXIT_OK
    assert (out / 'kb.json').is_file()
    assert 'concepts=6' in capsys.readouterr().out


def test_main_malformed_input(run_config, tmp_path, caplog):
    """Test that a malformed annotation file exits with 1."""
    bad = tmp_path / 'bad.jsonl'
    bad.write_text('{not json\n', encoding='utf-8')
    code = main(['kb-build', str(bad), '--config', str(run_config)])
    assert code == EXIT_INPUT_ERROR
    assert 'Input error' in caplog.text


def test_main_invariant_violation(run_config, input_files, caplog):
    """Test that an internal invariant failure exits with 2."""
    with patch('sdgraph.pipeline.cmd_infer', side_effect=InvariantViolation('SDG has two scene nodes')) as mock_infer:
        code = main([
            'infer', str(input_files['detections']), '--kb', 'kb.json', '--bn', 'bn.json',
            '--config', str(run_config),
        ])
    mock_infer.assert_called_once()
    assert code == EXIT_INVARIANT_VIOLATION
    assert 'two scene nodes' in caplog.text
