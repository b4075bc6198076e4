import io
import os

import pytest

from mambayolo import __version__
from mambayolo.cli import run
from mambayolo.services.image_loader import save_ppm
from mambayolo.services.tensor_io import read_tensor


def invoke(*argv):
    out = io.StringIO()
    code = run(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture
def ppm(tmp_path, rng):
    # 50x60 is padded to 64x64 by extract
    return save_ppm(str(tmp_path / 'cat.ppm'), rng.uniform(0, 1, (3, 50, 60)))


def test_version_and_usage_errors(capsys):
    assert run(['--version']) == 0
    assert __version__ in capsys.readouterr().out
    assert run([]) == 2
    assert run(['selftest', '--bogus']) == 2
    assert run(['selftest', '--threads', '0']) == 2


def test_selftest_quick():
    code, text = invoke('selftest', '--quick', '--seed', '3')
    assert code == 0, text
    lines = text.splitlines()
    assert lines[0] == f"# mambayolo {__version__}\tselftest"
    assert lines[1] == 'property\tstatus\tdetail'
    assert 'failed\t0' in lines
    assert 'thread_determinism' not in text


def test_scan_equiv():
    code, text = invoke('scan-equiv', '--n', '8', '--l', '64', '--trials', '50', '--seed', '7')
    assert code == 0
    rows = [line.split('\t') for line in text.splitlines()[2:]]
    assert [row[0] for row in rows] == ['f32', 'f64']
    assert all(float(row[4]) <= 1e-4 and row[-1] == 'true' for row in rows)


def test_gradcheck_detects_the_mutant():
    code, text = invoke('gradcheck', '--trials', '3', '--seed', '1')
    assert code == 0, text
    assert 'mutant_detected\ttrue' in text
    assert 'passed\ttrue' in text


def test_shapes_and_count(tmp_path):
    code, text = invoke('shapes', '--config', 'tiny', '--input', '64x64')
    assert code == 0
    assert 'backbone.stem\t3x64x64\t16x16x16' in text

    csv_path = tmp_path / 'costs.csv'
    code, text = invoke('count', '--config', 't', '--csv', str(csv_path))
    assert code == 0
    assert 'reference_params_m\t6.100000e+00' in text
    assert csv_path.read_text().startswith('path,kind,params,macs,aux_ops')


def test_usage_failures_exit_2(tmp_path):
    assert invoke('count', '--config', 'nope')[0] == 2
    assert invoke('shapes', '--config', 'tiny', '--input', '50x50')[0] == 2
    assert invoke('bench', '--repeats', '0')[0] == 2
    bad = tmp_path / 'bad.cfg'
    bad.write_text('stem_channels = 8\n')
    assert invoke('count', '--config', str(bad))[0] == 2


def test_extract_missing_image(tmp_path):
    code, _ = invoke('extract', '--image', str(tmp_path / 'dog.ppm'), '--config', 'tiny', '--out', str(tmp_path))
    assert code == 2


def test_extract_writes_the_pyramid(tmp_path, ppm):
    out_dir = tmp_path / 'feats'
    code, text = invoke('extract', '--image', ppm, '--config', 'tiny', '--out', str(out_dir), '--dump-intermediate')
    assert code == 0, text
    assert 'padded\t3x64x64' in text
    assert read_tensor(str(out_dir / 'p3.myt')).shape == (32, 8, 8)
    assert read_tensor(str(out_dir / 'p4.myt')).shape == (64, 4, 4)
    assert read_tensor(str(out_dir / 'p5.myt')).shape == (128, 2, 2)
    dumps = os.listdir(out_dir / 'intermediate')
    assert 'backbone.stage1.0.ss2d.myt' in dumps
    assert 'neck.bottom5.0.ss2d.merged.myt' in dumps


def test_extract_is_deterministic_across_runs_and_threads(tmp_path, ppm):
    dumps = []
    for i, threads in enumerate(('1', '1', '8')):
        out_dir = tmp_path / f"run{i}"
        code, _ = invoke('extract', '--image', ppm, '--config', 'tiny', '--out', str(out_dir),
                         '--seed', '11', '--threads', threads)
        assert code == 0
        dumps.append([(out_dir / f"{name}.myt").read_bytes() for name in ('p3', 'p4', 'p5')])
    assert dumps[0] == dumps[1] == dumps[2]


def test_unreadable_inputs_exit_2(tmp_path, capsys):
    assert invoke('count', '--config', str(tmp_path))[0] == 2
    assert f"{tmp_path}: is a directory" in capsys.readouterr().err

    binary = tmp_path / 'latin1.cfg'
    binary.write_bytes(b'stem_channels = 16\n\xff\xfe\n')
    assert invoke('count', '--config', str(binary))[0] == 2
    assert 'latin1.cfg: not valid UTF-8' in capsys.readouterr().err

    truncated = tmp_path / 'short.ppm'
    truncated.write_bytes(b'P6 64 64 255\n' + bytes(100))
    assert invoke('extract', '--image', str(truncated), '--config', 'tiny', '--out', str(tmp_path / 'x'))[0] == 2


def test_extract_out_must_be_a_directory(tmp_path, ppm, capsys):
    taken = tmp_path / 'taken'
    taken.write_text('')
    code, text = invoke('extract', '--image', ppm, '--config', 'tiny', '--out', str(taken))
    assert code == 2
    assert text == ''
    assert 'taken: cannot create output directory' in capsys.readouterr().err


def test_bench_requires_a_warmup():
    assert invoke('bench', '--warmup', '0')[0] == 2


def test_extract_from_a_tensor_dump_matches_the_image(tmp_path, ppm):
    from mambayolo.services.image_loader import load_ppm
    from mambayolo.services.tensor_io import write_tensor

    dump = write_tensor(str(tmp_path / 'cat.myt'), load_ppm(ppm))
    runs = []
    for flag, source in (('--image', ppm), ('--in', dump)):
        out_dir = tmp_path / flag.strip('-')
        code, text = invoke('extract', flag, source, '--config', 'tiny', '--out', str(out_dir))
        assert code == 0, text
        runs.append([(out_dir / f"{name}.myt").read_bytes() for name in ('p3', 'p4', 'p5')])
    assert runs[0] == runs[1]


def test_extract_rejects_bad_tensor_inputs(tmp_path):
    import numpy as np
    from mambayolo.services.tensor_io import write_tensor

    gray = write_tensor(str(tmp_path / 'gray.myt'), np.zeros((1, 64, 64), dtype=np.float32))
    assert invoke('extract', '--in', gray, '--config', 'tiny', '--out', str(tmp_path / 'o'))[0] == 2
    assert invoke('extract', '--config', 'tiny', '--out', str(tmp_path / 'o'))[0] == 2
