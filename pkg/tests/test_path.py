import numpy as np
import pytest

import hyperflow


def test_creating():
    path = hyperflow.Path([0, 1, 2], [[0, 0], [1, 0], [1, 1]])
    assert path.z.tolist() == [0, 1, 1+1j]
    assert (path.start, path.end, path.duration) == (0, 2, 2)
    assert path.velocities is None
    with pytest.raises(ValueError):
        path.z[0] = 5

    with pytest.raises(ValueError, match='strictly increasing'):
        hyperflow.Path([0, 1, 1], [0, 1, 2])
    with pytest.raises(ValueError, match='at least 2 nodes'):
        hyperflow.Path([0], [0])
    with pytest.raises(ValueError, match='3 times but 2 positions'):
        hyperflow.Path([0, 1, 2], [0, 1])
    with pytest.raises(ValueError, match='non-finite'):
        hyperflow.Path([0, 1], [0, np.nan])
    with pytest.raises(ValueError, match='velocities'):
        hyperflow.Path([0, 1], [0, 1], [1])


def test_interpolation():
    path = hyperflow.Path([0, 2, 4], [0, 2j, 2+2j])
    assert path.at(1) == 1j
    assert path.at([3, 4]).tolist() == [1+2j, 2+2j]

    finer = path.with_nodes([1, 3, 10])
    assert finer.times.tolist() == [0, 1, 2, 3, 4]
    assert finer.z[2] == 2j
    assert len(path.refined()) == 5

    piece = path.segment(1, 3)
    assert piece.times.tolist() == [1, 2, 3]
    assert piece.z.tolist() == [1j, 2j, 1+2j]
    with pytest.raises(ValueError):
        path.segment(3, 5)

    assert path.resampled([0, 4]).z.tolist() == [0, 2+2j]
    with pytest.raises(ValueError):
        path.resampled([-1, 4])


def test_shift_and_reflect():
    path = hyperflow.Path([0, 1, 3], [0, 1, 3], [1, 1, 1])
    assert path.shifted(2).times.tolist() == [2, 3, 5]

    back = path.reflected(1)
    assert back.times.tolist() == [-1, 1, 2]
    assert back.z.tolist() == [3, 1, 0]
    assert back.velocities.tolist() == [-1, -1, -1]
    assert back.reflected(1).times.tolist() == path.times.tolist()


def test_node_velocities():
    # second order differences are exact for quadratics, even unevenly spaced
    t = np.array([0, 0.3, 1, 1.2, 2.5])
    path = hyperflow.Path(t, t**2 + 1j * t)
    assert np.allclose(path.node_velocities(), 2 * t + 1j)

    line = hyperflow.Path([0, 2], [0, 4j])
    assert line.node_velocities().tolist() == [2j, 2j]


def test_csv(tmp_path):
    filename = str(tmp_path / 'path.csv')
    t = np.linspace(0, 1, 7) / 3
    path = hyperflow.Path(t, np.exp(1j * t), 1j * np.exp(1j * t))
    hyperflow.write_path_csv(path, filename, {'r': np.abs(path.z)})
    with open(filename) as file:
        assert file.readline().strip() == 't,x,y,vx,vy,r'

    read = hyperflow.read_path_csv(filename)
    assert read.times.tolist() == path.times.tolist()
    assert read.z.tolist() == path.z.tolist()
    assert read.velocities.tolist() == path.velocities.tolist()

    (tmp_path / 'bad.csv').write_text('t,x\n0,1\n1,2\n')
    with pytest.raises(ValueError, match="no 'y' column"):
        hyperflow.read_path_csv(str(tmp_path / 'bad.csv'))
