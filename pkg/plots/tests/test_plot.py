import pytest

from mgplots.plot import MissingColumn, PlotSpec, SchemaMismatch, main, read_sweep, render

METHODS = ("lower-bound", "mdp", "tp-opt", "tp-fixed")


def write_sweep(path, methods=METHODS, n_points=10, schema=1, with_stderr=True):
    """Synthesize a sweep CSV in the solver's file format."""
    header = "method,p_e,gamma,leakage_bits,cost,weighted,stderr_weighted,runtime_s,status,meta"
    if not with_stderr:
        header = header.replace(",stderr_weighted", "")
    lines = [f"# schema={schema}", '# config={"model":{}}', header]
    for m_idx, method in enumerate(methods):
        for i in range(1, n_points + 1):
            p = i / n_points
            weighted = (1.0 - p) * (0.1 + 0.1 * m_idx)
            stderr = 0.001 if (with_stderr and method == "bcp") else 0.0
            cells = [method, str(p), "0.5", "0.1", "0.2", repr(weighted)]
            if with_stderr:
                cells.append(repr(stderr))
            cells.extend(["0.123", "ok", "{}"])
            lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def test_read_sweep_groups_and_sorts(tmp_path):
    path = write_sweep(tmp_path / "sweep.csv")
    series = read_sweep(path)
    assert [s.method for s in series] == sorted(METHODS)
    for s in series:
        assert s.p_e == sorted(s.p_e)
        assert len(s.p_e) == 10


def test_schema_mismatch(tmp_path):
    path = write_sweep(tmp_path / "sweep.csv", schema=2)
    with pytest.raises(SchemaMismatch):
        read_sweep(path)
    bare = tmp_path / "bare.csv"
    bare.write_text("method,p_e,weighted\nmdp,0.5,0.1\n")
    with pytest.raises(SchemaMismatch):
        read_sweep(bare)


def test_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# schema=1\nmethod,p_e,cost\nmdp,0.5,0.1\n")
    with pytest.raises(MissingColumn):
        read_sweep(path)


def test_failed_rows_are_skipped(tmp_path):
    path = tmp_path / "sweep.csv"
    lines = [
        "# schema=1",
        "method,p_e,gamma,leakage_bits,cost,weighted,stderr_weighted,runtime_s,status,meta",
        "mdp,0.5,0.5,0.1,0.2,0.15,0.0,1.0,ok,{}",
        "mdp,0.6,0.5,,,,,1.0,error:NonConvergence,{}",
    ]
    path.write_text("\n".join(lines) + "\n")
    series = read_sweep(path)
    assert len(series) == 1
    assert series[0].p_e == [0.5]


def test_render_structural_golden(tmp_path):
    """Four curves, one per method, ten points each, monotone x axis."""
    path = write_sweep(tmp_path / "sweep.csv")
    out = tmp_path / "fig.png"
    summary = render(PlotSpec(inputs=[str(path)], output=str(out)))
    assert summary["curves"] == 4
    assert sorted(summary["methods"]) == sorted(METHODS)
    assert all(count == 10 for count in summary["points"].values())
    assert out.exists()
    assert (tmp_path / "fig.svg").exists()


def test_two_point_minimal_input(tmp_path):
    path = write_sweep(tmp_path / "sweep.csv", methods=("mdp",), n_points=2)
    out = tmp_path / "fig.png"
    summary = render(PlotSpec(inputs=[str(path)], output=str(out)))
    assert summary["curves"] == 1
    assert summary["points"]["mdp"] == 2


def test_render_is_idempotent(tmp_path):
    path = write_sweep(tmp_path / "sweep.csv")
    out = tmp_path / "fig.png"
    spec = PlotSpec(inputs=[str(path)], output=str(out))
    first = render(spec)
    before = path.read_bytes()
    second = render(spec)
    assert first == second
    assert path.read_bytes() == before  # inputs untouched


def test_vector_output_selection(tmp_path):
    path = write_sweep(tmp_path / "sweep.csv")
    out = tmp_path / "fig.svg"
    summary = render(PlotSpec(inputs=[str(path)], output=str(out)))
    assert summary["vector"].endswith(".svg")
    assert summary["raster"].endswith(".png")


def test_cli_round_trip(tmp_path, capsys):
    path = write_sweep(tmp_path / "sweep.csv")
    out = tmp_path / "fig.png"
    assert main(["--in", str(path), "--out", str(out)]) == 0
    assert out.exists()
    assert "4 curves" in capsys.readouterr().out


def test_cli_reports_schema_errors(tmp_path, capsys):
    path = write_sweep(tmp_path / "sweep.csv", schema=9)
    code = main(["--in", str(path), "--out", str(tmp_path / "fig.png")])
    assert code == 1
    assert "schema" in capsys.readouterr().err
