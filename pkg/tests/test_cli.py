import json

from tcsdp.cli import build_parser, main


def test_parser_shape():
    parser = build_parser()
    args = parser.parse_args(
        [
            "run", "--kind", "pnp", "--n", "6", "--noise", "none", "--seeds", "2",
            "--gamma", "0.97", "--gamma-c", "2.0", "--limits", "300,100",
            "--repeat", "0", "--parallel", "2",
        ]
    )
    assert args.kind == "pnp"
    assert args.limits == (300, 100)
    assert args.gamma == 0.97
    assert args.repeat == 0


def test_cli_end_to_end(tmp_path, capsys):
    rc = main(
        [
            "run", "--kind", "pnp", "--n", "6", "--noise", "none", "--seeds", "1",
            "--limits", "120,20", "--out", str(tmp_path), "--progress",
        ]
    )
    assert rc == 0
    out = capsys.readouterr().out
    assert "summary:" in out
    payload = json.loads((tmp_path / "results.json").read_text())
    assert payload["summary"]["runs"] == 1
    assert (tmp_path / "results.csv").exists()
    assert (tmp_path / "progress" / "pnp_0.ndjson").exists()
