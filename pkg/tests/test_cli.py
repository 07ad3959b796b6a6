"""Command-line interface: subcommands run in process, exit codes pinned.

0 = success, 1 = an equivalence check failed, 2 = usage or input error.
"""

import io
import json

import numpy as np
import pytest

from ssdkit import (
    CSV_HEADER,
    ModelSpec,
    embed_sequence,
    generate_model,
    read_records,
    save_model,
    save_model_spec,
    tokenize_words,
)
from ssdkit.cli import main

EQ_ARGS = ["equivalence", "--grid-t", "4,16", "--grid-q", "2,4", "--grid-v", "16"]


class TestEquivalenceCommand:
    def test_clean_run_exits_zero_and_prints_lines(self, capsys):
        rc = main(EQ_ARGS)
        out = capsys.readouterr().out
        assert rc == 0
        assert "[PASS]" in out
        assert "[FAIL]" not in out
        assert "fault=None" in out.strip().splitlines()[-1]

    def test_fault_injection_exits_one(self, capsys):
        rc = main(EQ_ARGS + ["--inject-fault", "state-transition"])
        out = capsys.readouterr().out
        assert rc == 1
        assert "[FAIL]" in out

    def test_unknown_fault_name_is_a_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(EQ_ARGS + ["--inject-fault", "gremlins"])
        assert exc.value.code == 2

    def test_report_file_written(self, tmp_path, capsys):
        out_path = tmp_path / "report.json"
        rc = main(EQ_ARGS + ["--out", str(out_path)])
        capsys.readouterr()
        assert rc == 0
        doc = json.loads(out_path.read_text())
        assert doc["passed"] is True
        assert doc["checks"]

    def test_dense_limit_env_var_prunes_dense_checks(self, capsys, monkeypatch):
        monkeypatch.setenv("SSD_CHUNK_DENSE_LIMIT", "8")
        rc = main(["equivalence", "--grid-t", "16", "--grid-q", "4", "--grid-v", "16"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "dense-vs-recurrent" not in out
        assert "model-dense" not in out

    def test_malformed_dense_limit_env_var_errors(self, capsys, monkeypatch):
        monkeypatch.setenv("SSD_CHUNK_DENSE_LIMIT", "lots")
        rc = main(["equivalence", "--grid-t", "4", "--grid-q", "2", "--grid-v", "16"])
        err = capsys.readouterr().err
        assert rc == 2
        assert "SSD_CHUNK_DENSE_LIMIT" in err


class TestSweepAndReportCommands:
    def test_sweep_writes_csv_and_sidecar(self, tmp_path, capsys):
        out_path = tmp_path / "sweep.csv"
        rc = main(["sweep", "--grid-t", "8,16", "--grid-q", "4", "--grid-v", "8",
                   "--grid-batch", "1", "--strategy", "chunked-horizontal,vertical",
                   "--reps", "2", "--warmup", "0", "--out", str(out_path)])
        capsys.readouterr()
        assert rc == 0
        lines = out_path.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + 2 * 2 * 2  # strategies x lengths x reps
        meta = json.loads((tmp_path / "sweep.csv.meta.json").read_text())
        assert meta["parallel_timed"] is False
        assert meta["reps"] == 2
        assert "model_spec" in meta

    def test_sweep_records_parse_back(self, tmp_path, capsys):
        out_path = tmp_path / "sweep.csv"
        main(["sweep", "--grid-t", "8", "--grid-q", "4", "--grid-v", "8",
              "--grid-batch", "1", "--strategy", "recurrent", "--reps", "1",
              "--warmup", "0", "--out", str(out_path)])
        capsys.readouterr()
        records = read_records(out_path)
        assert len(records) == 1
        assert records[0].strategy == "recurrent"
        assert records[0].T == 8

    def test_report_aggregates_and_reads_the_sidecar(self, tmp_path, capsys):
        out_path = tmp_path / "sweep.csv"
        main(["sweep", "--grid-t", "8", "--grid-q", "4", "--grid-v", "8",
              "--grid-batch", "1", "--strategy", "vertical", "--reps", "3",
              "--warmup", "0", "--parallel", "--out", str(out_path)])
        capsys.readouterr()
        rc = main(["report", str(out_path)])
        out = capsys.readouterr().out
        assert rc == 0
        assert "# parallel-timed: True" in out
        header_line = [l for l in out.splitlines() if not l.startswith("#")][0]
        assert header_line.startswith("strategy,T,batch,Q,V,reps,wall_mean_s")
        data = [l for l in out.splitlines() if not l.startswith("#")][1:]
        assert len(data) == 1  # three reps fold into one cell
        assert data[0].split(",")[5] == "3"

    def test_report_out_flag_writes_a_file(self, tmp_path, capsys):
        csv_path = tmp_path / "sweep.csv"
        main(["sweep", "--grid-t", "8", "--grid-q", "4", "--grid-v", "8",
              "--grid-batch", "1", "--strategy", "recurrent", "--reps", "1",
              "--warmup", "0", "--out", str(csv_path)])
        capsys.readouterr()
        agg_path = tmp_path / "agg.csv"
        rc = main(["report", str(csv_path), "--out", str(agg_path)])
        capsys.readouterr()
        assert rc == 0
        assert agg_path.read_text().count("\n") >= 3

    def test_report_on_missing_file_is_an_input_error(self, tmp_path, capsys):
        rc = main(["report", str(tmp_path / "absent.csv")])
        err = capsys.readouterr().err
        assert rc == 2
        assert "error:" in err


class TestEmbedCommand:
    TEXT = "the quick brown fox jumps over the lazy dog\n"

    def test_output_round_trips_to_the_library_vector(self, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text(self.TEXT)
        rc = main(["embed", str(src)])
        out = capsys.readouterr().out.strip()
        assert rc == 0
        got = np.array([float(v) for v in out.split(",")])
        model = generate_model(ModelSpec(seed=42))
        ids = tokenize_words(self.TEXT, model.spec.vocab_size)
        ref = embed_sequence(model, ids, chunk_size=model.spec.Q).vector
        # 17 significant digits reproduce each double exactly
        assert np.array_equal(got, ref)

    def test_stdin_input(self, capsys, monkeypatch):
        monkeypatch.setattr("sys.stdin", io.StringIO(self.TEXT))
        rc = main(["embed", "-"])
        out = capsys.readouterr().out.strip()
        assert rc == 0
        assert len(out.split(",")) == 16

    def test_vertical_flag_matches_horizontal(self, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text(self.TEXT)
        main(["embed", str(src)])
        horizontal = capsys.readouterr().out.strip()
        rc = main(["embed", str(src), "--vertical", "--memory-cap", "--q", "4"])
        vertical = capsys.readouterr().out.strip()
        assert rc == 0
        got_h = np.array([float(v) for v in horizontal.split(",")])
        got_v = np.array([float(v) for v in vertical.split(",")])
        assert np.max(np.abs(got_h - got_v)) <= 1e-9 * np.max(np.abs(got_h))

    def test_format_query_wraps_the_text(self, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text("what is a kernel")
        main(["embed", str(src)])
        plain = capsys.readouterr().out
        rc = main(["embed", str(src), "--format-query", "Retrieve passages"])
        wrapped = capsys.readouterr().out
        assert rc == 0
        assert plain != wrapped  # template words change the token stream

    def test_out_flag_writes_a_file(self, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text(self.TEXT)
        dst = tmp_path / "vec.txt"
        rc = main(["embed", str(src), "--out", str(dst)])
        captured = capsys.readouterr()
        assert rc == 0
        assert captured.out == ""
        assert len(dst.read_text().strip().split(",")) == 16

    def test_empty_input_is_an_input_error(self, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text("   \n\t ")
        rc = main(["embed", str(src)])
        err = capsys.readouterr().err
        assert rc == 2
        assert "no tokens" in err

    def test_missing_input_file_is_an_input_error(self, tmp_path, capsys):
        rc = main(["embed", str(tmp_path / "absent.txt")])
        err = capsys.readouterr().err
        assert rc == 2
        assert "error:" in err

    def test_model_file_argument(self, tmp_path, capsys):
        spec = ModelSpec(seed=5, L=2, d=8, H=2, N=2, vocab_size=32, Q=4, V=8)
        model_path = tmp_path / "m.ssdm"
        save_model(model_path, generate_model(spec))
        src = tmp_path / "in.txt"
        src.write_text(self.TEXT)
        rc = main(["embed", str(src), "--model", str(model_path)])
        out = capsys.readouterr().out.strip()
        assert rc == 0
        assert len(out.split(",")) == 8  # that model's channel count

    def test_model_spec_argument(self, tmp_path, capsys):
        spec = ModelSpec(seed=5, L=2, d=8, H=2, N=2, vocab_size=32, Q=4, V=8)
        spec_path = tmp_path / "spec.json"
        save_model_spec(spec_path, spec)
        model_path = tmp_path / "m.ssdm"
        save_model(model_path, generate_model(spec))
        src = tmp_path / "in.txt"
        src.write_text(self.TEXT)
        main(["embed", str(src), "--model", str(spec_path)])
        from_spec = capsys.readouterr().out
        main(["embed", str(src), "--model", str(model_path)])
        from_file = capsys.readouterr().out
        assert from_spec == from_file

    def test_corrupt_model_file_is_an_input_error(self, tmp_path, capsys):
        spec = ModelSpec(seed=5, L=1, d=8, H=1, N=2, vocab_size=16, Q=4, V=8)
        model_path = tmp_path / "m.ssdm"
        save_model(model_path, generate_model(spec))
        raw = bytearray(model_path.read_bytes())
        raw[-3] ^= 0x10
        model_path.write_bytes(bytes(raw))
        src = tmp_path / "in.txt"
        src.write_text(self.TEXT)
        rc = main(["embed", str(src), "--model", str(model_path)])
        err = capsys.readouterr().err
        assert rc == 2
        assert "checksum" in err
