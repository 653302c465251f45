import warnings

import pytest

from conftest import PROGRAMS
from cmdrand.minilang import parse, parse_file
from cmdrand.tcspec import (
    CompletelyDynamicCommand, ConfigFile, ConstCommand, SpecError, TrustedApi,
    TrustedFolder, check_spec_integrity, command_tokens, load_spec, parse_spec,
    suggest_spec,
)


def test_const_and_api_lines():
    spec = parse_spec("const:/bin/ed\napi:getenv\n")
    assert spec.defs == (ConstCommand("/bin/ed"), TrustedApi("getenv"))
    assert "ed" in spec.derived_command_names and "/bin/ed" in spec.derived_command_names
    assert spec.trusts_call("getenv")


@pytest.mark.parametrize("text", ["", "# only a comment\n", "cmd:ls\n", "const\n", "dir:missing_folder\n",
                                  "config:no/such.conf\n"])
def test_bad_specs(text, tmp_path):
    with pytest.raises(SpecError):
        parse_spec(text, tmp_path)


def test_folder_and_config(tmp_path):
    (tmp_path / "bin").mkdir()
    (tmp_path / "bin" / "backup").write_text("#!/bin/sh\n")
    (tmp_path / "app.conf").write_text("# editor\neditor = /usr/bin/vi -n\n")
    spec = parse_spec("dir:bin\nconfig:app.conf\n", tmp_path)
    assert spec.defs == (TrustedFolder("bin"), ConfigFile("app.conf"))
    assert {"backup", "bin/backup", "vi", "/usr/bin/vi"} <= spec.derived_command_names
    assert spec.trusts_call("read_config", "app.conf")
    assert spec.trusts_call("read_file", "bin/backup")
    assert not spec.trusts_call("read_file", "bin/other")


def test_load_spec_from_corpus():
    spec = load_spec(PROGRAMS / "patch.tcs")
    assert spec.defs == (ConstCommand("/bin/ed"),)


def test_command_tokens():
    assert command_tokens("/bin/ed -; ls") == ["/bin/ed", "ed", "-", "ls"]


INTEGRITY = """
fn main() {{
  v = {value};
  write_config("app.conf", "editor", v);
}}
"""


def _spec(tmp_path):
    (tmp_path / "app.conf").write_text("editor = vi\n")
    return parse_spec("config:app.conf\n", tmp_path)


def test_untrusted_write_to_trusted_config(tmp_path):
    found = check_spec_integrity(_spec(tmp_path), parse(INTEGRITY.format(value="input()")))
    assert len(found) == 1 and found[0].config_path == "app.conf"


def test_constant_write_is_fine(tmp_path):
    assert check_spec_integrity(_spec(tmp_path), parse(INTEGRITY.format(value='"vim"'))) == []


def test_no_config_writes(tmp_path):
    assert check_spec_integrity(_spec(tmp_path), parse_file(PROGRAMS / "fetch.mpl")) == []


def test_suggest_fetch():
    spec = suggest_spec(parse_file(PROGRAMS / "fetch.mpl"), ["system"])
    assert spec.defs == (ConstCommand("wget"),)


def test_suggest_two_sinks():
    program = parse('fn main() { system("ls -l"); x = "tar"; popen(x + " cf a.tar .", "r"); }')
    spec = suggest_spec(program, ["system", "popen"])
    assert spec.defs == (ConstCommand("ls"), ConstCommand("tar"))


def test_suggest_completely_dynamic():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec = suggest_spec(parse("fn main() { system(input()); }"), ["system"])
    assert spec.defs == ()
    assert any(issubclass(w.category, CompletelyDynamicCommand) for w in caught)
