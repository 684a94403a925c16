import sys

import pytest


@pytest.fixture(scope="session")
def fake_latex_script(tmp_path_factory):
    """A stand-in for an external LaTeX toolchain: reads the .tex body and
    renders it with PIL, writing a PNG where the template says."""
    script = tmp_path_factory.mktemp("latexbin") / "fake_latex.py"
    script.write_text(
        """
import re, sys
from PIL import Image, ImageDraw

tex_path, png_path = sys.argv[1], sys.argv[2]
src = open(tex_path, encoding="utf-8").read()
m = re.search(r"\\\\selectfont\\n(.*?)\\n\\\\end\\{document\\}", src, re.S)
body = m.group(1) if m else "??"
img = Image.new("RGB", (max(40, 7 * len(body)), 40), (255, 255, 255))
ImageDraw.Draw(img).text((5, 10), body[:200], fill=(0, 0, 0))
img.save(png_path)
""".lstrip()
    )
    return script


@pytest.fixture(scope="session")
def working_latex_cmd(fake_latex_script):
    return f"{sys.executable} {fake_latex_script} {{input_tex}} {{output_png}}"


@pytest.fixture(scope="session")
def broken_latex_cmd():
    return f'{sys.executable} -c "import sys; sys.exit(3)"'


@pytest.fixture(scope="session")
def slow_latex_cmd():
    return f'{sys.executable} -c "import time; time.sleep(30)"'


@pytest.fixture(scope="session")
def silent_latex_cmd():
    # exits 0 but never writes the output file
    return f'{sys.executable} -c "pass"'


@pytest.fixture(scope="session")
def garbage_latex_cmd(tmp_path_factory):
    script = tmp_path_factory.mktemp("latexbin") / "garbage.py"
    script.write_text(
        "import sys\nopen(sys.argv[2], 'wb').write(b'not a png at all')\n"
    )
    return f"{sys.executable} {script} {{input_tex}} {{output_png}}"
