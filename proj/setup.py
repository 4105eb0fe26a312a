"""Builds the pybind11 extension through the project's CMake tree."""

import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        out_path = Path(self.get_ext_fullpath(ext.name)).resolve()
        out_path.parent.mkdir(parents=True, exist_ok=True)
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp).resolve()
        build_dir.mkdir(parents=True, exist_ok=True)
        cfg = "Debug" if self.debug else "Release"
        configure = [
            "cmake",
            "-S", str(source_dir),
            "-B", str(build_dir),
            f"-DCMAKE_BUILD_TYPE={cfg}",
            f"-DPython3_EXECUTABLE={sys.executable}",
            "-DSTEREOSPARSE_BUILD_TESTS=OFF",
            "-DSTEREOSPARSE_NATIVE=OFF",
        ]
        subprocess.run(configure, check=True)
        build = [
            "cmake", "--build", str(build_dir),
            "--target", "stereosparse_python",
            f"-j{os.cpu_count() or 1}",
        ]
        subprocess.run(build, check=True)
        built = sorted((build_dir / "python").glob("stereosparse.*"))
        if not built:
            raise RuntimeError("cmake did not produce the extension module")
        self.copy_file(str(built[0]), str(out_path))


setup(ext_modules=[CMakeExtension("stereosparse")], cmdclass={"build_ext": CMakeBuild})
