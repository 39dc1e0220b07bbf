"""Train small reference CNNs and export model + data + ground truth."""

from .export import export_fixture, fixture_graph
from .fixture import FixtureCNN, accuracy, predict, reestimate_bn, train_fixture
from .formats import read_spm_manifest, read_tns, write_spm, write_tns

__version__ = "0.1.0"

__all__ = [
    "FixtureCNN", "accuracy", "export_fixture", "fixture_graph", "predict",
    "read_spm_manifest", "read_tns", "reestimate_bn", "train_fixture",
    "write_spm", "write_tns",
]
