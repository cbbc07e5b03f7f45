from .dataset_generator import DatasetGenerator
from .datasets import (Dataset, DatasetKind, DiscreteImage, GaussianDataset, GaussianMixture, Split, create_dataset,
                       dump_csv, load_csv)
