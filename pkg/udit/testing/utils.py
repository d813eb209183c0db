"""
Common testing utilities.
"""
import torch

from udit.datasets import (
    UNWANTED, WANTED, AttributeSpec, BiasedDatasetConfig, DomainManifest
)
from udit.nets import init_weights
from udit.semext import AttributeClassifier, build_extractor
from udit.utils import derive_seed, torch_generator


FILL = AttributeSpec('fill', WANTED, ('flat-blue', 'striped-red'))
SHAPE = AttributeSpec('shape', UNWANTED, ('circle', 'square'))


def small_biased_config(image_size=64, seed=0, major=6, minor=2, workers=1):
    """ A miniature version of the biased-shapes training split: domain A is
    mostly circles, domain B mostly squares.
    """
    attributes = (FILL, SHAPE)

    def manifest(domain, counts):
        return DomainManifest(
            domain=domain, attributes=attributes, counts=counts,
            seed=derive_seed(seed, domain), image_size=image_size)

    return BiasedDatasetConfig(
        attributes=attributes,
        domains={
            'A': manifest('A', {('flat-blue', 'circle'): major,
                                ('flat-blue', 'square'): minor}),
            'B': manifest('B', {('striped-red', 'square'): major,
                                ('striped-red', 'circle'): minor}),
        },
        biased=True,
        workers=workers,
    )


def random_images(n, size=64, seed=0, dtype=torch.float32):
    """ ``n`` random images in [-1, 1] with layout (n, 3, size, size).
    """
    generator = torch_generator(seed)
    return (torch.rand(n, 3, size, size, generator=generator, dtype=dtype) * 2 - 1)


def untrained_extractor(attribute=SHAPE, reduction_dim=4, base_channels=4, seed=0):
    """ A frozen semantic extractor with randomly initialised weights.
    """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        classifier = AttributeClassifier(attribute, base_channels)
        classifier.apply(init_weights)
    return build_extractor(classifier, reduction_dim, seed=seed).freeze()


def state_equal(first, second):
    """ True if two modules hold bit-identical state.
    """
    a, b = first.state_dict(), second.state_dict()
    return a.keys() == b.keys() and all(torch.equal(a[key], b[key]) for key in a)
