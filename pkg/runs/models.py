import hashlib
import json

import django
import numpy
import pandas
import scipy
from django.db import models
from django.db.models.signals import pre_save
from django.dispatch import receiver

import project


def module_versions():
    """
    Versions of the packages that produced a run
    """
    return {'subsidy_lab': project.__version__, 'django': django.get_version(), 'numpy': numpy.__version__,
            'scipy': scipy.__version__, 'pandas': pandas.__version__}


def manifest_digest(config, seed, output_digests):
    """
    SHA-256 over the config snapshot, the seed and the output file digests.
    Wall time, thread count and timestamps are not part of it.
    """
    payload = json.dumps({'config': config, 'seed': seed, 'outputs': output_digests}, sort_keys=True,
                         separators=(',', ':'))
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


class RunManifest(models.Model):
    """
    Model recording one command run: what went in and a digest of what came out
    """

    command = models.CharField(max_length=32)
    scenario = models.CharField(max_length=64, blank=True, default='')
    config = models.JSONField(default=dict, blank=True)
    seed = models.BigIntegerField(null=True, blank=True)
    module_versions = models.JSONField(default=module_versions, blank=True)
    wall_time = models.FloatField(default=0.0, help_text='Seconds')
    output_digests = models.JSONField(default=dict, blank=True)
    digest = models.CharField(max_length=64, editable=False, db_index=True)
    created = models.DateTimeField(auto_now_add=True)

    def __str__(self):
        label = self.scenario or self.command
        return '{0} - {1} - {2}'.format(self.command, label, self.digest[:12])

    def as_dict(self):
        return {
            'command': self.command, 'scenario': self.scenario, 'config': self.config, 'seed': self.seed,
            'module_versions': self.module_versions, 'wall_time': self.wall_time,
            'output_digests': self.output_digests, 'digest': self.digest,
        }

    class Meta:
        ordering = ('-created', '-id')
        verbose_name_plural = 'Run Manifests'
        verbose_name = 'Run Manifest'


@receiver(pre_save, sender=RunManifest)
def set_manifest_digest(sender, instance, **kwargs):
    """
    Compute the digest of the RunManifest object that is being saved
    :param sender: RunManifest Class
    :param instance: RunManifest object that is being saved
    """
    instance.digest = manifest_digest(instance.config, instance.seed, instance.output_digests)
