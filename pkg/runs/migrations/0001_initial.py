from django.db import migrations, models

import runs.models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='RunManifest',
            fields=[
                ('id', models.AutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=32)),
                ('scenario', models.CharField(blank=True, default='', max_length=64)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('seed', models.BigIntegerField(blank=True, null=True)),
                ('module_versions', models.JSONField(blank=True, default=runs.models.module_versions)),
                ('wall_time', models.FloatField(default=0.0, help_text='Seconds')),
                ('output_digests', models.JSONField(blank=True, default=dict)),
                ('digest', models.CharField(db_index=True, editable=False, max_length=64)),
                ('created', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'verbose_name': 'Run Manifest',
                'verbose_name_plural': 'Run Manifests',
                'ordering': ('-created', '-id'),
            },
        ),
    ]
