from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_id', models.CharField(help_text='batch-mode-trajectory-repN', max_length=255, unique=True)),
                ('batch', models.CharField(db_index=True, max_length=100)),
                ('mode', models.CharField(max_length=50)),
                ('task', models.CharField(default='restaurants', max_length=50)),
                ('trajectory', models.CharField(help_text='Trajectory or scenario id', max_length=100)),
                ('repetition', models.PositiveIntegerField(default=0)),
                ('seed', models.IntegerField(blank=True, null=True)),
                ('status', models.CharField(choices=[('RUNNING', 'Running'), ('COMPLETED', 'Completed'), ('FAILED', 'Failed')], default='RUNNING', max_length=20)),
                ('error', models.TextField(blank=True, default='')),
                ('config', models.JSONField(default=dict, help_text='Snapshot of the experiment config')),
                ('hypotheses', models.JSONField(default=list)),
                ('final_posterior', models.JSONField(blank=True, null=True)),
                ('steps_completed', models.PositiveIntegerField(default=0)),
                ('calls', models.PositiveIntegerField(default=0)),
                ('prompt_tokens', models.PositiveIntegerField(default=0)),
                ('completion_tokens', models.PositiveIntegerField(default=0)),
                ('wall_clock', models.FloatField(default=0.0, help_text='Seconds')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'db_table': 'experiment_runs',
                'ordering': ['batch', 'mode', 'trajectory', 'repetition'],
            },
        ),
    ]
