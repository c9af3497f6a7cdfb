import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd
import torch

from hgdta import pipeline
from hgdta.cli import main
from hgdta.config import TrainConfig
from hgdta.data.dataset import kd_to_pkd, load_dataset
from hgdta.data.synthetic import generate_synthetic
from hgdta.errors import CheckpointError, ConfigError, DatasetError
from hgdta.graphs.affinity import AffinityGraph
from hgdta.models.hgrl import HierarchicalGraphNet, ModelConfig
from hgdta.utils.checkpoint import load_checkpoint, save_checkpoint
from hgdta.utils.misc import pair_values
from hgdta.utils.train import Trainer

opj = os.path.join

NARROW = dict(global_hidden=16, global_dim=16, drug_dim=16, target_dim=16, refined_drug_dim=16,
              refined_target_dim=16, readout_hidden=16, readout_dim=16, predictor_hidden=(32, 16))


def quick_config(**kw):
    return TrainConfig(**{'epochs': 20, 'lr': 5e-3, 'val_fraction': 0.0, 'quiet': True, **kw})


class TestDatasetFiles(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = self.tmp.name
        generate_synthetic(self.root, n_drugs=2, n_targets=1, seed=0)

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name, text):
        with open(opj(self.root, name), 'w') as f:
            f.write(text)

    def test_davis_values_are_converted(self):
        assert abs(kd_to_pkd(10000.0) - 5.0) < 1e-12
        self.write('affinities.tsv', 'D000\tT000\t10000\nD001\tT000\t1\n')
        bundle = load_dataset(self.root, 'davis')
        assert abs(bundle.affinity.entries[(0, 0)] - 5.0) < 1e-12
        assert abs(bundle.affinity.entries[(1, 0)] - 9.0) < 1e-12
        assert bundle.cluster_threshold == 7.0

    def test_rejects_bad_rows(self):
        self.write('affinities.tsv', 'D000\tT000\t7.1\nD999\tT000\t6.0\n')
        with self.assertRaises(DatasetError) as ctx:
            load_dataset(self.root, 'kiba')
        assert ctx.exception.line == 2 and 'D999' in str(ctx.exception)
        self.write('affinities.tsv', 'D000\tT000\tstrong\n')
        with self.assertRaises(DatasetError):
            load_dataset(self.root, 'kiba')
        self.write('affinities.tsv', 'D000\tT000\t7.1\nD000\tT000\t7.2\n')
        with self.assertRaises(DatasetError):
            load_dataset(self.root, 'kiba')
        self.write('affinities.tsv', 'D000\tT000\t0\n')
        with self.assertRaises(DatasetError):
            load_dataset(self.root, 'davis')
        with self.assertRaises(DatasetError):
            load_dataset(self.root, 'bindingdb')

    def test_lists_every_rejected_smiles(self):
        self.write('drugs.tsv', 'D000\tCCO\nD001\tC)\nD002\tCC\nD003\tC==C\n')
        with self.assertRaises(DatasetError) as ctx:
            load_dataset(self.root, 'synthetic')
        message = str(ctx.exception)
        assert ctx.exception.line == 2
        assert '2 SMILES rejected' in message
        # line:column in the file, the column counting from 1 past the id and tab
        assert "2:7 drug 'D001'" in message and "4:8 drug 'D003'" in message
        assert 'D002' not in message

    def test_missing_contact_maps(self):
        shutil.rmtree(opj(self.root, 'contact_maps'))
        with self.assertRaises(DatasetError):
            load_dataset(self.root, 'synthetic')
        bundle = load_dataset(self.root, 'synthetic', synthesize_contacts=True)
        graph = bundle.target_graphs[0]
        assert graph.num_nodes == len(bundle.sequences[0])
        assert bundle.graphs_built == 1


class TestTraining(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        cls.root = opj(cls.tmp.name, 'data')
        generate_synthetic(cls.root, n_drugs=8, n_targets=6, seed=0)
        cls.bundle = load_dataset(cls.root, 'synthetic')

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_learning_signal(self):
        # default model and optimizer settings, 200 epochs
        _, trainer = pipeline.train(self.bundle, 'S1', TrainConfig(epochs=200, quiet=True))
        assert 0 < len(trainer.train_losses) <= 200
        assert trainer.train_losses[-1] <= 0.1 * trainer.train_losses[0]

    def test_overfits_four_pairs(self):
        with tempfile.TemporaryDirectory() as tmp:
            generate_synthetic(tmp, n_drugs=2, n_targets=2, seed=1)
            bundle = load_dataset(tmp, 'synthetic')
            pairs = sorted(bundle.affinity.entries)
            mc = pipeline.build_model_config(bundle, 'S1', TrainConfig(), dict(NARROW, dropedge_rate=0.0))
            model = HierarchicalGraphNet(mc)
            trainer = Trainer(model, AffinityGraph(bundle.affinity), pipeline.graph_inputs(bundle),
                              lr=2e-3, quiet=True)
            trainer(pairs, pair_values(bundle.affinity, pairs), epochs=1500)
        assert trainer.final_train_mse < 0.01

    def test_zero_learning_rate(self):
        mc = pipeline.build_model_config(self.bundle, 'S1', TrainConfig(), dict(NARROW, dropedge_rate=0.0))
        model = HierarchicalGraphNet(mc)
        before = {k: v.detach().clone() for k, v in model.state_dict().items()}
        pairs = sorted(self.bundle.affinity.entries)[:20]
        trainer = Trainer(model, AffinityGraph(self.bundle.affinity), pipeline.graph_inputs(self.bundle),
                          lr=0.0, quiet=True)
        trainer(pairs, pair_values(self.bundle.affinity, pairs), epochs=5)
        np.testing.assert_allclose(trainer.train_losses, trainer.train_losses[0], rtol=1e-12)
        for k, v in model.state_dict().items():
            assert torch.equal(v, before[k]), k

    def test_early_stopping_restores_the_best_epoch(self):
        tc = quick_config(epochs=60, val_fraction=1 / 6, patience=3, lr=5e-2)
        ckpt, trainer = pipeline.train(self.bundle, 'S1', tc, NARROW)
        assert len(trainer.val_losses) == len(trainer.train_losses) == trainer.epoch
        assert trainer.best_epoch == int(np.argmin(trainer.val_losses))
        assert len(ckpt.val_pairs) > 0 and not set(ckpt.val_pairs) & set(ckpt.fit_pairs)

    def test_checkpoint_replays_training_mse(self):
        ckpt, trainer = pipeline.train(self.bundle, 'S1', quick_config(), NARROW)
        report, preds, routing = pipeline.evaluate(ckpt, self.bundle, pairs=ckpt.fit_pairs)
        assert abs(report['mse'] - trainer.final_train_mse) < 1e-9
        assert routing.inferred_drugs == [] and routing.inferred_targets == []

        with tempfile.TemporaryDirectory() as tmp:
            path = opj(tmp, 'run', 'checkpoint.pt')
            save_checkpoint(ckpt, path)
            loaded = load_checkpoint(path)
            first, first_preds, _ = pipeline.evaluate(ckpt, self.bundle)
            second, second_preds, _ = pipeline.evaluate(loaded, self.bundle)
            assert first == second
            assert np.array_equal(first_preds, second_preds)

            with open(path, 'rb') as f:
                blob = f.read()
            with open(path, 'wb') as f:
                f.write(blob[:len(blob) // 2])
            with self.assertRaises(CheckpointError):
                load_checkpoint(path)
            with self.assertRaises(CheckpointError):
                load_checkpoint(opj(tmp, 'missing.pt'))
            torch.save({'format_version': 99}, path)
            with self.assertRaises(CheckpointError):
                load_checkpoint(path)

    def test_checkpoint_compatibility(self):
        ckpt, _ = pipeline.train(self.bundle, 'S1', quick_config(epochs=2), NARROW)
        ckpt.check_compatible(ModelConfig(**ckpt.model_config))
        with self.assertRaises(CheckpointError):
            ckpt.check_compatible(ModelConfig(**{**ckpt.model_config, 'global_dim': 7}))
        wider = dict(ckpt.model_config, drug_dim=24)
        ckpt.model_config, original = wider, ckpt.model_config
        with self.assertRaises(CheckpointError):
            ckpt.model()
        ckpt.model_config = original
        as_davis = load_dataset(self.root, 'davis')
        with self.assertRaises(CheckpointError):
            pipeline.evaluate(ckpt, as_davis)
        with self.assertRaises(CheckpointError):
            pipeline.infer_pair(ckpt, as_davis, 'D000', 'T001')
        ckpt.split_digest = 'not-the-digest'
        with self.assertRaises(CheckpointError):
            pipeline.checkpoint_split(ckpt, self.bundle)

    def test_resume_matches_uninterrupted_training(self):
        straight, _ = pipeline.train(self.bundle, 'S1', quick_config(epochs=6), NARROW)
        half, _ = pipeline.train(self.bundle, 'S1', quick_config(epochs=3), NARROW)
        resumed, trainer = pipeline.train(self.bundle, 'S1', quick_config(epochs=6), NARROW, resume=half)
        assert resumed.epoch == 6 and trainer.start_epoch == 3
        for k, v in straight.state_dict.items():
            assert torch.equal(v, resumed.state_dict[k]), k
        assert resumed.train_losses == straight.train_losses
        assert list(pipeline.losses_frame(trainer)['epoch']) == [3, 4, 5]

        with self.assertRaises(CheckpointError):
            pipeline.train(self.bundle, 'S1', quick_config(epochs=6, seed=5), NARROW, resume=half)
        with self.assertRaises(CheckpointError):
            pipeline.train(self.bundle, 'S1', quick_config(epochs=6), dict(NARROW, global_dim=8), resume=half)
        with self.assertRaises(ConfigError):
            pipeline.train(self.bundle, 'S1', quick_config(epochs=2), NARROW, resume=half)
        with self.assertRaises(ConfigError):
            pipeline.run_repeated(self.bundle, 'S1', quick_config(epochs=6, runs=2), NARROW, resume=half)

    def test_resume_with_early_stopping_matches_uninterrupted_training(self):
        for patience in (1000, 2):
            tc = dict(val_fraction=1 / 6, lr=5e-2, patience=patience)
            straight, _ = pipeline.train(self.bundle, 'S1', quick_config(epochs=12, **tc), NARROW)
            half, _ = pipeline.train(self.bundle, 'S1', quick_config(epochs=6, **tc), NARROW)
            with tempfile.TemporaryDirectory() as tmp:
                save_checkpoint(half, opj(tmp, 'half.pt'))
                half = load_checkpoint(opj(tmp, 'half.pt'))
            resumed, _ = pipeline.train(self.bundle, 'S1', quick_config(epochs=12, **tc), NARROW, resume=half)
            assert resumed.epoch == straight.epoch, patience
            assert resumed.best_epoch == straight.best_epoch and resumed.wait == straight.wait
            assert resumed.train_losses == straight.train_losses
            assert resumed.val_losses == straight.val_losses
            for k, v in straight.state_dict.items():
                assert torch.equal(v, resumed.state_dict[k]), k
                assert torch.equal(straight.last_state_dict[k], resumed.last_state_dict[k]), k
        assert straight.best_epoch == int(np.argmin(straight.val_losses))

    def test_unseen_drugs_are_routed_to_cold_start(self):
        ckpt, _ = pipeline.train(self.bundle, 'S2', quick_config(epochs=5), NARROW)
        s = pipeline.checkpoint_split(ckpt, self.bundle)
        _, preds, routing = pipeline.evaluate(ckpt, self.bundle)
        assert routing.inferred_drugs == s.unseen_drugs and routing.inferred_targets == []
        assert len(preds) == len(s.test) and np.all(np.isfinite(preds))
        assert ckpt.model_config['use_skip_connection']

    def test_export_embeddings(self):
        ckpt, _ = pipeline.train(self.bundle, 'S3', quick_config(epochs=3), NARROW)
        s = pipeline.checkpoint_split(ckpt, self.bundle)
        with tempfile.TemporaryDirectory() as tmp:
            df = pipeline.export_embeddings(ckpt, self.bundle, opj(tmp, 'a.tsv'))
            pipeline.export_embeddings(ckpt, self.bundle, opj(tmp, 'b.tsv'))
            hidden = pipeline.export_embeddings(ckpt, self.bundle, opj(tmp, 'c.tsv'), layer='hidden')
            with open(opj(tmp, 'a.tsv'), 'rb') as a, open(opj(tmp, 'b.tsv'), 'rb') as b:
                assert a.read() == b.read()
        assert len(df) == len(s.test)
        assert list(df.columns[:4]) == ['drug_id', 'target_id', 'affinity', 'label']
        assert df.shape[1] == 4 + HierarchicalGraphNet(ModelConfig(**ckpt.model_config)).pair_dim
        assert hidden.shape[1] == 4 + 16
        assert set(df['label']) <= {0, 1}
        assert np.array_equal(df['label'].to_numpy(), (df['affinity'] >= 7.0).astype(int).to_numpy())

    def test_infer_pair(self):
        ckpt, _ = pipeline.train(self.bundle, 'S1', quick_config(epochs=2), NARROW)
        value = pipeline.infer_pair(ckpt, self.bundle, 'D000', 'T001')
        assert np.isfinite(value)
        with self.assertRaises(DatasetError):
            pipeline.infer_pair(ckpt, self.bundle, 'D999', 'T001')

    def test_without_local_graphs_builds_no_molecular_graphs(self):
        bundle = load_dataset(self.root, 'synthetic')
        ckpt, _ = pipeline.train(bundle, 'S1', quick_config(epochs=3), NARROW, ablation='lmg')
        pipeline.evaluate(ckpt, bundle)
        assert bundle.graphs_built == 0

    def test_repeated_runs(self):
        with tempfile.TemporaryDirectory() as out:
            summary, metrics = pipeline.run_repeated(self.bundle, 'S1', quick_config(epochs=2, runs=2),
                                                     NARROW, out_dir=out)
            assert summary.runs == 2
            assert list(metrics.columns) == ['scenario', 'run', 'mse', 'ci', 'rm2', 'pearson']
            assert metrics['run'].tolist() == [0, 1]
            for run in ('run0', 'run1'):
                for name in ('checkpoint.pt', 'split.tsv', 'losses.tsv'):
                    assert os.path.isfile(opj(out, run, name))
            assert load_checkpoint(opj(out, 'run1', 'checkpoint.pt')).train_config['seed'] == 1
            losses = pd.read_csv(opj(out, 'run0', 'losses.tsv'), sep='\t')
            assert list(losses.columns) == ['epoch', 'train', 'val'] and len(losses) == 2
            with open(opj(out, 'report.txt')) as f:
                assert f.readline().strip() == 'scenario=S1'


class TestColdStartConsistency(unittest.TestCase):

    def test_copied_drug_predicts_like_its_original(self):
        with tempfile.TemporaryDirectory() as root:
            generate_synthetic(root, n_drugs=6, n_targets=4, seed=2)
            with open(opj(root, 'drugs.tsv')) as f:
                first = f.readline().split('\t')[1].strip()
            with open(opj(root, 'drugs.tsv'), 'a') as f:
                f.write(f'D006\t{first}\n')
            bundle = load_dataset(root, 'synthetic')
            assert bundle.n_d == 7 and all(i != 6 for i, _ in bundle.affinity.entries)
            tc = quick_config(epochs=10, simk_drug=1)
            ckpt, _ = pipeline.train(bundle, 'S1', tc, dict(NARROW, use_skip_connection=True))
            assert any(i == 0 for i, _ in ckpt.fit_pairs)
            pairs = [(6, j) for j in range(4)] + [(0, j) for j in range(4)]
            validator, routing = pipeline.cold_start_validator(ckpt, bundle, pairs)
            preds = validator.predict(pairs)
        assert routing.inferred_drugs == [6]
        np.testing.assert_allclose(preds[:4], preds[4:], rtol=0, atol=1e-9)


class TestCommandLine(unittest.TestCase):

    def test_end_to_end(self):
        with tempfile.TemporaryDirectory() as tmp:
            data, out = opj(tmp, 'data'), opj(tmp, 'out')
            assert main(['synthesize', '--out', data, '--drugs', '6', '--targets', '4']) == 0
            dataset = ['--dataset', data, '--kind', 'synthetic']
            assert main(['prepare', *dataset, '--scenario', 's2', '--out', out]) == 0
            assert os.path.isfile(opj(out, 'split.tsv'))

            cfg = opj(tmp, 'run.cfg')
            with open(cfg, 'w') as f:
                f.write('global_dim=8\ndrug_dim=8\ntarget_dim=8\nreadout_dim=8\nepochs=50\n')
            assert main(['train', *dataset, '--config', cfg, '--epochs', '2', '--out', out]) == 0
            ckpt = load_checkpoint(opj(out, 'run0', 'checkpoint.pt'))
            assert ckpt.train_config['epochs'] == 2 and ckpt.model_config['global_dim'] == 8
            assert os.path.isfile(opj(out, 'metrics.tsv'))
            resumed = opj(tmp, 'resumed')
            assert main(['train', *dataset, '--config', cfg, '--epochs', '3', '--out', resumed,
                         '--resume', opj(out, 'run0', 'checkpoint.pt')]) == 0
            assert load_checkpoint(opj(resumed, 'run0', 'checkpoint.pt')).epoch == 3
            assert main(['train', *dataset, '--config', cfg, '--epochs', '3', '--seed', '4', '--out', resumed,
                         '--resume', opj(out, 'run0', 'checkpoint.pt')]) == 1

            checkpoint = ['--checkpoint', opj(out, 'run0', 'checkpoint.pt')]
            preds = opj(tmp, 'preds.tsv')
            assert main(['evaluate', *dataset, *checkpoint, '--out', preds]) == 0
            # the dataset kind defaults to the one the checkpoint was trained on
            assert main(['evaluate', '--dataset', data, *checkpoint]) == 0
            assert main(['evaluate', '--dataset', data, '--kind', 'davis', *checkpoint]) == 1
            assert list(pd.read_csv(preds, sep='\t').columns) == ['drug_id', 'target_id', 'label',
                                                                  'affinity', 'prediction']
            assert main(['infer', *dataset, *checkpoint, '--drug', 'D001', '--target', 'T002']) == 0
            assert main(['infer', *dataset, *checkpoint, '--drug', 'D404', '--target', 'T002']) == 1
            emb = opj(tmp, 'emb.tsv')
            assert main(['export-embeddings', *dataset, *checkpoint, '--out', emb]) == 0
            assert main(['cluster-metrics', emb]) in (0, 1)
            assert main(['evaluate', *dataset, '--checkpoint', opj(tmp, 'missing.pt')]) == 1
            with open(cfg, 'w') as f:
                f.write('learning_rate=0.1\n')
            assert main(['train', *dataset, '--config', cfg, '--out', out]) == 1


if __name__ == '__main__':
    unittest.main()
