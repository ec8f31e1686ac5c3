import itertools

import numpy as np
import pytest

from megaquant.errors import ConfigError
from megaquant.models import (CnnConfig, YaeConfig, build_cnn, build_yae,
                              cnn_shape_trace, cross_validate,
                              generate_exported, quantifier_ramp, train,
                              yae_widths)
from megaquant.models.dataset import max_normalise_rows
from megaquant.models.training import validation_mae
from megaquant.nn import BatchNorm, Dropout
from megaquant.preprocess import ExportConfig
from megaquant.synthesis import SynthesisConfig


@pytest.fixture(scope="module")
def tiny_data(small_basis):
    export = ExportConfig(n_points=128, acquisitions=("OFF", "ON"),
                          datatypes=("real",), target_norm="sum")
    return generate_exported(
        small_basis,
        SynthesisConfig(n_samples=48, noise_sigma_range=(0.0, 0.01),
                        master_seed=21, sobol_skip=1),
        export)


def tiny_yae_config(**kw):
    defaults = dict(encoder_depth=3, decoder_depth=3, quantifier_width=64,
                    export=ExportConfig(n_points=128, acquisitions=("OFF", "ON"),
                                        datatypes=("real",), target_norm="sum"),
                    batch_size=16)
    defaults.update(kw)
    return YaeConfig(**defaults)


class TestCnnShapes:
    def test_default_configuration_trace(self):
        cfg = CnnConfig()  # medium kernels, sigmoid-pool, (OFF,ON) x real
        trace = dict(cnn_shape_trace(cfg))
        assert trace["input"] == (1, 2, 2048)
        assert trace["output"] == (5,)
        # two stride/pool-2 and two pool-3 reductions: 2048 -> 512 -> 56
        assert trace["conv2"][1] == 1  # reduce block collapsed the height

    def test_reduce_block_two_channels_one_conv(self):
        cfg = CnnConfig(export=ExportConfig(acquisitions=("OFF", "ON"),
                                            datatypes=("real",)))
        stages = [name for name, _ in cnn_shape_trace(cfg)]
        # conv0, conv1 (early), conv2 (reduce), conv3..conv6 (tail)
        assert stages.count("input") == 1
        assert len([s for s in stages if s.startswith("conv")]) == 7

    def test_reduce_block_nine_channels(self):
        cfg = CnnConfig(export=ExportConfig(acquisitions=("OFF", "ON", "DIFF"),
                                            datatypes=("real", "imaginary", "magnitude")))
        heights = [shape[1] for name, shape in cnn_shape_trace(cfg)
                   if name.startswith("conv")]
        assert heights[1] == 9          # after the two early blocks
        assert 1 in heights             # reduce block reaches height one
        # 9 -> 7 -> 5 -> 3 -> 1: four reduce convolutions
        assert len(heights) == 2 + 4 + 4

    def test_stride_halves_width_with_ceil(self):
        cfg = CnnConfig(down_early=2, down_late=3, output_activation="softmax",
                        export=ExportConfig(n_points=125,
                                            acquisitions=("OFF",), datatypes=("real",)))
        widths = [shape[2] for name, shape in cnn_shape_trace(cfg)
                  if name.startswith("conv")]
        assert widths[0] == 63  # ceil(125 / 2)

    def test_table_search_space_builds_exhaustively(self):
        # the full CNN grid: 2 norms x 4 acquisitions x 3 datatypes x
        # 3 kernel sets x 2 head variants x 3 batch sizes = 432 configs
        norms = ("sum", "max")
        acq_sets = (("DIFF", "OFF"), ("DIFF", "ON"), ("OFF", "ON"),
                    ("DIFF", "OFF", "ON"))
        dt_sets = (("magnitude",), ("real",), ("imaginary", "real"))
        kernel_sets = ((7, 5, 3, 3), (9, 7, 5, 3), (11, 9, 7, 3))
        heads = (("softmax", 2, 3), ("sigmoid", -2, -3))
        batches = (16, 32, 64)
        count = 0
        for norm, acqs, dts, kernels, head, batch in itertools.product(
                norms, acq_sets, dt_sets, kernel_sets, heads, batches):
            activation, down_early, down_late = head
            cfg = CnnConfig(kernels=kernels, down_early=down_early,
                            down_late=down_late, output_activation=activation,
                            batch_size=batch,
                            export=ExportConfig(acquisitions=acqs, datatypes=dts,
                                                target_norm=norm))
            trace = cnn_shape_trace(cfg)
            assert trace[-1][1] == (5,)
            count += 1
        assert count == 432

    def test_trace_matches_real_forward(self, rng):
        cfg = CnnConfig(filters_early=4, filters_late=6, dense_units=16,
                        export=ExportConfig(n_points=64, acquisitions=("OFF", "ON"),
                                            datatypes=("real", "imaginary")))
        net = build_cnn(cfg, rng)
        out = net.forward(rng.standard_normal((3, 1, 4, 64)))
        assert out.shape == (3, 5)
        trace = dict(cnn_shape_trace(cfg))
        assert trace["output"] == (5,)

    def test_batchnorm_vs_dropout_block_content(self, rng):
        base = dict(filters_early=2, filters_late=2, dense_units=4,
                    export=ExportConfig(n_points=128, acquisitions=("OFF",),
                                        datatypes=("real",)))
        bn_net = build_cnn(CnnConfig(conv_dropout=0.0, **base), rng)
        do_net = build_cnn(CnnConfig(conv_dropout=0.25, **base), rng)
        assert any(isinstance(l, BatchNorm) for l in bn_net.layers)
        assert not any(isinstance(l, Dropout) for l in bn_net.layers[:-4])
        conv_dropouts = [l for l in do_net.layers[:-4] if isinstance(l, Dropout)]
        assert conv_dropouts and all(l.rate == 0.25 for l in conv_dropouts)
        assert not any(isinstance(l, BatchNorm) for l in do_net.layers)

    def test_kernel_validation(self):
        with pytest.raises(ConfigError):
            CnnConfig(kernels=(8, 7, 5, 3))
        with pytest.raises(ConfigError):
            CnnConfig(kernels=(1, 7, 5, 3))


class TestYaeShapes:
    def test_encoder_widths_2048(self):
        cfg = YaeConfig(export=ExportConfig(n_points=2048,
                                            acquisitions=("OFF", "ON"),
                                            datatypes=("imaginary", "real")))
        widths = yae_widths(cfg)
        assert widths["encoder"] == [2048, 1024, 512, 256, 128]
        assert widths["latent"] == [128]

    def test_decoder_widths_2048(self):
        cfg = YaeConfig(export=ExportConfig(n_points=2048,
                                            acquisitions=("OFF", "ON"),
                                            datatypes=("imaginary", "real")))
        assert yae_widths(cfg)["decoder"] == [64, 128, 256, 512, 1024, 2048]

    def test_final_selected_configuration_builds(self, rng):
        # the selected joint-training configuration, scaled to 512 points
        cfg = YaeConfig(encoder_depth=5, decoder_depth=6, quantifier_depth=2,
                        quantifier_width=384, encoder_activation="tanh",
                        decoder_activation="tanh", quantifier_activation="sigmoid",
                        output_activation="sigmoid", encoder_dropout=0.2,
                        batch_size=16,
                        export=ExportConfig(n_points=512,
                                            acquisitions=("OFF", "ON"),
                                            datatypes=("imaginary", "real"),
                                            target_norm="sum"))
        model = build_yae(cfg, rng)
        x = rng.standard_normal((3, 4, 512))
        recon, pred = model.forward(x)
        assert recon.shape == (3, 4, 512)
        assert pred.shape == (3, 5)
        assert np.all((pred >= 0) & (pred <= 1))

    def test_divisibility_enforced(self):
        with pytest.raises(ConfigError):
            tiny_yae_config(encoder_depth=9)  # 128 not divisible by 2^8

    def test_refined_search_space_widths_exhaustive(self):
        # the joint-stage refined space, validated structurally
        acq_sets = (("DIFF", "OFF", "ON"), ("DIFF", "ON"), ("OFF", "ON"))
        dt_sets = (("real",), ("imaginary", "real"))
        count = 0
        for acqs, dts, enc_d, dec_d, a_e, d_e, a_d, n_q, a_q, a_m in itertools.product(
                acq_sets, dt_sets, (5, 6), (6, 7, 8), ("tanh", "relu"),
                (0.2, 0.3), ("tanh", "linear"), (128, 192, 256, 384, 448, 512),
                ("relu", "sigmoid"), ("sigmoid", "softmax")):
            cfg = YaeConfig(encoder_depth=enc_d, decoder_depth=dec_d,
                            quantifier_depth=2, quantifier_width=n_q,
                            encoder_activation=a_e, decoder_activation=a_d,
                            quantifier_activation=a_q, output_activation=a_m,
                            encoder_dropout=d_e,
                            export=ExportConfig(n_points=2048, acquisitions=acqs,
                                                datatypes=dts, target_norm="sum"))
            widths = yae_widths(cfg)
            assert all(w >= 1 for part in widths.values() for w in part)
            assert widths["quantifier"][-1] == 5
            assert widths["decoder"][-1] == 2048
            count += 1
        assert count == 6912


class TestRampAndTraining:
    def test_ramp_boundaries_exact(self):
        assert quantifier_ramp(0, 10) == 0.1
        assert quantifier_ramp(10, 10) == 1.0
        assert quantifier_ramp(20, 10) == 1.0
        assert quantifier_ramp(5, 10) == pytest.approx(0.55)
        deltas = np.diff([quantifier_ramp(e, 10) for e in range(11)])
        assert np.allclose(deltas, 0.09)

    def test_log_length_and_weights(self, tiny_data):
        trained = train(tiny_yae_config(ramp_epochs=4), tiny_data, epochs=6, seed=0)
        assert len(trained.training_log) == 6
        weights = [e["quant_weight"] for e in trained.training_log]
        assert weights[0] == 0.1
        assert weights[4] == 1.0 and weights[5] == 1.0

    def test_training_bit_deterministic(self, tiny_data):
        a = train(tiny_yae_config(), tiny_data, epochs=3, seed=7)
        b = train(tiny_yae_config(), tiny_data, epochs=3, seed=7)
        assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
        assert a.training_log == b.training_log

    def test_seed_changes_training(self, tiny_data):
        a = train(tiny_yae_config(), tiny_data, epochs=2, seed=1)
        b = train(tiny_yae_config(), tiny_data, epochs=2, seed=2)
        assert not all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))

    def test_cnn_training_runs_and_logs_mse(self, tiny_data):
        cfg = CnnConfig(filters_early=4, filters_late=8, dense_units=16,
                        export=tiny_data_export(), batch_size=16)
        trained = train(cfg, tiny_data, epochs=2, seed=3)
        assert len(trained.training_log) == 2
        assert "quant_weight" not in trained.training_log[0]
        preds = trained.predict(tiny_data.x)
        assert preds.shape == (len(tiny_data), 5)

    def test_branch_isolation(self, tiny_data, rng):
        model = build_yae(tiny_yae_config(encoder_dropout=0.0), rng)
        x = tiny_data.x[:8]
        recon, pred = model.forward(x, training=True)
        # zero quantifier weight: quantifier parameters see zero gradient
        model.backward(np.ones_like(recon), np.zeros_like(pred))
        assert all(np.all(g == 0) for g in model.quantifier.grads())
        assert any(np.any(g != 0) for enc in model.encoders for g in enc.grads())
        # zero reconstruction weight: decoder parameters see zero gradient
        model.forward(x, training=True)
        model.backward(np.zeros_like(recon), np.ones_like(pred))
        assert all(np.all(g == 0) for dec in model.decoders for g in dec.grads())
        assert any(np.any(g != 0) for enc in model.encoders for g in enc.grads())

    def test_overfits_single_sample(self, tiny_data):
        data = tiny_data.subset([0])
        cfg = tiny_yae_config(encoder_dropout=0.0, ramp_epochs=10)
        trained = train(cfg, data, epochs=500, seed=4)
        losses = [e["train_loss"] for e in trained.training_log]
        assert losses[-1] < 1e-3
        tail = losses[20:]
        assert all(b <= a + 1e-9 for a, b in zip(tail, tail[1:]))

    def test_validation_mae_in_log(self, tiny_data):
        trained = train(tiny_yae_config(), tiny_data, epochs=2, seed=0,
                        val_data=tiny_data.subset(range(8)))
        assert all("val_mae" in e for e in trained.training_log)


def tiny_data_export():
    return ExportConfig(n_points=128, acquisitions=("OFF", "ON"),
                        datatypes=("real",), target_norm="sum")


class TestCrossValidate:
    def test_fold_partition_is_permutation(self, tiny_data):
        result = cross_validate(tiny_yae_config(), tiny_data, folds=4, epochs=1, seed=3)
        assert sum(result["fold_sizes"]) == len(tiny_data)
        assert len(result["fold_maes"]) == 4

    def test_even_folds(self, tiny_data):
        result = cross_validate(tiny_yae_config(), tiny_data.subset(range(10)),
                                folds=5, epochs=1, seed=0)
        assert result["fold_sizes"] == [2, 2, 2, 2, 2]

    def test_identical_samples_give_identical_folds(self, tiny_data):
        # fold exchangeability: duplicated data makes every fold equivalent,
        # mirroring the constant-prediction case
        data = tiny_data.subset([3] * 20)
        result = cross_validate(tiny_yae_config(), data, folds=4, epochs=2, seed=1)
        assert np.ptp(result["fold_maes"]) < 0.01
        assert np.ptp(result["fold_maes"]) < 1e-12

    def test_too_many_folds_rejected(self, tiny_data):
        with pytest.raises(ConfigError):
            cross_validate(tiny_yae_config(), tiny_data.subset(range(4)),
                           folds=10, epochs=1)

    def test_workers_do_not_change_result(self, tiny_data):
        serial = cross_validate(tiny_yae_config(), tiny_data, folds=3, epochs=1,
                                seed=5, workers=1)
        parallel = cross_validate(tiny_yae_config(), tiny_data, folds=3, epochs=1,
                                  seed=5, workers=2)
        assert serial["fold_maes"] == parallel["fold_maes"]


class TestPredictionHelpers:
    def test_max_normalise_rows(self):
        rows = np.array([[0.2, 0.4], [0.0, 0.0]])
        out = max_normalise_rows(rows)
        assert np.allclose(out[0], [0.5, 1.0])
        assert np.all(out[1] == 0)

    def test_validation_mae_zero_for_perfect_model(self, tiny_data):
        truth = max_normalise_rows(tiny_data.targets_raw)

        class Oracle:
            arch = "yae"

            def predict_max_normalised(self, x):
                return truth

        assert validation_mae(Oracle(), tiny_data) == 0.0


def test_selection_epoch_defaults():
    from megaquant.models.training import (DEFAULT_SELECTION_EPOCHS,
                                           default_selection_epochs)
    assert DEFAULT_SELECTION_EPOCHS == {"cnn": 100, "yae": 200}
    assert default_selection_epochs(CnnConfig()) == 100
    assert default_selection_epochs(tiny_yae_config()) == 200
