#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "lossmat/data.hpp"
#include "lossmat/model.hpp"
#include "oracles.hpp"

using namespace lossmat;

namespace {

std::vector<Sample> fixed_samples(int n, int d, int num_classes, std::uint64_t seed) {
    std::vector<Sample> out(n);
    for (int i = 0; i < n; ++i) {
        out[i].label = static_cast<int>(splitmix64(key_mix(seed, i, 0)) % num_classes);
        out[i].features.resize(d);
        for (int j = 0; j < d; ++j) out[i].features[j] = counter_normal(key_mix(seed, i, 1, j));
    }
    return out;
}

DiscriminativeModel perturbed_model(Arch arch, int d, int n, int h, std::uint64_t seed) {
    DiscriminativeModel m = make_model(arch, d, n, h, seed);
    for (std::size_t j = 0; j < m.params.size(); ++j)
        m.params[j] += 0.4 * counter_normal(key_mix(seed, 99, j));
    return m;
}

}  // namespace

TEST_CASE("forward_logits basics") {
    DiscriminativeModel m = make_model(Arch::linear, 3, 4, 0, 1);
    std::fill(m.params.begin(), m.params.end(), 0.0);
    std::vector<double> x = {1.0, -2.0, 0.5};

    SUBCASE("zero parameters give zero logits and uniform softmax") {
        auto logits = forward_logits(m, x);
        for (double v : logits) CHECK(v == 0.0);
        auto probs = logits;
        softmax_inplace(probs);
        for (double p : probs) CHECK(p == doctest::Approx(0.25));
    }
    SUBCASE("inner-product construction") {
        double norm2 = 1.0 + 4.0 + 0.25;
        for (int j = 0; j < 3; ++j) m.params[2 * 3 + j] = x[j] / norm2;  // row k=2
        auto logits = forward_logits(m, x);
        CHECK(logits[2] == doctest::Approx(1.0));
        CHECK(logits[0] == 0.0);
    }
    SUBCASE("dimension mismatch") { CHECK_THROWS(forward_logits(m, {1.0})); }
    SUBCASE("repeated calls are identical") {
        DiscriminativeModel r = make_model(Arch::mlp, 3, 4, 8, 5);
        CHECK(forward_logits(r, x) == forward_logits(r, x));
    }
}

TEST_CASE("empirical_loss") {
    SUBCASE("uniform logits give exactly ln N") {
        for (int n : {2, 3, 5, 10}) {
            DiscriminativeModel m = make_model(Arch::linear, 2, n, 0, 1);
            std::fill(m.params.begin(), m.params.end(), 0.0);
            auto samples = fixed_samples(9, 2, n, 3);
            CHECK(empirical_loss(m, samples, LossFn::cross_entropy()) ==
                  doctest::Approx(std::log(n)).epsilon(1e-12));
        }
    }
    SUBCASE("matches the hand-summed per-sample oracle") {
        DiscriminativeModel m = perturbed_model(Arch::mlp, 3, 4, 6, 17);
        auto samples = fixed_samples(6, 3, 4, 23);
        CHECK(empirical_loss(m, samples, LossFn::cross_entropy()) ==
              doctest::Approx(oracles::naive_mean_cross_entropy(m, samples)).epsilon(1e-12));
    }
    SUBCASE("perfect-margin model has zero 0/1 loss") {
        BlobSpec spec;
        spec.centers = {{-3.0, 0.0}, {3.0, 0.0}};
        spec.scale = 0.4;
        spec.samples_per_class_train = 30;
        spec.samples_per_class_test = 30;
        spec.seed = 5;
        TaskStream stream = make_blob_stream(spec, 1, 2);
        DiscriminativeModel m = make_model(Arch::linear, 2, 2, 0, 1);
        std::fill(m.params.begin(), m.params.end(), 0.0);
        m.params[0] = -1.0;        // class 0 row
        m.params[2] = 1.0;         // class 1 row
        CHECK(empirical_loss(m, all_test_samples(stream), LossFn::zero_one()) == 0.0);
    }
    SUBCASE("empty sample list") {
        DiscriminativeModel m = make_model(Arch::linear, 2, 2, 0, 1);
        CHECK_THROWS(empirical_loss(m, {}, LossFn::cross_entropy()));
    }
}

TEST_CASE("logit translation invariance of CE and 0/1") {
    DiscriminativeModel m = perturbed_model(Arch::linear, 4, 5, 0, 31);
    auto samples = fixed_samples(8, 4, 5, 37);
    double ce = empirical_loss(m, samples, LossFn::cross_entropy());
    double zo = empirical_loss(m, samples, LossFn::zero_one());
    // shift every logit by adding a constant to all biases
    DiscriminativeModel shifted = m;
    for (int k = 0; k < 5; ++k) shifted.params[5 * 4 + k] += 7.25;
    CHECK(std::abs(empirical_loss(shifted, samples, LossFn::cross_entropy()) - ce) < 1e-12);
    CHECK(empirical_loss(shifted, samples, LossFn::zero_one()) == zo);
}

TEST_CASE("gradient matches central finite differences") {
    auto run_check = [](Arch arch, int h, std::uint64_t seed) {
        auto batch = fixed_samples(5, 3, 4, seed);
        for (int trial = 0; trial < 20; ++trial) {
            DiscriminativeModel m = perturbed_model(arch, 3, 4, h, seed + trial);
            auto analytic = loss_gradient(m, batch);
            auto numeric = oracles::finite_difference_grad(
                m.params,
                [&](const std::vector<double>& p) {
                    DiscriminativeModel probe = m;
                    probe.params = p;
                    return empirical_loss(probe, batch, LossFn::cross_entropy());
                });
            CHECK(oracles::max_rel_error(analytic, numeric) < 1e-4);
        }
    };
    SUBCASE("linear") { run_check(Arch::linear, 0, 100); }
    SUBCASE("mlp") { run_check(Arch::mlp, 6, 200); }
}

TEST_CASE("gradient edge cases") {
    SUBCASE("saturated confident logits give near-zero gradient") {
        DiscriminativeModel m = make_model(Arch::linear, 2, 2, 0, 1);
        std::fill(m.params.begin(), m.params.end(), 0.0);
        m.params[0] = 50.0;  // class-0 row strongly aligned with x = (1, 0)
        m.params[2] = -50.0;
        Sample s{{1.0, 0.0}, 0};
        auto grad = loss_gradient(m, {s});
        double norm = 0.0;
        for (double g : grad) norm += g * g;
        CHECK(std::sqrt(norm) < 1e-6);
    }
    SUBCASE("duplicating the batch leaves the mean gradient unchanged") {
        DiscriminativeModel m = perturbed_model(Arch::mlp, 3, 3, 5, 7);
        auto batch = fixed_samples(4, 3, 3, 11);
        auto twice = batch;
        twice.insert(twice.end(), batch.begin(), batch.end());
        auto g1 = loss_gradient(m, batch);
        auto g2 = loss_gradient(m, twice);
        for (std::size_t j = 0; j < g1.size(); ++j) CHECK(g1[j] == doctest::Approx(g2[j]).epsilon(1e-12));
    }
}

TEST_CASE("sgd_train") {
    BlobSpec spec;
    spec.centers = {{-3.0, 0.0}, {3.0, 0.0}};
    spec.scale = 0.5;
    spec.samples_per_class_train = 100;
    spec.samples_per_class_test = 50;
    spec.seed = 21;
    TaskStream stream = make_blob_stream(spec, 1, 2);
    DiscriminativeModel init = make_model(Arch::linear, 2, 2, 0, 3);
    TrainConfig cfg{0.1, 500, 16, 9};

    SUBCASE("separable blobs reach near-zero error") {
        DiscriminativeModel trained = sgd_train(init, stream.tasks[0].train, cfg);
        CHECK(empirical_loss(trained, stream.tasks[0].train, LossFn::zero_one()) < 0.02);
        // endpoint contract: final loss no worse than initial
        CHECK(empirical_loss(trained, stream.tasks[0].train, LossFn::cross_entropy()) <=
              empirical_loss(init, stream.tasks[0].train, LossFn::cross_entropy()));
    }
    SUBCASE("zero learning rate returns the model unchanged") {
        TrainConfig frozen = cfg;
        frozen.learning_rate = 0.0;
        DiscriminativeModel out = sgd_train(init, stream.tasks[0].train, frozen);
        CHECK(out.params == init.params);
    }
    SUBCASE("same seed twice gives bitwise-identical parameters") {
        DiscriminativeModel a = sgd_train(init, stream.tasks[0].train, cfg);
        DiscriminativeModel b = sgd_train(init, stream.tasks[0].train, cfg);
        CHECK(a.params == b.params);
    }
}

TEST_CASE("checkpoint round trip") {
    DiscriminativeModel m = perturbed_model(Arch::mlp, 4, 3, 5, 77);
    auto path = std::filesystem::temp_directory_path() /
                ("lossmat_ckpt_" + std::to_string(::getpid()) + ".bin");
    save_checkpoint(path.string(), m);
    DiscriminativeModel r = load_checkpoint(path.string());
    CHECK(r.arch == m.arch);
    CHECK(r.feature_dim == m.feature_dim);
    CHECK(r.num_classes == m.num_classes);
    CHECK(r.hidden == m.hidden);
    CHECK(r.params == m.params);  // bit-exact
    std::filesystem::remove(path);
}
