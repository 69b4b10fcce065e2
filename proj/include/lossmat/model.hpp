#ifndef LOSSMAT_MODEL_HPP
#define LOSSMAT_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <vector>

#include "lossmat/common.hpp"
#include "lossmat/data.hpp"

namespace lossmat {

enum class Arch { linear, mlp };

// Linear softmax or one-hidden-layer rectifier network over flat parameters.
//
// Parameter layout, row-major:
//   linear: W (n x d), b (n)
//   mlp:    W1 (h x d), b1 (h), W2 (n x h), b2 (n)
struct DiscriminativeModel {
    Arch arch = Arch::linear;
    int feature_dim = 0;   // d
    int num_classes = 0;   // n
    int hidden = 0;        // h, 0 for linear
    std::uint64_t init_seed = 0;
    std::vector<double> params;

    int param_count() const {
        if (arch == Arch::linear) return num_classes * feature_dim + num_classes;
        return hidden * feature_dim + hidden + num_classes * hidden + num_classes;
    }
};

inline DiscriminativeModel make_model(Arch arch, int feature_dim, int num_classes, int hidden,
                                      std::uint64_t seed) {
    check(feature_dim > 0 && num_classes > 0, "make_model: bad dimensions");
    check(arch == Arch::linear || hidden > 0, "make_model: mlp needs hidden > 0");
    DiscriminativeModel m;
    m.arch = arch;
    m.feature_dim = feature_dim;
    m.num_classes = num_classes;
    m.hidden = arch == Arch::linear ? 0 : hidden;
    m.init_seed = seed;
    m.params.assign(m.param_count(), 0.0);

    std::mt19937_64 rng(seed);
    auto init_layer = [&](int offset, int rows, int cols) {
        double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (int i = 0; i < rows * cols; ++i) m.params[offset + i] = dist(rng);
        // biases (the following `rows` entries) stay zero
    };
    if (arch == Arch::linear) {
        init_layer(0, num_classes, feature_dim);
    } else {
        init_layer(0, hidden, feature_dim);
        init_layer(hidden * feature_dim + hidden, num_classes, hidden);
    }
    return m;
}

inline std::vector<double> forward_logits(const DiscriminativeModel& m,
                                          const std::vector<double>& x) {
    check(static_cast<int>(x.size()) == m.feature_dim, "forward_logits: dimension mismatch");
    const int d = m.feature_dim, n = m.num_classes, h = m.hidden;
    const double* p = m.params.data();
    if (m.arch == Arch::linear) {
        std::vector<double> logits(n);
        const double* b = p + n * d;
        for (int k = 0; k < n; ++k) {
            double s = b[k];
            const double* row = p + k * d;
            for (int j = 0; j < d; ++j) s += row[j] * x[j];
            logits[k] = s;
        }
        return logits;
    }
    const double* w1 = p;
    const double* b1 = p + h * d;
    const double* w2 = b1 + h;
    const double* b2 = w2 + n * h;
    std::vector<double> act(h);
    for (int i = 0; i < h; ++i) {
        double s = b1[i];
        const double* row = w1 + i * d;
        for (int j = 0; j < d; ++j) s += row[j] * x[j];
        act[i] = s > 0.0 ? s : 0.0;
    }
    std::vector<double> logits(n);
    for (int k = 0; k < n; ++k) {
        double s = b2[k];
        const double* row = w2 + k * h;
        for (int i = 0; i < h; ++i) s += row[i] * act[i];
        logits[k] = s;
    }
    return logits;
}

// max-shifted softmax, in place
inline void softmax_inplace(std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        z += x;
    }
    for (double& x : v) x /= z;
}

// log sum exp with max shift
inline double log_sum_exp(const std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double z = 0.0;
    for (double x : v) z += std::exp(x - mx);
    return mx + std::log(z);
}

// argmax with ties broken toward the lowest index
inline int argmax_lowest(const std::vector<double>& v) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

struct LossFn {
    enum class Kind { cross_entropy, zero_one, restricted_pair };
    Kind kind = Kind::cross_entropy;
    int pair_k = -1;  // restricted_pair only
    int pair_l = -1;

    static LossFn cross_entropy() { return {Kind::cross_entropy, -1, -1}; }
    static LossFn zero_one() { return {Kind::zero_one, -1, -1}; }
    static LossFn restricted_pair(int k, int l) { return {Kind::restricted_pair, k, l}; }
};

inline double logit_loss_value(const std::vector<double>& logits, int label, const LossFn& loss) {
    switch (loss.kind) {
        case LossFn::Kind::cross_entropy:
            return log_sum_exp(logits) - logits[label];
        case LossFn::Kind::zero_one:
            return argmax_lowest(logits) == label ? 0.0 : 1.0;
        case LossFn::Kind::restricted_pair: {
            check(label == loss.pair_k || label == loss.pair_l,
                  "restricted_pair loss: label outside pair");
            std::vector<double> sub = {logits[loss.pair_k], logits[loss.pair_l]};
            int y = label == loss.pair_k ? 0 : 1;
            return log_sum_exp(sub) - sub[y];
        }
    }
    return 0.0;
}

inline double empirical_loss(const DiscriminativeModel& m, const std::vector<Sample>& samples,
                             const LossFn& loss) {
    check(!samples.empty(), "empirical_loss: empty sample list");
    double total = 0.0;
    for (const auto& s : samples) total += logit_loss_value(forward_logits(m, s.features), s.label, loss);
    return total / static_cast<double>(samples.size());
}

// ---- gradients ---------------------------------------------------------

// Per-sample loss defined on the logit vector.  Returns the loss value and
// fills dlogits (same length as logits).  Strategies plug in their own
// variants (restricted subsets, distillation targets).
using LogitLoss =
    std::function<double(const std::vector<double>& logits, const Sample& s, std::vector<double>& dlogits)>;

inline LogitLoss cross_entropy_logit_loss() {
    return [](const std::vector<double>& logits, const Sample& s, std::vector<double>& dlogits) {
        dlogits = logits;
        softmax_inplace(dlogits);
        double value = log_sum_exp(logits) - logits[s.label];
        dlogits[s.label] -= 1.0;
        return value;
    };
}

namespace detail {

// accumulate d(loss)/d(params) for one sample given dlogits, scaled by `w`
inline void backprop_sample(const DiscriminativeModel& m, const std::vector<double>& x,
                            const std::vector<double>& dlogits, double w, std::vector<double>& grad) {
    const int d = m.feature_dim, n = m.num_classes, h = m.hidden;
    const double* p = m.params.data();
    if (m.arch == Arch::linear) {
        double* gw = grad.data();
        double* gb = grad.data() + n * d;
        for (int k = 0; k < n; ++k) {
            double g = w * dlogits[k];
            if (g == 0.0) continue;
            double* row = gw + k * d;
            for (int j = 0; j < d; ++j) row[j] += g * x[j];
            gb[k] += g;
        }
        return;
    }
    const double* w1 = p;
    const double* b1 = p + h * d;
    const double* w2 = b1 + h;
    std::vector<double> act(h);
    for (int i = 0; i < h; ++i) {
        double s = b1[i];
        const double* row = w1 + i * d;
        for (int j = 0; j < d; ++j) s += row[j] * x[j];
        act[i] = s > 0.0 ? s : 0.0;
    }
    double* gw1 = grad.data();
    double* gb1 = grad.data() + h * d;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + n * h;
    std::vector<double> dact(h, 0.0);
    for (int k = 0; k < n; ++k) {
        double g = w * dlogits[k];
        if (g == 0.0) continue;
        double* row = gw2 + k * h;
        for (int i = 0; i < h; ++i) {
            row[i] += g * act[i];
            dact[i] += g * w2[k * h + i];
        }
        gb2[k] += g;
    }
    for (int i = 0; i < h; ++i) {
        if (act[i] <= 0.0) continue;  // rectifier gate
        double g = dact[i];
        double* row = gw1 + i * d;
        for (int j = 0; j < d; ++j) row[j] += g * x[j];
        gb1[i] += g;
    }
}

}  // namespace detail

// Mean loss over the batch plus its gradient with the model's shape.
inline double batch_loss_grad(const DiscriminativeModel& m, const std::vector<Sample>& batch,
                              const LogitLoss& loss, std::vector<double>& grad) {
    check(!batch.empty(), "batch_loss_grad: empty batch");
    grad.assign(m.params.size(), 0.0);
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    std::vector<double> dlogits;
    for (const auto& s : batch) {
        std::vector<double> logits = forward_logits(m, s.features);
        total += loss(logits, s, dlogits);
        detail::backprop_sample(m, s.features, dlogits, w, grad);
    }
    return total * w;
}

inline std::vector<double> loss_gradient(const DiscriminativeModel& m,
                                         const std::vector<Sample>& batch) {
    std::vector<double> grad;
    batch_loss_grad(m, batch, cross_entropy_logit_loss(), grad);
    return grad;
}

// ---- training ----------------------------------------------------------

struct TrainConfig {
    double learning_rate = 0.1;
    int iterations = 500;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

// Adds a regularizer: accumulates its gradient into `grad` and returns the
// penalty value.
using PenaltyHook = std::function<double(const std::vector<double>& params, std::vector<double>& grad)>;

struct StepInfo {
    const std::vector<double>& params_before;
    const std::vector<double>& grad;
    const std::vector<double>& params_after;
    double learning_rate;
};
using StepObserver = std::function<void(const StepInfo&)>;

// One minibatch per call, indexed by iteration.
using BatchSource = std::function<std::vector<Sample>(int iteration)>;

inline DiscriminativeModel sgd_train_stream(DiscriminativeModel model, const TrainConfig& cfg,
                                            const BatchSource& batches, const LogitLoss& loss,
                                            const PenaltyHook& penalty = nullptr,
                                            const StepObserver& observer = nullptr) {
    check(cfg.learning_rate >= 0.0, "sgd_train: negative learning rate");
    check(cfg.iterations > 0 && cfg.batch_size > 0, "sgd_train: bad iteration/batch config");
    std::vector<double> grad;
    std::vector<double> before;
    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<Sample> batch = batches(it);
        batch_loss_grad(model, batch, loss, grad);
        if (penalty) penalty(model.params, grad);
        if (observer) before = model.params;
        for (std::size_t j = 0; j < model.params.size(); ++j)
            model.params[j] -= cfg.learning_rate * grad[j];
        for (double v : model.params)
            check(std::isfinite(v), "sgd_train: NaN/Inf parameter at iteration " + std::to_string(it));
        if (observer) observer({before, grad, model.params, cfg.learning_rate});
    }
    return model;
}

// reshuffled-epoch minibatch source over a fixed sample list
inline BatchSource shuffled_batches(const std::vector<Sample>& samples, int batch_size,
                                    std::uint64_t seed) {
    auto order = std::make_shared<std::vector<int>>(samples.size());
    std::iota(order->begin(), order->end(), 0);
    auto rng = std::make_shared<std::mt19937_64>(seed);
    auto cursor = std::make_shared<std::size_t>(samples.size());  // force shuffle on first call
    const std::vector<Sample>* data = &samples;
    return [=](int) {
        std::vector<Sample> batch;
        int want = std::min<int>(batch_size, static_cast<int>(data->size()));
        for (int i = 0; i < want; ++i) {
            if (*cursor >= order->size()) {
                std::shuffle(order->begin(), order->end(), *rng);
                *cursor = 0;
            }
            batch.push_back((*data)[(*order)[(*cursor)++]]);
        }
        return batch;
    };
}

inline DiscriminativeModel sgd_train(const DiscriminativeModel& model,
                                     const std::vector<Sample>& samples, const TrainConfig& cfg,
                                     const PenaltyHook& penalty = nullptr,
                                     const LogitLoss& loss = cross_entropy_logit_loss(),
                                     const StepObserver& observer = nullptr) {
    check(!samples.empty(), "sgd_train: empty sample list");
    return sgd_train_stream(model, cfg, shuffled_batches(samples, cfg.batch_size, cfg.seed), loss,
                            penalty, observer);
}

// ---- checkpoints -------------------------------------------------------
//
// One JSON header line, then the parameters as raw little-endian doubles.

inline void save_checkpoint(const std::string& path, const DiscriminativeModel& m) {
    std::ofstream out(path, std::ios::binary);
    check(static_cast<bool>(out), "checkpoint: cannot write " + path);
    out << "{\"arch\":\"" << (m.arch == Arch::linear ? "linear" : "mlp")
        << "\",\"feature_dim\":" << m.feature_dim << ",\"num_classes\":" << m.num_classes
        << ",\"hidden\":" << m.hidden << ",\"seed\":" << m.init_seed
        << ",\"count\":" << m.params.size() << "}\n";
    out.write(reinterpret_cast<const char*>(m.params.data()),
              static_cast<std::streamsize>(m.params.size() * sizeof(double)));
}

inline DiscriminativeModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(static_cast<bool>(in), "checkpoint: cannot open " + path);
    std::string header;
    std::getline(in, header);
    auto field = [&](const std::string& key) -> std::string {
        auto pos = header.find("\"" + key + "\":");
        check(pos != std::string::npos, "checkpoint: missing field " + key);
        pos += key.size() + 3;
        if (header[pos] == '"') {
            auto end = header.find('"', pos + 1);
            return header.substr(pos + 1, end - pos - 1);
        }
        auto end = header.find_first_of(",}", pos);
        return header.substr(pos, end - pos);
    };
    DiscriminativeModel m;
    m.arch = field("arch") == "linear" ? Arch::linear : Arch::mlp;
    m.feature_dim = std::stoi(field("feature_dim"));
    m.num_classes = std::stoi(field("num_classes"));
    m.hidden = std::stoi(field("hidden"));
    m.init_seed = std::stoull(field("seed"));
    std::size_t count = std::stoull(field("count"));
    m.params.resize(count);
    in.read(reinterpret_cast<char*>(m.params.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    check(in.gcount() == static_cast<std::streamsize>(count * sizeof(double)),
          "checkpoint: truncated payload");
    check(static_cast<int>(count) == m.param_count(), "checkpoint: parameter count mismatch");
    return m;
}

}  // namespace lossmat

#endif
