#ifndef LOSSMAT_GENERATIVE_HPP
#define LOSSMAT_GENERATIVE_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "lossmat/common.hpp"
#include "lossmat/data.hpp"

namespace lossmat {

enum class CovMode { diagonal_per_class, shared_full };

// Per-class Gaussian density models.  Fitting one class never touches the
// sufficient statistics of any other class; priors are derived from the
// per-class counts on demand.
struct GaussianClassModel {
    int feature_dim = 0;
    int num_classes = 0;
    CovMode mode = CovMode::diagonal_per_class;
    double var_floor = 1e-6;
    double shrinkage = 1e-2;

    std::vector<std::vector<double>> means;     // per class
    std::vector<std::vector<double>> vars;      // per class, diagonal mode
    std::vector<std::vector<double>> scatters;  // per class, d*d, shared mode
    std::vector<double> counts;
    std::vector<char> fitted;

    // shared-covariance cache, rebuilt when any class changes
    mutable Cholesky shared_chol;
    mutable std::uint64_t shared_version = 0;
    std::uint64_t version = 1;
};

inline GaussianClassModel make_gaussian_model(int feature_dim, int num_classes,
                                              CovMode mode = CovMode::diagonal_per_class) {
    check(feature_dim > 0 && num_classes > 0, "make_gaussian_model: bad dimensions");
    GaussianClassModel m;
    m.feature_dim = feature_dim;
    m.num_classes = num_classes;
    m.mode = mode;
    m.means.assign(num_classes, {});
    m.vars.assign(num_classes, {});
    m.scatters.assign(num_classes, {});
    m.counts.assign(num_classes, 0.0);
    m.fitted.assign(num_classes, 0);
    return m;
}

inline void fit_class(GaussianClassModel& m, const std::vector<Sample>& samples, int cls) {
    check(cls >= 0 && cls < m.num_classes, "fit_class: class out of range");
    check(samples.size() >= 2, "fit_class: need at least 2 samples");
    for (const auto& s : samples) {
        check(s.label == cls, "fit_class: label mismatch");
        check(static_cast<int>(s.features.size()) == m.feature_dim, "fit_class: dimension mismatch");
    }
    const int d = m.feature_dim;
    const double n = static_cast<double>(samples.size());
    std::vector<double> mean(d, 0.0);
    for (const auto& s : samples)
        for (int j = 0; j < d; ++j) mean[j] += s.features[j];
    for (int j = 0; j < d; ++j) mean[j] /= n;

    if (m.mode == CovMode::diagonal_per_class) {
        std::vector<double> var(d, 0.0);
        for (const auto& s : samples)
            for (int j = 0; j < d; ++j) {
                double delta = s.features[j] - mean[j];
                var[j] += delta * delta;
            }
        for (int j = 0; j < d; ++j) var[j] = std::max(var[j] / n, m.var_floor);
        m.vars[cls] = std::move(var);
    } else {
        std::vector<double> scatter(std::size_t(d) * d, 0.0);
        std::vector<double> delta(d);
        for (const auto& s : samples) {
            for (int j = 0; j < d; ++j) delta[j] = s.features[j] - mean[j];
            for (int i = 0; i < d; ++i)
                for (int j = 0; j < d; ++j) scatter[std::size_t(i) * d + j] += delta[i] * delta[j];
        }
        m.scatters[cls] = std::move(scatter);
    }
    m.means[cls] = std::move(mean);
    m.counts[cls] = n;
    m.fitted[cls] = 1;
    ++m.version;
}

inline double class_prior(const GaussianClassModel& m, int cls) {
    double total = 0.0;
    for (int r = 0; r < m.num_classes; ++r)
        if (m.fitted[r]) total += m.counts[r];
    return m.counts[cls] / total;
}

namespace detail {

// pooled within-class covariance with shrinkage toward a scaled identity
inline const Cholesky& shared_cov_chol(const GaussianClassModel& m) {
    if (m.shared_version != m.version) {
        const int d = m.feature_dim;
        std::vector<double> cov(std::size_t(d) * d, 0.0);
        double total = 0.0;
        for (int r = 0; r < m.num_classes; ++r) {
            if (!m.fitted[r]) continue;
            for (std::size_t i = 0; i < cov.size(); ++i) cov[i] += m.scatters[r][i];
            total += m.counts[r];
        }
        check(total > 0.0, "shared covariance: no fitted classes");
        for (double& v : cov) v /= total;
        double mean_var = 0.0;
        for (int j = 0; j < d; ++j) mean_var += cov[std::size_t(j) * d + j];
        mean_var = std::max(mean_var / d, m.var_floor);
        for (std::size_t i = 0; i < cov.size(); ++i) cov[i] *= (1.0 - m.shrinkage);
        for (int j = 0; j < d; ++j) cov[std::size_t(j) * d + j] += m.shrinkage * mean_var;
        m.shared_chol = Cholesky(cov, d);
        m.shared_version = m.version;
    }
    return m.shared_chol;
}

}  // namespace detail

// negative log density -log p(x | cls)
inline double class_nll(const GaussianClassModel& m, const std::vector<double>& x, int cls) {
    check(cls >= 0 && cls < m.num_classes && m.fitted[cls], "class_nll: class not fitted");
    check(static_cast<int>(x.size()) == m.feature_dim, "class_nll: dimension mismatch");
    const int d = m.feature_dim;
    const auto& mean = m.means[cls];
    if (m.mode == CovMode::diagonal_per_class) {
        const auto& var = m.vars[cls];
        double nll = 0.0;
        for (int j = 0; j < d; ++j) {
            double delta = x[j] - mean[j];
            nll += 0.5 * (std::log(2.0 * M_PI * var[j]) + delta * delta / var[j]);
        }
        return nll;
    }
    const Cholesky& chol = detail::shared_cov_chol(m);
    std::vector<double> delta(d);
    for (int j = 0; j < d; ++j) delta[j] = x[j] - mean[j];
    std::vector<double> solved = chol.solve(delta);
    double maha = 0.0;
    for (int j = 0; j < d; ++j) maha += delta[j] * solved[j];
    return 0.5 * (d * std::log(2.0 * M_PI) + chol.log_det() + maha);
}

// argmax_r [log p(x|r) + log pi_r], ties toward the lowest class index
inline int bayes_classify(const GaussianClassModel& m, const std::vector<double>& x) {
    int best = -1;
    double best_score = 0.0;
    for (int r = 0; r < m.num_classes; ++r) {
        if (!m.fitted[r]) continue;
        double score = -class_nll(m, x, r) + std::log(class_prior(m, r));
        if (best < 0 || score > best_score) {
            best = r;
            best_score = score;
        }
    }
    check(best >= 0, "bayes_classify: no classes fitted");
    return best;
}

// classify among a restricted class subset (task-IL evaluation)
inline int bayes_classify_restricted(const GaussianClassModel& m, const std::vector<double>& x,
                                     const std::vector<int>& class_ids) {
    int best = -1;
    double best_score = 0.0;
    for (int r : class_ids) {
        check(m.fitted[r], "bayes_classify_restricted: class not fitted");
        double score = -class_nll(m, x, r) + std::log(class_prior(m, r));
        if (best < 0 || score > best_score) {
            best = r;
            best_score = score;
        }
    }
    check(best >= 0, "bayes_classify_restricted: empty class set");
    return best;
}

// i.i.d. draws from the fitted density, deterministic under seed
inline std::vector<Sample> sample_replay(const GaussianClassModel& m, int cls, int n,
                                         std::uint64_t seed) {
    check(cls >= 0 && cls < m.num_classes && m.fitted[cls], "sample_replay: class not fitted");
    check(n >= 1, "sample_replay: n must be >= 1");
    const int d = m.feature_dim;
    std::vector<Sample> out(n);
    for (int i = 0; i < n; ++i) {
        out[i].label = cls;
        out[i].features.resize(d);
        if (m.mode == CovMode::diagonal_per_class) {
            for (int j = 0; j < d; ++j) {
                std::uint64_t key = key_mix(seed, static_cast<std::uint64_t>(cls),
                                            static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
                out[i].features[j] = m.means[cls][j] + std::sqrt(m.vars[cls][j]) * counter_normal(key);
            }
        } else {
            std::vector<double> z(d);
            for (int j = 0; j < d; ++j)
                z[j] = counter_normal(key_mix(seed, static_cast<std::uint64_t>(cls),
                                              static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)));
            std::vector<double> corr = detail::shared_cov_chol(m).apply_factor(z);
            for (int j = 0; j < d; ++j) out[i].features[j] = m.means[cls][j] + corr[j];
        }
    }
    return out;
}

// ---- streaming LDA -----------------------------------------------------

// Running per-class means with a shared, incrementally updated covariance
// (Welford per class, pooled scatter).
struct SLDAState {
    int feature_dim = 0;
    int num_classes = 0;
    double shrinkage = 1e-2;
    double var_floor = 1e-6;
    std::vector<std::vector<double>> means;
    std::vector<double> counts;
    std::vector<double> scatter;  // d*d pooled within-class scatter
    double total = 0.0;

    mutable Cholesky chol;
    mutable bool chol_valid = false;
};

inline SLDAState make_slda(int feature_dim, int num_classes, double shrinkage = 1e-2) {
    check(feature_dim > 0 && num_classes > 0, "make_slda: bad dimensions");
    SLDAState s;
    s.feature_dim = feature_dim;
    s.num_classes = num_classes;
    s.shrinkage = shrinkage;
    s.means.assign(num_classes, std::vector<double>(feature_dim, 0.0));
    s.counts.assign(num_classes, 0.0);
    s.scatter.assign(std::size_t(feature_dim) * feature_dim, 0.0);
    return s;
}

inline void slda_update(SLDAState& s, const std::vector<double>& x, int y) {
    check(static_cast<int>(x.size()) == s.feature_dim, "slda_update: dimension mismatch");
    check(y >= 0 && y < s.num_classes, "slda_update: label out of range");
    const int d = s.feature_dim;
    auto& mean = s.means[y];
    s.counts[y] += 1.0;
    s.total += 1.0;
    std::vector<double> delta(d), delta2(d);
    for (int j = 0; j < d; ++j) delta[j] = x[j] - mean[j];
    for (int j = 0; j < d; ++j) mean[j] += delta[j] / s.counts[y];
    for (int j = 0; j < d; ++j) delta2[j] = x[j] - mean[j];
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) s.scatter[std::size_t(i) * d + j] += delta[i] * delta2[j];
    s.chol_valid = false;
}

namespace detail {

inline const Cholesky& slda_chol(const SLDAState& s) {
    if (!s.chol_valid) {
        const int d = s.feature_dim;
        check(s.total > 0.0, "slda_classify: no samples seen");
        std::vector<double> cov(s.scatter);
        for (double& v : cov) v /= s.total;
        double mean_var = 0.0;
        for (int j = 0; j < d; ++j) mean_var += cov[std::size_t(j) * d + j];
        mean_var = std::max(mean_var / d, s.var_floor);
        for (double& v : cov) v *= (1.0 - s.shrinkage);
        for (int j = 0; j < d; ++j) cov[std::size_t(j) * d + j] += s.shrinkage * mean_var;
        s.chol = Cholesky(cov, d);
        s.chol_valid = true;
    }
    return s.chol;
}

}  // namespace detail

inline double slda_score(const SLDAState& s, const std::vector<double>& x, int r) {
    const Cholesky& chol = detail::slda_chol(s);
    std::vector<double> w = chol.solve(s.means[r]);
    double wx = 0.0, wm = 0.0;
    for (int j = 0; j < s.feature_dim; ++j) {
        wx += w[j] * x[j];
        wm += w[j] * s.means[r][j];
    }
    return wx - 0.5 * wm + std::log(s.counts[r] / s.total);
}

inline int slda_classify(const SLDAState& s, const std::vector<double>& x) {
    check(static_cast<int>(x.size()) == s.feature_dim, "slda_classify: dimension mismatch");
    int best = -1;
    double best_score = 0.0;
    for (int r = 0; r < s.num_classes; ++r) {
        if (s.counts[r] <= 0.0) continue;
        double score = slda_score(s, x, r);
        if (best < 0 || score > best_score) {
            best = r;
            best_score = score;
        }
    }
    check(best >= 0, "slda_classify: no classes seen");
    return best;
}

// ---- generative loss matrix --------------------------------------------

// Only the diagonal carries defined entries: q[m] is the mean class-m NLL
// over the class-m test samples.  Every off-diagonal entry is undefined by
// construction.
struct QMatrix {
    int num_tasks = 0;
    int classes_per_task = 0;
    std::vector<double> diag;  // length T*C

    int num_classes() const { return num_tasks * classes_per_task; }
    // |Q_ii|: sum of the defined entries of task i's diagonal block
    double task_block_sum(int task) const {
        double s = 0.0;
        for (int m = 0; m < classes_per_task; ++m) s += diag[task * classes_per_task + m];
        return s;
    }
};

inline QMatrix q_matrix(const GaussianClassModel& m, const TaskStream& stream) {
    QMatrix q;
    q.num_tasks = stream.num_tasks;
    q.classes_per_task = stream.classes_per_task;
    q.diag.assign(stream.num_classes(), 0.0);
    std::vector<double> counts(stream.num_classes(), 0.0);
    for (const auto& task : stream.tasks) {
        for (int cls : task.class_ids)
            check(m.fitted[cls], "q_matrix: class " + std::to_string(cls) + " not fitted");
        for (const auto& s : task.test) {
            q.diag[s.label] += class_nll(m, s.features, s.label);
            counts[s.label] += 1.0;
        }
    }
    for (int cls = 0; cls < stream.num_classes(); ++cls) {
        check(counts[cls] > 0.0, "q_matrix: no test samples for class " + std::to_string(cls));
        q.diag[cls] /= counts[cls];
    }
    return q;
}

// Q over only the first `tasks_seen` tasks (sequential snapshots)
inline QMatrix q_matrix_prefix(const GaussianClassModel& m, const TaskStream& stream,
                               int tasks_seen) {
    check(tasks_seen >= 1 && tasks_seen <= stream.num_tasks, "q_matrix_prefix: bad task count");
    TaskStream prefix = stream;
    prefix.tasks.resize(tasks_seen);
    prefix.num_tasks = tasks_seen;
    QMatrix q = q_matrix(m, prefix);
    q.num_tasks = tasks_seen;
    return q;
}

inline int slda_classify_restricted(const SLDAState& s, const std::vector<double>& x,
                                    const std::vector<int>& class_ids) {
    int best = -1;
    double best_score = 0.0;
    for (int r : class_ids) {
        if (s.counts[r] <= 0.0) continue;
        double score = slda_score(s, x, r);
        if (best < 0 || score > best_score) {
            best = r;
            best_score = score;
        }
    }
    check(best >= 0, "slda_classify_restricted: no seen classes in set");
    return best;
}

// ---- checkpoints -------------------------------------------------------
//
// Same envelope as discriminative checkpoints: one JSON header line, then a
// flat little-endian double payload.  Payload order per fitted class:
// count, mean (d), then vars (d) in diagonal mode or scatter (d*d) in
// shared mode.  Unfitted classes are skipped; the header lists fitted ids.

inline void save_gaussian_checkpoint(const std::string& path, const GaussianClassModel& m) {
    std::ofstream out(path, std::ios::binary);
    check(static_cast<bool>(out), "checkpoint: cannot write " + path);
    out << "{\"kind\":\"gaussian\",\"feature_dim\":" << m.feature_dim
        << ",\"num_classes\":" << m.num_classes << ",\"mode\":\""
        << (m.mode == CovMode::diagonal_per_class ? "diagonal" : "shared") << "\",\"fitted\":[";
    bool first = true;
    for (int r = 0; r < m.num_classes; ++r)
        if (m.fitted[r]) {
            if (!first) out << ",";
            out << r;
            first = false;
        }
    out << "]}\n";
    auto dump = [&](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    for (int r = 0; r < m.num_classes; ++r) {
        if (!m.fitted[r]) continue;
        dump({m.counts[r]});
        dump(m.means[r]);
        if (m.mode == CovMode::diagonal_per_class)
            dump(m.vars[r]);
        else
            dump(m.scatters[r]);
    }
}

inline GaussianClassModel load_gaussian_checkpoint(const std::string& path) {
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
        if (header[pos] == '[') {
            auto end = header.find(']', pos);
            return header.substr(pos + 1, end - pos - 1);
        }
        auto end = header.find_first_of(",}", pos);
        return header.substr(pos, end - pos);
    };
    check(field("kind") == "gaussian", "checkpoint: not a gaussian model");
    int d = std::stoi(field("feature_dim"));
    int n = std::stoi(field("num_classes"));
    CovMode mode = field("mode") == "diagonal" ? CovMode::diagonal_per_class : CovMode::shared_full;
    GaussianClassModel m = make_gaussian_model(d, n, mode);
    std::string fitted_list = field("fitted");
    std::vector<int> fitted_ids;
    std::size_t pos = 0;
    while (pos < fitted_list.size()) {
        auto comma = fitted_list.find(',', pos);
        if (comma == std::string::npos) comma = fitted_list.size();
        if (comma > pos) fitted_ids.push_back(std::stoi(fitted_list.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    auto slurp = [&](std::vector<double>& v, std::size_t count) {
        v.resize(count);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        check(in.gcount() == static_cast<std::streamsize>(count * sizeof(double)),
              "checkpoint: truncated payload");
    };
    for (int r : fitted_ids) {
        std::vector<double> one;
        slurp(one, 1);
        m.counts[r] = one[0];
        slurp(m.means[r], d);
        if (mode == CovMode::diagonal_per_class)
            slurp(m.vars[r], d);
        else
            slurp(m.scatters[r], std::size_t(d) * d);
        m.fitted[r] = 1;
        ++m.version;
    }
    return m;
}

}  // namespace lossmat

#endif
