#ifndef LOSSMAT_ANALYSIS_HPP
#define LOSSMAT_ANALYSIS_HPP

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "lossmat/common.hpp"
#include "lossmat/data.hpp"
#include "lossmat/model.hpp"

namespace lossmat {

enum class MatrixMode { partition, restricted_pair };

// N x N pairwise loss matrix with an undefined diagonal, viewed as T x T
// blocks of C x C.  Entry (k,l) is owned by the true-label-k side of pair
// (k,l); both (k,l) and (l,k) are present.
struct LossMatrix {
    int num_tasks = 0;
    int classes_per_task = 0;
    MatrixMode mode = MatrixMode::partition;
    std::vector<double> entries;  // row-major N*N, NaN on the diagonal

    int n() const { return num_tasks * classes_per_task; }
    bool defined(int k, int l) const { return k != l; }
    double at(int k, int l) const { return entries[std::size_t(k) * n() + l]; }
    double& at(int k, int l) { return entries[std::size_t(k) * n() + l]; }
};

// partition mode:   rho_kl = (sum of the full N-way loss over class-k test
//                   samples) / ((N-1) * |test set|), so that the sum of all
//                   defined entries reproduces the full empirical loss.
// restricted_pair:  rho_kl = mean two-logit loss over class-k samples with
//                   logits restricted to {k,l}.
inline LossMatrix pairwise_matrix(const DiscriminativeModel& model, const TaskStream& stream,
                                  MatrixMode mode, const LossFn& loss = LossFn::cross_entropy()) {
    const int n = stream.num_classes();
    check(model.num_classes == n, "pairwise_matrix: model does not cover all classes");
    LossMatrix mat;
    mat.num_tasks = stream.num_tasks;
    mat.classes_per_task = stream.classes_per_task;
    mat.mode = mode;
    mat.entries.assign(std::size_t(n) * n, std::numeric_limits<double>::quiet_NaN());

    std::vector<std::vector<const Sample*>> by_class(n);
    std::size_t total = 0;
    for (const auto& task : stream.tasks)
        for (const auto& s : task.test) {
            by_class[s.label].push_back(&s);
            ++total;
        }
    for (int k = 0; k < n; ++k)
        check(!by_class[k].empty(), "pairwise_matrix: missing test data for class " + std::to_string(k));

    if (mode == MatrixMode::partition) {
        std::vector<double> class_sum(n, 0.0);
        for (int k = 0; k < n; ++k)
            for (const Sample* s : by_class[k])
                class_sum[k] += logit_loss_value(forward_logits(model, s->features), s->label, loss);
        const double denom = static_cast<double>(n - 1) * static_cast<double>(total);
        for (int k = 0; k < n; ++k)
            for (int l = 0; l < n; ++l)
                if (k != l) mat.at(k, l) = class_sum[k] / denom;
    } else {
        for (int k = 0; k < n; ++k) {
            // cache logits once per class-k sample
            std::vector<std::vector<double>> logits;
            logits.reserve(by_class[k].size());
            for (const Sample* s : by_class[k]) logits.push_back(forward_logits(model, s->features));
            for (int l = 0; l < n; ++l) {
                if (k == l) continue;
                double sum = 0.0;
                for (const auto& lg : logits) {
                    if (loss.kind == LossFn::Kind::zero_one) {
                        // two-way argmax between k and l, tie toward lower id
                        sum += (k < l ? lg[k] >= lg[l] : lg[k] > lg[l]) ? 0.0 : 1.0;
                    } else {
                        std::vector<double> sub = {lg[k], lg[l]};
                        sum += log_sum_exp(sub) - sub[0];
                    }
                }
                mat.at(k, l) = sum / static_cast<double>(logits.size());
            }
        }
    }
    return mat;
}

inline double matrix_total(const LossMatrix& m) {
    double s = 0.0;
    for (int k = 0; k < m.n(); ++k)
        for (int l = 0; l < m.n(); ++l)
            if (m.defined(k, l)) s += m.at(k, l);
    return s;
}

// T x T task-block sums |P_ij| plus diagonal/off-diagonal totals
struct BlockReport {
    int num_tasks = 0;
    int classes_per_task = 0;
    std::vector<double> block_sums;        // T*T, |P_ij|
    std::vector<double> block_sums_norm;   // per defined entry
    double diag_total = 0.0;
    double offdiag_total = 0.0;

    double block(int i, int j) const { return block_sums[std::size_t(i) * num_tasks + j]; }
};

inline BlockReport block_report(const LossMatrix& m) {
    BlockReport r;
    r.num_tasks = m.num_tasks;
    r.classes_per_task = m.classes_per_task;
    r.block_sums.assign(std::size_t(m.num_tasks) * m.num_tasks, 0.0);
    r.block_sums_norm.assign(r.block_sums.size(), 0.0);
    const int c = m.classes_per_task;
    for (int i = 0; i < m.num_tasks; ++i) {
        for (int j = 0; j < m.num_tasks; ++j) {
            double s = 0.0;
            int defined = 0;
            for (int mm = 0; mm < c; ++mm)
                for (int nn = 0; nn < c; ++nn) {
                    int k = i * c + mm, l = j * c + nn;
                    if (!m.defined(k, l)) continue;
                    s += m.at(k, l);
                    ++defined;
                }
            r.block_sums[std::size_t(i) * m.num_tasks + j] = s;
            r.block_sums_norm[std::size_t(i) * m.num_tasks + j] =
                defined > 0 ? s / defined : 0.0;
            if (i == j)
                r.diag_total += s;
            else
                r.offdiag_total += s;
        }
    }
    return r;
}

// off-diagonal block total; degenerate (T < 2) scores are 0
struct TCScore {
    double value = 0.0;
    bool degenerate = false;
};

inline TCScore tc_score(const BlockReport& r) {
    if (r.num_tasks < 2) return {0.0, true};
    return {r.offdiag_total, false};
}

// intra-task loss trajectory of task i across two consecutive snapshots
struct CFRecord {
    int task = 0;
    double loss_before = 0.0;  // |P_ii| at the model trained through task i
    double loss_after = 0.0;   // |P_ii| at the model trained through task i+1
    double delta = 0.0;        // positive delta flags CF
};

// diag_history[t] holds |P_ii| for i <= t, measured right after task t
inline std::vector<CFRecord> cf_records(const std::vector<std::vector<double>>& diag_history) {
    std::vector<CFRecord> out;
    for (std::size_t t = 0; t + 1 < diag_history.size(); ++t) {
        check(diag_history[t].size() >= t + 1 && diag_history[t + 1].size() >= t + 1,
              "cf_records: missing snapshot");
        CFRecord rec;
        rec.task = static_cast<int>(t);
        rec.loss_before = diag_history[t][t];
        rec.loss_after = diag_history[t + 1][t];
        rec.delta = rec.loss_after - rec.loss_before;
        out.push_back(rec);
    }
    return out;
}

// mean two-way argmax accuracy over class pairs; inter-task pairs span two
// distinct tasks, intra-task pairs live inside one task
inline double pair_accuracy(const DiscriminativeModel& model, const TaskStream& stream,
                            bool inter_task) {
    const int n = stream.num_classes();
    const int c = stream.classes_per_task;
    std::vector<std::vector<std::vector<double>>> logits_by_class(n);
    for (const auto& task : stream.tasks)
        for (const auto& s : task.test)
            logits_by_class[s.label].push_back(forward_logits(model, s.features));

    double acc_sum = 0.0;
    int pairs = 0;
    for (int k = 0; k < n; ++k) {
        for (int l = k + 1; l < n; ++l) {
            bool same_task = (k / c) == (l / c);
            if (inter_task == same_task) continue;
            std::size_t correct = 0, count = 0;
            for (const auto& lg : logits_by_class[k]) {
                correct += lg[k] >= lg[l] ? 1 : 0;
                ++count;
            }
            for (const auto& lg : logits_by_class[l]) {
                correct += lg[l] > lg[k] ? 1 : 0;
                ++count;
            }
            acc_sum += static_cast<double>(correct) / static_cast<double>(count);
            ++pairs;
        }
    }
    return pairs > 0 ? acc_sum / pairs : 0.0;
}

inline double inter_task_pair_accuracy(const DiscriminativeModel& model, const TaskStream& stream) {
    return pair_accuracy(model, stream, true);
}

inline double intra_task_pair_accuracy(const DiscriminativeModel& model, const TaskStream& stream) {
    return pair_accuracy(model, stream, false);
}

// ---- incompatibility of 1-D quadratics ---------------------------------

// f(x) = curvature/2 * (x - a)^2
struct Quadratic1D {
    double a = 0.0;
    double curvature = 1.0;
};

struct IncompatibilityResult {
    double x_f = 0.0;
    double x_g = 0.0;
    double x_star = 0.0;
    bool is_incompatible = false;    // distinct minimizers
    bool minimizer_distinct = false; // x_star differs from both
};

inline IncompatibilityResult incompatibility_check(const Quadratic1D& f, const Quadratic1D& g) {
    check(f.curvature > 0.0 && g.curvature > 0.0, "incompatibility_check: nonpositive curvature");
    IncompatibilityResult r;
    r.x_f = f.a;
    r.x_g = g.a;
    // curvature-weighted mean minimizes the sum; the equal case is kept
    // exact so rounding cannot fabricate a distinct joint minimizer
    r.x_star = f.a == g.a
                   ? f.a
                   : (f.curvature * f.a + g.curvature * g.a) / (f.curvature + g.curvature);
    r.is_incompatible = r.x_f != r.x_g;
    r.minimizer_distinct = r.x_star != r.x_f && r.x_star != r.x_g;
    return r;
}

// ---- serialization -----------------------------------------------------

inline std::string matrix_to_json(const LossMatrix& m) {
    std::ostringstream out;
    out << "{\"num_tasks\":" << m.num_tasks << ",\"classes_per_task\":" << m.classes_per_task
        << ",\"mode\":\"" << (m.mode == MatrixMode::partition ? "partition" : "restricted_pair")
        << "\",\"entries\":[";
    for (int k = 0; k < m.n(); ++k) {
        if (k) out << ",";
        out << "[";
        for (int l = 0; l < m.n(); ++l) {
            if (l) out << ",";
            if (m.defined(k, l))
                out << fmt_g10(m.at(k, l));
            else
                out << "null";
        }
        out << "]";
    }
    out << "]}";
    return out.str();
}

// heatmap triplets: k,l,value for every defined entry
inline std::string matrix_to_csv(const LossMatrix& m) {
    std::ostringstream out;
    out << "k,l,value\n";
    for (int k = 0; k < m.n(); ++k)
        for (int l = 0; l < m.n(); ++l)
            if (m.defined(k, l)) out << k << "," << l << "," << fmt_g10(m.at(k, l)) << "\n";
    return out.str();
}

inline std::string report_to_json(const BlockReport& r) {
    std::ostringstream out;
    out << "{\"num_tasks\":" << r.num_tasks << ",\"diag_total\":" << fmt_g10(r.diag_total)
        << ",\"offdiag_total\":" << fmt_g10(r.offdiag_total) << ",\"block_sums\":[";
    for (std::size_t i = 0; i < r.block_sums.size(); ++i) {
        if (i) out << ",";
        out << fmt_g10(r.block_sums[i]);
    }
    out << "],\"block_sums_normalized\":[";
    for (std::size_t i = 0; i < r.block_sums_norm.size(); ++i) {
        if (i) out << ",";
        out << fmt_g10(r.block_sums_norm[i]);
    }
    out << "]}";
    return out.str();
}

}  // namespace lossmat

#endif
