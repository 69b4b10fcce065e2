#ifndef LOSSMAT_DATA_HPP
#define LOSSMAT_DATA_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "lossmat/common.hpp"

namespace lossmat {

struct Sample {
    std::vector<double> features;
    int label = 0;
};

struct BlobSpec {
    std::vector<std::vector<double>> centers;  // one per class
    double scale = 1.0;                        // per-class standard deviation
    int samples_per_class_train = 0;
    int samples_per_class_test = 0;
    std::uint64_t seed = 0;
};

struct Task {
    int task_id = 0;
    std::vector<int> class_ids;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

struct TaskStream {
    std::vector<Task> tasks;
    int num_tasks = 0;        // T
    int classes_per_task = 0; // C
    int feature_dim = 0;      // d
    std::uint64_t seed = 0;
    // set for blob streams; lets replay consumers query the true density
    std::optional<BlobSpec> blob_spec;

    int num_classes() const { return num_tasks * classes_per_task; }
};

namespace detail {

inline Sample blob_sample(const BlobSpec& spec, int cls, int split, int idx) {
    const auto& center = spec.centers[cls];
    Sample s;
    s.label = cls;
    s.features.resize(center.size());
    for (std::size_t j = 0; j < center.size(); ++j) {
        std::uint64_t key = key_mix(spec.seed, static_cast<std::uint64_t>(cls),
                                    static_cast<std::uint64_t>(split),
                                    static_cast<std::uint64_t>(idx),
                                    static_cast<std::uint64_t>(j));
        s.features[j] = center[j] + spec.scale * counter_normal(key);
    }
    return s;
}

}  // namespace detail

// Classes are assigned to tasks in ascending contiguous order:
// task t holds classes [t*C, (t+1)*C).
inline TaskStream make_blob_stream(const BlobSpec& spec, int num_tasks, int classes_per_task) {
    check(num_tasks > 0 && classes_per_task > 0, "make_blob_stream: layout must be positive");
    const int n = num_tasks * classes_per_task;
    check(static_cast<int>(spec.centers.size()) == n,
          "make_blob_stream: center count must equal T*C");
    check(spec.scale > 0.0, "make_blob_stream: scale must be positive");
    check(spec.samples_per_class_train > 0 && spec.samples_per_class_test > 0,
          "make_blob_stream: sample counts must be positive");
    const std::size_t d = spec.centers[0].size();
    for (const auto& c : spec.centers)
        check(c.size() == d, "make_blob_stream: inconsistent center dimensions");

    TaskStream stream;
    stream.num_tasks = num_tasks;
    stream.classes_per_task = classes_per_task;
    stream.feature_dim = static_cast<int>(d);
    stream.seed = spec.seed;
    stream.blob_spec = spec;
    for (int t = 0; t < num_tasks; ++t) {
        Task task;
        task.task_id = t;
        for (int m = 0; m < classes_per_task; ++m) {
            int cls = t * classes_per_task + m;
            task.class_ids.push_back(cls);
            for (int i = 0; i < spec.samples_per_class_train; ++i)
                task.train.push_back(detail::blob_sample(spec, cls, 0, i));
            for (int i = 0; i < spec.samples_per_class_test; ++i)
                task.test.push_back(detail::blob_sample(spec, cls, 1, i));
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

// Test samples whose label is in class_ids, stream order preserved.
inline std::vector<Sample> class_conditional_subset(const TaskStream& stream,
                                                    const std::vector<int>& class_ids) {
    check(!class_ids.empty(), "class_conditional_subset: empty class set");
    std::set<int> wanted;
    for (int c : class_ids) {
        check(c >= 0 && c < stream.num_classes(), "class_conditional_subset: unknown class id");
        wanted.insert(c);
    }
    std::vector<Sample> out;
    for (const auto& task : stream.tasks)
        for (const auto& s : task.test)
            if (wanted.count(s.label)) out.push_back(s);
    return out;
}

inline std::vector<Sample> all_test_samples(const TaskStream& stream) {
    std::vector<Sample> out;
    for (const auto& task : stream.tasks)
        out.insert(out.end(), task.test.begin(), task.test.end());
    return out;
}

inline std::vector<Sample> all_train_samples(const TaskStream& stream) {
    std::vector<Sample> out;
    for (const auto& task : stream.tasks)
        out.insert(out.end(), task.train.begin(), task.train.end());
    return out;
}

// ring of `n` centers, a convenient synthetic layout
inline std::vector<std::vector<double>> ring_centers(int n, double radius, int dim) {
    check(n > 0 && dim >= 2, "ring_centers: need n > 0 and dim >= 2");
    std::vector<std::vector<double>> centers;
    for (int c = 0; c < n; ++c) {
        std::vector<double> center(dim, 0.0);
        double angle = 2.0 * M_PI * c / n;
        center[0] = radius * std::cos(angle);
        center[1] = radius * std::sin(angle);
        centers.push_back(std::move(center));
    }
    return centers;
}

// One private axis per class plus a component shared by every class on the
// last axis.  The shared direction makes classes from different tasks
// compete for the same logit mass (cross-task confusion) while each task's
// internal discriminative direction stays orthogonal to all the others.
inline std::vector<std::vector<double>> axis_centers(int n, double radius, int dim,
                                                     double shared) {
    check(n > 0 && dim >= n + 1, "axis_centers: need dim >= n + 1");
    std::vector<std::vector<double>> centers;
    for (int c = 0; c < n; ++c) {
        std::vector<double> center(dim, 0.0);
        center[c] = radius;
        center[dim - 1] = shared;
        centers.push_back(std::move(center));
    }
    return centers;
}

// Random unit directions scaled by `radius`, plus the same shared component
// on the last axis.  Unlike axis_centers the class directions overlap with
// random signs, so a detector trained for one class responds unpredictably
// to the others -- the way classes of natural data share features.
// `subspace` restricts the random directions to the first `subspace`
// coordinates (0 means all but the shared axis); a small subspace forces
// every task to reuse the same feature directions.  Directions are
// resampled until no pair is more aligned than |cos| = 0.7 so every class
// pair stays separable.
inline std::vector<std::vector<double>> random_centers(int n, double radius, int dim,
                                                       double shared, std::uint64_t seed,
                                                       int subspace = 0) {
    check(n > 0 && dim >= 3, "random_centers: need n > 0 and dim >= 3");
    if (subspace <= 0) subspace = dim - 1;
    check(subspace >= 2 && subspace <= dim - 1, "random_centers: subspace out of range");
    std::vector<std::vector<double>> centers;
    for (int c = 0; c < n; ++c) {
        std::vector<double> center(dim, 0.0);
        for (std::uint64_t attempt = 0;; ++attempt) {
            check(attempt < 1000, "random_centers: could not place a sufficiently "
                                  "separated direction");
            double norm = 0.0;
            for (int j = 0; j < subspace; ++j) {
                center[j] = counter_normal(key_mix(seed, 0xced7ULL, c, attempt, j));
                norm += center[j] * center[j];
            }
            norm = std::sqrt(norm);
            for (int j = 0; j < subspace; ++j) center[j] *= radius / norm;
            bool ok = true;
            for (const auto& prev : centers) {
                double dot = 0.0;
                for (int j = 0; j < subspace; ++j) dot += center[j] * prev[j];
                if (std::abs(dot) > 0.7 * radius * radius) { ok = false; break; }
            }
            if (ok) break;
        }
        center[dim - 1] = shared;
        centers.push_back(center);
    }
    return centers;
}

// Every task reuses the same C "archetype" contrast directions (dims
// 0..C-1), jittered per task, so within-task discrimination keeps being
// retrained and survives the whole stream.  Classes built on the same
// archetype differ only by a small per-class offset (dims C..C+offset_dims-1)
// that sequential training never learns to contrast across tasks, and the
// shared component on the last axis lets recently trained classes outscore
// older ones.  The layout is a fixed function of (t, m) so every repeat
// sees the same class geometry, the way a fixed benchmark dataset would.
inline std::vector<std::vector<double>> archetype_centers(int num_tasks, int classes_per_task,
                                                          int dim, double radius, double shared,
                                                          double jitter, double offset,
                                                          int offset_dims) {
    const int C = classes_per_task;
    check(num_tasks > 0 && C > 0, "archetype_centers: layout must be positive");
    check(offset_dims > 0, "archetype_centers: offset_dims must be positive");
    check(dim >= C + offset_dims + 1, "archetype_centers: need dim >= C + offset_dims + 1");
    std::vector<std::vector<double>> centers;
    for (int t = 0; t < num_tasks; ++t) {
        for (int m = 0; m < C; ++m) {
            std::vector<double> c(dim, 0.0);
            std::vector<double> u(C, 0.0);
            u[m] = 1.0;
            double un = 0.0;
            for (int j = 0; j < C; ++j) {
                u[j] += jitter * counter_normal(key_mix(55, t, m, j)) * 0.7071;
                un += u[j] * u[j];
            }
            un = std::sqrt(un);
            for (int j = 0; j < C; ++j) c[j] = radius * u[j] / un;
            double vn = 0.0;
            std::vector<double> v(offset_dims);
            for (int j = 0; j < offset_dims; ++j) {
                v[j] = counter_normal(key_mix(66, t, m, j));
                vn += v[j] * v[j];
            }
            vn = std::sqrt(vn);
            for (int j = 0; j < offset_dims; ++j) c[C + j] = offset * v[j] / vn;
            c[dim - 1] = shared;
            centers.push_back(std::move(c));
        }
    }
    return centers;
}

}  // namespace lossmat

#endif
