#ifndef LOSSMAT_IDX_HPP
#define LOSSMAT_IDX_HPP

// IDX binary format: 4-byte big-endian magic (0x00000801 label vectors,
// 0x00000803 image tensors), then big-endian 32-bit dimension sizes, then
// row-major unsigned bytes.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "lossmat/common.hpp"
#include "lossmat/data.hpp"

namespace lossmat {

constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::uint32_t kIdxImageMagic = 0x00000803;

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    check(static_cast<bool>(in), "idx: truncated " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace detail

inline std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(static_cast<bool>(in), "idx: cannot open " + path);
    std::uint32_t magic = detail::read_be32(in, "magic");
    check(magic == kIdxLabelMagic, "idx: bad label magic in " + path);
    std::uint32_t count = detail::read_be32(in, "count");
    std::vector<std::uint8_t> labels(count);
    in.read(reinterpret_cast<char*>(labels.data()), count);
    check(in.gcount() == static_cast<std::streamsize>(count), "idx: truncated label payload");
    return labels;
}

struct IdxImages {
    int count = 0;
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> pixels;  // count * rows * cols, row-major
};

inline IdxImages read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(static_cast<bool>(in), "idx: cannot open " + path);
    std::uint32_t magic = detail::read_be32(in, "magic");
    check(magic == kIdxImageMagic, "idx: bad image magic in " + path);
    IdxImages img;
    img.count = static_cast<int>(detail::read_be32(in, "count"));
    img.rows = static_cast<int>(detail::read_be32(in, "rows"));
    img.cols = static_cast<int>(detail::read_be32(in, "cols"));
    std::size_t total = std::size_t(img.count) * img.rows * img.cols;
    img.pixels.resize(total);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(total));
    check(in.gcount() == static_cast<std::streamsize>(total), "idx: truncated image payload");
    return img;
}

inline void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    check(static_cast<bool>(out), "idx: cannot write " + path);
    detail::write_be32(out, kIdxLabelMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

inline void write_idx_images(const std::string& path, const IdxImages& img) {
    check(static_cast<int>(img.pixels.size()) == img.count * img.rows * img.cols,
          "idx: pixel buffer size mismatch");
    std::ofstream out(path, std::ios::binary);
    check(static_cast<bool>(out), "idx: cannot write " + path);
    detail::write_be32(out, kIdxImageMagic);
    detail::write_be32(out, static_cast<std::uint32_t>(img.count));
    detail::write_be32(out, static_cast<std::uint32_t>(img.rows));
    detail::write_be32(out, static_cast<std::uint32_t>(img.cols));
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

// Build a task stream from one IDX image/label pair.  Pixels are rescaled to
// [0,1].  Classes are partitioned ascending into T tasks of C classes.  Per
// class, the first `subsample_per_class` occurrences (file order) form the
// train split and the following occurrences, capped at the same count, the
// test split.
inline TaskStream load_idx_stream(const std::string& images_path, const std::string& labels_path,
                                  int num_tasks, int classes_per_task, int subsample_per_class) {
    check(num_tasks > 0 && classes_per_task > 0, "load_idx_stream: layout must be positive");
    check(subsample_per_class > 0, "load_idx_stream: subsample_per_class must be positive");
    IdxImages img = read_idx_images(images_path);
    std::vector<std::uint8_t> labels = read_idx_labels(labels_path);
    check(static_cast<int>(labels.size()) == img.count, "idx: count mismatch between images and labels");
    const int n = num_tasks * classes_per_task;
    const int d = img.rows * img.cols;

    std::vector<std::vector<int>> by_class(n);
    for (int i = 0; i < img.count; ++i) {
        int y = labels[i];
        check(y < n, "load_idx_stream: label outside [0, N)");
        by_class[y].push_back(i);
    }

    auto make_sample = [&](int i) {
        Sample s;
        s.label = labels[i];
        s.features.resize(d);
        for (int j = 0; j < d; ++j) s.features[j] = img.pixels[std::size_t(i) * d + j] / 255.0;
        return s;
    };

    TaskStream stream;
    stream.num_tasks = num_tasks;
    stream.classes_per_task = classes_per_task;
    stream.feature_dim = d;
    for (int t = 0; t < num_tasks; ++t) {
        Task task;
        task.task_id = t;
        for (int m = 0; m < classes_per_task; ++m) {
            int cls = t * classes_per_task + m;
            task.class_ids.push_back(cls);
            const auto& idx = by_class[cls];
            int n_train = std::min<int>(subsample_per_class, static_cast<int>(idx.size()));
            int n_test = std::min<int>(subsample_per_class, static_cast<int>(idx.size()) - n_train);
            check(n_train > 0 && n_test > 0,
                  "load_idx_stream: class " + std::to_string(cls) + " lacks train or test samples");
            for (int i = 0; i < n_train; ++i) task.train.push_back(make_sample(idx[i]));
            for (int i = 0; i < n_test; ++i) task.test.push_back(make_sample(idx[n_train + i]));
        }
        stream.tasks.push_back(std::move(task));
    }
    return stream;
}

}  // namespace lossmat

#endif
