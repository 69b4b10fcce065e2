#include <doctest.h>

#include <set>

#include "lossmat/data.hpp"

using namespace lossmat;

namespace {

BlobSpec two_blob_spec(std::uint64_t seed = 42) {
    BlobSpec spec;
    spec.centers = {{-3.0, 0.0}, {3.0, 0.0}};
    spec.scale = 0.5;
    spec.samples_per_class_train = 20;
    spec.samples_per_class_test = 10;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("blob stream: layout and separability") {
    TaskStream stream = make_blob_stream(two_blob_spec(), 1, 2);
    REQUIRE(stream.tasks.size() == 1);
    CHECK(stream.num_classes() == 2);
    CHECK(stream.feature_dim == 2);
    // well-separated clusters: every sample sits on its center's side
    for (const auto& s : stream.tasks[0].train)
        CHECK((s.label == 0 ? s.features[0] < 0.0 : s.features[0] > 0.0));
}

TEST_CASE("blob stream: identical seeds give byte-identical samples") {
    TaskStream a = make_blob_stream(two_blob_spec(42), 1, 2);
    TaskStream b = make_blob_stream(two_blob_spec(42), 1, 2);
    REQUIRE(a.tasks[0].train.size() == b.tasks[0].train.size());
    for (std::size_t i = 0; i < a.tasks[0].train.size(); ++i)
        CHECK(a.tasks[0].train[i].features == b.tasks[0].train[i].features);
    TaskStream c = make_blob_stream(two_blob_spec(43), 1, 2);
    CHECK(a.tasks[0].train[0].features != c.tasks[0].train[0].features);
}

TEST_CASE("blob stream: ring of 10 into 5 disjoint 2-class tasks") {
    BlobSpec spec;
    spec.centers = ring_centers(10, 5.0, 2);
    spec.scale = 1.0;
    spec.samples_per_class_train = 5;
    spec.samples_per_class_test = 5;
    spec.seed = 7;
    TaskStream stream = make_blob_stream(spec, 5, 2);
    REQUIRE(stream.tasks.size() == 5);
    std::set<int> seen;
    for (const auto& task : stream.tasks) {
        REQUIRE(task.class_ids.size() == 2);
        for (int c : task.class_ids) {
            CHECK(seen.count(c) == 0);  // pairwise disjoint
            seen.insert(c);
        }
        for (const auto& s : task.train)
            CHECK(std::count(task.class_ids.begin(), task.class_ids.end(), s.label) == 1);
    }
    CHECK(seen.size() == 10);
}

TEST_CASE("blob stream: input validation") {
    BlobSpec spec = two_blob_spec();
    CHECK_THROWS(make_blob_stream(spec, 2, 2));  // center count != T*C
    spec.scale = 0.0;
    CHECK_THROWS(make_blob_stream(spec, 1, 2));
    spec = two_blob_spec();
    spec.samples_per_class_train = 0;
    CHECK_THROWS(make_blob_stream(spec, 1, 2));
}

TEST_CASE("class_conditional_subset") {
    BlobSpec spec;
    spec.centers = ring_centers(4, 5.0, 2);
    spec.scale = 1.0;
    spec.samples_per_class_train = 10;
    spec.samples_per_class_test = 50;
    spec.seed = 11;
    TaskStream stream = make_blob_stream(spec, 2, 2);

    SUBCASE("all classes gives the entire test set") {
        auto all = class_conditional_subset(stream, {0, 1, 2, 3});
        CHECK(all.size() == all_test_samples(stream).size());
    }
    SUBCASE("singleton class") {
        auto sub = class_conditional_subset(stream, {2});
        CHECK(sub.size() == 50);
        for (const auto& s : sub) CHECK(s.label == 2);
    }
    SUBCASE("inter-task pair subset") {
        auto pair = class_conditional_subset(stream, {0, 3});
        CHECK(pair.size() == 100);
    }
    SUBCASE("partition property: singleton subsets tile the test set") {
        std::size_t total = 0;
        for (int c = 0; c < 4; ++c) total += class_conditional_subset(stream, {c}).size();
        CHECK(total == all_test_samples(stream).size());
    }
    SUBCASE("unknown class id") {
        CHECK_THROWS(class_conditional_subset(stream, {4}));
        CHECK_THROWS(class_conditional_subset(stream, {}));
    }
}
