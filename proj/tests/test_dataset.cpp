#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "motionmap/common.hpp"
#include "motionmap/dataset.hpp"

using namespace motionmap;

namespace {

std::vector<AlignedRecord> make_records(std::size_t n, unsigned seed = 41) {
    Rng rng(seed);
    std::vector<AlignedRecord> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].timestamp = static_cast<double>(i) / 30.0;
        for (std::size_t c = 0; c < 15; ++c) out[i].joint_angles[c] = rng.uniform(-90.0, 90.0);
        out[i].tool_state = {rng.uniform(-30, 30), rng.uniform(-25, 25), rng.uniform(-40, 40),
                             rng.uniform(0, 30)};
        out[i].complete = true;
    }
    return out;
}

}  // namespace

TEST_CASE("build_dataset shapes and column order") {
    auto records = make_records(10);
    const Dataset d = build_dataset(records);
    CHECK(d.inputs.rows == 10);
    CHECK(d.inputs.cols == 15);
    CHECK(d.targets.rows == 10);
    CHECK(d.targets.cols == 4);
    CHECK_FALSE(d.normalized);

    // column 0 is exactly the ff_j1 series
    for (std::size_t r = 0; r < 10; ++r)
        CHECK(d.inputs.at(r, 0) == records[r].joint_angles[0]);

    // a record with one nonzero joint lands in that joint's column
    for (std::size_t joint = 0; joint < 15; ++joint) {
        AlignedRecord rec;
        rec.complete = true;
        rec.joint_angles[joint] = 42.0;
        const Dataset single = build_dataset({rec, rec});
        for (std::size_t c = 0; c < 15; ++c)
            CHECK(single.inputs.at(0, c) == (c == joint ? 42.0 : 0.0));
    }

    CHECK_THROWS_AS(build_dataset({}), data_error);
}

TEST_CASE("normalize maps midpoints and endpoints as stated") {
    std::vector<AlignedRecord> records(3);
    for (auto& r : records) r.complete = true;
    records[0].joint_angles[0] = -90.0;
    records[1].joint_angles[0] = 0.0;
    records[2].joint_angles[0] = 90.0;
    for (std::size_t i = 0; i < 3; ++i) {
        records[i].timestamp = static_cast<double>(i);
        for (std::size_t c = 1; c < 15; ++c)
            records[i].joint_angles[c] = static_cast<double>(i + c);
        records[i].tool_state = {static_cast<double>(i), static_cast<double>(i),
                                 static_cast<double>(i), 15.0 * static_cast<double>(i)};
    }
    auto [norm, params] = normalize(build_dataset(records));
    CHECK(norm.inputs.at(1, 0) == doctest::Approx(0.5));  // 0 deg in [-90, 90]
    CHECK(norm.targets.at(2, 3) == doctest::Approx(1.0)); // 30 deg jaw
    CHECK(norm.targets.at(0, 3) == doctest::Approx(0.0));
    CHECK(norm.normalized);

    for (double v : norm.inputs.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    for (double v : norm.targets.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("normalize names the degenerate column") {
    auto records = make_records(5);
    for (auto& r : records) r.joint_angles[5] = 3.0;  // mf_j2 constant
    try {
        normalize(build_dataset(records));
        FAIL("expected degenerate-column error");
    } catch (const data_error& e) {
        CHECK(std::string(e.what()).find("mf_j2") != std::string::npos);
    }
}

TEST_CASE("denormalize inverts normalize to 1e-12") {
    const Dataset d = build_dataset(make_records(200));
    auto [norm, params] = normalize(d);
    const Dataset back = denormalize(norm, params);
    double worst = 0.0;
    for (std::size_t i = 0; i < d.inputs.data.size(); ++i)
        worst = std::max(worst, std::abs(back.inputs.data[i] - d.inputs.data[i]));
    for (std::size_t i = 0; i < d.targets.data.size(); ++i)
        worst = std::max(worst, std::abs(back.targets.data[i] - d.targets.data[i]));
    CHECK(worst < 1e-12);

    // all-0.5 column with range [0, 30] denormalizes to the constant 15
    Dataset half;
    half.inputs = Matrix(4, 1);
    half.targets = Matrix(4, 1);
    for (std::size_t r = 0; r < 4; ++r) {
        half.inputs.at(r, 0) = 0.5;
        half.targets.at(r, 0) = 0.5;
    }
    half.normalized = true;
    NormParams p;
    p.x_min = {0.0};
    p.x_max = {30.0};
    p.y_min = {0.0};
    p.y_max = {30.0};
    const Dataset c = denormalize(half, p);
    for (std::size_t r = 0; r < 4; ++r) CHECK(c.inputs.at(r, 0) == doctest::Approx(15.0));
}

TEST_CASE("split sizes and temporal order") {
    {
        const Dataset d = build_dataset(make_records(10000));
        auto [tr, te] = split(d, 0.8);
        CHECK(tr.size() == 8000);
        CHECK(te.size() == 2000);
    }
    {
        const Dataset d = build_dataset(make_records(10));
        auto [tr, te] = split(d, 0.8);
        CHECK(tr.size() == 8);
        CHECK(te.size() == 2);
        // train rows precede test rows in time
        CHECK(tr.timestamps.back() < te.timestamps.front());
        CHECK(tr.size() + te.size() == d.size());
    }
    {
        const Dataset d = build_dataset(make_records(7));
        auto [tr, te] = split(d, 0.5);
        CHECK(tr.size() == 4);  // ceil(3.5)
        CHECK(te.size() == 3);
    }
    const Dataset d = build_dataset(make_records(3));
    CHECK_THROWS_AS(split(d, 0.999), data_error);
    CHECK_THROWS_AS(split(d, 0.0), data_error);
    CHECK_THROWS_AS(split(d, 1.0), data_error);
}

TEST_CASE("window shapes, targets and the slicing oracle") {
    const Dataset d = build_dataset(make_records(5));
    {
        const SequenceSet s = window(d, 1);
        CHECK(s.size() == 5);
        for (std::size_t w = 0; w < 5; ++w)
            for (std::size_t c = 0; c < 15; ++c)
                CHECK(s.window(w)[c] == d.inputs.at(w, c));
    }
    {
        const SequenceSet s = window(d, 3);
        CHECK(s.size() == 3);
        for (std::size_t w = 0; w < 3; ++w)
            for (std::size_t c = 0; c < 4; ++c)
                CHECK(s.targets.at(w, c) == d.targets.at(w + 2, c));
    }
    CHECK_THROWS_AS(window(d, 6), data_error);
    CHECK_THROWS_AS(window(d, 0), data_error);

    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(40);
        const std::size_t len = 1 + rng.below(n);
        const Dataset dd = build_dataset(make_records(n, 100 + trial));
        const SequenceSet s = window(dd, len);
        CHECK(s.size() == n - len + 1);
        for (std::size_t w = 0; w < s.size(); ++w) {
            for (std::size_t t = 0; t < len; ++t)
                for (std::size_t c = 0; c < 15; ++c)
                    CHECK(s.window(w)[t * 15 + c] == dd.inputs.at(w + t, c));
            for (std::size_t c = 0; c < 4; ++c)
                CHECK(s.targets.at(w, c) == dd.targets.at(w + len - 1, c));
        }
    }
}

TEST_CASE("slice_inputs keeps the named columns and their params") {
    const Dataset d = build_dataset(make_records(20));
    auto [norm, params] = normalize(d);
    const Dataset sliced = slice_inputs(norm, {9, 2, 14});
    CHECK(sliced.inputs.cols == 3);
    for (std::size_t r = 0; r < 20; ++r) {
        CHECK(sliced.inputs.at(r, 0) == norm.inputs.at(r, 9));
        CHECK(sliced.inputs.at(r, 1) == norm.inputs.at(r, 2));
        CHECK(sliced.inputs.at(r, 2) == norm.inputs.at(r, 14));
    }
    CHECK(sliced.norm->x_min[0] == params.x_min[9]);
    CHECK(sliced.norm->y_min == params.y_min);
    CHECK_THROWS_AS(slice_inputs(norm, {}), data_error);
    CHECK_THROWS_AS(slice_inputs(norm, {99}), data_error);
}

TEST_CASE("dataset file round trip with the norm sidecar") {
    const Dataset d = build_dataset(make_records(30));
    auto [norm, params] = normalize(d);
    const std::string path = "test_dataset_roundtrip.jsonl";
    save_dataset(norm, path);
    const Dataset back = load_dataset(path);
    CHECK(back.normalized);
    REQUIRE(back.norm.has_value());
    CHECK(*back.norm == params);
    for (std::size_t i = 0; i < norm.inputs.data.size(); ++i)
        CHECK(back.inputs.data[i] == norm.inputs.data[i]);
    std::remove(path.c_str());
    std::remove((path + ".norm.json").c_str());
}
