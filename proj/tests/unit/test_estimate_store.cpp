#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "udddm/estimate_store.hpp"

using namespace udddm;

namespace {
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string stem(const std::string& s) const { return (path / s).string(); }
};
}  // namespace

TEST_CASE("init draws standard normals deterministically") {
    auto a = EstimateBuffer::init(50000, 2, 11, Backing::memory);
    auto b = EstimateBuffer::init(50000, 2, 11, Backing::memory);
    CHECK(a.contents_equal(b));
    CHECK(a.epoch() == 0);
    CHECK(a.min_visit_count() == 0);

    std::vector<std::int64_t> all(50000);
    for (std::int64_t i = 0; i < 50000; ++i) all[static_cast<std::size_t>(i)] = i;
    const auto rows = a.read(all);
    REQUIRE(rows.size() == 100000);
    double mean = 0.0;
    for (double v : rows) mean += v;
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (double v : rows) var += (v - mean) * (v - mean);
    var /= static_cast<double>(rows.size());
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);

    auto tiny = EstimateBuffer::init(1, 2, 3, Backing::memory);
    CHECK(tiny.read(std::vector<std::int64_t>{0}).size() == 2);
    CHECK_THROWS_AS((void)EstimateBuffer::init(0, 2, 3, Backing::memory), std::invalid_argument);
}

TEST_CASE("write then read round trips and counts visits") {
    auto buf = EstimateBuffer::init(16, 3, 5, Backing::memory);
    const std::vector<std::int64_t> idx{2, 7, 11};
    const std::vector<double> vals{1.5, -2.5, 0.25, 1e-300, -0.0, 42.0, 7.0, 8.0, 9.0};
    buf.write(idx, vals);
    CHECK(buf.read(idx) == vals);
    CHECK(buf.visit_count(2) == 1);
    CHECK(buf.visit_count(7) == 1);
    CHECK(buf.visit_count(3) == 0);
    buf.write(idx, vals);
    CHECK(buf.visit_count(2) == 2);

    CHECK_THROWS_AS(buf.write(std::vector<std::int64_t>{1, 1},
                              std::vector<double>(6, 0.0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(buf.write(std::vector<std::int64_t>{16}, std::vector<double>(3, 0.0)),
                    std::out_of_range);
    CHECK_THROWS_AS(buf.write(idx, std::vector<double>(5, 0.0)), std::invalid_argument);
    CHECK_THROWS_AS((void)buf.read(std::vector<std::int64_t>{-1}), std::out_of_range);
}

TEST_CASE("disk spill round trips bit-exactly across a reopen") {
    TempDir tmp("udddm_disk_spill_test");
    auto buf = EstimateBuffer::init(64, 2, 9, Backing::disk_spill, tmp.stem("buf"));
    const std::vector<std::int64_t> idx{0, 31, 63};
    const std::vector<double> vals{0.125, -0.375, 3.0, -1e-17, 9.5, 2.5};
    buf.write(idx, vals);
    CHECK(buf.read(idx) == vals);
    buf.set_epoch(4);
    buf.save(tmp.stem("buf"));

    auto reopened = EstimateBuffer::load(tmp.stem("buf"), Backing::disk_spill);
    CHECK(reopened.epoch() == 4);
    CHECK(reopened.read(idx) == vals);
    CHECK(reopened.visit_count(31) == 1);
    CHECK(buf.contents_equal(reopened));

    auto in_memory = EstimateBuffer::load(tmp.stem("buf"), Backing::memory);
    CHECK(buf.contents_equal(in_memory));

    // memory-backed snapshot saved and reloaded is identical too
    auto mem = EstimateBuffer::init(64, 2, 9, Backing::memory);
    mem.write(idx, vals);
    mem.set_epoch(4);
    mem.save(tmp.stem("mem"));
    CHECK(EstimateBuffer::load(tmp.stem("mem"), Backing::memory).contents_equal(mem));
    CHECK(mem.contents_equal(buf));

    CHECK_THROWS((void)EstimateBuffer::init(8, 2, 1, Backing::disk_spill, ""));
}

TEST_CASE("memory footprint formula") {
    // the published figure: 50000 rows of 3072 scalars at 32-bit
    CHECK(estimate_payload_bytes(50000, 3072, 4) == 614400000);
    CHECK(estimate_payload_bytes(50000, 3072, 2) == 614400000 / 2);
    CHECK(estimate_payload_bytes(0, 3072, 4) == 0);

    auto buf = EstimateBuffer::init(1000, 3, 1, Backing::memory);
    const auto fp = buf.memory_footprint();
    CHECK(fp.estimate_payload_bytes == 1000 * 3 * 8);
    CHECK(fp.bookkeeping_bytes == 1000 * 8 + 24);
    CHECK(fp.total_bytes == fp.estimate_payload_bytes + fp.bookkeeping_bytes);

    const auto fp32 = buf.memory_footprint(4);
    CHECK(fp32.estimate_payload_bytes * 2 == fp.estimate_payload_bytes);
}
