#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace udddm {

enum class Backing { memory, disk_spill };

struct FootprintReport {
    std::int64_t estimate_payload_bytes = 0;  // n_data * data_dim * bytes_per_scalar
    std::int64_t bookkeeping_bytes = 0;       // visit counts + fixed header fields
    std::int64_t total_bytes = 0;
};

// Payload part of the footprint formula, exposed for width what-ifs
// (e.g. 32-bit or 16-bit storage variants).
std::int64_t estimate_payload_bytes(std::int64_t n_data, std::int64_t data_dim,
                                    std::int64_t bytes_per_scalar);

// Per-sample running estimates of the clean data point, plus visit counts
// and the global epoch counter. The memory backing keeps everything in RAM;
// disk_spill keeps the estimate rows in the blob file of a manifest+blob
// pair, reading and writing rows in place.
//
// Single-writer: the trainer owns the buffer during a step. Reads between
// writes are safe.
class EstimateBuffer {
public:
    // Fresh buffer: every estimate an independent standard-normal draw,
    // visit counts zero, epoch zero. disk_spill requires a path stem.
    static EstimateBuffer init(std::int64_t n_data, int data_dim, std::uint64_t seed,
                               Backing backing, const std::string& path_stem = "");

    // Reopens a previously saved buffer (either backing).
    static EstimateBuffer load(const std::string& path_stem, Backing backing);

    std::int64_t n_data() const { return n_data_; }
    int data_dim() const { return data_dim_; }
    Backing backing() const { return backing_; }

    std::int64_t epoch() const { return epoch_; }
    void set_epoch(std::int64_t e) { epoch_ = e; }

    // Gathers rows into a flat (indices.size() x data_dim) vector.
    std::vector<double> read(std::span<const std::int64_t> indices) const;

    // Replaces rows and increments their visit counts. Duplicate indices in
    // one call are rejected: a batch must touch each sample at most once.
    void write(std::span<const std::int64_t> indices, std::span<const double> new_estimates);

    std::int64_t visit_count(std::int64_t index) const;
    std::int64_t min_visit_count() const;

    // Footprint at the given storage width (defaults to the native f64).
    FootprintReport memory_footprint(std::int64_t bytes_per_scalar = 8) const;

    // Persists estimates, visit counts and epoch as tensors "estimates" and
    // "visit_count" in a manifest+blob pair at `path_stem`.
    void save(const std::string& path_stem) const;

    // Byte-for-byte equality of contents (not backing or paths).
    bool contents_equal(const EstimateBuffer& other) const;

private:
    EstimateBuffer() = default;
    void check_indices(std::span<const std::int64_t> indices, std::size_t n_rows) const;

    std::int64_t n_data_ = 0;
    int data_dim_ = 0;
    Backing backing_ = Backing::memory;
    std::int64_t epoch_ = 0;

    std::vector<double> estimates_;       // memory backing only
    std::vector<std::int64_t> visits_;    // kept in memory for both backings
    std::string path_stem_;               // disk backing
    struct DiskFile;
    std::shared_ptr<DiskFile> disk_;      // open row-access handle
};

}  // namespace udddm
