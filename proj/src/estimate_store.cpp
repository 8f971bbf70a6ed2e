#include "udddm/estimate_store.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "udddm/rng.hpp"
#include "udddm/tensor_io.hpp"

namespace udddm {

struct EstimateBuffer::DiskFile {
    std::fstream f;
    std::int64_t est_offset = 0;
};

std::int64_t estimate_payload_bytes(std::int64_t n_data, std::int64_t data_dim,
                                    std::int64_t bytes_per_scalar) {
    return n_data * data_dim * bytes_per_scalar;
}

static TensorFile buffer_tensor_file(std::int64_t n_data, int data_dim, std::int64_t epoch,
                                     std::vector<double> estimates,
                                     std::vector<std::int64_t> visits) {
    TensorFile tf;
    tf.tensors.push_back(make_f64_tensor("estimates", {n_data, data_dim}, std::move(estimates)));
    tf.tensors.push_back(make_i64_tensor("visit_count", {n_data}, std::move(visits)));
    tf.meta["epoch"] = std::to_string(epoch);
    return tf;
}

EstimateBuffer EstimateBuffer::init(std::int64_t n_data, int data_dim, std::uint64_t seed,
                                    Backing backing, const std::string& path_stem) {
    if (n_data < 1) throw std::invalid_argument("estimate buffer: n_data must be >= 1");
    if (data_dim < 1) throw std::invalid_argument("estimate buffer: data_dim must be >= 1");

    EstimateBuffer buf;
    buf.n_data_ = n_data;
    buf.data_dim_ = data_dim;
    buf.backing_ = backing;
    buf.epoch_ = 0;
    buf.visits_.assign(static_cast<std::size_t>(n_data), 0);

    std::vector<double> est(static_cast<std::size_t>(n_data) * data_dim);
    auto eng = make_engine(derive_seed(seed, 0, "estimate-init"));
    fill_normal(eng, est);

    if (backing == Backing::memory) {
        buf.estimates_ = std::move(est);
        return buf;
    }
    if (path_stem.empty())
        throw std::invalid_argument("estimate buffer: disk backing needs a path stem");
    buf.path_stem_ = path_stem;
    save_tensor_file(path_stem, buffer_tensor_file(n_data, data_dim, 0, std::move(est), buf.visits_));
    buf.disk_ = std::make_shared<DiskFile>();
    buf.disk_->f.open(path_stem + ".bin", std::ios::binary | std::ios::in | std::ios::out);
    if (!buf.disk_->f) throw std::runtime_error("estimate buffer: cannot reopen " + path_stem + ".bin");
    buf.disk_->est_offset = 0;
    return buf;
}

EstimateBuffer EstimateBuffer::load(const std::string& path_stem, Backing backing) {
    auto tf = load_tensor_file(path_stem);
    const auto& est = tf.get("estimates");
    const auto& vis = tf.get("visit_count");
    if (est.shape.size() != 2 || vis.shape.size() != 1 || est.shape[0] != vis.shape[0])
        throw std::runtime_error("estimate buffer: unexpected tensor shapes in " + path_stem);

    EstimateBuffer buf;
    buf.n_data_ = est.shape[0];
    buf.data_dim_ = static_cast<int>(est.shape[1]);
    buf.backing_ = backing;
    buf.epoch_ = std::stoll(tf.meta.at("epoch"));
    buf.visits_ = vis.i64;

    if (backing == Backing::memory) {
        buf.estimates_ = est.f64;
        return buf;
    }
    buf.path_stem_ = path_stem;
    buf.disk_ = std::make_shared<DiskFile>();
    buf.disk_->f.open(path_stem + ".bin", std::ios::binary | std::ios::in | std::ios::out);
    if (!buf.disk_->f) throw std::runtime_error("estimate buffer: cannot open " + path_stem + ".bin");
    buf.disk_->est_offset = 0;  // "estimates" is the first tensor in the blob
    return buf;
}

void EstimateBuffer::check_indices(std::span<const std::int64_t> indices, std::size_t n_rows) const {
    if (n_rows != 0 && indices.size() != n_rows)
        throw std::invalid_argument("estimate buffer: index/row count mismatch");
    for (auto i : indices)
        if (i < 0 || i >= n_data_)
            throw std::out_of_range("estimate buffer: index " + std::to_string(i) + " out of range");
}

std::vector<double> EstimateBuffer::read(std::span<const std::int64_t> indices) const {
    check_indices(indices, 0);
    const auto d = static_cast<std::size_t>(data_dim_);
    std::vector<double> out(indices.size() * d);
    if (backing_ == Backing::memory) {
        for (std::size_t k = 0; k < indices.size(); ++k) {
            const auto* src = &estimates_[static_cast<std::size_t>(indices[k]) * d];
            std::copy(src, src + d, &out[k * d]);
        }
        return out;
    }
    auto& f = disk_->f;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        f.seekg(disk_->est_offset + indices[k] * static_cast<std::int64_t>(d) * 8);
        f.read(reinterpret_cast<char*>(&out[k * d]), static_cast<std::streamsize>(d * 8));
        if (!f) throw std::runtime_error("estimate buffer: short read from " + path_stem_ + ".bin");
    }
    return out;
}

void EstimateBuffer::write(std::span<const std::int64_t> indices,
                           std::span<const double> new_estimates) {
    const auto d = static_cast<std::size_t>(data_dim_);
    if (new_estimates.size() != indices.size() * d)
        throw std::invalid_argument("estimate buffer: estimate payload size mismatch");
    check_indices(indices, indices.size());
    std::unordered_set<std::int64_t> seen;
    for (auto i : indices)
        if (!seen.insert(i).second)
            throw std::invalid_argument("estimate buffer: duplicate index " + std::to_string(i) +
                                        " in one write");

    if (backing_ == Backing::memory) {
        for (std::size_t k = 0; k < indices.size(); ++k) {
            const auto* src = &new_estimates[k * d];
            std::copy(src, src + d, &estimates_[static_cast<std::size_t>(indices[k]) * d]);
            ++visits_[static_cast<std::size_t>(indices[k])];
        }
        return;
    }
    auto& f = disk_->f;
    for (std::size_t k = 0; k < indices.size(); ++k) {
        f.seekp(disk_->est_offset + indices[k] * static_cast<std::int64_t>(d) * 8);
        f.write(reinterpret_cast<const char*>(&new_estimates[k * d]),
                static_cast<std::streamsize>(d * 8));
        if (!f) throw std::runtime_error("estimate buffer: short write to " + path_stem_ + ".bin");
        ++visits_[static_cast<std::size_t>(indices[k])];
    }
    f.flush();
}

std::int64_t EstimateBuffer::visit_count(std::int64_t index) const {
    if (index < 0 || index >= n_data_) throw std::out_of_range("estimate buffer: bad index");
    return visits_[static_cast<std::size_t>(index)];
}

std::int64_t EstimateBuffer::min_visit_count() const {
    std::int64_t m = visits_.empty() ? 0 : visits_[0];
    for (auto v : visits_) m = std::min(m, v);
    return m;
}

FootprintReport EstimateBuffer::memory_footprint(std::int64_t bytes_per_scalar) const {
    // payload: n_data * data_dim * bytes_per_scalar
    // bookkeeping: one 8-byte visit counter per sample + three 8-byte header
    // fields (n_data, data_dim, epoch)
    FootprintReport r;
    r.estimate_payload_bytes = estimate_payload_bytes(n_data_, data_dim_, bytes_per_scalar);
    r.bookkeeping_bytes = n_data_ * 8 + 24;
    r.total_bytes = r.estimate_payload_bytes + r.bookkeeping_bytes;
    return r;
}

void EstimateBuffer::save(const std::string& path_stem) const {
    std::vector<double> est;
    if (backing_ == Backing::memory) {
        est = estimates_;
    } else {
        std::vector<std::int64_t> all(static_cast<std::size_t>(n_data_));
        for (std::int64_t i = 0; i < n_data_; ++i) all[static_cast<std::size_t>(i)] = i;
        est = read(all);
    }
    save_tensor_file(path_stem, buffer_tensor_file(n_data_, data_dim_, epoch_, std::move(est), visits_));
}

bool EstimateBuffer::contents_equal(const EstimateBuffer& other) const {
    if (n_data_ != other.n_data_ || data_dim_ != other.data_dim_ || epoch_ != other.epoch_ ||
        visits_ != other.visits_)
        return false;
    std::vector<std::int64_t> all(static_cast<std::size_t>(n_data_));
    for (std::int64_t i = 0; i < n_data_; ++i) all[static_cast<std::size_t>(i)] = i;
    return read(all) == other.read(all);
}

}  // namespace udddm
