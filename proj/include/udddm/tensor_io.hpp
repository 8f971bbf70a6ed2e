#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace udddm {

// Manifest + blob container used by checkpoints, estimate buffers and
// sample files. `<stem>.json` lists tensor names, dtypes, shapes and byte
// offsets; `<stem>.bin` is the concatenated little-endian payload.
// Round trips are bit-exact.

enum class Dtype { f64, i64 };

struct Tensor {
    std::string name;
    Dtype dtype = Dtype::f64;
    std::vector<std::int64_t> shape;
    std::vector<double> f64;      // valid when dtype == f64
    std::vector<std::int64_t> i64;  // valid when dtype == i64

    std::int64_t elem_count() const;
    std::int64_t byte_length() const;
};

Tensor make_f64_tensor(std::string name, std::vector<std::int64_t> shape,
                       std::vector<double> data);
Tensor make_i64_tensor(std::string name, std::vector<std::int64_t> shape,
                       std::vector<std::int64_t> data);

struct TensorFile {
    std::vector<Tensor> tensors;
    std::map<std::string, std::string> meta;  // free-form string metadata

    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

// Writes `<stem>.json` and `<stem>.bin`. Overwrites existing files.
void save_tensor_file(const std::string& stem, const TensorFile& tf);

TensorFile load_tensor_file(const std::string& stem);

// Fixed blob layout of a tensor list: offset of each tensor's payload,
// in declaration order. Shared with the random-access estimate store.
std::vector<std::int64_t> blob_offsets(const std::vector<Tensor>& tensors);

}  // namespace udddm
