#include "udddm/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace udddm {

static_assert(std::endian::native == std::endian::little,
              "tensor files are little-endian; big-endian hosts are unsupported");

static const char* dtype_name(Dtype d) { return d == Dtype::f64 ? "f64" : "i64"; }

static Dtype dtype_from_name(const std::string& s) {
    if (s == "f64") return Dtype::f64;
    if (s == "i64") return Dtype::i64;
    throw std::runtime_error("tensor_io: unknown dtype '" + s + "'");
}

std::int64_t Tensor::elem_count() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::int64_t Tensor::byte_length() const { return elem_count() * 8; }

Tensor make_f64_tensor(std::string name, std::vector<std::int64_t> shape,
                       std::vector<double> data) {
    Tensor t;
    t.name = std::move(name);
    t.dtype = Dtype::f64;
    t.shape = std::move(shape);
    t.f64 = std::move(data);
    if (t.elem_count() != static_cast<std::int64_t>(t.f64.size()))
        throw std::invalid_argument("tensor '" + t.name + "': shape/data size mismatch");
    return t;
}

Tensor make_i64_tensor(std::string name, std::vector<std::int64_t> shape,
                       std::vector<std::int64_t> data) {
    Tensor t;
    t.name = std::move(name);
    t.dtype = Dtype::i64;
    t.shape = std::move(shape);
    t.i64 = std::move(data);
    if (t.elem_count() != static_cast<std::int64_t>(t.i64.size()))
        throw std::invalid_argument("tensor '" + t.name + "': shape/data size mismatch");
    return t;
}

const Tensor& TensorFile::get(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw std::runtime_error("tensor file: no tensor named '" + name + "'");
}

bool TensorFile::has(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

std::vector<std::int64_t> blob_offsets(const std::vector<Tensor>& tensors) {
    std::vector<std::int64_t> off(tensors.size());
    std::int64_t pos = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        off[i] = pos;
        pos += tensors[i].byte_length();
    }
    return off;
}

void save_tensor_file(const std::string& stem, const TensorFile& tf) {
    const auto offsets = blob_offsets(tf.tensors);

    nlohmann::json manifest;
    manifest["format"] = "udddm-tensors-v1";
    manifest["byte_order"] = "little";
    auto& arr = manifest["tensors"] = nlohmann::json::array();
    for (std::size_t i = 0; i < tf.tensors.size(); ++i) {
        const auto& t = tf.tensors[i];
        arr.push_back({{"name", t.name},
                       {"dtype", dtype_name(t.dtype)},
                       {"shape", t.shape},
                       {"byte_offset", offsets[i]},
                       {"byte_length", t.byte_length()}});
    }
    manifest["meta"] = tf.meta;

    {
        std::ofstream mf(stem + ".json", std::ios::trunc);
        if (!mf) throw std::runtime_error("cannot write manifest: " + stem + ".json");
        mf << manifest.dump(2) << "\n";
    }
    std::ofstream bf(stem + ".bin", std::ios::binary | std::ios::trunc);
    if (!bf) throw std::runtime_error("cannot write blob: " + stem + ".bin");
    for (const auto& t : tf.tensors) {
        const char* src = t.dtype == Dtype::f64
                              ? reinterpret_cast<const char*>(t.f64.data())
                              : reinterpret_cast<const char*>(t.i64.data());
        bf.write(src, t.byte_length());
    }
    if (!bf) throw std::runtime_error("short write on blob: " + stem + ".bin");
}

TensorFile load_tensor_file(const std::string& stem) {
    std::ifstream mf(stem + ".json");
    if (!mf) throw std::runtime_error("cannot open manifest: " + stem + ".json");
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.value("format", "") != "udddm-tensors-v1")
        throw std::runtime_error("unrecognised tensor file format in " + stem + ".json");

    TensorFile tf;
    if (manifest.contains("meta"))
        tf.meta = manifest["meta"].get<std::map<std::string, std::string>>();

    std::ifstream bf(stem + ".bin", std::ios::binary);
    if (!bf) throw std::runtime_error("cannot open blob: " + stem + ".bin");

    for (const auto& entry : manifest["tensors"]) {
        Tensor t;
        t.name = entry.at("name").get<std::string>();
        t.dtype = dtype_from_name(entry.at("dtype").get<std::string>());
        t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
        const auto offset = entry.at("byte_offset").get<std::int64_t>();
        const auto length = entry.at("byte_length").get<std::int64_t>();
        if (length != t.byte_length())
            throw std::runtime_error("tensor '" + t.name + "': manifest byte_length inconsistent");
        bf.seekg(offset);
        if (t.dtype == Dtype::f64) {
            t.f64.resize(static_cast<std::size_t>(t.elem_count()));
            bf.read(reinterpret_cast<char*>(t.f64.data()), length);
        } else {
            t.i64.resize(static_cast<std::size_t>(t.elem_count()));
            bf.read(reinterpret_cast<char*>(t.i64.data()), length);
        }
        if (!bf) throw std::runtime_error("short read in blob for tensor '" + t.name + "'");
        tf.tensors.push_back(std::move(t));
    }
    return tf;
}

}  // namespace udddm
