// Binary container for named tensor collections (model checkpoints).
//
// Layout: "XLTENSOR" magic, u32 version, u64 meta length + UTF-8 metadata
// blob, u64 tensor count, then per tensor: u64 name length + name, u32 rank,
// u64 dims, f64 payload. Fixed-width little-endian integers and IEEE doubles;
// entries are sorted by name so identical contents produce identical bytes.

#ifndef XLING_SERIALIZE_HPP
#define XLING_SERIALIZE_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "xling/autodiff.hpp"
#include "xling/tensor.hpp"

namespace xling {

namespace detail {

constexpr char kTensorMagic[9] = "XLTENSOR";
constexpr std::uint32_t kTensorVersion = 1;

template <class T>
void write_pod(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const std::string& what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("tensor file truncated while reading " + what);
    return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const std::string& what,
                               std::uint64_t max_len = 1ull << 30) {
    const auto n = read_pod<std::uint64_t>(is, what + " length");
    if (n > max_len) throw std::runtime_error("tensor file: implausible " + what + " length");
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("tensor file truncated while reading " + what);
    return s;
}

}  // namespace detail

struct TensorFile {
    std::string meta;  // free-form metadata blob (typically JSON)
    std::map<std::string, ad::Tensor> tensors;
};

inline void save_tensors(const std::string& path, const TensorFile& tf) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(detail::kTensorMagic, 8);
    detail::write_pod<std::uint32_t>(os, detail::kTensorVersion);
    detail::write_string(os, tf.meta);
    detail::write_pod<std::uint64_t>(os, tf.tensors.size());
    for (const auto& [name, t] : tf.tensors) {
        detail::write_string(os, name);
        detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
        for (std::size_t d : t.shape) detail::write_pod<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline TensorFile load_tensors(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kTensorMagic, 8) != 0)
        throw std::runtime_error("not a tensor file: " + path);
    const auto version = detail::read_pod<std::uint32_t>(is, "version");
    if (version != detail::kTensorVersion)
        throw std::runtime_error("unsupported tensor file version " + std::to_string(version));
    TensorFile tf;
    tf.meta = detail::read_string(is, "metadata");
    const auto count = detail::read_pod<std::uint64_t>(is, "tensor count");
    for (std::uint64_t k = 0; k < count; ++k) {
        std::string name = detail::read_string(is, "tensor name", 1 << 20);
        const auto rank = detail::read_pod<std::uint32_t>(is, "rank");
        if (rank > 8) throw std::runtime_error("tensor file: implausible rank");
        ad::Shape shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<std::size_t>(detail::read_pod<std::uint64_t>(is, "dim"));
            numel *= d;
        }
        if (numel > (1ull << 28)) throw std::runtime_error("tensor file: implausible size");
        ad::Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!is) throw std::runtime_error("tensor file truncated in payload of " + name);
        tf.tensors.emplace(std::move(name), std::move(t));
    }
    return tf;
}

// Named-parameter registry: models expose their parameters as (name, ptr)
// pairs; these helpers move values in and out of TensorFile containers.
using ParamList = std::vector<std::pair<std::string, ad::Parameter*>>;

inline TensorFile params_to_file(const ParamList& params, std::string meta) {
    TensorFile tf;
    tf.meta = std::move(meta);
    for (const auto& [name, p] : params) {
        if (!tf.tensors.emplace(name, p->value).second)
            throw std::runtime_error("duplicate parameter name: " + name);
    }
    return tf;
}

inline void params_from_file(const ParamList& params, const TensorFile& tf) {
    for (const auto& [name, p] : params) {
        auto it = tf.tensors.find(name);
        if (it == tf.tensors.end())
            throw std::runtime_error("checkpoint is missing parameter: " + name);
        if (it->second.shape != p->value.shape)
            throw std::runtime_error("checkpoint shape mismatch for " + name + ": expected " +
                                     ad::shape_str(p->value.shape) + ", found " +
                                     ad::shape_str(it->second.shape));
        p->value = it->second;
        p->zero_grad();
    }
    if (tf.tensors.size() != params.size())
        throw std::runtime_error("checkpoint has " + std::to_string(tf.tensors.size()) +
                                 " tensors but the model has " + std::to_string(params.size()));
}

}  // namespace xling

#endif  // XLING_SERIALIZE_HPP
