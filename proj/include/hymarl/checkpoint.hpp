#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hymarl/params.hpp"
#include "hymarl/tensor.hpp"

namespace hymarl {

// Flat binary map of named tensors. Layout after the magic line:
//   u32 entry count, then per entry:
//   u32 name length, name bytes, u32 rank, u32 dims..., f64 values...
// All integers and floats little-endian (asserted at compile time).

inline constexpr const char* kCkptMagic = "HMARL-CKPT-1\n";

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");

inline void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline double get_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

}  // namespace detail

/// Serializes stores under a name prefix ("controller.", "model.", ...).
/// Values are widened to f64 so f32 and f64 builds share one format.
template <class T>
void checkpoint_put(std::map<std::string, Tensor<double>>& out, const std::string& prefix,
                    const ParamStore<T>& ps) {
  for (int i = 0; i < ps.size(); ++i) {
    const Tensor<T>& t = ps.at(i);
    Tensor<double> d = Tensor<double>::zeros(t.shape);
    for (std::size_t k = 0; k < t.data.size(); ++k) d.data[k] = static_cast<double>(t.data[k]);
    out[prefix + ps.name(i)] = std::move(d);
  }
}

template <class T>
void checkpoint_get(const std::map<std::string, Tensor<double>>& in, const std::string& prefix,
                    ParamStore<T>& ps) {
  for (int i = 0; i < ps.size(); ++i) {
    auto it = in.find(prefix + ps.name(i));
    if (it == in.end()) throw std::runtime_error("checkpoint missing tensor: " + prefix + ps.name(i));
    Tensor<T>& t = ps.at(i);
    if (it->second.shape != t.shape)
      throw std::runtime_error("checkpoint shape mismatch for " + prefix + ps.name(i));
    for (std::size_t k = 0; k < t.data.size(); ++k) t.data[k] = static_cast<T>(it->second.data[k]);
  }
}

inline void save_checkpoint(const std::string& path, const std::map<std::string, Tensor<double>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kCkptMagic, static_cast<std::streamsize>(std::string(kCkptMagic).size()));
  detail::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::put_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data) detail::put_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline std::map<std::string, Tensor<double>> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic(std::string(kCkptMagic).size(), '\0');
  is.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!is || magic != kCkptMagic) throw std::runtime_error("bad checkpoint magic in " + path);
  std::map<std::string, Tensor<double>> out;
  std::uint32_t count = detail::get_u32(is);
  for (std::uint32_t e = 0; e < count; ++e) {
    std::uint32_t name_len = detail::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::uint32_t rank = detail::get_u32(is);
    std::vector<int> shape;
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(detail::get_u32(is)));
      n *= static_cast<std::size_t>(shape.back());
    }
    Tensor<double> t = Tensor<double>::zeros(shape);
    for (std::size_t k = 0; k < n; ++k) t.data[k] = detail::get_f64(is);
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    out[name] = std::move(t);
  }
  return out;
}

}  // namespace hymarl
