#include "itrack/net/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace itrack::net {

Mat& ParamStore::create(const std::string& name, int rows, int cols,
                        std::mt19937_64& rng) {
  if (values_.count(name)) throw std::logic_error("duplicate param: " + name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = u(rng);
  return values_[name] = std::move(m);
}

Mat& ParamStore::create_zero(const std::string& name, int rows, int cols) {
  if (values_.count(name)) throw std::logic_error("duplicate param: " + name);
  return values_[name] = Mat::Zero(rows, cols);
}

Mat& ParamStore::value(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("no param: " + name);
  return it->second;
}

const Mat& ParamStore::value(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("no param: " + name);
  return it->second;
}

Mat& ParamStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    const Mat& v = value(name);
    it = grads_.emplace(name, Mat::Zero(v.rows(), v.cols())).first;
  }
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, g] : grads_) g.setZero();
}

void ParamStore::accumulate_grad(const std::string& name, const Mat& g) {
  grad(name) += g;
}

void ParamStore::sgd_step(double lr, double momentum_coef) {
  for (auto& [name, v] : values_) {
    auto git = grads_.find(name);
    if (git == grads_.end()) continue;
    if (momentum_coef == 0.0) {
      v -= lr * git->second;
      continue;
    }
    auto mit = momentum_.find(name);
    if (mit == momentum_.end())
      mit = momentum_.emplace(name, Mat::Zero(v.rows(), v.cols())).first;
    mit->second = momentum_coef * mit->second + git->second;
    v -= lr * mit->second;
  }
}

uint64_t ParamStore::checksum() const {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&](const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, v] : values_) {
    mix(name.data(), name.size());
    for (int r = 0; r < v.rows(); ++r)
      for (int c = 0; c < v.cols(); ++c) {
        const double x = v(r, c);
        mix(&x, sizeof(x));
      }
  }
  return h;
}

}  // namespace itrack::net

namespace itrack::io {

namespace fs = std::filesystem;

void save_checkpoint(const net::ParamStore& params, const std::string& dir) {
  fs::create_directories(dir);
  std::ostringstream manifest;
  std::string payload;
  for (const auto& [name, v] : params.values()) {
    manifest << name << ' ' << v.rows() << ' ' << v.cols() << ' '
             << payload.size() << '\n';
    for (int r = 0; r < v.rows(); ++r)
      for (int c = 0; c < v.cols(); ++c) {
        const float f = static_cast<float>(v(r, c));
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        if constexpr (std::endian::native == std::endian::big)
          bits = __builtin_bswap32(bits);
        char buf[4];
        std::memcpy(buf, &bits, 4);
        payload.append(buf, 4);
      }
  }
  {
    std::ofstream out(fs::path(dir) / "manifest.txt", std::ios::binary);
    out << manifest.str();
    if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  }
  {
    std::ofstream out(fs::path(dir) / "params.f32", std::ios::binary);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("cannot write params in " + dir);
  }
}

net::ParamStore load_checkpoint(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw std::runtime_error("no checkpoint manifest in " + dir);
  std::ifstream payload(fs::path(dir) / "params.f32", std::ios::binary);
  if (!payload) throw std::runtime_error("no checkpoint payload in " + dir);

  net::ParamStore params;
  std::string name;
  long rows, cols;
  size_t offset;
  while (manifest >> name >> rows >> cols >> offset) {
    if (rows < 0 || cols < 0) throw std::runtime_error("bad manifest shape");
    payload.seekg(static_cast<std::streamoff>(offset));
    Mat m(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) {
        char buf[4];
        payload.read(buf, 4);
        if (!payload) throw std::runtime_error("truncated checkpoint payload");
        uint32_t bits;
        std::memcpy(&bits, buf, 4);
        if constexpr (std::endian::native == std::endian::big)
          bits = __builtin_bswap32(bits);
        float f;
        std::memcpy(&f, &bits, 4);
        m(r, c) = static_cast<double>(f);
      }
    params.set(name, std::move(m));
  }
  return params;
}

}  // namespace itrack::io
