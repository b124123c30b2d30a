#pragma once

#include <pems/core.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <vector>

namespace pems::nn {

// Dense row-major array used for weight interchange.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != element_count(shape)) throw ShapeError("tensor: data length does not match shape");
  }

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  static Tensor from_matrix(const Eigen::MatrixXd& m) {
    std::vector<double> d(static_cast<std::size_t>(m.size()));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(d.data(), m.rows(), m.cols()) = m;
    return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(d));
  }

  Eigen::MatrixXd to_matrix() const {
    if (shape.size() != 2) throw ShapeError("tensor: expected rank 2");
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data.data(), static_cast<Eigen::Index>(shape[0]), static_cast<Eigen::Index>(shape[1]));
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "binary weight format assumes a little-endian host");

inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) throw IoError("weights: truncated file");
  return v;
}

}  // namespace detail

// u64 rank, u64 dims[rank], f64 data[prod(dims)] (row-major, little-endian).
inline void write_tensor(std::ostream& out, const Tensor& t) {
  detail::write_u64(out, t.shape.size());
  for (auto d : t.shape) detail::write_u64(out, d);
  out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

inline Tensor read_tensor(std::istream& in) {
  const auto rank = detail::read_u64(in);
  if (rank > 8) throw IoError("weights: implausible tensor rank");
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = detail::read_u64(in);
  std::vector<double> data(Tensor::element_count(shape));
  if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double))))
    throw IoError("weights: truncated tensor data");
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace pems::nn
