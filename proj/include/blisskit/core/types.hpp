#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace blisskit {

// N x 3 positions in meters, one row per vertex.
using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
// Unstructured point sets share the vertex layout.
using Points = Vertices;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VectorX = Eigen::VectorXd;
using MatrixX = Eigen::MatrixXd;
using RowMatrixX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Geometry violating a mesh or cloud invariant.
class GeometryError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; line is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Numerical failure (non-finite loss, singular factorization).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Flattens an N x 3 vertex array into a 3N vector (x0 y0 z0 x1 ...).
inline Eigen::Map<const VectorX> flatten(const Vertices& v) {
  return Eigen::Map<const VectorX>(v.data(), v.size());
}

inline Vertices unflatten(const VectorX& x) {
  if (x.size() % 3 != 0) throw DimensionError("flat vertex vector length not divisible by 3");
  return Eigen::Map<const Vertices>(x.data(), x.size() / 3, 3);
}

}  // namespace blisskit
