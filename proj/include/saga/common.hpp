#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace saga {

// Error taxonomy used across the library. CLI maps these to exit codes:
//   InvalidInput -> 2, NotReady -> 3, anything else -> 4.
struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& m) : std::runtime_error(m) {}
};
struct NotReady : std::runtime_error {
  explicit NotReady(const std::string& m) : std::runtime_error(m) {}
};
struct UnsupportedGeometry : std::runtime_error {
  explicit UnsupportedGeometry(const std::string& m) : std::runtime_error(m) {}
};
struct DegenerateRotation : std::runtime_error {
  explicit DegenerateRotation(const std::string& m) : std::runtime_error(m) {}
};
struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};
struct Internal : std::runtime_error {
  explicit Internal(const std::string& m) : std::runtime_error(m) {}
};

#define SAGA_REQUIRE(cond, ExType, msg)        \
  do {                                         \
    if (!(cond)) throw ExType(msg);            \
  } while (0)

template <class T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <class T>
using Mat3 = Eigen::Matrix<T, 3, 3>;

using MatXd = MatX<double>;
using MatXf = MatX<float>;
using VecXd = VecX<double>;
using VecXf = VecX<float>;
using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;

// Points are stored one per ROW (P x 3) in library-facing structs; the
// autodiff engine uses columns-as-items instead (3 x P) and converts at
// the boundary.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

}  // namespace saga
