#pragma once

// Rigid-body transforms: SE(3) group elements, se(3) twists, and the
// exponential / logarithm maps between them.
//
// Twist layout is rotation first: (w1, w2, w3, v1, v2, v3), radians and
// meters. A transform T acts on points as p' = R p + t.

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "lsdcalib/errors.hpp"

namespace lsdcalib {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;
using Vector6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kSmallAngle = 1e-8;
inline constexpr double kOrthoTolerance = 1e-9;
inline constexpr double kReorthoThreshold = 1e-12;
inline constexpr double kCutLocusMargin = 1e-6;

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Element of se(3): rotation part omega, translation part v.
class Twist6 {
 public:
  Twist6() : data_(Vector6::Zero()) {}
  explicit Twist6(const Vector6& data) : data_(data) {}
  Twist6(const Vector3& omega, const Vector3& v) {
    data_ << omega, v;
  }
  Twist6(double w1, double w2, double w3, double v1, double v2, double v3) {
    data_ << w1, w2, w3, v1, v2, v3;
  }

  static Twist6 zero() { return Twist6(); }

  Vector3 omega() const { return data_.head<3>(); }
  Vector3 v() const { return data_.tail<3>(); }
  const Vector6& vector() const { return data_; }
  double operator[](int i) const { return data_[i]; }

  bool all_finite() const { return data_.allFinite(); }
  double norm() const { return data_.norm(); }

  friend Twist6 operator+(const Twist6& a, const Twist6& b) { return Twist6(Vector6(a.data_ + b.data_)); }
  friend Twist6 operator-(const Twist6& a, const Twist6& b) { return Twist6(Vector6(a.data_ - b.data_)); }
  friend Twist6 operator*(double s, const Twist6& a) { return Twist6(Vector6(s * a.data_)); }
  friend Twist6 operator*(const Twist6& a, double s) { return s * a; }
  friend bool operator==(const Twist6& a, const Twist6& b) { return a.data_ == b.data_; }

  std::array<double, 6> to_array() const {
    return {data_[0], data_[1], data_[2], data_[3], data_[4], data_[5]};
  }

 private:
  Vector6 data_;
};

/// Rigid transform stored as a 4x4 homogeneous matrix. Construction through
/// from_matrix() validates the SE(3) constraints.
class SE3Transform {
 public:
  SE3Transform() : m_(Matrix4::Identity()) {}

  static SE3Transform identity() { return SE3Transform(); }

  static SE3Transform from_matrix(const Matrix4& m) {
    if (!m.allFinite()) {
      throw InvalidArgument("transform has non-finite entries");
    }
    if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) {
      throw InvalidArgument("transform bottom row is not (0, 0, 0, 1)");
    }
    const Matrix3 r = m.topLeftCorner<3, 3>();
    if (orthogonality_drift(r) > kOrthoTolerance) {
      throw InvalidArgument("rotation block is not orthonormal");
    }
    if (std::abs(r.determinant() - 1.0) > kOrthoTolerance) {
      throw InvalidArgument("rotation block has determinant != +1");
    }
    return SE3Transform(m, Unchecked{});
  }

  static SE3Transform from_rt(const Matrix3& r, const Vector3& t) {
    Matrix4 m = Matrix4::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return from_matrix(m);
  }

  /// Row-major 16 values, as used by the wire protocol and text fixtures.
  static SE3Transform from_row_major(const std::array<double, 16>& v) {
    Matrix4 m;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = v[4 * r + c];
    return from_matrix(m);
  }

  std::array<double, 16> to_row_major() const {
    std::array<double, 16> out{};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) out[4 * r + c] = m_(r, c);
    return out;
  }

  const Matrix4& matrix() const { return m_; }
  Matrix3 rotation() const { return m_.topLeftCorner<3, 3>(); }
  Vector3 translation() const { return m_.topRightCorner<3, 1>(); }

  Vector3 apply(const Vector3& p) const { return rotation() * p + translation(); }

  // Max-abs entry of R^T R - I.
  static double orthogonality_drift(const Matrix3& r) {
    return (r.transpose() * r - Matrix3::Identity()).cwiseAbs().maxCoeff();
  }

  friend bool operator==(const SE3Transform& a, const SE3Transform& b) { return a.m_ == b.m_; }

 private:
  struct Unchecked {};
  SE3Transform(const Matrix4& m, Unchecked) : m_(m) {}

  friend SE3Transform compose(const SE3Transform&, const SE3Transform&);
  friend SE3Transform invert(const SE3Transform&);
  friend SE3Transform exp_map(const Twist6&);

  Matrix4 m_;
};

inline Matrix3 skew(const Vector3& w) {
  Matrix3 s;
  // clang-format off
  s <<  0.0,  -w.z(),  w.y(),
        w.z(),  0.0,  -w.x(),
       -w.y(),  w.x(),  0.0;
  // clang-format on
  return s;
}

inline Vector3 vee(const Matrix3& s) {
  return Vector3(s(2, 1) - s(1, 2), s(0, 2) - s(2, 0), s(1, 0) - s(0, 1)) * 0.5;
}

namespace detail {

// Coefficients a = sin(th)/th, b = (1 - cos(th))/th^2, c = (th - sin(th))/th^3
// shared by Rodrigues' formula and the SO(3) left Jacobian.
struct RodriguesCoeffs {
  double a, b, c;
};

inline RodriguesCoeffs rodrigues_coeffs(double theta) {
  const double th2 = theta * theta;
  if (theta < kSmallAngle) {
    return {1.0 - th2 / 6.0, 0.5 - th2 / 24.0, 1.0 / 6.0 - th2 / 120.0};
  }
  const double s = std::sin(theta);
  const double half = std::sin(0.5 * theta);
  // theta - sin(theta) cancels badly below ~0.1, so expand it there.
  const double c = theta < 0.1
                       ? 1.0 / 6.0 - th2 * (1.0 / 120.0 - th2 * (1.0 / 5040.0 - th2 * (1.0 / 362880.0 - th2 / 39916800.0)))
                       : (theta - s) / (th2 * theta);
  return {s / theta, 2.0 * half * half / th2, c};
}

// Projects a nearly-orthonormal matrix onto SO(3) (polar decomposition).
inline Matrix3 project_to_so3(const Matrix3& r) {
  Eigen::JacobiSVD<Matrix3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3 u = svd.matrixU();
  const Matrix3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

}  // namespace detail

inline Matrix3 so3_exp(const Vector3& omega) {
  const auto k = detail::rodrigues_coeffs(omega.norm());
  const Matrix3 w = skew(omega);
  return Matrix3::Identity() + k.a * w + k.b * w * w;
}

inline Matrix3 so3_left_jacobian(const Vector3& omega) {
  const auto k = detail::rodrigues_coeffs(omega.norm());
  const Matrix3 w = skew(omega);
  return Matrix3::Identity() + k.b * w + k.c * w * w;
}

/// se(3) -> SE(3). Rodrigues for the rotation, left Jacobian for the
/// translation.
inline SE3Transform exp_map(const Twist6& xi) {
  if (!xi.all_finite()) {
    throw InvalidArgument("exp_map: twist has non-finite components");
  }
  const Vector3 omega = xi.omega();
  Matrix4 m = Matrix4::Identity();
  m.topLeftCorner<3, 3>() = so3_exp(omega);
  m.topRightCorner<3, 1>() = so3_left_jacobian(omega) * xi.v();
  return SE3Transform(m, SE3Transform::Unchecked{});
}

/// SE(3) -> se(3). Refuses rotations within kCutLocusMargin of pi, where the
/// logarithm is not unique.
inline Twist6 log_map(const SE3Transform& t) {
  const Matrix3 r = t.rotation();
  const Vector3 axis_sin = 0.5 * vee(r - r.transpose());  // sin(th) * axis
  const double sin_th = axis_sin.norm();
  const double cos_th = 0.5 * (r.trace() - 1.0);
  const double theta = std::atan2(sin_th, cos_th);
  if (theta >= std::numbers::pi - kCutLocusMargin) {
    throw CutLocusError("log_map: rotation angle " + std::to_string(theta) +
                        " rad is within 1e-6 of pi");
  }

  Vector3 omega;
  double d;  // coefficient of W^2 in the inverse left Jacobian
  if (theta < kSmallAngle) {
    omega = axis_sin * (1.0 + theta * theta / 6.0);
    d = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    omega = axis_sin * (theta / sin_th);
    d = 1.0 / (theta * theta) - (1.0 + cos_th) / (2.0 * theta * sin_th);
  }
  const Matrix3 w = skew(omega);
  const Matrix3 j_inv = Matrix3::Identity() - 0.5 * w + d * w * w;
  return Twist6(omega, Vector3(j_inv * t.translation()));
}

/// Matrix product a * b, re-projected onto SE(3) when the rotation block has
/// drifted more than 1e-12 from orthonormal.
inline SE3Transform compose(const SE3Transform& a, const SE3Transform& b) {
  Matrix4 m = a.m_ * b.m_;
  m.row(3) << 0.0, 0.0, 0.0, 1.0;
  const Matrix3 r = m.topLeftCorner<3, 3>();
  if (SE3Transform::orthogonality_drift(r) > kReorthoThreshold) {
    m.topLeftCorner<3, 3>() = detail::project_to_so3(r);
  }
  return SE3Transform(m, SE3Transform::Unchecked{});
}

inline SE3Transform operator*(const SE3Transform& a, const SE3Transform& b) { return compose(a, b); }

inline SE3Transform invert(const SE3Transform& t) {
  const Matrix3 rt = t.rotation().transpose();
  Matrix4 m = Matrix4::Identity();
  m.topLeftCorner<3, 3>() = rt;
  m.topRightCorner<3, 1>() = -rt * t.translation();
  return SE3Transform(m, SE3Transform::Unchecked{});
}

struct EulerZYX {
  double roll = 0.0;   // about x, degrees
  double pitch = 0.0;  // about y, degrees
  double yaw = 0.0;    // about z, degrees
};

/// R = Rz(yaw) * Ry(pitch) * Rx(roll), angles in radians.
inline Matrix3 rotation_from_euler_zyx_rad(double roll, double pitch, double yaw) {
  const double cr = std::cos(roll), sr = std::sin(roll);
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cy = std::cos(yaw), sy = std::sin(yaw);
  Matrix3 r;
  // clang-format off
  r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp,     cp * sr,                cp * cr;
  // clang-format on
  return r;
}

inline Matrix3 rotation_from_euler_zyx(const EulerZYX& e) {
  return rotation_from_euler_zyx_rad(deg2rad(e.roll), deg2rad(e.pitch), deg2rad(e.yaw));
}

/// Intrinsic Z-Y-X decomposition in degrees. At gimbal lock roll is 0.
inline EulerZYX euler_zyx(const SE3Transform& t) {
  const Matrix3 r = t.rotation();
  const double sp = std::clamp(-r(2, 0), -1.0, 1.0);
  const double pitch = std::asin(sp);
  double roll = 0.0;
  double yaw = 0.0;
  if (std::hypot(r(2, 1), r(2, 2)) < 1e-12) {
    yaw = std::atan2(-r(0, 1), r(1, 1));
  } else {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  }
  return {rad2deg(roll), rad2deg(pitch), rad2deg(yaw)};
}

}  // namespace lsdcalib
