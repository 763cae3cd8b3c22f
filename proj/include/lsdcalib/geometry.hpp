#pragma once

// Pinhole camera model, LiDAR point projection, extrinsic perturbation and
// synthetic scene generation.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lsdcalib/errors.hpp"
#include "lsdcalib/se3.hpp"

namespace lsdcalib {

using Rng = std::mt19937_64;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  double skew = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("intrinsics need fx > 0 and fy > 0");
    if (width < 1 || height < 1) throw InvalidArgument("intrinsics need width, height >= 1");
    if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(skew)) {
      throw InvalidArgument("intrinsics have non-finite entries");
    }
  }

  /// K = [fx skew cx; 0 fy cy; 0 0 1]
  Matrix3 matrix() const {
    Matrix3 k;
    k << fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

/// LiDAR-frame points in meters, optional per-point intensity in [0, 1].
struct PointCloud {
  std::vector<Vector3> points;
  std::vector<double> intensity;  // empty or same size as points

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_intensity() const { return !intensity.empty(); }

  void validate() const {
    if (!intensity.empty() && intensity.size() != points.size()) {
      throw InvalidArgument("intensity channel size does not match point count");
    }
    for (const auto& p : points) {
      if (!p.allFinite()) throw InvalidArgument("point cloud has non-finite coordinates");
    }
  }
};

struct PerturbationSpec {
  double rot_range_deg = 15.0;   // half-range per axis
  double trans_range_m = 0.15;   // half-range per axis
  std::uint64_t seed = 0;

  void validate() const {
    if (!(rot_range_deg >= 0.0) || !(trans_range_m >= 0.0)) {
      throw InvalidArgument("perturbation ranges must be >= 0");
    }
  }
};

/// The six uniform draws behind one perturbation.
struct PerturbationDraw {
  EulerZYX angles_deg;
  Vector3 translation_m = Vector3::Zero();

  SE3Transform transform() const {
    return SE3Transform::from_rt(rotation_from_euler_zyx(angles_deg), translation_m);
  }
};

inline PerturbationDraw draw_perturbation(const PerturbationSpec& spec, Rng& rng) {
  spec.validate();
  std::uniform_real_distribution<double> rot(-spec.rot_range_deg, spec.rot_range_deg);
  std::uniform_real_distribution<double> trans(-spec.trans_range_m, spec.trans_range_m);
  PerturbationDraw d;
  // Draw order: roll, pitch, yaw, x, y, z. Zero ranges short-circuit so the
  // result is exactly the identity.
  const auto draw = [&](auto& dist, double range) { return range == 0.0 ? 0.0 : dist(rng); };
  d.angles_deg.roll = draw(rot, spec.rot_range_deg);
  d.angles_deg.pitch = draw(rot, spec.rot_range_deg);
  d.angles_deg.yaw = draw(rot, spec.rot_range_deg);
  d.translation_m.x() = draw(trans, spec.trans_range_m);
  d.translation_m.y() = draw(trans, spec.trans_range_m);
  d.translation_m.z() = draw(trans, spec.trans_range_m);
  return d;
}

/// T0 = dT * T_gt, dT built from Z-Y-X Euler angles and a translation drawn
/// uniformly inside the given half-ranges.
inline SE3Transform perturb_extrinsic(const SE3Transform& t_gt, const PerturbationSpec& spec, Rng& rng) {
  const PerturbationDraw d = draw_perturbation(spec, rng);
  if (spec.rot_range_deg == 0.0 && spec.trans_range_m == 0.0) return t_gt;
  return compose(d.transform(), t_gt);
}

inline SE3Transform perturb_extrinsic(const SE3Transform& t_gt, const PerturbationSpec& spec) {
  Rng rng(spec.seed);
  return perturb_extrinsic(t_gt, spec, rng);
}

// ---------------------------------------------------------------------------
// Projection

struct ProjectedPoint {
  std::size_t index;  // into the source cloud
  double u;
  double v;
  double depth;
};

/// Row-major width x height buffer, 0 where no point landed.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  double at(int u, int v) const { return depth.at(static_cast<std::size_t>(v) * width + u); }
};

struct Projection {
  DepthMap depth_map;
  std::vector<ProjectedPoint> pixels;
};

inline constexpr double kMinProjectionDepth = 1e-6;

inline std::optional<ProjectedPoint> project_point(const Vector3& p_cam, const Intrinsics& k,
                                                   std::size_t index) {
  const double z = p_cam.z();
  if (!(z > kMinProjectionDepth)) return std::nullopt;
  const double u = k.fx * p_cam.x() / z + k.skew * p_cam.y() / z + k.cx;
  const double v = k.fy * p_cam.y() / z + k.cy;
  if (!(u >= 0.0 && u < k.width && v >= 0.0 && v < k.height)) return std::nullopt;
  return ProjectedPoint{index, u, v, z};
}

/// Projects LiDAR points through T_CL and K. Points behind the camera or
/// outside the image are dropped; the depth map keeps the nearest depth per
/// pixel.
inline Projection project_points(const PointCloud& cloud, const Intrinsics& k, const SE3Transform& t_cl) {
  k.validate();
  Projection out;
  out.depth_map.width = k.width;
  out.depth_map.height = k.height;
  out.depth_map.depth.assign(static_cast<std::size_t>(k.width) * k.height, 0.0);
  const Matrix3 r = t_cl.rotation();
  const Vector3 t = t_cl.translation();
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto px = project_point(r * cloud.points[i] + t, k, i);
    if (!px) continue;
    out.pixels.push_back(*px);
    const auto col = static_cast<std::size_t>(px->u);
    const auto row = static_cast<std::size_t>(px->v);
    double& cell = out.depth_map.depth[row * static_cast<std::size_t>(k.width) + col];
    if (cell == 0.0 || px->depth < cell) cell = px->depth;
  }
  return out;
}

struct ReprojectionOffset {
  double mean_px = 0.0;
  std::size_t common_points = 0;
  bool no_common_points = true;
};

/// Mean pixel distance between projections under two extrinsics, over points
/// visible under both.
inline ReprojectionOffset mean_reprojection_offset(const PointCloud& cloud, const Intrinsics& k,
                                                   const SE3Transform& t_a, const SE3Transform& t_b) {
  k.validate();
  ReprojectionOffset out;
  double sum = 0.0;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto a = project_point(t_a.apply(cloud.points[i]), k, i);
    if (!a) continue;
    const auto b = project_point(t_b.apply(cloud.points[i]), k, i);
    if (!b) continue;
    sum += std::hypot(a->u - b->u, a->v - b->v);
    ++out.common_points;
  }
  if (out.common_points > 0) {
    out.mean_px = sum / static_cast<double>(out.common_points);
    out.no_common_points = false;
  }
  return out;
}

/// Binary PGM (P5), 16-bit big-endian, depth quantized to millimeters and
/// saturated at 65535.
inline void write_depth_pgm(const DepthMap& map, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "P5\n" << map.width << ' ' << map.height << "\n65535\n";
  for (double d : map.depth) {
    const double mm = std::round(d * 1000.0);
    const auto q = static_cast<std::uint16_t>(mm <= 0.0 ? 0.0 : (mm >= 65535.0 ? 65535.0 : mm));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    os.write(bytes, 2);
  }
  if (!os) throw IoError("failed writing " + path);
}

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SyntheticScene {
  PointCloud cloud;   // LiDAR frame
  SE3Transform t_gt;  // LiDAR -> camera
};

inline constexpr double kSynthMaxRotationDeg = 30.0;
inline constexpr double kSynthMaxTranslationM = 2.0;

/// Random ground-truth extrinsic: rotation up to 30 deg about a random axis,
/// translation up to 2 m in a random direction.
inline SE3Transform random_extrinsic(Rng& rng, double max_rot_deg = kSynthMaxRotationDeg,
                                     double max_trans_m = kSynthMaxTranslationM) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto random_dir = [&] {
    Vector3 d;
    do {
      d = Vector3(gauss(rng), gauss(rng), gauss(rng));
    } while (d.norm() < 1e-9);
    return Vector3(d.normalized());
  };
  const Vector3 axis = random_dir();
  const double angle = deg2rad(max_rot_deg) * unit(rng);
  const Vector3 dir = random_dir();
  const double dist = max_trans_m * unit(rng);
  return SE3Transform::from_rt(so3_exp(axis * angle), dir * dist);
}

/// Points sampled uniformly over the image and uniformly in depth, so every
/// point re-projects inside the image under T_gt. Returned in the LiDAR frame.
inline SyntheticScene synth_scene(int n_points, double near, double far, const Intrinsics& k, Rng& rng) {
  if (n_points < 1) throw InvalidArgument("synth_scene needs n_points >= 1");
  if (!(near > 0.0 && near < far)) throw InvalidArgument("synth_scene needs 0 < near < far");
  k.validate();

  SyntheticScene scene;
  scene.t_gt = random_extrinsic(rng);
  const SE3Transform cam_to_lidar = invert(scene.t_gt);
  // Pixel margin so round-trip rounding cannot push a point off the image.
  constexpr double margin = 1e-6;
  std::uniform_real_distribution<double> u_dist(margin, k.width - margin);
  std::uniform_real_distribution<double> v_dist(margin, k.height - margin);
  std::uniform_real_distribution<double> z_dist(near, far);
  std::uniform_real_distribution<double> i_dist(0.0, 1.0);

  scene.cloud.points.reserve(static_cast<std::size_t>(n_points));
  scene.cloud.intensity.reserve(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    const double u = u_dist(rng);
    const double v = v_dist(rng);
    const double z = z_dist(rng);
    const double y = (v - k.cy) * z / k.fy;
    const double x = (u - k.cx - k.skew * y / z) * z / k.fx;
    scene.cloud.points.push_back(cam_to_lidar.apply(Vector3(x, y, z)));
    scene.cloud.intensity.push_back(i_dist(rng));
  }
  return scene;
}

/// KITTI-like camera used by the synthetic data source.
inline Intrinsics default_synthetic_intrinsics() {
  return Intrinsics{718.856, 718.856, 607.1928, 185.2157, 0.0, 1241, 376};
}

}  // namespace lsdcalib
