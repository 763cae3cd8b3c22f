#pragma once

// Calibration error metrics: error transform, per-axis decomposition,
// aggregation with threshold rates, and report rendering.

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "lsdcalib/errors.hpp"
#include "lsdcalib/format.hpp"
#include "lsdcalib/se3.hpp"

namespace lsdcalib {

/// Absolute per-axis errors of one sample. Rotation in degrees, translation in
/// centimeters; the RMSE fields are the L2 norm of each axis triple.
struct SampleError {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;
  double rot_rmse = 0.0;
  double trans_rmse = 0.0;
};

struct AggregateReport {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  double rot_rmse = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;
  double trans_rmse = 0.0;
  double rate_3deg3cm = 0.0;
  double rate_5deg5cm = 0.0;
  std::size_t n_samples = 0;

  friend bool operator==(const AggregateReport&, const AggregateReport&) = default;
};

/// dT = T_hat * T_gt^-1
inline SE3Transform transform_error(const SE3Transform& t_hat, const SE3Transform& t_gt) {
  return compose(t_hat, invert(t_gt));
}

inline SampleError sample_error(const SE3Transform& dt) {
  const EulerZYX e = euler_zyx(dt);
  const Vector3 t_cm = dt.translation() * 100.0;
  SampleError s;
  s.roll = std::abs(e.roll);
  s.pitch = std::abs(e.pitch);
  s.yaw = std::abs(e.yaw);
  s.tx = std::abs(t_cm.x());
  s.ty = std::abs(t_cm.y());
  s.tz = std::abs(t_cm.z());
  s.rot_rmse = std::sqrt(s.roll * s.roll + s.pitch * s.pitch + s.yaw * s.yaw);
  s.trans_rmse = std::sqrt(s.tx * s.tx + s.ty * s.ty + s.tz * s.tz);
  return s;
}

inline bool within(const SampleError& e, double deg, double cm) { return e.rot_rmse < deg && e.trans_rmse < cm; }

/// Means over samples; a sample counts toward a rate only if both RMSEs are
/// strictly below the threshold. Sums run in list order, so the result is
/// permutation-invariant up to floating-point reassociation (~1e-15 relative).
inline AggregateReport aggregate(std::span<const SampleError> errors) {
  if (errors.empty()) throw InvalidArgument("aggregate needs at least one sample");
  AggregateReport r;
  std::size_t n3 = 0, n5 = 0;
  for (const auto& e : errors) {
    r.roll += e.roll;
    r.pitch += e.pitch;
    r.yaw += e.yaw;
    r.rot_rmse += e.rot_rmse;
    r.tx += e.tx;
    r.ty += e.ty;
    r.tz += e.tz;
    r.trans_rmse += e.trans_rmse;
    if (within(e, 3.0, 3.0)) ++n3;
    if (within(e, 5.0, 5.0)) ++n5;
  }
  const double n = static_cast<double>(errors.size());
  for (double* f : {&r.roll, &r.pitch, &r.yaw, &r.rot_rmse, &r.tx, &r.ty, &r.tz, &r.trans_rmse}) *f /= n;
  r.rate_3deg3cm = static_cast<double>(n3) / n;
  r.rate_5deg5cm = static_cast<double>(n5) / n;
  r.n_samples = errors.size();
  return r;
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { json, csv, markdown };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  throw InvalidArgument("unknown report format '" + std::string(s) + "' (json, csv, markdown)");
}

inline nlohmann::ordered_json to_json(const AggregateReport& r) {
  nlohmann::ordered_json j;
  j["n_samples"] = r.n_samples;
  j["rotation_deg"] = {{"roll", r.roll}, {"pitch", r.pitch}, {"yaw", r.yaw}, {"rmse", r.rot_rmse}};
  j["translation_cm"] = {{"x", r.tx}, {"y", r.ty}, {"z", r.tz}, {"rmse", r.trans_rmse}};
  j["rate_3deg3cm"] = r.rate_3deg3cm;
  j["rate_5deg5cm"] = r.rate_5deg5cm;
  return j;
}

inline AggregateReport aggregate_from_json(const nlohmann::json& j) {
  AggregateReport r;
  r.n_samples = j.at("n_samples").get<std::size_t>();
  const auto& rot = j.at("rotation_deg");
  r.roll = rot.at("roll").get<double>();
  r.pitch = rot.at("pitch").get<double>();
  r.yaw = rot.at("yaw").get<double>();
  r.rot_rmse = rot.at("rmse").get<double>();
  const auto& tr = j.at("translation_cm");
  r.tx = tr.at("x").get<double>();
  r.ty = tr.at("y").get<double>();
  r.tz = tr.at("z").get<double>();
  r.trans_rmse = tr.at("rmse").get<double>();
  r.rate_3deg3cm = j.at("rate_3deg3cm").get<double>();
  r.rate_5deg5cm = j.at("rate_5deg5cm").get<double>();
  return r;
}

inline constexpr std::string_view kCsvHeader =
    "n_samples,roll_deg,pitch_deg,yaw_deg,rot_rmse_deg,x_cm,y_cm,z_cm,trans_rmse_cm,rate_3deg3cm,rate_5deg5cm";

inline std::string csv_row(const AggregateReport& r) {
  std::string s = std::to_string(r.n_samples);
  for (double v : {r.roll, r.pitch, r.yaw, r.rot_rmse, r.tx, r.ty, r.tz, r.trans_rmse, r.rate_3deg3cm,
                   r.rate_5deg5cm}) {
    s += ',';
    s += format_double(v);
  }
  return s;
}

inline std::string percent(double rate) { return format_fixed(100.0 * rate, 2) + "%"; }

/// Table layout: Roll | Pitch | Yaw | RMSE | X | Y | Z | RMSE | 3°3cm | 5°5cm.
inline std::string markdown_table(const AggregateReport& r, std::string_view label = "") {
  std::ostringstream os;
  os << "| Method | Roll (°) | Pitch (°) | Yaw (°) | RMSE (°) | X (cm) | Y (cm) | Z (cm) | RMSE (cm) | 3°3cm | 5°5cm |\n";
  os << "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  os << "| " << (label.empty() ? std::string_view("-") : label);
  for (double v : {r.roll, r.pitch, r.yaw, r.rot_rmse, r.tx, r.ty, r.tz, r.trans_rmse}) {
    os << " | " << format_fixed(v, 3);
  }
  os << " | " << percent(r.rate_3deg3cm) << " | " << percent(r.rate_5deg5cm) << " |\n";
  return os.str();
}

inline std::string render_report(const AggregateReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::json:
      return to_json(r).dump(2) + "\n";
    case ReportFormat::csv:
      return std::string(kCsvHeader) + "\n" + csv_row(r) + "\n";
    case ReportFormat::markdown:
      return markdown_table(r);
  }
  throw InvalidArgument("unknown report format");
}

inline std::string render_report(const AggregateReport& r, std::string_view format) {
  return render_report(r, parse_report_format(format));
}

}  // namespace lsdcalib
