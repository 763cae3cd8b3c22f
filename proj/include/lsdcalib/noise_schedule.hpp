#pragma once

// Cosine noise schedule and the strided timestep subsequence used for
// reduced-NFE sampling.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lsdcalib/errors.hpp"
#include "lsdcalib/format.hpp"

namespace lsdcalib {

inline constexpr int kDefaultTotalSteps = 1000;
inline constexpr double kDefaultCosineOffset = 0.008;
inline constexpr double kMaxBeta = 0.999;

/// Tabulated cosine schedule. alpha_bar is indexed 0..T and is the unclipped
/// closed form; alpha and beta are indexed 1..T and carry the beta clip.
class NoiseSchedule {
 public:
  int total_steps() const { return total_steps_; }
  double offset() const { return offset_; }

  double alpha_bar(int t) const { return alpha_bar_.at(check(t, 0)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double beta(int t) const { return beta_.at(check(t, 1)); }
  /// True when beta(t) was clipped to kMaxBeta.
  bool clipped(int t) const { return clipped_.at(check(t, 1)); }

 private:
  friend NoiseSchedule build_cosine_schedule(int, double);

  std::size_t check(int t, int lo) const {
    if (t < lo || t > total_steps_) {
      throw InvalidArgument("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) +
                            ", " + std::to_string(total_steps_) + "]");
    }
    return static_cast<std::size_t>(t);
  }

  int total_steps_ = 0;
  double offset_ = 0.0;
  std::vector<double> alpha_bar_;  // size T+1
  std::vector<double> beta_;       // size T+1, entry 0 unused
  std::vector<bool> clipped_;
};

/// alpha_bar(t) = f(t) / f(0), f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2),
/// beta(t) = min(1 - alpha_bar(t) / alpha_bar(t-1), 0.999).
inline NoiseSchedule build_cosine_schedule(int total_steps = kDefaultTotalSteps,
                                           double offset = kDefaultCosineOffset) {
  if (total_steps < 1) throw InvalidArgument("schedule needs T >= 1");
  if (!(offset > 0.0 && offset < 1.0)) throw InvalidArgument("schedule offset s must lie in (0, 1)");

  const auto f = [&](int t) {
    const double c = std::cos((static_cast<double>(t) / total_steps + offset) / (1.0 + offset) *
                              std::numbers::pi / 2.0);
    return c * c;
  };

  NoiseSchedule s;
  s.total_steps_ = total_steps;
  s.offset_ = offset;
  s.alpha_bar_.resize(static_cast<std::size_t>(total_steps) + 1);
  s.beta_.assign(static_cast<std::size_t>(total_steps) + 1, 0.0);
  s.clipped_.assign(static_cast<std::size_t>(total_steps) + 1, false);

  const double f0 = f(0);
  s.alpha_bar_[0] = 1.0;
  for (int t = 1; t < total_steps; ++t) s.alpha_bar_[t] = f(t) / f0;
  // cos(pi/2) is exactly zero; the double evaluation leaves ~1e-33.
  s.alpha_bar_[total_steps] = 0.0;

  for (int t = 1; t <= total_steps; ++t) {
    const double beta = 1.0 - s.alpha_bar_[t] / s.alpha_bar_[t - 1];
    if (beta > kMaxBeta) {
      s.beta_[t] = kMaxBeta;
      s.clipped_[t] = true;
    } else {
      s.beta_[t] = beta;
    }
  }
  return s;
}

/// Decreasing timesteps [tau_nfe, ..., tau_1, 0] with tau_i = round(i*T/nfe),
/// ties rounded up. The reverse loop makes one denoiser call per adjacent pair.
inline std::vector<int> timestep_subsequence(int total_steps, int nfe) {
  if (nfe < 1) throw InvalidArgument("nfe must be >= 1");
  if (nfe > total_steps) {
    throw InvalidArgument("nfe (" + std::to_string(nfe) + ") exceeds T (" +
                          std::to_string(total_steps) + ")");
  }
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(nfe) + 1);
  const long long T = total_steps;
  for (long long i = nfe; i >= 0; --i) {
    // floor(i*T/nfe + 1/2) in integer arithmetic
    out.push_back(static_cast<int>((2 * i * T + nfe) / (2LL * nfe)));
  }
  return out;
}

/// CSV dump with columns t, alpha_bar, alpha, beta. Row t = 0 leaves alpha and
/// beta empty since they are only defined for t >= 1.
inline std::string schedule_csv(const NoiseSchedule& s) {
  std::ostringstream os;
  os << "t,alpha_bar,alpha,beta\n";
  os << "0," << format_double(s.alpha_bar(0)) << ",,\n";
  for (int t = 1; t <= s.total_steps(); ++t) {
    os << t << ',' << format_double(s.alpha_bar(t)) << ',' << format_double(s.alpha(t)) << ','
       << format_double(s.beta(t)) << '\n';
  }
  return os.str();
}

}  // namespace lsdcalib
