#pragma once

// Denoiser abstraction and in-process backends.
//
// A denoiser maps (condition, current extrinsic) to a left correction twist
// dxi such that exp(dxi) * T_noisy estimates T_gt. Condition-dependent work
// (feature caches, spatial indices, remote model state) happens once per
// session in prepare(); every refinement step then calls denoise() against
// the prepared state.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>

#include "lsdcalib/errors.hpp"
#include "lsdcalib/geometry.hpp"
#include "lsdcalib/hash.hpp"
#include "lsdcalib/se3.hpp"

namespace lsdcalib {

/// The conditioning inputs [image, cloud, K] of one sample.
class Condition {
 public:
  Condition() : cloud_(std::make_shared<const PointCloud>()) { refresh(); }

  Condition(std::shared_ptr<const PointCloud> cloud, Intrinsics intrinsics,
            std::optional<std::string> image_ref = std::nullopt)
      : cloud_(std::move(cloud)), intrinsics_(intrinsics), image_ref_(std::move(image_ref)) {
    if (!cloud_) throw InvalidArgument("condition needs a point cloud");
    cloud_->validate();
    intrinsics_.validate();
    refresh();
  }

  const PointCloud& cloud() const { return *cloud_; }
  std::shared_ptr<const PointCloud> cloud_ptr() const { return cloud_; }
  const Intrinsics& intrinsics() const { return intrinsics_; }
  const std::optional<std::string>& image_ref() const { return image_ref_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  // Metadata forwarded to external backends; not part of the fingerprint.
  std::string sample_id;
  std::string cloud_path;

 private:
  void refresh() {
    Fnv1a64 h;
    h.value(static_cast<std::uint64_t>(cloud_->points.size()));
    for (const auto& p : cloud_->points) h.value(p.x()).value(p.y()).value(p.z());
    h.value(static_cast<std::uint64_t>(cloud_->intensity.size()));
    for (double i : cloud_->intensity) h.value(i);
    h.value(intrinsics_.fx).value(intrinsics_.fy).value(intrinsics_.cx).value(intrinsics_.cy);
    h.value(intrinsics_.skew).value(intrinsics_.width).value(intrinsics_.height);
    h.value(static_cast<std::uint8_t>(image_ref_.has_value()));
    if (image_ref_) h.str(*image_ref_);
    fingerprint_ = h.digest();
  }

  std::shared_ptr<const PointCloud> cloud_;
  Intrinsics intrinsics_;
  std::optional<std::string> image_ref_;
  std::uint64_t fingerprint_ = 0;
};

/// Backend-owned, condition-dependent state built once per session.
class PreparedState {
 public:
  virtual ~PreparedState() = default;
};

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual std::string name() const = 0;

  /// Condition-dependent precomputation. t0 is the initial extrinsic of the
  /// run, passed through for backends that want it.
  virtual std::unique_ptr<PreparedState> prepare(const Condition& condition, const SE3Transform& t0) = 0;

  virtual Twist6 denoise(PreparedState& state, const SE3Transform& t_noisy) = 0;

  /// Called when a session closes. Must not throw.
  virtual void finish(PreparedState& /*state*/) noexcept {}
};

/// One prepared condition bound to one backend. Single owner; not copyable.
class DenoiserSession {
 public:
  DenoiserSession(Denoiser& backend, Condition condition, const SE3Transform& t0)
      : backend_(&backend), condition_(std::move(condition)) {
    try {
      state_ = backend_->prepare(condition_, t0);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw SessionOpenError(backend_->name() + ": " + e.what());
    }
    if (!state_) throw SessionOpenError(backend_->name() + ": prepare returned no state");
    prepare_count_ = 1;
  }

  DenoiserSession(const DenoiserSession&) = delete;
  DenoiserSession& operator=(const DenoiserSession&) = delete;
  DenoiserSession(DenoiserSession&& other) noexcept { *this = std::move(other); }
  DenoiserSession& operator=(DenoiserSession&& other) noexcept {
    if (this != &other) {
      close();
      backend_ = std::exchange(other.backend_, nullptr);
      condition_ = std::move(other.condition_);
      state_ = std::move(other.state_);
      prepare_count_ = other.prepare_count_;
      denoise_count_ = other.denoise_count_;
    }
    return *this;
  }
  ~DenoiserSession() { close(); }

  Twist6 denoise(const SE3Transform& t_noisy) {
    if (!state_) throw InvalidArgument("denoise on a closed session");
    Twist6 out = backend_->denoise(*state_, t_noisy);
    ++denoise_count_;
    if (!out.all_finite()) throw ProtocolError(backend_->name() + ": non-finite correction twist");
    return out;
  }

  void close() noexcept {
    if (state_ && backend_) backend_->finish(*state_);
    state_.reset();
  }

  bool is_open() const { return state_ != nullptr; }
  const Condition& condition() const { return condition_; }
  Denoiser& backend() const { return *backend_; }
  std::size_t prepare_count() const { return prepare_count_; }
  std::size_t denoise_count() const { return denoise_count_; }
  PreparedState* state() const { return state_.get(); }

 private:
  Denoiser* backend_ = nullptr;
  Condition condition_;
  std::unique_ptr<PreparedState> state_;
  std::size_t prepare_count_ = 0;
  std::size_t denoise_count_ = 0;
};

inline DenoiserSession open_session(Denoiser& backend, Condition condition,
                                    const SE3Transform& t0 = SE3Transform::identity()) {
  return DenoiserSession(backend, std::move(condition), t0);
}

// ---------------------------------------------------------------------------
// In-process backends

namespace detail {
struct EmptyState final : PreparedState {};
}  // namespace detail

/// gain * log(T_gt * T_noisy^-1) plus optional isotropic Gaussian noise on the
/// rotation (radians) and translation (meters) blocks. gain = 1 and zero sigma
/// is the exact oracle.
class SyntheticDenoiser : public Denoiser {
 public:
  SyntheticDenoiser(const SE3Transform& t_gt, double gain, double sigma_rot, double sigma_trans,
                    std::uint64_t seed)
      : t_gt_(t_gt), gain_(gain), sigma_rot_(sigma_rot), sigma_trans_(sigma_trans), rng_(seed) {
    if (!(gain >= 0.0 && gain <= 1.0)) throw InvalidArgument("denoiser gain must lie in [0, 1]");
    if (!(sigma_rot >= 0.0) || !(sigma_trans >= 0.0)) {
      throw InvalidArgument("denoiser noise sigma must be >= 0");
    }
  }

  std::string name() const override {
    if (sigma_rot_ > 0.0 || sigma_trans_ > 0.0) return "noisy-oracle";
    return gain_ == 1.0 ? "oracle" : "contractive";
  }

  std::unique_ptr<PreparedState> prepare(const Condition&, const SE3Transform&) override {
    return std::make_unique<detail::EmptyState>();
  }

  Twist6 denoise(PreparedState&, const SE3Transform& t_noisy) override { return correction(t_noisy); }

  double gain() const { return gain_; }
  const SE3Transform& ground_truth() const { return t_gt_; }

 protected:
  Twist6 correction(const SE3Transform& t_noisy) {
    Twist6 out = log_map(compose(t_gt_, invert(t_noisy)));
    if (gain_ != 1.0) out = gain_ * out;
    if (sigma_rot_ > 0.0 || sigma_trans_ > 0.0) {
      Vector6 n;
      for (int i = 0; i < 6; ++i) n[i] = normal_(rng_) * (i < 3 ? sigma_rot_ : sigma_trans_);
      out = out + Twist6(n);
    }
    return out;
  }

 private:
  SE3Transform t_gt_;
  double gain_;
  double sigma_rot_;
  double sigma_trans_;
  Rng rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

inline std::unique_ptr<SyntheticDenoiser> make_oracle(const SE3Transform& t_gt) {
  return std::make_unique<SyntheticDenoiser>(t_gt, 1.0, 0.0, 0.0, 0);
}

inline std::unique_ptr<SyntheticDenoiser> make_contractive(const SE3Transform& t_gt, double gain) {
  return std::make_unique<SyntheticDenoiser>(t_gt, gain, 0.0, 0.0, 0);
}

/// sigma_rot in radians, sigma_trans in meters.
inline std::unique_ptr<SyntheticDenoiser> make_noisy_oracle(const SE3Transform& t_gt, double gain,
                                                            double sigma_rot, double sigma_trans,
                                                            std::uint64_t seed) {
  return std::make_unique<SyntheticDenoiser>(t_gt, gain, sigma_rot, sigma_trans, seed);
}

/// Oracle whose prepare() builds a voxel hash of the cloud, standing in for a
/// network that caches condition features. denoise() consults the index so
/// that running without a prepared session would be visibly wrong.
class VoxelIndexDenoiser : public SyntheticDenoiser {
 public:
  struct Index final : PreparedState {
    double voxel_size = 0.0;
    std::unordered_map<std::uint64_t, std::uint32_t> cells;  // voxel key -> point count
    std::size_t lookups = 0;
  };

  VoxelIndexDenoiser(const SE3Transform& t_gt, double gain, double voxel_size)
      : SyntheticDenoiser(t_gt, gain, 0.0, 0.0, 0), voxel_size_(voxel_size) {
    if (!(voxel_size > 0.0)) throw InvalidArgument("voxel size must be > 0");
  }

  std::string name() const override { return "voxel-index"; }

  std::unique_ptr<PreparedState> prepare(const Condition& condition, const SE3Transform&) override {
    auto index = std::make_unique<Index>();
    index->voxel_size = voxel_size_;
    for (const auto& p : condition.cloud().points) ++index->cells[key(p)];
    ++builds_;
    return index;
  }

  Twist6 denoise(PreparedState& state, const SE3Transform& t_noisy) override {
    auto& index = dynamic_cast<Index&>(state);
    ++index.lookups;
    if (index.voxel_size != voxel_size_) throw InvalidArgument("voxel index built for another backend");
    return correction(t_noisy);
  }

  /// Number of index builds over the backend's lifetime.
  std::size_t builds() const { return builds_; }

 private:
  std::uint64_t key(const Vector3& p) const {
    const auto q = [&](double c) { return static_cast<std::int64_t>(std::floor(c / voxel_size_)); };
    return Fnv1a64().value(q(p.x())).value(q(p.y())).value(q(p.z())).digest();
  }

  double voxel_size_;
  std::size_t builds_ = 0;
};

}  // namespace lsdcalib
