#pragma once

// Experiment driver: parsed run configuration, per-sample refinement with any
// method/denoiser pair, and the deterministic report that `lsdcalib
// benchmark` writes.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unistd.h>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsdcalib/denoiser.hpp"
#include "lsdcalib/diffusion.hpp"
#include "lsdcalib/errors.hpp"
#include "lsdcalib/external_denoiser.hpp"
#include "lsdcalib/format.hpp"
#include "lsdcalib/geometry.hpp"
#include "lsdcalib/hash.hpp"
#include "lsdcalib/kitti.hpp"
#include "lsdcalib/metrics.hpp"
#include "lsdcalib/noise_schedule.hpp"

namespace lsdcalib {

// ---------------------------------------------------------------------------
// Run configuration

struct DenoiserSpec {
  enum class Kind { oracle, contractive, noisy, external };
  Kind kind = Kind::oracle;
  double gain = 1.0;
  double sigma_rot_deg = 0.0;
  double sigma_trans_cm = 0.0;
  std::vector<std::string> command;  // external only

  std::string describe() const;
};

struct MethodSpec {
  enum class Kind { single, naive, lsd, multirange };
  Kind kind = Kind::lsd;
  int iterations = 1;               // naive
  std::vector<double> stage_gains;  // multirange with synthetic denoisers

  std::string describe() const;
};

struct DataSource {
  enum class Kind { synth, kitti };
  Kind kind = Kind::synth;
  int n_scenes = 100;
  int n_points = 2000;
  std::string root;
  kitti::SplitPart part = kitti::SplitPart::test;

  std::string describe() const;
};

struct RunConfig {
  DenoiserSpec denoiser;
  MethodSpec method;
  int nfe = 10;
  int total_steps = kDefaultTotalSteps;
  double schedule_offset = kDefaultCosineOffset;
  SamplerMode sampler = SamplerMode::deterministic;
  PerturbationSpec perturbation;  // seed field unused; base seed below
  DataSource data;
  std::uint64_t seed = 0;
  ReportFormat format = ReportFormat::json;
  std::string out_path;  // empty = stdout
  int jobs = 1;
  std::vector<std::string> stage_commands;  // multirange with external stages
  bool fold_p2_offset = false;
  std::size_t max_samples = 0;
  std::chrono::milliseconds reply_timeout{30000};

  void validate() const {
    if (nfe < 1) throw InvalidArgument("--nfe must be >= 1");
    if (total_steps < 1) throw InvalidArgument("--steps must be >= 1");
    if (nfe > total_steps) {
      throw InvalidArgument("--nfe (" + std::to_string(nfe) + ") exceeds --steps (" + std::to_string(total_steps) + ")");
    }
    if (jobs < 1) throw InvalidArgument("--jobs must be >= 1");
    perturbation.validate();
    if (method.kind == MethodSpec::Kind::multirange) {
      if (denoiser.kind == DenoiserSpec::Kind::external) {
        if (stage_commands.empty()) throw InvalidArgument("multirange with an external denoiser needs --stage-cmd");
      } else if (method.stage_gains.empty()) {
        throw InvalidArgument("multirange needs stage gains, e.g. multirange:0.33,0.5,0.6,0.33,1");
      }
    }
  }
};

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = s.find(sep, pos);
    out.emplace_back(s.substr(pos, next == std::string_view::npos ? s.size() - pos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream ss{std::string(s)};
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

inline double number(std::string_view tok, std::string_view what) {
  double v;
  if (!parse_double(tok, v) || !std::isfinite(v)) {
    throw InvalidArgument("bad number '" + std::string(tok) + "' in " + std::string(what));
  }
  return v;
}

inline int integer(std::string_view tok, std::string_view what) {
  const double v = number(tok, what);
  if (v != std::floor(v) || v < 0 || v > 1e9) {
    throw InvalidArgument("bad integer '" + std::string(tok) + "' in " + std::string(what));
  }
  return static_cast<int>(v);
}

inline std::pair<std::string_view, std::string_view> head_tail(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) return {s, {}};
  return {s.substr(0, colon), s.substr(colon + 1)};
}

}  // namespace detail

/// oracle | contractive:<gain> | noisy:<gain>,<sigma_rot_deg>,<sigma_trans_cm> | external:<command>
inline DenoiserSpec parse_denoiser_spec(std::string_view text) {
  const auto [head, tail] = detail::head_tail(text);
  DenoiserSpec d;
  if (head == "oracle" && tail.empty() && text.find(':') == std::string_view::npos) {
    d.kind = DenoiserSpec::Kind::oracle;
  } else if (head == "contractive") {
    d.kind = DenoiserSpec::Kind::contractive;
    d.gain = detail::number(tail, "contractive:<gain>");
  } else if (head == "noisy") {
    const auto parts = detail::split(tail, ',');
    if (parts.size() != 3) throw InvalidArgument("noisy denoiser spec is noisy:<gain>,<sigma_rot_deg>,<sigma_trans_cm>");
    d.kind = DenoiserSpec::Kind::noisy;
    d.gain = detail::number(parts[0], "noisy gain");
    d.sigma_rot_deg = detail::number(parts[1], "noisy sigma_rot_deg");
    d.sigma_trans_cm = detail::number(parts[2], "noisy sigma_trans_cm");
  } else if (head == "external") {
    d.kind = DenoiserSpec::Kind::external;
    d.command = detail::split_words(tail);
    if (d.command.empty()) throw InvalidArgument("external denoiser spec needs a command");
  } else {
    throw InvalidArgument("unknown denoiser spec '" + std::string(text) +
                          "' (oracle, contractive:<g>, noisy:<g>,<deg>,<cm>, external:<cmd>)");
  }
  if (!(d.gain >= 0.0 && d.gain <= 1.0)) throw InvalidArgument("denoiser gain must lie in [0, 1]");
  if (d.sigma_rot_deg < 0.0 || d.sigma_trans_cm < 0.0) throw InvalidArgument("denoiser sigma must be >= 0");
  return d;
}

/// single | naive:<n> | lsd | multirange:<g1>,<g2>,... (or bare multirange with --stage-cmd)
inline MethodSpec parse_method_spec(std::string_view text) {
  const auto [head, tail] = detail::head_tail(text);
  const bool has_colon = text.find(':') != std::string_view::npos;
  MethodSpec m;
  if (head == "single" && !has_colon) {
    m.kind = MethodSpec::Kind::single;
  } else if (head == "lsd" && !has_colon) {
    m.kind = MethodSpec::Kind::lsd;
  } else if (head == "naive") {
    m.kind = MethodSpec::Kind::naive;
    m.iterations = detail::integer(tail, "naive:<n>");
    if (m.iterations < 1) throw InvalidArgument("naive:<n> needs n >= 1");
  } else if (head == "multirange") {
    m.kind = MethodSpec::Kind::multirange;
    if (has_colon) {
      for (const auto& g : detail::split(tail, ',')) {
        const double v = detail::number(g, "multirange gains");
        if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("multirange gains must lie in [0, 1]");
        m.stage_gains.push_back(v);
      }
    }
  } else {
    throw InvalidArgument("unknown method spec '" + std::string(text) +
                          "' (single, naive:<n>, lsd, multirange:<g1>,...)");
  }
  return m;
}

/// synth:<n_scenes>,<n_points> | kitti:<root>[@train|val|test]
inline DataSource parse_data_source(std::string_view text) {
  const auto [head, tail] = detail::head_tail(text);
  DataSource d;
  if (head == "synth") {
    const auto parts = detail::split(tail, ',');
    if (parts.size() != 2) throw InvalidArgument("synthetic data spec is synth:<n_scenes>,<n_points>");
    d.kind = DataSource::Kind::synth;
    d.n_scenes = detail::integer(parts[0], "synth n_scenes");
    d.n_points = detail::integer(parts[1], "synth n_points");
    if (d.n_scenes < 1 || d.n_points < 1) throw InvalidArgument("synth needs n_scenes >= 1 and n_points >= 1");
  } else if (head == "kitti") {
    d.kind = DataSource::Kind::kitti;
    std::string_view root = tail;
    const auto at = root.rfind('@');
    if (at != std::string_view::npos) {
      d.part = kitti::parse_split_part(root.substr(at + 1));
      root = root.substr(0, at);
    }
    if (root.empty()) throw InvalidArgument("kitti data spec needs a root directory");
    d.root = std::string(root);
  } else {
    throw InvalidArgument("unknown data source '" + std::string(text) + "' (synth:<n>,<pts>, kitti:<root>)");
  }
  return d;
}

inline std::string DenoiserSpec::describe() const {
  switch (kind) {
    case Kind::oracle: return "oracle";
    case Kind::contractive: return "contractive:" + format_double(gain);
    case Kind::noisy:
      return "noisy:" + format_double(gain) + "," + format_double(sigma_rot_deg) + "," + format_double(sigma_trans_cm);
    case Kind::external: {
      std::string s = "external:";
      for (std::size_t i = 0; i < command.size(); ++i) s += (i ? " " : "") + command[i];
      return s;
    }
  }
  return "?";
}

inline std::string MethodSpec::describe() const {
  switch (kind) {
    case Kind::single: return "single";
    case Kind::naive: return "naive:" + std::to_string(iterations);
    case Kind::lsd: return "lsd";
    case Kind::multirange: {
      std::string s = "multirange";
      for (std::size_t i = 0; i < stage_gains.size(); ++i) s += (i ? "," : ":") + format_double(stage_gains[i]);
      return s;
    }
  }
  return "?";
}

inline std::string DataSource::describe() const {
  if (kind == Kind::synth) return "synth:" + std::to_string(n_scenes) + "," + std::to_string(n_points);
  const char* parts[] = {"train", "val", "test"};
  return "kitti:" + root + "@" + parts[static_cast<int>(part)];
}

// ---------------------------------------------------------------------------
// Samples

inline constexpr double kSynthNear = 2.0;
inline constexpr double kSynthFar = 50.0;

inline std::string synth_sample_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "synth/%06zu", index);
  return buf;
}

/// Synthetic sample `index`: a random scene and ground truth, perturbed with
/// the per-sample seed. Pure function of (index, n_points, spec, base_seed).
inline kitti::CalibSample make_synthetic_sample(std::size_t index, int n_points, const PerturbationSpec& spec,
                                                std::uint64_t base_seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(base_seed), static_cast<std::uint32_t>(base_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x5ce9eu};
  Rng rng(seq);
  const Intrinsics k = default_synthetic_intrinsics();
  SyntheticScene scene = synth_scene(n_points, kSynthNear, kSynthFar, k, rng);
  kitti::CalibSample s;
  s.sample_id = synth_sample_id(index);
  Condition cond(std::make_shared<const PointCloud>(std::move(scene.cloud)), k);
  cond.sample_id = s.sample_id;
  s.condition = std::move(cond);
  s.t_gt = scene.t_gt;
  PerturbationSpec p = spec;
  p.seed = kitti::sample_seed(base_seed, s.sample_id);
  s.t0 = perturb_extrinsic(s.t_gt, p);
  return s;
}

/// Thread-safe source of indexed samples for either data kind.
class SampleSource {
 public:
  explicit SampleSource(const RunConfig& config) : config_(config) {
    if (config.data.kind == DataSource::Kind::kitti) {
      kitti::LoaderOptions opts;
      opts.fold_p2_offset = config.fold_p2_offset;
      opts.max_samples = config.max_samples;
      PerturbationSpec p = config.perturbation;
      p.seed = config.seed;  // the stream treats this as the base seed
      stream_.emplace(config.data.root, kitti::SplitSpec::standard(), config.data.part, p, opts);
    } else {
      limit_ = static_cast<std::size_t>(config.data.n_scenes);
      if (config.max_samples != 0) limit_ = std::min(limit_, config.max_samples);
    }
  }

  /// Next (index, sample); nullopt when exhausted.
  std::optional<std::pair<std::size_t, kitti::CalibSample>> next() {
    std::size_t index;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (stream_) {
        auto s = stream_->next();
        if (!s) return std::nullopt;
        return std::make_pair(next_index_++, std::move(*s));
      }
      if (next_index_ >= limit_) return std::nullopt;
      index = next_index_++;
    }
    return std::make_pair(index, make_synthetic_sample(index, config_.data.n_points, config_.perturbation, config_.seed));
  }

  std::size_t skipped() const { return stream_ ? stream_->skipped() : 0; }

 private:
  const RunConfig& config_;
  std::optional<kitti::SampleStream> stream_;
  std::size_t limit_ = 0;
  std::size_t next_index_ = 0;
  std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Per-sample refinement

struct RefinementOutcome {
  SE3Transform estimate;
  std::optional<RefinementTrace> trace;  // lsd only
  std::size_t denoise_calls = 0;
  std::size_t prepare_count = 0;
  std::vector<StageRecord> stages;  // multirange only
};

namespace detail {

/// Writes the 16 ground-truth floats to a temp file for `{t_gt}` placeholders.
class GroundTruthFile {
 public:
  GroundTruthFile(const SE3Transform& t_gt, std::size_t index) {
    path_ = std::filesystem::temp_directory_path() /
            ("lsdcalib-gt-" + std::to_string(::getpid()) + "-" + std::to_string(index) + ".txt");
    std::ofstream os(path_);
    if (!os) throw IoError("cannot write " + path_.string());
    const auto v = t_gt.to_row_major();
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << format_double(v[i]);
    os << '\n';
  }
  ~GroundTruthFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  GroundTruthFile(const GroundTruthFile&) = delete;
  GroundTruthFile& operator=(const GroundTruthFile&) = delete;
  std::string path() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> expand_command(const std::vector<std::string>& argv, const std::string& gt_path) {
  std::vector<std::string> out = argv;
  for (auto& a : out) {
    for (auto pos = a.find("{t_gt}"); pos != std::string::npos; pos = a.find("{t_gt}", pos + gt_path.size())) {
      a.replace(pos, 6, gt_path);
    }
  }
  return out;
}

inline bool needs_gt_file(const std::vector<std::string>& argv) {
  return std::any_of(argv.begin(), argv.end(), [](const auto& a) { return a.find("{t_gt}") != std::string::npos; });
}

}  // namespace detail

/// Builds the per-sample backend. gain_override replaces the spec gain for
/// multirange stages.
inline std::unique_ptr<Denoiser> make_denoiser(const RunConfig& config, const kitti::CalibSample& sample,
                                               std::size_t index, std::optional<double> gain_override = {},
                                               std::uint64_t stream = 0) {
  const DenoiserSpec& d = config.denoiser;
  const double gain = gain_override.value_or(d.gain);
  switch (d.kind) {
    case DenoiserSpec::Kind::oracle:
      return gain_override ? std::unique_ptr<Denoiser>(make_contractive(sample.t_gt, gain))
                           : std::unique_ptr<Denoiser>(make_oracle(sample.t_gt));
    case DenoiserSpec::Kind::contractive:
      return make_contractive(sample.t_gt, gain);
    case DenoiserSpec::Kind::noisy: {
      std::uint64_t seed = config.seed + index;
      if (stream != 0) seed = splitmix64(seed ^ splitmix64(stream));
      return make_noisy_oracle(sample.t_gt, gain, deg2rad(d.sigma_rot_deg), d.sigma_trans_cm / 100.0, seed);
    }
    case DenoiserSpec::Kind::external:
      break;
  }
  throw InvalidArgument("external denoisers are built by the caller");
}

/// Runs the configured method on one sample.
inline RefinementOutcome refine_sample(const RunConfig& config, const kitti::CalibSample& sample, std::size_t index) {
  RefinementOutcome out;
  const bool external = config.denoiser.kind == DenoiserSpec::Kind::external;
  ExternalOptions ext_opts;
  ext_opts.reply_timeout = config.reply_timeout;

  std::optional<detail::GroundTruthFile> gt_file;
  const auto spawn = [&](const std::vector<std::string>& argv) {
    std::vector<std::string> cmd = argv;
    if (detail::needs_gt_file(cmd)) {
      if (!gt_file) gt_file.emplace(sample.t_gt, index);
      cmd = detail::expand_command(cmd, gt_file->path());
    }
    return std::unique_ptr<Denoiser>(external_denoiser(cmd, ext_opts));
  };

  if (config.method.kind == MethodSpec::Kind::multirange) {
    std::vector<std::unique_ptr<Denoiser>> owned;
    std::vector<RangeStage> stages;
    if (external) {
      for (std::size_t i = 0; i < config.stage_commands.size(); ++i) {
        owned.push_back(spawn(detail::split_words(config.stage_commands[i])));
        stages.push_back({owned.back().get(), "stage" + std::to_string(i + 1)});
      }
    } else {
      for (std::size_t i = 0; i < config.method.stage_gains.size(); ++i) {
        owned.push_back(make_denoiser(config, sample, index, config.method.stage_gains[i], i + 1));
        stages.push_back({owned.back().get(), "stage" + std::to_string(i + 1)});
      }
    }
    auto res = multi_range_run(stages, sample.condition, sample.t0);
    out.estimate = res.estimate;
    out.stages = std::move(res.stages);
    out.denoise_calls = stages.size();
    out.prepare_count = stages.size();
    return out;
  }

  std::unique_ptr<Denoiser> backend = external ? spawn(config.denoiser.command) : make_denoiser(config, sample, index);
  DenoiserSession session(*backend, sample.condition, sample.t0);
  switch (config.method.kind) {
    case MethodSpec::Kind::single:
      out.estimate = single_shot(session, sample.t0);
      break;
    case MethodSpec::Kind::naive:
      out.estimate = naive_iterate(session, sample.t0, config.method.iterations);
      break;
    case MethodSpec::Kind::lsd: {
      DiffusionConfig dc{build_cosine_schedule(config.total_steps, config.schedule_offset), config.nfe, config.sampler,
                         splitmix64(config.seed + index)};
      auto res = lsd_reverse(session, sample.t0, dc);
      out.estimate = res.estimate;
      out.trace = std::move(res.trace);
      break;
    }
    case MethodSpec::Kind::multirange:
      break;
  }
  out.denoise_calls = session.denoise_count();
  out.prepare_count = session.prepare_count();
  return out;
}

// ---------------------------------------------------------------------------
// Benchmark

struct SampleResult {
  std::size_t index = 0;
  std::string sample_id;
  bool ok = false;
  std::string error;
  SampleError initial;
  SampleError final_error;
  double initial_twist_norm = 0.0;
  double residual_twist_norm = 0.0;
  std::size_t denoise_calls = 0;
  std::size_t prepare_count = 0;
};

struct BenchmarkReport {
  std::string denoiser;
  std::string method;
  std::string data;
  int nfe = 0;
  int total_steps = 0;
  double schedule_offset = 0.0;
  std::string sampler;
  double rot_range_deg = 0.0;
  double trans_range_m = 0.0;
  std::uint64_t seed = 0;

  std::size_t n_failed = 0;
  std::size_t n_skipped = 0;
  std::optional<AggregateReport> metrics;
  std::optional<AggregateReport> initial_metrics;
  double mean_initial_twist_norm = 0.0;
  double mean_residual_twist_norm = 0.0;
  std::size_t denoise_calls = 0;
  std::size_t prepare_count = 0;
  std::vector<SampleResult> samples;  // ordered by index
};

inline SampleResult evaluate_sample(const RunConfig& config, const kitti::CalibSample& sample, std::size_t index) {
  SampleResult r;
  r.index = index;
  r.sample_id = sample.sample_id;
  r.initial = sample_error(transform_error(sample.t0, sample.t_gt));
  try {
    r.initial_twist_norm = log_map(compose(sample.t_gt, invert(sample.t0))).norm();
    const RefinementOutcome o = refine_sample(config, sample, index);
    r.final_error = sample_error(transform_error(o.estimate, sample.t_gt));
    r.residual_twist_norm = log_map(compose(sample.t_gt, invert(o.estimate))).norm();
    r.denoise_calls = o.denoise_calls;
    r.prepare_count = o.prepare_count;
    r.ok = true;
  } catch (const Error& e) {
    r.error = e.kind() + ": " + e.what();
  } catch (const std::exception& e) {
    r.error = std::string("error: ") + e.what();
  }
  return r;
}

/// Runs every sample, possibly on several threads. The report depends only
/// on the configuration, never on the worker count.
inline BenchmarkReport run_benchmark(const RunConfig& config) {
  config.validate();
  SampleSource source(config);
  std::vector<SampleResult> results;
  std::mutex results_mutex;
  std::exception_ptr fatal;

  const auto worker = [&] {
    try {
      while (auto item = source.next()) {
        SampleResult r = evaluate_sample(config, item->second, item->first);
        std::lock_guard<std::mutex> lock(results_mutex);
        results.push_back(std::move(r));
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(results_mutex);
      if (!fatal) fatal = std::current_exception();
    }
  };
  if (config.jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < config.jobs; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) { return a.index < b.index; });

  BenchmarkReport rep;
  rep.denoiser = config.denoiser.describe();
  rep.method = config.method.describe();
  rep.data = config.data.describe();
  rep.nfe = config.nfe;
  rep.total_steps = config.total_steps;
  rep.schedule_offset = config.schedule_offset;
  rep.sampler = to_string(config.sampler);
  rep.rot_range_deg = config.perturbation.rot_range_deg;
  rep.trans_range_m = config.perturbation.trans_range_m;
  rep.seed = config.seed;
  rep.n_skipped = source.skipped();

  std::vector<SampleError> finals, initials;
  double init_sum = 0.0, resid_sum = 0.0;
  for (const auto& r : results) {
    if (!r.ok) {
      ++rep.n_failed;
      continue;
    }
    finals.push_back(r.final_error);
    initials.push_back(r.initial);
    init_sum += r.initial_twist_norm;
    resid_sum += r.residual_twist_norm;
    rep.denoise_calls += r.denoise_calls;
    rep.prepare_count += r.prepare_count;
  }
  if (!finals.empty()) {
    rep.metrics = aggregate(finals);
    rep.initial_metrics = aggregate(initials);
    rep.mean_initial_twist_norm = init_sum / static_cast<double>(finals.size());
    rep.mean_residual_twist_norm = resid_sum / static_cast<double>(finals.size());
  }
  rep.samples = std::move(results);
  return rep;
}

inline std::string render_benchmark(const BenchmarkReport& rep, ReportFormat format) {
  switch (format) {
    case ReportFormat::json: {
      nlohmann::ordered_json j;
      j["config"] = {{"denoiser", rep.denoiser},       {"method", rep.method},
                     {"data", rep.data},               {"nfe", rep.nfe},
                     {"steps", rep.total_steps},       {"schedule_offset", rep.schedule_offset},
                     {"sampler", rep.sampler},         {"rot_range_deg", rep.rot_range_deg},
                     {"trans_range_m", rep.trans_range_m}, {"seed", rep.seed}};
      j["metrics"] = rep.metrics ? to_json(*rep.metrics) : nlohmann::ordered_json(nullptr);
      j["initial_metrics"] = rep.initial_metrics ? to_json(*rep.initial_metrics) : nlohmann::ordered_json(nullptr);
      j["twist_norm"] = {{"mean_initial", rep.mean_initial_twist_norm}, {"mean_residual", rep.mean_residual_twist_norm}};
      j["calls"] = {{"denoise", rep.denoise_calls}, {"prepare", rep.prepare_count}};
      j["n_failed"] = rep.n_failed;
      j["n_skipped"] = rep.n_skipped;
      nlohmann::ordered_json failures = nlohmann::ordered_json::array();
      for (const auto& s : rep.samples) {
        if (!s.ok) failures.push_back({{"sample_id", s.sample_id}, {"error", s.error}});
      }
      j["failures"] = failures;
      return j.dump(2) + "\n";
    }
    case ReportFormat::csv: {
      std::string out = std::string(kCsvHeader) +
                        ",n_failed,mean_initial_twist_norm,mean_residual_twist_norm,denoise_calls,prepare_count\n";
      out += rep.metrics ? csv_row(*rep.metrics) : std::string("0,,,,,,,,,,");
      out += "," + std::to_string(rep.n_failed) + "," + format_double(rep.mean_initial_twist_norm) + "," +
             format_double(rep.mean_residual_twist_norm) + "," + std::to_string(rep.denoise_calls) + "," +
             std::to_string(rep.prepare_count) + "\n";
      return out;
    }
    case ReportFormat::markdown: {
      std::string out;
      if (rep.initial_metrics) out += markdown_table(*rep.initial_metrics, "initial");
      if (rep.metrics) {
        std::string t = markdown_table(*rep.metrics, rep.denoiser + " + " + rep.method);
        // Drop the header of the second table so both rows share one table.
        out += rep.initial_metrics ? t.substr(t.find('\n', t.find('\n') + 1) + 1) : t;
      }
      out += "\nsamples: " + std::to_string(rep.metrics ? rep.metrics->n_samples : 0) +
             ", failed: " + std::to_string(rep.n_failed) + ", data: " + rep.data + ", nfe: " + std::to_string(rep.nfe) +
             ", seed: " + std::to_string(rep.seed) + "\n";
      return out;
    }
  }
  throw InvalidArgument("unknown report format");
}

inline std::string per_sample_csv(const BenchmarkReport& rep) {
  std::string out =
      "index,sample_id,ok,roll_deg,pitch_deg,yaw_deg,rot_rmse_deg,x_cm,y_cm,z_cm,trans_rmse_cm,"
      "init_rot_rmse_deg,init_trans_rmse_cm,initial_twist_norm,residual_twist_norm,error\n";
  for (const auto& s : rep.samples) {
    const auto& e = s.final_error;
    out += std::to_string(s.index) + "," + s.sample_id + "," + (s.ok ? "1" : "0");
    for (double v : {e.roll, e.pitch, e.yaw, e.rot_rmse, e.tx, e.ty, e.tz, e.trans_rmse, s.initial.rot_rmse,
                     s.initial.trans_rmse, s.initial_twist_norm, s.residual_twist_norm}) {
      out += "," + format_double(v);
    }
    std::string err = s.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out += "," + err + "\n";
  }
  return out;
}

}  // namespace lsdcalib
