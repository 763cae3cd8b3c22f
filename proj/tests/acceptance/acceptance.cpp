// Acceptance suite: prints one [PASS]/[FAIL] line per criterion and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "kitti_fixture.hpp"
#include "lsdcalib/lsdcalib.hpp"
#include "test_support.hpp"

namespace {

using namespace lsdcalib;
using lsdcalib::testing::pose_gap;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

int hardware_jobs() { return static_cast<int>(std::max(1u, std::min(8u, std::thread::hardware_concurrency()))); }

// 1. log(exp(xi)) == xi for 1e5 random twists with |omega| <= pi - 0.1.
Outcome se3_round_trip() {
  std::mt19937_64 rng(20240601);
  const int n = 100000;
  std::vector<Twist6> twists;
  twists.reserve(n);
  for (int i = 0; i < n; ++i) twists.push_back(testing::random_twist(rng, std::numbers::pi - 0.1, 2.0));
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (const auto& xi : twists) worst = std::max(worst, (log_map(exp_map(xi)) - xi).vector().cwiseAbs().maxCoeff());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-9 && secs < 10.0, "max |log(exp(xi)) - xi| = " + fmt(worst) + " (< 1e-9), " + fmt(secs) +
                                           " s (< 10 s) over 1e5 twists"};
}

// 2. Boundary values and the midpoint against a 25-digit evaluation.
Outcome schedule_correctness() {
  constexpr double kAlphaBar500 = 0.4938435904406377133165527;
  const NoiseSchedule s = build_cosine_schedule(1000, 0.008);
  const double err = std::abs(s.alpha_bar(500) - kAlphaBar500);
  const bool ok = s.alpha_bar(0) == 1.0 && s.alpha_bar(1000) == 0.0 && err < 1e-12;
  return {ok, "alpha_bar(0) = " + format_double(s.alpha_bar(0)) + ", alpha_bar(T) = " +
                  format_double(s.alpha_bar(1000)) + ", |alpha_bar(500) - ref| = " + fmt(err) + " (< 1e-12)"};
}

std::vector<kitti::CalibSample> synthetic_samples(std::size_t n, std::uint64_t seed) {
  std::vector<kitti::CalibSample> out;
  out.reserve(n);
  PerturbationSpec p{15.0, 0.15, 0};
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_synthetic_sample(i, 20, p, seed));
  return out;
}

// 3. The oracle denoiser recovers T_gt through LSD and through one naive step.
Outcome oracle_exactness() {
  const auto samples = synthetic_samples(1000, 3);
  DiffusionConfig cfg;  // deterministic, NFE 10, T 1000
  double lsd_rot = 0, lsd_trans = 0, naive_rot = 0, naive_trans = 0;
  for (const auto& s : samples) {
    auto oracle = make_oracle(s.t_gt);
    auto session = open_session(*oracle, s.condition, s.t0);
    const auto g1 = pose_gap(lsd_reverse(session, s.t0, cfg).estimate, s.t_gt);
    auto session2 = open_session(*oracle, s.condition, s.t0);
    const auto g2 = pose_gap(naive_iterate(session2, s.t0, 1), s.t_gt);
    lsd_rot = std::max(lsd_rot, g1.rot_rad);
    lsd_trans = std::max(lsd_trans, g1.trans_m);
    naive_rot = std::max(naive_rot, g2.rot_rad);
    naive_trans = std::max(naive_trans, g2.trans_m);
  }
  const bool ok = lsd_rot < 1e-9 && lsd_trans < 1e-9 && naive_rot < 1e-9 && naive_trans < 1e-9;
  return {ok, "1000 samples: lsd max err " + fmt(lsd_rot) + " rad / " + fmt(lsd_trans) + " m, naive(1) " +
                  fmt(naive_rot) + " rad / " + fmt(naive_trans) + " m (< 1e-9)"};
}

// 4. Contractive gain 0.5 leaves 0.5^n of the initial error twist.
Outcome contraction_law() {
  const auto samples = synthetic_samples(200, 4);
  double worst = 0.0;
  for (const auto& s : samples) {
    auto backend = make_contractive(s.t_gt, 0.5);
    const double init = log_map(compose(s.t_gt, invert(s.t0))).vector().norm();
    for (int n = 1; n <= 6; ++n) {
      auto session = open_session(*backend, s.condition, s.t0);
      const SE3Transform tn = naive_iterate(session, s.t0, n);
      const double res = log_map(compose(s.t_gt, invert(tn))).vector().norm();
      worst = std::max(worst, std::abs(res / (std::pow(0.5, n) * init) - 1.0));
    }
  }
  return {worst < 1e-9, "200 samples x n=1..6: max relative deviation from 0.5^n = " + fmt(worst) + " (< 1e-9)"};
}

bool same_trajectory(const LsdResult& a, const LsdResult& b) {
  if (a.trace.steps.size() != b.trace.steps.size()) return false;
  for (std::size_t i = 0; i < a.trace.steps.size(); ++i) {
    const auto &x = a.trace.steps[i], &y = b.trace.steps[i];
    if (x.t != y.t || x.t_next != y.t_next || !(x.x_t == y.x_t) || !(x.x0_hat == y.x0_hat) ||
        !(x.x_next == y.x_next) || x.estimate.matrix() != y.estimate.matrix()) {
      return false;
    }
  }
  return a.estimate.matrix() == b.estimate.matrix();
}

// 5. Shared session vs per-call reopening: identical trajectories, 1 vs 10 prepares.
Outcome buffering() {
  const auto samples = synthetic_samples(20, 5);
  struct Backend {
    std::string name;
    std::function<std::unique_ptr<Denoiser>(const kitti::CalibSample&, std::size_t)> make;
  };
  std::vector<Backend> backends = {
      {"oracle", [](const auto& s, std::size_t) { return std::unique_ptr<Denoiser>(make_oracle(s.t_gt)); }},
      {"contractive", [](const auto& s, std::size_t) { return std::unique_ptr<Denoiser>(make_contractive(s.t_gt, 0.5)); }},
      {"noisy", [](const auto& s, std::size_t i) {
         return std::unique_ptr<Denoiser>(make_noisy_oracle(s.t_gt, 0.8, deg2rad(1.0), 0.02, 100 + i));
       }},
      {"voxel-index", [](const auto& s, std::size_t) {
         return std::unique_ptr<Denoiser>(std::make_unique<VoxelIndexDenoiser>(s.t_gt, 0.7, 0.5));
       }},
  };
#ifdef FAKE_DENOISER_PATH
  const auto gt_dir = std::filesystem::temp_directory_path() / ("lsdcalib-acc-" + std::to_string(::getpid()));
  std::filesystem::create_directories(gt_dir);
  backends.push_back({"external", [&](const auto& s, std::size_t i) {
                        const auto path = gt_dir / (std::to_string(i) + ".txt");
                        std::ofstream os(path);
                        const auto v = s.t_gt.to_row_major();
                        for (std::size_t k = 0; k < 16; ++k) os << (k ? " " : "") << format_double(v[k]);
                        os.close();
                        return std::unique_ptr<Denoiser>(
                            external_denoiser({FAKE_DENOISER_PATH, "contractive", "0.5", path.string()}));
                      }});
#endif
  DiffusionConfig cfg;
  bool ok = true;
  std::string detail;
  for (const auto& b : backends) {
    bool same = true, counts = true;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      auto shared_backend = b.make(s, i);
      auto fresh_backend = b.make(s, i);
      auto session = open_session(*shared_backend, s.condition, s.t0);
      const LsdResult shared = lsd_reverse(session, s.t0, cfg);
      const LsdResult fresh = lsd_reverse_unbuffered(*fresh_backend, s.condition, s.t0, cfg);
      same = same && same_trajectory(shared, fresh);
      counts = counts && shared.prepare_count == 1 && fresh.prepare_count == 10;
    }
    ok = ok && same && counts;
    detail += (detail.empty() ? "" : ", ") + b.name + (same && counts ? " ok" : " MISMATCH");
  }
#ifdef FAKE_DENOISER_PATH
  std::filesystem::remove_all(gt_dir);
#endif
  return {ok, "identical trajectories, prepares 1 vs 10: " + detail};
}

RunConfig noisy_config(const std::string& method, std::uint64_t seed) {
  RunConfig c;
  c.denoiser = parse_denoiser_spec("noisy:0.8,1,2");
  c.method = parse_method_spec(method);
  c.data = parse_data_source("synth:500,20");
  c.seed = seed;
  c.jobs = hardware_jobs();
  return c;
}

// 6. With a noisy denoiser, LSD beats a single application in every seed.
Outcome directional_benefit() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const auto lsd = run_benchmark(noisy_config("lsd", seed));
    const auto single = run_benchmark(noisy_config("single", seed));
    if (!lsd.metrics || !single.metrics) return {false, "benchmark produced no metrics"};
    const bool better = lsd.metrics->rot_rmse < single.metrics->rot_rmse &&
                        lsd.metrics->trans_rmse < single.metrics->trans_rmse;
    ok = ok && better;
    if (seed == 1) {
      detail = "seed 1: lsd " + fmt(lsd.metrics->rot_rmse) + " deg / " + fmt(lsd.metrics->trans_rmse) +
               " cm vs single " + fmt(single.metrics->rot_rmse) + " deg / " + fmt(single.metrics->trans_rmse) + " cm";
    }
    if (!better) detail += "; seed " + std::to_string(seed) + " not better";
  }
  return {ok, "5 seeds x 500 samples, " + detail};
}

// Independent Z-Y-X extraction for the brute-force count.
std::pair<double, double> brute_rmse(const SE3Transform& dt) {
  const Matrix3 r = dt.rotation();
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  const double roll = std::atan2(r(2, 1), r(2, 2)) * 180.0 / std::numbers::pi;
  const double yaw = std::atan2(r(1, 0), r(0, 0)) * 180.0 / std::numbers::pi;
  const Vector3 t = dt.translation() * 100.0;
  return {std::sqrt(roll * roll + pitch * pitch + yaw * yaw), t.norm()};
}

// 7. Rates vs a brute-force count, monotonicity, and the 3-4-5 fixture.
Outcome metrics_oracle() {
  bool ok = true;
  std::string detail;
  for (const char* denoiser : {"noisy:0.8,1,2", "contractive:0.85"}) {
    RunConfig c;
    c.denoiser = parse_denoiser_spec(denoiser);
    c.method = parse_method_spec("single");
    c.data = parse_data_source("synth:1000,20");
    c.seed = 7;
    c.jobs = hardware_jobs();
    SampleSource source(c);
    std::vector<SampleError> errors;
    std::size_t n3 = 0, n5 = 0;
    while (auto item = source.next()) {
      const auto& s = item->second;
      const RefinementOutcome o = refine_sample(c, s, item->first);
      const SE3Transform dt = compose(o.estimate, invert(s.t_gt));
      errors.push_back(sample_error(transform_error(o.estimate, s.t_gt)));
      const auto [rot, trans] = brute_rmse(dt);
      n3 += (rot < 3.0 && trans < 3.0);
      n5 += (rot < 5.0 && trans < 5.0);
    }
    const AggregateReport r = aggregate(errors);
    const bool match = r.rate_3deg3cm == static_cast<double>(n3) / 1000.0 &&
                       r.rate_5deg5cm == static_cast<double>(n5) / 1000.0 && r.rate_3deg3cm <= r.rate_5deg5cm;
    ok = ok && match;
    detail += std::string(detail.empty() ? "" : ", ") + denoiser + " rates " + fmt(r.rate_3deg3cm) + "/" +
              fmt(r.rate_5deg5cm) + " vs brute " + std::to_string(n3) + "/" + std::to_string(n5);
  }
  const SampleError e = sample_error(SE3Transform::from_rt(Matrix3::Identity(), Vector3(0.03, 0.04, 0.0)));
  ok = ok && e.trans_rmse == 5.0;
  return {ok, detail + "; 3-4-5 fixture trans_rmse = " + format_double(e.trans_rmse) + " cm"};
}

// 8. 1e5 perturbation draws stay in range and are centred.
Outcome perturbation_sampler() {
  const PerturbationSpec spec{15.0, 0.15, 0};
  Rng rng(8);
  const int n = 100000;
  std::size_t out_of_range = 0;
  double sums[6] = {0, 0, 0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const PerturbationDraw d = draw_perturbation(spec, rng);
    const double v[6] = {d.angles_deg.roll, d.angles_deg.pitch, d.angles_deg.yaw,
                         d.translation_m.x(), d.translation_m.y(), d.translation_m.z()};
    for (int k = 0; k < 6; ++k) {
      const double range = k < 3 ? 15.0 : 0.15;
      if (std::abs(v[k]) > range) ++out_of_range;
      sums[k] += v[k];
    }
  }
  bool centred = true;
  double worst_ratio = 0.0;
  for (int k = 0; k < 6; ++k) {
    const double range = k < 3 ? 15.0 : 0.15;
    const double bound = 3.0 * (range / std::sqrt(3.0)) / std::sqrt(static_cast<double>(n));
    const double mean = sums[k] / n;
    worst_ratio = std::max(worst_ratio, std::abs(mean) / bound);
    centred = centred && std::abs(mean) <= bound;
  }
  return {out_of_range == 0 && centred, std::to_string(out_of_range) +
                                            " out-of-range values; worst |mean| / bound = " + fmt(worst_ratio)};
}

std::string run_cli(const std::string& args, const std::filesystem::path& out) {
  const std::string cmd = std::string(LSDCALIB_CLI_PATH) + " " + args + " --out " + out.string() + " 2>/dev/null";
  if (std::system(cmd.c_str()) != 0) return {};
  return testing::read_text(out.string());
}

// 9. Reports are byte-identical across runs and worker counts.
Outcome determinism() {
  RunConfig c = noisy_config("lsd", 9);
  c.data = parse_data_source("synth:200,50");
  c.jobs = 1;
  const auto a = run_benchmark(c);
  c.jobs = 4;
  const auto b = run_benchmark(c);
  bool ok = true;
  for (auto f : {ReportFormat::json, ReportFormat::csv, ReportFormat::markdown}) {
    ok = ok && render_benchmark(a, f) == render_benchmark(b, f);
  }
  ok = ok && per_sample_csv(a) == per_sample_csv(b);
  std::string detail = "library: jobs 1 vs 4 " + std::string(ok ? "identical" : "DIFFER");

  const auto dir = std::filesystem::temp_directory_path() / ("lsdcalib-det-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const std::string args = "benchmark --denoiser noisy:0.8,1,2 --method lsd --data synth:100,50 --seed 9";
  const std::string r1 = run_cli(args + " --jobs 1", dir / "r1.json");
  const std::string r2 = run_cli(args + " --jobs 4", dir / "r2.json");
  const std::string r3 = run_cli(args + " --jobs 4", dir / "r3.json");
  std::filesystem::remove_all(dir);
  const bool cli_ok = !r1.empty() && r1 == r2 && r2 == r3;
  detail += "; cli: 3 runs (jobs 1, 4, 4) " + std::string(cli_ok ? "byte-identical" : "DIFFER or failed");
  return {ok && cli_ok, detail};
}

bool check_kitti_root(const std::filesystem::path& root, std::string& detail) {
  namespace fs = std::filesystem;
  bool ok = true;
  std::size_t calibs = 0, scans = 0;
  for (const auto& seq : fs::directory_iterator(root / "sequences")) {
    const auto calib_path = seq.path() / "calib.txt";
    if (fs::is_regular_file(calib_path)) {
      const auto a = kitti::parse_kitti_calib(kitti::read_file_text(calib_path));
      const auto b = kitti::parse_kitti_calib(kitti::serialize_kitti_calib(a));
      for (std::size_t i = 0; i < a.entries.size(); ++i) {
        ok = ok && a.entries[i].key == b.entries[i].key && a.entries[i].values.size() == b.entries[i].values.size();
        for (std::size_t k = 0; ok && k < a.entries[i].values.size(); ++k) {
          ok = std::memcmp(&a.entries[i].values[k], &b.entries[i].values[k], sizeof(double)) == 0;
        }
      }
      ++calibs;
    }
    const auto velo = seq.path() / "velodyne";
    if (!fs::is_directory(velo)) continue;
    std::size_t per_seq = 0;
    for (const auto& bin : fs::directory_iterator(velo)) {
      if (per_seq++ >= 3) break;  // a few scans per sequence is enough
      const auto scan = kitti::read_velodyne_file(bin.path());
      ok = ok && scan.cloud.size() + scan.dropped == fs::file_size(bin.path()) / 16;
      ++scans;
    }
  }
  kitti::SampleStream stream(root, kitti::SplitSpec::standard(), kitti::SplitPart::test, PerturbationSpec{});
  std::set<std::string> visited;
  std::size_t n = 0;
  while (auto s = stream.next()) {
    visited.insert(s->sample_id.substr(0, s->sample_id.find('/')));
    if (++n >= 50 && visited.size() == stream.visited_sequences().size()) break;
  }
  const std::set<std::string> expected = {"13", "14", "15", "20", "21"};
  const std::vector<std::string> indexed = stream.visited_sequences();
  ok = ok && visited == expected && std::set<std::string>(indexed.begin(), indexed.end()) == expected;
  detail += std::to_string(calibs) + " calib round trips, " + std::to_string(scans) + " scans, test split visits {";
  for (const auto& v : visited) detail += (v == *visited.begin() ? "" : ",") + v;
  detail += "}";
  return ok;
}

// 10. KITTI ingestion on fixture files (and a real root when one is given).
Outcome kitti_ingestion() {
  testing::KittiFixture fx(3, 64);
  std::string detail = "fixture: ";
  bool ok = check_kitti_root(fx.root(), detail);
  if (const char* real = std::getenv("LSDCALIB_KITTI_ROOT")) {
    detail += "; real root: ";
    try {
      ok = check_kitti_root(real, detail) && ok;
    } catch (const std::exception& e) {
      ok = false;
      detail += std::string("error: ") + e.what();
    }
  }
  return {ok, detail};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "SE(3) round-trip", se3_round_trip},
      {2, "schedule correctness", schedule_correctness},
      {3, "oracle exactness", oracle_exactness},
      {4, "contraction law", contraction_law},
      {5, "buffering", buffering},
      {6, "directional LSD benefit", directional_benefit},
      {7, "metrics oracle", metrics_oracle},
      {8, "perturbation sampler", perturbation_sampler},
      {9, "determinism", determinism},
      {10, "KITTI ingestion", kitti_ingestion},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << c.id << ". " << c.title << ": " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all 10 criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
