// lsdcalib command-line front end: benchmark, calibrate, schedule.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lsdcalib/lsdcalib.hpp"

namespace {

using namespace lsdcalib;

constexpr const char* kSeedEnv = "LSDCALIB_SEED";

struct RawOptions {
  std::string denoiser = "oracle";
  std::string method = "lsd";
  std::string data = "synth:100,2000";
  std::string sampler = "deterministic";
  std::string format = "json";
  double rot_range_deg = 15.0;
  double trans_range_cm = 15.0;
  std::uint64_t seed = 0;
  int timeout_ms = 30000;
};

void add_run_options(CLI::App& cmd, RawOptions& raw, RunConfig& cfg) {
  cmd.add_option("--denoiser", raw.denoiser, "oracle | contractive:<g> | noisy:<g>,<deg>,<cm> | external:<cmd>")
      ->capture_default_str();
  cmd.add_option("--method", raw.method, "single | naive:<n> | lsd | multirange:<g1>,...")->capture_default_str();
  cmd.add_option("--data", raw.data, "synth:<n_scenes>,<n_points> | kitti:<root>[@train|val|test]")
      ->capture_default_str();
  cmd.add_option("--nfe", cfg.nfe, "Denoiser calls per LSD run")->capture_default_str();
  cmd.add_option("--steps", cfg.total_steps, "Total diffusion steps T")->capture_default_str();
  cmd.add_option("--schedule-offset", cfg.schedule_offset, "Cosine schedule offset s")->capture_default_str();
  cmd.add_option("--sampler", raw.sampler, "deterministic | ancestral")->capture_default_str();
  cmd.add_option("--rot-range", raw.rot_range_deg, "Perturbation half-range per axis, degrees")->capture_default_str();
  cmd.add_option("--trans-range", raw.trans_range_cm, "Perturbation half-range per axis, cm")->capture_default_str();
  cmd.add_option("--seed", raw.seed, std::string("Base seed (default from $") + kSeedEnv + ", else 0)");
  cmd.add_option("--stage-cmd", cfg.stage_commands, "External command per multirange stage (repeatable)");
  cmd.add_flag("--fold-p2-offset", cfg.fold_p2_offset, "Fold the P2 baseline offset into the KITTI extrinsic");
  cmd.add_option("--max-samples", cfg.max_samples, "Stop after this many samples (0 = all)");
  cmd.add_option("--timeout-ms", raw.timeout_ms, "External denoiser reply timeout")->capture_default_str();
}

SamplerMode parse_sampler(const std::string& s) {
  if (s == "deterministic") return SamplerMode::deterministic;
  if (s == "ancestral" || s == "ancestral_stochastic") return SamplerMode::ancestral_stochastic;
  throw InvalidArgument("unknown sampler '" + s + "' (deterministic, ancestral)");
}

void finalize(const CLI::App& cmd, const RawOptions& raw, RunConfig& cfg) {
  cfg.denoiser = parse_denoiser_spec(raw.denoiser);
  cfg.method = parse_method_spec(raw.method);
  cfg.data = parse_data_source(raw.data);
  cfg.sampler = parse_sampler(raw.sampler);
  cfg.format = parse_report_format(raw.format);
  cfg.perturbation.rot_range_deg = raw.rot_range_deg;
  cfg.perturbation.trans_range_m = raw.trans_range_cm / 100.0;
  cfg.reply_timeout = std::chrono::milliseconds(raw.timeout_ms);
  cfg.seed = raw.seed;
  if (cmd.count("--seed") == 0) {
    if (const char* env = std::getenv(kSeedEnv)) {
      try {
        cfg.seed = std::stoull(env);
      } catch (const std::exception&) {
        throw InvalidArgument(std::string("$") + kSeedEnv + " is not an unsigned integer");
      }
    }
  }
  cfg.validate();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << text;
  if (!os) throw IoError("failed writing " + path);
}

std::string matrix_text(const SE3Transform& t) {
  std::string out;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out += (c ? " " : "") + format_double(t.matrix()(r, c));
    out += '\n';
  }
  return out;
}

std::string trace_csv(const RefinementTrace& trace, const SE3Transform& t_gt) {
  std::string out = "step,t,t_next";
  for (const char* name : {"x_t", "x0_hat", "x_next"})
    for (const char* c : {"w1", "w2", "w3", "v1", "v2", "v3"}) out += std::string(",") + name + "_" + c;
  out += ",est_rot_rmse_deg,est_trans_rmse_cm\n";
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    out += std::to_string(i) + "," + std::to_string(s.t) + "," + std::to_string(s.t_next);
    for (const Twist6* x : {&s.x_t, &s.x0_hat, &s.x_next})
      for (int k = 0; k < 6; ++k) out += "," + format_double((*x)[k]);
    const SampleError e = sample_error(transform_error(s.estimate, t_gt));
    out += "," + format_double(e.rot_rmse) + "," + format_double(e.trans_rmse) + "\n";
  }
  return out;
}

int cmd_benchmark(const RunConfig& cfg, const std::string& per_sample_path) {
  const BenchmarkReport rep = run_benchmark(cfg);
  if (!rep.metrics) throw DatasetError("every sample failed; first error: " + rep.samples.front().error);
  write_output(cfg.out_path, render_benchmark(rep, cfg.format));
  if (!per_sample_path.empty()) write_output(per_sample_path, per_sample_csv(rep));
  if (rep.n_failed > 0) std::cerr << "lsdcalib: warning: " << rep.n_failed << " sample(s) failed\n";
  return 0;
}

int cmd_calibrate(const RunConfig& cfg, std::size_t sample_index, const std::string& trace_path) {
  RunConfig one = cfg;
  SampleSource source(one);
  std::optional<std::pair<std::size_t, kitti::CalibSample>> item;
  for (std::size_t i = 0; i <= sample_index; ++i) {
    item = source.next();
    if (!item) throw InvalidArgument("sample index " + std::to_string(sample_index) + " is out of range");
  }
  const auto& [index, sample] = *item;
  const RefinementOutcome o = refine_sample(cfg, sample, index);
  const SampleError init = sample_error(transform_error(sample.t0, sample.t_gt));
  const SampleError fin = sample_error(transform_error(o.estimate, sample.t_gt));

  std::string out = "sample: " + sample.sample_id + "\n";
  out += "method: " + cfg.method.describe() + "  denoiser: " + cfg.denoiser.describe() + "\n";
  out += "initial:\n" + matrix_text(sample.t0);
  out += "estimate:\n" + matrix_text(o.estimate);
  out += "ground_truth:\n" + matrix_text(sample.t_gt);
  out += "initial_error: rot_rmse_deg=" + format_double(init.rot_rmse) +
         " trans_rmse_cm=" + format_double(init.trans_rmse) + "\n";
  out += "final_error: rot_rmse_deg=" + format_double(fin.rot_rmse) + " trans_rmse_cm=" + format_double(fin.trans_rmse) +
         "\n";
  out += "denoise_calls: " + std::to_string(o.denoise_calls) + "  prepares: " + std::to_string(o.prepare_count) + "\n";
  if (o.trace) {
    const std::string csv = trace_csv(*o.trace, sample.t_gt);
    if (trace_path.empty()) {
      out += "trace:\n" + csv;
    } else {
      write_output(trace_path, csv);
    }
  }
  for (const auto& st : o.stages) {
    const SampleError e = sample_error(transform_error(st.estimate, sample.t_gt));
    out += st.label + ": rot_rmse_deg=" + format_double(e.rot_rmse) + " trans_rmse_cm=" + format_double(e.trans_rmse) +
           "\n";
  }
  write_output(cfg.out_path, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative camera-LiDAR extrinsic refinement with linear surrogate diffusion"};
  app.require_subcommand(1);

  RawOptions bench_raw;
  RunConfig bench_cfg;
  std::string per_sample_path;
  auto* bench = app.add_subcommand("benchmark", "Refine every sample and write an aggregate error report");
  add_run_options(*bench, bench_raw, bench_cfg);
  bench->add_option("--jobs", bench_cfg.jobs, "Worker threads")->capture_default_str();
  bench->add_option("--format", bench_raw.format, "json | csv | markdown")->capture_default_str();
  bench->add_option("--out", bench_cfg.out_path, "Report path (default stdout)");
  bench->add_option("--per-sample", per_sample_path, "Optional per-sample CSV path");

  RawOptions cal_raw;
  RunConfig cal_cfg;
  std::size_t sample_index = 0;
  std::string trace_path;
  auto* cal = app.add_subcommand("calibrate", "Refine one sample and print the result and its trace");
  add_run_options(*cal, cal_raw, cal_cfg);
  cal->add_option("--sample-index", sample_index, "Which sample of the data source")->capture_default_str();
  cal->add_option("--trace", trace_path, "Write the per-step trace CSV here instead of stdout");
  cal->add_option("--out", cal_cfg.out_path, "Output path (default stdout)");

  int steps = kDefaultTotalSteps;
  double offset = kDefaultCosineOffset;
  std::string sched_out;
  auto* sched = app.add_subcommand("schedule", "Dump the cosine noise schedule as CSV (t, alpha_bar, alpha, beta)");
  sched->add_option("--steps,-T", steps, "Total diffusion steps T")->capture_default_str();
  sched->add_option("--offset,-s", offset, "Cosine offset s")->capture_default_str();
  sched->add_option("--out", sched_out, "Output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "lsdcalib: error: usage: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*bench) {
      finalize(*bench, bench_raw, bench_cfg);
      return cmd_benchmark(bench_cfg, per_sample_path);
    }
    if (*cal) {
      finalize(*cal, cal_raw, cal_cfg);
      return cmd_calibrate(cal_cfg, sample_index, trace_path);
    }
    if (*sched) {
      write_output(sched_out, schedule_csv(build_cosine_schedule(steps, offset)));
      return 0;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "lsdcalib: error: " << e.kind() << ": " << e.what() << "\n";
    std::cerr << "Run with --help for usage.\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "lsdcalib: error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "lsdcalib: error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
