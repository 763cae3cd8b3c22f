#pragma once

// Denoiser backed by a child process speaking newline-delimited JSON over its
// stdin/stdout (POSIX only).
//
//   -> {"op":"hello","version":1}            <- {"op":"hello_ok","version":1}
//   -> {"op":"begin","sample_id":...,"cloud_path":...,"intrinsics":[9],
//       "image_ref":str|null,"t0":[16]}      <- {"op":"begin_ok"}
//   -> {"op":"denoise","t_noisy":[16]}       <- {"op":"delta_xi","value":[6]}
//   -> {"op":"end"}                          <- {"op":"end_ok"}
//
// Matrices are row-major, the correction twist is (omega, v) in radians and
// meters. Any other reply is a protocol violation and leaves the backend
// unusable.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsdcalib/denoiser.hpp"
#include "lsdcalib/errors.hpp"

namespace lsdcalib {

inline constexpr int kProtocolVersion = 1;

struct ExternalOptions {
  std::chrono::milliseconds reply_timeout{30000};
};

class ExternalDenoiser : public Denoiser {
 public:
  /// argv[0] is resolved through PATH.
  explicit ExternalDenoiser(std::vector<std::string> argv, ExternalOptions options = {})
      : argv_(std::move(argv)), options_(options) {
    if (argv_.empty() || argv_.front().empty()) throw SpawnError("external denoiser needs a command");
    spawn();
    const auto reply = request({{"op", "hello"}, {"version", kProtocolVersion}}, "hello_ok", {"op", "version"});
    if (!reply.at("version").is_number_integer() || reply.at("version").get<int>() != kProtocolVersion) {
      poison();
      throw ProtocolError("external denoiser speaks protocol version " + reply.at("version").dump());
    }
  }

  ExternalDenoiser(const ExternalDenoiser&) = delete;
  ExternalDenoiser& operator=(const ExternalDenoiser&) = delete;

  ~ExternalDenoiser() override { shutdown(); }

  std::string name() const override { return "external:" + argv_.front(); }

  std::unique_ptr<PreparedState> prepare(const Condition& condition, const SE3Transform& t0) override {
    nlohmann::ordered_json msg;
    msg["op"] = "begin";
    msg["sample_id"] = condition.sample_id;
    msg["cloud_path"] = condition.cloud_path;
    const Matrix3 k = condition.intrinsics().matrix();
    std::vector<double> kv;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) kv.push_back(k(r, c));
    msg["intrinsics"] = kv;
    if (condition.image_ref()) {
      msg["image_ref"] = *condition.image_ref();
    } else {
      msg["image_ref"] = nullptr;
    }
    msg["t0"] = t0.to_row_major();
    request(msg, "begin_ok", {"op"});
    return std::make_unique<State>();
  }

  Twist6 denoise(PreparedState& state, const SE3Transform& t_noisy) override {
    auto& s = dynamic_cast<State&>(state);
    if (s.ended) throw ProtocolError("denoise after end");
    nlohmann::ordered_json msg;
    msg["op"] = "denoise";
    msg["t_noisy"] = t_noisy.to_row_major();
    const auto reply = request(msg, "delta_xi", {"op", "value"});
    const auto& value = reply.at("value");
    if (!value.is_array() || value.size() != 6) {
      poison();
      throw ProtocolError("delta_xi.value must be an array of 6 numbers");
    }
    Vector6 v;
    for (int i = 0; i < 6; ++i) {
      if (!value[i].is_number()) {
        poison();
        throw ProtocolError("delta_xi.value must be an array of 6 numbers");
      }
      v[i] = value[i].get<double>();
    }
    if (!v.allFinite()) {
      poison();
      throw ProtocolError("delta_xi.value has non-finite entries");
    }
    return Twist6(v);
  }

  void finish(PreparedState& state) noexcept override {
    auto& s = static_cast<State&>(state);
    if (s.ended || poisoned_) return;
    s.ended = true;
    try {
      request({{"op", "end"}}, "end_ok", {"op"});
    } catch (...) {
      // Already poisoned by request(); the next call reports the violation.
    }
  }

  bool usable() const { return !poisoned_; }
  pid_t pid() const { return pid_; }

  /// Closes the channel and reaps the child, killing it after a grace period.
  /// Returns the child's exit status as reported by waitpid, or -1.
  int shutdown() noexcept {
    if (pid_ <= 0) return -1;
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_WR);
    }
    int status = -1;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
    while (true) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_) break;
      if (r < 0) {
        status = -1;
        break;
      }
      if (std::chrono::steady_clock::now() > deadline) {
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    pid_ = -1;
    poisoned_ = true;
    return status;
  }

 private:
  struct State final : PreparedState {
    bool ended = false;
  };

  void spawn() {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, sv) != 0) {
      throw SpawnError(std::string("socketpair: ") + std::strerror(errno));
    }
    // Reports exec failure from the child; closed on successful exec.
    int err_pipe[2];
    if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw SpawnError(std::string("pipe: ") + std::strerror(errno));
    }

    std::vector<char*> cargv;
    for (auto& a : argv_) cargv.push_back(a.data());
    cargv.push_back(nullptr);

    const pid_t pid = ::fork();
    if (pid < 0) {
      for (int fd : {sv[0], sv[1], err_pipe[0], err_pipe[1]}) ::close(fd);
      throw SpawnError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      ::execvp(cargv[0], cargv.data());
      const int e = errno;
      [[maybe_unused]] auto n = ::write(err_pipe[1], &e, sizeof(e));
      ::_exit(127);
    }
    ::close(sv[1]);
    ::close(err_pipe[1]);
    int child_errno = 0;
    ssize_t n;
    do {
      n = ::read(err_pipe[0], &child_errno, sizeof(child_errno));
    } while (n < 0 && errno == EINTR);
    ::close(err_pipe[0]);
    if (n == sizeof(child_errno)) {
      ::close(sv[0]);
      ::waitpid(pid, nullptr, 0);
      throw SpawnError("cannot execute '" + argv_.front() + "': " + std::strerror(child_errno));
    }
    pid_ = pid;
    fd_ = sv[0];
  }

  void poison() noexcept { poisoned_ = true; }

  void send_line(const std::string& line) {
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        poison();
        throw ProtocolError(std::string("write to external denoiser failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    const auto deadline = std::chrono::steady_clock::now() + options_.reply_timeout;
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0) {
        poison();
        throw TimeoutError("external denoiser did not reply within " +
                           std::to_string(options_.reply_timeout.count()) + " ms");
      }
      pollfd pfd{fd_, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (pr < 0) {
        if (errno == EINTR) continue;
        poison();
        throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
      }
      if (pr == 0) continue;
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        poison();
        throw ProtocolError(std::string("read from external denoiser failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        poison();
        throw ProtocolError("external denoiser closed its output");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  nlohmann::json request(const nlohmann::ordered_json& msg, const std::string& expected_op,
                         std::initializer_list<const char*> keys) {
    if (poisoned_) throw ProtocolError("external denoiser is unusable after an earlier failure");
    send_line(msg.dump() + "\n");
    const std::string line = read_line();
    nlohmann::json reply = nlohmann::json::parse(line, nullptr, false);
    if (reply.is_discarded() || !reply.is_object()) {
      poison();
      throw ProtocolError("malformed reply (expected JSON object): " + line.substr(0, 200));
    }
    const auto op = reply.find("op");
    if (op == reply.end() || !op->is_string() || op->get<std::string>() != expected_op) {
      poison();
      throw ProtocolError("expected op '" + expected_op + "', got: " + line.substr(0, 200));
    }
    if (reply.size() != keys.size()) {
      poison();
      throw ProtocolError("reply '" + expected_op + "' has unexpected fields: " + line.substr(0, 200));
    }
    for (const char* k : keys) {
      if (!reply.contains(k)) {
        poison();
        throw ProtocolError("reply '" + expected_op + "' is missing '" + k + "'");
      }
    }
    return reply;
  }

  std::vector<std::string> argv_;
  ExternalOptions options_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buffer_;
  bool poisoned_ = false;
};

inline std::unique_ptr<ExternalDenoiser> external_denoiser(std::vector<std::string> argv,
                                                           ExternalOptions options = {}) {
  return std::make_unique<ExternalDenoiser>(std::move(argv), options);
}

}  // namespace lsdcalib
