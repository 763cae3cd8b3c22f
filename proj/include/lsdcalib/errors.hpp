#pragma once

#include <stdexcept>
#include <string>

namespace lsdcalib {

// Error hierarchy. Every error carries a short machine-readable kind so the
// CLI can print a stable "lsdcalib: error: <kind>: <message>" line.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what) : Error("invalid-argument", what) {}
};

// Rotation too close to pi for a unique logarithm.
class CutLocusError : public Error {
 public:
  explicit CutLocusError(const std::string& what) : Error("cut-locus", what) {}
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("parse", what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error("format", what) {}
};

class DatasetError : public Error {
 public:
  explicit DatasetError(const std::string& what) : Error("dataset", what) {}
};

class SessionOpenError : public Error {
 public:
  explicit SessionOpenError(const std::string& what) : Error("session-open", what) {}
};

class SpawnError : public Error {
 public:
  explicit SpawnError(const std::string& what) : Error("spawn", what) {}
};

class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what) : Error("protocol", what) {}
};

class TimeoutError : public Error {
 public:
  explicit TimeoutError(const std::string& what) : Error("timeout", what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("io", what) {}
};

// Wraps a failure inside a refinement loop with the step / stage it came from.
class StepError : public Error {
 public:
  StepError(const std::string& context, const Error& cause)
      : Error(cause.kind(), context + ": " + cause.what()), context_(context) {}

  const std::string& context() const noexcept { return context_; }

 private:
  std::string context_;
};

}  // namespace lsdcalib
